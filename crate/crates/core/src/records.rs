//! Coded financial records: ingestion, diabetic-cohort selection, complication
//! labelling and extraction of fixed-policy input windows.
//!
//! Dates are day numbers (days since 1970-01-01). Windows are half-open:
//! a sample with index date `D` sees records dated in `[D - 365, D)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub type Day = i32;

pub const WINDOW_DAYS: Day = 365;
pub const MIN_WINDOW_RECORDS: usize = 40;
pub const MAX_WINDOW_RECORDS: usize = 500;
pub const GAPS: [u32; 4] = [60, 120, 180, 240];

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Parses an ISO-8601 `YYYY-MM-DD` date into a day number.
pub fn parse_day(s: &str) -> Option<Day> {
    let date = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()?;
    i32::try_from((date - epoch()).num_days()).ok()
}

pub fn format_day(day: Day) -> String {
    (epoch() + chrono::Duration::days(i64::from(day)))
        .format("%Y-%m-%d")
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedRecord {
    pub individual_id: String,
    pub service_date: Day,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub individual_id: String,
    pub records: Vec<CodedRecord>,
}

impl Timeline {
    /// Builds a timeline, stable-sorting records by date.
    pub fn new(individual_id: impl Into<String>, mut records: Vec<CodedRecord>) -> Self {
        records.sort_by_key(|r| r.service_date);
        Timeline {
            individual_id: individual_id.into(),
            records,
        }
    }

    /// Convenience constructor from `(day, code)` pairs.
    pub fn from_pairs<S: AsRef<str>>(individual_id: &str, pairs: &[(Day, S)]) -> Self {
        let records = pairs
            .iter()
            .map(|(d, c)| CodedRecord {
                individual_id: individual_id.to_string(),
                service_date: *d,
                code: c.as_ref().to_string(),
            })
            .collect();
        Timeline::new(individual_id, records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplicationClass {
    AmputationDebridement,
    RevascularizationAngioplasty,
    Hemodialysis,
}

impl ComplicationClass {
    /// Fixed order, also used to break same-day ties.
    pub const ALL: [ComplicationClass; 3] = [
        ComplicationClass::AmputationDebridement,
        ComplicationClass::RevascularizationAngioplasty,
        ComplicationClass::Hemodialysis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComplicationClass::AmputationDebridement => "amputation_debridement",
            ComplicationClass::RevascularizationAngioplasty => "revascularization_angioplasty",
            ComplicationClass::Hemodialysis => "hemodialysis",
        }
    }
}

impl fmt::Display for ComplicationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComplicationClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ComplicationClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::CodeSets(format!("unknown complication class {s:?}")))
    }
}

/// Code families: the diagnostic marker (glycated hemoglobin) and the three
/// complication classes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeSets {
    pub hba1c_codes: BTreeSet<String>,
    pub complication_classes: BTreeMap<ComplicationClass, BTreeSet<String>>,
    /// Informational only (written by the synthetic generator); never used
    /// for cohort selection or labelling.
    pub risk_markers: BTreeSet<String>,
}

impl CodeSets {
    pub fn new(
        hba1c: impl IntoIterator<Item = impl Into<String>>,
        complications: impl IntoIterator<Item = (ComplicationClass, Vec<String>)>,
    ) -> Result<Self> {
        let mut sets = CodeSets {
            hba1c_codes: hba1c.into_iter().map(Into::into).collect(),
            ..Default::default()
        };
        for (class, codes) in complications {
            sets.complication_classes.entry(class).or_default().extend(codes);
        }
        sets.validate()?;
        Ok(sets)
    }

    /// Parses the `key=value` code-set file. Values are comma-separated code
    /// tokens; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sets = CodeSets::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::CodeSets(format!("line {}: expected key=value", lineno + 1)))?;
            let codes = value
                .split(',')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from);
            match key.trim() {
                "hba1c" => sets.hba1c_codes.extend(codes),
                "risk_markers" => sets.risk_markers.extend(codes),
                other => {
                    let class = other
                        .parse::<ComplicationClass>()
                        .map_err(|_| Error::CodeSets(format!("line {}: unknown key {other:?}", lineno + 1)))?;
                    sets.complication_classes.entry(class).or_default().extend(codes);
                }
            }
        }
        sets.validate()?;
        Ok(sets)
    }

    pub fn to_file_string(&self) -> String {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        let mut out = format!("hba1c={}\n", join(&self.hba1c_codes));
        for class in ComplicationClass::ALL {
            let empty = BTreeSet::new();
            let codes = self.complication_classes.get(&class).unwrap_or(&empty);
            out.push_str(&format!("{}={}\n", class.name(), join(codes)));
        }
        if !self.risk_markers.is_empty() {
            out.push_str(&format!("risk_markers={}\n", join(&self.risk_markers)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.hba1c_codes.is_empty() {
            return Err(Error::CodeSets("hba1c set is empty".into()));
        }
        for class in ComplicationClass::ALL {
            match self.complication_classes.get(&class) {
                Some(s) if !s.is_empty() => {}
                _ => return Err(Error::CodeSets(format!("{class} set is empty"))),
            }
        }
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let families = std::iter::once(("hba1c", &self.hba1c_codes))
            .chain(self.complication_classes.iter().map(|(c, s)| (c.name(), s)));
        for (family, codes) in families {
            for code in codes {
                if let Some(prev) = seen.insert(code.as_str(), family) {
                    return Err(Error::CodeSets(format!(
                        "code {code:?} appears in both {prev} and {family}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_hba1c(&self, code: &str) -> bool {
        self.hba1c_codes.contains(code)
    }

    pub fn class_of(&self, code: &str) -> Option<ComplicationClass> {
        self.complication_classes
            .iter()
            .find(|(_, codes)| codes.contains(code))
            .map(|(class, _)| *class)
    }
}

/// A labelled input window for one individual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSample {
    pub individual_id: String,
    pub codes: Vec<String>,
    pub record_dates: Vec<Day>,
    pub index_date: Day,
    pub gap_days: u32,
    pub label: u8,
    pub complication_class: Option<ComplicationClass>,
}

impl CohortSample {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    /// Checks the structural invariants of an emitted sample.
    pub fn check(&self) -> Result<()> {
        let n = self.codes.len();
        if !(MIN_WINDOW_RECORDS..=MAX_WINDOW_RECORDS).contains(&n) {
            return Err(Error::Malformed(format!("window length {n}")));
        }
        if self.record_dates.len() != n {
            return Err(Error::Malformed("dates not aligned to codes".into()));
        }
        if self.record_dates.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Malformed("dates not ascending".into()));
        }
        let lo = self.index_date - WINDOW_DAYS;
        if self.record_dates.iter().any(|&d| d < lo || d >= self.index_date) {
            return Err(Error::Malformed("date outside window".into()));
        }
        if (self.label == 1) != self.complication_class.is_some() {
            return Err(Error::Malformed("class present iff label = 1".into()));
        }
        Ok(())
    }
}

/// Column names of the record CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFormat {
    pub id_column: String,
    pub date_column: String,
    pub code_column: String,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat {
            id_column: "individual_id".into(),
            date_column: "service_date".into(),
            code_column: "code".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// One timeline per individual, ordered by individual id.
    pub timelines: Vec<Timeline>,
    pub records: usize,
    pub rejected_lines: usize,
}

/// Reads the record CSV. Malformed lines are skipped and counted; a missing
/// header column or a stream with no valid lines is an error.
pub fn ingest_records<R: BufRead>(reader: R, format: &CsvFormat) -> Result<Ingested> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::NoRecords { rejected: 0 }),
    };
    let columns: Vec<&str> = header
        .trim_start_matches('\u{feff}')
        .split(',')
        .map(str::trim)
        .collect();
    let position = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Malformed(format!("header lacks column {name:?}")))
    };
    let (id_col, date_col, code_col) = (
        position(&format.id_column)?,
        position(&format.date_column)?,
        position(&format.code_column)?,
    );

    let mut by_id: BTreeMap<String, Vec<CodedRecord>> = BTreeMap::new();
    let mut rejected = 0usize;
    let mut records = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let field = |i: usize| fields.get(i).copied().filter(|f| !f.is_empty());
        let parsed = match (field(id_col), field(date_col), field(code_col)) {
            (Some(id), Some(date), Some(code)) => parse_day(date).map(|d| (id, d, code)),
            _ => None,
        };
        match parsed {
            Some((id, day, code)) => {
                by_id.entry(id.to_string()).or_default().push(CodedRecord {
                    individual_id: id.to_string(),
                    service_date: day,
                    code: code.to_string(),
                });
                records += 1;
            }
            None => rejected += 1,
        }
    }
    if records == 0 {
        return Err(Error::NoRecords { rejected });
    }
    let timelines = by_id.into_iter().map(|(id, recs)| Timeline::new(id, recs)).collect();
    Ok(Ingested {
        timelines,
        records,
        rejected_lines: rejected,
    })
}

/// Writes timelines back out in the record CSV format.
pub fn write_records<W: Write>(mut out: W, timelines: &[Timeline]) -> std::io::Result<()> {
    writeln!(out, "individual_id,service_date,code")?;
    for t in timelines {
        for r in &t.records {
            writeln!(out, "{},{},{}", r.individual_id, format_day(r.service_date), r.code)?;
        }
    }
    Ok(())
}

/// Individuals with at least two hba1c records less than 365 days apart.
pub fn find_diabetics(timelines: &[Timeline], code_sets: &CodeSets) -> BTreeSet<String> {
    timelines
        .iter()
        .filter(|t| is_diabetic(t, code_sets))
        .map(|t| t.individual_id.clone())
        .collect()
}

fn is_diabetic(timeline: &Timeline, code_sets: &CodeSets) -> bool {
    let mut days: Vec<Day> = timeline
        .records
        .iter()
        .filter(|r| code_sets.is_hba1c(&r.code))
        .map(|r| r.service_date)
        .collect();
    days.sort_unstable();
    // the closest pair in a sorted list is always adjacent
    days.windows(2).any(|w| w[1] - w[0] < WINDOW_DAYS)
}

/// Earliest complication record, same-day ties resolved by class order.
pub fn first_complication(timeline: &Timeline, code_sets: &CodeSets) -> Option<(Day, ComplicationClass)> {
    timeline
        .records
        .iter()
        .filter_map(|r| code_sets.class_of(&r.code).map(|c| (r.service_date, c)))
        .min()
}

/// Records dated in `[index_date - 365, index_date)`, capped to the latest
/// 500. `None` below 40 records.
fn window(timeline: &Timeline, code_sets: &CodeSets, index_date: Day) -> Option<(Vec<String>, Vec<Day>)> {
    let lo = index_date - WINDOW_DAYS;
    let selected: Vec<&CodedRecord> = timeline
        .records
        .iter()
        .filter(|r| r.service_date >= lo && r.service_date < index_date)
        .filter(|r| code_sets.class_of(&r.code).is_none())
        .collect();
    if selected.len() < MIN_WINDOW_RECORDS {
        return None;
    }
    let start = selected.len().saturating_sub(MAX_WINDOW_RECORDS);
    let kept = &selected[start..];
    Some((
        kept.iter().map(|r| r.code.clone()).collect(),
        kept.iter().map(|r| r.service_date).collect(),
    ))
}

pub fn extract_positive_window(
    timeline: &Timeline,
    code_sets: &CodeSets,
    complication: (Day, ComplicationClass),
    gap_days: u32,
) -> Option<CohortSample> {
    let (day, class) = complication;
    let index_date = day - gap_days as Day;
    let (codes, record_dates) = window(timeline, code_sets, index_date)?;
    Some(CohortSample {
        individual_id: timeline.individual_id.clone(),
        codes,
        record_dates,
        index_date,
        gap_days,
        label: 1,
        complication_class: Some(class),
    })
}

/// Index dates `D` whose trailing window holds at least 40 records and for
/// which `D + gap_days` does not pass the last observed record.
pub fn eligible_negative_index_dates(timeline: &Timeline, gap_days: u32) -> Vec<Day> {
    let (Some(first), Some(last)) = (timeline.records.first(), timeline.records.last()) else {
        return Vec::new();
    };
    if timeline.len() < MIN_WINDOW_RECORDS {
        return Vec::new();
    }
    let dates: Vec<Day> = timeline.records.iter().map(|r| r.service_date).collect();
    let last_index = last.service_date - gap_days as Day;
    let mut eligible = Vec::new();
    // two pointers over [D - 365, D)
    let (mut lo, mut hi) = (0usize, 0usize);
    for d in (first.service_date + 1)..=last_index {
        while hi < dates.len() && dates[hi] < d {
            hi += 1;
        }
        while lo < hi && dates[lo] < d - WINDOW_DAYS {
            lo += 1;
        }
        if hi - lo >= MIN_WINDOW_RECORDS {
            eligible.push(d);
        }
    }
    eligible
}

/// Uniformly picks an eligible index date for an individual with no
/// complication record.
pub fn extract_negative_window(
    timeline: &Timeline,
    code_sets: &CodeSets,
    gap_days: u32,
    rng: &mut Rng,
) -> Option<CohortSample> {
    let eligible = eligible_negative_index_dates(timeline, gap_days);
    if eligible.is_empty() {
        return None;
    }
    let index_date = eligible[rng.random_range(0..eligible.len())];
    let (codes, record_dates) = window(timeline, code_sets, index_date)?;
    Some(CohortSample {
        individual_id: timeline.individual_id.clone(),
        codes,
        record_dates,
        index_date,
        gap_days,
        label: 0,
        complication_class: None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub gap_days: u32,
    pub individuals: usize,
    pub diabetics: usize,
    pub positives: usize,
    pub negatives: usize,
    pub positives_by_class: BTreeMap<ComplicationClass, usize>,
    pub excluded_non_diabetic: usize,
    pub excluded_positive_short_window: usize,
    pub excluded_negative_no_window: usize,
}

/// Builds the labelled cohort for one prediction gap: at most one sample per
/// diabetic individual.
pub fn build_cohort(
    timelines: &[Timeline],
    code_sets: &CodeSets,
    gap_days: u32,
    rng: &mut Rng,
) -> Result<(Vec<CohortSample>, CohortSummary)> {
    if !GAPS.contains(&gap_days) {
        return Err(Error::Config(format!("gap {gap_days} not one of {GAPS:?}")));
    }
    code_sets.validate()?;
    let diabetics = find_diabetics(timelines, code_sets);
    let mut summary = CohortSummary {
        gap_days,
        individuals: timelines.len(),
        diabetics: diabetics.len(),
        ..Default::default()
    };
    let mut samples = Vec::new();
    for timeline in timelines {
        if !diabetics.contains(&timeline.individual_id) {
            summary.excluded_non_diabetic += 1;
            continue;
        }
        match first_complication(timeline, code_sets) {
            Some(first) => match extract_positive_window(timeline, code_sets, first, gap_days) {
                Some(s) => {
                    summary.positives += 1;
                    *summary.positives_by_class.entry(first.1).or_default() += 1;
                    samples.push(s);
                }
                None => summary.excluded_positive_short_window += 1,
            },
            None => match extract_negative_window(timeline, code_sets, gap_days, rng) {
                Some(s) => {
                    summary.negatives += 1;
                    samples.push(s);
                }
                None => summary.excluded_negative_no_window += 1,
            },
        }
    }
    if summary.positives == 0 {
        return Err(Error::NoPositives { gap_days });
    }
    Ok((samples, summary))
}

pub fn write_cohort_jsonl<W: Write>(mut out: W, samples: &[CohortSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_cohort_jsonl<R: BufRead>(reader: R) -> Result<Vec<CohortSample>> {
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sets() -> CodeSets {
        CodeSets::parse("hba1c=H\namputation_debridement=AMP\nrevascularization_angioplasty=REV\nhemodialysis=HD\n")
            .unwrap()
    }

    fn ingest(text: &str) -> Result<Ingested> {
        ingest_records(text.as_bytes(), &CsvFormat::default())
    }

    #[test]
    fn ingest_groups_and_counts() {
        let got =
            ingest("individual_id,service_date,code\nA,2020-01-01,1\nA,2020-01-02,2\nA,2020-01-03,3\nB,2020-01-01,1\n")
                .unwrap();
        let lens: Vec<usize> = got.timelines.iter().map(Timeline::len).collect();
        assert_eq!(lens, vec![3, 1]);
        assert_eq!(got.records, 4);
    }

    #[test]
    fn ingest_sorts_dates() {
        let got = ingest("individual_id,service_date,code\nA,2020-03-01,x\nA,2020-01-01,y\n").unwrap();
        let codes: Vec<&str> = got.timelines[0].codes().collect();
        assert_eq!(codes, vec!["y", "x"]);
    }

    #[test]
    fn ingest_counts_rejected_lines() {
        let got = ingest("individual_id,service_date,code\nA,2020-01-01,1\nB,2020-01-01\n").unwrap();
        assert_eq!(got.timelines.len(), 1);
        assert_eq!(got.rejected_lines, 1);
    }

    #[test]
    fn ingest_rejects_bad_dates_and_extra_columns_are_ignored() {
        let got =
            ingest("code,individual_id,price,service_date\n10101012,A,3.5,2021-02-30\n10101039,A,1.0,2021-02-03\n")
                .unwrap();
        assert_eq!(got.rejected_lines, 1);
        assert_eq!(got.timelines[0].records[0].code, "10101039");
    }

    #[test]
    fn ingest_empty_is_error() {
        assert!(matches!(
            ingest("individual_id,service_date,code\n"),
            Err(Error::NoRecords { rejected: 0 })
        ));
        assert!(ingest("").is_err());
        assert!(matches!(ingest("individual_id,code\nA,1\n"), Err(Error::Malformed(_))));
    }

    #[test]
    fn identical_records_are_preserved() {
        let got = ingest("individual_id,service_date,code\nA,2020-01-01,1\nA,2020-01-01,1\n").unwrap();
        assert_eq!(got.timelines[0].len(), 2);
    }

    #[test]
    fn day_numbers_roundtrip() {
        assert_eq!(parse_day("1970-01-01"), Some(0));
        assert_eq!(parse_day("1970-01-02"), Some(1));
        assert_eq!(format_day(18262), "2020-01-01");
        assert_eq!(parse_day(&format_day(-400)), Some(-400));
    }

    #[test]
    fn diabetic_filter_rules() {
        let s = sets();
        let a = Timeline::from_pairs("a", &[(100, "H"), (400, "H")]);
        let b = Timeline::from_pairs("b", &[(0, "H"), (365, "H")]);
        let mut c_pairs: Vec<(Day, &str)> = (0..50).map(|d| (d, "X")).collect();
        c_pairs.push((10, "H"));
        let c = Timeline::from_pairs("c", &c_pairs);
        let got = find_diabetics(&[a, b, c], &s);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["a".to_string()]);
    }

    #[test]
    fn first_complication_cases() {
        let s = sets();
        let t = Timeline::from_pairs("a", &[(300, "AMP"), (200, "HD"), (10, "X")]);
        assert_eq!(first_complication(&t, &s), Some((200, ComplicationClass::Hemodialysis)));
        let t = Timeline::from_pairs("a", &[(10, "X")]);
        assert_eq!(first_complication(&t, &s), None);
        let t = Timeline::from_pairs("a", &[(150, "HD"), (150, "AMP")]);
        assert_eq!(
            first_complication(&t, &s),
            Some((150, ComplicationClass::AmputationDebridement))
        );
    }

    /// `n` records spread evenly from `start`, `num/den` days apart.
    fn dense(start: Day, n: usize, num: Day, den: Day) -> Vec<(Day, String)> {
        (0..n)
            .map(|i| (start + (i as Day * num) / den, format!("c{i}")))
            .collect()
    }

    #[test]
    fn positive_window_cap_and_floor() {
        let s = sets();
        // 600 records spread over [c - 60 - 365, c - 60)
        let comp = 2000;
        let index = comp - 60;
        let mut pairs = dense(index - 365, 600, 365, 600);
        pairs.push((comp, "REV".into()));
        let t = Timeline::from_pairs("p", &pairs);
        let first = first_complication(&t, &s).unwrap();
        let sample = extract_positive_window(&t, &s, first, 60).unwrap();
        assert_eq!(sample.codes.len(), 500);
        assert_eq!(sample.codes.first().unwrap(), "c100");
        assert_eq!(sample.label, 1);
        assert_eq!(
            sample.complication_class,
            Some(ComplicationClass::RevascularizationAngioplasty)
        );
        sample.check().unwrap();

        let mut pairs = dense(index - 300, 39, 1, 1);
        pairs.push((comp, "REV".into()));
        let t = Timeline::from_pairs("p", &pairs);
        assert!(extract_positive_window(&t, &s, (comp, ComplicationClass::Hemodialysis), 60).is_none());
    }

    #[test]
    fn window_end_is_exclusive() {
        let s = sets();
        let comp = 1000;
        let index = comp - 120;
        let mut pairs = dense(index - 100, 40, 1, 1);
        pairs.push((index, "ATINDEX".into()));
        pairs.push((index - WINDOW_DAYS - 1, "TOOOLD".into()));
        pairs.push((index - WINDOW_DAYS, "OLDEST".into()));
        pairs.push((comp, "AMP".into()));
        let t = Timeline::from_pairs("p", &pairs);
        let sample = extract_positive_window(&t, &s, first_complication(&t, &s).unwrap(), 120).unwrap();
        assert!(!sample.codes.iter().any(|c| c == "ATINDEX" || c == "TOOOLD"));
        assert_eq!(sample.codes[0], "OLDEST");
        assert_eq!(sample.codes.len(), 41);
    }

    #[test]
    fn negative_window_cases() {
        let s = sets();
        // one dense year of 100 records then activity 300 days later
        let mut pairs = dense(0, 100, 365, 100);
        pairs.push((365 + 300, "LATE".into()));
        let t = Timeline::from_pairs("n", &pairs);
        let sample = extract_negative_window(&t, &s, 240, &mut seeded(1)).unwrap();
        assert_eq!(sample.label, 0);
        assert!(sample.index_date + 240 <= 665);
        sample.check().unwrap();

        let t = Timeline::from_pairs("n", &dense(0, 30, 1, 1));
        assert!(extract_negative_window(&t, &s, 60, &mut seeded(1)).is_none());
    }

    #[test]
    fn negative_window_is_deterministic() {
        let s = sets();
        let t = Timeline::from_pairs("n", &dense(0, 400, 1000, 400));
        let a = extract_negative_window(&t, &s, 60, &mut seeded(9)).unwrap();
        let b = extract_negative_window(&t, &s, 60, &mut seeded(9)).unwrap();
        assert_eq!(a.index_date, b.index_date);
    }

    #[test]
    fn codesets_validation() {
        assert!(CodeSets::parse("hba1c=H\namputation_debridement=A\n").is_err());
        assert!(CodeSets::parse(
            "hba1c=H\namputation_debridement=A\nrevascularization_angioplasty=A\nhemodialysis=D\n"
        )
        .is_err());
        assert!(CodeSets::parse(
            "hba1c=H\namputation_debridement=H\nrevascularization_angioplasty=R\nhemodialysis=D\n"
        )
        .is_err());
        assert!(CodeSets::parse("bogus=1\n").is_err());
        let s = sets();
        assert_eq!(CodeSets::parse(&s.to_file_string()).unwrap(), s);
    }

    #[test]
    fn cohort_restricts_to_diabetics() {
        let s = sets();
        let comp = 1000;
        let mut pairs = dense(comp - 60 - 300, 60, 1, 1);
        pairs.push((comp, "HD".into()));
        let non_diabetic = Timeline::from_pairs("nd", &pairs);
        pairs.push((comp - 500, "H".into()));
        pairs.push((comp - 400, "H".into()));
        let diabetic = Timeline::from_pairs("d", &pairs);
        let (samples, summary) = build_cohort(&[diabetic, non_diabetic], &s, 60, &mut seeded(0)).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].individual_id, "d");
        assert_eq!(summary.excluded_non_diabetic, 1);
        assert!(build_cohort(&[], &s, 60, &mut seeded(0)).is_err());
        assert!(matches!(
            build_cohort(&[], &s, 61, &mut seeded(0)),
            Err(Error::Config(_))
        ));
    }
}
