use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::records::format_day;
use crate::seqmodel::SampleAttention;
use crate::{Error, Result};

/// One exported heatmap column: a record and the attention it received.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub position: usize,
    pub date: String,
    pub code: String,
    pub description: String,
    pub hops: Vec<f64>,
    pub aggregate: f64,
}

/// Aligns an attention map with its records, oldest first. Codes without a
/// description get an empty string.
pub fn attention_rows(sample: &SampleAttention, descriptions: &BTreeMap<String, String>) -> Result<Vec<AttentionRow>> {
    let t = sample.codes.len();
    if sample.dates.len() != t || sample.map.len() != t || sample.map.scores.cols != t {
        return Err(Error::Shape(format!(
            "attention export: {} codes, {} dates, {} attention columns",
            t,
            sample.dates.len(),
            sample.map.len()
        )));
    }
    if sample.dates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Shape("attention export: dates not in ascending order".into()));
    }
    let r = sample.map.hops();
    Ok((0..t)
        .map(|j| AttentionRow {
            position: j + 1,
            date: format_day(sample.dates[j]),
            code: sample.codes[j].clone(),
            description: descriptions.get(&sample.codes[j]).cloned().unwrap_or_default(),
            hops: (0..r).map(|k| sample.map.scores.get(k, j)).collect(),
            aggregate: sample.map.aggregate[j],
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn attention_csv(rows: &[AttentionRow]) -> String {
    let hops = rows.first().map_or(0, |r| r.hops.len());
    let mut out = String::from("position,date,code,description");
    for k in 1..=hops {
        let _ = write!(out, ",hop_{k}");
    }
    out.push_str(",aggregate\n");
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            row.position,
            row.date,
            csv_field(&row.code),
            csv_field(&row.description)
        );
        for v in &row.hops {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", row.aggregate);
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White to dark red, linear in `t ∈ [0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", 255, lerp(255.0, 40.0), lerp(255.0, 40.0))
}

/// Single-row heatmap, one cell per record, latest on the right. Colour is
/// the aggregate score over its maximum.
pub fn attention_svg(rows: &[AttentionRow], title: &str) -> String {
    const CELL: usize = 14;
    const TOP: usize = 28;
    let peak = rows.iter().map(|r| r.aggregate).fold(0.0, f64::max);
    let width = CELL * rows.len().max(1) + 20;
    let height = TOP + CELL + 20;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="18" font-family="sans-serif" font-size="12">{}</text>"#,
        xml_escape(title)
    );
    for (j, row) in rows.iter().enumerate() {
        let shade = if peak > 0.0 { row.aggregate / peak } else { 0.0 };
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{TOP}" width="{CELL}" height="{CELL}" fill="{}"><title>{} {} {}: {:.4}</title></rect>"#,
            10 + j * CELL,
            ramp(shade),
            row.date,
            xml_escape(&row.code),
            xml_escape(&row.description),
            row.aggregate
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::seqmodel::AttentionMap;

    fn sample(scores: Matrix) -> SampleAttention {
        let t = scores.cols;
        let r = scores.rows;
        let aggregate = (0..t)
            .map(|j| (0..r).map(|k| scores.get(k, j)).sum::<f64>() / r as f64)
            .collect();
        SampleAttention {
            individual_id: "P000001".into(),
            codes: (0..t).map(|j| format!("c{j}")).collect(),
            dates: (0..t as i32).map(|j| 17000 + 3 * j).collect(),
            probability: 0.5,
            map: AttentionMap { scores, aggregate },
        }
    }

    #[test]
    fn five_by_two_shape() {
        let s = sample(Matrix::from_fn(2, 5, |k, j| {
            if k == 0 {
                0.2
            } else {
                [0.1, 0.1, 0.1, 0.3, 0.4][j]
            }
        }));
        let mut desc = BTreeMap::new();
        desc.insert("c3".to_string(), "dialysis, session".to_string());
        let rows = attention_rows(&s, &desc).unwrap();
        let csv = attention_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "position,date,code,description,hop_1,hop_2,aggregate");
        assert_eq!(lines.len(), 6);
        assert!(lines[4].contains("\"dialysis, session\""));
        let total: f64 = rows.iter().map(|r| r.aggregate).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(rows.windows(2).all(|w| w[0].date < w[1].date));
    }

    #[test]
    fn uniform_map_gives_one_colour() {
        let s = sample(Matrix::from_fn(3, 7, |_, _| 1.0 / 7.0));
        let svg = attention_svg(&attention_rows(&s, &BTreeMap::new()).unwrap(), "P000001");
        let fills: std::collections::BTreeSet<&str> = svg.split("fill=\"").skip(1).map(|s| &s[..7]).collect();
        assert_eq!(fills.len(), 1);
        assert_eq!(svg.matches("<rect").count(), 7);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut s = sample(Matrix::from_fn(1, 4, |_, _| 0.25));
        s.codes.pop();
        assert!(matches!(attention_rows(&s, &BTreeMap::new()), Err(Error::Shape(_))));
    }
}
