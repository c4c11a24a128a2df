//! Acceptance suite. Runs every criterion in sequence (the end-to-end gate
//! is timed, so nothing runs beside it), prints one PASS/FAIL line per
//! criterion and exits non-zero if any gated criterion fails.
//!
//! `cargo test -p claimrisk --test acceptance`

mod common;

use std::collections::BTreeMap;
use std::io::BufReader;
use std::time::{Duration, Instant};

use claimrisk::codevec::{load_embeddings, PAD};
use claimrisk::config::RunConfig;
use claimrisk::evalkit::{roc_auc, roc_curve, trapezoid_area, Aggregate, Report, ScoredSet};
use claimrisk::matrix::cosine;
use claimrisk::pipeline::{Pipeline, SynthMeta};
use claimrisk::records::{
    build_cohort, find_diabetics, CodeSets, CohortSample, ComplicationClass, Day, Timeline, GAPS,
};
use claimrisk::rng::seeded;
use claimrisk::seqmodel::{backward, forward, Hyper, ModelKind, ModelParams};
use common::max_relative_fd_error;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1 ---------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = (0.0f64, String::new());
    for kind in [ModelKind::Sa, ModelKind::Baseline] {
        for (seed, label, valid) in [(11u64, 1u8, 12usize), (12, 0, 12), (13, 1, 9)] {
            let p = ModelParams::init(kind, Hyper::tiny(), None, &mut seeded(seed)).unwrap();
            let mut rng = seeded(seed + 100);
            let idx: Vec<usize> = (0..12)
                .map(|t| if t < valid { rng.random_range(1..20) } else { PAD })
                .collect();
            let mask: Vec<bool> = (0..12).map(|t| t < valid).collect();
            let out = forward(&p, &idx, &mask).unwrap();
            let g = backward(&p, &out.trace, label, 1.0).unwrap();
            let (err, at) = max_relative_fd_error(&p, &g, &idx, &mask, label, 1e-5, 1e-6);
            if err > worst.0 {
                worst = (err, format!("{kind}: {at}"));
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {:.2e} (< 1e-4) over every parameter of both models, {:.1}s (< 60s); worst {}",
            worst.0,
            elapsed.as_secs_f64(),
            worst.1
        ),
    )
}

// 2 ---------------------------------------------------------------------------

fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == 1 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle_equivalence() -> Outcome {
    let mut rng = seeded(2024);
    let (mut worst_bf, mut worst_trap) = (0.0f64, 0.0f64);
    for set in 0..200 {
        let n = rng.random_range(2..=200usize);
        let tied = set % 2 == 0;
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        labels[0] = 1;
        labels[n - 1] = 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    f64::from(rng.random_range(0..8u32)) / 7.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let s = ScoredSet::from_pairs(scores.clone(), labels.clone()).unwrap();
        let auc = roc_auc(&s).unwrap();
        worst_bf = worst_bf.max((auc - brute_force_auc(&scores, &labels)).abs());
        worst_trap = worst_trap.max((trapezoid_area(&roc_curve(&s).unwrap()) - auc).abs());
    }
    outcome(
        worst_bf <= 1e-12 && worst_trap <= 1e-12,
        format!(
            "200 sets (sizes 2-200, half with ties): |AUC - brute force| <= {worst_bf:.1e}, |ROC trapezoid - AUC| <= {worst_trap:.1e} (tolerance 1e-12)"
        ),
    )
}

// 3 ---------------------------------------------------------------------------

fn attention_stochasticity() -> Outcome {
    let mut rng = seeded(77);
    let (mut worst_row, mut masked_nonzero, mut pad_changes) = (0.0f64, 0usize, 0usize);
    for draw in 0..1000u64 {
        let hyper = Hyper {
            vocab_size: rng.random_range(3..30),
            embed_dim: rng.random_range(1..6),
            hidden: rng.random_range(1..6),
            attn_dim: rng.random_range(1..6),
            hops: rng.random_range(1..5),
            fc_hidden: rng.random_range(1..5),
            penalty_coeff: 0.1,
        };
        let mut p = ModelParams::init(ModelKind::Sa, hyper, None, &mut seeded(draw)).unwrap();
        // wider weights give peaked attention as well as flat
        let scale = rng.random_range(0.5..4.0);
        if let Some(att) = p.attention.as_mut() {
            att.ws2.data.iter_mut().for_each(|x| *x *= scale);
        }
        let len = rng.random_range(1..25usize);
        let mut mask: Vec<bool> = (0..len).map(|_| rng.random_bool(0.7)).collect();
        let keep = rng.random_range(0..len);
        mask[keep] = true;
        let idx: Vec<usize> = (0..len)
            .map(|t| {
                if mask[t] {
                    rng.random_range(1..hyper.vocab_size)
                } else {
                    PAD
                }
            })
            .collect();
        let out = forward(&p, &idx, &mask).unwrap();
        let map = out.attention.unwrap();
        for k in 0..map.hops() {
            let row: f64 = (0..len).filter(|&t| mask[t]).map(|t| map.scores.get(k, t)).sum();
            worst_row = worst_row.max((row - 1.0).abs());
            masked_nonzero += (0..len).filter(|&t| !mask[t] && map.scores.get(k, t) != 0.0).count();
        }
        // garbage under the mask must not matter
        let noisy: Vec<usize> = (0..len)
            .map(|t| {
                if mask[t] {
                    idx[t]
                } else {
                    rng.random_range(0..hyper.vocab_size)
                }
            })
            .collect();
        if forward(&p, &noisy, &mask).unwrap().probability != out.probability {
            pad_changes += 1;
        }
    }
    outcome(
        worst_row <= 1e-9 && masked_nonzero == 0 && pad_changes == 0,
        format!(
            "1000 draws: max |row sum - 1| = {worst_row:.1e} (<= 1e-9), {masked_nonzero} non-zero masked entries, {pad_changes} probability changes under altered padding"
        ),
    )
}

// 4 ---------------------------------------------------------------------------

enum Expect {
    NotDiabetic,
    /// Diabetic, but no sample.
    Excluded,
    Positive {
        class: ComplicationClass,
        index_date: Day,
        dates: Vec<Day>,
    },
    Negative {
        index_date: Day,
        dates: Vec<Day>,
    },
}

struct Fixture {
    id: &'static str,
    records: Vec<(Day, String)>,
    expect: Expect,
}

fn others(days: impl IntoIterator<Item = Day>) -> Vec<(Day, String)> {
    days.into_iter().map(|d| (d, format!("o{}", d % 7))).collect()
}

fn with(mut base: Vec<(Day, String)>, extra: &[(Day, &str)]) -> Vec<(Day, String)> {
    base.extend(extra.iter().map(|(d, c)| (*d, c.to_string())));
    base
}

fn twice(days: std::ops::Range<Day>) -> Vec<Day> {
    days.flat_map(|d| [d, d]).collect()
}

/// Hand-built timelines around every boundary of the cohort rules, gap 60.
/// Positive index dates are complication day − 60 and windows are
/// `[index − 365, index)`.
fn cohort_fixtures() -> Vec<Fixture> {
    let dense_500 = twice(200..450);
    vec![
        Fixture {
            id: "hba1c_364_apart",
            records: vec![(0, "H".into()), (364, "H".into())],
            expect: Expect::Excluded,
        },
        Fixture {
            id: "hba1c_365_apart",
            records: with(others(1..60), &[(0, "H"), (365, "H")]),
            expect: Expect::NotDiabetic,
        },
        Fixture {
            id: "single_hba1c",
            records: with(others(1..51), &[(0, "H")]),
            expect: Expect::NotDiabetic,
        },
        Fixture {
            id: "positive_no_window",
            records: vec![(100, "H".into()), (400, "H".into()), (450, "HD".into())],
            expect: Expect::Excluded,
        },
        Fixture {
            id: "positive_40_records",
            records: with(others(400..440), &[(0, "H"), (100, "H"), (560, "HD")]),
            expect: Expect::Positive {
                class: ComplicationClass::Hemodialysis,
                index_date: 500,
                dates: (400..440).collect(),
            },
        },
        Fixture {
            id: "positive_39_records",
            records: with(others(400..439), &[(0, "H"), (100, "H"), (560, "HD")]),
            expect: Expect::Excluded,
        },
        Fixture {
            id: "positive_500_records",
            records: with(others(dense_500.clone()), &[(0, "H"), (100, "H"), (560, "REV")]),
            expect: Expect::Positive {
                class: ComplicationClass::RevascularizationAngioplasty,
                index_date: 500,
                dates: dense_500.clone(),
            },
        },
        Fixture {
            id: "positive_501_records",
            records: with(
                others(dense_500.clone()),
                &[(0, "H"), (100, "H"), (199, "o9"), (560, "REV")],
            ),
            expect: Expect::Positive {
                class: ComplicationClass::RevascularizationAngioplasty,
                index_date: 500,
                dates: dense_500,
            },
        },
        Fixture {
            id: "window_edges",
            records: with(
                others(300..338),
                &[
                    (0, "H"),
                    (10, "H"),
                    (134, "o1"),
                    (135, "o2"),
                    (499, "o3"),
                    (500, "o4"),
                    (530, "o5"),
                    (560, "AMP"),
                ],
            ),
            expect: Expect::Positive {
                class: ComplicationClass::AmputationDebridement,
                index_date: 500,
                dates: std::iter::once(135).chain(300..338).chain([499]).collect(),
            },
        },
        Fixture {
            id: "same_day_tie",
            records: with(others(400..440), &[(0, "H"), (100, "H"), (560, "HD"), (560, "AMP")]),
            expect: Expect::Positive {
                class: ComplicationClass::AmputationDebridement,
                index_date: 500,
                dates: (400..440).collect(),
            },
        },
        Fixture {
            id: "earliest_complication",
            records: with(others(400..440), &[(0, "H"), (100, "H"), (560, "HD"), (660, "AMP")]),
            expect: Expect::Positive {
                class: ComplicationClass::Hemodialysis,
                index_date: 500,
                dates: (400..440).collect(),
            },
        },
        Fixture {
            id: "non_diabetic_complication",
            records: with(others(400..440), &[(0, "H"), (560, "HD")]),
            expect: Expect::NotDiabetic,
        },
        Fixture {
            // 40 records on days 0..=38; the only index date with a full
            // window and 60 further days of activity is 39
            id: "negative_single_index",
            records: with(others(1..39), &[(0, "H"), (20, "H"), (99, "o0")]),
            expect: Expect::Negative {
                index_date: 39,
                dates: {
                    let mut d: Vec<Day> = (0..39).collect();
                    d.insert(20, 20);
                    d
                },
            },
        },
        Fixture {
            id: "negative_short_horizon",
            records: with(others(1..39), &[(0, "H"), (20, "H"), (98, "o0")]),
            expect: Expect::Excluded,
        },
        Fixture {
            id: "negative_30_records",
            records: with(others(1..29), &[(0, "H"), (20, "H"), (400, "o0")]),
            expect: Expect::Excluded,
        },
    ]
}

fn cohort_rules() -> Outcome {
    let sets = CodeSets::new(
        ["H"],
        [
            (ComplicationClass::AmputationDebridement, vec!["AMP".to_string()]),
            (ComplicationClass::RevascularizationAngioplasty, vec!["REV".to_string()]),
            (ComplicationClass::Hemodialysis, vec!["HD".to_string()]),
        ],
    )
    .unwrap();
    let fixtures = cohort_fixtures();
    let timelines: Vec<Timeline> = fixtures
        .iter()
        .map(|f| Timeline::from_pairs(f.id, &f.records))
        .collect();
    let diabetics = find_diabetics(&timelines, &sets);
    let (samples, summary) = build_cohort(&timelines, &sets, 60, &mut seeded(4)).unwrap();
    let by_id: BTreeMap<&str, &CohortSample> = samples.iter().map(|s| (s.individual_id.as_str(), s)).collect();

    let mut failures = Vec::new();
    for f in &fixtures {
        let diabetic = diabetics.contains(f.id);
        let sample = by_id.get(f.id);
        let ok = match &f.expect {
            Expect::NotDiabetic => !diabetic && sample.is_none(),
            Expect::Excluded => diabetic && sample.is_none(),
            Expect::Positive {
                class,
                index_date,
                dates,
            } => sample.is_some_and(|s| {
                diabetic
                    && s.label == 1
                    && s.complication_class == Some(*class)
                    && s.index_date == *index_date
                    && &s.record_dates == dates
                    && s.codes.iter().all(|c| c.starts_with('o') || c == "H")
            }),
            Expect::Negative { index_date, dates } => sample.is_some_and(|s| {
                diabetic
                    && s.label == 0
                    && s.complication_class.is_none()
                    && s.index_date == *index_date
                    && &s.record_dates == dates
            }),
        };
        if !ok {
            failures.push(f.id);
        }
    }
    let counts_ok = summary.positives == 6
        && summary.negatives == 1
        && summary.excluded_non_diabetic == 3
        && summary.excluded_positive_short_window == 2
        && summary.excluded_negative_no_window == 3;
    outcome(
        failures.is_empty() && counts_ok,
        format!(
            "{} fixtures, {} mismatched {:?}; summary {}/{} positives/negatives, exclusions {}/{}/{} (want 6/1, 3/2/3)",
            fixtures.len(),
            failures.len(),
            failures,
            summary.positives,
            summary.negatives,
            summary.excluded_non_diabetic,
            summary.excluded_positive_short_window,
            summary.excluded_negative_no_window
        ),
    )
}

// 5, 6, 8 ---------------------------------------------------------------------

struct EndToEnd {
    gate: Outcome,
    trend: Outcome,
    skipgram: Outcome,
}

fn end_to_end() -> EndToEnd {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    assert_eq!(cfg.synth.n_individuals, 2000);
    assert_eq!(cfg.synth.complication_fraction, 0.05);
    assert_eq!(cfg.gaps, GAPS.to_vec());
    let pipeline = Pipeline::new(cfg, dir.path()).unwrap();
    let started = Instant::now();
    let run = pipeline.run_all();
    let elapsed = started.elapsed();
    let (report, _) = match run {
        Ok(r) => r,
        Err(e) => {
            let failed = || outcome(false, format!("run-all failed: {e}"));
            return EndToEnd {
                gate: failed(),
                trend: failed(),
                skipgram: failed(),
            };
        }
    };
    let aggregates: Vec<Aggregate> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
    let auc = |m: ModelKind, g: u32| {
        aggregates
            .iter()
            .find(|a| a.model == m && a.gap_days == g)
            .map_or(f64::NAN, |a| a.mean_auc)
    };
    let sa60 = auc(ModelKind::Sa, 60);
    let base60 = auc(ModelKind::Baseline, 60);
    let ordered: Vec<String> = GAPS
        .iter()
        .map(|&g| {
            format!(
                "{g}: {:.3} vs {:.3}",
                auc(ModelKind::Sa, g),
                auc(ModelKind::Baseline, g)
            )
        })
        .collect();
    let all_ordered = GAPS
        .iter()
        .all(|&g| auc(ModelKind::Sa, g) > auc(ModelKind::Baseline, g));
    let gate = outcome(
        sa60 >= 0.85 && sa60 - base60 >= 0.03 && all_ordered && elapsed < Duration::from_secs(30 * 60),
        format!(
            "gap 60 LSTM+SA {sa60:.3} (>= 0.85), margin {:+.3} (>= 0.03); SA vs LSTM per gap [{}]; run-all {:.0}s (< 1800s)",
            sa60 - base60,
            ordered.join(", "),
            elapsed.as_secs_f64()
        ),
    );
    let trend = trend_outcome(&report);

    let meta: SynthMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("synth_meta.json")).unwrap()).unwrap();
    let file = std::fs::File::open(dir.path().join("embeddings.txt")).unwrap();
    let (tokens, table) = load_embeddings(BufReader::new(file)).unwrap();
    EndToEnd {
        gate,
        trend,
        skipgram: skipgram_outcome(&meta, &tokens, &table.vectors),
    }
}

fn trend_outcome(report: &Report) -> Outcome {
    let lines: Vec<String> = report
        .trend
        .iter()
        .map(|t| {
            if t.non_increasing {
                format!("{} non-increasing", t.model.label())
            } else {
                format!("{} rises at {:?}", t.model.label(), t.deviations)
            }
        })
        .collect();
    outcome(report.trend.iter().all(|t| t.non_increasing), lines.join("; "))
}

/// Each planted pair must beat the 95th percentile of 10,000 random code
/// pairs.
fn skipgram_outcome(meta: &SynthMeta, tokens: &[String], vectors: &claimrisk::matrix::Matrix) -> Outcome {
    let index: BTreeMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut rng = seeded(8);
    let mut random: Vec<f64> = (0..10_000)
        .map(|_| {
            let a = rng.random_range(2..tokens.len());
            let mut b = rng.random_range(2..tokens.len() - 1);
            if b >= a {
                b += 1;
            }
            cosine(vectors.row(a), vectors.row(b))
        })
        .collect();
    random.sort_by(f64::total_cmp);
    let p95 = random[9_500];
    let planted: Vec<f64> = meta
        .planted_pairs
        .iter()
        .map(|(a, b)| cosine(vectors.row(index[a.as_str()]), vectors.row(index[b.as_str()])))
        .collect();
    let above = planted.iter().filter(|&&c| c > p95).count();
    let lowest = planted.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        planted.len() == 100 && above == planted.len(),
        format!(
            "{above}/{} planted pairs above the random-pair 95th percentile {p95:.4} (lowest planted {lowest:.4})",
            planted.len()
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn determinism() -> Outcome {
    let text = "synth.n_individuals = 400\ngaps = 60, 240\ntrain.epochs = 2\nembed.epochs = 1\n";
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let pipeline = Pipeline::new(RunConfig::parse(text).unwrap(), dir.path()).unwrap();
        pipeline.run_all().unwrap();
        let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
        (read("aggregate.json"), read("report.json"))
    };
    let (a1, r1) = run();
    let (a2, r2) = run();
    outcome(
        a1 == a2 && r1 == r2,
        format!(
            "two run-all passes (400 individuals, gaps 60 and 240): aggregate.json {} ({} bytes), report.json {} ({} bytes)",
            if a1 == a2 { "identical" } else { "DIFFERENT" },
            a1.len(),
            if r1 == r2 { "identical" } else { "DIFFERENT" },
            r1.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, bool, Outcome)> = Vec::new();
    let mut record = |n: u8, name: &'static str, gated: bool, o: Outcome| {
        println!("[{}] {n}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, gated, o));
    };
    record(1, "gradient correctness", true, gradient_correctness());
    record(2, "AUC oracle equivalence", true, auc_oracle_equivalence());
    record(
        3,
        "attention stochasticity and masking",
        true,
        attention_stochasticity(),
    );
    record(4, "cohort rules", true, cohort_rules());
    let e2e = end_to_end();
    record(5, "end-to-end synthetic gate", true, e2e.gate);
    record(6, "monotonic-gap trend (reported, not gated)", false, e2e.trend);
    record(7, "run-all determinism", true, determinism());
    record(8, "skipgram planted pairs", true, e2e.skipgram);

    println!();
    println!("acceptance summary");
    for (n, name, gated, o) in &results {
        let status = match (o.pass, gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (soft)",
        };
        println!("  {n}. {status:<11} {name}");
    }
    let failed: Vec<u8> = results.iter().filter(|r| r.2 && !r.3.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        println!("gated criteria failed: {failed:?}");
        std::process::exit(1);
    }
}
