//! Synthetic ICU corpora and an independent reference labeller.
//!
//! The reference works directly on the generator's hourly values with naive
//! loops and integer arithmetic; for urine output it defers to the
//! brute-force oracle. It shares no staging code with the engine.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use kdigo::ingest::DatasetPaths;
use kdigo::model::{Quantity, Unit};
use kdigo::probes::ProbeConfig;
use kdigo::validate::brute_force_uo_oracle;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const MAX_GAP: usize = 5;
pub const REL_WINDOW: usize = 168;
pub const ABS_WINDOW: usize = 48;

// every weight divides 10^6, so whole-mL rates are exact in micro-units
const WEIGHTS: [i64; 6] = [40, 50, 64, 80, 100, 125];

#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub weight_kg: i64,
    pub height_cm: Option<i64>,
    pub age_years: Option<i64>,
    pub sex: Option<char>,
    pub start: NaiveDateTime,
    /// Whole mL per hour.
    pub urine_ml: Vec<Option<i64>>,
    /// Hours whose urine is recorded as two sub-hourly entries.
    pub split: Vec<bool>,
    /// Creatinine in 0.01 mg/dL, the value in force at the end of the hour.
    pub scr_centi: Vec<Option<i64>>,
    /// Hours with an earlier, superseded creatinine draw.
    pub scr_early_draw: Vec<Option<i64>>,
    pub dialysis: Option<Vec<Option<bool>>>,
}

impl Subject {
    pub fn hours(&self) -> usize {
        self.urine_ml.len()
    }

    fn ts(&self, hour: usize, minute: i64) -> NaiveDateTime {
        self.start + Duration::hours(hour as i64) + Duration::minutes(minute)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub subjects: Vec<Subject>,
}

pub fn fmt_ts(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn generate_subject(rng: &mut StdRng, index: usize) -> Subject {
    let hours = rng.gen_range(36..=240);
    let weight = WEIGHTS[rng.gen_range(0..WEIGHTS.len())];
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
        + Duration::hours(rng.gen_range(0..24 * 30));

    let mut urine = Vec::with_capacity(hours);
    let mut episode: Option<(usize, i64, i64)> = None; // (hours left, ml lo, ml hi)
    for _ in 0..hours {
        if episode.is_none() && rng.gen_bool(0.05) {
            let len = rng.gen_range(3..=30);
            let band = match rng.gen_range(0..5) {
                0 => (0, 0),
                1 => (weight * 3 / 10, weight / 2),
                2 => (weight / 2, weight / 2),
                3 => (0, weight * 3 / 10),
                _ => (weight * 3 / 10, weight * 3 / 10),
            };
            episode = Some((len, band.0, band.1));
        }
        let ml = match episode {
            Some((left, lo, hi)) => {
                let v = if lo == hi { lo } else { rng.gen_range(lo..hi) };
                episode = (left > 1).then_some((left - 1, lo, hi));
                v
            }
            None => rng.gen_range(weight / 2..=weight * 2),
        };
        urine.push(Some(ml));
    }
    let mut h = 1;
    while h + 1 < hours {
        if rng.gen_bool(0.03) {
            let len = rng.gen_range(1..=10).min(hours - 1 - h);
            for cell in &mut urine[h..h + len] {
                *cell = None;
            }
            h += len;
        }
        h += 1;
    }
    let split = (0..hours).map(|i| urine[i].is_some() && rng.gen_bool(0.1)).collect();

    let base = rng.gen_range(50..=130i64);
    let mut scr = vec![None; hours];
    let mut early = vec![None; hours];
    let mut level = base;
    let mut t = rng.gen_range(0..6);
    while t < hours {
        if rng.gen_bool(0.15) {
            level = match rng.gen_range(0..7) {
                0 => base,
                1 => base * 3 / 2,
                2 => base * 2,
                3 => base * 3,
                4 => base + 30,
                5 => rng.gen_range(400..=450),
                _ => base * rng.gen_range(11..=35) / 10,
            };
        }
        let jitter = rng.gen_range(-3..=3);
        scr[t] = Some((level + jitter).max(20));
        if rng.gen_bool(0.1) {
            early[t] = Some(rng.gen_range(30..300));
        }
        t += rng.gen_range(2..=14);
    }

    let dialysis = rng.gen_bool(0.3).then(|| {
        let mut flags = vec![None; hours];
        let from = rng.gen_range(0..hours);
        let to = (from + rng.gen_range(2..12)).min(hours - 1);
        for (i, cell) in flags.iter_mut().enumerate() {
            if (from..=to).contains(&i) {
                *cell = Some(true);
            } else if i % 4 == 0 {
                *cell = Some(false);
            }
        }
        flags
    });

    let demographics = rng.gen_bool(0.5);
    Subject {
        id: format!("p{}", index + 1),
        weight_kg: weight,
        height_cm: demographics.then(|| rng.gen_range(150..200)),
        age_years: demographics.then(|| rng.gen_range(18..95)),
        sex: demographics.then(|| if rng.gen_bool(0.5) { 'f' } else { 'm' }),
        start,
        urine_ml: urine,
        split,
        scr_centi: scr,
        scr_early_draw: early,
        dialysis,
    }
}

impl Corpus {
    pub fn generate(subjects: usize, seed: u64) -> Corpus {
        let mut rng = StdRng::seed_from_u64(seed);
        Corpus {
            subjects: (0..subjects).map(|i| generate_subject(&mut rng, i)).collect(),
        }
    }

    pub fn patients_csv(&self) -> String {
        let mut out = String::from("subject_id,weight_kg,height_cm,age_years,sex\n");
        let opt = |v: Option<i64>| v.map_or_else(String::new, |v| v.to_string());
        for s in &self.subjects {
            let sex = s.sex.map_or_else(String::new, |c| c.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", s.id, s.weight_kg, opt(s.height_cm), opt(s.age_years), sex);
        }
        out
    }

    pub fn urine_csv(&self) -> String {
        let mut out = String::from("subject_id,timestamp,urineoutput_ml\n");
        for s in &self.subjects {
            for (h, ml) in s.urine_ml.iter().enumerate() {
                let Some(ml) = *ml else { continue };
                if s.split[h] {
                    let first = ml / 2;
                    let _ = writeln!(out, "{},{},{}", s.id, fmt_ts(s.ts(h, 15)), first);
                    let _ = writeln!(out, "{},{},{}", s.id, fmt_ts(s.ts(h, 45)), ml - first);
                } else {
                    let _ = writeln!(out, "{},{},{}", s.id, fmt_ts(s.ts(h, 0)), ml);
                }
            }
        }
        out
    }

    /// Rows are written newest first to exercise re-sorting on load.
    pub fn creatinine_csv(&self) -> String {
        let mut rows = Vec::new();
        for s in &self.subjects {
            for (h, v) in s.scr_centi.iter().enumerate() {
                if let Some(e) = s.scr_early_draw[h] {
                    rows.push(format!("{},{},{}.{:02}", s.id, fmt_ts(s.ts(h, 5)), e / 100, e % 100));
                }
                if let Some(v) = v {
                    rows.push(format!("{},{},{}.{:02}", s.id, fmt_ts(s.ts(h, 50)), v / 100, v % 100));
                }
            }
        }
        rows.reverse();
        let mut out = String::from("subject_id,timestamp,creatinine\n");
        for r in rows {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }

    pub fn dialysis_csv(&self) -> String {
        let mut out = String::from("subject_id,timestamp,dialysis_active\n");
        let spellings = [("1", "0"), ("true", "false"), ("True", "False")];
        for (k, s) in self.subjects.iter().enumerate() {
            let Some(flags) = &s.dialysis else { continue };
            let (on, off) = spellings[k % spellings.len()];
            for (h, f) in flags.iter().enumerate() {
                if let Some(f) = f {
                    let _ = writeln!(out, "{},{},{}", s.id, fmt_ts(s.ts(h, 0)), if *f { on } else { off });
                }
            }
        }
        out
    }

    /// Writes the four input files into `dir`.
    pub fn write(&self, dir: &Path) -> DatasetPaths {
        let paths = corpus_paths(dir);
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(&paths.patients, self.patients_csv()).unwrap();
        std::fs::write(&paths.urine_output, self.urine_csv()).unwrap();
        std::fs::write(&paths.creatinine, self.creatinine_csv()).unwrap();
        std::fs::write(paths.dialysis.as_ref().unwrap(), self.dialysis_csv()).unwrap();
        paths
    }

    /// Gold labels under the default configuration, sorted by subject id
    /// then time.
    pub fn reference_gold(&self) -> String {
        let mut subjects: Vec<&Subject> = self.subjects.iter().collect();
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out = String::from("subject_id,timestamp,uo_stage,abs_scr_stage,rel_scr_stage,dialysis_stage,overall_stage\n");
        for s in subjects {
            for (h, row) in reference_stages(s).iter().enumerate() {
                let f = |v: Option<u8>| v.map_or_else(String::new, |v| v.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.id,
                    fmt_ts(s.ts(h, 0)),
                    f(row[0]),
                    f(row[1]),
                    f(row[2]),
                    f(row[3]),
                    f(row[4])
                );
            }
        }
        out
    }
}

pub fn corpus_paths(dir: &Path) -> DatasetPaths {
    DatasetPaths {
        urine_output: dir.join("urine_output.csv"),
        creatinine: dir.join("creatinine.csv"),
        dialysis: Some(dir.join("dialysis.csv")),
        patients: dir.join("patients.csv"),
    }
}

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Copies the value before a missing run across it when the run (counted
/// to the end of the column if trailing) is at most `max` hours long.
pub fn naive_fill<T: Copy>(col: &[Option<T>], max: usize) -> Vec<Option<T>> {
    let n = col.len();
    let mut out = col.to_vec();
    for i in 0..n {
        if col[i].is_some() {
            continue;
        }
        let mut a = i;
        while a > 0 && col[a - 1].is_none() {
            a -= 1;
        }
        let mut b = i;
        while b + 1 < n && col[b + 1].is_none() {
            b += 1;
        }
        if a > 0 && b - a < max {
            out[i] = col[a - 1];
        }
    }
    out
}

fn window_min(col: &[Option<i64>], t: usize, len: usize) -> Option<i64> {
    col[t.saturating_sub(len)..t].iter().flatten().copied().min()
}

/// `[uo, abs, rel, dialysis, overall]` per hour, `None` for unknown.
pub fn reference_stages(s: &Subject) -> Vec<[Option<u8>; 5]> {
    let n = s.hours();
    let urine = naive_fill(&s.urine_ml, MAX_GAP);
    let scr: Vec<Option<i64>> = naive_fill(&s.scr_centi, MAX_GAP)
        .into_iter()
        .map(|v| v.map(|c| c * 10_000))
        .collect();
    let dialysis = s
        .dialysis
        .as_ref()
        .map_or_else(|| vec![None; n], |d| naive_fill(d, MAX_GAP));

    let rates: Vec<Option<Quantity>> = urine
        .iter()
        .map(|v| v.map(|ml| Quantity::from_micros(ml * 1_000_000 / s.weight_kg, Unit::MilliliterPerKgPerHour)))
        .collect();
    let uo = brute_force_uo_oracle(&rates, &ProbeConfig::default());

    (0..n)
        .map(|t| {
            let abs = scr[t].and_then(|c| {
                if c >= 4_000_000 {
                    return Some(3);
                }
                let b = window_min(&scr, t, ABS_WINDOW)?;
                Some(if c - b >= 300_000 { 1 } else { 0 })
            });
            let rel = scr[t].and_then(|c| {
                let b = window_min(&scr, t, REL_WINDOW)?;
                Some(if c >= 3 * b {
                    3
                } else if c >= 2 * b {
                    2
                } else if 2 * c >= 3 * b {
                    1
                } else {
                    0
                })
            });
            let dia = dialysis[t].map(|on| if on { 3 } else { 0 });
            let u = uo[t].level();
            let overall = [u, abs, rel, dia].into_iter().max().flatten();
            [u, abs, rel, dia, overall]
        })
        .collect()
}

/// Seed and size of the bundled golden corpus.
pub const GOLDEN_SEED: u64 = 20_240_101;
pub const GOLDEN_SUBJECTS: usize = 12;

pub fn golden_corpus() -> Corpus {
    Corpus::generate(GOLDEN_SUBJECTS, GOLDEN_SEED)
}
