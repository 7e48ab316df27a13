//! Scoring against gold labels, plus the brute-force urine-output oracle.
//!
//! Accuracy is exact agreement per category. Per-stage accuracy is the
//! share of gold hours at that stage that the prediction also put at that
//! stage (recall for the stage). Gold cells left blank are not evaluable
//! and are excluded from that category; a prediction of `Unknown` against
//! a known gold stage counts as a miss.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use num_rational::Ratio;
use thiserror::Error;

use crate::ingest::{self, IngestError, TIMESTAMP_FORMAT};
use crate::model::{Pathway, Quantity, Stage, StageRecord, SubjectId};
use crate::probes::{ProbeConfig, UoMode};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("prediction and gold keys diverge at {subject} {}: {detail}", .timestamp.format(TIMESTAMP_FORMAT))]
    KeyMismatch {
        subject: SubjectId,
        timestamp: NaiveDateTime,
        detail: &'static str,
    },
    #[error("{file}: duplicate row for {subject} {}", .timestamp.format(TIMESTAMP_FORMAT))]
    DuplicateKey {
        file: String,
        subject: SubjectId,
        timestamp: NaiveDateTime,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Stages for one subject-hour as read from a label file. Unlike
/// [`StageRecord`], the overall stage is taken as given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub subject_id: SubjectId,
    pub timestamp: NaiveDateTime,
    pub stages: [Stage; 5],
}

impl LabelRecord {
    pub fn stage(&self, pathway: Pathway) -> Stage {
        self.stages[pathway_index(pathway)]
    }

    pub fn set_stage(&mut self, pathway: Pathway, stage: Stage) {
        self.stages[pathway_index(pathway)] = stage;
    }

    fn key(&self) -> (&SubjectId, NaiveDateTime) {
        (&self.subject_id, self.timestamp)
    }
}

fn pathway_index(pathway: Pathway) -> usize {
    Pathway::ALL
        .iter()
        .position(|&p| p == pathway)
        .expect("every pathway is listed")
}

impl From<&StageRecord> for LabelRecord {
    fn from(r: &StageRecord) -> Self {
        LabelRecord {
            subject_id: r.subject_id().clone(),
            timestamp: r.timestamp(),
            stages: Pathway::ALL.map(|p| r.stage(p)),
        }
    }
}

/// Hits over support for one stage or one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub correct: u64,
    pub support: u64,
}

impl Tally {
    /// `None` when there is nothing to score.
    pub fn accuracy(&self) -> Option<f64> {
        (self.support > 0).then(|| self.correct as f64 / self.support as f64)
    }

    fn add(&mut self, hit: bool) {
        self.support += 1;
        self.correct += u64::from(hit);
    }

    fn merge(&mut self, other: Tally) {
        self.correct += other.correct;
        self.support += other.support;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryAccuracy {
    pub pathway: Pathway,
    pub overall: Tally,
    /// Indexed by stage level 0..=3.
    pub by_stage: [Tally; 4],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccuracyReport {
    pub categories: Vec<CategoryAccuracy>,
}

impl Default for AccuracyReport {
    fn default() -> Self {
        AccuracyReport {
            categories: Pathway::ALL
                .iter()
                .map(|&pathway| CategoryAccuracy {
                    pathway,
                    overall: Tally::default(),
                    by_stage: [Tally::default(); 4],
                })
                .collect(),
        }
    }
}

impl AccuracyReport {
    pub fn category(&self, pathway: Pathway) -> &CategoryAccuracy {
        &self.categories[pathway_index(pathway)]
    }

    /// Adds another report's counts. Merging is associative and
    /// commutative, so partial reports can be reduced in any order.
    pub fn merge(&mut self, other: &AccuracyReport) {
        for (mine, theirs) in self.categories.iter_mut().zip(&other.categories) {
            mine.overall.merge(theirs.overall);
            for (a, b) in mine.by_stage.iter_mut().zip(theirs.by_stage) {
                a.merge(b);
            }
        }
    }

    /// Whether every category with support reaches `bound`.
    pub fn meets(&self, bound: f64) -> bool {
        self.categories
            .iter()
            .all(|c| c.overall.accuracy().is_none_or(|a| a >= bound))
    }

    fn record(&mut self, pred: &LabelRecord, gold: &LabelRecord) {
        for (k, cat) in self.categories.iter_mut().enumerate() {
            let g = gold.stages[k];
            let Some(level) = g.level() else {
                continue;
            };
            let hit = pred.stages[k] == g;
            cat.overall.add(hit);
            cat.by_stage[level as usize].add(hit);
        }
    }

    /// Plain-text table, one row per category and stage.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:<8} {:>8} {:>8} {:>9}", "category", "label", "support", "correct", "accuracy");
        for c in &self.categories {
            let rows = std::iter::once(("overall".to_string(), c.overall)).chain(
                c.by_stage
                    .iter()
                    .enumerate()
                    .map(|(s, t)| (format!("stage {s}"), *t)),
            );
            for (label, t) in rows {
                let acc = t.accuracy().map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
                let _ = writeln!(
                    out,
                    "{:<10} {:<8} {:>8} {:>8} {:>9}",
                    c.pathway.short_name(),
                    label,
                    t.support,
                    t.correct,
                    acc
                );
            }
        }
        out
    }

    /// Machine-readable form: `category,label,support,correct,accuracy`,
    /// accuracy empty when support is zero.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        let io_err = |e: csv::Error| IngestError::from_csv("report", e);
        w.write_record(["category", "label", "support", "correct", "accuracy"])
            .map_err(io_err)?;
        for c in &self.categories {
            let rows = std::iter::once(("overall".to_string(), c.overall)).chain(
                c.by_stage
                    .iter()
                    .enumerate()
                    .map(|(s, t)| (format!("stage_{s}"), *t)),
            );
            for (label, t) in rows {
                w.write_record([
                    c.pathway.short_name().to_string(),
                    label,
                    t.support.to_string(),
                    t.correct.to_string(),
                    t.accuracy().map_or_else(String::new, |a| format!("{a:.6}")),
                ])
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| IngestError::Io {
            path: "report".into(),
            source: e,
        })
    }
}

/// Scores `pred` against `gold`. Both must cover the same
/// (subject, timestamp) keys; order does not matter.
pub fn score(pred: &[LabelRecord], gold: &[LabelRecord]) -> Result<AccuracyReport, ValidateError> {
    let pred = sorted_unique(pred, "prediction")?;
    let gold = sorted_unique(gold, "gold")?;

    for i in 0..pred.len().max(gold.len()) {
        match (pred.get(i), gold.get(i)) {
            (Some(p), Some(g)) if p.key() == g.key() => {}
            (Some(p), Some(g)) => {
                let (first, detail) = if p.key() < g.key() {
                    (p, "present in prediction only")
                } else {
                    (g, "present in gold only")
                };
                return Err(key_mismatch(first, detail));
            }
            (Some(p), None) => return Err(key_mismatch(p, "present in prediction only")),
            (None, Some(g)) => return Err(key_mismatch(g, "present in gold only")),
            (None, None) => unreachable!(),
        }
    }

    let mut report = AccuracyReport::default();
    for (p, g) in pred.iter().zip(&gold) {
        report.record(p, g);
    }
    Ok(report)
}

/// Convenience for in-memory pipeline output.
pub fn score_records(pred: &[StageRecord], gold: &[LabelRecord]) -> Result<AccuracyReport, ValidateError> {
    let pred: Vec<LabelRecord> = pred.iter().map(LabelRecord::from).collect();
    score(&pred, gold)
}

fn key_mismatch(r: &LabelRecord, detail: &'static str) -> ValidateError {
    ValidateError::KeyMismatch {
        subject: r.subject_id.clone(),
        timestamp: r.timestamp,
        detail,
    }
}

fn sorted_unique<'a>(records: &'a [LabelRecord], file: &str) -> Result<Vec<&'a LabelRecord>, ValidateError> {
    let mut sorted: Vec<&LabelRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    if let Some(pair) = sorted.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(ValidateError::DuplicateKey {
            file: file.to_string(),
            subject: pair[1].subject_id.clone(),
            timestamp: pair[1].timestamp,
        });
    }
    Ok(sorted)
}

/// Reads a stage file: `subject_id,timestamp` plus the five stage columns.
/// Additional columns (such as the baselines in annotator output) are
/// ignored, so annotator output can be scored directly.
pub fn read_label_file(path: &Path) -> Result<Vec<LabelRecord>, ValidateError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_labels(file, &path.display().to_string())
}

pub fn read_labels<R: Read>(reader: R, source: &str) -> Result<Vec<LabelRecord>, ValidateError> {
    let mut columns = vec!["subject_id", "timestamp"];
    columns.extend(Pathway::ALL.iter().map(|p| p.column()));
    let mut table = ingest::Table::open(reader, source, &columns, &[], true)?;

    let mut out = Vec::new();
    while let Some(row) = table.next_row()? {
        let subject_id = row.subject("subject_id")?;
        let timestamp = row.timestamp("timestamp")?;
        let mut stages = [Stage::Unknown; 5];
        for (k, p) in Pathway::ALL.iter().enumerate() {
            stages[k] = row.parse_field(p.column(), |s| s.parse::<Stage>().map_err(|e| e.to_string()))?;
        }
        out.push(LabelRecord {
            subject_id,
            timestamp,
            stages,
        });
    }
    Ok(out)
}

/// Reference urine-output staging by exhaustive enumeration.
///
/// For every hour it rescans the prefix from scratch: it grows each
/// candidate run or window ending at `t` one hour at a time and applies the
/// duration rules literally. Rates are in mL/kg/h. Shares no code with the
/// probes; used to check them.
pub fn brute_force_uo_oracle(rates: &[Option<Quantity>], cfg: &ProbeConfig) -> Vec<Stage> {
    let half = 500_000i64;
    let three_tenths = 300_000i64;
    let anuria = cfg.anuria_threshold.raw();

    (0..rates.len())
        .map(|t| {
            if rates[t].is_none() {
                return Stage::Unknown;
            }
            let longest = |holds: &dyn Fn(i64) -> bool| -> usize {
                let mut best = 0;
                for len in 1..=t + 1 {
                    let window = &rates[t + 1 - len..=t];
                    if window.iter().all(|r| r.is_some_and(|q| holds(q.raw()))) {
                        best = len;
                    } else {
                        break;
                    }
                }
                best
            };
            let anuric_hours = longest(&|r| r <= anuria);

            match cfg.uo_mode {
                UoMode::StrictConsecutive => {
                    let under_half = longest(&|r| r < half);
                    let under_three_tenths = longest(&|r| r < three_tenths);
                    if under_three_tenths >= 24 || anuric_hours >= 12 {
                        Stage::Three
                    } else if under_half >= 12 {
                        Stage::Two
                    } else if under_half >= 6 {
                        Stage::One
                    } else {
                        Stage::Zero
                    }
                }
                UoMode::TrailingMean => {
                    let mean_under = |hours: usize, limit: i64| -> bool {
                        if t + 1 < hours {
                            return false;
                        }
                        let window = &rates[t + 1 - hours..=t];
                        let Some(values) = window.iter().map(|r| r.map(|q| q.raw())).collect::<Option<Vec<i64>>>() else {
                            return false;
                        };
                        let total: i128 = values.iter().map(|&v| i128::from(v)).sum();
                        Ratio::new(total, hours as i128) < Ratio::from_integer(i128::from(limit))
                    };
                    if mean_under(24, three_tenths) || anuric_hours >= 12 {
                        Stage::Three
                    } else if mean_under(12, half) {
                        Stage::Two
                    } else if mean_under(6, half) {
                        Stage::One
                    } else {
                        Stage::Zero
                    }
                }
            }
        })
        .collect()
}
