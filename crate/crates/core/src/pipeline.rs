//! End-to-end annotation: grid, optional imputation, the four pathways,
//! merge. Subjects are independent and run in parallel; output order is
//! always (subject, timestamp).

use std::io::Write;

use chrono::{Duration, NaiveDateTime};
use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{baselines_for_grid, Baseline, BaselineError, BaselineMethod};
use crate::ingest::{DatasetBundle, IngestError, TIMESTAMP_FORMAT};
use crate::model::{
    Audit, HourlyGrid, PatientProfile, Pathway, Stage, StageRecord, SubjectId, Unit,
};
use crate::preprocess::{forward_fill, resample_subject, PreprocessError, DEFAULT_MAX_GAP_HOURS};
use crate::probes::{classify_absolute, classify_relative, dialysis_stage, uo_stages, ProbeConfig, ProbeConfigError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown subject {0}")]
    UnknownSubject(SubjectId),
    #[error("subject {0} has no observations")]
    EmptySubject(SubjectId),
    #[error("cannot summarize an empty record list")]
    EmptyInput,
    #[error("records mix subjects {first} and {other}")]
    MixedSubjects { first: SubjectId, other: SubjectId },
    #[error("records for subject {subject} are not hourly-consecutive at {}", .timestamp.format(TIMESTAMP_FORMAT))]
    NotContiguous {
        subject: SubjectId,
        timestamp: NaiveDateTime,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Config(#[from] ProbeConfigError),
}

/// Everything that influences the output. The default is the validation
/// configuration: strict urine-output runs, rolling-minimum baselines over
/// 168 h (relative) and 48 h (absolute), forward fill of gaps up to 5 h.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub probe: ProbeConfig,
    pub max_gap_hours: u32,
    pub imputation_enabled: bool,
    pub creatinine_unit: Unit,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            probe: ProbeConfig::default(),
            max_gap_hours: DEFAULT_MAX_GAP_HOURS,
            imputation_enabled: true,
            creatinine_unit: Unit::MilligramPerDeciliter,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ProbeConfigError> {
        self.probe.validate()
    }

    pub fn uses_cockcroft_gault(&self) -> bool {
        self.probe.rel_baseline.is_cockcroft_gault() || self.probe.abs_baseline.is_cockcroft_gault()
    }

    /// `key = value` lines, in the same shape as the config file.
    pub fn describe(&self) -> String {
        format!(
            "uo_mode = \"{}\"\nanuria_threshold = \"{}\"\nrel_baseline = \"{}\"\nabs_baseline = \"{}\"\nmax_gap_hours = {}\nimpute = {}\ncreatinine_unit = \"{}\"\n",
            self.probe.uo_mode.name(),
            crate::model::fixed::format_micros(self.probe.anuria_threshold.raw()),
            self.probe.rel_baseline,
            self.probe.abs_baseline,
            self.max_gap_hours,
            self.imputation_enabled,
            self.creatinine_unit.symbol(),
        )
    }
}

/// Records for one subject plus anything worth telling the user.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubjectAnnotation {
    pub records: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

pub fn annotate_subject(
    bundle: &DatasetBundle,
    subject: &SubjectId,
    cfg: &RunConfig,
) -> Result<Vec<StageRecord>, PipelineError> {
    annotate_subject_with_notes(bundle, subject, cfg).map(|a| a.records)
}

pub fn annotate_subject_with_notes(
    bundle: &DatasetBundle,
    subject: &SubjectId,
    cfg: &RunConfig,
) -> Result<SubjectAnnotation, PipelineError> {
    let profile = bundle
        .profile(subject)
        .ok_or_else(|| PipelineError::UnknownSubject(subject.clone()))?;
    let series = bundle.series_for(subject);
    if series.is_empty() {
        return Err(PipelineError::EmptySubject(subject.clone()));
    }
    let mut grid = resample_subject(&series, profile)?;
    if cfg.imputation_enabled {
        grid = forward_fill(&grid, cfg.max_gap_hours);
    }
    annotate_grid(&grid, profile, &cfg.probe)
}

/// Stages every hour of an already prepared grid.
pub fn annotate_grid(
    grid: &HourlyGrid,
    profile: &PatientProfile,
    probe: &ProbeConfig,
) -> Result<SubjectAnnotation, PipelineError> {
    let mut warnings = Vec::new();
    let uo = uo_stages(grid, probe);
    let rel = baselines_or_warn(grid, &probe.rel_baseline, profile, "relative", &mut warnings)?;
    let abs = baselines_or_warn(grid, &probe.abs_baseline, profile, "absolute", &mut warnings)?;

    let records = (0..grid.len())
        .map(|t| {
            let scr = grid.cell(t).scr();
            StageRecord::new(
                grid.subject_id().clone(),
                grid.timestamp(t),
                uo[t],
                classify_absolute(scr, abs[t].as_ref()),
                classify_relative(scr, rel[t].as_ref()),
                dialysis_stage(grid, t),
                Audit {
                    baseline_rel: rel[t].as_ref().map(Baseline::to_quantity),
                    baseline_abs: abs[t].as_ref().map(Baseline::to_quantity),
                },
            )
        })
        .collect();
    Ok(SubjectAnnotation { records, warnings })
}

fn baselines_or_warn(
    grid: &HourlyGrid,
    method: &BaselineMethod,
    profile: &PatientProfile,
    pathway: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<Option<Baseline>>, PipelineError> {
    match baselines_for_grid(grid, method, profile) {
        Ok(b) => Ok(b),
        Err(e @ BaselineError::MissingDemographics { .. }) => {
            warnings.push(format!("{e}; {pathway} creatinine stages left unknown"));
            Ok(vec![None; grid.len()])
        }
        Err(e) => Err(e.into()),
    }
}

/// Output of a whole run, ordered by subject.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotation {
    pub records: Vec<StageRecord>,
    pub summaries: Vec<PatientSummary>,
    pub warnings: Vec<String>,
}

/// Annotates every subject on `jobs` worker threads (0 picks the number of
/// available processors). Subjects with a profile but no observations are
/// skipped with a warning. The result does not depend on `jobs`.
pub fn annotate_all(bundle: &DatasetBundle, cfg: &RunConfig, jobs: usize) -> Result<Annotation, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let subjects: Vec<&SubjectId> = bundle.subjects().collect();

    let results: Vec<Result<Option<(SubjectAnnotation, PatientSummary)>, PipelineError>> = pool.install(|| {
        subjects
            .par_iter()
            .map(|id| match annotate_subject_with_notes(bundle, id, cfg) {
                Ok(a) => {
                    let s = summarize(&a.records)?;
                    Ok(Some((a, s)))
                }
                Err(PipelineError::EmptySubject(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    });

    let mut out = Annotation::default();
    if cfg.uses_cockcroft_gault() {
        out.warnings.push(
            "Cockcroft-Gault baseline selected: baselines are back-calculated from demographics, not measured"
                .to_string(),
        );
    }
    for (id, r) in subjects.iter().zip(results) {
        match r? {
            Some((a, s)) => {
                out.records.extend(a.records);
                out.warnings.extend(a.warnings);
                out.summaries.push(s);
            }
            None => out.warnings.push(format!("subject {id} has no observations; skipped")),
        }
    }
    Ok(out)
}

/// Per-subject timing and severity, per pathway and overall.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientSummary {
    pub subject_id: SubjectId,
    pub hours_observed: usize,
    first_aki: [Option<NaiveDateTime>; 5],
    max_stage: [Stage; 5],
}

impl PatientSummary {
    pub fn first_aki(&self, pathway: Pathway) -> Option<NaiveDateTime> {
        self.first_aki[index(pathway)]
    }

    pub fn max_stage(&self, pathway: Pathway) -> Stage {
        self.max_stage[index(pathway)]
    }
}

fn index(pathway: Pathway) -> usize {
    Pathway::ALL.iter().position(|&p| p == pathway).expect("listed")
}

/// First hour at stage 1 or above and the highest stage, per pathway.
/// Unknown hours count as no AKI; the maximum is Unknown only when every
/// hour is.
pub fn summarize(records: &[StageRecord]) -> Result<PatientSummary, PipelineError> {
    let first = records.first().ok_or(PipelineError::EmptyInput)?;
    let subject = first.subject_id();
    for pair in records.windows(2) {
        if pair[1].subject_id() != subject {
            return Err(PipelineError::MixedSubjects {
                first: subject.clone(),
                other: pair[1].subject_id().clone(),
            });
        }
        if pair[1].timestamp() - pair[0].timestamp() != Duration::hours(1) {
            return Err(PipelineError::NotContiguous {
                subject: subject.clone(),
                timestamp: pair[1].timestamp(),
            });
        }
    }

    let mut first_aki = [None; 5];
    let mut max_stage = [Stage::Unknown; 5];
    for r in records {
        for (k, &p) in Pathway::ALL.iter().enumerate() {
            let s = r.stage(p);
            if s.is_aki() && first_aki[k].is_none() {
                first_aki[k] = Some(r.timestamp());
            }
            max_stage[k] = max_stage[k].max(s);
        }
    }
    Ok(PatientSummary {
        subject_id: subject.clone(),
        hours_observed: records.len(),
        first_aki,
        max_stage,
    })
}

pub fn summary_columns() -> Vec<String> {
    let mut cols = vec!["subject_id".to_string(), "hours_observed".to_string()];
    cols.extend(Pathway::ALL.iter().map(|p| format!("first_aki_{}", p.short_name())));
    cols.extend(Pathway::ALL.iter().map(|p| format!("max_{}", p.short_name())));
    cols
}

pub fn write_summaries_to<W: Write>(summaries: &[PatientSummary], writer: W) -> Result<(), IngestError> {
    let err = |e| IngestError::from_csv("summary", e);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(summary_columns()).map_err(err)?;
    for s in summaries {
        let mut row = vec![s.subject_id.to_string(), s.hours_observed.to_string()];
        row.extend(
            s.first_aki
                .iter()
                .map(|t| t.map_or_else(String::new, |t| t.format(TIMESTAMP_FORMAT).to_string())),
        );
        row.extend(s.max_stage.iter().map(|m| m.as_field().to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| IngestError::Io {
        path: "summary".into(),
        source: e,
    })
}
