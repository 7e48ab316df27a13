//! Command-line interface.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 1    | invalid input data, configuration or key mismatch    |
//! | 2    | usage error                                          |
//! | 3    | `validate --min-accuracy` bound not met              |

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::baseline::{BaselineMethod, WindowStat};
use crate::ingest::{load_dataset, write_stage_records, DatasetPaths, LoadOptions};
use crate::model::{Quantity, Unit};
use crate::pipeline::{annotate_all, write_summaries_to, RunConfig};
use crate::probes::{UoMode, DEFAULT_ABSOLUTE_WINDOW_HOURS, DEFAULT_RELATIVE_WINDOW_HOURS};
use crate::validate::{read_label_file, score};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BELOW_BOUND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "kdigo", version, about = "Hourly KDIGO acute kidney injury staging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stage every hour of every subject and write records plus summaries.
    Annotate(AnnotateArgs),
    /// Score a stage file against gold labels.
    Validate(ValidateArgs),
    /// Print the resolved configuration.
    Config(StagingArgs),
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Urine output file: subject_id,timestamp,urineoutput_ml
    #[arg(long)]
    pub urine_output: PathBuf,
    /// Creatinine file: subject_id,timestamp,creatinine
    #[arg(long)]
    pub creatinine: PathBuf,
    /// Patients file: subject_id,weight_kg[,height_cm,age_years,sex]
    #[arg(long)]
    pub patients: PathBuf,
    /// Dialysis file: subject_id,timestamp,dialysis_active
    #[arg(long)]
    pub dialysis: Option<PathBuf>,
    /// Stage record output file.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Per-patient summary file [default: <output stem>_summary.csv]
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads [default: available processors]
    #[arg(long, short)]
    pub jobs: Option<usize>,
    /// Field delimiter of the input files.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[command(flatten)]
    pub staging: StagingArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Stage file produced by `annotate`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Gold label file with the same keys.
    #[arg(long)]
    pub gold: PathBuf,
    /// Fail with exit code 3 if any category's accuracy is below this.
    #[arg(long, value_parser = parse_fraction)]
    pub min_accuracy: Option<f64>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StagingArgs {
    /// TOML file with staging options; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Urine output rule: strict or trailing-mean [default: strict]
    #[arg(long)]
    pub uo_mode: Option<UoMode>,
    /// Hours at or below this rate (mL/kg/h) count as anuric [default: 0]
    #[arg(long, value_parser = parse_rate)]
    pub anuria_threshold: Option<Quantity>,
    /// Baseline for relative rises [default: rolling:min:168]
    #[arg(long, value_name = "SPEC")]
    pub rel_baseline: Option<String>,
    /// Baseline for absolute rises [default: rolling:min:48]
    #[arg(long, value_name = "SPEC")]
    pub abs_baseline: Option<String>,
    /// Statistic for both window baselines: min, mean or first.
    #[arg(long)]
    pub baseline_stat: Option<WindowStat>,
    /// Window length in hours for both window baselines.
    #[arg(long)]
    pub window_hours: Option<u32>,
    /// Assumed GFR (mL/min) for Cockcroft-Gault baselines [default: 75]
    #[arg(long, value_parser = parse_gfr)]
    pub assumed_gfr: Option<Quantity>,
    /// Longest gap in hours bridged by forward fill [default: 5]
    #[arg(long)]
    pub max_gap_hours: Option<u32>,
    /// Disable forward fill.
    #[arg(long)]
    pub no_impute: bool,
    /// Unit of the creatinine file: mg/dL or umol/L [default: mg/dL]
    #[arg(long)]
    pub creatinine_unit: Option<Unit>,
}

/// Options accepted in the `--config` file. Same meaning as the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    uo_mode: Option<String>,
    anuria_threshold: Option<String>,
    rel_baseline: Option<String>,
    abs_baseline: Option<String>,
    baseline_stat: Option<String>,
    window_hours: Option<u32>,
    assumed_gfr: Option<String>,
    max_gap_hours: Option<u32>,
    impute: Option<bool>,
    creatinine_unit: Option<String>,
}

fn parse_rate(s: &str) -> Result<Quantity, String> {
    Quantity::parse(s, Unit::MilliliterPerKgPerHour).map_err(|e| e.to_string())
}

fn parse_gfr(s: &str) -> Result<Quantity, String> {
    Quantity::parse(s, Unit::MilliliterPerMinute).map_err(|e| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a number in [0, 1], got {s:?}")),
    }
}

impl StagingArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let file: ConfigFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let layer = StagingArgs {
                config: None,
                uo_mode: file.uo_mode.map(|s| s.parse()).transpose().map_err(|e| format!("{e}"))?,
                anuria_threshold: file.anuria_threshold.as_deref().map(parse_rate).transpose()?,
                rel_baseline: file.rel_baseline,
                abs_baseline: file.abs_baseline,
                baseline_stat: file.baseline_stat.map(|s| s.parse()).transpose().map_err(|e| format!("{e}"))?,
                window_hours: file.window_hours,
                assumed_gfr: file.assumed_gfr.as_deref().map(parse_gfr).transpose()?,
                max_gap_hours: file.max_gap_hours,
                no_impute: file.impute == Some(false),
                creatinine_unit: file.creatinine_unit.map(|s| s.parse()).transpose().map_err(|e| format!("{e}"))?,
            };
            layer.apply(&mut cfg)?;
        }
        self.apply(&mut cfg)?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<(), String> {
        let probe = &mut cfg.probe;
        if let Some(m) = self.uo_mode {
            probe.uo_mode = m;
        }
        if let Some(a) = self.anuria_threshold {
            probe.anuria_threshold = a;
        }
        if let Some(spec) = &self.rel_baseline {
            probe.rel_baseline = BaselineMethod::parse_with_default_hours(spec, DEFAULT_RELATIVE_WINDOW_HOURS)
                .map_err(|e| e.to_string())?;
        }
        if let Some(spec) = &self.abs_baseline {
            probe.abs_baseline = BaselineMethod::parse_with_default_hours(spec, DEFAULT_ABSOLUTE_WINDOW_HOURS)
                .map_err(|e| e.to_string())?;
        }
        for method in [&mut probe.rel_baseline, &mut probe.abs_baseline] {
            if let Some(stat) = self.baseline_stat {
                *method = method.with_stat(stat);
            }
            if let Some(h) = self.window_hours {
                *method = method.with_window_hours(h);
            }
            if let Some(g) = self.assumed_gfr {
                *method = method.with_assumed_gfr(g);
            }
            method.validate().map_err(|e| e.to_string())?;
        }
        if let Some(g) = self.max_gap_hours {
            cfg.max_gap_hours = g;
        }
        if self.no_impute {
            cfg.imputation_enabled = false;
        }
        if let Some(u) = self.creatinine_unit {
            if !matches!(u, Unit::MilligramPerDeciliter | Unit::MicromolePerLiter) {
                return Err(format!("creatinine unit must be mg/dL or umol/L, got {u}"));
            }
            cfg.creatinine_unit = u;
        }
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Annotate(a) => cmd_annotate(&a),
        Command::Validate(v) => cmd_validate(&v),
        Command::Config(s) => match s.resolve() {
            Ok(cfg) => {
                print!("{}", cfg.describe());
                EXIT_OK
            }
            Err(e) => fail(&e),
        },
    }
}

fn fail(message: &str) -> i32 {
    eprintln!("error: {message}");
    EXIT_FAILURE
}

pub fn default_summary_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}_summary.csv"))
}

fn cmd_annotate(args: &AnnotateArgs) -> i32 {
    let started = Instant::now();
    let cfg = match args.staging.resolve() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let Ok(delimiter) = u8::try_from(args.delimiter) else {
        return fail("delimiter must be a single ASCII character");
    };
    let paths = DatasetPaths {
        urine_output: args.urine_output.clone(),
        creatinine: args.creatinine.clone(),
        dialysis: args.dialysis.clone(),
        patients: args.patients.clone(),
    };
    let options = LoadOptions {
        creatinine_unit: cfg.creatinine_unit,
        delimiter,
    };
    let bundle = match load_dataset(&paths, &options) {
        Ok(b) => b,
        Err(e) => return fail(&e.to_string()),
    };
    let jobs = args.jobs.unwrap_or(0);
    let annotation = match annotate_all(&bundle, &cfg, jobs) {
        Ok(a) => a,
        Err(e) => return fail(&e.to_string()),
    };
    if let Err(e) = write_stage_records(&annotation.records, &args.output) {
        return fail(&e.to_string());
    }
    let summary_path = args.summary.clone().unwrap_or_else(|| default_summary_path(&args.output));
    let written = std::fs::File::create(&summary_path)
        .map_err(|e| format!("{}: {e}", summary_path.display()))
        .and_then(|f| write_summaries_to(&annotation.summaries, std::io::BufWriter::new(f)).map_err(|e| e.to_string()));
    if let Err(e) = written {
        return fail(&e);
    }

    eprintln!(
        "annotated {} subjects, {} hours in {:.2?}",
        annotation.summaries.len(),
        annotation.records.len(),
        started.elapsed()
    );
    eprintln!("configuration:");
    for line in cfg.describe().lines() {
        eprintln!("  {line}");
    }
    for w in &annotation.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("records: {}", args.output.display());
    eprintln!("summary: {}", summary_path.display());
    EXIT_OK
}

fn cmd_validate(args: &ValidateArgs) -> i32 {
    let result = read_label_file(&args.predictions)
        .and_then(|p| read_label_file(&args.gold).map(|g| (p, g)))
        .and_then(|(p, g)| score(&p, &g));
    let report = match result {
        Ok(r) => r,
        Err(e) => return fail(&e.to_string()),
    };
    print!("{}", report.render_table());
    if let Some(path) = &args.report {
        let written = std::fs::File::create(path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|f| report.write_csv(std::io::BufWriter::new(f)).map_err(|e| e.to_string()));
        if let Err(e) = written {
            return fail(&e);
        }
    }
    match args.min_accuracy {
        Some(bound) if !report.meets(bound) => {
            eprintln!("accuracy below {bound} in at least one category");
            EXIT_BELOW_BOUND
        }
        _ => EXIT_OK,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::BaselineMethod;

    fn staging(extra: &[&str]) -> StagingArgs {
        let mut args = vec!["kdigo", "config"];
        args.extend_from_slice(extra);
        match Cli::try_parse_from(args).unwrap().command {
            Command::Config(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn bare_config_is_the_default() {
        assert_eq!(staging(&[]).resolve().unwrap(), RunConfig::default());
    }

    #[test]
    fn flags_override() {
        let cfg = staging(&[
            "--uo-mode", "trailing-mean",
            "--baseline-stat", "mean",
            "--window-hours", "72",
            "--no-impute",
            "--creatinine-unit", "umol/L",
        ])
        .resolve()
        .unwrap();
        assert_eq!(cfg.probe.uo_mode, UoMode::TrailingMean);
        assert_eq!(cfg.probe.rel_baseline, BaselineMethod::RollingWindow { stat: WindowStat::Mean, hours: 72 });
        assert_eq!(cfg.probe.abs_baseline, BaselineMethod::RollingWindow { stat: WindowStat::Mean, hours: 72 });
        assert!(!cfg.imputation_enabled);
        assert_eq!(cfg.creatinine_unit, Unit::MicromolePerLiter);
    }

    #[test]
    fn assumed_gfr_applies_to_cockcroft_gault() {
        let cfg = staging(&["--rel-baseline", "cg", "--assumed-gfr", "90"]).resolve().unwrap();
        assert_eq!(cfg.probe.rel_baseline, BaselineMethod::cockcroft_gault(Quantity::from_units(90, Unit::MilliliterPerMinute)));
        assert_eq!(cfg.probe.abs_baseline, BaselineMethod::rolling_min(48));
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "uo_mode = \"trailing-mean\"\nmax_gap_hours = 3\nrel_baseline = \"initial:first:24\"\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = staging(&["--config", p, "--max-gap-hours", "2"]).resolve().unwrap();
        assert_eq!(cfg.probe.uo_mode, UoMode::TrailingMean);
        assert_eq!(cfg.max_gap_hours, 2);
        assert_eq!(cfg.probe.rel_baseline, BaselineMethod::InitialWindow { stat: WindowStat::First, hours: 24 });

        std::fs::write(&path, "colour = \"blue\"\n").unwrap();
        assert!(staging(&["--config", p]).resolve().is_err());
    }

    #[test]
    fn describe_round_trips_through_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let cfg = staging(&["--uo-mode", "trailing-mean", "--rel-baseline", "cg:80:0.5", "--anuria-threshold", "0.1"])
            .resolve()
            .unwrap();
        std::fs::write(&path, cfg.describe()).unwrap();
        assert_eq!(staging(&["--config", path.to_str().unwrap()]).resolve().unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(staging(&["--anuria-threshold", "0.3"]).resolve().is_err());
        assert!(staging(&["--creatinine-unit", "kg"]).resolve().is_err());
        assert!(staging(&["--rel-baseline", "median"]).resolve().is_err());
        assert!(Cli::try_parse_from(["kdigo", "config", "--uo-mode", "sometimes"]).is_err());
    }

    #[test]
    fn summary_path_default() {
        assert_eq!(default_summary_path(Path::new("/tmp/out/stages.csv")), PathBuf::from("/tmp/out/stages_summary.csv"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["kdigo", "annotate", "--urine-output", "u.csv"]), EXIT_USAGE);
        assert_eq!(run(["kdigo", "--help"]), EXIT_OK);
    }
}
