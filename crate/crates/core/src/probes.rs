//! The four KDIGO pathways as independent per-hour classifiers.
//!
//! | stage | creatinine                                  | urine output                          | dialysis |
//! |-------|---------------------------------------------|---------------------------------------|----------|
//! | 1     | ×1.5 to <×2 baseline, or rise ≥ 0.3 mg/dL   | < 0.5 mL/kg/h for ≥ 6 h               |          |
//! | 2     | ×2 to <×3 baseline                          | < 0.5 mL/kg/h for ≥ 12 h              |          |
//! | 3     | ≥ ×3 baseline, or ≥ 4.0 mg/dL               | < 0.3 mL/kg/h for ≥ 24 h, anuria ≥ 12 h | active |
//!
//! Urine thresholds are checked as `volume × 10⁶ < threshold × weight` on
//! micro-unit integers, so no rate is ever rounded before a decision.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::baseline::{baseline_at, Baseline, BaselineError, BaselineMethod};
use crate::model::fixed::MICRO;
use crate::model::{HourlyGrid, PatientProfile, Quantity, Stage, Unit};

/// Oliguria bound for stages 1 and 2, mL/kg/h.
pub const OLIGURIA_RATE: Quantity = Quantity::from_micros(500_000, Unit::MilliliterPerKgPerHour);
/// Oliguria bound for stage 3, mL/kg/h.
pub const SEVERE_OLIGURIA_RATE: Quantity =
    Quantity::from_micros(300_000, Unit::MilliliterPerKgPerHour);
pub const STAGE1_OLIGURIA_HOURS: usize = 6;
pub const STAGE2_OLIGURIA_HOURS: usize = 12;
pub const STAGE3_OLIGURIA_HOURS: usize = 24;
pub const ANURIA_HOURS: usize = 12;

/// Absolute creatinine rise for stage 1, mg/dL.
pub const ABSOLUTE_RISE: Quantity = Quantity::from_micros(300_000, Unit::MilligramPerDeciliter);
/// Creatinine level that is stage 3 irrespective of baseline, mg/dL.
pub const ABSOLUTE_STAGE3_LEVEL: Quantity =
    Quantity::from_micros(4_000_000, Unit::MilligramPerDeciliter);

/// Default rolling windows for the creatinine baselines, in hours.
pub const DEFAULT_RELATIVE_WINDOW_HOURS: u32 = 168;
pub const DEFAULT_ABSOLUTE_WINDOW_HOURS: u32 = 48;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeConfigError {
    #[error("anuria threshold must be a mL/kg/h value in [0, 0.3), got {0}")]
    AnuriaThreshold(Quantity),
    #[error("unknown urine-output mode {0:?} (expected strict or trailing-mean)")]
    UnknownUoMode(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// How oliguria durations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UoMode {
    /// Every hour of the run must be below the threshold.
    #[default]
    StrictConsecutive,
    /// The mean rate over the trailing window must be below the threshold.
    TrailingMean,
}

impl UoMode {
    pub fn name(self) -> &'static str {
        match self {
            UoMode::StrictConsecutive => "strict",
            UoMode::TrailingMean => "trailing-mean",
        }
    }
}

impl fmt::Display for UoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UoMode {
    type Err = ProbeConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "strict" | "strict-consecutive" | "consecutive" => Ok(UoMode::StrictConsecutive),
            "trailing-mean" | "mean" | "trailing" => Ok(UoMode::TrailingMean),
            _ => Err(ProbeConfigError::UnknownUoMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbeConfig {
    pub uo_mode: UoMode,
    /// Hours with a rate at or below this count as anuric.
    pub anuria_threshold: Quantity,
    pub rel_baseline: BaselineMethod,
    pub abs_baseline: BaselineMethod,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            uo_mode: UoMode::StrictConsecutive,
            anuria_threshold: Quantity::from_micros(0, Unit::MilliliterPerKgPerHour),
            rel_baseline: BaselineMethod::rolling_min(DEFAULT_RELATIVE_WINDOW_HOURS),
            abs_baseline: BaselineMethod::rolling_min(DEFAULT_ABSOLUTE_WINDOW_HOURS),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeConfigError> {
        let a = self.anuria_threshold;
        if a.unit() != Unit::MilliliterPerKgPerHour
            || a.raw() < 0
            || a.raw() >= SEVERE_OLIGURIA_RATE.raw()
        {
            return Err(ProbeConfigError::AnuriaThreshold(a));
        }
        self.rel_baseline.validate()?;
        self.abs_baseline.validate()?;
        Ok(())
    }
}

/// Exact `volume / weight < threshold` (strict) or `<=` on micro-units.
fn rate_compare(volume: Quantity, weight: Quantity, threshold: Quantity, inclusive: bool) -> bool {
    let lhs = i128::from(volume.raw()) * i128::from(MICRO);
    let rhs = i128::from(threshold.raw()) * i128::from(weight.raw());
    if inclusive {
        lhs <= rhs
    } else {
        lhs < rhs
    }
}

fn below(grid: &HourlyGrid, i: usize, threshold: Quantity) -> bool {
    grid.cell(i)
        .uo_ml()
        .is_some_and(|v| rate_compare(v, grid.weight(), threshold, false))
}

fn anuric(grid: &HourlyGrid, i: usize, threshold: Quantity) -> bool {
    grid.cell(i)
        .uo_ml()
        .is_some_and(|v| rate_compare(v, grid.weight(), threshold, true))
}

/// Exact `sum(volumes) / (weight × hours) < threshold`.
fn window_mean_below(volume_sum: i128, hours: usize, weight: Quantity, threshold: Quantity) -> bool {
    volume_sum * i128::from(MICRO)
        < i128::from(threshold.raw()) * i128::from(weight.raw()) * hours as i128
}

fn stage_from_runs(n05: usize, n03: usize, n_anuria: usize) -> Stage {
    if n03 >= STAGE3_OLIGURIA_HOURS || n_anuria >= ANURIA_HOURS {
        Stage::Three
    } else if n05 >= STAGE2_OLIGURIA_HOURS {
        Stage::Two
    } else if n05 >= STAGE1_OLIGURIA_HOURS {
        Stage::One
    } else {
        Stage::Zero
    }
}

/// Urine-output stage at hour `t`. `Unknown` when the hour has no urine
/// value; a missing hour also ends every run that crosses it.
///
/// Looks back at most 24 hours, so a single call is cheap. Use
/// [`uo_stages`] to stage a whole grid.
pub fn uo_stage(grid: &HourlyGrid, t: usize, cfg: &ProbeConfig) -> Stage {
    assert!(t < grid.len(), "hour {t} outside grid of {} hours", grid.len());
    if grid.cell(t).uo_ml().is_none() {
        return Stage::Unknown;
    }
    let run = |pred: &dyn Fn(usize) -> bool, cap: usize| {
        (0..=t).rev().take(cap).take_while(|&i| pred(i)).count()
    };
    let n_anuria = run(&|i| anuric(grid, i, cfg.anuria_threshold), ANURIA_HOURS);

    match cfg.uo_mode {
        UoMode::StrictConsecutive => {
            let n05 = run(&|i| below(grid, i, OLIGURIA_RATE), STAGE2_OLIGURIA_HOURS);
            let n03 = run(&|i| below(grid, i, SEVERE_OLIGURIA_RATE), STAGE3_OLIGURIA_HOURS);
            stage_from_runs(n05, n03, n_anuria)
        }
        UoMode::TrailingMean => {
            let window_below = |hours: usize, threshold: Quantity| {
                if t + 1 < hours {
                    return false;
                }
                let mut sum = 0i128;
                for i in t + 1 - hours..=t {
                    match grid.cell(i).uo_ml() {
                        Some(v) => sum += i128::from(v.raw()),
                        None => return false,
                    }
                }
                window_mean_below(sum, hours, grid.weight(), threshold)
            };
            if window_below(STAGE3_OLIGURIA_HOURS, SEVERE_OLIGURIA_RATE) || n_anuria >= ANURIA_HOURS {
                Stage::Three
            } else if window_below(STAGE2_OLIGURIA_HOURS, OLIGURIA_RATE) {
                Stage::Two
            } else if window_below(STAGE1_OLIGURIA_HOURS, OLIGURIA_RATE) {
                Stage::One
            } else {
                Stage::Zero
            }
        }
    }
}

/// Urine-output stages for every hour of `grid`, in one linear pass:
/// run-length counters in strict mode, prefix sums in trailing-mean mode.
pub fn uo_stages(grid: &HourlyGrid, cfg: &ProbeConfig) -> Vec<Stage> {
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    let (mut n05, mut n03, mut n_anuria) = (0usize, 0usize, 0usize);

    // prefix sums of volume and of missing hours, for trailing means
    let mut volume_prefix = vec![0i128; n + 1];
    let mut missing_prefix = vec![0usize; n + 1];
    if cfg.uo_mode == UoMode::TrailingMean {
        for (i, c) in grid.cells().iter().enumerate() {
            volume_prefix[i + 1] = volume_prefix[i] + c.uo_ml().map_or(0, |v| i128::from(v.raw()));
            missing_prefix[i + 1] = missing_prefix[i] + usize::from(c.uo_ml().is_none());
        }
    }

    for t in 0..n {
        let Some(volume) = grid.cell(t).uo_ml() else {
            n05 = 0;
            n03 = 0;
            n_anuria = 0;
            out.push(Stage::Unknown);
            continue;
        };
        let weight = grid.weight();
        n05 = if rate_compare(volume, weight, OLIGURIA_RATE, false) { n05 + 1 } else { 0 };
        n03 = if rate_compare(volume, weight, SEVERE_OLIGURIA_RATE, false) { n03 + 1 } else { 0 };
        n_anuria = if rate_compare(volume, weight, cfg.anuria_threshold, true) {
            n_anuria + 1
        } else {
            0
        };

        let stage = match cfg.uo_mode {
            UoMode::StrictConsecutive => stage_from_runs(n05, n03, n_anuria),
            UoMode::TrailingMean => {
                let window_below = |hours: usize, threshold: Quantity| {
                    if t + 1 < hours {
                        return false;
                    }
                    let lo = t + 1 - hours;
                    missing_prefix[t + 1] == missing_prefix[lo]
                        && window_mean_below(
                            volume_prefix[t + 1] - volume_prefix[lo],
                            hours,
                            weight,
                            threshold,
                        )
                };
                if window_below(STAGE3_OLIGURIA_HOURS, SEVERE_OLIGURIA_RATE)
                    || n_anuria >= ANURIA_HOURS
                {
                    Stage::Three
                } else if window_below(STAGE2_OLIGURIA_HOURS, OLIGURIA_RATE) {
                    Stage::Two
                } else if window_below(STAGE1_OLIGURIA_HOURS, OLIGURIA_RATE) {
                    Stage::One
                } else {
                    Stage::Zero
                }
            }
        };
        out.push(stage);
    }
    out
}

/// Absolute creatinine stage from the hour's value and its baseline.
///
/// A value of 4.0 mg/dL or more is stage 3 whether or not a baseline
/// exists. Otherwise a rise of at least 0.3 mg/dL over the baseline is
/// stage 1.
pub fn classify_absolute(scr: Option<Quantity>, baseline: Option<&Baseline>) -> Stage {
    let Some(c) = scr else {
        return Stage::Unknown;
    };
    if c.raw() >= ABSOLUTE_STAGE3_LEVEL.raw() {
        return Stage::Three;
    }
    let Some(b) = baseline else {
        return Stage::Unknown;
    };
    let rise = c.exact() - b.exact();
    if rise >= ABSOLUTE_RISE.exact() {
        Stage::One
    } else {
        Stage::Zero
    }
}

/// Relative creatinine stage: ratio bands [1.5, 2), [2, 3), [3, ∞).
pub fn classify_relative(scr: Option<Quantity>, baseline: Option<&Baseline>) -> Stage {
    let (Some(c), Some(b)) = (scr, baseline) else {
        return Stage::Unknown;
    };
    let c = c.exact();
    let b = b.exact();
    let times = |n: i128, d: i128| b * crate::model::fixed::Exact::new(n, d);
    if c >= times(3, 1) {
        Stage::Three
    } else if c >= times(2, 1) {
        Stage::Two
    } else if c >= times(3, 2) {
        Stage::One
    } else {
        Stage::Zero
    }
}

pub fn abs_scr_stage(
    grid: &HourlyGrid,
    t: usize,
    cfg: &ProbeConfig,
    profile: &PatientProfile,
) -> Result<Stage, BaselineError> {
    let b = baseline_at(grid, t, &cfg.abs_baseline, profile)?;
    Ok(classify_absolute(grid.cell(t).scr(), b.as_ref()))
}

pub fn rel_scr_stage(
    grid: &HourlyGrid,
    t: usize,
    cfg: &ProbeConfig,
    profile: &PatientProfile,
) -> Result<Stage, BaselineError> {
    let b = baseline_at(grid, t, &cfg.rel_baseline, profile)?;
    Ok(classify_relative(grid.cell(t).scr(), b.as_ref()))
}

/// Stage 3 while dialysis is active.
pub fn dialysis_stage(grid: &HourlyGrid, t: usize) -> Stage {
    match grid.cell(t).dialysis_active() {
        Some(true) => Stage::Three,
        Some(false) => Stage::Zero,
        None => Stage::Unknown,
    }
}
