//! Creatinine baselines.
//!
//! A baseline is the reference creatinine each hour's value is compared
//! against. Four strategies are supported: a constant, a statistic over a
//! window at the start of the stay, a statistic over a rolling window of
//! preceding hours, and a value back-calculated from an assumed GFR with
//! the Cockcroft-Gault formula.
//!
//! Baselines are exact rationals in micro mg/dL. A rolling mean over three
//! values or a Cockcroft-Gault quotient is never rounded before it is
//! compared with a threshold.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::fixed::{self, format_micros, parse_micros, Exact, MICRO};
use crate::model::{HourlyGrid, PatientProfile, Quantity, Sex, SubjectId, Unit};

/// Default assumed GFR for the Cockcroft-Gault baseline, mL/min.
pub const DEFAULT_ASSUMED_GFR_ML_MIN: i64 = 75;

/// Default share of excess weight added back to ideal body weight.
pub const DEFAULT_WEIGHT_ADJUSTMENT: Fraction = Fraction(400_000);

const CG_AGE_OFFSET_YEARS: i128 = 140;
const CG_DIVISOR: i128 = 72;
/// Female factor 0.85 as 85/100.
const CG_FEMALE_NUM: i128 = 85;
const CG_FEMALE_DEN: i128 = 100;

/// Ideal body weight base, micro-kg.
const IBW_BASE_MALE_UKG: i128 = 50_000_000;
const IBW_BASE_FEMALE_UKG: i128 = 45_500_000;
/// Reference height, micro-cm.
const IBW_REFERENCE_HEIGHT_UCM: i128 = 152_400_000;
/// 0.9 kg per cm above the reference height, as 9/10.
const IBW_KG_PER_CM_NUM: i128 = 9;
const IBW_KG_PER_CM_DEN: i128 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("subject {subject}: Cockcroft-Gault baseline needs {missing}")]
    MissingDemographics {
        subject: SubjectId,
        missing: &'static str,
    },
    #[error("invalid baseline method: {0}")]
    InvalidMethod(String),
}

/// Dimensionless value in micro-units, e.g. `0.4` is `Fraction(400_000)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(pub i64);

impl Fraction {
    fn exact(self) -> Exact {
        Exact::new(i128::from(self.0), i128::from(MICRO))
    }
}

impl FromStr for Fraction {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_micros(s)
            .map(Fraction)
            .map_err(|e| BaselineError::InvalidMethod(format!("fraction {s:?}: {e}")))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_micros(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowStat {
    Min,
    Mean,
    First,
}

impl WindowStat {
    pub fn name(self) -> &'static str {
        match self {
            WindowStat::Min => "min",
            WindowStat::Mean => "mean",
            WindowStat::First => "first",
        }
    }
}

impl FromStr for WindowStat {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min" | "minimum" => Ok(WindowStat::Min),
            "mean" | "avg" | "average" => Ok(WindowStat::Mean),
            "first" => Ok(WindowStat::First),
            other => Err(BaselineError::InvalidMethod(format!(
                "unknown window statistic {other:?} (expected min, mean or first)"
            ))),
        }
    }
}

impl fmt::Display for WindowStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    /// A known value, e.g. a pre-operative creatinine, in mg/dL.
    FixedValue(Quantity),
    /// Statistic over hours `[0, hours)` of the grid.
    InitialWindow { stat: WindowStat, hours: u32 },
    /// Statistic over hours `[t - hours, t)`, excluding the current hour.
    RollingWindow { stat: WindowStat, hours: u32 },
    /// Creatinine implied by `assumed_gfr` (mL/min). Uses adjusted body
    /// weight when the profile has a height.
    CockcroftGault {
        assumed_gfr: Quantity,
        weight_adjustment: Fraction,
    },
}

impl BaselineMethod {
    pub fn rolling_min(hours: u32) -> Self {
        BaselineMethod::RollingWindow {
            stat: WindowStat::Min,
            hours,
        }
    }

    pub fn cockcroft_gault(assumed_gfr: Quantity) -> Self {
        BaselineMethod::CockcroftGault {
            assumed_gfr,
            weight_adjustment: DEFAULT_WEIGHT_ADJUSTMENT,
        }
    }

    pub fn is_cockcroft_gault(&self) -> bool {
        matches!(self, BaselineMethod::CockcroftGault { .. })
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |msg: String| Err(BaselineError::InvalidMethod(msg));
        match *self {
            BaselineMethod::FixedValue(c) => {
                if c.unit() != Unit::MilligramPerDeciliter || !c.is_positive() {
                    return bad(format!("fixed baseline must be a positive mg/dL value, got {c}"));
                }
            }
            BaselineMethod::InitialWindow { hours, .. }
            | BaselineMethod::RollingWindow { hours, .. } => {
                if hours < 1 {
                    return bad("window length must be at least one hour".into());
                }
            }
            BaselineMethod::CockcroftGault {
                assumed_gfr,
                weight_adjustment,
            } => {
                if assumed_gfr.unit() != Unit::MilliliterPerMinute || !assumed_gfr.is_positive() {
                    return bad(format!("assumed GFR must be a positive mL/min value, got {assumed_gfr}"));
                }
                if !(0..=MICRO).contains(&weight_adjustment.0) {
                    return bad(format!("weight adjustment must lie in [0, 1], got {weight_adjustment}"));
                }
            }
        }
        Ok(())
    }

    /// Replaces the statistic of window methods; other methods are returned
    /// unchanged.
    pub fn with_stat(self, new_stat: WindowStat) -> Self {
        match self {
            BaselineMethod::InitialWindow { hours, .. } => BaselineMethod::InitialWindow {
                stat: new_stat,
                hours,
            },
            BaselineMethod::RollingWindow { hours, .. } => BaselineMethod::RollingWindow {
                stat: new_stat,
                hours,
            },
            other => other,
        }
    }

    pub fn with_window_hours(self, new_hours: u32) -> Self {
        match self {
            BaselineMethod::InitialWindow { stat, .. } => BaselineMethod::InitialWindow {
                stat,
                hours: new_hours,
            },
            BaselineMethod::RollingWindow { stat, .. } => BaselineMethod::RollingWindow {
                stat,
                hours: new_hours,
            },
            other => other,
        }
    }

    pub fn with_assumed_gfr(self, gfr: Quantity) -> Self {
        match self {
            BaselineMethod::CockcroftGault {
                weight_adjustment, ..
            } => BaselineMethod::CockcroftGault {
                assumed_gfr: gfr,
                weight_adjustment,
            },
            other => other,
        }
    }

    /// Parses the compact textual form:
    ///
    /// ```text
    /// rolling[:STAT[:HOURS]]   initial[:STAT[:HOURS]]
    /// fixed:MG_DL              cockcroft-gault[:GFR[:ADJUSTMENT]]
    /// ```
    ///
    /// Omitted statistics default to `min`, omitted window lengths to
    /// `default_hours`.
    pub fn parse_with_default_hours(spec: &str, default_hours: u32) -> Result<Self, BaselineError> {
        let bad = |msg: String| BaselineError::InvalidMethod(msg);
        let parts: Vec<&str> = spec.trim().split(':').map(str::trim).collect();
        let kind = parts[0].to_ascii_lowercase();

        let window = |parts: &[&str]| -> Result<(WindowStat, u32), BaselineError> {
            if parts.len() > 3 {
                return Err(bad(format!("too many fields in {spec:?}")));
            }
            let stat = match parts.get(1) {
                Some(s) if !s.is_empty() => s.parse()?,
                _ => WindowStat::Min,
            };
            let hours = match parts.get(2) {
                Some(h) if !h.is_empty() => h
                    .parse()
                    .map_err(|_| bad(format!("window length {h:?} is not a whole number of hours")))?,
                _ => default_hours,
            };
            Ok((stat, hours))
        };

        let method = match kind.as_str() {
            "rolling" | "rolling_window" | "rolling-window" => {
                let (stat, hours) = window(&parts)?;
                BaselineMethod::RollingWindow { stat, hours }
            }
            "initial" | "initial_window" | "initial-window" => {
                let (stat, hours) = window(&parts)?;
                BaselineMethod::InitialWindow { stat, hours }
            }
            "fixed" | "fixed_value" | "fixed-value" => {
                let [_, value] = parts[..] else {
                    return Err(bad(format!("expected fixed:VALUE, got {spec:?}")));
                };
                let c = Quantity::parse(value, Unit::MilligramPerDeciliter)
                    .map_err(|e| bad(format!("fixed value {value:?}: {e}")))?;
                BaselineMethod::FixedValue(c)
            }
            "cockcroft-gault" | "cockcroft_gault" | "cg" => {
                if parts.len() > 3 {
                    return Err(bad(format!("too many fields in {spec:?}")));
                }
                let assumed_gfr = match parts.get(1) {
                    Some(g) if !g.is_empty() => Quantity::parse(g, Unit::MilliliterPerMinute)
                        .map_err(|e| bad(format!("assumed GFR {g:?}: {e}")))?,
                    _ => Quantity::from_units(DEFAULT_ASSUMED_GFR_ML_MIN, Unit::MilliliterPerMinute),
                };
                let weight_adjustment = match parts.get(2) {
                    Some(a) if !a.is_empty() => a.parse()?,
                    _ => DEFAULT_WEIGHT_ADJUSTMENT,
                };
                BaselineMethod::CockcroftGault {
                    assumed_gfr,
                    weight_adjustment,
                }
            }
            other => return Err(bad(format!("unknown baseline kind {other:?}"))),
        };
        method.validate()?;
        Ok(method)
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineMethod::FixedValue(c) => write!(f, "fixed:{}", format_micros(c.raw())),
            BaselineMethod::InitialWindow { stat, hours } => write!(f, "initial:{stat}:{hours}"),
            BaselineMethod::RollingWindow { stat, hours } => write!(f, "rolling:{stat}:{hours}"),
            BaselineMethod::CockcroftGault {
                assumed_gfr,
                weight_adjustment,
            } => write!(
                f,
                "cockcroft-gault:{}:{weight_adjustment}",
                format_micros(assumed_gfr.raw())
            ),
        }
    }
}

/// An exact creatinine baseline in micro mg/dL.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Baseline(Exact);

impl Baseline {
    pub fn from_quantity(q: Quantity) -> Self {
        Baseline(q.exact())
    }

    pub fn exact(&self) -> &Exact {
        &self.0
    }

    /// Rounded to the nearest micro mg/dL, for reporting.
    pub fn to_quantity(&self) -> Quantity {
        Quantity::from_exact(&self.0, Unit::MilligramPerDeciliter)
    }
}

/// Baseline for hour `t` of `grid`. `Ok(None)` means the method has no
/// value for that hour (an empty window).
pub fn baseline_at(
    grid: &HourlyGrid,
    t: usize,
    method: &BaselineMethod,
    profile: &PatientProfile,
) -> Result<Option<Baseline>, BaselineError> {
    assert!(t < grid.len(), "hour {t} outside grid of {} hours", grid.len());
    let scr_in = |range: std::ops::Range<usize>| {
        grid.cells()[range]
            .iter()
            .filter_map(|c| c.scr())
            .map(|q| q.raw())
    };
    match *method {
        BaselineMethod::FixedValue(c) => Ok(Some(Baseline::from_quantity(c))),
        BaselineMethod::InitialWindow { stat, hours } => {
            let end = (hours as usize).min(grid.len());
            Ok(window_stat(stat, scr_in(0..end)))
        }
        BaselineMethod::RollingWindow { stat, hours } => {
            let begin = t.saturating_sub(hours as usize);
            Ok(window_stat(stat, scr_in(begin..t)))
        }
        BaselineMethod::CockcroftGault {
            assumed_gfr,
            weight_adjustment,
        } => cockcroft_gault_baseline(profile, assumed_gfr, weight_adjustment).map(Some),
    }
}

fn window_stat(stat: WindowStat, mut values: impl Iterator<Item = i64>) -> Option<Baseline> {
    let value = match stat {
        WindowStat::First => fixed::exact(values.next()?),
        WindowStat::Min => fixed::exact(values.min()?),
        WindowStat::Mean => {
            let (sum, n) = values.fold((0i128, 0i128), |(s, n), v| (s + i128::from(v), n + 1));
            if n == 0 {
                return None;
            }
            Exact::new(sum, n)
        }
    };
    Some(Baseline(value))
}

/// Baselines for every hour of `grid`, in one pass.
///
/// Rolling windows are maintained incrementally (a monotone deque for the
/// minimum, a running sum for the mean, a queue of present hours for the
/// first value), so the cost is linear in the grid length regardless of
/// window size. Agrees with [`baseline_at`] hour by hour.
pub fn baselines_for_grid(
    grid: &HourlyGrid,
    method: &BaselineMethod,
    profile: &PatientProfile,
) -> Result<Vec<Option<Baseline>>, BaselineError> {
    let n = grid.len();
    match *method {
        BaselineMethod::RollingWindow { stat, hours } => Ok(rolling(grid, stat, hours as usize)),
        _ if n == 0 => Ok(Vec::new()),
        _ => {
            // every other method yields the same value for every hour
            let value = baseline_at(grid, 0, method, profile)?;
            Ok(vec![value; n])
        }
    }
}

fn rolling(grid: &HourlyGrid, stat: WindowStat, hours: usize) -> Vec<Option<Baseline>> {
    let cells = grid.cells();
    let mut out = Vec::with_capacity(cells.len());
    // (hour index, value) for present hours inside the window
    let mut present: VecDeque<(usize, i64)> = VecDeque::new();
    // increasing values; candidate minima
    let mut minima: VecDeque<(usize, i64)> = VecDeque::new();
    let mut sum: i128 = 0;

    for t in 0..cells.len() {
        if t > 0 {
            if let Some(q) = cells[t - 1].scr() {
                let v = q.raw();
                present.push_back((t - 1, v));
                sum += i128::from(v);
                while minima.back().is_some_and(|&(_, m)| m >= v) {
                    minima.pop_back();
                }
                minima.push_back((t - 1, v));
            }
        }
        let begin = t.saturating_sub(hours);
        while present.front().is_some_and(|&(i, _)| i < begin) {
            let (_, v) = present.pop_front().expect("checked non-empty");
            sum -= i128::from(v);
        }
        while minima.front().is_some_and(|&(i, _)| i < begin) {
            minima.pop_front();
        }

        let value = match stat {
            WindowStat::First => present.front().map(|&(_, v)| fixed::exact(v)),
            WindowStat::Min => minima.front().map(|&(_, v)| fixed::exact(v)),
            WindowStat::Mean => {
                (!present.is_empty()).then(|| Exact::new(sum, present.len() as i128))
            }
        };
        out.push(value.map(Baseline));
    }
    out
}

/// Ideal body weight plus `adjustment` of the excess over it, in kg.
/// Patients at or below ideal weight keep their actual weight.
fn adjusted_weight_kg(
    profile: &PatientProfile,
    adjustment: Fraction,
) -> Result<Exact, BaselineError> {
    let height = profile.height().ok_or_else(|| missing(profile, "height"))?;
    let sex = profile.sex().ok_or_else(|| missing(profile, "sex"))?;

    let base = match sex {
        Sex::Male => IBW_BASE_MALE_UKG,
        Sex::Female => IBW_BASE_FEMALE_UKG,
    };
    let excess_ucm = (i128::from(height.raw()) - IBW_REFERENCE_HEIGHT_UCM).max(0);
    let ideal_ukg = Exact::from_integer(base)
        + Exact::new(excess_ucm * IBW_KG_PER_CM_NUM, IBW_KG_PER_CM_DEN);
    let actual_ukg = profile.weight().exact();

    let weight_ukg = if actual_ukg > ideal_ukg {
        ideal_ukg + adjustment.exact() * (actual_ukg - ideal_ukg)
    } else {
        actual_ukg
    };
    Ok(weight_ukg / Exact::from_integer(i128::from(MICRO)))
}

/// Adjusted body weight with the default 0.4 correction, rounded to the
/// nearest micro-kg. Requires height and sex.
pub fn adjusted_body_weight(profile: &PatientProfile) -> Result<Quantity, BaselineError> {
    adjusted_body_weight_with(profile, DEFAULT_WEIGHT_ADJUSTMENT)
}

pub fn adjusted_body_weight_with(
    profile: &PatientProfile,
    adjustment: Fraction,
) -> Result<Quantity, BaselineError> {
    let kg = adjusted_weight_kg(profile, adjustment)?;
    Ok(Quantity::from_exact(
        &(kg * Exact::from_integer(i128::from(MICRO))),
        Unit::Kilogram,
    ))
}

fn missing(profile: &PatientProfile, what: &'static str) -> BaselineError {
    BaselineError::MissingDemographics {
        subject: profile.subject_id().clone(),
        missing: what,
    }
}

/// `(140 - age) × weight (× 0.85 if female)`, the shared numerator of the
/// clearance formula and its inverse. Age counts whole years only.
fn cockcroft_gault_numerator(
    profile: &PatientProfile,
    adjustment: Fraction,
) -> Result<Exact, BaselineError> {
    let age = profile.age().ok_or_else(|| missing(profile, "age"))?;
    let sex = profile.sex().ok_or_else(|| missing(profile, "sex"))?;
    let whole_years = i128::from(age.raw() / MICRO);

    let weight_kg = if profile.height().is_some() {
        adjusted_weight_kg(profile, adjustment)?
    } else {
        profile.weight().exact() / Exact::from_integer(i128::from(MICRO))
    };
    let sex_factor = match sex {
        Sex::Female => Exact::new(CG_FEMALE_NUM, CG_FEMALE_DEN),
        Sex::Male => Exact::from_integer(1),
    };
    Ok(Exact::from_integer(CG_AGE_OFFSET_YEARS - whole_years) * weight_kg * sex_factor)
}

/// Creatinine (exact, micro mg/dL) that yields `assumed_gfr` under
/// Cockcroft-Gault for this patient.
pub fn cockcroft_gault_baseline(
    profile: &PatientProfile,
    assumed_gfr: Quantity,
    adjustment: Fraction,
) -> Result<Baseline, BaselineError> {
    let numerator = cockcroft_gault_numerator(profile, adjustment)?;
    // gfr_real = raw / 1e6; scr_micro = numerator / (72 × gfr_real) × 1e6
    let micro_sq = i128::from(MICRO) * i128::from(MICRO);
    let scr = numerator * Exact::new(micro_sq, CG_DIVISOR * i128::from(assumed_gfr.raw()));
    Ok(Baseline(scr))
}

/// Exact clearance in micro mL/min for an exact creatinine in micro mg/dL.
pub fn cockcroft_gault_clearance_exact(
    scr: &Exact,
    profile: &PatientProfile,
    adjustment: Fraction,
) -> Result<Exact, BaselineError> {
    let numerator = cockcroft_gault_numerator(profile, adjustment)?;
    let micro_sq = Exact::from_integer(i128::from(MICRO) * i128::from(MICRO));
    Ok(numerator * micro_sq / (Exact::from_integer(CG_DIVISOR) * scr))
}

/// Creatinine clearance in mL/min, rounded to the nearest micro-unit.
/// Uses the same weight as the baseline: adjusted body weight when a
/// height is on file, actual weight otherwise.
pub fn cockcroft_gault_clearance(
    scr: Quantity,
    profile: &PatientProfile,
) -> Result<Quantity, BaselineError> {
    if scr.unit() != Unit::MilligramPerDeciliter || !scr.is_positive() {
        return Err(BaselineError::InvalidMethod(format!(
            "creatinine must be a positive mg/dL value, got {scr}"
        )));
    }
    let exact = cockcroft_gault_clearance_exact(&scr.exact(), profile, DEFAULT_WEIGHT_ADJUSTMENT)?;
    Ok(Quantity::from_exact(&exact, Unit::MilliliterPerMinute))
}
