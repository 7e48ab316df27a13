use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use super::fixed::{self, format_micros, parse_micros, Exact, FixedParseError};
use super::ModelError;

/// Micromoles per litre of creatinine in one milligram per decilitre.
/// Expressed as the integer pair 884/10 so conversions stay exact.
const CREATININE_UMOL_PER_MG_NUM: i128 = 884;
const CREATININE_UMOL_PER_MG_DEN: i128 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Milliliter,
    MilligramPerDeciliter,
    MicromolePerLiter,
    MilliliterPerKgPerHour,
    MilliliterPerMinute,
    Kilogram,
    Centimeter,
    Year,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Milliliter => "mL",
            Unit::MilligramPerDeciliter => "mg/dL",
            Unit::MicromolePerLiter => "µmol/L",
            Unit::MilliliterPerKgPerHour => "mL/kg/h",
            Unit::MilliliterPerMinute => "mL/min",
            Unit::Kilogram => "kg",
            Unit::Centimeter => "cm",
            Unit::Year => "years",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['µ', 'μ'], "u");
        let unit = match norm.as_str() {
            "ml" => Unit::Milliliter,
            "mg/dl" | "mgdl" | "mg_dl" => Unit::MilligramPerDeciliter,
            "umol/l" | "umoll" | "umol_l" | "umol" => Unit::MicromolePerLiter,
            "ml/kg/h" | "mlkgh" => Unit::MilliliterPerKgPerHour,
            "ml/min" | "mlmin" => Unit::MilliliterPerMinute,
            "kg" => Unit::Kilogram,
            "cm" => Unit::Centimeter,
            "years" | "year" | "y" => Unit::Year,
            _ => return Err(ModelError::UnknownUnit(s.to_string())),
        };
        Ok(unit)
    }
}

/// A measured value in fixed-point micro-units with its unit.
///
/// Ordering is only defined between quantities of the same unit;
/// `partial_cmp` returns `None` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quantity {
    raw: i64,
    unit: Unit,
}

impl Quantity {
    pub const fn from_micros(raw: i64, unit: Unit) -> Self {
        Quantity { raw, unit }
    }

    /// Whole units, e.g. `Quantity::from_units(70, Unit::Kilogram)`.
    pub const fn from_units(units: i64, unit: Unit) -> Self {
        Quantity {
            raw: units * fixed::MICRO,
            unit,
        }
    }

    pub fn parse(text: &str, unit: Unit) -> Result<Self, FixedParseError> {
        Ok(Quantity {
            raw: parse_micros(text)?,
            unit,
        })
    }

    /// Nearest micro-unit to an exact rational value.
    pub fn from_exact(value: &Exact, unit: Unit) -> Self {
        Quantity {
            raw: fixed::round_exact(value),
            unit,
        }
    }

    pub const fn raw(self) -> i64 {
        self.raw
    }

    pub const fn unit(self) -> Unit {
        self.unit
    }

    pub fn exact(self) -> Exact {
        fixed::exact(self.raw)
    }

    /// Lossy, for display and statistics only.
    pub fn to_f64(self) -> f64 {
        self.raw as f64 / fixed::MICRO as f64
    }

    pub const fn is_positive(self) -> bool {
        self.raw > 0
    }
}

impl PartialOrd for Quantity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.unit == other.unit).then(|| self.raw.cmp(&other.raw))
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_micros(self.raw), self.unit)
    }
}

/// Converts `q` into `target`. Creatinine converts between µmol/L and mg/dL
/// with the factor 88.4; every other pair must be an identity.
pub fn convert_unit(q: Quantity, target: Unit) -> Result<Quantity, ModelError> {
    use Unit::{MicromolePerLiter as Umol, MilligramPerDeciliter as MgDl};

    let raw = i128::from(q.raw);
    let converted = match (q.unit, target) {
        (from, to) if from == to => return Ok(q),
        (Umol, MgDl) => Exact::new(
            raw * CREATININE_UMOL_PER_MG_DEN,
            CREATININE_UMOL_PER_MG_NUM,
        ),
        (MgDl, Umol) => Exact::new(
            raw * CREATININE_UMOL_PER_MG_NUM,
            CREATININE_UMOL_PER_MG_DEN,
        ),
        (from, to) => return Err(ModelError::UndefinedConversion { from, to }),
    };
    Ok(Quantity::from_exact(&converted, target))
}
