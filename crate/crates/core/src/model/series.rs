use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDateTime;

use super::{ModelError, Quantity, Unit};

/// Opaque subject identifier. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectId(Arc<str>);

impl SubjectId {
    pub fn new(id: impl AsRef<str>) -> Self {
        SubjectId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signal {
    UrineOutput,
    Creatinine,
    Dialysis,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::UrineOutput, Signal::Creatinine, Signal::Dialysis];

    pub fn name(self) -> &'static str {
        match self {
            Signal::UrineOutput => "urine_output",
            Signal::Creatinine => "creatinine",
            Signal::Dialysis => "dialysis",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reading {
    Amount(Quantity),
    Flag(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub timestamp: NaiveDateTime,
    pub reading: Reading,
}

impl Observation {
    pub fn amount(timestamp: NaiveDateTime, q: Quantity) -> Self {
        Observation {
            timestamp,
            reading: Reading::Amount(q),
        }
    }

    pub fn flag(timestamp: NaiveDateTime, active: bool) -> Self {
        Observation {
            timestamp,
            reading: Reading::Flag(active),
        }
    }
}

/// Raw timestamped measurements of one signal for one subject.
///
/// Construction checks that timestamps strictly increase and that each
/// reading fits the signal: urine output is a non-negative mL amount,
/// creatinine a positive mg/dL amount, dialysis a flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    subject_id: SubjectId,
    signal: Signal,
    points: Vec<Observation>,
}

impl ObservationSeries {
    pub fn new(
        subject_id: SubjectId,
        signal: Signal,
        points: Vec<Observation>,
    ) -> Result<Self, ModelError> {
        let reject = |timestamp: NaiveDateTime, reason: String| ModelError::InvalidObservation {
            subject: subject_id.clone(),
            signal,
            timestamp,
            reason,
        };

        for pair in points.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(reject(
                    pair[1].timestamp,
                    "timestamps must strictly increase".into(),
                ));
            }
        }
        for p in &points {
            match (signal, p.reading) {
                (Signal::UrineOutput, Reading::Amount(q)) => {
                    if q.unit() != Unit::Milliliter {
                        return Err(reject(p.timestamp, format!("urine output in {}", q.unit())));
                    }
                    if q.raw() < 0 {
                        return Err(reject(p.timestamp, "negative urine output".into()));
                    }
                }
                (Signal::Creatinine, Reading::Amount(q)) => {
                    if q.unit() != Unit::MilligramPerDeciliter {
                        return Err(reject(p.timestamp, format!("creatinine in {}", q.unit())));
                    }
                    if !q.is_positive() {
                        return Err(reject(p.timestamp, "non-positive creatinine".into()));
                    }
                }
                (Signal::Dialysis, Reading::Flag(_)) => {}
                _ => return Err(reject(p.timestamp, "reading kind does not match signal".into())),
            }
        }

        Ok(ObservationSeries {
            subject_id,
            signal,
            points,
        })
    }

    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn signal(&self) -> Signal {
        self.signal
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<NaiveDateTime> {
        self.points.first().map(|p| p.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<NaiveDateTime> {
        self.points.last().map(|p| p.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sex {
    Female,
    Male,
}

impl FromStr for Sex {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Sex::Female),
            "m" | "male" => Ok(Sex::Male),
            _ => Err(ModelError::InvalidSex(s.to_string())),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Female => "f",
            Sex::Male => "m",
        })
    }
}

pub const MIN_ADULT_AGE_YEARS: i64 = 18;
pub const MAX_AGE_YEARS: i64 = 130;

/// Demographics needed for weight-normalised urine rates and the
/// Cockcroft-Gault baseline. Patients younger than 18 are rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientProfile {
    subject_id: SubjectId,
    weight: Quantity,
    height: Option<Quantity>,
    age: Option<Quantity>,
    sex: Option<Sex>,
}

impl PatientProfile {
    pub fn new(
        subject_id: SubjectId,
        weight: Quantity,
        height: Option<Quantity>,
        age: Option<Quantity>,
        sex: Option<Sex>,
    ) -> Result<Self, ModelError> {
        let reject = |reason: String| ModelError::InvalidProfile {
            subject: subject_id.clone(),
            reason,
        };

        if weight.unit() != Unit::Kilogram || !weight.is_positive() {
            return Err(reject(format!("weight must be a positive kg value, got {weight}")));
        }
        if let Some(h) = height {
            if h.unit() != Unit::Centimeter || !h.is_positive() {
                return Err(reject(format!("height must be a positive cm value, got {h}")));
            }
        }
        if let Some(a) = age {
            let min = Quantity::from_units(MIN_ADULT_AGE_YEARS, Unit::Year);
            let max = Quantity::from_units(MAX_AGE_YEARS, Unit::Year);
            if a.unit() != Unit::Year || a < min || a > max {
                return Err(reject(format!(
                    "age must be within [{MIN_ADULT_AGE_YEARS}, {MAX_AGE_YEARS}] years, got {a}"
                )));
            }
        }

        Ok(PatientProfile {
            subject_id,
            weight,
            height,
            age,
            sex,
        })
    }

    /// Profile with only the required weight, in whole kilograms.
    pub fn with_weight_kg(subject_id: SubjectId, kg: i64) -> Result<Self, ModelError> {
        PatientProfile::new(subject_id, Quantity::from_units(kg, Unit::Kilogram), None, None, None)
    }

    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn weight(&self) -> Quantity {
        self.weight
    }

    pub fn height(&self) -> Option<Quantity> {
        self.height
    }

    pub fn age(&self) -> Option<Quantity> {
        self.age
    }

    pub fn sex(&self) -> Option<Sex> {
        self.sex
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(h, m, 0)
            .unwrap()
    }

    fn ml(v: i64) -> Quantity {
        Quantity::from_units(v, Unit::Milliliter)
    }

    #[test]
    fn rejects_non_increasing_timestamps() {
        let err = ObservationSeries::new(
            "s1".into(),
            Signal::UrineOutput,
            vec![Observation::amount(ts(10, 0), ml(5)), Observation::amount(ts(10, 0), ml(6))],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s1") && msg.contains("urine_output") && msg.contains("10:00"));
    }

    #[test]
    fn rejects_negative_urine_and_zero_creatinine() {
        assert!(ObservationSeries::new(
            "s".into(),
            Signal::UrineOutput,
            vec![Observation::amount(ts(1, 0), ml(-1))]
        )
        .is_err());
        assert!(ObservationSeries::new(
            "s".into(),
            Signal::Creatinine,
            vec![Observation::amount(
                ts(1, 0),
                Quantity::from_units(0, Unit::MilligramPerDeciliter)
            )]
        )
        .is_err());
        assert!(ObservationSeries::new(
            "s".into(),
            Signal::Dialysis,
            vec![Observation::amount(ts(1, 0), ml(1))]
        )
        .is_err());
    }

    #[test]
    fn zero_urine_is_allowed() {
        let s = ObservationSeries::new(
            "s".into(),
            Signal::UrineOutput,
            vec![Observation::amount(ts(1, 0), ml(0))],
        )
        .unwrap();
        assert_eq!(s.points().len(), 1);
    }

    #[test]
    fn profile_validation() {
        let id = SubjectId::new("p");
        let kg = |v| Quantity::from_units(v, Unit::Kilogram);
        let years = |v| Quantity::from_units(v, Unit::Year);
        assert!(PatientProfile::new(id.clone(), kg(0), None, None, None).is_err());
        assert!(PatientProfile::new(id.clone(), kg(70), None, Some(years(17)), None).is_err());
        assert!(PatientProfile::new(id.clone(), kg(70), None, Some(years(131)), None).is_err());
        assert!(PatientProfile::new(id.clone(), kg(70), None, Some(years(18)), None).is_ok());
        assert!(PatientProfile::new(
            id.clone(),
            kg(70),
            Some(Quantity::from_units(0, Unit::Centimeter)),
            None,
            None
        )
        .is_err());
        assert!(PatientProfile::new(id, kg(70), None, Some(years(130)), Some(Sex::Female)).is_ok());
    }

    #[test]
    fn sex_parsing() {
        assert_eq!("F".parse::<Sex>().unwrap(), Sex::Female);
        assert_eq!("male".parse::<Sex>().unwrap(), Sex::Male);
        assert!("x".parse::<Sex>().is_err());
    }
}
