use chrono::{Duration, NaiveDateTime, Timelike};

use super::fixed::{Exact, MICRO};
use super::{ModelError, Quantity, SubjectId, Unit};

/// Drops minutes, seconds and sub-second parts.
pub fn truncate_to_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("zero minute/second/nanosecond is always valid")
}

/// Urine rate in mL/kg/h for one hourly volume, rounded to the nearest
/// micro-unit. Staging never uses this rounded value; see
/// [`HourlyGrid::weight`] for the exact inputs.
pub fn urine_rate(volume: Quantity, weight: Quantity) -> Quantity {
    let rate = Exact::new(
        i128::from(volume.raw()) * i128::from(MICRO),
        i128::from(weight.raw()),
    );
    Quantity::from_exact(&rate, Unit::MilliliterPerKgPerHour)
}

/// One hour of regularised data. Every field may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HourCell {
    uo_ml: Option<Quantity>,
    uo_rate: Option<Quantity>,
    scr: Option<Quantity>,
    dialysis_active: Option<bool>,
}

impl HourCell {
    pub fn uo_ml(&self) -> Option<Quantity> {
        self.uo_ml
    }

    pub fn uo_rate(&self) -> Option<Quantity> {
        self.uo_rate
    }

    pub fn scr(&self) -> Option<Quantity> {
        self.scr
    }

    pub fn dialysis_active(&self) -> Option<bool> {
        self.dialysis_active
    }

    pub fn is_empty(&self) -> bool {
        self.uo_ml.is_none() && self.scr.is_none() && self.dialysis_active.is_none()
    }
}

/// Contiguous hourly cells for one subject, starting at `start`.
///
/// The grid carries the subject's weight so that urine-output thresholds
/// can be checked as exact integer cross-products of volume and weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HourlyGrid {
    subject_id: SubjectId,
    start: NaiveDateTime,
    weight: Quantity,
    hours: Vec<HourCell>,
}

impl HourlyGrid {
    /// An all-missing grid of `len` hours. `start` is truncated to the hour.
    pub fn new(
        subject_id: SubjectId,
        start: NaiveDateTime,
        weight: Quantity,
        len: usize,
    ) -> Result<Self, ModelError> {
        if weight.unit() != Unit::Kilogram || !weight.is_positive() {
            return Err(ModelError::InvalidProfile {
                subject: subject_id,
                reason: format!("grid weight must be a positive kg value, got {weight}"),
            });
        }
        Ok(HourlyGrid {
            subject_id,
            start: truncate_to_hour(start),
            weight,
            hours: vec![HourCell::default(); len],
        })
    }

    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn weight(&self) -> Quantity {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn cells(&self) -> &[HourCell] {
        &self.hours
    }

    pub fn cell(&self, index: usize) -> &HourCell {
        &self.hours[index]
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    /// Hour index containing `ts`, if it falls inside the grid.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let hours = (truncate_to_hour(ts) - self.start).num_hours();
        usize::try_from(hours).ok().filter(|&i| i < self.hours.len())
    }

    /// Sets the hourly urine volume and keeps the derived rate in step.
    pub fn set_urine(&mut self, index: usize, volume: Option<Quantity>) {
        let cell = &mut self.hours[index];
        cell.uo_ml = volume;
        cell.uo_rate = volume.map(|v| urine_rate(v, self.weight));
    }

    pub fn set_creatinine(&mut self, index: usize, scr: Option<Quantity>) {
        self.hours[index].scr = scr;
    }

    pub fn set_dialysis(&mut self, index: usize, active: Option<bool>) {
        self.hours[index].dialysis_active = active;
    }

    /// Grows the grid so it spans at least `[start, end]` (both truncated to
    /// the hour), padding with missing cells.
    pub fn extend_to_cover(&mut self, start: NaiveDateTime, end: NaiveDateTime) {
        let start = truncate_to_hour(start);
        let end = truncate_to_hour(end);
        if start < self.start {
            let pad = (self.start - start).num_hours() as usize;
            self.hours
                .splice(0..0, std::iter::repeat_n(HourCell::default(), pad));
            self.start = start;
        }
        let needed = (end - self.start).num_hours() + 1;
        if needed > self.hours.len() as i64 {
            self.hours.resize(needed as usize, HourCell::default());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 3, 1)
            .unwrap()
            .and_hms_opt(h, m, 17)
            .unwrap()
    }

    #[test]
    fn rate_follows_volume() {
        let mut g = HourlyGrid::new("a".into(), at(8, 0), Quantity::from_units(70, Unit::Kilogram), 3)
            .unwrap();
        g.set_urine(1, Some(Quantity::from_units(70, Unit::Milliliter)));
        assert_eq!(
            g.cell(1).uo_rate(),
            Some(Quantity::from_units(1, Unit::MilliliterPerKgPerHour))
        );
        g.set_urine(1, None);
        assert_eq!(g.cell(1).uo_rate(), None);
    }

    #[test]
    fn start_is_truncated_and_indexing_works() {
        let g = HourlyGrid::new("a".into(), at(8, 42), Quantity::from_units(70, Unit::Kilogram), 3)
            .unwrap();
        assert_eq!(g.start(), NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(8, 0, 0).unwrap());
        assert_eq!(g.index_of(at(9, 59)), Some(1));
        assert_eq!(g.index_of(at(11, 0)), None);
        assert_eq!(g.index_of(at(7, 59)), None);
    }

    #[test]
    fn extends_both_directions() {
        let mut g = HourlyGrid::new("a".into(), at(8, 0), Quantity::from_units(70, Unit::Kilogram), 2)
            .unwrap();
        g.set_creatinine(0, Some(Quantity::from_units(1, Unit::MilligramPerDeciliter)));
        g.extend_to_cover(at(6, 30), at(12, 10));
        assert_eq!(g.len(), 7);
        assert_eq!(g.index_of(at(8, 0)), Some(2));
        assert!(g.cell(2).scr().is_some());
        assert!(g.cell(0).is_empty());
    }

    #[test]
    fn rejects_non_positive_weight() {
        assert!(HourlyGrid::new("a".into(), at(0, 0), Quantity::from_units(0, Unit::Kilogram), 1).is_err());
    }
}
