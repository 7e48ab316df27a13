//! Regularisation of raw observations onto an hourly grid.
//!
//! Within one hour, urine volumes are summed, the last creatinine value
//! wins and dialysis is active if any observation says so. Imputation is a
//! separate, optional step: [`forward_fill`] copies the last present value
//! across short gaps only.

use thiserror::Error;

use crate::model::{
    truncate_to_hour, HourlyGrid, ModelError, ObservationSeries, PatientProfile, Quantity,
    Reading, Signal, SubjectId, Unit,
};

/// Longest gap (in hours) bridged by forward filling unless configured
/// otherwise: gaps strictly shorter than six hours.
pub const DEFAULT_MAX_GAP_HOURS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("subject {subject}: no observations to resample")]
    EmptySeries { subject: SubjectId },
    #[error("series for subject {series} does not belong to profile {profile}")]
    SubjectMismatch { series: SubjectId, profile: SubjectId },
    #[error("subject {subject}: hourly urine volume overflows")]
    Overflow { subject: SubjectId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Resamples one signal onto a grid spanning its own first to last hour.
/// The other signals of the returned grid are all missing.
pub fn resample_hourly(
    series: &ObservationSeries,
    profile: &PatientProfile,
) -> Result<HourlyGrid, PreprocessError> {
    resample_subject(std::slice::from_ref(series), profile)
}

/// Resamples several signals of one subject onto a single grid spanning the
/// union of their time ranges. Empty series are ignored; if all are empty
/// the subject has nothing to grid.
pub fn resample_subject(
    series: &[ObservationSeries],
    profile: &PatientProfile,
) -> Result<HourlyGrid, PreprocessError> {
    for s in series {
        if s.subject_id() != profile.subject_id() {
            return Err(PreprocessError::SubjectMismatch {
                series: s.subject_id().clone(),
                profile: profile.subject_id().clone(),
            });
        }
    }
    let first = series.iter().filter_map(|s| s.first_timestamp()).min();
    let last = series.iter().filter_map(|s| s.last_timestamp()).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(PreprocessError::EmptySeries {
            subject: profile.subject_id().clone(),
        });
    };

    let start = truncate_to_hour(first);
    let len = (truncate_to_hour(last) - start).num_hours() as usize + 1;
    let mut grid = HourlyGrid::new(profile.subject_id().clone(), start, profile.weight(), len)?;

    for s in series {
        match s.signal() {
            Signal::UrineOutput => {
                let mut sums: Vec<Option<i64>> = vec![None; len];
                for p in s.points() {
                    if let Reading::Amount(q) = p.reading {
                        let i = hour_index(&grid, p.timestamp);
                        let acc = sums[i].unwrap_or(0);
                        sums[i] = Some(acc.checked_add(q.raw()).ok_or_else(|| {
                            PreprocessError::Overflow {
                                subject: profile.subject_id().clone(),
                            }
                        })?);
                    }
                }
                for (i, total) in sums.into_iter().enumerate() {
                    if let Some(raw) = total {
                        grid.set_urine(i, Some(Quantity::from_micros(raw, Unit::Milliliter)));
                    }
                }
            }
            Signal::Creatinine => {
                // points are time-ordered, so the last write per hour wins
                for p in s.points() {
                    if let Reading::Amount(q) = p.reading {
                        let i = hour_index(&grid, p.timestamp);
                        grid.set_creatinine(i, Some(q));
                    }
                }
            }
            Signal::Dialysis => {
                for p in s.points() {
                    if let Reading::Flag(active) = p.reading {
                        let i = hour_index(&grid, p.timestamp);
                        let prior = grid.cell(i).dialysis_active().unwrap_or(false);
                        grid.set_dialysis(i, Some(prior || active));
                    }
                }
            }
        }
    }
    Ok(grid)
}

fn hour_index(grid: &HourlyGrid, ts: chrono::NaiveDateTime) -> usize {
    grid.index_of(ts)
        .expect("observation lies inside the span computed from the same series")
}

/// Fills runs of missing cells no longer than `max_gap_hours` with the value
/// immediately before the run, independently per signal.
///
/// Runs with no preceding value (leading gaps) and runs longer than the
/// limit are left untouched. A run at the end of the grid counts its length
/// up to the last hour. Urine output copies the last hourly volume.
pub fn forward_fill(grid: &HourlyGrid, max_gap_hours: u32) -> HourlyGrid {
    let mut out = grid.clone();
    if max_gap_hours == 0 {
        return out;
    }
    let limit = max_gap_hours as usize;

    let mut urine: Vec<Option<Quantity>> = grid.cells().iter().map(|c| c.uo_ml()).collect();
    let mut scr: Vec<Option<Quantity>> = grid.cells().iter().map(|c| c.scr()).collect();
    let mut dialysis: Vec<Option<bool>> =
        grid.cells().iter().map(|c| c.dialysis_active()).collect();

    fill_column(&mut urine, limit);
    fill_column(&mut scr, limit);
    fill_column(&mut dialysis, limit);

    for i in 0..out.len() {
        if grid.cell(i).uo_ml().is_none() && urine[i].is_some() {
            out.set_urine(i, urine[i]);
        }
        out.set_creatinine(i, scr[i]);
        out.set_dialysis(i, dialysis[i]);
    }
    out
}

fn fill_column<T: Copy>(column: &mut [Option<T>], limit: usize) {
    let mut i = 0;
    while i < column.len() {
        if column[i].is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < column.len() && column[i].is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        if run_start == 0 || run_len > limit {
            continue;
        }
        let fill = column[run_start - 1];
        column[run_start..i].iter_mut().for_each(|c| *c = fill);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use chrono::{NaiveDate, NaiveDateTime};
    use proptest::prelude::*;

    fn at(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 5, 2)
            .unwrap()
            .and_hms_opt(h, m, 0)
            .unwrap()
    }

    fn profile(kg: i64) -> PatientProfile {
        PatientProfile::with_weight_kg("s".into(), kg).unwrap()
    }

    fn mgdl(text: &str) -> Quantity {
        Quantity::parse(text, Unit::MilligramPerDeciliter).unwrap()
    }

    fn series(signal: Signal, points: Vec<Observation>) -> ObservationSeries {
        ObservationSeries::new("s".into(), signal, points).unwrap()
    }

    #[test]
    fn sums_urine_within_hour() {
        let s = series(
            Signal::UrineOutput,
            vec![
                Observation::amount(at(10, 15), Quantity::from_units(50, Unit::Milliliter)),
                Observation::amount(at(10, 45), Quantity::from_units(30, Unit::Milliliter)),
            ],
        );
        let g = resample_hourly(&s, &profile(70)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.start(), at(10, 0));
        assert_eq!(g.cell(0).uo_ml(), Some(Quantity::from_units(80, Unit::Milliliter)));
    }

    #[test]
    fn creatinine_takes_last_in_hour() {
        let s = series(Signal::Creatinine, vec![Observation::amount(at(8, 30), mgdl("1.2"))]);
        let g = resample_hourly(&s, &profile(70)).unwrap();
        assert_eq!(g.start(), at(8, 0));
        assert_eq!(g.cell(0).scr(), Some(mgdl("1.2")));

        let s = series(
            Signal::Creatinine,
            vec![
                Observation::amount(at(8, 5), mgdl("1.2")),
                Observation::amount(at(8, 55), mgdl("1.7")),
            ],
        );
        assert_eq!(resample_hourly(&s, &profile(70)).unwrap().cell(0).scr(), Some(mgdl("1.7")));
    }

    #[test]
    fn dialysis_is_any_true() {
        let s = series(
            Signal::Dialysis,
            vec![
                Observation::flag(at(3, 0), false),
                Observation::flag(at(3, 20), true),
                Observation::flag(at(3, 40), false),
                Observation::flag(at(5, 0), false),
            ],
        );
        let g = resample_hourly(&s, &profile(70)).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.cell(0).dialysis_active(), Some(true));
        assert_eq!(g.cell(1).dialysis_active(), None);
        assert_eq!(g.cell(2).dialysis_active(), Some(false));
    }

    #[test]
    fn rate_is_volume_over_weight() {
        let s = series(
            Signal::UrineOutput,
            vec![Observation::amount(at(1, 0), Quantity::from_units(70, Unit::Milliliter))],
        );
        let g = resample_hourly(&s, &profile(70)).unwrap();
        assert_eq!(
            g.cell(0).uo_rate(),
            Some(Quantity::from_units(1, Unit::MilliliterPerKgPerHour))
        );
    }

    #[test]
    fn empty_series_is_an_error() {
        let s = series(Signal::Creatinine, vec![]);
        assert!(matches!(
            resample_hourly(&s, &profile(70)),
            Err(PreprocessError::EmptySeries { .. })
        ));
    }

    #[test]
    fn union_span_across_signals() {
        let uo = series(
            Signal::UrineOutput,
            vec![Observation::amount(at(4, 0), Quantity::from_units(10, Unit::Milliliter))],
        );
        let scr = series(
            Signal::Creatinine,
            vec![
                Observation::amount(at(1, 10), mgdl("1.0")),
                Observation::amount(at(6, 10), mgdl("1.1")),
            ],
        );
        let g = resample_subject(&[uo, scr], &profile(70)).unwrap();
        assert_eq!(g.start(), at(1, 0));
        assert_eq!(g.len(), 6);
        assert!(g.cell(3).uo_ml().is_some());
        assert!(g.cell(0).uo_ml().is_none());
    }

    fn scr_grid(values: &[Option<&str>]) -> HourlyGrid {
        let mut g = HourlyGrid::new("s".into(), at(0, 0), Quantity::from_units(70, Unit::Kilogram), values.len())
            .unwrap();
        for (i, v) in values.iter().enumerate() {
            g.set_creatinine(i, v.map(mgdl));
        }
        g
    }

    fn scr_column(g: &HourlyGrid) -> Vec<Option<Quantity>> {
        g.cells().iter().map(|c| c.scr()).collect()
    }

    #[test]
    fn fills_short_gap() {
        let g = scr_grid(&[Some("1.0"), None, None, Some("2.0")]);
        let filled = forward_fill(&g, 6);
        assert_eq!(
            scr_column(&filled),
            vec![Some(mgdl("1.0")), Some(mgdl("1.0")), Some(mgdl("1.0")), Some(mgdl("2.0"))]
        );
    }

    #[test]
    fn leaves_long_gap() {
        let mut values = vec![Some("1.0")];
        values.extend(std::iter::repeat_n(None, 7));
        values.push(Some("2.0"));
        let g = scr_grid(&values);
        let filled = forward_fill(&g, 6);
        assert_eq!(scr_column(&filled), scr_column(&g));
    }

    #[test]
    fn zero_gap_is_identity() {
        let g = scr_grid(&[Some("1.0"), None, Some("2.0")]);
        assert_eq!(forward_fill(&g, 0), g);
    }

    #[test]
    fn leading_gap_stays_missing_and_trailing_short_gap_fills() {
        let g = scr_grid(&[None, None, Some("1.5"), None]);
        let filled = scr_column(&forward_fill(&g, 5));
        assert_eq!(filled[0], None);
        assert_eq!(filled[1], None);
        assert_eq!(filled[3], Some(mgdl("1.5")));
    }

    #[test]
    fn urine_fill_copies_hourly_amount_and_rate() {
        let mut g = HourlyGrid::new("s".into(), at(0, 0), Quantity::from_units(50, Unit::Kilogram), 3).unwrap();
        g.set_urine(0, Some(Quantity::from_units(25, Unit::Milliliter)));
        g.set_urine(2, Some(Quantity::from_units(40, Unit::Milliliter)));
        let f = forward_fill(&g, 5);
        assert_eq!(f.cell(1).uo_ml(), Some(Quantity::from_units(25, Unit::Milliliter)));
        assert_eq!(f.cell(1).uo_rate(), Some(Quantity::parse("0.5", Unit::MilliliterPerKgPerHour).unwrap()));
    }

    fn masked_grid() -> impl Strategy<Value = (Vec<Option<i64>>, Vec<Option<bool>>, u32)> {
        (
            prop::collection::vec(prop::option::weighted(0.5, 1i64..5_000_000), 1..80),
            prop::collection::vec(prop::option::weighted(0.4, any::<bool>()), 1..80),
            0u32..10,
        )
    }

    fn build(scr: &[Option<i64>], dia: &[Option<bool>]) -> HourlyGrid {
        let len = scr.len().max(dia.len());
        let mut g = HourlyGrid::new("s".into(), at(0, 0), Quantity::from_units(80, Unit::Kilogram), len).unwrap();
        for (i, v) in scr.iter().enumerate() {
            g.set_creatinine(i, v.map(|r| Quantity::from_micros(r, Unit::MilligramPerDeciliter)));
            g.set_urine(i, v.map(|r| Quantity::from_micros(r, Unit::Milliliter)));
        }
        for (i, v) in dia.iter().enumerate() {
            g.set_dialysis(i, *v);
        }
        g
    }

    proptest! {
        #[test]
        fn resample_cell_count_is_hour_span_plus_one(
            offsets in prop::collection::btree_set(0i64..20_000, 1..60)
        ) {
            let base = at(0, 0);
            let points: Vec<_> = offsets
                .iter()
                .map(|&m| Observation::amount(base + chrono::Duration::minutes(m), mgdl("1.0")))
                .collect();
            let first = points[0].timestamp;
            let last = points[points.len() - 1].timestamp;
            let s = series(Signal::Creatinine, points);
            let g = resample_hourly(&s, &profile(70)).unwrap();
            let span = (truncate_to_hour(last) - truncate_to_hour(first)).num_hours() as usize;
            prop_assert_eq!(g.len(), span + 1);
        }

        #[test]
        fn fill_preserves_present_values_and_respects_limit((scr, dia, gap) in masked_grid()) {
            let g = build(&scr, &dia);
            let f = forward_fill(&g, gap);
            for i in 0..g.len() {
                let (before, after) = (g.cell(i), f.cell(i));
                if before.scr().is_some() { prop_assert_eq!(before.scr(), after.scr()); }
                if before.uo_ml().is_some() { prop_assert_eq!(before.uo_ml(), after.uo_ml()); }
                if before.dialysis_active().is_some() {
                    prop_assert_eq!(before.dialysis_active(), after.dialysis_active());
                }
            }
            // any filled cell belongs to a run no longer than the limit
            let col: Vec<bool> = g.cells().iter().map(|c| c.scr().is_none()).collect();
            let mut i = 0;
            while i < col.len() {
                if !col[i] { i += 1; continue; }
                let start = i;
                while i < col.len() && col[i] { i += 1; }
                let filled = (start..i).any(|k| f.cell(k).scr().is_some());
                if filled {
                    prop_assert!(start > 0 && i - start <= gap as usize);
                }
            }
        }

        #[test]
        fn fill_is_idempotent((scr, dia, gap) in masked_grid()) {
            let g = build(&scr, &dia);
            let once = forward_fill(&g, gap);
            prop_assert_eq!(forward_fill(&once, gap), once);
        }
    }
}
