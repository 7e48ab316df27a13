//! Domain types shared by every stage of the engine.
//!
//! All measured values are fixed-point [`Quantity`] values in micro-units so
//! that every threshold decision downstream is an exact integer comparison.

pub mod fixed;
mod grid;
mod quantity;
mod record;
mod series;
mod stage;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use grid::{truncate_to_hour, urine_rate, HourCell, HourlyGrid};
pub use quantity::{convert_unit, Quantity, Unit};
pub use record::{Audit, Pathway, StageRecord};
pub use series::{
    Observation, ObservationSeries, PatientProfile, Reading, Sex, Signal, SubjectId,
    MAX_AGE_YEARS, MIN_ADULT_AGE_YEARS,
};
pub use stage::{merge_stages, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no conversion defined from {from} to {to}")]
    UndefinedConversion { from: Unit, to: Unit },
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("invalid stage {0:?}; expected 0-3 or empty")]
    InvalidStage(String),
    #[error("invalid sex {0:?}; expected f or m")]
    InvalidSex(String),
    #[error("subject {subject}, {signal} at {timestamp}: {reason}")]
    InvalidObservation {
        subject: SubjectId,
        signal: Signal,
        timestamp: NaiveDateTime,
        reason: String,
    },
    #[error("subject {subject}: {reason}")]
    InvalidProfile { subject: SubjectId, reason: String },
}
