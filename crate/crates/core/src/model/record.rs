use std::fmt;

use chrono::NaiveDateTime;

use super::{merge_stages, Quantity, Stage, SubjectId};

/// The five staged categories reported per hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pathway {
    UrineOutput,
    AbsoluteCreatinine,
    RelativeCreatinine,
    Dialysis,
    Overall,
}

impl Pathway {
    pub const ALL: [Pathway; 5] = [
        Pathway::UrineOutput,
        Pathway::AbsoluteCreatinine,
        Pathway::RelativeCreatinine,
        Pathway::Dialysis,
        Pathway::Overall,
    ];

    /// Column name in stage files.
    pub fn column(self) -> &'static str {
        match self {
            Pathway::UrineOutput => "uo_stage",
            Pathway::AbsoluteCreatinine => "abs_scr_stage",
            Pathway::RelativeCreatinine => "rel_scr_stage",
            Pathway::Dialysis => "dialysis_stage",
            Pathway::Overall => "overall_stage",
        }
    }

    /// Short name used in reports and summary columns.
    pub fn short_name(self) -> &'static str {
        match self {
            Pathway::UrineOutput => "uo",
            Pathway::AbsoluteCreatinine => "abs_scr",
            Pathway::RelativeCreatinine => "rel_scr",
            Pathway::Dialysis => "dialysis",
            Pathway::Overall => "overall",
        }
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Baselines that fed the creatinine pathways for one hour, rounded to the
/// nearest micro mg/dL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Audit {
    pub baseline_rel: Option<Quantity>,
    pub baseline_abs: Option<Quantity>,
}

/// Stages for one subject-hour. `overall_stage` is always the merge of the
/// four pathway stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    subject_id: SubjectId,
    timestamp: NaiveDateTime,
    uo_stage: Stage,
    abs_scr_stage: Stage,
    rel_scr_stage: Stage,
    dialysis_stage: Stage,
    overall_stage: Stage,
    audit: Audit,
}

impl StageRecord {
    pub fn new(
        subject_id: SubjectId,
        timestamp: NaiveDateTime,
        uo_stage: Stage,
        abs_scr_stage: Stage,
        rel_scr_stage: Stage,
        dialysis_stage: Stage,
        audit: Audit,
    ) -> Self {
        StageRecord {
            subject_id,
            timestamp,
            uo_stage,
            abs_scr_stage,
            rel_scr_stage,
            dialysis_stage,
            overall_stage: merge_stages(uo_stage, abs_scr_stage, rel_scr_stage, dialysis_stage),
            audit,
        }
    }

    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    pub fn stage(&self, pathway: Pathway) -> Stage {
        match pathway {
            Pathway::UrineOutput => self.uo_stage,
            Pathway::AbsoluteCreatinine => self.abs_scr_stage,
            Pathway::RelativeCreatinine => self.rel_scr_stage,
            Pathway::Dialysis => self.dialysis_stage,
            Pathway::Overall => self.overall_stage,
        }
    }

    pub fn uo_stage(&self) -> Stage {
        self.uo_stage
    }

    pub fn abs_scr_stage(&self) -> Stage {
        self.abs_scr_stage
    }

    pub fn rel_scr_stage(&self) -> Stage {
        self.rel_scr_stage
    }

    pub fn dialysis_stage(&self) -> Stage {
        self.dialysis_stage
    }

    pub fn overall_stage(&self) -> Stage {
        self.overall_stage
    }

    pub fn audit(&self) -> &Audit {
        &self.audit
    }
}
