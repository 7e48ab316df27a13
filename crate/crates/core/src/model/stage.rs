use std::fmt;
use std::str::FromStr;

use super::ModelError;

/// KDIGO stage for one hour and one pathway.
///
/// `Unknown` marks hours where a criterion cannot be evaluated. It sorts
/// below `Zero`, so taking a maximum lets any evaluable pathway decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Stage {
    #[default]
    Unknown,
    Zero,
    One,
    Two,
    Three,
}

impl Stage {
    pub const KNOWN: [Stage; 4] = [Stage::Zero, Stage::One, Stage::Two, Stage::Three];

    pub fn from_level(level: u8) -> Option<Stage> {
        match level {
            0 => Some(Stage::Zero),
            1 => Some(Stage::One),
            2 => Some(Stage::Two),
            3 => Some(Stage::Three),
            _ => None,
        }
    }

    pub fn level(self) -> Option<u8> {
        match self {
            Stage::Unknown => None,
            Stage::Zero => Some(0),
            Stage::One => Some(1),
            Stage::Two => Some(2),
            Stage::Three => Some(3),
        }
    }

    pub fn is_known(self) -> bool {
        self != Stage::Unknown
    }

    /// Stage 1 or higher.
    pub fn is_aki(self) -> bool {
        self >= Stage::One
    }

    /// Serialized form used in stage files: the level digit, or an empty
    /// field for `Unknown`.
    pub fn as_field(self) -> &'static str {
        match self {
            Stage::Unknown => "",
            Stage::Zero => "0",
            Stage::One => "1",
            Stage::Two => "2",
            Stage::Three => "3",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level() {
            Some(level) => write!(f, "{level}"),
            None => f.write_str("unknown"),
        }
    }
}

impl FromStr for Stage {
    type Err = ModelError;

    /// Inverse of [`Stage::as_field`]; also accepts `unknown`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("unknown") {
            return Ok(Stage::Unknown);
        }
        let level: u8 = t
            .strip_suffix(".0")
            .unwrap_or(t)
            .parse()
            .map_err(|_| ModelError::InvalidStage(s.to_string()))?;
        Stage::from_level(level).ok_or_else(|| ModelError::InvalidStage(s.to_string()))
    }
}

/// Overall stage for an hour: the highest stage of the four pathways.
/// Returns `Unknown` only when every pathway is `Unknown`.
pub fn merge_stages(uo: Stage, abs_scr: Stage, rel_scr: Stage, dialysis: Stage) -> Stage {
    uo.max(abs_scr).max(rel_scr).max(dialysis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Stage::*;

    #[test]
    fn merge_examples() {
        assert_eq!(merge_stages(One, Zero, Three, Zero), Three);
        assert_eq!(merge_stages(Zero, Zero, Zero, Zero), Zero);
        assert_eq!(merge_stages(Unknown, Unknown, One, Unknown), One);
        assert_eq!(merge_stages(Unknown, Unknown, Unknown, Unknown), Unknown);
    }

    #[test]
    fn ordering_puts_unknown_lowest() {
        assert!(Unknown < Zero);
        assert!(Zero < One && One < Two && Two < Three);
    }

    #[test]
    fn field_round_trip() {
        for s in [Unknown, Zero, One, Two, Three] {
            assert_eq!(s.as_field().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("2.0".parse::<Stage>().unwrap(), Two);
        assert!("4".parse::<Stage>().is_err());
        assert!("x".parse::<Stage>().is_err());
    }

    fn any_stage() -> impl Strategy<Value = Stage> {
        prop_oneof![Just(Unknown), Just(Zero), Just(One), Just(Two), Just(Three)]
    }

    proptest! {
        #[test]
        fn merge_is_idempotent(s in any_stage()) {
            prop_assert_eq!(merge_stages(s, s, s, s), s);
        }

        #[test]
        fn merge_is_commutative(a in any_stage(), b in any_stage(), c in any_stage(), d in any_stage()) {
            let m = merge_stages(a, b, c, d);
            prop_assert_eq!(m, merge_stages(d, c, b, a));
            prop_assert_eq!(m, merge_stages(b, a, d, c));
            prop_assert_eq!(m, merge_stages(c, d, a, b));
        }

        #[test]
        fn merge_is_monotone(a in any_stage(), b in any_stage(), c in any_stage(), d in any_stage(), up in any_stage()) {
            let before = merge_stages(a, b, c, d);
            let raised = a.max(up);
            prop_assert!(merge_stages(raised, b, c, d) >= before);
        }
    }
}
