//! The six error aspects and the per-aspect count vector.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of error aspects. Every per-aspect array in the crate has this length.
pub const NUM_ASPECTS: usize = 6;

/// A clinical error aspect, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorAspect {
    FalsePrediction = 0,
    OmissionOfFinding = 1,
    IncorrectLocation = 2,
    IncorrectSeverity = 3,
    AbsenceOfComparison = 4,
    OmissionOfComparison = 5,
}

impl ErrorAspect {
    pub const ALL: [ErrorAspect; NUM_ASPECTS] = [
        ErrorAspect::FalsePrediction,
        ErrorAspect::OmissionOfFinding,
        ErrorAspect::IncorrectLocation,
        ErrorAspect::IncorrectSeverity,
        ErrorAspect::AbsenceOfComparison,
        ErrorAspect::OmissionOfComparison,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case tag name used in completion text, e.g. `<omission_of_finding>`.
    pub fn canonical_tag(self) -> &'static str {
        match self {
            ErrorAspect::FalsePrediction => "false_prediction",
            ErrorAspect::OmissionOfFinding => "omission_of_finding",
            ErrorAspect::IncorrectLocation => "incorrect_location",
            ErrorAspect::IncorrectSeverity => "incorrect_severity",
            ErrorAspect::AbsenceOfComparison => "absence_of_comparison",
            ErrorAspect::OmissionOfComparison => "omission_of_comparison",
        }
    }

    /// Human-readable name used in step cues ("Step 1: false prediction").
    pub fn display_name(self) -> &'static str {
        match self {
            ErrorAspect::FalsePrediction => "false prediction",
            ErrorAspect::OmissionOfFinding => "omission of finding",
            ErrorAspect::IncorrectLocation => "incorrect location",
            ErrorAspect::IncorrectSeverity => "incorrect severity",
            ErrorAspect::AbsenceOfComparison => "absence of comparison",
            ErrorAspect::OmissionOfComparison => "omission of comparison",
        }
    }

    /// Alternative cue names accepted by the parser in addition to
    /// [`display_name`](Self::display_name).
    pub fn cue_aliases(self) -> &'static [&'static str] {
        match self {
            ErrorAspect::AbsenceOfComparison => &["incorrect comparison"],
            _ => &[],
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.canonical_tag() == tag)
    }
}

impl fmt::Display for ErrorAspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Free-function form of [`ErrorAspect::canonical_tag`].
pub fn canonical_tag(aspect: ErrorAspect) -> &'static str {
    aspect.canonical_tag()
}

/// Six non-negative error counts, one per aspect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubScoreVector(pub [u32; NUM_ASPECTS]);

impl SubScoreVector {
    pub fn new(counts: [u32; NUM_ASPECTS]) -> Self {
        Self(counts)
    }

    pub fn get(&self, aspect: ErrorAspect) -> u32 {
        self.0[aspect.index()]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn max_count(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn as_f64(&self) -> [f64; NUM_ASPECTS] {
        self.0.map(f64::from)
    }
}

impl From<[u32; NUM_ASPECTS]> for SubScoreVector {
    fn from(counts: [u32; NUM_ASPECTS]) -> Self {
        Self(counts)
    }
}
