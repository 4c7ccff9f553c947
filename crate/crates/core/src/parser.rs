//! Structured completion grammar.
//!
//! A well-formed completion has exactly one `<think>...</think>` block whose
//! text contains a cue `Step <k>: <aspect name>` for every aspect, followed by
//! six sub-score tags `<tag>value</tag>` (outside the think block), each holding
//! a single unsigned integer or decimal literal.

use crate::aspect::{ErrorAspect, NUM_ASPECTS};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

/// A grammar violation found while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "aspect", rename_all = "snake_case")]
pub enum Violation {
    MissingThink,
    DuplicateThink,
    UnclosedThink,
    MissingReasoning(ErrorAspect),
    MissingTag(ErrorAspect),
    DuplicateTag(ErrorAspect),
    InvalidPayload(ErrorAspect),
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::MissingThink => "missing_think",
            Violation::DuplicateThink => "duplicate_think",
            Violation::UnclosedThink => "unclosed_think",
            Violation::MissingReasoning(_) => "missing_reasoning",
            Violation::MissingTag(_) => "missing_tag",
            Violation::DuplicateTag(_) => "duplicate_tag",
            Violation::InvalidPayload(_) => "invalid_payload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub think_text: Option<String>,
    pub reasoning_covered: [bool; NUM_ASPECTS],
    pub scores: [Option<f64>; NUM_ASPECTS],
    pub format_valid: bool,
    pub diagnostics: Vec<Violation>,
}

impl ParsedCompletion {
    pub fn covered_count(&self) -> usize {
        self.reasoning_covered.iter().filter(|c| **c).count()
    }

    pub fn all_scores_present(&self) -> bool {
        self.scores.iter().all(Option::is_some)
    }
}

static THINK_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<think>(.*?)</think>").unwrap());

static NUMERIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)$").unwrap());

static STEP_CUES: LazyLock<[Regex; NUM_ASPECTS]> = LazyLock::new(|| {
    ErrorAspect::ALL.map(|a| {
        let names: Vec<String> = std::iter::once(a.display_name())
            .chain(a.cue_aliases().iter().copied())
            .map(|n| n.split_whitespace().collect::<Vec<_>>().join(r"\s+"))
            .collect();
        Regex::new(&format!(r"(?i)\bstep\s*[0-9]+\s*:\s*(?:{})\b", names.join("|"))).unwrap()
    })
});

static TAG_PAIRS: LazyLock<[Regex; NUM_ASPECTS]> = LazyLock::new(|| {
    ErrorAspect::ALL.map(|a| {
        let t = a.canonical_tag();
        Regex::new(&format!(r"(?s)<{t}>(.*?)</{t}>")).unwrap()
    })
});

fn parse_payload(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if !NUMERIC.is_match(s) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
}

/// Parses completion text. Never fails; problems are listed in `diagnostics`.
pub fn parse_completion(text: &str) -> ParsedCompletion {
    let mut diagnostics = Vec::new();

    let blocks: Vec<_> = THINK_BLOCK.captures_iter(text).collect();
    let opens = text.matches("<think>").count();
    let think_ok = blocks.len() == 1 && opens == 1;
    if blocks.is_empty() {
        diagnostics.push(if opens > 0 {
            Violation::UnclosedThink
        } else {
            Violation::MissingThink
        });
    } else if blocks.len() > 1 || opens > 1 {
        diagnostics.push(Violation::DuplicateThink);
    }

    let think_text = blocks.first().map(|c| c[1].to_string());
    let reasoning: String = blocks.iter().map(|c| &c[1]).collect::<Vec<_>>().join("\n");

    // Tags are read from the text outside the think block(s).
    let outside = THINK_BLOCK.replace_all(text, " ");

    let mut reasoning_covered = [false; NUM_ASPECTS];
    let mut scores = [None; NUM_ASPECTS];
    let mut tag_diags = Vec::new();
    for aspect in ErrorAspect::ALL {
        let j = aspect.index();
        reasoning_covered[j] = !blocks.is_empty() && STEP_CUES[j].is_match(&reasoning);
        if !reasoning_covered[j] {
            diagnostics.push(Violation::MissingReasoning(aspect));
        }
        let payloads: Vec<_> = TAG_PAIRS[j].captures_iter(&outside).collect();
        match payloads.len() {
            0 => tag_diags.push(Violation::MissingTag(aspect)),
            1 => match parse_payload(&payloads[0][1]) {
                Some(v) => scores[j] = Some(v),
                None => tag_diags.push(Violation::InvalidPayload(aspect)),
            },
            _ => tag_diags.push(Violation::DuplicateTag(aspect)),
        }
    }
    diagnostics.extend(tag_diags);

    let format_valid = think_ok && scores.iter().all(Option::is_some);
    ParsedCompletion {
        think_text,
        reasoning_covered,
        scores,
        format_valid,
        diagnostics,
    }
}
