//! Synthetic error-injection corpus.
//!
//! Each case starts from a random reference finding list. Errors are injected
//! into a copy of it, one mutation at a time, and the label is the count of
//! mutations per aspect. Quality tiers bound the total number of injected
//! errors: high 0-1, medium 2-3, low 4 or more.

use crate::aspect::{ErrorAspect, SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

const FINDING_KINDS: [&str; 12] = [
    "pleural effusion",
    "pneumothorax",
    "consolidation",
    "atelectasis",
    "cardiomegaly",
    "pulmonary edema",
    "nodule",
    "opacity",
    "rib fracture",
    "emphysema",
    "hilar enlargement",
    "support device",
];
const NUM_LOCATIONS: u8 = 8;
const NUM_SEVERITIES: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::High, Tier::Medium, Tier::Low];

    pub fn admits(self, total: u32) -> bool {
        match self {
            Tier::High => total <= 1,
            Tier::Medium => (2..=3).contains(&total),
            Tier::Low => total >= 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    /// Think block with one step cue per aspect, then six tags.
    Full,
    /// Valid tags, but the think block carries no step cues.
    TagsOnly,
    /// `Full` with the last tag dropped.
    Malformed,
}

impl RenderStyle {
    pub const ALL: [RenderStyle; 3] = [RenderStyle::Full, RenderStyle::TagsOnly, RenderStyle::Malformed];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: u32,
    pub kind: String,
    pub location: u8,
    pub severity: u8,
    pub comparison: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub case_id: String,
    pub tier: Tier,
    pub gt_subscores: SubScoreVector,
    pub features: Vec<f64>,
    pub reference_findings: Vec<Finding>,
    pub candidate_findings: Vec<Finding>,
    pub noise_level: f64,
}

/// How counts are laid out in the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// Aspect `j` owns channels `j*(count_max+1) ..`; the channel at offset
    /// `count_j` is `scale`, the rest are 0.
    #[default]
    OneHot,
    /// Channels `0..6` and `6..12` both carry `scale * count_j / count_max`.
    Scalar,
}

/// Knobs shared by every generated case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Feature dimension; at least [`FeatureSpec::signal_dim`]. Channels past
    /// the signal-bearing ones carry noise only.
    pub dim: usize,
    pub count_max: u32,
    pub scale: f64,
    #[serde(default)]
    pub encoding: FeatureEncoding,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::one_hot(4)
    }
}

impl FeatureSpec {
    /// One-hot layout plus six noise-only channels, scale 3.
    pub fn one_hot(count_max: u32) -> Self {
        Self {
            dim: NUM_ASPECTS * (count_max as usize + 1) + NUM_ASPECTS,
            count_max,
            scale: 3.0,
            encoding: FeatureEncoding::OneHot,
        }
    }

    /// Twelve scalar channels (two copies of each normalized count).
    pub fn scalar(count_max: u32) -> Self {
        Self {
            dim: 2 * NUM_ASPECTS,
            count_max,
            scale: 1.0,
            encoding: FeatureEncoding::Scalar,
        }
    }

    /// Number of channels needed to represent the counts.
    pub fn signal_dim(&self) -> usize {
        match self.encoding {
            FeatureEncoding::OneHot => NUM_ASPECTS * (self.count_max as usize + 1),
            FeatureEncoding::Scalar => NUM_ASPECTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count_max == 0 {
            return Err(Error::Config("count_max must be positive".into()));
        }
        if self.dim < self.signal_dim() {
            return Err(Error::Config(format!(
                "feature dimension must be at least {}, got {}",
                self.signal_dim(),
                self.dim
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config(format!("feature scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    fn signal(&self, counts: &SubScoreVector, d: usize) -> f64 {
        match self.encoding {
            FeatureEncoding::OneHot => {
                let width = self.count_max as usize + 1;
                if d < NUM_ASPECTS * width && counts.0[d / width] as usize == d % width {
                    self.scale
                } else {
                    0.0
                }
            }
            FeatureEncoding::Scalar if d < 2 * NUM_ASPECTS => {
                self.scale * f64::from(counts.0[d % NUM_ASPECTS]) / f64::from(self.count_max)
            }
            FeatureEncoding::Scalar => 0.0,
        }
    }
}

/// Encodes `counts` per `spec.encoding`. Every channel receives independent
/// zero-mean Gaussian noise with standard deviation `noise_level`.
pub fn encode_features<R: Rng + ?Sized>(
    counts: &SubScoreVector,
    spec: &FeatureSpec,
    noise_level: f64,
    rng: &mut R,
) -> Vec<f64> {
    let noise = (noise_level > 0.0).then(|| Normal::new(0.0, noise_level).unwrap());
    (0..spec.dim)
        .map(|d| spec.signal(counts, d) + noise.as_ref().map_or(0.0, |n| n.sample(rng)))
        .collect()
}

/// Inverts a noiseless encoding back to counts.
pub fn decode_noiseless(features: &[f64], spec: &FeatureSpec) -> SubScoreVector {
    SubScoreVector(std::array::from_fn(|j| match spec.encoding {
        FeatureEncoding::OneHot => {
            let width = spec.count_max as usize + 1;
            let block = &features[j * width..(j + 1) * width];
            let mut best = 0;
            for (k, v) in block.iter().enumerate() {
                if *v > block[best] {
                    best = k;
                }
            }
            best as u32
        }
        FeatureEncoding::Scalar => {
            (features[j] * f64::from(spec.count_max) / spec.scale).round().max(0.0) as u32
        }
    }))
}

fn admissible_vectors(tier: Tier, count_max: u32) -> Vec<[u32; NUM_ASPECTS]> {
    let base = count_max as usize + 1;
    let n = base.pow(NUM_ASPECTS as u32);
    (0..n)
        .filter_map(|mut code| {
            let mut v = [0u32; NUM_ASPECTS];
            for slot in v.iter_mut() {
                *slot = (code % base) as u32;
                code /= base;
            }
            tier.admits(v.iter().sum()).then_some(v)
        })
        .collect()
}

fn random_finding<R: Rng + ?Sized>(rng: &mut R, id: u32) -> Finding {
    Finding {
        id,
        kind: FINDING_KINDS[rng.gen_range(0..FINDING_KINDS.len())].to_string(),
        location: rng.gen_range(0..NUM_LOCATIONS),
        severity: rng.gen_range(1..=NUM_SEVERITIES),
        comparison: rng.gen_bool(0.5),
    }
}

fn other_value<R: Rng + ?Sized>(rng: &mut R, current: u8, lo: u8, hi: u8) -> u8 {
    let v = rng.gen_range(lo..hi);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// Builds a reference finding list and a candidate with exactly `counts`
/// injected errors per aspect.
fn inject<R: Rng + ?Sized>(rng: &mut R, counts: &[u32; NUM_ASPECTS]) -> (Vec<Finding>, Vec<Finding>) {
    let [fp, om, loc, sev, abs_cmp, om_cmp] = counts.map(|c| c as usize);
    let kept_needed = loc.max(sev).max(abs_cmp + om_cmp).max(1);
    let n_ref = om + kept_needed + rng.gen_range(0..=2);
    let mut reference: Vec<Finding> = (0..n_ref as u32).map(|id| random_finding(rng, id)).collect();
    reference.shuffle(rng);

    // The first `om` references are omitted; the rest are kept and mutated.
    let (_, kept) = reference.split_at_mut(om);
    let kept_len = kept.len();
    let mut cmp_slots: Vec<usize> = (0..kept_len).collect();
    cmp_slots.shuffle(rng);
    for &i in &cmp_slots[..om_cmp] {
        kept[i].comparison = true;
    }
    for &i in &cmp_slots[om_cmp..om_cmp + abs_cmp] {
        kept[i].comparison = false;
    }

    let mut candidate: Vec<Finding> = kept.to_vec();
    let pick = |k: usize, rng: &mut R| {
        let mut idx: Vec<usize> = (0..kept_len).collect();
        idx.shuffle(rng);
        idx.truncate(k);
        idx
    };
    for i in pick(loc, rng) {
        candidate[i].location = other_value(rng, candidate[i].location, 0, NUM_LOCATIONS - 1);
    }
    for i in pick(sev, rng) {
        candidate[i].severity = other_value(rng, candidate[i].severity - 1, 0, NUM_SEVERITIES - 1) + 1;
    }
    for &i in &cmp_slots[..om_cmp] {
        candidate[i].comparison = false;
    }
    for &i in &cmp_slots[om_cmp..om_cmp + abs_cmp] {
        candidate[i].comparison = true;
    }
    for k in 0..fp {
        candidate.push(random_finding(rng, (n_ref + k) as u32));
    }
    candidate.shuffle(rng);
    reference.sort_by_key(|f| f.id);
    (reference, candidate)
}

/// Counts the differences between a reference and candidate finding list,
/// aspect by aspect. Findings are matched by id.
pub fn diff_findings(reference: &[Finding], candidate: &[Finding]) -> SubScoreVector {
    let mut counts = [0u32; NUM_ASPECTS];
    for c in candidate {
        match reference.iter().find(|r| r.id == c.id) {
            None => counts[ErrorAspect::FalsePrediction.index()] += 1,
            Some(r) => {
                counts[ErrorAspect::IncorrectLocation.index()] += u32::from(r.location != c.location);
                counts[ErrorAspect::IncorrectSeverity.index()] += u32::from(r.severity != c.severity);
                counts[ErrorAspect::AbsenceOfComparison.index()] += u32::from(!r.comparison && c.comparison);
                counts[ErrorAspect::OmissionOfComparison.index()] += u32::from(r.comparison && !c.comparison);
            }
        }
    }
    counts[ErrorAspect::OmissionOfFinding.index()] =
        reference.iter().filter(|r| !candidate.iter().any(|c| c.id == r.id)).count() as u32;
    SubScoreVector(counts)
}

/// Draws one case of the given tier. The count vector is uniform over all
/// vectors in `[0, count_max]^6` admitted by the tier.
pub fn generate_case<R: Rng + ?Sized>(
    rng: &mut R,
    tier: Tier,
    noise_level: f64,
    spec: &FeatureSpec,
    case_id: impl Into<String>,
) -> Result<SyntheticCase> {
    spec.validate()?;
    if !(noise_level.is_finite() && noise_level >= 0.0) {
        return Err(Error::Config(format!("noise level must be non-negative, got {noise_level}")));
    }
    let admissible = admissible_vectors(tier, spec.count_max);
    let counts = *admissible
        .choose(rng)
        .ok_or_else(|| Error::Config(format!("tier {tier:?} is empty for count_max {}", spec.count_max)))?;
    let (reference_findings, candidate_findings) = inject(rng, &counts);
    let gt_subscores = SubScoreVector(counts);
    let features = encode_features(&gt_subscores, spec, noise_level, rng);
    Ok(SyntheticCase {
        case_id: case_id.into(),
        tier,
        gt_subscores,
        features,
        reference_findings,
        candidate_findings,
        noise_level,
    })
}

/// Corpus generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n: usize,
    /// Proportions of high, medium and low tier cases; must sum to 1.
    pub tier_mix: [f64; 3],
    /// Noise levels assigned round-robin over the cases.
    pub noise_levels: Vec<f64>,
    pub features: FeatureSpec,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.tier_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.tier_mix.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config(format!(
                "tier mix must be non-negative and sum to 1, got {:?} (sum {sum})",
                self.tier_mix
            )));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::Config("at least one noise level is required".into()));
        }
        self.features.validate()
    }
}

/// Largest-remainder allocation of `n` items over `mix`.
pub fn tier_quotas(n: usize, mix: &[f64; 3]) -> [usize; 3] {
    let exact = mix.map(|p| p * n as f64);
    let mut quotas = exact.map(|e| e.floor() as usize);
    let assigned: usize = quotas.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    quotas
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<SyntheticCase>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let quotas = tier_quotas(spec.n, &spec.tier_mix);
    let mut tiers: Vec<Tier> = Tier::ALL
        .iter()
        .zip(quotas)
        .flat_map(|(t, q)| std::iter::repeat(*t).take(q))
        .collect();
    tiers.shuffle(&mut rng);
    tiers
        .into_iter()
        .enumerate()
        .map(|(i, tier)| {
            let noise = spec.noise_levels[i % spec.noise_levels.len()];
            generate_case(&mut rng, tier, noise, &spec.features, format!("case-{i:05}"))
        })
        .collect()
}

/// Renders scores as completion text in the requested style.
pub fn render_structured_completion(scores: &SubScoreVector, style: RenderStyle) -> String {
    let mut out = String::from("<think>\n");
    match style {
        RenderStyle::Full | RenderStyle::Malformed => {
            for (k, aspect) in ErrorAspect::ALL.into_iter().enumerate() {
                let _ = writeln!(
                    out,
                    "Step {}: {}. Found {} error(s) of this type.",
                    k + 1,
                    aspect.display_name(),
                    scores.get(aspect)
                );
            }
        }
        RenderStyle::TagsOnly => out.push_str("Assessment complete.\n"),
    }
    out.push_str("</think>\n");
    let n_tags = match style {
        RenderStyle::Malformed => NUM_ASPECTS - 1,
        _ => NUM_ASPECTS,
    };
    for aspect in ErrorAspect::ALL.into_iter().take(n_tags) {
        let tag = aspect.canonical_tag();
        let _ = writeln!(out, "<{tag}>{}</{tag}>", scores.get(aspect));
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRecord {
    schema_version: u32,
    case_id: String,
    tier: Tier,
    gt: SubScoreVector,
    features: Vec<f64>,
    reference_findings: Vec<Finding>,
    candidate_findings: Vec<Finding>,
    noise_level: f64,
}

pub fn write_corpus_to<W: Write>(cases: &[SyntheticCase], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for c in cases {
        let record = CaseRecord {
            schema_version: SCHEMA_VERSION,
            case_id: c.case_id.clone(),
            tier: c.tier,
            gt: c.gt_subscores,
            features: c.features.clone(),
            reference_findings: c.reference_findings.clone(),
            candidate_findings: c.candidate_findings.clone(),
            noise_level: c.noise_level,
        };
        serde_json::to_writer(&mut w, &record).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(cases: &[SyntheticCase], path: impl AsRef<Path>) -> Result<()> {
    write_corpus_to(cases, std::fs::File::create(path)?)
}

/// Best-effort name of the offending field in a serde_json message.
pub(crate) fn field_from_json_error(msg: &str) -> String {
    for marker in ["missing field `", "unknown field `", "duplicate field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "record".to_string()
}

pub fn read_corpus_from<R: std::io::Read>(reader: R) -> Result<Vec<SyntheticCase>> {
    let mut cases = Vec::new();
    let mut dim = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |field: &str, message: String| Error::Data {
            line: line_no,
            field: field.to_string(),
            message,
        };
        let rec: CaseRecord = serde_json::from_str(&line).map_err(|e| {
            let msg = e.to_string();
            data_err(&field_from_json_error(&msg), msg)
        })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(data_err(
                "schema_version",
                format!("unsupported schema version {}", rec.schema_version),
            ));
        }
        if !rec.tier.admits(rec.gt.total()) {
            return Err(data_err(
                "tier",
                format!("tier {:?} does not admit total {}", rec.tier, rec.gt.total()),
            ));
        }
        if !(rec.noise_level.is_finite() && rec.noise_level >= 0.0) {
            return Err(data_err("noise_level", "must be non-negative".into()));
        }
        match dim {
            None => dim = Some(rec.features.len()),
            Some(d) if d != rec.features.len() => {
                return Err(data_err(
                    "features",
                    format!("expected {d} features, found {}", rec.features.len()),
                ))
            }
            _ => {}
        }
        cases.push(SyntheticCase {
            case_id: rec.case_id,
            tier: rec.tier,
            gt_subscores: rec.gt,
            features: rec.features,
            reference_findings: rec.reference_findings,
            candidate_findings: rec.candidate_findings,
            noise_level: rec.noise_level,
        });
    }
    Ok(cases)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<SyntheticCase>> {
    read_corpus_from(std::fs::File::open(path)?)
}
