//! The training loop: sampling, rewards, advantages, scaling, gradient step
//! and weight refresh, wired together deterministically.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::error::{Error, Result};
use crate::grpo::{grpo_loss_and_gradient, normalize_advantages, sample_group, GroupRecord};
use crate::mgas::{agreement, scale_factors, MgasParams};
use crate::parser::parse_completion;
use crate::policy::{PolicyParameters, NUM_TOKENS};
use crate::rewards::{final_reward_with, RewardParams};
use crate::sdw::{aspect_f1, AspectWeights, SdwConfig, SdwController};
use crate::synth::{write_corpus_to, SyntheticCase};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Stream id reserved for parameter initialisation; steps use streams `0..`.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub group_size: usize,
    pub sigma: f64,
    pub sigma_total: f64,
    pub alpha: f64,
    pub sdw_interval: u64,
    pub sdw_window: usize,
    pub use_sdw: bool,
    pub use_mgas: bool,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub mgas_c: f64,
    pub mgas_beta: f64,
    pub mgas_clamp: bool,
    pub kl_coeff: f64,
    pub learning_rate: f64,
    pub steps: u64,
    pub seed: u64,
    pub count_max: u32,
    pub epsilon_std: f64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mgas = MgasParams::default();
        Self {
            group_size: 8,
            sigma: 0.5,
            sigma_total: 0.5,
            alpha: 2.0,
            sdw_interval: 64,
            sdw_window: 256,
            use_sdw: true,
            use_mgas: true,
            phi_minus: mgas.phi_minus,
            phi_plus: mgas.phi_plus,
            mgas_c: mgas.c,
            mgas_beta: mgas.beta,
            mgas_clamp: mgas.clamp,
            kl_coeff: 0.04,
            learning_rate: 0.01,
            steps: 2000,
            seed: 0,
            count_max: 4,
            epsilon_std: 1e-8,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn mgas(&self) -> MgasParams {
        MgasParams {
            phi_minus: self.phi_minus,
            phi_plus: self.phi_plus,
            c: self.mgas_c,
            beta: self.mgas_beta,
            clamp: self.mgas_clamp,
        }
    }

    pub fn rewards(&self) -> RewardParams {
        RewardParams {
            sigma: self.sigma,
            sigma_total: self.sigma_total,
        }
    }

    pub fn sdw(&self) -> SdwConfig {
        SdwConfig {
            enabled: self.use_sdw,
            interval: self.sdw_interval,
            alpha: self.alpha,
            window: self.sdw_window,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("sigma", self.sigma);
        positive("sigma_total", self.sigma_total);
        positive("alpha", self.alpha);
        positive("epsilon_std", self.epsilon_std);
        if self.group_size < 2 {
            out.push(format!("group_size must be at least 2, got {}", self.group_size));
        }
        if self.sdw_interval == 0 {
            out.push("sdw_interval must be positive".into());
        }
        if self.sdw_window == 0 {
            out.push("sdw_window must be positive".into());
        }
        if self.count_max == 0 {
            out.push("count_max must be positive".into());
        }
        if !(self.kl_coeff.is_finite() && self.kl_coeff >= 0.0) {
            out.push(format!("kl_coeff must be non-negative, got {}", self.kl_coeff));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            out.push(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            out.push(format!("init_scale must be non-negative, got {}", self.init_scale));
        }
        if let Err(Error::Config(msg)) = self.mgas().validate() {
            out.push(msg);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Pipeline stages of one training step, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sample,
    Reward,
    Normalize,
    Scale,
    Loss,
    Update,
    Record,
    WeightRefresh,
}

/// Observer invoked after each stage of a step.
pub trait StepHook {
    fn on_stage(&mut self, step: u64, stage: Stage, group: &GroupRecord);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 1-based index of the completed step.
    pub step: u64,
    pub prompt_id: String,
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_reasoning: f64,
    pub mean_format: f64,
    pub mean_sub_dyn: f64,
    pub mean_total: f64,
    pub mean_acc: f64,
    pub weights: [f64; NUM_ASPECTS],
    /// Per-aspect detection F1 over the prediction window after this step.
    pub f1: [f64; NUM_ASPECTS],
    pub gamma: f64,
    pub s_min: f64,
    pub s_mean: f64,
    pub s_max: f64,
    pub kl: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightUpdate {
    pub step: u64,
    pub f1: [f64; NUM_ASPECTS],
    pub gaps: [f64; NUM_ASPECTS],
    pub weights: [f64; NUM_ASPECTS],
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Step(StepMetrics),
    Weights(WeightUpdate),
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("metrics records always serialize")
    }
}

pub fn write_metrics<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

/// SHA-256 of the corpus in its canonical line-delimited encoding.
pub fn corpus_checksum(cases: &[SyntheticCase]) -> String {
    let mut buf = Vec::new();
    write_corpus_to(cases, &mut buf).expect("in-memory write");
    sha256_hex(&buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn step_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const CHECKPOINT_FORMAT: &str = "sgrpo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run bit-identically. Per-step random
/// streams are derived from `(seed, step)`, so no generator state is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub step: u64,
    pub corpus_checksum: String,
    pub theta: PolicyParameters,
    pub theta_ref: PolicyParameters,
    pub sdw: SdwController,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Data {
            line: e.line(),
            field: crate::synth::field_from_json_error(&e.to_string()),
            message: e.to_string(),
        })?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data {
                line: 1,
                field: "version".into(),
                message: format!("unsupported checkpoint {} v{}", ck.format, ck.version),
            });
        }
        Ok(ck)
    }
}

pub struct Trainer {
    config: TrainConfig,
    corpus: Vec<SyntheticCase>,
    corpus_checksum: String,
    theta: PolicyParameters,
    theta_ref: PolicyParameters,
    sdw: SdwController,
    step: u64,
    hook: Option<Box<dyn StepHook>>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("step", &self.step)
            .field("corpus_len", &self.corpus.len())
            .finish_non_exhaustive()
    }
}

fn validate_corpus(config: &TrainConfig, corpus: &[SyntheticCase]) -> Result<usize> {
    let mut problems = config.problems();
    let dim = corpus.first().map(|c| c.features.len());
    match dim {
        None => problems.push("corpus is empty".into()),
        Some(0) => problems.push("corpus features are empty".into()),
        Some(d) => {
            if let Some(c) = corpus.iter().find(|c| c.features.len() != d) {
                problems.push(format!("case {} has {} features, expected {d}", c.case_id, c.features.len()));
            }
            if let Some(c) = corpus.iter().find(|c| c.gt_subscores.max_count() > config.count_max) {
                problems.push(format!(
                    "case {} has a count above count_max = {}",
                    c.case_id, config.count_max
                ));
            }
            if let Some(c) = corpus.iter().find(|c| c.features.iter().any(|v| !v.is_finite())) {
                problems.push(format!("case {} has non-finite features", c.case_id));
            }
        }
    }
    if problems.is_empty() {
        Ok(dim.unwrap_or(0))
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

impl Trainer {
    pub fn new(config: TrainConfig, corpus: Vec<SyntheticCase>) -> Result<Self> {
        let dim = validate_corpus(&config, &corpus)?;
        let mut rng = step_rng(config.seed, INIT_STREAM);
        let theta = PolicyParameters::random(dim, config.count_max, config.init_scale, &mut rng);
        Ok(Self {
            corpus_checksum: corpus_checksum(&corpus),
            sdw: SdwController::new(config.sdw()),
            theta_ref: theta.clone(),
            theta,
            config,
            corpus,
            step: 0,
            hook: None,
        })
    }

    /// Continues from a checkpoint. The corpus must be the one it was trained on.
    pub fn from_checkpoint(ck: Checkpoint, corpus: Vec<SyntheticCase>) -> Result<Self> {
        validate_corpus(&ck.config, &corpus)?;
        let checksum = corpus_checksum(&corpus);
        if checksum != ck.corpus_checksum {
            return Err(Error::Config(format!(
                "corpus checksum {checksum} does not match checkpoint ({})",
                ck.corpus_checksum
            )));
        }
        Ok(Self {
            config: ck.config,
            corpus,
            corpus_checksum: checksum,
            theta: ck.theta,
            theta_ref: ck.theta_ref,
            sdw: ck.sdw,
            step: ck.step,
            hook: None,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            corpus_checksum: self.corpus_checksum.clone(),
            theta: self.theta.clone(),
            theta_ref: self.theta_ref.clone(),
            sdw: self.sdw.clone(),
        }
    }

    pub fn set_hook(&mut self, hook: Box<dyn StepHook>) {
        self.hook = Some(hook);
    }

    pub fn take_hook(&mut self) -> Option<Box<dyn StepHook>> {
        self.hook.take()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Allows the step budget to be extended when resuming.
    pub fn set_total_steps(&mut self, steps: u64) {
        self.config.steps = steps;
    }

    pub fn theta(&self) -> &PolicyParameters {
        &self.theta
    }

    pub fn theta_ref(&self) -> &PolicyParameters {
        &self.theta_ref
    }

    pub fn weights(&self) -> AspectWeights {
        self.sdw.weights()
    }

    pub fn sdw(&self) -> &SdwController {
        &self.sdw
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn corpus(&self) -> &[SyntheticCase] {
        &self.corpus
    }

    pub fn corpus_checksum(&self) -> &str {
        &self.corpus_checksum
    }

    fn notify(&mut self, stage: Stage, group: &GroupRecord) {
        if let Some(h) = self.hook.as_mut() {
            h.on_stage(self.step + 1, stage, group);
        }
    }

    /// Runs one step and returns its metrics (plus a weight-update record
    /// when the weights were refreshed at the end of it).
    pub fn step(&mut self) -> Result<Vec<MetricsRecord>> {
        let cfg = self.config.clone();
        let mut rng = step_rng(cfg.seed, self.step);
        let case = &self.corpus[rng.gen_range(0..self.corpus.len())];
        let gt = case.gt_subscores;
        let (case_id, features) = (case.case_id.clone(), case.features.clone());

        let theta_old = self.theta.clone();
        let mut group = sample_group(&theta_old, &case_id, &features, cfg.group_size, &mut rng)?;
        self.notify(Stage::Sample, &group);

        let weights = self.sdw.weights();
        let reward_params = cfg.rewards();
        group.parsed = group.completions.iter().map(|c| parse_completion(&c.text)).collect();
        group.rewards = group
            .parsed
            .iter()
            .map(|p| final_reward_with(p, &gt, &weights, &reward_params))
            .collect::<Result<_>>()?;
        self.notify(Stage::Reward, &group);

        let finals: Vec<f64> = group.rewards.iter().map(|r| r.r_final).collect();
        group.raw_advantages = normalize_advantages(&finals, cfg.epsilon_std);
        self.notify(Stage::Normalize, &group);

        let agree = agreement(&group.predicted_scores(), &gt);
        group.gamma = Some(agree.gamma);
        group.scale_factors = if cfg.use_mgas {
            scale_factors(&group.raw_advantages, agree.gamma, &cfg.mgas())?
        } else {
            vec![1.0; group.size()]
        };
        group.scaled_advantages = group
            .scale_factors
            .iter()
            .zip(&group.raw_advantages)
            .map(|(s, a)| s * a)
            .collect();
        self.notify(Stage::Scale, &group);

        let out = grpo_loss_and_gradient(&group, &self.theta, &self.theta_ref, cfg.kl_coeff).map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite {
                step: self.step + 1,
                detail,
            },
            other => other,
        })?;
        self.notify(Stage::Loss, &group);

        self.theta.axpy(-cfg.learning_rate, &out.grad);
        if !self.theta.is_finite() {
            return Err(Error::NonFinite {
                step: self.step + 1,
                detail: "parameters became non-finite".into(),
            });
        }
        self.notify(Stage::Update, &group);

        for p in &group.parsed {
            self.sdw.record(p.scores, gt);
        }
        self.notify(Stage::Record, &group);

        let g = group.size() as f64;
        let mean = |f: fn(&crate::rewards::RewardBreakdown) -> f64| group.rewards.iter().map(f).sum::<f64>() / g;
        let s = &group.scale_factors;
        let metrics = StepMetrics {
            step: self.step + 1,
            prompt_id: case_id,
            loss: out.loss,
            mean_reward: mean(|r| r.r_final),
            mean_reasoning: mean(|r| r.r_reasoning),
            mean_format: mean(|r| r.r_format),
            mean_sub_dyn: mean(|r| r.r_sub_dyn),
            mean_total: mean(|r| r.r_total),
            mean_acc: mean(|r| r.r_acc),
            weights: weights.w,
            f1: aspect_f1(self.sdw.window())?,
            gamma: agree.gamma,
            s_min: s.iter().copied().fold(f64::INFINITY, f64::min),
            s_mean: s.iter().sum::<f64>() / g,
            s_max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            kl: out.token_kl.iter().sum::<f64>() / NUM_TOKENS as f64,
            grad_norm: out.grad.norm(),
        };

        self.step += 1;
        let mut records = vec![MetricsRecord::Step(metrics)];
        if let Some(w) = self.sdw.on_step_end(self.step) {
            records.push(MetricsRecord::Weights(WeightUpdate {
                step: self.step,
                f1: w.f1_snapshot,
                gaps: w.gaps,
                weights: w.w,
            }));
            if let Some(h) = self.hook.as_mut() {
                h.on_stage(self.step, Stage::WeightRefresh, &group);
            }
        }
        Ok(records)
    }

    /// Steps until `config.steps` have been completed, passing every record
    /// to `sink` as it is produced.
    pub fn run<F>(&mut self, mut sink: F) -> Result<()>
    where
        F: FnMut(&MetricsRecord) -> Result<()>,
    {
        while self.step < self.config.steps {
            for r in self.step()? {
                sink(&r)?;
            }
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final parameters and the full log.
pub fn train(config: TrainConfig, corpus: Vec<SyntheticCase>) -> Result<(PolicyParameters, Vec<MetricsRecord>)> {
    let mut trainer = Trainer::new(config, corpus)?;
    let mut log = Vec::new();
    trainer.run(|r| {
        log.push(r.clone());
        Ok(())
    })?;
    Ok((trainer.theta, log))
}

/// Greedy count predictions for each case.
pub fn greedy_predictions(theta: &PolicyParameters, cases: &[SyntheticCase]) -> Vec<SubScoreVector> {
    cases.iter().map(|c| theta.predict_counts(&c.features)).collect()
}

/// Mean final reward (unit weights) of `samples` sampled completions per case,
/// with a fixed random stream so that two policies can be compared fairly.
pub fn mean_sampled_reward(
    theta: &PolicyParameters,
    cases: &[SyntheticCase],
    samples: usize,
    seed: u64,
    params: &RewardParams,
) -> Result<f64> {
    let weights = AspectWeights::unit();
    let mut rng = step_rng(seed, 0);
    let mut total = 0.0;
    let mut n = 0usize;
    for c in cases {
        let group = sample_group(theta, &c.case_id, &c.features, samples.max(2), &mut rng)?;
        for comp in &group.completions {
            total += final_reward_with(&parse_completion(&comp.text), &c.gt_subscores, &weights, params)?.r_final;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}
