//! First-order bilevel search, discretization, retraining and rank-1 evaluation.

use gaitfield_autodiff::{AdamConfig, AdamState, Graph, ParamStore, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::CellArchitecture;
use crate::data::{gather_clips, sample_batch, windows, Batch, Dataset};
use crate::error::{NasError, Phase, Result};
use crate::loss::{total_loss, DEFAULT_MARGIN};
use crate::model::{architecture_of, forward, init_model, ModelConfig, ALPHA, GEM_K};

const BATCH_STREAM: u64 = 0x5eed_ba7c;
const RETRAIN_STREAM: u64 = 0x2e72_a1f0;
/// Clips per evaluation graph.
const EMBED_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Weight steps per architecture step.
    pub u: usize,
    pub lr_alpha: f64,
    pub lr_w: f64,
    pub betas_alpha: (f64, f64),
    pub betas_w: (f64, f64),
    pub margin: f64,
    /// Identities per batch.
    pub p: usize,
    /// Sequences per identity in a batch.
    pub k: usize,
    /// Architecture steps.
    pub iterations: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub clip_len: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            u: 1,
            lr_alpha: 3e-3,
            lr_w: 1e-3,
            betas_alpha: (0.5, 0.999),
            betas_w: (0.9, 0.999),
            margin: DEFAULT_MARGIN,
            p: 4,
            k: 2,
            iterations: 2000,
            seed: 7,
            val_fraction: 0.5,
            clip_len: 4,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let betas_ok = |(a, b): (f64, f64)| (0.0..1.0).contains(&a) && (0.0..1.0).contains(&b);
        if self.u == 0 {
            return Err("u must be ≥ 1".into());
        }
        if self.p < 2 || self.k < 2 {
            return Err(format!("P×K = {}×{} needs P ≥ 2 and K ≥ 2", self.p, self.k));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if !(self.lr_alpha >= 0.0 && self.lr_w >= 0.0) {
            return Err("learning rates must be ≥ 0".into());
        }
        if !betas_ok(self.betas_alpha) || !betas_ok(self.betas_w) {
            return Err("Adam betas must lie in [0, 1)".into());
        }
        if !(self.margin >= 0.0) || self.clip_len == 0 {
            return Err("margin must be ≥ 0 and clip_len ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// 1-based step within its phase.
    pub step: usize,
    pub loss: f64,
    pub triplet: f64,
    pub ce: f64,
    pub active_triplets: usize,
    pub single_identity: bool,
}

/// Everything a hook sees after one optimizer step.
pub struct Progress<'a> {
    pub phase: Phase,
    pub record: &'a LossRecord,
    pub params: &'a ParamStore,
}

pub type Hook<'a> = dyn FnMut(&Progress) -> Result<()> + 'a;

pub struct SearchState {
    pub w_steps: usize,
    pub alpha_steps: usize,
    pub adam_w: AdamState,
    pub adam_alpha: AdamState,
    pub rng: ChaCha8Rng,
    pub train_history: Vec<LossRecord>,
    pub val_history: Vec<LossRecord>,
    /// The 60 architecture weights before the first and after every architecture step.
    pub alpha_history: Vec<Vec<f64>>,
}

pub struct SearchOutcome {
    /// The final relaxed architecture.
    pub arch: CellArchitecture,
    pub params: ParamStore,
    pub state: SearchState,
}

fn is_alpha(name: &str) -> bool {
    name == ALPHA
}

fn batch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Step<'a> {
    arch: &'a CellArchitecture,
    model: &'a ModelConfig,
    margin: f64,
    phase: Phase,
}

impl Step<'_> {
    /// One forward/backward pass and Adam update of the parameters selected by `trainable`.
    fn run(
        &self,
        params: &mut ParamStore,
        adam: &mut AdamState,
        batch: &Batch,
        trainable: impl Fn(&str) -> bool,
        step: usize,
    ) -> Result<LossRecord> {
        let non_finite = |params: &ParamStore| NasError::NonFiniteLoss {
            phase: self.phase,
            step,
            last_good: Box::new(params.clone()),
        };
        let mut g = Graph::new();
        let b = params.bind(&mut g, &trainable);
        let sil = g.constant(batch.sil.clone());
        let field = g.constant(batch.field.clone());
        let out = forward(&mut g, sil, field, self.arch, self.model, &b, true)?;
        let logits = out.logits.expect("requested logits");
        let parts = total_loss(&mut g, out.embeddings, logits, &batch.labels, self.margin)?;
        let record = LossRecord {
            step,
            loss: g.value(parts.total).item(),
            triplet: g.value(parts.triplet).item(),
            ce: g.value(parts.ce).item(),
            active_triplets: parts.stats.active,
            single_identity: parts.stats.single_identity,
        };
        if !record.loss.is_finite() {
            return Err(non_finite(params));
        }
        let grads = g.backward(parts.total)?;
        let grads = b.gradients(&g, &grads);
        let before = params.clone();
        match adam.step(params, &grads) {
            Ok(()) => {}
            Err(TensorError::NonFiniteGradient { .. }) => return Err(non_finite(&before)),
            Err(e) => return Err(e.into()),
        }
        if let Some(k) = params.get_mut(GEM_K) {
            k.data_mut().iter_mut().for_each(|v| *v = v.max(1.0));
        }
        Ok(record)
    }
}

fn check_inputs(cfg: &SearchConfig, model: &ModelConfig) -> Result<()> {
    cfg.validate().map_err(NasError::Config)?;
    model.validate().map_err(NasError::Config)?;
    if model.clip_len != cfg.clip_len {
        return Err(NasError::Config(format!(
            "model clip_len {} differs from search clip_len {}",
            model.clip_len, cfg.clip_len
        )));
    }
    Ok(())
}

/// Alternates `u` weight steps on `train` with one architecture step on `val`, using
/// the current weights in place of the inner optimum.
pub fn search(
    cfg: &SearchConfig,
    model: &ModelConfig,
    train: &Dataset,
    val: &Dataset,
    hook: &mut Hook,
) -> Result<SearchOutcome> {
    check_inputs(cfg, model)?;
    let relaxed = CellArchitecture::default();
    let mut params = init_model(model, &relaxed, cfg.seed);
    let mut state = SearchState {
        w_steps: 0,
        alpha_steps: 0,
        adam_w: AdamState::new(AdamConfig::new(cfg.lr_w, cfg.betas_w), &params, |n| !is_alpha(n)),
        adam_alpha: AdamState::new(AdamConfig::new(cfg.lr_alpha, cfg.betas_alpha), &params, is_alpha),
        rng: batch_rng(cfg.seed, BATCH_STREAM),
        train_history: Vec::with_capacity(cfg.iterations * cfg.u),
        val_history: Vec::with_capacity(cfg.iterations),
        alpha_history: vec![params.get(ALPHA).expect("relaxed model has α").data().to_vec()],
    };
    let w_step = Step {
        arch: &relaxed,
        model,
        margin: cfg.margin,
        phase: Phase::Weights,
    };
    let a_step = Step {
        phase: Phase::Alpha,
        ..w_step
    };
    for _ in 0..cfg.iterations {
        for _ in 0..cfg.u {
            let batch = sample_batch(train, cfg.p, cfg.k, cfg.clip_len, &mut state.rng)?;
            let rec = w_step.run(
                &mut params,
                &mut state.adam_w,
                &batch,
                |n| !is_alpha(n),
                state.w_steps + 1,
            )?;
            state.w_steps += 1;
            state.train_history.push(rec);
            hook(&Progress {
                phase: Phase::Weights,
                record: &rec,
                params: &params,
            })?;
        }
        let batch = sample_batch(val, cfg.p, cfg.k, cfg.clip_len, &mut state.rng)?;
        let rec = a_step.run(
            &mut params,
            &mut state.adam_alpha,
            &batch,
            is_alpha,
            state.alpha_steps + 1,
        )?;
        state.alpha_steps += 1;
        state.val_history.push(rec);
        state
            .alpha_history
            .push(params.get(ALPHA).expect("relaxed model has α").data().to_vec());
        hook(&Progress {
            phase: Phase::Alpha,
            record: &rec,
            params: &params,
        })?;
    }
    let arch = architecture_of(&params).ok_or_else(|| NasError::Architecture("α left the finite range".into()))?;
    Ok(SearchOutcome { arch, params, state })
}

pub fn discretize(arch: &CellArchitecture) -> CellArchitecture {
    arch.discretize()
}

pub struct RetrainOutcome {
    pub params: ParamStore,
    pub history: Vec<LossRecord>,
}

/// Trains a freshly initialized network with the discrete architecture on `data`.
pub fn retrain(
    arch: &CellArchitecture,
    cfg: &SearchConfig,
    model: &ModelConfig,
    data: &Dataset,
    iterations: usize,
    hook: &mut Hook,
) -> Result<RetrainOutcome> {
    check_inputs(cfg, model)?;
    if !arch.is_discrete() {
        return Err(NasError::Architecture(
            "retraining needs a discrete architecture".into(),
        ));
    }
    let mut params = init_model(model, arch, cfg.seed);
    let mut adam = AdamState::new(AdamConfig::new(cfg.lr_w, cfg.betas_w), &params, |_| true);
    let mut rng = batch_rng(cfg.seed, RETRAIN_STREAM);
    let step = Step {
        arch,
        model,
        margin: cfg.margin,
        phase: Phase::Retrain,
    };
    let mut history = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let batch = sample_batch(data, cfg.p, cfg.k, cfg.clip_len, &mut rng)?;
        let rec = step.run(&mut params, &mut adam, &batch, |_| true, i + 1)?;
        history.push(rec);
        hook(&Progress {
            phase: Phase::Retrain,
            record: &rec,
            params: &params,
        })?;
    }
    Ok(RetrainOutcome { params, history })
}

/// Part-concatenated embedding of every sample, averaged over its non-overlapping clips.
pub fn embed(
    params: &ParamStore,
    arch: &CellArchitecture,
    model: &ModelConfig,
    data: &Dataset,
) -> Result<Vec<Vec<f64>>> {
    model.validate().map_err(NasError::Config)?;
    let clip = model.clip_len;
    let mut clips = Vec::new();
    for (i, s) in data.samples.iter().enumerate() {
        let starts = windows(s.frames, clip);
        if starts.is_empty() {
            return Err(NasError::Samples(format!(
                "a `{}` sequence has {} frames, clips need {clip}",
                s.subject, s.frames
            )));
        }
        clips.extend(starts.into_iter().map(|t| (i, t)));
    }
    let dim = model.parts * model.embed_dim;
    let mut sums = vec![vec![0.0; dim]; data.len()];
    let mut counts = vec![0usize; data.len()];
    for chunk in clips.chunks(EMBED_CHUNK) {
        let batch = gather_clips(data, chunk, clip)?;
        let mut g = Graph::new();
        let b = params.bind(&mut g, |_| false);
        let sil = g.constant(batch.sil);
        let field = g.constant(batch.field);
        let out = forward(&mut g, sil, field, arch, model, &b, false)?;
        for (row, &(i, _)) in g.value(out.embeddings).data().chunks(dim).zip(chunk) {
            sums[i].iter_mut().zip(row).for_each(|(s, v)| *s += v);
            counts[i] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect())
}

/// Index of the nearest gallery embedding (ties to the lowest index).
pub fn nearest(gallery: &[Vec<f64>], query: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gallery.iter().enumerate() {
        let d: f64 = g.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Fraction of probes whose nearest gallery embedding has the same subject.
pub fn evaluate_rank1(
    params: &ParamStore,
    arch: &CellArchitecture,
    model: &ModelConfig,
    gallery: &Dataset,
    probe: &Dataset,
) -> Result<f64> {
    if gallery.is_empty() {
        return Err(NasError::Samples("empty gallery".into()));
    }
    if probe.is_empty() {
        return Err(NasError::Samples("empty probe set".into()));
    }
    if let Some(s) = probe
        .samples
        .iter()
        .find(|p| !gallery.samples.iter().any(|g| g.subject == p.subject))
    {
        return Err(NasError::Samples(format!(
            "probe identity `{}` is absent from the gallery",
            s.subject
        )));
    }
    let ge = embed(params, arch, model, gallery)?;
    let pe = embed(params, arch, model, probe)?;
    let correct = pe
        .iter()
        .zip(&probe.samples)
        .filter(|(e, s)| {
            let i = nearest(&ge, e).expect("non-empty gallery");
            gallery.samples[i].subject == s.subject
        })
        .count();
    Ok(correct as f64 / probe.len() as f64)
}
