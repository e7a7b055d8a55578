//! Shared extractor, fusion cell, GeM temporal pooling and part-strip embedding head.

use gaitfield_autodiff::{Conv3dSpec, Graph, ParamStore, Pool3dSpec, Result, Tensor, TensorError, Var};

use serde::{Deserialize, Serialize};

use crate::cell::{cell_params, md_cell_forward, CellArchitecture, CellMode, NUM_EDGES};
use crate::ops::{OpContext, NUM_OPS};
use crate::params::{init_store, Init, ParamLookup, ParamSpec, Scoped};

pub const ALPHA: &str = "alpha";
pub const GEM_K: &str = "gem.k";
/// Clamp floor applied before the GeM power.
pub const GEM_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Output channels of each extractor layer.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
    /// Layers (0-based) followed by a 2×2 spatial max-pool.
    pub pool_after: Vec<usize>,
    pub parts: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    /// Frames per clip; fixes the temporal-attention bottleneck.
    pub clip_len: usize,
    pub attention_reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: vec![8, 16, 32, 32],
            kernel: 3,
            leaky_slope: 0.01,
            pool_after: vec![0, 1],
            parts: 4,
            embed_dim: 32,
            num_classes: 8,
            clip_len: 4,
            attention_reduction: 4,
        }
    }
}

impl ModelConfig {
    pub fn feature_channels(&self) -> usize {
        *self.channels.last().expect("validated: at least one layer")
    }

    pub fn op_context(&self) -> OpContext {
        OpContext {
            channels: self.feature_channels(),
            frames: self.clip_len,
            reduction: self.attention_reduction,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(format!(
                "extractor channels must be a non-empty list of positive counts, got {:?}",
                self.channels
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(format!("extractor kernel {} must be odd", self.kernel));
        }
        if let Some(&l) = self.pool_after.iter().find(|&&l| l >= self.channels.len()) {
            return Err(format!("pool position {l} beyond {} layers", self.channels.len()));
        }
        if self.parts == 0 || self.embed_dim == 0 || self.num_classes == 0 || self.clip_len == 0 {
            return Err("parts, embed_dim, num_classes and clip_len must be ≥ 1".into());
        }
        if self.attention_reduction == 0 {
            return Err("attention_reduction must be ≥ 1".into());
        }
        Ok(())
    }

    /// Spatial size of the extractor output for an `h × w` input.
    pub fn feature_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.pool_after.iter().fold((h, w), |(h, w), _| (h / 2, w / 2))
    }
}

/// Every parameter of the network for `arch`; the `alpha` tensor is included only
/// for relaxed architectures.
pub fn model_params(cfg: &ModelConfig, arch: &CellArchitecture) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let k = cfg.kernel;
    let mut cin = 1;
    for (i, &c) in cfg.channels.iter().enumerate() {
        specs.push(ParamSpec::new(
            format!("extractor.conv{i}.weight"),
            &[c, cin, k, k, k],
            Init::FanIn(cin * k * k * k),
        ));
        specs.push(ParamSpec::new(format!("extractor.conv{i}.bias"), &[c], Init::Zeros));
        cin = c;
    }
    specs.extend(
        cell_params(arch, cfg.op_context())
            .into_iter()
            .map(|s| s.prefixed("cell")),
    );
    if !arch.is_discrete() {
        specs.push(ParamSpec::new(ALPHA, &[NUM_EDGES, NUM_OPS], Init::Uniform(1e-3)));
    }
    specs.push(ParamSpec::new(GEM_K, &[1], Init::Constant(1.0)));
    let c = cfg.feature_channels();
    for p in 0..cfg.parts {
        specs.push(ParamSpec::new(
            format!("head.part{p}.weight"),
            &[c, cfg.embed_dim],
            Init::FanIn(c),
        ));
        specs.push(ParamSpec::new(
            format!("head.part{p}.bias"),
            &[cfg.embed_dim],
            Init::Zeros,
        ));
    }
    specs.push(ParamSpec::new(
        "classifier.weight",
        &[cfg.embed_dim, cfg.num_classes],
        Init::FanIn(cfg.embed_dim),
    ));
    specs.push(ParamSpec::new("classifier.bias", &[cfg.num_classes], Init::Zeros));
    specs
}

/// Fresh seeded initialization. Relaxed architectures start α from the stored weights
/// when they are non-zero, else from a small random perturbation.
pub fn init_model(cfg: &ModelConfig, arch: &CellArchitecture, seed: u64) -> ParamStore {
    let mut store = init_store(&model_params(cfg, arch), seed);
    if !arch.is_discrete() && arch.alpha_flat().iter().any(|&v| v != 0.0) {
        let t = Tensor::new(&[NUM_EDGES, NUM_OPS], arch.alpha_flat()).expect("5×12 weights");
        store.insert(ALPHA, t);
    }
    store
}

/// Checks that `store` holds exactly the parameters of the network for `arch`.
pub fn validate_params(
    store: &ParamStore,
    cfg: &ModelConfig,
    arch: &CellArchitecture,
) -> std::result::Result<(), String> {
    let specs = model_params(cfg, arch);
    for s in &specs {
        match store.get(&s.name) {
            None => return Err(format!("parameter `{}` is missing", s.name)),
            Some(t) if t.shape() != s.shape.as_slice() => {
                return Err(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                ))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = store.names().find(|n| !specs.iter().any(|s| s.name == *n)) {
        return Err(format!("parameter `{extra}` does not belong to this network"));
    }
    Ok(())
}

/// The current relaxed architecture held by a parameter store.
pub fn architecture_of(store: &ParamStore) -> Option<CellArchitecture> {
    store
        .get(ALPHA)
        .and_then(|t| CellArchitecture::from_alpha(t.data()).ok())
}

/// Convolution + leaky rectifier stack; shared by both descriptors.
pub fn feature_extract(g: &mut Graph, x: Var, cfg: &ModelConfig, p: &dyn ParamLookup) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 5 || shape[1] != 1 {
        return Err(TensorError::InvalidArgument {
            op: "feature_extract",
            msg: format!("expected (B, 1, T, H, W), got {shape:?}"),
        });
    }
    let mut h = x;
    for i in 0..cfg.channels.len() {
        let w = p.param(&format!("extractor.conv{i}.weight"));
        let b = p.param(&format!("extractor.conv{i}.bias"));
        h = g.conv3d(h, w, Some(b), Conv3dSpec::default())?;
        h = g.leaky_relu(h, cfg.leaky_slope);
        if cfg.pool_after.contains(&i) {
            h = g.maxpool3d(h, Pool3dSpec::spatial(2))?;
        }
    }
    Ok(h)
}

/// `(mean_T clamp(x, ε)^k)^(1/k)`, keeping a unit temporal axis.
pub fn gem_pool(g: &mut Graph, x: Var, k: Var) -> Result<Var> {
    let c = g.clamp_min(x, GEM_EPS);
    let powered = g.power(c, k)?;
    let m = g.mean_axes(powered, &[2])?;
    let one = g.constant(Tensor::scalar(1.0));
    let inv = g.div(one, k)?;
    g.power(m, inv)
}

/// Horizontal strips `(start, len)` covering `height` rows; the last strip takes the remainder.
pub fn strips(height: usize, parts: usize) -> std::result::Result<Vec<(usize, usize)>, String> {
    if parts == 0 {
        return Err("parts must be ≥ 1".into());
    }
    let step = height.div_ceil(parts);
    let out: Vec<(usize, usize)> = (0..parts)
        .map(|i| (i * step, step.min(height.saturating_sub(i * step))))
        .collect();
    if out.iter().any(|&(_, len)| len == 0) {
        return Err(format!("{height} feature rows cannot form {parts} strips"));
    }
    Ok(out)
}

/// Per strip: spatial max + mean pooling and a strip-specific linear map → `(B, parts, D)`.
pub fn embedding_head(g: &mut Graph, f_agg: Var, parts: usize, p: &dyn ParamLookup) -> Result<Var> {
    let [b, c, _, h, _] = <[usize; 5]>::try_from(g.shape(f_agg)).map_err(|_| TensorError::InvalidArgument {
        op: "embedding_head",
        msg: format!("expected (B, C, 1, H, W), got {:?}", g.shape(f_agg)),
    })?;
    let strips = strips(h, parts).map_err(|msg| TensorError::InvalidArgument {
        op: "embedding_head",
        msg,
    })?;
    let mut outs = Vec::with_capacity(parts);
    for (i, (start, len)) in strips.into_iter().enumerate() {
        let s = g.narrow(f_agg, 3, start, len)?;
        let mx = g.max_axes(s, &[2, 3, 4])?;
        let mean = g.mean_axes(s, &[2, 3, 4])?;
        let pooled = g.add(mx, mean)?;
        let pooled = g.reshape(pooled, &[b, c])?;
        let e = g.matmul(pooled, p.param(&format!("head.part{i}.weight")))?;
        let e = g.add(e, p.param(&format!("head.part{i}.bias")))?;
        let d = g.shape(e)[1];
        outs.push(g.reshape(e, &[b, 1, d])?);
    }
    g.concat(&outs, 1)
}

/// Linear classifier on the part-averaged embedding.
pub fn classifier(g: &mut Graph, embeddings: Var, p: &dyn ParamLookup) -> Result<Var> {
    let [b, _, d] = <[usize; 3]>::try_from(g.shape(embeddings)).map_err(|_| TensorError::InvalidArgument {
        op: "classifier",
        msg: format!("expected (B, parts, D), got {:?}", g.shape(embeddings)),
    })?;
    let avg = g.mean_axes(embeddings, &[1])?;
    let avg = g.reshape(avg, &[b, d])?;
    let logits = g.matmul(avg, p.param("classifier.weight"))?;
    g.add(logits, p.param("classifier.bias"))
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `(B, parts, D)`.
    pub embeddings: Var,
    /// `(B, classes)`, absent when the classifier is skipped.
    pub logits: Option<Var>,
}

/// Runs both descriptor clips `(B, 1, T, H, W)` through the shared extractor as one
/// batch, fuses them in the cell and embeds the result.
pub fn forward(
    g: &mut Graph,
    sil: Var,
    field: Var,
    arch: &CellArchitecture,
    cfg: &ModelConfig,
    p: &dyn ParamLookup,
    with_logits: bool,
) -> Result<ForwardOutput> {
    if g.shape(sil) != g.shape(field) {
        return Err(TensorError::ShapeMismatch {
            op: "forward",
            lhs: g.shape(sil).to_vec(),
            rhs: g.shape(field).to_vec(),
        });
    }
    let b = g.shape(sil)[0];
    let both = g.concat(&[sil, field], 0)?;
    let feats = feature_extract(g, both, cfg, p)?;
    let f_sil = g.narrow(feats, 0, 0, b)?;
    let f_field = g.narrow(feats, 0, b, b)?;
    let cell = Scoped::new(p, "cell");
    let fused = match arch.discrete() {
        Some(ops) => md_cell_forward(g, f_sil, f_field, CellMode::Discrete(ops), &cell)?,
        None => md_cell_forward(g, f_sil, f_field, CellMode::Relaxed(p.param(ALPHA)), &cell)?,
    };
    let agg = gem_pool(g, fused, p.param(GEM_K))?;
    let embeddings = embedding_head(g, agg, cfg.parts, p)?;
    let logits = if with_logits {
        Some(classifier(g, embeddings, p)?)
    } else {
        None
    };
    Ok(ForwardOutput { embeddings, logits })
}
