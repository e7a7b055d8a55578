//! Run configuration, architecture export and the text artifacts of a run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gaitfield_core::io::read_manifest_sequences;
use gaitfield_core::{synthetic_sequences, CorpusSpec, Normalization, SilhouetteSequence, TransformOptions};
use serde::{Deserialize, Serialize};

use crate::cell::{CellArchitecture, EDGES, NUM_EDGES};
use crate::data::Dataset;
use crate::error::{NasError, Phase, Result};
use crate::model::ModelConfig;
use crate::ops::{OpKind, NUM_OPS};
use crate::search::{LossRecord, SearchConfig};

pub const CONFIG_FILE: &str = "config.toml";
pub const ARCHITECTURE_FILE: &str = "architecture.toml";
pub const ALPHA_HISTORY_FILE: &str = "alpha_history.csv";
pub const SEARCH_LOSS_FILE: &str = "loss.csv";
pub const RETRAIN_LOSS_FILE: &str = "retrain_loss.csv";
pub const WEIGHTS_FILE: &str = "weights.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LAST_GOOD_FILE: &str = "last_good.ckpt";

/// Where sequences come from and how they become field descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training corpus manifest; the synthetic corpus is generated when absent.
    pub manifest: Option<PathBuf>,
    /// Held-out probe manifest; synthetic held-out sequences when absent.
    pub probe_manifest: Option<PathBuf>,
    pub identities: usize,
    pub sequences_per_identity: usize,
    pub probes_per_identity: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub noise_prob: f64,
    pub corpus_seed: u64,
    /// `per-frame` or `per-seq`.
    pub normalization: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        let c = CorpusSpec::default();
        DataConfig {
            manifest: None,
            probe_manifest: None,
            identities: c.identities,
            sequences_per_identity: c.sequences_per_identity,
            probes_per_identity: 2,
            frames: c.frames,
            height: c.height,
            width: c.width,
            noise_prob: c.noise_prob,
            corpus_seed: c.seed,
            normalization: "per-frame".into(),
        }
    }
}

pub fn parse_normalization(s: &str) -> Result<Normalization> {
    match s {
        "per-frame" => Ok(Normalization::PerFrame),
        "per-seq" => Ok(Normalization::PerSequence),
        _ => Err(NasError::Config(format!(
            "normalization `{s}` is not per-frame or per-seq"
        ))),
    }
}

impl DataConfig {
    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            identities: self.identities,
            sequences_per_identity: self.sequences_per_identity,
            frames: self.frames,
            height: self.height,
            width: self.width,
            noise_prob: self.noise_prob,
            seed: self.corpus_seed,
        }
    }

    pub fn transform_options(&self) -> Result<TransformOptions> {
        Ok(TransformOptions {
            normalization: parse_normalization(&self.normalization)?,
            ..TransformOptions::default()
        })
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Training sequences; manifest paths are relative to `base`.
    pub fn training_sequences(&self, base: &Path) -> Result<Vec<SilhouetteSequence>> {
        match &self.manifest {
            Some(m) => Ok(read_manifest_sequences(&Self::resolve(base, m))?),
            None => Ok(synthetic_sequences(
                &self.corpus_spec(),
                0,
                self.sequences_per_identity,
            )?),
        }
    }

    /// Held-out probe sequences, disjoint from the training corpus.
    pub fn probe_sequences(&self, base: &Path) -> Result<Vec<SilhouetteSequence>> {
        match &self.probe_manifest {
            Some(m) => Ok(read_manifest_sequences(&Self::resolve(base, m))?),
            None => Ok(synthetic_sequences(&self.corpus_spec(), 1, self.probes_per_identity)?),
        }
    }

    pub fn training_set(&self, base: &Path) -> Result<Dataset> {
        Dataset::from_sequences(&self.training_sequences(base)?, self.transform_options()?)
    }

    pub fn probe_set(&self, base: &Path) -> Result<Dataset> {
        Dataset::from_sequences(&self.probe_sequences(base)?, self.transform_options()?)
    }
}

/// Everything a search, retrain or evaluation run is configured by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub retrain_iterations: usize,
    /// Steps between weight checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub search: SearchConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            retrain_iterations: 3000,
            checkpoint_every: 500,
            search: SearchConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| NasError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate().map_err(NasError::Config)?;
        self.model.validate().map_err(NasError::Config)?;
        if self.model.clip_len != self.search.clip_len {
            return Err(NasError::Config(format!(
                "model.clip_len {} differs from search.clip_len {}",
                self.model.clip_len, self.search.clip_len
            )));
        }
        if self.model.num_classes != self.data.identities && self.data.manifest.is_none() {
            return Err(NasError::Config(format!(
                "model.num_classes {} differs from data.identities {}",
                self.model.num_classes, self.data.identities
            )));
        }
        parse_normalization(&self.data.normalization)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeExport {
    index: usize,
    from: String,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    op: Option<String>,
    alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchitectureExport {
    /// Operation order of every `alpha` row.
    ops: Vec<String>,
    edge: Vec<EdgeExport>,
}

/// Per-edge architecture weights and, when discrete, the chosen operation names.
pub fn export_architecture(arch: &CellArchitecture) -> String {
    let doc = ArchitectureExport {
        ops: OpKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        edge: EDGES
            .iter()
            .enumerate()
            .map(|(e, (from, to))| EdgeExport {
                index: e,
                from: from.name().into(),
                to: to.name().into(),
                op: arch.discrete().map(|d| d[e].name().to_string()),
                alpha: arch.alpha()[e].to_vec(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("architecture exports always serialize")
}

pub fn parse_architecture(text: &str) -> Result<CellArchitecture> {
    let bad = |msg: String| NasError::Architecture(msg);
    let doc: ArchitectureExport = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
    let names: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
    if doc.ops != names {
        return Err(bad(format!("operation order must be {}", names.join(", "))));
    }
    if doc.edge.len() != NUM_EDGES {
        return Err(bad(format!(
            "{} edges listed, the cell has {NUM_EDGES}",
            doc.edge.len()
        )));
    }
    let mut alpha = Vec::with_capacity(NUM_EDGES * NUM_OPS);
    let mut ops = Vec::new();
    for (e, (edge, (from, to))) in doc.edge.iter().zip(EDGES).enumerate() {
        if edge.index != e || edge.from != from.name() || edge.to != to.name() {
            return Err(bad(format!(
                "edge {e} must be #{e} {} -> {}, found #{} {} -> {}",
                from.name(),
                to.name(),
                edge.index,
                edge.from,
                edge.to
            )));
        }
        if edge.alpha.len() != NUM_OPS {
            return Err(bad(format!(
                "edge {e} lists {} α values, expected {NUM_OPS}",
                edge.alpha.len()
            )));
        }
        alpha.extend_from_slice(&edge.alpha);
        if let Some(op) = &edge.op {
            ops.push(
                op.parse::<OpKind>()
                    .map_err(|u| bad(format!("edge {e}: unknown operation `{}`", u.0)))?,
            );
        }
    }
    let arch = CellArchitecture::from_alpha(&alpha).map_err(bad)?;
    match ops.len() {
        0 => Ok(arch),
        NUM_EDGES => Ok(arch.with_choice(ops.try_into().expect("length checked"))),
        n => Err(bad(format!("{n} of {NUM_EDGES} edges name an operation"))),
    }
}

/// `iteration` followed by the 60 architecture weights, one row per recorded state.
pub fn alpha_history_csv(history: &[Vec<f64>]) -> String {
    let mut out = String::from("iteration");
    for e in 0..NUM_EDGES {
        for k in OpKind::ALL {
            let _ = write!(out, ",e{e}.{}", k.name());
        }
    }
    out.push('\n');
    for (i, row) in history.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

pub const LOSS_HEADER: &str = "phase,step,loss,triplet,ce,active_triplets,single_identity";

pub fn loss_row(phase: Phase, r: &LossRecord) -> String {
    format!(
        "{},{},{:?},{:?},{:?},{},{}",
        phase, r.step, r.loss, r.triplet, r.ce, r.active_triplets, r.single_identity
    )
}

pub fn loss_csv<'a>(rows: impl IntoIterator<Item = (Phase, &'a LossRecord)>) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for (phase, r) in rows {
        out.push_str(&loss_row(phase, r));
        out.push('\n');
    }
    out
}
