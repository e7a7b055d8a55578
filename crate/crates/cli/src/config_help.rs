//! The printed schema of run configuration files.

use std::fmt::Write as _;

use gaitfield_nas::run::RunConfig;

/// `(key, meaning)` for every configuration key.
pub const KEYS: &[(&str, &str)] = &[
    ("retrain_iterations", "weight steps of the retrain stage"),
    ("checkpoint_every", "weight steps between checkpoints; 0 disables them"),
    ("search.u", "weight steps per architecture step"),
    ("search.lr_alpha", "Adam learning rate of the architecture weights"),
    ("search.lr_w", "Adam learning rate of the network weights"),
    ("search.betas_alpha", "Adam (β1, β2) of the architecture weights"),
    ("search.betas_w", "Adam (β1, β2) of the network weights"),
    ("search.margin", "triplet margin"),
    ("search.p", "identities per batch (≥ 2)"),
    ("search.k", "sequences per identity in a batch (≥ 2)"),
    ("search.iterations", "architecture steps of the search"),
    ("search.seed", "seed of initialization, split and batch sampling"),
    (
        "search.val_fraction",
        "per-identity share of sequences used to update α, in (0, 1)",
    ),
    ("search.clip_len", "frames per sampled clip; must equal model.clip_len"),
    ("model.channels", "output channels of each extractor layer"),
    ("model.kernel", "odd extractor kernel size"),
    ("model.leaky_slope", "negative slope of the extractor activations"),
    (
        "model.pool_after",
        "0-based extractor layers followed by a 2×2 spatial max-pool",
    ),
    ("model.parts", "horizontal strips of the embedding head"),
    ("model.embed_dim", "embedding size per strip"),
    ("model.num_classes", "identities seen by the classifier"),
    ("model.clip_len", "frames per clip fed to the network"),
    (
        "model.attention_reduction",
        "bottleneck reduction of the attention operations",
    ),
    (
        "data.manifest",
        "training manifest CSV (subject_id,view_id,path); synthetic corpus when absent",
    ),
    (
        "data.probe_manifest",
        "held-out probe manifest; synthetic held-out sequences when absent",
    ),
    ("data.identities", "synthetic identities"),
    (
        "data.sequences_per_identity",
        "synthetic training sequences per identity",
    ),
    ("data.probes_per_identity", "synthetic held-out sequences per identity"),
    ("data.frames", "synthetic frames per sequence"),
    ("data.height", "synthetic frame height"),
    ("data.width", "synthetic frame width"),
    ("data.noise_prob", "synthetic per-pixel flip probability"),
    ("data.corpus_seed", "seed of the synthetic corpus"),
    ("data.normalization", "field normalization: per-frame or per-seq"),
];

pub fn schema() -> String {
    let mut out = String::from("# Run configuration (TOML). Every key is optional; unknown keys are rejected.\n#\n");
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in KEYS {
        let _ = writeln!(out, "#   {k:<width$}  {v}");
    }
    out.push_str("#\n# Defaults:\n\n");
    out.push_str(&RunConfig::default().to_toml());
    out
}
