use std::path::{Path, PathBuf};

use serde::Serialize;

use gaitfield_autodiff::{checkpoint_bytes, read_checkpoint, ParamStore};
use gaitfield_core::io::{encode_mask_pgm, read_manifest_sequences};
use gaitfield_core::SilhouetteSequence;
use gaitfield_nas::run::{
    alpha_history_csv, export_architecture, loss_row, parse_architecture, RunConfig, ALPHA_HISTORY_FILE,
    ARCHITECTURE_FILE, CHECKPOINT_DIR, CONFIG_FILE, LAST_GOOD_FILE, LOSS_HEADER, RETRAIN_LOSS_FILE, SEARCH_LOSS_FILE,
    WEIGHTS_FILE,
};
use gaitfield_nas::{
    evaluate_rank1, retrain as nas_retrain, search as nas_search, split_dataset, validate_params, CellArchitecture,
    Dataset, NasError, Phase, Progress,
};

use crate::error::{CliError, Result};
use crate::fsutil::{read_bytes, read_text, write_file};
use crate::manifest::{InputDigest, RunManifest};
use crate::{EvalArgs, RunArgs};

pub const SEARCH_WEIGHTS_FILE: &str = "search_weights.ckpt";
pub const EVAL_FILE: &str = "eval.toml";

struct Loaded {
    cfg: RunConfig,
    /// Directory that relative data paths in the config resolve against.
    base: PathBuf,
}

fn load_config(a: &RunArgs) -> Result<Loaded> {
    let (text, base) = match &a.config {
        Some(p) => (
            read_text(p)?,
            p.parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf(),
        ),
        None => (String::new(), PathBuf::from(".")),
    };
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| CliError::Input(format!("config: {e}")))?;
    if let Some(seed) = a.seed {
        cfg.search.seed = seed;
    }
    Ok(Loaded { cfg, base })
}

fn sequence_digest(name: &str, seqs: &[SilhouetteSequence]) -> InputDigest {
    let frames: Vec<Vec<u8>> = seqs
        .iter()
        .flat_map(|s| s.frames().iter().map(encode_mask_pgm))
        .collect();
    InputDigest::of_parts(name, frames.iter().map(Vec::as_slice))
}

fn source_name(manifest: Option<&Path>, synthetic: &str) -> String {
    manifest.map_or_else(|| synthetic.to_string(), |m| m.display().to_string())
}

fn training_data(l: &Loaded) -> Result<(Dataset, InputDigest)> {
    let seqs = l.cfg.data.training_sequences(&l.base)?;
    let digest = sequence_digest(&source_name(l.cfg.data.manifest.as_deref(), "synthetic:train"), &seqs);
    let data = Dataset::from_sequences(&seqs, l.cfg.data.transform_options()?)?;
    if data.classes.len() != l.cfg.model.num_classes {
        return Err(CliError::Input(format!(
            "the corpus has {} identities but model.num_classes is {}",
            data.classes.len(),
            l.cfg.model.num_classes
        )));
    }
    Ok((data, digest))
}

fn checkpoint_path(out: &Path, name: &str) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(name)
}

/// Loss rows and periodic checkpoints written while an optimizer loop runs.
struct Recorder<'a> {
    out: &'a Path,
    prefix: &'static str,
    every: usize,
    rows: String,
}

impl<'a> Recorder<'a> {
    fn new(out: &'a Path, prefix: &'static str, every: usize) -> Self {
        Recorder {
            out,
            prefix,
            every,
            rows: format!("{LOSS_HEADER}\n"),
        }
    }

    fn record(&mut self, p: &Progress) -> gaitfield_nas::Result<()> {
        self.rows.push_str(&loss_row(p.phase, p.record));
        self.rows.push('\n');
        let weight_step = matches!(p.phase, Phase::Weights | Phase::Retrain);
        if weight_step && self.every > 0 && p.record.step.is_multiple_of(self.every) {
            let path = checkpoint_path(self.out, &format!("{}_{:06}.ckpt", self.prefix, p.record.step));
            write_file(&path, &checkpoint_bytes(p.params)).map_err(|e| {
                NasError::Data(gaitfield_core::Error::File {
                    path: path.clone(),
                    msg: e.to_string(),
                })
            })?;
        }
        Ok(())
    }

    /// Saves what is known about a failed loop and converts the error.
    fn fail(&self, loss_file: &str, e: NasError) -> CliError {
        if let NasError::NonFiniteLoss { phase, step, last_good } = &e {
            let path = checkpoint_path(self.out, LAST_GOOD_FILE);
            let saved = write_file(&path, &checkpoint_bytes(last_good))
                .and_then(|()| write_file(&self.out.join(loss_file), self.rows.as_bytes()));
            return match saved {
                Ok(()) => CliError::Numeric(format!(
                    "non-finite {phase} loss at step {step}; last good weights saved to {}",
                    path.display()
                )),
                Err(w) => CliError::Numeric(format!("non-finite {phase} loss at step {step}; saving failed: {w}")),
            };
        }
        e.into()
    }
}

fn window_mean(values: &[f64], first: bool) -> f64 {
    let n = values.len().min(100);
    let w = if first {
        &values[..n]
    } else {
        &values[values.len() - n..]
    };
    w.iter().sum::<f64>() / n as f64
}

pub fn search(a: &RunArgs) -> Result<()> {
    let l = load_config(a)?;
    let (data, digest) = training_data(&l)?;
    let (train, val) = split_dataset(&data, l.cfg.search.val_fraction, l.cfg.search.seed)?;
    write_file(&a.out.join(CONFIG_FILE), l.cfg.to_toml().as_bytes())?;
    let mut rec = Recorder::new(&a.out, "search", l.cfg.checkpoint_every);
    let outcome = nas_search(&l.cfg.search, &l.cfg.model, &train, &val, &mut |p: &Progress| {
        rec.record(p)
    })
    .map_err(|e| rec.fail(SEARCH_LOSS_FILE, e))?;
    let arch = outcome.arch.discretize();
    write_file(&a.out.join(SEARCH_LOSS_FILE), rec.rows.as_bytes())?;
    write_file(
        &a.out.join(ALPHA_HISTORY_FILE),
        alpha_history_csv(&outcome.state.alpha_history).as_bytes(),
    )?;
    write_file(&a.out.join(ARCHITECTURE_FILE), export_architecture(&arch).as_bytes())?;
    write_file(&a.out.join(SEARCH_WEIGHTS_FILE), &checkpoint_bytes(&outcome.params))?;
    RunManifest::new("search", Some(l.cfg.search.seed), &l.cfg, vec![digest])?.write(&a.out)?;

    let val_loss: Vec<f64> = outcome.state.val_history.iter().map(|r| r.loss).collect();
    let ops = arch.discrete().expect("discretized").map(|k| k.name());
    println!("architecture={}", ops.join(","));
    println!("w_steps={}", outcome.state.w_steps);
    println!("alpha_steps={}", outcome.state.alpha_steps);
    if !val_loss.is_empty() {
        println!("val_loss_initial={}", window_mean(&val_loss, true));
        println!("val_loss_final={}", window_mean(&val_loss, false));
    }
    Ok(())
}

fn load_architecture(a: &RunArgs) -> Result<(CellArchitecture, InputDigest)> {
    let path = a.arch.clone().unwrap_or_else(|| a.out.join(ARCHITECTURE_FILE));
    let text = read_text(&path)?;
    let arch = parse_architecture(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let arch = if arch.is_discrete() { arch } else { arch.discretize() };
    Ok((
        arch,
        InputDigest::of_parts(path.display().to_string(), [text.as_bytes()]),
    ))
}

pub fn retrain(a: &RunArgs) -> Result<()> {
    let l = load_config(a)?;
    let (arch, arch_digest) = load_architecture(a)?;
    let (data, digest) = training_data(&l)?;
    let mut rec = Recorder::new(&a.out, "retrain", l.cfg.checkpoint_every);
    let outcome = nas_retrain(
        &arch,
        &l.cfg.search,
        &l.cfg.model,
        &data,
        l.cfg.retrain_iterations,
        &mut |p: &Progress| rec.record(p),
    )
    .map_err(|e| rec.fail(RETRAIN_LOSS_FILE, e))?;
    write_file(&a.out.join(RETRAIN_LOSS_FILE), rec.rows.as_bytes())?;
    write_file(&a.out.join(WEIGHTS_FILE), &checkpoint_bytes(&outcome.params))?;
    RunManifest::new("retrain", Some(l.cfg.search.seed), &l.cfg, vec![digest, arch_digest])?.write(&a.out)?;
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        println!("loss_initial={}", first.loss);
        println!("loss_final={}", last.loss);
    }
    println!("iterations={}", outcome.history.len());
    Ok(())
}

fn manifest_set(path: &Path, l: &Loaded) -> Result<(Dataset, InputDigest)> {
    let seqs = read_manifest_sequences(path)?;
    let digest = sequence_digest(&path.display().to_string(), &seqs);
    Ok((Dataset::from_sequences(&seqs, l.cfg.data.transform_options()?)?, digest))
}

#[derive(Serialize)]
struct EvalReport {
    rank1: f64,
    gallery: usize,
    probes: usize,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let l = load_config(&a.run)?;
    let (arch, arch_digest) = load_architecture(&a.run)?;
    let weights_path = a.weights.clone().unwrap_or_else(|| a.run.out.join(WEIGHTS_FILE));
    let weights = read_bytes(&weights_path)?;
    let params: ParamStore =
        read_checkpoint(&weights).map_err(|e| CliError::Input(format!("{}: {e}", weights_path.display())))?;
    validate_params(&params, &l.cfg.model, &arch)
        .map_err(|e| CliError::Input(format!("{}: {e}", weights_path.display())))?;
    let (gallery, gallery_digest) = match &a.gallery {
        Some(p) => manifest_set(p, &l)?,
        None => training_data(&l)?,
    };
    let (probe, probe_digest) = match &a.probe {
        Some(p) => manifest_set(p, &l)?,
        None => {
            let seqs = l.cfg.data.probe_sequences(&l.base)?;
            let name = source_name(l.cfg.data.probe_manifest.as_deref(), "synthetic:probe");
            let digest = sequence_digest(&name, &seqs);
            (Dataset::from_sequences(&seqs, l.cfg.data.transform_options()?)?, digest)
        }
    };
    let rank1 = evaluate_rank1(&params, &arch, &l.cfg.model, &gallery, &probe)?;
    let report = EvalReport {
        rank1,
        gallery: gallery.len(),
        probes: probe.len(),
    };
    let weights_digest = InputDigest::of_parts(weights_path.display().to_string(), [weights.as_slice()]);
    write_file(
        &a.run.out.join(EVAL_FILE),
        toml::to_string(&report).expect("plain report").as_bytes(),
    )?;
    let inputs = vec![gallery_digest, probe_digest, arch_digest, weights_digest];
    RunManifest::new("eval", Some(l.cfg.search.seed), &l.cfg, inputs)?.write(&a.run.out)?;
    println!("rank1={rank1}");
    println!("gallery={}", gallery.len());
    println!("probes={}", probe.len());
    Ok(())
}
