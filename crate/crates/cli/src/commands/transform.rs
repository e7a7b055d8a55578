use rayon::prelude::*;
use serde::Serialize;

use gaitfield_core::io::{encode_dstf, encode_preview_pgm, write_manifest, ManifestEntry};
use gaitfield_core::{transform_sequence, DegeneratePolicy, DstfSequence, Error, Normalization, TransformOptions};

use crate::error::{CliError, Result};
use crate::fsutil::write_file;
use crate::inputs::{load_silhouettes, output_path, NamedSequence, MANIFEST_CSV};
use crate::manifest::RunManifest;
use crate::{DegenerateArg, NormArg, TransformArgs};

pub const DSTF_EXT: &str = "dstf";

#[derive(Serialize)]
struct Snapshot {
    norm: &'static str,
    degenerate: &'static str,
    preview: bool,
}

pub fn options(norm: NormArg, degenerate: DegenerateArg) -> TransformOptions {
    TransformOptions {
        normalization: match norm {
            NormArg::PerFrame => Normalization::PerFrame,
            NormArg::PerSeq => Normalization::PerSequence,
        },
        degenerate: match degenerate {
            DegenerateArg::Skip => DegeneratePolicy::Skip,
            DegenerateArg::Zero => DegeneratePolicy::ZeroFill,
            DegenerateArg::Error => DegeneratePolicy::Error,
        },
    }
}

fn transform_one(s: &NamedSequence, opts: TransformOptions) -> Result<DstfSequence> {
    transform_sequence(&s.seq, opts).map_err(|e| match e {
        Error::EmptyBoundary { frame: Some(i) } => CliError::Degenerate(format!(
            "{}: frame has no boundary pixels",
            s.frame_paths
                .get(i)
                .map_or_else(|| s.name.clone(), |p| p.display().to_string())
        )),
        e => CliError::from(e),
    })
}

pub fn run(a: &TransformArgs) -> Result<()> {
    let opts = options(a.norm, a.degenerate);
    let seqs = load_silhouettes(&a.input)?;
    let fields: Vec<DstfSequence> = seqs.par_iter().map(|s| transform_one(s, opts)).collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(seqs.len());
    for (s, f) in seqs.iter().zip(&fields) {
        write_file(&output_path(&a.out, &s.name, DSTF_EXT), &encode_dstf(f)?)?;
        if a.preview {
            for (t, frame) in f.frames().iter().enumerate() {
                write_file(
                    &a.out.join(&s.name).join(format!("{t:06}.pgm")),
                    &encode_preview_pgm(frame),
                )?;
            }
        }
        entries.push(ManifestEntry {
            subject_id: s.seq.subject_id.clone().unwrap_or_else(|| s.name.clone()),
            view_id: s.seq.view_id.clone().unwrap_or_default(),
            path: format!("{}.{DSTF_EXT}", s.name).into(),
        });
    }
    write_manifest(&a.out.join(MANIFEST_CSV), &entries)?;
    let snapshot = Snapshot {
        norm: match a.norm {
            NormArg::PerFrame => "per-frame",
            NormArg::PerSeq => "per-seq",
        },
        degenerate: match a.degenerate {
            DegenerateArg::Skip => "skip",
            DegenerateArg::Zero => "zero",
            DegenerateArg::Error => "error",
        },
        preview: a.preview,
    };
    let digests = seqs.iter().map(|s| s.digest.clone()).collect();
    RunManifest::new("transform", None, &snapshot, digests)?.write(&a.out)?;
    println!("sequences={}", seqs.len());
    println!("frames={}", fields.iter().map(DstfSequence::len).sum::<usize>());
    Ok(())
}
