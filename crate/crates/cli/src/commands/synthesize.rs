use serde::Serialize;

use gaitfield_core::io::{encode_mask_pgm, write_manifest, write_sequence_dir, ManifestEntry};
use gaitfield_core::{synthetic_sequences, CorpusSpec};

use crate::error::Result;
use crate::inputs::MANIFEST_CSV;
use crate::manifest::{InputDigest, RunManifest};
use crate::SynthesizeArgs;

#[derive(Serialize)]
struct Snapshot {
    identities: usize,
    sequences: usize,
    frames: usize,
    height: usize,
    width: usize,
    noise: f64,
    stream: u64,
}

pub fn run(a: &SynthesizeArgs) -> Result<()> {
    let spec = CorpusSpec {
        identities: a.identities,
        sequences_per_identity: a.sequences,
        frames: a.frames,
        height: a.height,
        width: a.width,
        noise_prob: a.noise,
        seed: a.seed,
    };
    let seqs = synthetic_sequences(&spec, a.stream, a.sequences)?;
    let mut entries = Vec::with_capacity(seqs.len());
    for s in &seqs {
        let subject = s.subject_id.clone().unwrap_or_default();
        let view = s.view_id.clone().unwrap_or_default();
        let rel = format!("{subject}/{view}");
        write_sequence_dir(&a.out.join(&rel), s)?;
        entries.push(ManifestEntry {
            subject_id: subject,
            view_id: view,
            path: rel.into(),
        });
    }
    write_manifest(&a.out.join(MANIFEST_CSV), &entries)?;
    let frames: Vec<Vec<u8>> = seqs
        .iter()
        .flat_map(|s| s.frames().iter().map(encode_mask_pgm))
        .collect();
    let snapshot = Snapshot {
        identities: a.identities,
        sequences: a.sequences,
        frames: a.frames,
        height: a.height,
        width: a.width,
        noise: a.noise,
        stream: a.stream,
    };
    let digest = InputDigest::of_parts("generated", frames.iter().map(Vec::as_slice));
    RunManifest::new("synthesize", Some(a.seed), &snapshot, vec![digest])?.write(&a.out)?;
    println!("sequences={}", seqs.len());
    println!("frames={}", frames.len());
    Ok(())
}
