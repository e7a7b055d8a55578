use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use gaitfield_core::io::{encode_pgm, read_dstf_file};
use gaitfield_core::{geni, EntropyReport};

use crate::error::{CliError, Result};
use crate::fsutil::write_file;
use crate::inputs::{load_silhouettes, output_path, NamedSequence};
use crate::manifest::{InputDigest, RunManifest};
use crate::MetricsArgs;

use super::transform::DSTF_EXT;

pub const CSV_HEADER: &str = "sequence,frame,silhouette_entropy,dstf_entropy";

#[derive(Serialize)]
struct Snapshot {
    bins: usize,
}

struct Row {
    sil: EntropyReport,
    field: EntropyReport,
}

fn measure(s: &NamedSequence, dstf_dir: &Path, bins: usize) -> Result<(Row, InputDigest)> {
    let path = output_path(dstf_dir, &s.name, DSTF_EXT);
    if !path.is_file() {
        return Err(CliError::Input(format!(
            "{}: missing field file for `{}`",
            path.display(),
            s.name
        )));
    }
    let field = read_dstf_file(&path)?;
    if field.len() != s.seq.len() {
        return Err(CliError::Input(format!(
            "{}: {} field frames for {} silhouette frames",
            path.display(),
            field.len(),
            s.seq.len()
        )));
    }
    if field.frames().iter().any(|f| f.dims() != s.seq.dims()) {
        return Err(CliError::Input(format!(
            "{}: frame size differs from the silhouettes",
            path.display()
        )));
    }
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let row = Row {
        sil: EntropyReport::of_silhouettes(&s.seq, bins)?,
        field: EntropyReport::of_dstf(&field, bins)?,
    };
    Ok((
        row,
        InputDigest::of_parts(format!("{}.{DSTF_EXT}", s.name), [bytes.as_slice()]),
    ))
}

pub fn run(a: &MetricsArgs) -> Result<()> {
    if a.bins < 2 {
        return Err(CliError::Input("--bins must be ≥ 2".into()));
    }
    if !a.dstf.is_dir() {
        return Err(CliError::Input(format!(
            "{}: field directory not found",
            a.dstf.display()
        )));
    }
    let seqs = load_silhouettes(&a.sil)?;
    let measured: Vec<(Row, InputDigest)> = seqs
        .par_iter()
        .map(|s| measure(s, &a.dstf, a.bins))
        .collect::<Result<_>>()?;

    let mut csv = format!("{CSV_HEADER}\n");
    let (mut sil_sum, mut field_sum, mut n) = (0.0, 0.0, 0usize);
    for (s, (row, _)) in seqs.iter().zip(&measured) {
        for (t, (hs, hf)) in row
            .sil
            .per_frame_entropy
            .iter()
            .zip(&row.field.per_frame_entropy)
            .enumerate()
        {
            let _ = writeln!(csv, "{},{t},{hs:?},{hf:?}", s.name);
            sil_sum += hs;
            field_sum += hf;
            n += 1;
        }
    }
    let (sil_mean, field_mean) = (sil_sum / n as f64, field_sum / n as f64);
    if sil_mean <= 0.0 {
        return Err(CliError::Degenerate("mean silhouette entropy is zero".into()));
    }
    let ratio = field_mean / sil_mean;
    let _ = writeln!(csv, "summary,mean,{sil_mean:?},{field_mean:?}");
    let _ = writeln!(csv, "summary,ratio,,{ratio:?}");
    write_file(&a.out, csv.as_bytes())?;

    let dir = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    for s in &seqs {
        let map = geni(&s.seq);
        write_file(
            &output_path(&dir.join("geni"), &s.name, "pgm"),
            &encode_pgm(map.width, map.height, &map.to_gray()),
        )?;
    }
    let mut digests: Vec<InputDigest> = seqs.iter().map(|s| s.digest.clone()).collect();
    digests.extend(measured.into_iter().map(|(_, d)| d));
    RunManifest::new("metrics", None, &Snapshot { bins: a.bins }, digests)?.write(dir)?;
    println!("silhouette_entropy={sil_mean}");
    println!("dstf_entropy={field_mean}");
    println!("ratio={ratio}");
    Ok(())
}
