//! Resolution of silhouette inputs: a manifest CSV, a directory holding `manifest.csv`,
//! or a single directory of PGM frames.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gaitfield_core::io::{frame_paths, load_pgm, read_manifest, ManifestEntry};
use gaitfield_core::SilhouetteSequence;

use crate::error::{CliError, Result};
use crate::fsutil::read_bytes;
use crate::manifest::InputDigest;

pub const MANIFEST_CSV: &str = "manifest.csv";

pub struct NamedSequence {
    /// Relative output stem, `/`-separated.
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    pub seq: SilhouetteSequence,
    pub digest: InputDigest,
}

fn relative_name(entry: &ManifestEntry, root: &Path) -> String {
    match entry.path.strip_prefix(root) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/"),
        _ => format!("{}/{}", entry.subject_id, entry.view_id),
    }
}

fn load_dir(dir: &Path, name: String, labels: Option<(&str, &str)>) -> Result<NamedSequence> {
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(CliError::Input(format!("{}: no .pgm frames", dir.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    let mut bytes = Vec::with_capacity(paths.len());
    for p in &paths {
        let b = read_bytes(p)?;
        frames.push(load_pgm(&b).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?);
        bytes.push(b);
    }
    let mut seq = SilhouetteSequence::new(frames).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    if let Some((s, v)) = labels {
        seq = seq.with_labels(s, v);
    }
    Ok(NamedSequence {
        digest: InputDigest::of_parts(name.clone(), bytes.iter().map(Vec::as_slice)),
        name,
        frame_paths: paths,
        seq,
    })
}

fn load_manifest(path: &Path) -> Result<Vec<NamedSequence>> {
    let root = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for entry in read_manifest(path)? {
        let name = relative_name(&entry, root);
        if !seen.insert(name.clone()) {
            return Err(CliError::Input(format!("{}: `{name}` is listed twice", path.display())));
        }
        out.push(load_dir(&entry.path, name, Some((&entry.subject_id, &entry.view_id)))?);
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "{}: manifest lists no sequences",
            path.display()
        )));
    }
    Ok(out)
}

pub fn load_silhouettes(path: &Path) -> Result<Vec<NamedSequence>> {
    if path.is_file() {
        return load_manifest(path);
    }
    if !path.is_dir() {
        return Err(CliError::Input(format!(
            "{}: no such file or directory",
            path.display()
        )));
    }
    let manifest = path.join(MANIFEST_CSV);
    if manifest.is_file() {
        return load_manifest(&manifest);
    }
    let name = path
        .file_name()
        .map_or_else(|| "sequence".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(vec![load_dir(path, name, None)?])
}

/// Stem-relative path of `name` under `root` with `ext` appended.
pub fn output_path(root: &Path, name: &str, ext: &str) -> PathBuf {
    root.join(format!("{name}.{ext}"))
}
