//! File formats: binary PGM frames, frame directories, sequence manifests and raw field dumps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dstf::{DstfFrame, DstfSequence};
use crate::error::{Error, Result};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

/// Grey level at or above which a 255-scaled pixel counts as foreground.
pub const FOREGROUND_THRESHOLD: u32 = 128;

const DSTF_MAGIC: &[u8; 4] = b"DSTF";
pub const DSTF_VERSION: u8 = 1;
const DSTF_HEADER: usize = 4 + 1 + 3 * 4;

/// An 8-bit grey image as stored in a P5 stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

/// Parses a binary (P5) PGM with `maxval ≤ 255`.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P5") {
        return Err(c.fail("expected magic \"P5\""));
    }
    c.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(c.fail("expected whitespace after magic"));
    }
    let width = c.number("width")? as usize;
    let dims_at = c.pos;
    let height = c.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: dims_at,
            msg: format!("zero dimension {width}x{height}"),
        });
    }
    let maxval = c.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(c.fail(format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(c.fail("expected single whitespace before payload"));
    }
    c.pos += 1;
    let need = width.checked_mul(height).ok_or_else(|| c.fail("dimensions overflow"))?;
    let payload = &bytes[c.pos..];
    if payload.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("truncated payload: {} of {need} bytes", payload.len()),
        });
    }
    Ok(GrayImage {
        width,
        height,
        maxval,
        pixels: payload[..need].to_vec(),
    })
}

/// Thresholds a P5 stream into a mask: `value·255/maxval ≥ 128` is foreground.
pub fn load_pgm(bytes: &[u8]) -> Result<SilhouetteFrame> {
    let img = parse_pgm(bytes)?;
    let mask = img
        .pixels
        .iter()
        .map(|&v| u8::from(v as u32 * 255 >= FOREGROUND_THRESHOLD * img.maxval))
        .collect();
    SilhouetteFrame::new(img.width, img.height, mask)
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Foreground as 255, background as 0.
pub fn encode_mask_pgm(frame: &SilhouetteFrame) -> Vec<u8> {
    let px: Vec<u8> = frame.mask().iter().map(|&m| m * 255).collect();
    encode_pgm(frame.width(), frame.height(), &px)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::File { .. } => e,
        other => Error::File {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    }
}

pub fn read_pgm_file(path: &Path) -> Result<SilhouetteFrame> {
    load_pgm(&read_file(path)?).map_err(|e| located(path, e))
}

pub fn write_pgm_file(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_file(path, &encode_pgm(width, height, pixels))
}

/// `.pgm` files of `dir` sorted by the numeric value of their stems.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let index: u64 = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::File {
                path: path.clone(),
                msg: "frame file name is not a number".into(),
            })?;
        found.push((index, path));
    }
    found.sort();
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::File {
            path: w[1].1.clone(),
            msg: format!("duplicate frame index {}", w[0].0),
        });
    }
    if found.is_empty() {
        return Err(Error::File {
            path: dir.to_path_buf(),
            msg: "no .pgm frames".into(),
        });
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn read_sequence_dir(dir: &Path) -> Result<SilhouetteSequence> {
    let frames = frame_paths(dir)?
        .iter()
        .map(|p| read_pgm_file(p))
        .collect::<Result<Vec<_>>>()?;
    SilhouetteSequence::new(frames).map_err(|e| located(dir, e))
}

/// Writes frames as `000000.pgm`, `000001.pgm`, … into `dir`.
pub fn write_sequence_dir(dir: &Path, seq: &SilhouetteSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, f) in seq.frames().iter().enumerate() {
        write_file(&dir.join(format!("{t:06}.pgm")), &encode_mask_pgm(f))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub view_id: String,
    pub path: PathBuf,
}

pub const MANIFEST_HEADER: [&str; 3] = ["subject_id", "view_id", "path"];

/// Reads `subject_id,view_id,path` rows; relative paths resolve against the manifest's
/// directory and an optional header row is skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = read_file(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::File {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if i == 0 && rec.iter().eq(MANIFEST_HEADER) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::File {
                path: path.to_path_buf(),
                msg: format!("row {} has {} fields, expected 3", i + 1, rec.len()),
            });
        }
        out.push(ManifestEntry {
            subject_id: rec[0].to_string(),
            view_id: rec[1].to_string(),
            path: base.join(&rec[2]),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::File {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for e in entries {
        w.write_record([&e.subject_id, &e.view_id, &e.path.to_string_lossy().into_owned()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::File {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    write_file(path, &bytes)
}

/// Loads every sequence listed in a manifest, labeled from its row.
pub fn read_manifest_sequences(path: &Path) -> Result<Vec<SilhouetteSequence>> {
    read_manifest(path)?
        .into_iter()
        .map(|e| Ok(read_sequence_dir(&e.path)?.with_labels(e.subject_id, e.view_id)))
        .collect()
}

/// Raw dump: magic, version byte, `T, H, W` as u32 LE, then f32 LE values frame-major.
pub fn encode_dstf(seq: &DstfSequence) -> Result<Vec<u8>> {
    let (w, h) = seq.frames().first().map_or((0, 0), DstfFrame::dims);
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::Parameter(format!("extent {n} exceeds u32")));
    let mut out = Vec::with_capacity(DSTF_HEADER + 4 * seq.len() * w * h);
    out.extend_from_slice(DSTF_MAGIC);
    out.push(DSTF_VERSION);
    for n in [seq.len(), h, w] {
        out.extend_from_slice(&dim(n)?.to_le_bytes());
    }
    for f in seq.frames() {
        for &v in f.field() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dstf(bytes: &[u8]) -> Result<DstfSequence> {
    let fail = |offset, msg: String| Error::Format { offset, msg };
    if bytes.len() < DSTF_HEADER {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != DSTF_MAGIC {
        return Err(fail(0, "expected magic \"DSTF\"".into()));
    }
    if bytes[4] != DSTF_VERSION {
        return Err(fail(4, format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (t, h, w) = (u32_at(5), u32_at(9), u32_at(13));
    let frame = h * w;
    let need = t
        .checked_mul(frame)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail(5, "extents overflow".into()))?;
    let payload = &bytes[DSTF_HEADER..];
    if payload.len() != need {
        return Err(fail(
            bytes.len().min(DSTF_HEADER + need),
            format!("payload has {} bytes, expected {need}", payload.len()),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let frames = values
        .chunks(frame.max(1))
        .take(t)
        .enumerate()
        .map(|(i, c)| DstfFrame::new(w, h, c.to_vec()).map_err(|e| fail(DSTF_HEADER + 4 * i * frame, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    DstfSequence::new(frames)
}

pub fn write_dstf_file(path: &Path, seq: &DstfSequence) -> Result<()> {
    write_file(path, &encode_dstf(seq)?)
}

pub fn read_dstf_file(path: &Path) -> Result<DstfSequence> {
    decode_dstf(&read_file(path)?).map_err(|e| located(path, e))
}

/// Maps `v ∈ [-1, 1]` to `round((v + 1) / 2 · 255)`.
pub fn preview_gray(frame: &DstfFrame) -> Vec<u8> {
    frame
        .field()
        .iter()
        .map(|&v| ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn encode_preview_pgm(frame: &DstfFrame) -> Vec<u8> {
    encode_pgm(frame.width(), frame.height(), &preview_gray(frame))
}
