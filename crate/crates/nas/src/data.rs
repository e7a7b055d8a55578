//! Labeled two-descriptor samples, per-identity splits and P×K clip batches.

use std::collections::BTreeMap;

use gaitfield_autodiff::Tensor;
use gaitfield_core::{transform_sequence, SilhouetteSequence, TransformOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NasError, Result};

/// One sequence as aligned silhouette and field frames, flattened frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub subject: String,
    pub label: usize,
    pub frames: usize,
    pub sil: Vec<f64>,
    pub field: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    /// Subject id of every label, sorted.
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Transforms every sequence; labels index the sorted distinct subject ids.
    pub fn from_sequences(seqs: &[SilhouetteSequence], opts: TransformOptions) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| NasError::Samples("no sequences".into()))?;
        let (width, height) = first.dims();
        let subject = |s: &SilhouetteSequence| s.subject_id.clone().unwrap_or_else(|| s.name());
        let mut classes: Vec<String> = seqs.iter().map(subject).collect();
        classes.sort();
        classes.dedup();
        let mut samples = Vec::with_capacity(seqs.len());
        for seq in seqs {
            if seq.dims() != (width, height) {
                return Err(NasError::Samples(format!(
                    "sequence {} is {:?}, expected {:?}",
                    seq.name(),
                    seq.dims(),
                    (width, height)
                )));
            }
            let field = transform_sequence(seq, opts)?;
            let sil: Vec<f64> = field
                .source_index()
                .iter()
                .flat_map(|&i| seq.frames()[i].to_f64())
                .collect();
            let name = subject(seq);
            samples.push(Sample {
                label: classes.binary_search(&name).expect("collected above"),
                subject: name,
                frames: field.len(),
                sil,
                field: field.frames().iter().flat_map(|f| f.field().to_vec()).collect(),
            });
        }
        Ok(Dataset {
            height,
            width,
            classes,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by label, in sample order.
    pub fn by_label(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            m.entry(s.label).or_default().push(i);
        }
        m
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            height: self.height,
            width: self.width,
            classes: self.classes.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    fn frame_len(&self) -> usize {
        self.height * self.width
    }
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
}

/// Splits every identity's sequences between train and validation.
///
/// Each identity sends `⌊n·val_fraction⌋` sequences (at least one, at most `n − 1`)
/// to validation; train keeps the rest, so it gets the extra on odd counts.
pub fn split_dataset(data: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(NasError::Split(format!("val_fraction {val_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (label, mut idx) in data.by_label() {
        if idx.len() < 2 {
            return Err(NasError::Split(format!(
                "identity `{}` has a single sequence",
                data.classes[label]
            )));
        }
        shuffle(&mut idx, &mut rng);
        let n_val = ((idx.len() as f64 * val_fraction).floor() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((data.subset(&train), data.subset(&val)))
}

/// Input clips `(B, 1, T, H, W)` for both descriptors and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub sil: Tensor,
    pub field: Tensor,
    pub labels: Vec<usize>,
}

/// Stacks the clips `(sample, start)` of length `clip` into a batch.
pub fn gather_clips(data: &Dataset, clips: &[(usize, usize)], clip: usize) -> Result<Batch> {
    let fl = data.frame_len();
    let mut sil = Vec::with_capacity(clips.len() * clip * fl);
    let mut field = Vec::with_capacity(sil.capacity());
    let mut labels = Vec::with_capacity(clips.len());
    for &(i, start) in clips {
        let s = &data.samples[i];
        if start + clip > s.frames {
            return Err(NasError::Samples(format!(
                "clip {start}..{} exceeds the {} frames of a `{}` sequence",
                start + clip,
                s.frames,
                s.subject
            )));
        }
        sil.extend_from_slice(&s.sil[start * fl..(start + clip) * fl]);
        field.extend_from_slice(&s.field[start * fl..(start + clip) * fl]);
        labels.push(s.label);
    }
    let shape = [clips.len(), 1, clip, data.height, data.width];
    Ok(Batch {
        sil: Tensor::new(&shape, sil)?,
        field: Tensor::new(&shape, field)?,
        labels,
    })
}

/// `P` random identities × `K` of their sequences (without replacement when enough
/// exist), each cut to a random contiguous clip.
pub fn sample_batch(data: &Dataset, p: usize, k: usize, clip: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
    let groups: Vec<Vec<usize>> = data.by_label().into_values().collect();
    if groups.len() < p {
        return Err(NasError::Samples(format!(
            "{} identities available, batch needs {p}",
            groups.len()
        )));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    shuffle(&mut order, rng);
    let mut clips = Vec::with_capacity(p * k);
    for &gi in &order[..p] {
        let mut members = groups[gi].clone();
        shuffle(&mut members, rng);
        for j in 0..k {
            let i = if j < members.len() {
                members[j]
            } else {
                members[rng.random_range(0..members.len())]
            };
            let frames = data.samples[i].frames;
            if frames < clip {
                return Err(NasError::Samples(format!(
                    "a `{}` sequence has {frames} frames, clips need {clip}",
                    data.samples[i].subject
                )));
            }
            clips.push((i, rng.random_range(0..=frames - clip)));
        }
    }
    gather_clips(data, &clips, clip)
}

/// Starts of the non-overlapping windows of length `clip` that fit in `frames`.
pub fn windows(frames: usize, clip: usize) -> Vec<usize> {
    (0..frames / clip.max(1)).map(|i| i * clip).collect()
}
