//! Information-density measures: histogram entropy, gait entropy images and frame differences.

use crate::dstf::DstfSequence;
use crate::error::{Error, Result};
use crate::silhouette::SilhouetteSequence;

/// Default histogram resolution, matching 8-bit imagery.
pub const DEFAULT_BINS: usize = 256;

/// Threshold above which a per-pixel difference counts as a change.
pub const CHANGE_EPS: f64 = 1e-6;

/// Fixed histogram span of a descriptor type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueRange {
    /// Binary masks, `{0, 1}`.
    Binary,
    /// Signed fields, `[-1, 1]`.
    Signed,
    Custom(f64, f64),
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Binary => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
            ValueRange::Custom(lo, hi) => (lo, hi),
        }
    }
}

fn bernoulli_entropy(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

/// Shannon entropy in bits of the histogram of `values` over `bins` uniform bins
/// spanning `range`; values outside the range fall into the end bins.
pub fn image_entropy(values: &[f64], range: ValueRange, bins: usize) -> Result<f64> {
    let (lo, hi) = range.bounds();
    if bins < 2 {
        return Err(Error::Parameter(format!("bins = {bins} < 2")));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Parameter(format!("empty histogram range [{lo}, {hi}]")));
    }
    if values.is_empty() {
        return Err(Error::Data("no values".into()));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite value {v}")));
        }
        let k = ((v - lo) / (hi - lo) * bins as f64).floor();
        counts[(k.max(0.0) as usize).min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let h = c as f64 / n;
            -h * h.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub per_frame_entropy: Vec<f64>,
    pub mean_entropy: f64,
    pub bins: usize,
}

impl EntropyReport {
    pub fn from_frames<'a>(
        frames: impl IntoIterator<Item = &'a [f64]>,
        range: ValueRange,
        bins: usize,
    ) -> Result<Self> {
        let per_frame_entropy = frames
            .into_iter()
            .map(|f| image_entropy(f, range, bins))
            .collect::<Result<Vec<_>>>()?;
        if per_frame_entropy.is_empty() {
            return Err(Error::Data("no frames".into()));
        }
        let mean_entropy = per_frame_entropy.iter().sum::<f64>() / per_frame_entropy.len() as f64;
        Ok(EntropyReport {
            per_frame_entropy,
            mean_entropy,
            bins,
        })
    }

    pub fn of_silhouettes(seq: &SilhouetteSequence, bins: usize) -> Result<Self> {
        let frames: Vec<Vec<f64>> = seq.frames().iter().map(|f| f.to_f64()).collect();
        Self::from_frames(frames.iter().map(Vec::as_slice), ValueRange::Binary, bins)
    }

    pub fn of_dstf(seq: &DstfSequence, bins: usize) -> Result<Self> {
        Self::from_frames(seq.frames().iter().map(|f| f.field()), ValueRange::Signed, bins)
    }
}

/// Mean field entropy divided by mean silhouette entropy.
pub fn entropy_ratio(sil: &SilhouetteSequence, dstf: &DstfSequence, bins: usize) -> Result<f64> {
    if sil.len() != dstf.len() {
        return Err(Error::Data(format!(
            "{} silhouette frames vs {} field frames",
            sil.len(),
            dstf.len()
        )));
    }
    let s = EntropyReport::of_silhouettes(sil, bins)?;
    if s.mean_entropy <= 0.0 {
        return Err(Error::Degenerate("silhouette entropy is zero".into()));
    }
    Ok(EntropyReport::of_dstf(dstf, bins)?.mean_entropy / s.mean_entropy)
}

/// Per-pixel binary entropy of the temporal foreground probability.
#[derive(Clone, Debug, PartialEq)]
pub struct GeniMap {
    pub width: usize,
    pub height: usize,
    pub entropy: Vec<f64>,
}

impl GeniMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entropy[y * self.width + x]
    }

    /// Mean entropy over the pixels selected by `mask`; `None` if none are selected.
    pub fn region_mean(&self, mask: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if mask(x, y) {
                    sum += self.get(x, y);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Entropy scaled to 8-bit grey levels (1 bit → 255).
    pub fn to_gray(&self) -> Vec<u8> {
        self.entropy
            .iter()
            .map(|&e| (e.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

pub fn geni(seq: &SilhouetteSequence) -> GeniMap {
    let (width, height) = seq.dims();
    let mut counts = vec![0usize; width * height];
    for f in seq.frames() {
        for (c, &m) in counts.iter_mut().zip(f.mask()) {
            *c += m as usize;
        }
    }
    let t = seq.len() as f64;
    GeniMap {
        width,
        height,
        entropy: counts.iter().map(|&c| bernoulli_entropy(c as f64 / t)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDifference {
    pub diff: Vec<f64>,
    pub changed_fraction: f64,
}

/// `|frame_t − frame_{t−1}|` and the fraction of pixels that changed by more than [`CHANGE_EPS`].
pub fn frame_difference<F: AsRef<[f64]>>(frames: &[F], t: usize) -> Result<FrameDifference> {
    if t == 0 || t >= frames.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: frames.len(),
        });
    }
    let (prev, cur) = (frames[t - 1].as_ref(), frames[t].as_ref());
    if prev.len() != cur.len() {
        return Err(Error::Data(format!(
            "frame sizes {} and {} differ",
            prev.len(),
            cur.len()
        )));
    }
    let diff: Vec<f64> = cur.iter().zip(prev).map(|(a, b)| (a - b).abs()).collect();
    let changed = diff.iter().filter(|&&d| d > CHANGE_EPS).count();
    Ok(FrameDifference {
        changed_fraction: changed as f64 / diff.len().max(1) as f64,
        diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dstf::DstfFrame;
    use crate::silhouette::SilhouetteFrame;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let half = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(image_entropy(&half, ValueRange::Binary, 2).unwrap(), 1.0);
        assert_eq!(image_entropy(&half, ValueRange::Binary, 256).unwrap(), 1.0);
        assert_eq!(image_entropy(&[0.3; 9], ValueRange::Signed, 256).unwrap(), 0.0);
        let quarter = [-0.9, -0.4, 0.1, 0.6, -0.8, -0.3, 0.2, 0.9];
        assert_eq!(image_entropy(&quarter, ValueRange::Signed, 4).unwrap(), 2.0);
    }

    #[test]
    fn entropy_rejects_bad_input() {
        assert!(matches!(
            image_entropy(&[f64::NAN], ValueRange::Signed, 4),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            image_entropy(&[0.0], ValueRange::Signed, 1),
            Err(Error::Parameter(_))
        ));
    }

    fn seq(frames: &[&[u8]], w: usize, h: usize) -> SilhouetteSequence {
        SilhouetteSequence::new(
            frames
                .iter()
                .map(|m| SilhouetteFrame::new(w, h, m.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ratio_of_two_level_field_is_one() {
        let s = seq(&[&[0, 1, 1, 0], &[1, 1, 0, 0]], 2, 2);
        let d = DstfSequence::new(
            s.frames()
                .iter()
                .map(|f| {
                    DstfFrame::new(
                        2,
                        2,
                        f.mask().iter().map(|&m| if m == 1 { 1.0 } else { -1.0 }).collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(entropy_ratio(&s, &d, 256).unwrap(), 1.0);
    }

    #[test]
    fn ratio_guards_constant_silhouettes() {
        let s = seq(&[&[0, 0, 0, 0]], 2, 2);
        let d = DstfSequence::new(vec![DstfFrame::zeros(2, 2)]).unwrap();
        assert!(matches!(entropy_ratio(&s, &d, 256), Err(Error::Degenerate(_))));
    }

    #[test]
    fn geni_examples() {
        let s = seq(&[&[1, 1, 0], &[1, 0, 0]], 3, 1);
        let g = geni(&s);
        assert_eq!(g.entropy, vec![0.0, 1.0, 0.0]);
        assert_eq!(g.to_gray(), vec![0, 255, 0]);
    }

    #[test]
    fn frame_difference_counts_changes() {
        let frames = [vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]];
        let d = frame_difference(&frames, 1).unwrap();
        assert_eq!(d.diff, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.changed_fraction, 0.5);
        assert_eq!(
            frame_difference(&[frames[0].clone(), frames[0].clone()], 1)
                .unwrap()
                .changed_fraction,
            0.0
        );
        assert!(matches!(
            frame_difference(&frames, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(frame_difference(&frames, 2).is_err());
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(
            vals in prop::collection::vec(-1.0f64..=1.0, 1..200),
            bins in 2usize..300,
            rot in 0usize..200,
        ) {
            let e = image_entropy(&vals, ValueRange::Signed, bins).unwrap();
            prop_assert!(e >= 0.0 && e <= (bins as f64).log2() + 1e-12);
            let mut v2 = vals.clone();
            v2.reverse();
            let k = rot % v2.len();
            v2.rotate_left(k);
            prop_assert!((image_entropy(&v2, ValueRange::Signed, bins).unwrap() - e).abs() < 1e-12);
        }

        #[test]
        fn binary_entropy_with_two_bins_is_bernoulli(mask in prop::collection::vec(0u8..=1, 1..100)) {
            let vals: Vec<f64> = mask.iter().map(|&m| m as f64).collect();
            let p = vals.iter().sum::<f64>() / vals.len() as f64;
            let e = image_entropy(&vals, ValueRange::Binary, 2).unwrap();
            prop_assert!((e - bernoulli_entropy(p)).abs() < 1e-12);
        }

        #[test]
        fn geni_is_inversion_symmetric(masks in prop::collection::vec(prop::collection::vec(0u8..=1, 12), 1..10)) {
            let s = SilhouetteSequence::new(masks.into_iter().map(|m| SilhouetteFrame::new(4, 3, m).unwrap()).collect()).unwrap();
            let (a, b) = (geni(&s), geni(&s.inverted()));
            for (x, y) in a.entropy.iter().zip(&b.entropy) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(x));
            }
        }
    }
}
