//! Procedural walkers: a torso ellipse with two swinging limbs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

const LIMB_HALF_WIDTH: f64 = 0.85;
const MARGIN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkerParams {
    /// Horizontal and vertical semi-axes of the torso, in pixels.
    pub torso_axes: (f64, f64),
    /// Horizontal foot excursion at full swing, in pixels.
    pub limb_amplitude: f64,
    /// Frames per gait cycle.
    pub stride_period: u32,
    pub phase: f64,
    /// Probability of flipping each pixel.
    pub noise_prob: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        WalkerParams {
            torso_axes: (2.5, 3.5),
            limb_amplitude: 3.0,
            stride_period: 8,
            phase: 0.0,
            noise_prob: 0.0,
        }
    }
}

struct Layout {
    cx: f64,
    cy: f64,
    hip: (f64, f64),
    leg: f64,
    max_angle: f64,
}

impl WalkerParams {
    fn layout(&self, height: usize, width: usize) -> Result<Layout> {
        let (a, b) = self.torso_axes;
        if self.stride_period < 2 {
            return Err(Error::Parameter(format!("stride_period {} < 2", self.stride_period)));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::Parameter(format!(
                "noise_prob {} outside [0, 1]",
                self.noise_prob
            )));
        }
        if !(a >= 0.5 && b >= 0.5) || !(self.limb_amplitude >= 0.0) || !self.phase.is_finite() {
            return Err(Error::Parameter(format!("degenerate geometry {self:?}")));
        }
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = MARGIN + b;
        let hip = (cx, cy + 0.6 * b);
        let foot_y = height as f64 - 1.0 - MARGIN;
        let leg = foot_y - hip.1;
        let fits = cx - a >= 0.0
            && cx + a <= width as f64 - 1.0
            && leg >= 2.0
            && cx - self.limb_amplitude - LIMB_HALF_WIDTH >= 0.0
            && cx + self.limb_amplitude + LIMB_HALF_WIDTH <= width as f64 - 1.0;
        if !fits {
            return Err(Error::Parameter(format!(
                "walker {self:?} does not fit a {width}x{height} grid"
            )));
        }
        Ok(Layout {
            cx,
            cy,
            hip,
            leg,
            max_angle: (self.limb_amplitude / leg).atan(),
        })
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders `frames` deterministic frames of a walker.
///
/// Limb angles follow `±θ·sin(2πt / stride_period + phase)`; noise flips pixels
/// independently except the torso centre, so every frame keeps a foreground pixel.
pub fn synth_walker(
    params: &WalkerParams,
    frames: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<SilhouetteSequence> {
    if frames == 0 {
        return Err(Error::Parameter("frame count must be ≥ 1".into()));
    }
    let lay = params.layout(height, width)?;
    let (a, b) = params.torso_axes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = (lay.cy.round() as usize) * width + lay.cx.round() as usize;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let cycle = (t as u64 % params.stride_period as u64) as f64 / params.stride_period as f64;
        let swing = lay.max_angle * (2.0 * PI * cycle + params.phase).sin();
        let feet = [swing, -swing].map(|th| (lay.hip.0 + lay.leg * th.sin(), lay.hip.1 + lay.leg * th.cos()));
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = (x as f64, y as f64);
                let in_torso = ((p.0 - lay.cx) / a).powi(2) + ((p.1 - lay.cy) / b).powi(2) <= 1.0;
                let on_limb = feet.iter().any(|&f| segment_distance(p, lay.hip, f) <= LIMB_HALF_WIDTH);
                mask.push(u8::from(in_torso || on_limb));
            }
        }
        if params.noise_prob > 0.0 {
            for (i, m) in mask.iter_mut().enumerate() {
                if rng.random_bool(params.noise_prob) && i != centre {
                    *m ^= 1;
                }
            }
        }
        out.push(SilhouetteFrame::new(width, height, mask)?);
    }
    SilhouetteSequence::new(out)
}

/// Size and seeding of a labeled synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusSpec {
    pub identities: usize,
    pub sequences_per_identity: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub noise_prob: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            identities: 8,
            sequences_per_identity: 4,
            frames: 16,
            height: 16,
            width: 12,
            noise_prob: 0.01,
            seed: 2024,
        }
    }
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

/// Body shape of every identity: torso axes, swing amplitude and cadence are
/// spread over their ranges by independent permutations, so no two identities coincide.
pub fn identity_params(spec: &CorpusSpec) -> Vec<WalkerParams> {
    let n = spec.identities;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x1d_e471);
    let (pa, pb, pm) = (shuffled(&mut rng, n), shuffled(&mut rng, n), shuffled(&mut rng, n));
    let frac = |i: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let max_a = ((spec.width as f64 - 1.0) / 2.0 - 0.5).max(0.5);
    let max_amp = ((spec.width as f64 - 1.0) / 2.0 - LIMB_HALF_WIDTH - 0.25).max(0.0);
    let max_b = ((spec.height as f64) * 0.22).max(0.5);
    (0..n)
        .map(|i| WalkerParams {
            torso_axes: (
                0.4 * max_a + 0.6 * max_a * frac(pa[i]),
                0.55 * max_b + 0.45 * max_b * frac(pb[i]),
            ),
            limb_amplitude: 0.35 * max_amp + 0.65 * max_amp * frac(pm[i]),
            stride_period: 6 + (i % 5) as u32,
            phase: 0.0,
            noise_prob: spec.noise_prob,
        })
        .collect()
}

/// Sequence `k` of identity `i` gets its own phase and noise stream.
pub fn identity_sequence(
    spec: &CorpusSpec,
    identity: &WalkerParams,
    i: usize,
    k: usize,
    stream: u64,
) -> Result<SilhouetteSequence> {
    let seq_seed = spec
        .seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((stream << 40) ^ ((i as u64) << 20) ^ k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
    let params = WalkerParams {
        phase: rng.random_range(0.0..2.0 * PI),
        ..*identity
    };
    Ok(
        synth_walker(&params, spec.frames, spec.height, spec.width, rng.random())?
            .with_labels(format!("id{i:02}"), format!("s{stream}q{k:02}")),
    )
}

/// `identities × sequences_per_identity` labeled walkers, identity-major.
pub fn synthetic_corpus(spec: &CorpusSpec) -> Result<Vec<SilhouetteSequence>> {
    synthetic_sequences(spec, 0, spec.sequences_per_identity)
}

/// Further sequences of the same identities drawn from an independent stream.
pub fn synthetic_sequences(spec: &CorpusSpec, stream: u64, per_identity: usize) -> Result<Vec<SilhouetteSequence>> {
    let ids = identity_params(spec);
    let mut out = Vec::with_capacity(ids.len() * per_identity);
    for (i, p) in ids.iter().enumerate() {
        for k in 0..per_identity {
            out.push(identity_sequence(spec, p, i, k, stream)?);
        }
    }
    Ok(out)
}
