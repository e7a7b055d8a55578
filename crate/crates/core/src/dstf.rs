//! Bidirectional distance transform and the signed, per-region normalized field.

use rayon::prelude::*;

use crate::edt::edt_squared;
use crate::error::{Error, Result};
use crate::silhouette::{classify_pixels, PixelClass, PixelClassMap, SilhouetteFrame, SilhouetteSequence};

/// Distance of every pixel to the nearest boundary pixel (0 on the boundary).
#[derive(Clone, Debug, PartialEq)]
pub struct BiDtFrame {
    width: usize,
    height: usize,
    squared: Vec<u64>,
    dist: Vec<f64>,
}

impl BiDtFrame {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    /// The exact integer squared distances the field was built from.
    pub fn squared(&self) -> &[u64] {
        &self.squared
    }
}

/// Signed field in `[-1, 1]`: positive inside, negative outside, zero on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct DstfFrame {
    width: usize,
    height: usize,
    field: Vec<f64>,
}

impl DstfFrame {
    pub fn new(width: usize, height: usize, field: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || field.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} values for {width}x{height}",
                field.len()
            )));
        }
        if let Some(v) = field.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Data(format!("field value {v} outside [-1, 1]")));
        }
        Ok(DstfFrame { width, height, field })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        DstfFrame {
            width,
            height,
            field: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DstfSequence {
    frames: Vec<DstfFrame>,
    /// Index of the source silhouette frame behind each output frame.
    source_index: Vec<usize>,
}

impl DstfSequence {
    pub fn new(frames: Vec<DstfFrame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            let dims = first.dims();
            if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: bad.dims(),
                });
            }
        }
        let source_index = (0..frames.len()).collect();
        Ok(DstfSequence { frames, source_index })
    }

    pub fn frames(&self) -> &[DstfFrame] {
        &self.frames
    }

    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn bi_dt(frame: &SilhouetteFrame) -> Result<BiDtFrame> {
    bi_dt_classified(&classify_pixels(frame))
}

fn bi_dt_classified(classes: &PixelClassMap) -> Result<BiDtFrame> {
    let squared = edt_squared(classes)?;
    let dist = squared.iter().map(|&d| (d as f64).sqrt()).collect();
    let (width, height) = classes.dims();
    Ok(BiDtFrame {
        width,
        height,
        squared,
        dist,
    })
}

/// Largest distance in the foreground and background regions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegionScale {
    pub foreground: f64,
    pub background: f64,
}

impl RegionScale {
    pub fn of(bd: &BiDtFrame, classes: &PixelClassMap) -> Self {
        let mut s = RegionScale::default();
        for (d, c) in bd.dist.iter().zip(classes.classes()) {
            match c {
                PixelClass::Foreground => s.foreground = s.foreground.max(*d),
                PixelClass::Background => s.background = s.background.max(*d),
                PixelClass::Boundary => {}
            }
        }
        s
    }

    fn merge(self, other: RegionScale) -> Self {
        RegionScale {
            foreground: self.foreground.max(other.foreground),
            background: self.background.max(other.background),
        }
    }
}

/// Signs the distances by region and divides each region by its own maximum.
pub fn sign_and_normalize(bd: &BiDtFrame, classes: &PixelClassMap) -> Result<DstfFrame> {
    let scale = RegionScale::of(bd, classes);
    sign_and_normalize_with(bd, classes, scale)
}

/// Like [`sign_and_normalize`] with externally supplied region maxima.
pub fn sign_and_normalize_with(bd: &BiDtFrame, classes: &PixelClassMap, scale: RegionScale) -> Result<DstfFrame> {
    if bd.dims() != classes.dims() {
        return Err(Error::DimensionMismatch {
            expected: bd.dims(),
            got: classes.dims(),
        });
    }
    let norm = |d: f64, max: f64| if max > 0.0 { d / max } else { 0.0 };
    let field = bd
        .dist
        .iter()
        .zip(classes.classes())
        .map(|(&d, c)| match c {
            PixelClass::Foreground => norm(d, scale.foreground),
            PixelClass::Background => -norm(d, scale.background),
            PixelClass::Boundary => 0.0,
        })
        .collect();
    Ok(DstfFrame {
        width: bd.width,
        height: bd.height,
        field,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Each frame's regions are scaled by that frame's maxima.
    #[default]
    PerFrame,
    /// Region maxima are taken over the whole sequence.
    PerSequence,
}

/// What to do with frames that have no boundary pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DegeneratePolicy {
    Skip,
    #[default]
    ZeroFill,
    Error,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransformOptions {
    pub normalization: Normalization,
    pub degenerate: DegeneratePolicy,
}

impl TransformOptions {
    /// Degenerate frames are errors.
    pub fn strict() -> Self {
        TransformOptions {
            degenerate: DegeneratePolicy::Error,
            ..Self::default()
        }
    }
}

/// Frame-by-frame transform; frames run in parallel on the current rayon pool,
/// output order follows input order.
pub fn transform_sequence(seq: &SilhouetteSequence, opts: TransformOptions) -> Result<DstfSequence> {
    let (w, h) = seq.dims();
    let per_frame: Vec<Option<(BiDtFrame, PixelClassMap)>> = seq
        .frames()
        .par_iter()
        .map(|f| {
            let classes = classify_pixels(f);
            match bi_dt_classified(&classes) {
                Ok(bd) => Some((bd, classes)),
                Err(_) => None,
            }
        })
        .collect();

    if opts.degenerate == DegeneratePolicy::Error {
        if let Some(i) = per_frame.iter().position(Option::is_none) {
            return Err(Error::EmptyBoundary { frame: Some(i) });
        }
    }
    let sequence_scale = match opts.normalization {
        Normalization::PerFrame => None,
        Normalization::PerSequence => Some(
            per_frame
                .iter()
                .flatten()
                .map(|(bd, c)| RegionScale::of(bd, c))
                .fold(RegionScale::default(), RegionScale::merge),
        ),
    };

    let mut frames = Vec::with_capacity(per_frame.len());
    let mut source_index = Vec::with_capacity(per_frame.len());
    for (i, item) in per_frame.iter().enumerate() {
        match item {
            Some((bd, classes)) => {
                let scale = sequence_scale.unwrap_or_else(|| RegionScale::of(bd, classes));
                frames.push(sign_and_normalize_with(bd, classes, scale)?);
            }
            None => match opts.degenerate {
                DegeneratePolicy::Skip => continue,
                DegeneratePolicy::ZeroFill => frames.push(DstfFrame::zeros(w, h)),
                DegeneratePolicy::Error => unreachable!("checked above"),
            },
        }
        source_index.push(i);
    }
    Ok(DstfSequence { frames, source_index })
}
