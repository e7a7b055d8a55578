//! Binary silhouette frames and the boundary / foreground / background partition.

use crate::error::{Error, Result};

/// A binary mask, row-major, `1` = foreground.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SilhouetteFrame {
    width: usize,
    height: usize,
    mask: Vec<u8>,
}

impl SilhouetteFrame {
    pub fn new(width: usize, height: usize, mask: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("zero dimension {width}x{height}")));
        }
        if mask.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "mask has {} values for {width}x{height}",
                mask.len()
            )));
        }
        if let Some(v) = mask.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidFrame(format!("mask value {v} is not binary")));
        }
        Ok(SilhouetteFrame { width, height, mask })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mask = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Self::new(width, height, mask)
    }

    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
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

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }

    /// The mask as `0.0 / 1.0` values.
    pub fn to_f64(&self) -> Vec<f64> {
        self.mask.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn inverted(&self) -> Self {
        SilhouetteFrame {
            width: self.width,
            height: self.height,
            mask: self.mask.iter().map(|v| 1 - v).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PixelClass {
    Boundary,
    Foreground,
    Background,
}

/// Per-pixel class of a frame.
///
/// Boundary pixels are foreground pixels with at least one 4-neighbour that is
/// background or outside the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelClassMap {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) classes: Vec<PixelClass>,
}

impl PixelClassMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> &[PixelClass] {
        &self.classes
    }

    pub fn get(&self, x: usize, y: usize) -> PixelClass {
        self.classes[y * self.width + x]
    }

    pub fn count(&self, class: PixelClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn has_boundary(&self) -> bool {
        self.classes.contains(&PixelClass::Boundary)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.classes[idx] == PixelClass::Boundary
    }
}

pub fn classify_pixels(frame: &SilhouetteFrame) -> PixelClassMap {
    let (w, h) = frame.dims();
    let fg = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && frame.is_foreground(x as usize, y as usize)
    };
    let mut classes = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let class = if !fg(x, y) {
                PixelClass::Background
            } else if fg(x - 1, y) && fg(x + 1, y) && fg(x, y - 1) && fg(x, y + 1) {
                PixelClass::Foreground
            } else {
                PixelClass::Boundary
            };
            classes.push(class);
        }
    }
    PixelClassMap {
        width: w,
        height: h,
        classes,
    }
}

/// Ordered frames of identical size with optional labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SilhouetteSequence {
    frames: Vec<SilhouetteFrame>,
    pub subject_id: Option<String>,
    pub view_id: Option<String>,
}

impl SilhouetteSequence {
    pub fn new(frames: Vec<SilhouetteFrame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidFrame("sequence has no frames".into()))?;
        let dims = first.dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: bad.dims(),
            });
        }
        Ok(SilhouetteSequence {
            frames,
            subject_id: None,
            view_id: None,
        })
    }

    pub fn with_labels(mut self, subject: impl Into<String>, view: impl Into<String>) -> Self {
        self.subject_id = Some(subject.into());
        self.view_id = Some(view.into());
        self
    }

    pub fn frames(&self) -> &[SilhouetteFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a sequence holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` shared by every frame.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn inverted(&self) -> Self {
        SilhouetteSequence {
            frames: self.frames.iter().map(SilhouetteFrame::inverted).collect(),
            subject_id: self.subject_id.clone(),
            view_id: self.view_id.clone(),
        }
    }

    /// `subject/view`, or `sequence` when unlabeled.
    pub fn name(&self) -> String {
        match (&self.subject_id, &self.view_id) {
            (Some(s), Some(v)) => format!("{s}_{v}"),
            (Some(s), None) => s.clone(),
            _ => "sequence".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solid_three_by_three_has_a_ring_of_boundary() {
        let f = SilhouetteFrame::new(3, 3, vec![1; 9]).unwrap();
        let c = classify_pixels(&f);
        assert_eq!(c.count(PixelClass::Boundary), 8);
        assert_eq!(c.count(PixelClass::Foreground), 1);
        assert_eq!(c.get(1, 1), PixelClass::Foreground);
    }

    #[test]
    fn isolated_pixel_is_boundary() {
        let f = SilhouetteFrame::from_fn(5, 4, |x, y| (x, y) == (2, 1)).unwrap();
        let c = classify_pixels(&f);
        assert_eq!(c.get(2, 1), PixelClass::Boundary);
        assert_eq!(c.count(PixelClass::Boundary), 1);
    }

    #[test]
    fn blank_frame_has_no_boundary() {
        let c = classify_pixels(&SilhouetteFrame::blank(4, 4).unwrap());
        assert!(!c.has_boundary());
        assert_eq!(c.count(PixelClass::Background), 16);
    }

    #[test]
    fn construction_validates() {
        assert!(SilhouetteFrame::new(0, 3, vec![]).is_err());
        assert!(SilhouetteFrame::new(2, 2, vec![0, 1, 2, 0]).is_err());
        assert!(SilhouetteFrame::new(2, 2, vec![0, 1, 0]).is_err());
        let a = SilhouetteFrame::blank(2, 2).unwrap();
        let b = SilhouetteFrame::blank(3, 2).unwrap();
        assert!(matches!(
            SilhouetteSequence::new(vec![a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(SilhouetteSequence::new(vec![]).is_err());
    }

    fn frame_strategy() -> impl Strategy<Value = SilhouetteFrame> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0u8..2, w * h).prop_map(move |m| SilhouetteFrame::new(w, h, m).unwrap())
        })
    }

    proptest! {
        #[test]
        fn classes_partition_the_grid(f in frame_strategy()) {
            let c = classify_pixels(&f);
            let total = c.count(PixelClass::Boundary) + c.count(PixelClass::Foreground) + c.count(PixelClass::Background);
            prop_assert_eq!(total, f.width() * f.height());
            prop_assert_eq!(c.count(PixelClass::Background), f.width() * f.height() - f.foreground_count());
        }

        #[test]
        fn boundary_matches_brute_force_neighbour_scan(f in frame_strategy()) {
            let c = classify_pixels(&f);
            let (w, h) = f.dims();
            for y in 0..h {
                for x in 0..w {
                    let mut touches_bg = false;
                    for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        let outside = nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64;
                        if outside || !f.is_foreground(nx as usize, ny as usize) {
                            touches_bg = true;
                        }
                    }
                    let want = f.is_foreground(x, y) && touches_bg;
                    prop_assert_eq!(c.get(x, y) == PixelClass::Boundary, want);
                }
            }
        }
    }
}
