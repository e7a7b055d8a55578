//! Exact squared Euclidean distance transform.
//!
//! Two passes over integer data: a 1-D nearest-source scan down every column,
//! then a lower envelope of parabolas along every row. Intersections of parabolas
//! are kept as exact rationals, so the result is exact for any grid size.

use crate::error::{Error, Result};
use crate::silhouette::PixelClassMap;

/// Squared distance from every pixel to the nearest boundary pixel.
pub fn edt_squared(classes: &PixelClassMap) -> Result<Vec<u64>> {
    let (w, h) = classes.dims();
    edt_squared_from_sources(w, h, |i| classes.is_boundary(i)).ok_or(Error::EmptyBoundary { frame: None })
}

/// Squared distance to the nearest pixel with `is_source(index)`; `None` without sources.
pub fn edt_squared_from_sources(width: usize, height: usize, is_source: impl Fn(usize) -> bool) -> Option<Vec<u64>> {
    let n = width * height;
    let sources: Vec<bool> = (0..n).map(&is_source).collect();
    if !sources.contains(&true) {
        return None;
    }

    // Column pass: squared vertical distance to the nearest source in the column.
    let mut col: Vec<Option<i64>> = vec![None; n];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if sources[y * width + x] {
                last = Some(y);
            }
            col[y * width + x] = last.map(|s| (y - s) as i64);
        }
        let mut next: Option<usize> = None;
        for y in (0..height).rev() {
            if sources[y * width + x] {
                next = Some(y);
            }
            if let Some(s) = next {
                let d = (s - y) as i64;
                let slot = &mut col[y * width + x];
                *slot = Some(slot.map_or(d, |c| c.min(d)));
            }
        }
    }

    // Row pass: lower envelope of f(q) + (x - q)².
    let mut out = vec![0u64; n];
    let mut f: Vec<Option<i64>> = vec![None; width];
    let mut sites: Vec<i64> = Vec::with_capacity(width);
    // Left boundary of each site's interval as num/den (den > 0); entry 0 is -∞.
    let mut bounds: Vec<(i128, i128)> = Vec::with_capacity(width);
    for y in 0..height {
        for x in 0..width {
            f[x] = col[y * width + x].map(|d| d * d);
        }
        sites.clear();
        bounds.clear();
        for q in 0..width as i64 {
            let Some(fq) = f[q as usize] else { continue };
            loop {
                let Some(&v) = sites.last() else {
                    sites.push(q);
                    bounds.push((0, 0));
                    break;
                };
                let fv = f[v as usize].expect("sites have finite values");
                let num = ((fq + q * q) - (fv + v * v)) as i128;
                let den = (2 * (q - v)) as i128;
                let k = sites.len() - 1;
                if k > 0 {
                    let (bn, bd) = bounds[k];
                    if num * bd <= bn * den {
                        sites.pop();
                        bounds.pop();
                        continue;
                    }
                }
                sites.push(q);
                bounds.push((num, den));
                break;
            }
        }
        let mut k = 0;
        for x in 0..width as i64 {
            while k + 1 < sites.len() {
                let (bn, bd) = bounds[k + 1];
                if bn < x as i128 * bd {
                    k += 1;
                } else {
                    break;
                }
            }
            let v = sites[k];
            let dx = x - v;
            out[y * width + x as usize] = (dx * dx + f[v as usize].unwrap()) as u64;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::silhouette::{classify_pixels, SilhouetteFrame};

    /// All-pairs minimum, the reference for exactness.
    pub(crate) fn brute_force(width: usize, height: usize, src: &[bool]) -> Vec<u64> {
        let pts: Vec<(i64, i64)> = (0..width * height)
            .filter(|&i| src[i])
            .map(|i| ((i % width) as i64, (i / width) as i64))
            .collect();
        (0..width * height)
            .map(|i| {
                let (x, y) = ((i % width) as i64, (i / width) as i64);
                pts.iter()
                    .map(|&(px, py)| ((x - px).pow(2) + (y - py).pow(2)) as u64)
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn single_central_source() {
        let d = edt_squared_from_sources(3, 3, |i| i == 4).unwrap();
        assert_eq!(d, vec![2, 1, 2, 1, 0, 1, 2, 1, 2]);
    }

    #[test]
    fn all_sources_give_zeros() {
        let f = SilhouetteFrame::new(2, 2, vec![1; 4]).unwrap();
        assert_eq!(edt_squared(&classify_pixels(&f)).unwrap(), vec![0; 4]);
    }

    #[test]
    fn empty_boundary_is_an_error() {
        let f = SilhouetteFrame::blank(4, 3).unwrap();
        assert!(matches!(
            edt_squared(&classify_pixels(&f)),
            Err(Error::EmptyBoundary { .. })
        ));
    }

    #[test]
    fn sparse_sources_in_wide_rows() {
        // Columns without sources and far-apart sites stress the envelope.
        let (w, h) = (31, 5);
        let src: Vec<bool> = (0..w * h)
            .map(|i| i == 3 || i == w * 4 + 29 || i == w * 2 + 15)
            .collect();
        let d = edt_squared_from_sources(w, h, |i| src[i]).unwrap();
        assert_eq!(d, brute_force(w, h, &src));
    }
}
