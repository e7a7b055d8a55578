use crate::error::{invalid, Result};
use crate::graph::{BackwardArgs, Graph, Var};
use crate::tensor::Tensor;

/// Window, stride and zero padding per (T, H, W) axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pool3dSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Pool3dSpec {
    /// Stride-1 window of extent `k` on every axis with "same" padding.
    pub fn same(k: usize) -> Self {
        Pool3dSpec {
            kernel: [k; 3],
            stride: [1; 3],
            padding: [k / 2; 3],
        }
    }

    /// Non-overlapping spatial `k × k` window that leaves the temporal axis alone.
    pub fn spatial(k: usize) -> Self {
        Pool3dSpec {
            kernel: [1, k, k],
            stride: [1, k, k],
            padding: [0; 3],
        }
    }

    fn out_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let span = dims[i] + 2 * self.padding[i];
            if self.kernel[i] == 0 || self.stride[i] == 0 || span < self.kernel[i] || self.padding[i] >= self.kernel[i]
            {
                return None;
            }
            out[i] = (span - self.kernel[i]) / self.stride[i] + 1;
        }
        Some(out)
    }

    /// Calls `f(out_index, in_index)` for every in-bounds window tap, in window order.
    fn for_each_tap(&self, dims: [usize; 3], out: [usize; 3], mut f: impl FnMut(usize, usize)) {
        let [t_n, h_n, w_n] = dims;
        let mut oi = 0;
        for ot in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    for kt in 0..self.kernel[0] {
                        let t = (ot * self.stride[0] + kt) as isize - self.padding[0] as isize;
                        if t < 0 || t >= t_n as isize {
                            continue;
                        }
                        for kh in 0..self.kernel[1] {
                            let h = (oh * self.stride[1] + kh) as isize - self.padding[1] as isize;
                            if h < 0 || h >= h_n as isize {
                                continue;
                            }
                            for kw in 0..self.kernel[2] {
                                let w = (ow * self.stride[2] + kw) as isize - self.padding[2] as isize;
                                if w < 0 || w >= w_n as isize {
                                    continue;
                                }
                                f(oi, (t as usize * h_n + h as usize) * w_n + w as usize);
                            }
                        }
                    }
                    oi += 1;
                }
            }
        }
    }
}

/// `(out_index, in_index)` of every in-bounds tap of one plane, in window order.
fn tap_table(spec: &Pool3dSpec, dims: [usize; 3], out: [usize; 3]) -> Vec<[u32; 2]> {
    let mut taps = Vec::new();
    spec.for_each_tap(dims, out, |o, i| taps.push([o as u32, i as u32]));
    taps
}

fn pool_shapes(op: &'static str, shape: &[usize], spec: &Pool3dSpec) -> Result<([usize; 3], [usize; 3], Vec<usize>)> {
    if shape.len() != 5 {
        return Err(invalid(op, format!("expected (B, C, T, H, W), got {shape:?}")));
    }
    let dims = [shape[2], shape[3], shape[4]];
    let out = spec
        .out_dims(dims)
        .ok_or_else(|| invalid(op, format!("{spec:?} does not fit {shape:?}")))?;
    Ok((dims, out, vec![shape[0], shape[1], out[0], out[1], out[2]]))
}

impl Graph {
    /// Max pooling; padded taps are ignored and ties go to the lowest linear index.
    pub fn maxpool3d(&mut self, x: Var, spec: Pool3dSpec) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let (dims, out_dims, out_shape) = pool_shapes("maxpool3d", &in_shape, &spec)?;
        let planes = in_shape[0] * in_shape[1];
        let (pin, pout) = (dims.iter().product::<usize>(), out_dims.iter().product::<usize>());
        let xv = self.value(x).data();
        let taps = tap_table(&spec, dims, out_dims);
        let mut out = vec![f64::NEG_INFINITY; planes * pout];
        let mut arg = vec![usize::MAX; planes * pout];
        for pl in 0..planes {
            let (xo, oo) = (pl * pin, pl * pout);
            let (out, arg) = (&mut out[oo..oo + pout], &mut arg[oo..oo + pout]);
            for &[o, i] in &taps {
                let (o, i) = (o as usize, xo + i as usize);
                let v = xv[i];
                if arg[o] == usize::MAX || v > out[o] || (v == out[o] && i < arg[o]) {
                    out[o] = v;
                    arg[o] = i;
                }
            }
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let mut gx = Tensor::zeros(&in_shape);
            let d = gx.data_mut();
            for (g, &i) in args.grad.data().iter().zip(&arg) {
                d[i] += g;
            }
            vec![Some(gx)]
        });
        Ok(self.record(Tensor::from_parts(out_shape, out), &[x], backward))
    }

    /// Average pooling over in-bounds taps only (padding is not counted).
    pub fn avgpool3d(&mut self, x: Var, spec: Pool3dSpec) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let (dims, out_dims, out_shape) = pool_shapes("avgpool3d", &in_shape, &spec)?;
        let planes = in_shape[0] * in_shape[1];
        let (pin, pout) = (dims.iter().product::<usize>(), out_dims.iter().product::<usize>());
        let taps = tap_table(&spec, dims, out_dims);
        let mut counts = vec![0usize; pout];
        taps.iter().for_each(|&[o, _]| counts[o as usize] += 1);
        let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        let xv = self.value(x).data();
        let mut out = vec![0.0; planes * pout];
        for pl in 0..planes {
            let (x, out) = (&xv[pl * pin..][..pin], &mut out[pl * pout..][..pout]);
            for &[o, i] in &taps {
                out[o as usize] += x[i as usize];
            }
            out.iter_mut().zip(&inv).for_each(|(v, s)| *v *= s);
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let mut gx = Tensor::zeros(&in_shape);
            let d = gx.data_mut();
            let g = args.grad.data();
            for pl in 0..planes {
                let scaled: Vec<f64> = g[pl * pout..][..pout].iter().zip(&inv).map(|(g, s)| g * s).collect();
                let d = &mut d[pl * pin..][..pin];
                for &[o, i] in &taps {
                    d[i as usize] += scaled[o as usize];
                }
            }
            vec![Some(gx)]
        });
        Ok(self.record(Tensor::from_parts(out_shape, out), &[x], backward))
    }
}
