use crate::error::{invalid, Result};
use crate::graph::{BackwardArgs, Graph, Var};
use crate::tensor::{split_at_axis, strides, Tensor};

fn reduced_shape(op: &'static str, shape: &[usize], axes: &[usize]) -> Result<Vec<usize>> {
    let mut out = shape.to_vec();
    for &a in axes {
        if a >= shape.len() {
            return Err(invalid(op, format!("axis {a} out of range for {shape:?}")));
        }
        out[a] = 1;
    }
    Ok(out)
}

/// Output linear index for every input element when reducing to `out` (keepdim).
fn reduce_map(inp: &[usize], out: &[usize]) -> Vec<usize> {
    let os = strides(out);
    let rank = inp.len();
    let eff: Vec<usize> = (0..rank).map(|d| if out[d] == 1 { 0 } else { os[d] }).collect();
    let n: usize = inp.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut lin = 0usize;
    for _ in 0..n {
        map.push(lin);
        for d in (0..rank).rev() {
            idx[d] += 1;
            lin += eff[d];
            if idx[d] < inp[d] {
                break;
            }
            lin -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

impl Graph {
    /// Sum over `axes`, keeping them as extent-1 dimensions.
    pub fn sum_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let out_shape = reduced_shape("sum_axes", &in_shape, axes)?;
        let map = reduce_map(&in_shape, &out_shape);
        let mut out = Tensor::zeros(&out_shape);
        {
            let o = out.data_mut();
            for (v, &j) in self.value(x).data().iter().zip(&map) {
                o[j] += v;
            }
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let g = args.grad.data();
            let data = map.iter().map(|&j| g[j]).collect();
            vec![Some(Tensor::from_parts(in_shape.clone(), data))]
        });
        Ok(self.record(out, &[x], backward))
    }

    /// Mean over `axes`, keeping them as extent-1 dimensions.
    pub fn mean_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x);
        let count: usize = axes.iter().filter(|&&a| a < shape.len()).map(|&a| shape[a]).product();
        let s = self.sum_axes(x, axes)?;
        Ok(self.scale(s, 1.0 / count as f64))
    }

    /// Max over `axes` (keepdim). Ties go to the lowest linear index.
    pub fn max_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let out_shape = reduced_shape("max_axes", &in_shape, axes)?;
        let map = reduce_map(&in_shape, &out_shape);
        let n_out: usize = out_shape.iter().product();
        let mut best = vec![f64::NEG_INFINITY; n_out];
        let mut arg = vec![usize::MAX; n_out];
        for (i, (&v, &j)) in self.value(x).data().iter().zip(&map).enumerate() {
            if arg[j] == usize::MAX || v > best[j] {
                best[j] = v;
                arg[j] = i;
            }
        }
        let out = Tensor::from_parts(out_shape, best);
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let mut gx = Tensor::zeros(&in_shape);
            let d = gx.data_mut();
            for (g, &i) in args.grad.data().iter().zip(&arg) {
                d[i] += g;
            }
            vec![Some(gx)]
        });
        Ok(self.record(out, &[x], backward))
    }

    /// Sum of all elements, as a shape-`[1]` tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let s = self.value(x).sum();
        let backward = Box::new(move |args: &BackwardArgs<'_>| vec![Some(Tensor::full(&shape, args.grad.item()))]);
        self.record(Tensor::scalar(s), &[x], backward)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(invalid("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * n * inner + k * inner + i;
                let m = (0..n).map(|k| xv[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..n {
                    let e = (xv[at(k)] - m).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..n {
                    out[at(k)] /= z;
                }
            }
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let y = args.out.data();
            let g = args.grad.data();
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * n * inner + k * inner + i;
                    let dot: f64 = (0..n).map(|k| g[at(k)] * y[at(k)]).sum();
                    for k in 0..n {
                        gx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(args.out.shape().to_vec(), gx))]
        });
        Ok(self.record(Tensor::from_parts(shape, out), &[x], backward))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(invalid(
                "log_softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * n * inner + k * inner + i;
                let m = (0..n).map(|k| xv[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..n).map(|k| (xv[at(k)] - m).exp()).sum::<f64>().ln();
                for k in 0..n {
                    out[at(k)] = xv[at(k)] - lse;
                }
            }
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let y = args.out.data();
            let g = args.grad.data();
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * n * inner + k * inner + i;
                    let gs: f64 = (0..n).map(|k| g[at(k)]).sum();
                    for k in 0..n {
                        gx[at(k)] = g[at(k)] - y[at(k)].exp() * gs;
                    }
                }
            }
            vec![Some(Tensor::from_parts(args.out.shape().to_vec(), gx))]
        });
        Ok(self.record(Tensor::from_parts(shape, out), &[x], backward))
    }
}
