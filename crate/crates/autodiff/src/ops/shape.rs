use crate::error::{invalid, mismatch, Result};
use crate::graph::{BackwardArgs, Graph, Var};
use crate::tensor::{split_at_axis, strides, Tensor};

fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let eff: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = shape.len();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut lin = 0usize;
    for _ in 0..n {
        out.push(data[lin]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            lin += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            lin -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

impl Graph {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let in_shape = self.shape(x).to_vec();
        let value = self.value(x).clone().reshaped(shape)?;
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            vec![Some(Tensor::from_parts(in_shape.clone(), args.grad.data().to_vec()))]
        });
        Ok(self.record(value, &[x], backward))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len()
            || perm
                .iter()
                .any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(invalid(
                "permute",
                format!("{perm:?} is not a permutation of {shape:?}"),
            ));
        }
        let (out_shape, data) = permute_data(self.value(x).data(), &shape, perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let (s, d) = permute_data(args.grad.data(), args.grad.shape(), &inverse);
            vec![Some(Tensor::from_parts(s, d))]
        });
        Ok(self.record(Tensor::from_parts(out_shape, data), &[x], backward))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| invalid("concat", "no operands"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut extents = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            extents.push(s[axis]);
        }
        let total: usize = extents.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = split_at_axis(&out_shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &e) in xs.iter().zip(&extents) {
                let d = self.value(x).data();
                out.extend_from_slice(&d[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let g = args.grad.data();
            let mut parts: Vec<Vec<f64>> = extents.iter().map(|e| Vec::with_capacity(outer * e * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (p, &e) in parts.iter_mut().zip(&extents) {
                    p.extend_from_slice(&g[off..off + e * inner]);
                    off += e * inner;
                }
            }
            parts
                .into_iter()
                .zip(&args.inputs)
                .zip(&args.needs)
                .map(|((p, t), &need)| need.then(|| Tensor::from_parts(t.shape().to_vec(), p)))
                .collect()
        });
        Ok(self.record(Tensor::from_parts(out_shape, out), xs, backward))
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let mut gx = Tensor::zeros(&shape);
            let gd = gx.data_mut();
            let g = args.grad.data();
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                let src = &g[o * len * inner..(o + 1) * len * inner];
                for (dst, s) in gd[base..base + len * inner].iter_mut().zip(src) {
                    *dst += s;
                }
            }
            vec![Some(gx)]
        });
        Ok(self.record(Tensor::from_parts(out_shape, out), &[x], backward))
    }

    /// Picks elements by flat index into `x`; the result is 1-D.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n: usize = shape.iter().product();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(invalid("gather", format!("index {bad} out of range for {shape:?}")));
        }
        let d = self.value(x).data();
        let out: Vec<f64> = indices.iter().map(|&i| d[i]).collect();
        let idx = indices.to_vec();
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let mut gx = Tensor::zeros(&shape);
            let gd = gx.data_mut();
            for (g, &i) in args.grad.data().iter().zip(&idx) {
                gd[i] += g;
            }
            vec![Some(gx)]
        });
        Ok(self.record(Tensor::from_vec(out), &[x], backward))
    }
}
