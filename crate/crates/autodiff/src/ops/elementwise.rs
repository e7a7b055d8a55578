use crate::error::{mismatch, Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::{strides, Tensor};

/// Right-aligned broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every linear index of `out`, the linear index of the broadcast source.
fn broadcast_map(out: &[usize], src: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let pad = rank - src.len();
    let src_strides = strides(src);
    let mut eff = vec![0usize; rank];
    for i in 0..src.len() {
        if src[i] != 1 {
            eff[i + pad] = src_strides[i];
        }
    }
    let n: usize = out.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut lin = 0usize;
    for _ in 0..n {
        map.push(lin);
        for d in (0..rank).rev() {
            idx[d] += 1;
            lin += eff[d];
            if idx[d] < out[d] {
                break;
            }
            lin -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// Sums `grad` (shaped like the broadcast output) back onto `target`.
fn reduce_to(grad: &Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let mut out = Tensor::zeros(target);
    if out.numel() == 1 {
        out.data_mut()[0] = grad.sum();
        return out;
    }
    let map = broadcast_map(grad.shape(), target);
    let o = out.data_mut();
    for (g, &j) in grad.data().iter().zip(&map) {
        o[j] += g;
    }
    out
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

/// Values of both operands expanded to the output shape.
fn expand(t: &Tensor, out_shape: &[usize]) -> Tensor {
    if t.shape() == out_shape {
        return t.clone();
    }
    let map = broadcast_map(out_shape, t.shape());
    let d = t.data();
    Tensor::from_parts(out_shape.to_vec(), map.iter().map(|&j| d[j]).collect())
}

impl Graph {
    fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| mismatch(op.name(), &sa, &sb))?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = if sa == sb {
            va.zip_map(vb, |x, y| op.apply(x, y))
        } else if vb.numel() == 1 && sa == out_shape {
            let s = vb.item();
            va.map(|x| op.apply(x, s))
        } else {
            let ea = expand(va, &out_shape);
            let eb = expand(vb, &out_shape);
            ea.zip_map(&eb, |x, y| op.apply(x, y))
        };
        let backward = Box::new(move |args: &crate::graph::BackwardArgs<'_>| {
            let g = args.grad;
            let (ta, tb) = (args.inputs[0], args.inputs[1]);
            let out_shape = g.shape();
            let mut res = vec![None, None];
            match op {
                BinOp::Add => {
                    if args.needs[0] {
                        res[0] = Some(reduce_to(g, ta.shape()));
                    }
                    if args.needs[1] {
                        res[1] = Some(reduce_to(g, tb.shape()));
                    }
                }
                BinOp::Sub => {
                    if args.needs[0] {
                        res[0] = Some(reduce_to(g, ta.shape()));
                    }
                    if args.needs[1] {
                        res[1] = Some(reduce_to(&g.map(|v| -v), tb.shape()));
                    }
                }
                BinOp::Mul => {
                    if args.needs[0] {
                        let eb = expand(tb, out_shape);
                        res[0] = Some(reduce_to(&g.zip_map(&eb, |x, y| x * y), ta.shape()));
                    }
                    if args.needs[1] {
                        let ea = expand(ta, out_shape);
                        res[1] = Some(reduce_to(&g.zip_map(&ea, |x, y| x * y), tb.shape()));
                    }
                }
                BinOp::Div => {
                    let eb = expand(tb, out_shape);
                    if args.needs[0] {
                        res[0] = Some(reduce_to(&g.zip_map(&eb, |x, y| x / y), ta.shape()));
                    }
                    if args.needs[1] {
                        // d(a/b)/db = -out / b
                        let gy = g.zip_map(args.out, |x, o| x * o);
                        let gb = gy.zip_map(&eb, |x, y| -x / y);
                        res[1] = Some(reduce_to(&gb, tb.shape()));
                    }
                }
            }
            res
        });
        Ok(self.record(value, &[a, b], backward))
    }

    /// Broadcasting addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    /// Broadcasting product; with a `(B, C, 1, 1, 1)` operand this is the per-channel scale.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, a, b)
    }

    /// Sums any number of same-shaped tensors in argument order.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| crate::error::invalid("add_n", "no operands"))?;
        let shape = self.shape(first).to_vec();
        let mut acc = self.value(first).clone();
        for &x in rest {
            if self.shape(x) != shape.as_slice() {
                return Err(mismatch("add_n", &shape, self.shape(x)));
            }
            acc.add_assign(self.value(x));
        }
        let n = xs.len();
        let backward = Box::new(move |args: &crate::graph::BackwardArgs<'_>| {
            (0..n).map(|i| args.needs[i].then(|| args.grad.clone())).collect()
        });
        Ok(self.record(acc, xs, backward))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
        let value = self.value(x).map(f);
        let backward = Box::new(move |args: &crate::graph::BackwardArgs<'_>| {
            let xin = args.inputs[0].data();
            let out = args.out.data();
            let data = args
                .grad
                .data()
                .iter()
                .enumerate()
                .map(|(i, g)| g * df(xin[i], out[i]))
                .collect();
            vec![Some(Tensor::from_parts(args.grad.shape().to_vec(), data))]
        });
        self.record(value, &[x], backward)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v + c, |_, _| 1.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(
            x,
            move |v| if v > 0.0 { v } else { slope * v },
            move |v, _| if v > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, |_, y| y)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, |v, _| 2.0 * v)
    }

    /// Natural logarithm; every element must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(TensorError::Domain {
                op: "log",
                msg: format!("non-positive input {bad}"),
            });
        }
        Ok(self.unary(x, f64::ln, |v, _| 1.0 / v))
    }

    /// Square root; every element must be strictly positive (the derivative diverges at 0).
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(TensorError::Domain {
                op: "sqrt",
                msg: format!("non-positive input {bad}"),
            });
        }
        Ok(self.unary(x, f64::sqrt, |_, y| 0.5 / y))
    }

    /// `max(x, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, move |v| v.max(floor), move |v, _| if v > floor { 1.0 } else { 0.0 })
    }

    /// Elementwise `x^k` with a differentiable one-element exponent `k`.
    ///
    /// The base must be strictly positive; callers clamp first.
    pub fn power(&mut self, x: Var, k: Var) -> Result<Var> {
        if self.value(k).numel() != 1 {
            return Err(mismatch("power", self.shape(x), self.shape(k)));
        }
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(TensorError::Domain {
                op: "power",
                msg: format!("non-positive base {bad}"),
            });
        }
        let kv = self.value(k).item();
        let value = self.value(x).map(|v| v.powf(kv));
        let backward = Box::new(move |args: &crate::graph::BackwardArgs<'_>| {
            let (xin, kt) = (args.inputs[0], args.inputs[1]);
            let kv = kt.item();
            let g = args.grad.data();
            let out = args.out.data();
            let gx = args.needs[0].then(|| {
                let data = g
                    .iter()
                    .zip(xin.data())
                    .zip(out)
                    .map(|((g, x), y)| g * kv * y / x)
                    .collect();
                Tensor::from_parts(xin.shape().to_vec(), data)
            });
            let gk = args.needs[1].then(|| {
                let s: f64 = g
                    .iter()
                    .zip(xin.data())
                    .zip(out)
                    .map(|((g, x), y)| g * y * x.ln())
                    .sum();
                Tensor::from_parts(kt.shape().to_vec(), vec![s])
            });
            vec![gx, gk]
        });
        Ok(self.record(value, &[x, k], backward))
    }
}
