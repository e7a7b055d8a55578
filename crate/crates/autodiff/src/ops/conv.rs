//! 3-D convolution with stride 1 and zero "same" padding, lowered to GEMM via im2col.

use crate::error::{invalid, mismatch, Result};
use crate::gemm::{gemm, Layout};
use crate::graph::{BackwardArgs, Graph, Var};
use crate::tensor::Tensor;

/// Dilation per (T, H, W) axis and group count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub dilation: [usize; 3],
    pub groups: usize,
}

impl Default for Conv3dSpec {
    fn default() -> Self {
        Conv3dSpec {
            dilation: [1, 1, 1],
            groups: 1,
        }
    }
}

impl Conv3dSpec {
    pub fn dilated(d: usize) -> Self {
        Conv3dSpec {
            dilation: [d; 3],
            ..Self::default()
        }
    }

    pub fn grouped(self, groups: usize) -> Self {
        Conv3dSpec { groups, ..self }
    }
}

struct Geometry {
    cin_g: usize,
    cout_g: usize,
    positions: usize,
    rows: usize,
    /// Contiguous copies `(row, out_position, src_offset, len)` making up the im2col
    /// matrix of one group; `src_offset` is relative to the group's first channel.
    runs: Vec<[u32; 4]>,
}

impl Geometry {
    fn new(cin_g: usize, cout_g: usize, dims: [usize; 3], kernel: [usize; 3], dilation: [usize; 3]) -> Self {
        let [t_n, h_n, w_n] = dims;
        let [kt, kh, kw] = kernel;
        let pad = [0, 1, 2].map(|i| dilation[i] * (kernel[i] - 1) / 2);
        let p = t_n * h_n * w_n;
        let mut runs = Vec::new();
        for ci in 0..cin_g {
            for dt in 0..kt {
                let ot = (dt * dilation[0]) as isize - pad[0] as isize;
                for dh in 0..kh {
                    let oh = (dh * dilation[1]) as isize - pad[1] as isize;
                    for dw in 0..kw {
                        let ow = (dw * dilation[2]) as isize - pad[2] as isize;
                        let row = ((ci * kt + dt) * kh + dh) * kw + dw;
                        let w_lo = (-ow).max(0) as usize;
                        let w_hi = (w_n as isize - ow).min(w_n as isize);
                        if w_hi <= w_lo as isize {
                            continue;
                        }
                        let len = w_hi as usize - w_lo;
                        for t in 0..t_n {
                            let st = t as isize + ot;
                            if st < 0 || st >= t_n as isize {
                                continue;
                            }
                            for h in 0..h_n {
                                let sh = h as isize + oh;
                                if sh < 0 || sh >= h_n as isize {
                                    continue;
                                }
                                let out = (t * h_n + h) * w_n + w_lo;
                                let src =
                                    ci * p + (st as usize * h_n + sh as usize) * w_n + (w_lo as isize + ow) as usize;
                                runs.push([row, out, src, len].map(|v| v as u32));
                            }
                        }
                    }
                }
            }
        }
        Geometry {
            cin_g,
            cout_g,
            positions: p,
            rows: cin_g * kt * kh * kw,
            runs,
        }
    }

    /// Writes the im2col block of one sample into columns `col_off..col_off + positions`
    /// of a `rows × stride` matrix whose padding entries are already zero.
    fn im2col(&self, x: &[f64], col: &mut [f64], stride: usize, col_off: usize) {
        for &[row, out, src, len] in &self.runs {
            let (c, s, len) = (
                row as usize * stride + col_off + out as usize,
                src as usize,
                len as usize,
            );
            col[c..c + len].copy_from_slice(&x[s..s + len]);
        }
    }

    fn col2im(&self, col: &[f64], stride: usize, col_off: usize, dx: &mut [f64]) {
        for &[row, out, src, len] in &self.runs {
            let (c, s, len) = (
                row as usize * stride + col_off + out as usize,
                src as usize,
                len as usize,
            );
            for (d, v) in dx[s..s + len].iter_mut().zip(&col[c..c + len]) {
                *d += v;
            }
        }
    }

    /// One-channel-per-group case: accumulates `w[tap] · x` straight into the output.
    fn depthwise_forward(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        for &[row, o, s, len] in &self.runs {
            let (o, s, len) = (o as usize, s as usize, len as usize);
            let wv = w[row as usize];
            for (d, v) in out[o..o + len].iter_mut().zip(&x[s..s + len]) {
                *d += wv * v;
            }
        }
    }

    fn depthwise_backward(&self, x: &[f64], w: &[f64], gy: &[f64], gx: Option<&mut [f64]>, gw: Option<&mut [f64]>) {
        if let Some(gx) = gx {
            for &[row, o, s, len] in &self.runs {
                let (o, s, len) = (o as usize, s as usize, len as usize);
                let wv = w[row as usize];
                for (d, g) in gx[s..s + len].iter_mut().zip(&gy[o..o + len]) {
                    *d += wv * g;
                }
            }
        }
        if let Some(gw) = gw {
            for &[row, o, s, len] in &self.runs {
                let (o, s, len) = (o as usize, s as usize, len as usize);
                gw[row as usize] += gy[o..o + len]
                    .iter()
                    .zip(&x[s..s + len])
                    .map(|(g, v)| g * v)
                    .sum::<f64>();
            }
        }
    }
}

/// Target GEMM width: wider right-hand operands fall out of cache.
const CHUNK_COLUMNS: usize = 384;

/// im2col of group `g` for samples `b0..b1`: a `rows × ((b1 − b0) · positions)` matrix.
fn chunk_col(geo: &Geometry, xv: &[f64], (b0, b1): (usize, usize), groups: usize, g: usize, col: &mut [f64]) {
    let (p, in_block) = (geo.positions, geo.cin_g * geo.positions);
    let n = (b1 - b0) * p;
    col[..geo.rows * n].fill(0.0);
    for b in b0..b1 {
        geo.im2col(&xv[(b * groups + g) * in_block..][..in_block], col, n, (b - b0) * p);
    }
}

fn sample_chunks(batch: usize, p: usize) -> impl Iterator<Item = (usize, usize)> {
    let per = (CHUNK_COLUMNS / p.max(1)).max(1);
    (0..batch.div_ceil(per)).map(move |i| (i * per, ((i + 1) * per).min(batch)))
}

impl Graph {
    /// `x: (B, Cin, T, H, W)`, `w: (Cout, Cin / groups, kt, kh, kw)` with odd kernel
    /// extents, optional `bias: (Cout,)`. Output keeps `(T, H, W)`.
    pub fn conv3d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv3dSpec) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 5 || ws.len() != 5 {
            return Err(mismatch("conv3d", &xs, &ws));
        }
        let groups = spec.groups;
        if groups == 0 || !xs[1].is_multiple_of(groups) || !ws[0].is_multiple_of(groups) || ws[1] * groups != xs[1] {
            return Err(mismatch("conv3d", &xs, &ws));
        }
        let kernel = [ws[2], ws[3], ws[4]];
        if kernel.iter().any(|k| k % 2 == 0) || spec.dilation.contains(&0) {
            return Err(invalid(
                "conv3d",
                format!("kernel {kernel:?} must be odd with dilation ≥ 1"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(mismatch("conv3d", &ws, self.shape(b)));
            }
        }
        let geo = Geometry::new(ws[1], ws[0] / groups, [xs[2], xs[3], xs[4]], kernel, spec.dilation);
        let batch = xs[0];
        let cout = ws[0];
        let p = geo.positions;
        let (k_rows, cout_g) = (geo.rows, geo.cout_g);
        let depthwise = geo.cin_g == 1 && cout_g == 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; batch * cout * p];
        if depthwise {
            for b in 0..batch {
                for g in 0..groups {
                    let i = b * groups + g;
                    geo.depthwise_forward(&xv[i * p..][..p], &wv[g * k_rows..][..k_rows], &mut out[i * p..][..p]);
                }
            }
        } else {
            let cap = sample_chunks(batch, p).map(|(a, b)| (b - a) * p).max().unwrap_or(0);
            let mut col = vec![0.0; k_rows * cap];
            let mut tmp = vec![0.0; cout_g * cap];
            for g in 0..groups {
                for (b0, b1) in sample_chunks(batch, p) {
                    let n = (b1 - b0) * p;
                    chunk_col(&geo, xv, (b0, b1), groups, g, &mut col);
                    gemm(
                        cout_g,
                        k_rows,
                        n,
                        &wv[g * cout_g * k_rows..],
                        Layout::N,
                        &col,
                        Layout::N,
                        0.0,
                        &mut tmp,
                    );
                    for co in 0..cout_g {
                        for b in b0..b1 {
                            out[(b * cout + g * cout_g + co) * p..][..p]
                                .copy_from_slice(&tmp[co * n + (b - b0) * p..][..p]);
                        }
                    }
                }
            }
        }
        if let Some(bv) = bias {
            let bv = self.value(bv).data();
            for (chunk, bias) in out.chunks_mut(p).zip(bv.iter().cycle()) {
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        let mut out_shape = xs.clone();
        out_shape[1] = cout;

        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let g_out = args.grad.data();
            let xv = args.inputs[0].data();
            let wv = args.inputs[1].data();
            let mut gx = args.needs[0].then(|| vec![0.0; xv.len()]);
            let mut gw = args.needs[1].then(|| vec![0.0; wv.len()]);
            if depthwise {
                for b in 0..batch {
                    for g in 0..groups {
                        let i = b * groups + g;
                        geo.depthwise_backward(
                            &xv[i * p..][..p],
                            &wv[g * k_rows..][..k_rows],
                            &g_out[i * p..][..p],
                            gx.as_mut().map(|d| &mut d[i * p..][..p]),
                            gw.as_mut().map(|d| &mut d[g * k_rows..][..k_rows]),
                        );
                    }
                }
            } else {
                let cap = sample_chunks(batch, p).map(|(a, b)| (b - a) * p).max().unwrap_or(0);
                let mut col = vec![0.0; k_rows * cap];
                let mut gy = vec![0.0; cout_g * cap];
                let in_block = geo.cin_g * p;
                for g in 0..groups {
                    for (b0, b1) in sample_chunks(batch, p) {
                        let n = (b1 - b0) * p;
                        for co in 0..cout_g {
                            for b in b0..b1 {
                                gy[co * n + (b - b0) * p..][..p]
                                    .copy_from_slice(&g_out[(b * cout + g * cout_g + co) * p..][..p]);
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            chunk_col(&geo, xv, (b0, b1), groups, g, &mut col);
                            let dst = &mut gw[g * cout_g * k_rows..][..cout_g * k_rows];
                            gemm(cout_g, n, k_rows, &gy, Layout::N, &col, Layout::T, 1.0, dst);
                        }
                        if let Some(gx) = gx.as_mut() {
                            let wg = &wv[g * cout_g * k_rows..][..cout_g * k_rows];
                            gemm(k_rows, cout_g, n, wg, Layout::T, &gy, Layout::N, 0.0, &mut col);
                            for b in b0..b1 {
                                geo.col2im(
                                    &col,
                                    n,
                                    (b - b0) * p,
                                    &mut gx[(b * groups + g) * in_block..][..in_block],
                                );
                            }
                        }
                    }
                }
            }
            let mut res = vec![
                gx.map(|d| Tensor::from_parts(args.inputs[0].shape().to_vec(), d)),
                gw.map(|d| Tensor::from_parts(args.inputs[1].shape().to_vec(), d)),
            ];
            if args.inputs.len() == 3 {
                res.push(args.needs[2].then(|| {
                    let mut gb = vec![0.0; cout];
                    for (i, chunk) in g_out.chunks(p).enumerate() {
                        gb[i % cout] += chunk.iter().sum::<f64>();
                    }
                    Tensor::from_parts(vec![cout], gb)
                }));
            }
            res
        });
        let parents: Vec<Var> = match bias {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        };
        Ok(self.record(Tensor::from_parts(out_shape, out), &parents, backward))
    }
}
