use crate::error::{mismatch, Result};
use crate::gemm::{gemm, Layout};
use crate::graph::{BackwardArgs, Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    /// Batched matrix product over the last two axes.
    ///
    /// `a` is `(..., m, k)`; `b` is either `(..., k, n)` with identical leading
    /// axes or a plain `(k, n)` matrix shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let lead = &sa[..sa.len() - 2];
        let shared_b = sb.len() == 2;
        if kb != k || (!shared_b && &sb[..sb.len() - 2] != lead) {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let batch: usize = lead.iter().product();
        let mut out_shape = lead.to_vec();
        out_shape.extend([m, n]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let bo = if shared_b { 0 } else { i * k * n };
            gemm(
                m,
                k,
                n,
                &av[i * m * k..],
                Layout::N,
                &bv[bo..],
                Layout::N,
                0.0,
                &mut out[i * m * n..],
            );
        }
        let backward = Box::new(move |args: &BackwardArgs<'_>| {
            let g = args.grad.data();
            let (ta, tb) = (args.inputs[0], args.inputs[1]);
            let ga = args.needs[0].then(|| {
                let mut ga = vec![0.0; batch * m * k];
                for i in 0..batch {
                    let bo = if shared_b { 0 } else { i * k * n };
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        &g[i * m * n..],
                        Layout::N,
                        &tb.data()[bo..],
                        Layout::T,
                        0.0,
                        &mut ga[i * m * k..],
                    );
                }
                Tensor::from_parts(ta.shape().to_vec(), ga)
            });
            let gb = args.needs[1].then(|| {
                let mut gb = vec![0.0; tb.numel()];
                for i in 0..batch {
                    let bo = if shared_b { 0 } else { i * k * n };
                    let beta = if shared_b && i > 0 { 1.0 } else { 0.0 };
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        &ta.data()[i * m * k..],
                        Layout::T,
                        &g[i * m * n..],
                        Layout::N,
                        beta,
                        &mut gb[bo..],
                    );
                }
                Tensor::from_parts(tb.shape().to_vec(), gb)
            });
            vec![ga, gb]
        });
        Ok(self.record(Tensor::from_parts(out_shape, out), &[a, b], backward))
    }
}
