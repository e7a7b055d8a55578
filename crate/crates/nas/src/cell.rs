//! The five-node fusion cell: two descriptor inputs, two intermediate nodes, summed output.

use gaitfield_autodiff::{Graph, Result, TensorError, Var};

use crate::ops::{apply_op, op_params, OpContext, OpKind, NUM_OPS};
use crate::params::{ParamLookup, ParamSpec, Scoped};

pub const NUM_EDGES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Silhouette,
    Field,
    Inner1,
    Inner2,
}

impl Node {
    pub fn name(self) -> &'static str {
        match self {
            Node::Silhouette => "in_sil",
            Node::Field => "in_dstf",
            Node::Inner1 => "n3",
            Node::Inner2 => "n4",
        }
    }
}

/// Searchable edges, all ending in an intermediate node.
pub const EDGES: [(Node, Node); NUM_EDGES] = [
    (Node::Silhouette, Node::Inner1),
    (Node::Field, Node::Inner1),
    (Node::Silhouette, Node::Inner2),
    (Node::Field, Node::Inner2),
    (Node::Inner1, Node::Inner2),
];

/// Architecture weights per edge and, once discretized, the chosen operation per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct CellArchitecture {
    alpha: [[f64; NUM_OPS]; NUM_EDGES],
    discrete: Option<[OpKind; NUM_EDGES]>,
}

impl Default for CellArchitecture {
    fn default() -> Self {
        CellArchitecture {
            alpha: [[0.0; NUM_OPS]; NUM_EDGES],
            discrete: None,
        }
    }
}

fn argmax_lowest(row: &[f64; NUM_OPS]) -> OpKind {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    OpKind::ALL[best]
}

impl CellArchitecture {
    /// Relaxed architecture from 60 edge-major weights.
    pub fn from_alpha(values: &[f64]) -> std::result::Result<Self, String> {
        if values.len() != NUM_EDGES * NUM_OPS {
            return Err(format!(
                "expected {} architecture weights, got {}",
                NUM_EDGES * NUM_OPS,
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite architecture weight {v}"));
        }
        let mut alpha = [[0.0; NUM_OPS]; NUM_EDGES];
        for (e, row) in alpha.iter_mut().enumerate() {
            row.copy_from_slice(&values[e * NUM_OPS..(e + 1) * NUM_OPS]);
        }
        Ok(CellArchitecture { alpha, discrete: None })
    }

    /// A discrete cell with the given operations, keeping `alpha` for the record.
    pub fn with_choice(mut self, ops: [OpKind; NUM_EDGES]) -> Self {
        self.discrete = Some(ops);
        self
    }

    pub fn fixed(ops: [OpKind; NUM_EDGES]) -> Self {
        Self::default().with_choice(ops)
    }

    pub fn alpha(&self) -> &[[f64; NUM_OPS]; NUM_EDGES] {
        &self.alpha
    }

    pub fn alpha_flat(&self) -> Vec<f64> {
        self.alpha.iter().flatten().copied().collect()
    }

    pub fn discrete(&self) -> Option<&[OpKind; NUM_EDGES]> {
        self.discrete.as_ref()
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete.is_some()
    }

    /// Per edge, the argmax-α operation (ties to the lowest index); all edges are kept.
    pub fn discretize(&self) -> Self {
        let ops = std::array::from_fn(|e| argmax_lowest(&self.alpha[e]));
        self.clone().with_choice(ops)
    }

    /// Softmax of one edge's weights.
    pub fn edge_weights(&self, edge: usize) -> [f64; NUM_OPS] {
        let row = &self.alpha[edge];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        std::array::from_fn(|i| e[i] / s)
    }
}

pub fn edge_prefix(edge: usize, kind: OpKind) -> String {
    format!("e{edge}.{}", kind.name())
}

/// Parameters of the cell relative to its scope: all operations on every edge in
/// relaxed mode, only the chosen ones in discrete mode.
pub fn cell_params(arch: &CellArchitecture, ctx: OpContext) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    for e in 0..NUM_EDGES {
        let kinds: Vec<OpKind> = match arch.discrete() {
            Some(ops) => vec![ops[e]],
            None => OpKind::ALL.to_vec(),
        };
        for k in kinds {
            let prefix = edge_prefix(e, k);
            out.extend(op_params(k, ctx).into_iter().map(|s| s.prefixed(&prefix)));
        }
    }
    out
}

/// `Σ_o softmax(alpha_edge)_o · o(x)`, summed in operation order.
///
/// The zero branch contributes nothing to the sum but still takes part in the softmax.
pub fn mixed_op(g: &mut Graph, x: Var, alpha_edge: Var, p: &dyn ParamLookup, edge: usize) -> Result<Var> {
    if g.value(alpha_edge).numel() != NUM_OPS {
        return Err(TensorError::InvalidArgument {
            op: "mixed_op",
            msg: format!("expected {NUM_OPS} weights, got shape {:?}", g.shape(alpha_edge)),
        });
    }
    if !g.value(alpha_edge).all_finite() {
        return Err(TensorError::Domain {
            op: "mixed_op",
            msg: "non-finite architecture weights".into(),
        });
    }
    let flat = g.reshape(alpha_edge, &[NUM_OPS])?;
    let weights = g.softmax(flat, 0)?;
    let mut terms = Vec::with_capacity(NUM_OPS);
    for kind in OpKind::ALL {
        if kind == OpKind::Zero {
            continue;
        }
        let scoped = Scoped::new(p, edge_prefix(edge, kind));
        let branch = apply_op(g, kind, x, &scoped)?;
        let w = g.narrow(weights, 0, kind.index(), 1)?;
        terms.push(g.mul(branch, w)?);
    }
    g.add_n(&terms)
}

/// How the edges of a cell are evaluated.
#[derive(Clone, Copy, Debug)]
pub enum CellMode<'a> {
    /// Mixed operations driven by a `(5, 12)` weight tensor on the tape.
    Relaxed(Var),
    Discrete(&'a [OpKind; NUM_EDGES]),
}

fn edge_forward(g: &mut Graph, x: Var, edge: usize, mode: CellMode, p: &dyn ParamLookup) -> Result<Var> {
    match mode {
        CellMode::Relaxed(alpha) => {
            let row = g.narrow(alpha, 0, edge, 1)?;
            mixed_op(g, x, row, p, edge)
        }
        CellMode::Discrete(ops) => {
            let scoped = Scoped::new(p, edge_prefix(edge, ops[edge]));
            apply_op(g, ops[edge], x, &scoped)
        }
    }
}

/// `n3 = ō(sil) + ō(field)`, `n4 = ō(sil) + ō(field) + ō(n3)`, output `n3 + n4`.
pub fn md_cell_forward(g: &mut Graph, f_sil: Var, f_field: Var, mode: CellMode, p: &dyn ParamLookup) -> Result<Var> {
    if g.shape(f_sil) != g.shape(f_field) {
        return Err(TensorError::ShapeMismatch {
            op: "md_cell_forward",
            lhs: g.shape(f_sil).to_vec(),
            rhs: g.shape(f_field).to_vec(),
        });
    }
    let a = edge_forward(g, f_sil, 0, mode, p)?;
    let b = edge_forward(g, f_field, 1, mode, p)?;
    let n3 = g.add(a, b)?;
    let c = edge_forward(g, f_sil, 2, mode, p)?;
    let d = edge_forward(g, f_field, 3, mode, p)?;
    let e = edge_forward(g, n3, 4, mode, p)?;
    let n4 = g.add_n(&[c, d, e])?;
    g.add(n3, n4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_picks_argmax_with_lowest_tie() {
        let mut v = vec![0.0; 60];
        v[OpKind::SpatialAttention.index()] = 2.0;
        v[12 + 3] = 1.0;
        v[12 + 9] = 1.0;
        let arch = CellArchitecture::from_alpha(&v).unwrap().discretize();
        let ops = arch.discrete().unwrap();
        assert_eq!(ops[0], OpKind::SpatialAttention);
        assert_eq!(ops[1], OpKind::AtrousConv5Rate2);
        assert_eq!(ops[2], OpKind::DepthwiseSepConv3);
        assert_eq!(arch.discretize(), arch);
    }

    #[test]
    fn edge_weights_are_a_distribution() {
        let v: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let arch = CellArchitecture::from_alpha(&v).unwrap();
        for e in 0..NUM_EDGES {
            let w = arch.edge_weights(e);
            assert!(w.iter().all(|&x| x > 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(CellArchitecture::from_alpha(&v[..59]).is_err());
    }
}
