//! Batch-all triplet loss over part embeddings plus softmax cross-entropy.

use gaitfield_autodiff::{Graph, Result, Tensor, TensorError, Var};

pub const DEFAULT_MARGIN: f64 = 0.2;
/// Added under the square root so distances stay differentiable at zero.
const DIST_EPS: f64 = 1e-12;

/// Euclidean distances between all embedding pairs of every part: `(B, P, D)` → `(P, B, B)`.
pub fn pairwise_distances(g: &mut Graph, embeddings: Var) -> Result<Var> {
    let [b, p, d] = <[usize; 3]>::try_from(g.shape(embeddings)).map_err(|_| TensorError::InvalidArgument {
        op: "pairwise_distances",
        msg: format!("expected (B, parts, D), got {:?}", g.shape(embeddings)),
    })?;
    let e = g.permute(embeddings, &[1, 0, 2])?;
    let rows = g.reshape(e, &[p, b, 1, d])?;
    let cols = g.reshape(e, &[p, 1, b, d])?;
    let diff = g.sub(rows, cols)?;
    let sq = g.square(diff);
    let s = g.sum_axes(sq, &[3])?;
    let s = g.add_scalar(s, DIST_EPS);
    let dist = g.sqrt(s)?;
    g.reshape(dist, &[p, b, b])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletStats {
    pub triplets: usize,
    /// Triplets with a positive hinge, summed over parts.
    pub active: usize,
    /// The batch holds a single identity, so no triplet exists.
    pub single_identity: bool,
}

/// Mean hinge over positive-hinge triplets of each part, averaged over parts.
///
/// `dist` is `(P, B, B)`; the active-triplet counts are taken from the forward values
/// and treated as constants.
pub fn batch_all_triplet(g: &mut Graph, dist: Var, labels: &[usize], margin: f64) -> Result<(Var, TripletStats)> {
    let [parts, b, b2] = <[usize; 3]>::try_from(g.shape(dist)).map_err(|_| TensorError::InvalidArgument {
        op: "batch_all_triplet",
        msg: format!("expected (parts, B, B), got {:?}", g.shape(dist)),
    })?;
    if b != b2 || labels.len() != b {
        return Err(TensorError::InvalidArgument {
            op: "batch_all_triplet",
            msg: format!("{} labels for distance matrix {:?}", labels.len(), g.shape(dist)),
        });
    }
    let mut ap = Vec::new();
    let mut an = Vec::new();
    for a in 0..b {
        for p in 0..b {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..b {
                if labels[n] != labels[a] {
                    ap.push(a * b + p);
                    an.push(a * b + n);
                }
            }
        }
    }
    let single_identity = labels.iter().all(|&l| l == labels[0]);
    let n = ap.len();
    if n == 0 {
        let zero = g.constant(Tensor::scalar(0.0));
        return Ok((
            zero,
            TripletStats {
                triplets: 0,
                active: 0,
                single_identity,
            },
        ));
    }
    let idx = |base: &[usize]| -> Vec<usize> {
        (0..parts)
            .flat_map(|q| base.iter().map(move |&i| q * b * b + i))
            .collect()
    };
    let d_ap = g.gather(dist, &idx(&ap))?;
    let d_an = g.gather(dist, &idx(&an))?;
    let h = g.sub(d_ap, d_an)?;
    let h = g.add_scalar(h, margin);
    let hinge = g.relu(h);
    let counts: Vec<usize> = g
        .value(hinge)
        .data()
        .chunks(n)
        .map(|c| c.iter().filter(|&&v| v > 0.0).count())
        .collect();
    let weights = Tensor::new(
        &[parts, 1],
        counts.iter().map(|&c| 1.0 / (c.max(1) as f64 * parts as f64)).collect(),
    )?;
    let hinge = g.reshape(hinge, &[parts, n])?;
    let per_part = g.sum_axes(hinge, &[1])?;
    let w = g.constant(weights);
    let weighted = g.mul(per_part, w)?;
    let loss = g.sum_all(weighted);
    Ok((
        loss,
        TripletStats {
            triplets: n,
            active: counts.iter().sum(),
            single_identity,
        },
    ))
}

/// Mean negative log-likelihood of `labels` under softmax `logits (B, K)`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let [b, k] = <[usize; 2]>::try_from(g.shape(logits)).map_err(|_| TensorError::InvalidArgument {
        op: "cross_entropy",
        msg: format!("expected (B, classes), got {:?}", g.shape(logits)),
    })?;
    if labels.len() != b || labels.iter().any(|&l| l >= k) {
        return Err(TensorError::InvalidArgument {
            op: "cross_entropy",
            msg: format!("labels {labels:?} invalid for {b} rows of {k} classes"),
        });
    }
    let lp = g.log_softmax(logits, 1)?;
    let idx: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * k + l).collect();
    let picked = g.gather(lp, &idx)?;
    let m = g.mean_all(picked);
    Ok(g.neg(m))
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub triplet: Var,
    pub ce: Var,
    pub stats: TripletStats,
}

/// Triplet and cross-entropy terms with unit weights.
pub fn total_loss(g: &mut Graph, embeddings: Var, logits: Var, labels: &[usize], margin: f64) -> Result<LossParts> {
    let dist = pairwise_distances(g, embeddings)?;
    let (triplet, stats) = batch_all_triplet(g, dist, labels, margin)?;
    let ce = cross_entropy(g, logits, labels)?;
    let total = g.add(triplet, ce)?;
    Ok(LossParts {
        total,
        triplet,
        ce,
        stats,
    })
}
