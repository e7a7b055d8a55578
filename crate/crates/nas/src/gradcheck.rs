//! Finite-difference checks of the candidate operations, parameters included.

use std::collections::BTreeMap;

use gaitfield_autodiff::gradcheck::{check_gradients, FdConfig, FdReport};
use gaitfield_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{apply_op, op_params, OpContext, OpKind};

/// Input geometry of one trial: (batch, channels, frames, height, width).
pub const CHECK_SHAPE: [usize; 5] = [2, 4, 3, 4, 3];

/// A permutation of evenly spaced values, so pooling windows never tie.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / n as f64 - 1.0).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, vals).expect("shape matches its element count")
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], a: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-a..a)).collect()).expect("shape matches its element count")
}

/// One randomized trial of `kind` with respect to its input and every parameter.
pub fn check_op(kind: OpKind, rng: &mut ChaCha8Rng, cfg: FdConfig) -> Result<FdReport> {
    let [_, c, t, _, _] = CHECK_SHAPE;
    let ctx = OpContext::new(c, t);
    let specs = op_params(kind, ctx);
    let mut inputs = vec![distinct(rng, &CHECK_SHAPE)];
    inputs.extend(specs.iter().map(|s| uniform(rng, &s.shape, 0.5)));
    let cfg = FdConfig {
        seed: rng.random(),
        ..cfg
    };
    let report = check_gradients(
        |g, vars| {
            let bound: BTreeMap<String, _> = specs
                .iter()
                .map(|s| s.name.clone())
                .zip(vars[1..].iter().copied())
                .collect();
            apply_op(g, kind, vars[0], &bound)
        },
        &inputs,
        &[],
        cfg,
    )?;
    Ok(report)
}

/// Worst report over `trials` seeded trials.
pub fn check_op_trials(kind: OpKind, trials: usize, seed: u64, cfg: FdConfig) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.index() as u64);
    let mut worst = FdReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for _ in 0..trials {
        let r = check_op(kind, &mut rng, cfg)?;
        worst.coords_checked += r.coords_checked;
        if r.max_rel_error >= worst.max_rel_error {
            worst.max_rel_error = r.max_rel_error;
            worst.worst = r.worst;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_one_trial() {
        for kind in OpKind::ALL {
            let r = check_op_trials(kind, 1, 3, FdConfig::default()).unwrap();
            assert!(r.max_rel_error < 1e-4, "{kind}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let cfg = FdConfig {
            corrupt_analytic: true,
            ..FdConfig::default()
        };
        let r = check_op_trials(OpKind::AvgPool3, 1, 3, cfg).unwrap();
        assert!(r.max_rel_error > 1e-4);
    }
}
