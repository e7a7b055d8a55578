//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct FdConfig {
    /// Perturbation for the central difference.
    pub eps: f64,
    /// Upper bound on probed coordinates per input; extra coordinates are sampled.
    pub max_coords: usize,
    /// Denominator floor: the error is `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub seed: u64,
    /// Adds a fixed offset to every analytic coordinate (failure injection).
    pub corrupt_analytic: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            eps: 1e-5,
            max_coords: 48,
            floor: 1e-4,
            seed: 0,
            corrupt_analytic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(input index, flat coordinate)` of the largest error.
    pub worst: Option<(usize, usize)>,
}

/// Relative error with a denominator floor, so exact zeros compare cleanly.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `∂/∂inputs sum(f(inputs) ⊙ R)` for a fixed random projection `R`.
///
/// Inputs whose index is in `frozen` are passed as constants and not probed.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], frozen: &[usize], cfg: FdConfig) -> Result<FdReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let build = |g: &mut Graph, values: &[Tensor]| -> Vec<Var> {
        values
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if frozen.contains(&i) {
                    g.constant(t.clone())
                } else {
                    g.leaf(t.clone())
                }
            })
            .collect()
    };

    let mut g = Graph::new();
    let vars = build(&mut g, inputs);
    let out = f(&mut g, &vars)?;
    let out_shape = g.shape(out).to_vec();
    let proj = Tensor::new(
        &out_shape,
        (0..g.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let scalar_of = |g: &mut Graph, out: Var| -> Result<Var> {
        let r = g.constant(proj.clone());
        let p = g.mul(out, r)?;
        Ok(g.sum_all(p))
    };
    let loss = scalar_of(&mut g, out)?;
    let grads = g.backward(loss)?;

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = build(&mut g, values);
        let out = f(&mut g, &vars)?;
        let l = scalar_of(&mut g, out)?;
        Ok(g.value(l).item())
    };

    let mut report = FdReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };
    let mut probe = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        if frozen.contains(&i) {
            continue;
        }
        let analytic = grads.wrt(&g, v);
        let n = inputs[i].numel();
        let coords: Vec<usize> = if n <= cfg.max_coords {
            (0..n).collect()
        } else {
            (0..cfg.max_coords).map(|_| rng.random_range(0..n)).collect()
        };
        for c in coords {
            let orig = inputs[i].data()[c];
            probe[i].data_mut()[c] = orig + cfg.eps;
            let up = eval(&probe)?;
            probe[i].data_mut()[c] = orig - cfg.eps;
            let down = eval(&probe)?;
            probe[i].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let mut a = analytic.data()[c];
            if cfg.corrupt_analytic {
                a += 1e-2;
            }
            let e = rel_error(a, numeric, cfg.floor);
            report.coords_checked += 1;
            // `!(e <= max)` also records a NaN error
            if !(e <= report.max_rel_error) || report.worst.is_none() {
                report.max_rel_error = e;
                report.worst = Some((i, c));
            }
        }
    }
    Ok(report)
}

/// Names of every primitive covered by [`check_primitive`].
pub const PRIMITIVES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "broadcast_scale",
    "add_n",
    "matmul",
    "conv3d",
    "conv3d_dilated",
    "conv3d_grouped",
    "avgpool3d",
    "maxpool3d",
    "sum_axes",
    "mean_axes",
    "max_axes",
    "power",
    "sigmoid",
    "relu",
    "leaky_relu",
    "softmax",
    "log_softmax",
    "log",
    "sqrt",
    "exp",
    "clamp_min",
    "concat",
    "narrow",
    "permute",
    "reshape",
    "gather",
];

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Values with magnitude in `[0.1, 1)` and random sign, away from kinks at zero.
fn signed_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Distinct values spaced far beyond the probe step, in random order.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    Tensor::from_parts(shape.to_vec(), vals)
}

fn small_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    vec![rng.random_range(1..4), rng.random_range(1..5), rng.random_range(2..5)]
}

/// Runs one randomized finite-difference trial of primitive `name`.
pub fn check_primitive(name: &str, rng: &mut ChaCha8Rng, cfg: FdConfig) -> Result<FdReport> {
    use crate::ops::{Conv3dSpec, Pool3dSpec};
    let cfg = FdConfig {
        seed: rng.random(),
        ..cfg
    };
    let s = small_shape(rng);
    match name {
        "add" | "sub" | "mul" | "div" => {
            let a = uniform(rng, &s, -1.0, 1.0);
            let b = if name == "div" {
                uniform(rng, &s, 0.5, 2.0)
            } else {
                uniform(rng, &s, -1.0, 1.0)
            };
            let op = name.to_string();
            check_gradients(
                move |g, v| match op.as_str() {
                    "add" => g.add(v[0], v[1]),
                    "sub" => g.sub(v[0], v[1]),
                    "mul" => g.mul(v[0], v[1]),
                    _ => g.div(v[0], v[1]),
                },
                &[a, b],
                &[],
                cfg,
            )
        }
        "broadcast_scale" => {
            let x = uniform(rng, &[2, 3, 2, 3, 2], -1.0, 1.0);
            let sc = uniform(rng, &[2, 3, 1, 1, 1], -1.0, 1.0);
            check_gradients(|g, v| g.mul(v[0], v[1]), &[x, sc], &[], cfg)
        }
        "add_n" => {
            let xs: Vec<Tensor> = (0..3).map(|_| uniform(rng, &s, -1.0, 1.0)).collect();
            check_gradients(|g, v| g.add_n(v), &xs, &[], cfg)
        }
        "matmul" => {
            let (m, k, n) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
            let a = uniform(rng, &[2, m, k], -1.0, 1.0);
            let b = uniform(rng, &[2, k, n], -1.0, 1.0);
            let shared = uniform(rng, &[n, 3], -1.0, 1.0);
            check_gradients(
                |g, v| {
                    let c = g.matmul(v[0], v[1])?;
                    g.matmul(c, v[2])
                },
                &[a, b, shared],
                &[],
                cfg,
            )
        }
        "conv3d" | "conv3d_dilated" | "conv3d_grouped" => {
            let (spec, ws) = match name {
                "conv3d" => (Conv3dSpec::default(), vec![3, 2, 3, 3, 3]),
                "conv3d_dilated" => (Conv3dSpec::dilated(2), vec![2, 2, 3, 3, 3]),
                _ => (Conv3dSpec::default().grouped(2), vec![2, 1, 3, 3, 3]),
            };
            let x = uniform(rng, &[1, 2, 3, 4, 4], -1.0, 1.0);
            let w = uniform(rng, &ws, -1.0, 1.0);
            let b = uniform(rng, &[ws[0]], -1.0, 1.0);
            check_gradients(move |g, v| g.conv3d(v[0], v[1], Some(v[2]), spec), &[x, w, b], &[], cfg)
        }
        "avgpool3d" => {
            let x = uniform(rng, &[1, 2, 3, 4, 3], -1.0, 1.0);
            check_gradients(|g, v| g.avgpool3d(v[0], Pool3dSpec::same(3)), &[x], &[], cfg)
        }
        "maxpool3d" => {
            let x = distinct(rng, &[1, 2, 3, 4, 4]);
            check_gradients(
                |g, v| {
                    let a = g.maxpool3d(v[0], Pool3dSpec::same(3))?;
                    g.maxpool3d(a, Pool3dSpec::spatial(2))
                },
                &[x],
                &[],
                cfg,
            )
        }
        "sum_axes" | "mean_axes" => {
            let x = uniform(rng, &s, -1.0, 1.0);
            let mean = name == "mean_axes";
            check_gradients(
                move |g, v| {
                    if mean {
                        g.mean_axes(v[0], &[0, 2])
                    } else {
                        g.sum_axes(v[0], &[1])
                    }
                },
                &[x],
                &[],
                cfg,
            )
        }
        "max_axes" => {
            let x = distinct(rng, &s);
            check_gradients(|g, v| g.max_axes(v[0], &[1, 2]), &[x], &[], cfg)
        }
        "power" => {
            let x = uniform(rng, &s, 0.2, 2.0);
            let k = Tensor::scalar(rng.random_range(1.0..4.0));
            check_gradients(|g, v| g.power(v[0], v[1]), &[x, k], &[], cfg)
        }
        "sigmoid" | "exp" | "softmax" | "log_softmax" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            let op = name.to_string();
            check_gradients(
                move |g, v| match op.as_str() {
                    "sigmoid" => Ok(g.sigmoid(v[0])),
                    "exp" => Ok(g.exp(v[0])),
                    "softmax" => g.softmax(v[0], 1),
                    _ => g.log_softmax(v[0], 2),
                },
                &[x],
                &[],
                cfg,
            )
        }
        "relu" | "leaky_relu" | "clamp_min" => {
            let x = signed_away_from_zero(rng, &s);
            let op = name.to_string();
            check_gradients(
                move |g, v| {
                    Ok(match op.as_str() {
                        "relu" => g.relu(v[0]),
                        "leaky_relu" => g.leaky_relu(v[0], 0.01),
                        _ => g.clamp_min(v[0], 0.0),
                    })
                },
                &[x],
                &[],
                cfg,
            )
        }
        "log" | "sqrt" => {
            let x = uniform(rng, &s, 0.2, 2.0);
            let log = name == "log";
            check_gradients(move |g, v| if log { g.log(v[0]) } else { g.sqrt(v[0]) }, &[x], &[], cfg)
        }
        "concat" => {
            let a = uniform(rng, &[2, 1, 3], -1.0, 1.0);
            let b = uniform(rng, &[2, 2, 3], -1.0, 1.0);
            check_gradients(|g, v| g.concat(&[v[0], v[1]], 1), &[a, b], &[], cfg)
        }
        "narrow" => {
            let x = uniform(rng, &[2, 4, 3], -1.0, 1.0);
            check_gradients(|g, v| g.narrow(v[0], 1, 1, 2), &[x], &[], cfg)
        }
        "permute" => {
            let x = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            check_gradients(|g, v| g.permute(v[0], &[2, 0, 1]), &[x], &[], cfg)
        }
        "reshape" => {
            let x = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            check_gradients(|g, v| g.reshape(v[0], &[6, 4]), &[x], &[], cfg)
        }
        "gather" => {
            let x = uniform(rng, &[3, 4], -1.0, 1.0);
            let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..12)).collect();
            check_gradients(move |g, v| g.gather(v[0], &idx), &[x], &[], cfg)
        }
        other => Err(crate::error::invalid(
            "gradcheck",
            format!("unknown primitive `{other}`"),
        )),
    }
}
