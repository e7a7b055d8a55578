use gaitfield_autodiff::gradcheck::{check_primitive, FdConfig, FdReport, PRIMITIVES};
use gaitfield_nas::gradcheck::check_op_trials;
use gaitfield_nas::OpKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};
use crate::GradcheckArgs;

pub const TOLERANCE: f64 = 1e-4;

enum Target {
    Primitive(&'static str),
    Op(OpKind),
}

impl Target {
    fn kind(&self) -> &'static str {
        match self {
            Target::Primitive(_) => "primitive",
            Target::Op(_) => "op",
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Target::Primitive(p) => p,
            Target::Op(k) => k.name(),
        }
    }
}

fn targets(sel: &str) -> Result<Vec<Target>> {
    if sel == "all" {
        let mut t: Vec<Target> = PRIMITIVES.iter().map(|p| Target::Primitive(p)).collect();
        t.extend(OpKind::ALL.into_iter().map(Target::Op));
        return Ok(t);
    }
    if let Ok(k) = sel.parse::<OpKind>() {
        return Ok(vec![Target::Op(k)]);
    }
    match PRIMITIVES.iter().find(|p| **p == sel) {
        Some(p) => Ok(vec![Target::Primitive(p)]),
        None => Err(CliError::Input(format!(
            "`{sel}` is neither `all`, an operation nor a primitive"
        ))),
    }
}

fn name_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

fn check(t: &Target, trials: usize, seed: u64, cfg: FdConfig) -> Result<FdReport> {
    Ok(match t {
        Target::Op(k) => check_op_trials(*k, trials, name_seed(seed, k.name()), cfg)?,
        Target::Primitive(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, p));
            let mut worst = FdReport {
                max_rel_error: 0.0,
                coords_checked: 0,
                worst: None,
            };
            for _ in 0..trials {
                let r = check_primitive(p, &mut rng, cfg)?;
                worst.coords_checked += r.coords_checked;
                if !(r.max_rel_error < worst.max_rel_error) {
                    worst.max_rel_error = r.max_rel_error;
                    worst.worst = r.worst;
                }
            }
            worst
        }
    })
}

pub fn run(a: &GradcheckArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(CliError::Input("--trials must be ≥ 1".into()));
    }
    let cfg = FdConfig {
        corrupt_analytic: a.inject_fault,
        ..FdConfig::default()
    };
    let mut failed = Vec::new();
    let mut overall: f64 = 0.0;
    println!(
        "{:<10} {:<22} {:>12} {:>8}  status",
        "kind", "name", "max_rel_err", "coords"
    );
    for t in targets(&a.ops)? {
        let r = check(&t, a.trials, a.seed, cfg)?;
        let ok = r.max_rel_error < TOLERANCE;
        println!(
            "{:<10} {:<22} {:>12.3e} {:>8}  {}",
            t.kind(),
            t.name(),
            r.max_rel_error,
            r.coords_checked,
            if ok { "ok" } else { "FAIL" }
        );
        if !(r.max_rel_error <= overall) {
            overall = r.max_rel_error;
        }
        if !ok {
            failed.push(t.name());
        }
    }
    println!("max_rel_error={overall:e}");
    println!("failed={}", failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gradcheck(format!(
            "gradient check failed (tolerance {TOLERANCE:e}): {}",
            failed.join(", ")
        )))
    }
}
