//! End-to-end acceptance criteria, run in order on one thread so the timed ones are
//! not competing with each other. Prints one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gaitfield_autodiff::{Graph, Tensor};
use gaitfield_core::metrics::{frame_difference, EntropyReport, DEFAULT_BINS};
use gaitfield_core::{
    classify_pixels, edt_squared, synthetic_corpus, transform_sequence, CorpusSpec, PixelClass, PixelClassMap,
    SilhouetteFrame, TransformOptions,
};
use gaitfield_nas::cell::{cell_params, edge_prefix};
use gaitfield_nas::params::init_store;
use gaitfield_nas::run::{parse_architecture, ALPHA_HISTORY_FILE, ARCHITECTURE_FILE, SEARCH_LOSS_FILE};
use gaitfield_nas::{
    apply_op, gem_pool, mixed_op, search, split_dataset, CellArchitecture, Dataset, ModelConfig, OpContext, OpKind,
    Scoped, SearchConfig, NUM_OPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaitfield"))
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1 ─ EDT exactness against the quadratic oracle.

fn brute_force_edt(map: &PixelClassMap) -> Vec<u64> {
    let (w, h) = map.dims();
    let sources: Vec<(i64, i64)> = (0..w * h)
        .filter(|&i| map.is_boundary(i))
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            sources
                .iter()
                .map(|&(sx, sy)| ((x - sx).pow(2) + (y - sy).pow(2)) as u64)
                .min()
                .unwrap()
        })
        .collect()
}

fn random_map(rng: &mut ChaCha8Rng) -> PixelClassMap {
    let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
    let density = rng.random_range(0.02..0.98);
    let mask = (0..w * h).map(|_| u8::from(rng.random_bool(density))).collect();
    classify_pixels(&SilhouetteFrame::new(w, h, mask).unwrap())
}

fn edt_exactness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut maps, mut mismatches) = (0, 0);
    while maps < 200 {
        let map = random_map(&mut rng);
        if !map.has_boundary() {
            continue;
        }
        maps += 1;
        mismatches += usize::from(edt_squared(&map).unwrap() != brute_force_edt(&map));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 5.0,
        format!("{maps} maps, {mismatches} mismatches, {secs:.2} s"),
    )
}

// 2 ─ Field sign partition and range on the shipped corpus.

fn field_contract() -> Outcome {
    let seqs = synthetic_corpus(&CorpusSpec::default()).unwrap();
    let (mut frames, mut bad) = (0, 0);
    for seq in &seqs {
        let field = transform_sequence(seq, TransformOptions::default()).unwrap();
        for (sil, f) in seq.frames().iter().zip(field.frames()) {
            frames += 1;
            let map = classify_pixels(sil);
            let signs_ok = f.field().iter().zip(map.classes()).all(|(&v, c)| {
                (-1.0..=1.0).contains(&v)
                    && match c {
                        PixelClass::Boundary => v == 0.0,
                        PixelClass::Foreground => v > 0.0,
                        PixelClass::Background => v < 0.0,
                    }
            });
            let max = f.field().iter().cloned().fold(f64::MIN, f64::max);
            let min = f.field().iter().cloned().fold(f64::MAX, f64::min);
            let fg_ok = map.count(PixelClass::Foreground) == 0 || max == 1.0;
            let bg_ok = map.count(PixelClass::Background) == 0 || min == -1.0;
            bad += usize::from(!(signs_ok && fg_ok && bg_ok));
        }
    }
    check(
        seqs.len() >= 32 && frames >= 512 && bad == 0,
        format!("{} sequences, {frames} frames, {bad} violations", seqs.len()),
    )
}

// 3 ─ Entropy direction.

fn entropy_direction() -> Outcome {
    let seqs = synthetic_corpus(&CorpusSpec::default()).unwrap();
    let (mut sil, mut field, mut n) = (0.0, 0.0, 0usize);
    for seq in &seqs {
        let f = transform_sequence(seq, TransformOptions::default()).unwrap();
        let s = EntropyReport::of_silhouettes(seq, DEFAULT_BINS).unwrap();
        let d = EntropyReport::of_dstf(&f, DEFAULT_BINS).unwrap();
        sil += s.per_frame_entropy.iter().sum::<f64>();
        field += d.per_frame_entropy.iter().sum::<f64>();
        n += s.per_frame_entropy.len();
    }
    let (sil, field) = (sil / n as f64, field / n as f64);
    let ratio = field / sil;
    check(
        ratio >= 2.0,
        format!("ratio {ratio:.3} (field {field:.3} bits / silhouette {sil:.3} bits)"),
    )
}

// 4 ─ Temporal sensitivity.

fn temporal_sensitivity() -> Outcome {
    let spec = CorpusSpec {
        noise_prob: 0.0,
        ..Default::default()
    };
    let (mut pairs, mut wins) = (0, 0);
    for seq in synthetic_corpus(&spec).unwrap() {
        let sil: Vec<Vec<f64>> = seq.frames().iter().map(|f| f.to_f64()).collect();
        let dstf = transform_sequence(&seq, TransformOptions::default()).unwrap();
        let fields: Vec<&[f64]> = dstf.frames().iter().map(|f| f.field()).collect();
        for t in 1..seq.len() {
            let s = frame_difference(&sil, t).unwrap().changed_fraction;
            let d = frame_difference(&fields, t).unwrap().changed_fraction;
            pairs += 1;
            wins += usize::from(d > s);
        }
    }
    let frac = wins as f64 / pairs as f64;
    check(frac >= 0.95, format!("{wins}/{pairs} pairs ({:.1}%)", 100.0 * frac))
}

// 5 ─ Gradient integrity through the command line.

fn gradient_integrity() -> Outcome {
    let t = Instant::now();
    let out = bin()
        .args(["gradcheck", "--ops", "all", "--trials", "20"])
        .output()
        .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let worst = stdout
        .lines()
        .find_map(|l| l.strip_prefix("max_rel_error="))
        .unwrap_or("?")
        .to_string();
    let rows = stdout
        .lines()
        .filter(|l| l.starts_with("primitive ") || l.starts_with("op "))
        .count();
    let ops = stdout.lines().filter(|l| l.starts_with("op ")).count();
    check(
        out.status.success() && ops == NUM_OPS && secs < 120.0,
        format!(
            "exit {:?}, {rows} checks ({ops} ops), worst {worst}, {secs:.1} s",
            out.status.code()
        ),
    )
}

// 6 ─ GeM limits.

fn gem_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shape = [2, 3, 8, 2, 2];
    let n: usize = shape.iter().product();
    let x = Tensor::new(&shape, (0..n).map(|_| rng.random_range(0.05..2.0)).collect()).unwrap();
    let pooled = |k: f64| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(Tensor::scalar(k));
        let y = gem_pool(&mut g, xv, kv).unwrap();
        g.value(y).data().to_vec()
    };
    let (t, hw) = (shape[2], shape[3] * shape[4]);
    let xs = x.data();
    let along_t = |o: usize| -> Vec<f64> { (0..t).map(|i| xs[((o / hw) * t + i) * hw + o % hw]).collect() };
    let y1 = pooled(1.0);
    let mean_err = y1
        .iter()
        .enumerate()
        .map(|(o, v)| (v - along_t(o).iter().sum::<f64>() / t as f64).abs())
        .fold(0.0, f64::max);
    let band_ok = pooled(64.0).iter().enumerate().all(|(o, &v)| {
        let max = along_t(o).into_iter().fold(f64::MIN, f64::max);
        v >= max * (t as f64).powf(-1.0 / 64.0) - 1e-12 && v <= max + 1e-12
    });
    check(
        mean_err <= 1e-9 && band_ok,
        format!("k=1 max error {mean_err:.2e}; k=64 inside [max·8^(-1/64), max]: {band_ok}"),
    )
}

// 7 ─ Mixed-operation semantics.

fn mixed_op_semantics() -> Outcome {
    let ctx = OpContext::new(8, 4);
    let store = init_store(&cell_params(&CellArchitecture::default(), ctx), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [2, 8, 4, 4, 3];
    let n: usize = shape.iter().product();
    let x = Tensor::new(&shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let edge = 2;
    let mut g = Graph::new();
    let b = store.bind(&mut g, |_| false);
    let xv = g.constant(x);
    let branches: Vec<Vec<f64>> = OpKind::ALL
        .iter()
        .map(|&k| {
            let y = apply_op(&mut g, k, xv, &Scoped::new(&b, edge_prefix(edge, k))).unwrap();
            g.value(y).data().to_vec()
        })
        .collect();
    let mut mixed = |alpha: Vec<f64>| {
        let a = g.constant(Tensor::new(&[NUM_OPS], alpha).unwrap());
        let y = mixed_op(&mut g, xv, a, &b, edge).unwrap();
        g.value(y).data().to_vec()
    };
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let uniform = mixed(vec![0.0; NUM_OPS]);
    let mean: Vec<f64> = (0..n)
        .map(|i| branches.iter().map(|br| br[i]).sum::<f64>() / NUM_OPS as f64)
        .collect();
    let uniform_err = max_diff(&uniform, &mean);
    let mut saturated_err: f64 = 0.0;
    for k in OpKind::ALL {
        let mut alpha = vec![0.0; NUM_OPS];
        alpha[k.index()] = 1000.0;
        saturated_err = saturated_err.max(max_diff(&mixed(alpha), &branches[k.index()]));
    }
    check(
        uniform_err <= 1e-9 && saturated_err <= 1e-9,
        format!("uniform error {uniform_err:.2e}, saturated error {saturated_err:.2e} over all 12 ops"),
    )
}

// 8 ─ Alternation counters.

fn alternation() -> Outcome {
    let spec = CorpusSpec {
        identities: 4,
        frames: 8,
        ..Default::default()
    };
    let data = Dataset::from_sequences(&synthetic_corpus(&spec).unwrap(), TransformOptions::default()).unwrap();
    let (train, val) = split_dataset(&data, 0.5, 3).unwrap();
    let model = ModelConfig {
        channels: vec![4, 8],
        pool_after: vec![0],
        num_classes: 4,
        embed_dim: 8,
        ..Default::default()
    };
    let mut details = Vec::new();
    let mut ok = true;
    for u in [1, 2, 5] {
        let cfg = SearchConfig {
            u,
            p: 2,
            k: 2,
            iterations: 4,
            ..Default::default()
        };
        let s = search(&cfg, &model, &train, &val, &mut |_| Ok(())).unwrap().state;
        ok &= s.w_steps == u * s.alpha_steps
            && s.alpha_steps == cfg.iterations
            && s.train_history.len() == s.w_steps
            && s.val_history.len() == s.alpha_steps;
        details.push(format!("u={u}: {}w/{}α", s.w_steps, s.alpha_steps));
    }
    check(ok, details.join(", "))
}

// 9, 10 ─ End-to-end desk search and determinism.

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn val_losses(dir: &Path) -> Vec<f64> {
    std::fs::read_to_string(dir.join(SEARCH_LOSS_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("alpha,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

fn desk_search(dir: &Path) -> Outcome {
    let out = dir.to_str().unwrap();
    let t = Instant::now();
    run_cli(&["search", "--out", out, "--seed", "7"])?;
    let searched = t.elapsed();
    let retrain = run_cli(&["retrain", "--out", out, "--seed", "7"])?;
    let eval = run_cli(&["eval", "--out", out, "--seed", "7"])?;
    let wall = t.elapsed();

    let v = val_losses(dir);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&v[..100]), mean(&v[v.len() - 100..]));
    let drop = 1.0 - last / first;
    let arch = parse_architecture(&std::fs::read_to_string(dir.join(ARCHITECTURE_FILE)).unwrap())
        .map_err(|e| e.to_string())?;
    let ops = arch.discrete().map(|d| d.map(|k| k.name()).join(","));
    let rank1: f64 = eval
        .lines()
        .find_map(|l| l.strip_prefix("rank1="))
        .ok_or("eval printed no rank1 line")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    let retrain_ok = {
        let get = |k: &str| {
            retrain
                .lines()
                .find_map(|l| l.strip_prefix(k))
                .and_then(|v| v.parse::<f64>().ok())
        };
        matches!((get("loss_initial="), get("loss_final=")), (Some(a), Some(b)) if b < a)
    };
    check(
        v.len() == 2000 && drop >= 0.2 && ops.is_some() && retrain_ok && rank1 >= 0.8 && wall <= Duration::from_secs(600),
        format!(
            "val loss {first:.4} → {last:.4} ({:.1}% drop), arch [{}], rank-1 {rank1:.3} (chance 0.125), search {:.0} s, total {:.0} s",
            100.0 * drop,
            ops.unwrap_or_default(),
            searched.as_secs_f64(),
            wall.as_secs_f64()
        ),
    )
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    run_cli(&["search", "--out", second.to_str().unwrap(), "--seed", "7"])?;
    let same = |f: &str| {
        std::fs::read(first.join(f))
            .ok()
            .is_some_and(|a| std::fs::read(second.join(f)).is_ok_and(|b| a == b))
    };
    let (arch, alpha) = (same(ARCHITECTURE_FILE), same(ALPHA_HISTORY_FILE));
    check(
        arch && alpha,
        format!("architecture export identical: {arch}; α-history identical: {alpha}"),
    )
}

type Criterion<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

#[test]
fn acceptance_criteria() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("EDT exactness", Box::new(edt_exactness)),
        ("field contract", Box::new(field_contract)),
        ("entropy direction", Box::new(entropy_direction)),
        ("temporal sensitivity", Box::new(temporal_sensitivity)),
        ("gradient integrity", Box::new(gradient_integrity)),
        ("GeM limits", Box::new(gem_limits)),
        ("mixed-op semantics", Box::new(mixed_op_semantics)),
        ("alternation counters", Box::new(alternation)),
        ("end-to-end desk search", Box::new(|| desk_search(first.path()))),
        ("determinism", Box::new(|| determinism(first.path(), second.path()))),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {status} {name}: {detail}", i + 1);
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
