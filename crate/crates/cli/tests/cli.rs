use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaitfield_core::io::{encode_pgm, read_dstf_file, read_manifest};
use gaitfield_nas::run::{parse_architecture, RunConfig};

const TINY: &str = r#"
retrain_iterations = 2
checkpoint_every = 1

[search]
iterations = 3
p = 2
k = 2

[model]
channels = [2, 4]
pool_after = [0]
parts = 2
embed_dim = 4
num_classes = 3

[data]
identities = 3
frames = 6
probes_per_identity = 1
"#;

fn gaitfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitfield"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(String::from))
        .unwrap_or_else(|| panic!("no `{key}=` line in {}", stdout(o)))
}

fn synthesize(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("corpus");
    let mut args = vec!["synthesize", "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = gaitfield(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn transform_writes_one_field_per_sequence_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthesize(dir.path(), &["--identities", "2", "--sequences", "2", "--frames", "4"]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = gaitfield(&["transform", "--in", p(&corpus), "--out", p(out), "--preview"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(value(&o, "sequences"), "4");
    }
    assert_eq!(files_under(&a), files_under(&b));
    let fields: Vec<_> = files_under(&a)
        .into_iter()
        .filter(|(f, _)| f.extension().is_some_and(|e| e == "dstf"))
        .collect();
    assert_eq!(fields.len(), 4);
    let seq = read_dstf_file(&a.join("id00/s0q00.dstf")).unwrap();
    assert_eq!(seq.len(), 4);
    assert!(a.join("id00/s0q00/000003.pgm").is_file());
    assert!(a.join("transform.manifest.toml").is_file());
    assert_eq!(read_manifest(&a.join("manifest.csv")).unwrap().len(), 4);
}

#[test]
fn transform_accepts_a_single_frame_directory_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthesize(dir.path(), &["--identities", "1", "--sequences", "2", "--frames", "3"]);
    let (one, many) = (dir.path().join("one"), dir.path().join("many"));
    let o = gaitfield(&["transform", "--in", p(&corpus.join("id00/s0q01")), "--out", p(&one)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(one.join("s0q01.dstf").is_file());
    let o = gaitfield(&[
        "--threads",
        "2",
        "transform",
        "--in",
        p(&corpus.join("manifest.csv")),
        "--out",
        p(&many),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(one.join("s0q01.dstf")).unwrap(),
        fs::read(many.join("id00/s0q01.dstf")).unwrap()
    );
}

fn blank_frame_sequence(dir: &Path) -> PathBuf {
    let seq = dir.join("blanky");
    fs::create_dir_all(&seq).unwrap();
    let (w, h) = (6usize, 6usize);
    let disc: Vec<u8> = (0..w * h)
        .map(|i| {
            if (i % w).abs_diff(3) + (i / w).abs_diff(3) <= 2 {
                255
            } else {
                0
            }
        })
        .collect();
    fs::write(seq.join("000000.pgm"), encode_pgm(w, h, &disc)).unwrap();
    fs::write(seq.join("000001.pgm"), encode_pgm(w, h, &vec![0; w * h])).unwrap();
    seq
}

#[test]
fn degenerate_policy_controls_blank_frames() {
    let dir = tempfile::tempdir().unwrap();
    let seq = blank_frame_sequence(dir.path());
    let o = gaitfield(&[
        "transform",
        "--in",
        p(&seq),
        "--out",
        p(&dir.path().join("e")),
        "--degenerate",
        "error",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("000001.pgm"), "{}", stderr(&o));

    let skip = dir.path().join("s");
    let o = gaitfield(&["transform", "--in", p(&seq), "--out", p(&skip), "--degenerate", "skip"]);
    assert!(o.status.success());
    assert_eq!(read_dstf_file(&skip.join("blanky.dstf")).unwrap().len(), 1);
    // one field frame for two silhouette frames
    let o = gaitfield(&[
        "metrics",
        "--sil",
        p(&seq),
        "--dstf",
        p(&skip),
        "--out",
        p(&dir.path().join("m.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let zero = dir.path().join("z");
    let o = gaitfield(&[
        "transform",
        "--in",
        p(&seq),
        "--out",
        p(&zero),
        "--degenerate",
        "zero",
        "--norm",
        "per-seq",
    ]);
    assert!(o.status.success());
    let f = read_dstf_file(&zero.join("blanky.dstf")).unwrap();
    assert!(f.frames()[1].field().iter().all(|&v| v == 0.0));
}

#[test]
fn metrics_report_entropies_ratio_and_geni() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthesize(dir.path(), &[]);
    let dstf = dir.path().join("dstf");
    assert!(gaitfield(&["transform", "--in", p(&corpus), "--out", p(&dstf)])
        .status
        .success());
    let csv = dir.path().join("m/metrics.csv");
    let o = gaitfield(&[
        "metrics",
        "--sil",
        p(&corpus),
        "--dstf",
        p(&dstf),
        "--bins",
        "256",
        "--out",
        p(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratio: f64 = value(&o, "ratio").parse().unwrap();
    assert!(ratio >= 2.0, "ratio {ratio}");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 32 * 16 + 2);
    assert!(text.lines().last().unwrap().starts_with("summary,ratio,,"));
    assert!(dir.path().join("m/geni/id03/s0q02.pgm").is_file());
    assert!(dir.path().join("m/metrics.manifest.toml").is_file());

    let csv2 = dir.path().join("m2/metrics.csv");
    let o = gaitfield(&[
        "metrics",
        "--sil",
        p(&corpus),
        "--dstf",
        p(&dstf),
        "--bins",
        "2",
        "--out",
        p(&csv2),
    ]);
    assert!(o.status.success());
    for line in fs::read_to_string(&csv2)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("summary"))
    {
        let sil: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&sil), "{line}");
    }
}

#[test]
fn metrics_needs_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthesize(dir.path(), &["--identities", "1", "--sequences", "2", "--frames", "3"]);
    let out = p(&dir.path().join("m.csv")).to_string();
    let o = gaitfield(&[
        "metrics",
        "--sil",
        p(&corpus),
        "--dstf",
        p(&dir.path().join("missing")),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = gaitfield(&[
        "metrics",
        "--sil",
        p(&dir.path().join("nothing")),
        "--dstf",
        p(&corpus),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = gaitfield(&["metrics", "--sil", p(&corpus), "--dstf", p(&corpus), "--out", &out]);
    assert_eq!(o.status.code(), Some(2), "field files are missing: {}", stderr(&o));
}

#[test]
fn help_config_prints_a_parseable_schema() {
    let o = gaitfield(&["--help-config"]);
    assert!(o.status.success());
    assert_eq!(RunConfig::from_toml(&stdout(&o)).unwrap(), RunConfig::default());
    assert!(stdout(&o).contains("search.lr_alpha"));
}

#[test]
fn unknown_config_keys_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[search]\nwarmup = 3\n").unwrap();
    let o = gaitfield(&["search", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warmup"), "{}", stderr(&o));
    assert!(gaitfield(&["frobnicate"]).status.code() == Some(2));
    assert_eq!(gaitfield(&[]).status.code(), Some(2));
}

#[test]
fn search_retrain_eval_produce_a_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let o = gaitfield(&["search", "--config", p(&cfg), "--out", p(&run), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&o, "w_steps"), "3");
    assert_eq!(value(&o, "architecture").split(',').count(), 5);

    let alpha = fs::read_to_string(run.join("alpha_history.csv")).unwrap();
    assert_eq!(alpha.lines().count(), 1 + 4);
    assert!(alpha.lines().all(|l| l.split(',').count() == 61));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().filter(|l| l.starts_with("w,")).count(), 3);
    assert_eq!(loss.lines().filter(|l| l.starts_with("alpha,")).count(), 3);
    let arch = parse_architecture(&fs::read_to_string(run.join("architecture.toml")).unwrap()).unwrap();
    assert!(arch.is_discrete());
    let snapshot = RunConfig::from_toml(&fs::read_to_string(run.join("config.toml")).unwrap()).unwrap();
    assert_eq!(snapshot.search.seed, 3);
    assert!(run.join("checkpoints/search_000003.ckpt").is_file());
    let manifest = fs::read_to_string(run.join("search.manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3") && manifest.contains("sha256"));

    let o = gaitfield(&["retrain", "--config", p(&cfg), "--out", p(&run), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&o, "iterations"), "2");
    assert!(run.join("weights.ckpt").is_file() && run.join("checkpoints/retrain_000002.ckpt").is_file());

    let o = gaitfield(&["eval", "--config", p(&cfg), "--out", p(&run), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rank1: f64 = value(&o, "rank1").parse().unwrap();
    assert!((0.0..=1.0).contains(&rank1));
    assert_eq!(value(&o, "probes"), "3");

    // gallery = probe
    let corpus = synthesize(dir.path(), &["--identities", "3", "--frames", "6"]);
    let m = corpus.join("manifest.csv");
    let o = gaitfield(&[
        "eval",
        "--config",
        p(&cfg),
        "--out",
        p(&run),
        "--gallery",
        p(&m),
        "--probe",
        p(&m),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&o, "rank1"), "1");
}

#[test]
fn repeated_seed_reproduces_the_architecture_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("r{i}"))).collect();
    for r in &runs {
        assert!(
            gaitfield(&["search", "--config", p(&cfg), "--out", p(r), "--seed", "11"])
                .status
                .success()
        );
    }
    for f in [
        "architecture.toml",
        "alpha_history.csv",
        "loss.csv",
        "search.manifest.toml",
    ] {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn non_finite_loss_exits_four_and_keeps_the_last_good_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wild.toml");
    fs::write(&cfg, TINY.replace("[search]\n", "[search]\nlr_w = 1e300\n")).unwrap();
    let run = dir.path().join("run");
    let o = gaitfield(&["search", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
    assert!(run.join("checkpoints/last_good.ckpt").is_file());
    assert!(run.join("loss.csv").is_file());
}

#[test]
fn retrain_and_eval_need_an_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let run = p(&dir.path().join("empty")).to_string();
    assert_eq!(
        gaitfield(&["retrain", "--config", p(&cfg), "--out", &run])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gaitfield(&["eval", "--config", p(&cfg), "--out", &run]).status.code(),
        Some(2)
    );
}

#[test]
fn gradcheck_exit_codes() {
    let o = gaitfield(&["gradcheck", "--ops", "Zero", "--trials", "3"]);
    assert!(o.status.success());
    assert_eq!(value(&o, "failed"), "0");
    let o = gaitfield(&["gradcheck", "--ops", "softmax", "--trials", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = gaitfield(&["gradcheck", "--ops", "MaxPool3", "--trials", "2", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("MaxPool3"));
    assert_eq!(gaitfield(&["gradcheck", "--ops", "Conv7"]).status.code(), Some(2));
}
