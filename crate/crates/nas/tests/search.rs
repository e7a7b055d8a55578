use std::collections::BTreeMap;

use gaitfield_autodiff::gradcheck::{check_gradients, FdConfig};
use gaitfield_autodiff::{checkpoint_bytes, Var};
use gaitfield_core::{synthetic_corpus, CorpusSpec, TransformOptions};
use gaitfield_nas::model::{model_params, ALPHA};
use gaitfield_nas::{
    discretize, evaluate_rank1, forward, init_model, retrain, sample_batch, search, split_dataset, total_loss,
    CellArchitecture, Dataset, ModelConfig, NasError, OpKind, SearchConfig, NUM_EDGES,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(identities: usize) -> Dataset {
    let spec = CorpusSpec {
        identities,
        frames: 6,
        ..Default::default()
    };
    Dataset::from_sequences(&synthetic_corpus(&spec).unwrap(), TransformOptions::default()).unwrap()
}

fn tiny_model(classes: usize) -> ModelConfig {
    ModelConfig {
        channels: vec![2, 4],
        pool_after: vec![0],
        parts: 2,
        embed_dim: 4,
        num_classes: classes,
        ..Default::default()
    }
}

fn tiny_cfg(u: usize, iterations: usize) -> SearchConfig {
    SearchConfig {
        u,
        p: 2,
        k: 2,
        iterations,
        ..Default::default()
    }
}

#[test]
fn alternation_counts_and_history_lengths() {
    let data = corpus(3);
    let (train, val) = split_dataset(&data, 0.5, 1).unwrap();
    let model = tiny_model(3);
    for u in [1, 2, 5] {
        let cfg = tiny_cfg(u, 3);
        let mut seen = (0, 0);
        let out = search(&cfg, &model, &train, &val, &mut |p| {
            match p.phase {
                gaitfield_nas::Phase::Weights => seen.0 += 1,
                _ => seen.1 += 1,
            }
            Ok(())
        })
        .unwrap();
        let s = &out.state;
        assert_eq!((s.w_steps, s.alpha_steps), (u * 3, 3));
        assert_eq!(seen, (u * 3, 3));
        assert_eq!(s.train_history.len(), s.w_steps);
        assert_eq!(s.val_history.len(), s.alpha_steps);
        assert_eq!(s.alpha_history.len(), s.alpha_steps + 1);
        assert!(s.train_history.iter().enumerate().all(|(i, r)| r.step == i + 1));
    }
}

#[test]
fn ten_outer_steps_with_u_two_record_twenty_weight_updates() {
    let data = corpus(3);
    let (train, val) = split_dataset(&data, 0.5, 1).unwrap();
    let out = search(&tiny_cfg(2, 10), &tiny_model(3), &train, &val, &mut |_| Ok(())).unwrap();
    assert_eq!((out.state.w_steps, out.state.alpha_steps), (20, 10));
}

#[test]
fn frozen_alpha_stays_bit_identical() {
    let data = corpus(3);
    let (train, val) = split_dataset(&data, 0.5, 1).unwrap();
    let cfg = SearchConfig {
        lr_alpha: 0.0,
        ..tiny_cfg(1, 4)
    };
    let out = search(&cfg, &tiny_model(3), &train, &val, &mut |_| Ok(())).unwrap();
    let h = &out.state.alpha_history;
    assert!(h
        .iter()
        .all(|row| row.iter().zip(&h[0]).all(|(a, b)| a.to_bits() == b.to_bits())));
    let init = init_model(&tiny_model(3), &CellArchitecture::default(), cfg.seed);
    assert_eq!(out.params.get(ALPHA), init.get(ALPHA));
    assert_ne!(out.params, init, "network weights still train");
}

#[test]
fn search_is_deterministic_under_its_seed() {
    let data = corpus(3);
    let (train, val) = split_dataset(&data, 0.5, 1).unwrap();
    let run = |seed| {
        let cfg = SearchConfig { seed, ..tiny_cfg(1, 3) };
        search(&cfg, &tiny_model(3), &train, &val, &mut |_| Ok(())).unwrap()
    };
    let (a, b, c) = (run(4), run(4), run(5));
    assert_eq!(a.state.alpha_history, b.state.alpha_history);
    assert_eq!(checkpoint_bytes(&a.params), checkpoint_bytes(&b.params));
    assert_ne!(a.state.alpha_history, c.state.alpha_history);
}

/// The α update uses exactly the gradient of the relaxed validation loss at the current
/// weights; a few network weights are probed the same way.
#[test]
fn alpha_and_weight_gradients_match_finite_differences() {
    let data = corpus(2);
    let model = tiny_model(2);
    let params = init_model(&model, &CellArchitecture::default(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = sample_batch(&data, 2, 2, model.clip_len, &mut rng).unwrap();
    let names: Vec<String> = params.names().map(String::from).collect();
    let inputs: Vec<_> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    let loss = |g: &mut gaitfield_autodiff::Graph, vars: &[Var]| {
        let bound: BTreeMap<String, Var> = names.iter().cloned().zip(vars.iter().copied()).collect();
        let sil = g.constant(batch.sil.clone());
        let field = g.constant(batch.field.clone());
        let out = forward(g, sil, field, &CellArchitecture::default(), &model, &bound, true)?;
        Ok(total_loss(g, out.embeddings, out.logits.unwrap(), &batch.labels, 0.2)?.total)
    };
    let probe = |probed: &[&str]| {
        let frozen: Vec<usize> = (0..names.len())
            .filter(|&i| !probed.contains(&names[i].as_str()))
            .collect();
        // the full network has max-pool and activation kinks; a step of 1e-5 straddles one
        let cfg = FdConfig {
            eps: 1e-6,
            max_coords: 60,
            ..FdConfig::default()
        };
        check_gradients(
            |g, v| {
                loss(g, v).map_err(|e: NasError| gaitfield_autodiff::TensorError::InvalidArgument {
                    op: "loss",
                    msg: e.to_string(),
                })
            },
            &inputs,
            &frozen,
            cfg,
        )
        .unwrap()
    };
    let a = probe(&[ALPHA]);
    assert!(a.max_rel_error < 1e-4, "α: {a:?}");
    assert_eq!(a.coords_checked, 60);
    let w = probe(&[
        "extractor.conv1.bias",
        "cell.e4.SpatialAttention.conv.weight",
        "gem.k",
        "head.part1.weight",
    ]);
    assert!(w.max_rel_error < 1e-4, "w: {w:?}");
}

#[test]
fn retrain_without_iterations_returns_the_initialization() {
    let data = corpus(3);
    let arch = CellArchitecture::fixed([
        OpKind::AvgPool3,
        OpKind::SkipConnect,
        OpKind::ChannelAttention,
        OpKind::Zero,
        OpKind::MaxPool3,
    ]);
    let cfg = tiny_cfg(1, 1);
    let out = retrain(&arch, &cfg, &tiny_model(3), &data, 0, &mut |_| Ok(())).unwrap();
    assert_eq!(out.params, init_model(&tiny_model(3), &arch, cfg.seed));
    assert!(out.history.is_empty());
}

#[test]
fn retrain_is_deterministic_and_fresh() {
    let data = corpus(3);
    let arch = CellArchitecture::fixed([OpKind::DepthwiseSepConv3; NUM_EDGES]);
    let cfg = tiny_cfg(1, 1);
    let run = || retrain(&arch, &cfg, &tiny_model(3), &data, 4, &mut |_| Ok(())).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(checkpoint_bytes(&a.params), checkpoint_bytes(&b.params));
    assert_eq!(a.history.len(), 4);
    assert!(a.params.get(ALPHA).is_none(), "discrete networks carry no α");
    assert!(retrain(
        &CellArchitecture::default(),
        &cfg,
        &tiny_model(3),
        &data,
        1,
        &mut |_| Ok(())
    )
    .is_err());
}

#[test]
fn non_finite_loss_aborts_with_the_last_good_weights() {
    let data = corpus(3);
    let (train, val) = split_dataset(&data, 0.5, 1).unwrap();
    let cfg = SearchConfig {
        lr_w: 1e300,
        ..tiny_cfg(1, 5)
    };
    match search(&cfg, &tiny_model(3), &train, &val, &mut |_| Ok(())) {
        Err(NasError::NonFiniteLoss { step, last_good, .. }) => {
            assert!(step >= 1);
            let expected = model_params(&tiny_model(3), &CellArchitecture::default());
            assert_eq!(last_good.len(), expected.len());
        }
        other => panic!("expected a non-finite loss, got {:?}", other.map(|o| o.state.w_steps)),
    }
}

#[test]
fn self_matching_gives_perfect_rank1() {
    let data = corpus(3);
    let arch = CellArchitecture::fixed([OpKind::TemporalAttention; NUM_EDGES]);
    let params = init_model(&tiny_model(3), &arch, 2);
    assert_eq!(
        evaluate_rank1(&params, &arch, &tiny_model(3), &data, &data).unwrap(),
        1.0
    );
    let empty = data.subset(&[]);
    assert!(evaluate_rank1(&params, &arch, &tiny_model(3), &empty, &data).is_err());
}

#[test]
fn discretization_is_idempotent_and_follows_softmax() {
    let alpha: Vec<f64> = (0..60).map(|i| ((i * 7919) % 61) as f64 / 10.0 - 3.0).collect();
    let arch = CellArchitecture::from_alpha(&alpha).unwrap();
    let d = discretize(&arch);
    assert_eq!(discretize(&d), d);
    for (e, op) in d.discrete().unwrap().iter().enumerate() {
        let w = arch.edge_weights(e);
        let best = (0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b });
        assert_eq!(op.index(), best);
    }
}

#[test]
fn one_extractor_serves_both_descriptors() {
    let names: Vec<String> = model_params(&ModelConfig::default(), &CellArchitecture::default())
        .into_iter()
        .map(|s| s.name)
        .collect();
    let extractor: Vec<&String> = names.iter().filter(|n| n.starts_with("extractor.")).collect();
    assert_eq!(extractor.len(), 2 * ModelConfig::default().channels.len());
    assert!(names
        .iter()
        .all(|n| !n.contains("sil") && !n.contains("dstf") && !n.contains("field")));
}
