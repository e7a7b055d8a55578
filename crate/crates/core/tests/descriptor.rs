use gaitfield_core::metrics::{frame_difference, geni, EntropyReport};
use gaitfield_core::synth::identity_params;
use gaitfield_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn random_frame(rng: &mut ChaCha8Rng) -> SilhouetteFrame {
    let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
    let density = rng.random_range(0.02..0.98);
    if rng.random_bool(0.5) {
        let mask = (0..w * h).map(|_| u8::from(rng.random_bool(density))).collect();
        SilhouetteFrame::new(w, h, mask).unwrap()
    } else {
        // a few filled discs: large interiors exercise long-range distances
        let discs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(0.5..12.0),
                )
            })
            .collect();
        SilhouetteFrame::from_fn(w, h, |x, y| {
            discs
                .iter()
                .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
        })
        .unwrap()
    }
}

#[test]
fn edt_matches_brute_force_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 200 {
        let map = classify_pixels(&random_frame(&mut rng));
        if !map.has_boundary() {
            assert!(edt_squared(&map).is_err());
            continue;
        }
        assert_eq!(edt_squared(&map).unwrap(), brute_force_edt(&map));
        checked += 1;
    }
}

#[test]
fn field_sign_and_range_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let frame = random_frame(&mut rng);
        let map = classify_pixels(&frame);
        if !map.has_boundary() {
            continue;
        }
        let field = sign_and_normalize(&bi_dt(&frame).unwrap(), &map).unwrap();
        for (v, c) in field.field().iter().zip(map.classes()) {
            assert!((-1.0..=1.0).contains(v));
            match c {
                PixelClass::Boundary => assert_eq!(*v, 0.0),
                PixelClass::Foreground => assert!(*v > 0.0),
                PixelClass::Background => assert!(*v < 0.0),
            }
        }
        let max = field.field().iter().cloned().fold(f64::MIN, f64::max);
        let min = field.field().iter().cloned().fold(f64::MAX, f64::min);
        if map.count(PixelClass::Foreground) > 0 {
            assert_eq!(max, 1.0);
        }
        if map.count(PixelClass::Background) > 0 {
            assert_eq!(min, -1.0);
        }
    }
}

#[test]
fn translation_shifts_the_distance_field_exactly() {
    let shape = |ox: usize, oy: usize| {
        SilhouetteFrame::from_fn(40, 40, move |x, y| {
            let (x, y) = (x as f64 - ox as f64, y as f64 - oy as f64);
            (x - 6.0).powi(2) / 16.0 + (y - 5.0).powi(2) / 9.0 <= 1.0
                || ((4.0..=8.0).contains(&x) && (7.0..=12.0).contains(&y))
        })
        .unwrap()
    };
    let (dx, dy) = (13, 9);
    let (a, b) = (shape(10, 10), shape(10 + dx, 10 + dy));
    let (ma, mb) = (classify_pixels(&a), classify_pixels(&b));
    let (da, db) = (bi_dt(&a).unwrap(), bi_dt(&b).unwrap());
    let (fa, fb) = (
        sign_and_normalize(&da, &ma).unwrap(),
        sign_and_normalize(&db, &mb).unwrap(),
    );
    for y in 0..40 - dy {
        for x in 0..40 - dx {
            let (i, j) = (y * 40 + x, (y + dy) * 40 + x + dx);
            assert_eq!(da.squared()[i], db.squared()[j]);
            assert_eq!(ma.classes()[i], mb.classes()[j]);
            assert_eq!(fa.field()[i].signum(), fb.field()[j].signum());
            if ma.classes()[i] != PixelClass::Background {
                assert_eq!(fa.field()[i], fb.field()[j]);
            }
        }
    }
}

fn transform(seq: &SilhouetteSequence) -> DstfSequence {
    transform_sequence(seq, TransformOptions::default()).unwrap()
}

#[test]
fn field_changes_at_more_pixels_than_the_silhouette() {
    let spec = CorpusSpec {
        noise_prob: 0.0,
        ..Default::default()
    };
    for seq in synthetic_corpus(&spec).unwrap() {
        let sil: Vec<Vec<f64>> = seq.frames().iter().map(|f| f.to_f64()).collect();
        let dstf = transform(&seq);
        let fields: Vec<&[f64]> = dstf.frames().iter().map(|f| f.field()).collect();
        let (mut s_sum, mut d_sum) = (0.0, 0.0);
        for t in 1..seq.len() {
            let s = frame_difference(&sil, t).unwrap().changed_fraction;
            let d = frame_difference(&fields, t).unwrap().changed_fraction;
            if s > 0.0 {
                assert!(d > s, "{} t={t}: field {d} vs silhouette {s}", seq.name());
            } else {
                assert_eq!(d, 0.0);
            }
            s_sum += s;
            d_sum += d;
        }
        assert!(s_sum > 0.0 && d_sum > s_sum);
    }
}

#[test]
fn field_entropy_exceeds_silhouette_entropy_on_the_corpus() {
    for seq in synthetic_corpus(&CorpusSpec::default()).unwrap() {
        let ratio = entropy_ratio(&seq, &transform(&seq), 256).unwrap();
        assert!(ratio > 1.0, "{}: ratio {ratio}", seq.name());
        let sil = EntropyReport::of_silhouettes(&seq, 256).unwrap();
        assert!(sil.per_frame_entropy.iter().all(|&e| e <= 1.0));
    }
}

#[test]
fn limb_swing_region_is_more_uncertain_than_the_torso() {
    let spec = CorpusSpec::default();
    let corpus = synthetic_corpus(&spec).unwrap();
    for (i, p) in identity_params(&spec).iter().enumerate() {
        let (a, b) = p.torso_axes;
        let cx = (spec.width as f64 - 1.0) / 2.0;
        let cy = 1.0 + b;
        let hip = cy + 0.6 * b;
        let leg = spec.height as f64 - 2.0 - hip;
        let g = geni(&corpus[i * spec.sequences_per_identity]);
        let torso = g
            .region_mean(|x, y| ((x as f64 - cx) / (0.7 * a)).powi(2) + ((y as f64 - cy) / (0.7 * b)).powi(2) <= 1.0)
            .unwrap();
        let limb = g
            .region_mean(|x, y| y as f64 >= hip + 0.5 * leg && (x as f64 - cx).abs() <= p.limb_amplitude + 1.0)
            .unwrap();
        assert!(limb > torso, "identity {i}: limb {limb} vs torso {torso}");
    }
}

#[test]
fn per_sequence_normalization_stays_in_range() {
    let seq = &synthetic_corpus(&CorpusSpec::default()).unwrap()[3];
    let opts = TransformOptions {
        normalization: Normalization::PerSequence,
        ..Default::default()
    };
    let out = transform_sequence(seq, opts).unwrap();
    let all: Vec<f64> = out.frames().iter().flat_map(|f| f.field().to_vec()).collect();
    assert!(all.iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(all.iter().cloned().fold(f64::MIN, f64::max), 1.0);
    assert_eq!(all.iter().cloned().fold(f64::MAX, f64::min), -1.0);
}
