use mwpt::autodiff::{Adam, AdamConfig, Parameterized};
use mwpt::blocks::{gdfn_forward, mwpa_forward, msp_forward, wcp_forward, GdfnWeights, MixerToggles, WcpWeights};
use mwpt::data::{gen_synthetic, read_features, write_features, FeatureSequenceFile, SyntheticSpec};
use mwpt::fusion::{count_macs, count_params, late_fuse, ModalityPosterior};
use mwpt::layers::{zero_out, Init};
use mwpt::model::{mwpt_stage, read_checkpoint, write_checkpoint, Ablation, GestFormerModel, ModelConfig};
use mwpt::tensor::{self, Tensor};
use mwpt::wavelet::{dwt2, idwt2};
use mwpt::autodiff::Tape;
use proptest::prelude::*;

fn tensor_of(dims: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = dims.iter().product();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| Tensor::from_vec(dims.clone(), v).unwrap())
}

fn token_map() -> impl Strategy<Value = Tensor> {
    (2usize..9, 2usize..9).prop_flat_map(|(m, k)| tensor_of(vec![m, k]))
}

fn ablation() -> impl Strategy<Value = Ablation> {
    (1usize..=8).prop_map(|i| Ablation::baseline(i).unwrap())
}

fn small_config() -> impl Strategy<Value = ModelConfig> {
    (2usize..7, 1usize..6, 2usize..7, 1usize..3, 2usize..5, 1usize..3, ablation()).prop_map(
        |(frames, input_dim, embed_dim, stages, classes, expansion, ablation)| ModelConfig {
            frames,
            input_dim,
            embed_dim,
            stages,
            classes,
            expansion,
            ablation,
        },
    )
}

fn posterior_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 2usize..10).prop_flat_map(|(mods, n)| {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), mods).prop_map(|raw| {
            raw.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
    })
}

fn posts(set: &[Vec<f64>]) -> Vec<ModalityPosterior> {
    set.iter()
        .enumerate()
        .map(|(i, p)| ModalityPosterior {
            modality: format!("m{i}"),
            probs: Tensor::from_vec([p.len()], p.clone()).unwrap(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wavelet_round_trip_and_linearity(
        (x, y) in (1usize..3, 2usize..12, 2usize..12)
            .prop_flat_map(|(c, h, w)| (tensor_of(vec![c, h, w]), tensor_of(vec![c, h, w]))),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let s = dwt2(&x).unwrap();
        prop_assert!(idwt2(&s).unwrap().max_abs_diff(&x) <= 1e-12);

        let mix = tensor::add(&tensor::scale(&x, alpha), &tensor::scale(&y, beta)).unwrap();
        let (sm, sx, sy) = (dwt2(&mix).unwrap(), s, dwt2(&y).unwrap());
        for (m, (a, b)) in [&sm.ll, &sm.lh, &sm.hl, &sm.hh]
            .into_iter()
            .zip([&sx.ll, &sx.lh, &sx.hl, &sx.hh].into_iter().zip([&sy.ll, &sy.lh, &sy.hl, &sy.hh]))
        {
            let lin = tensor::add(&tensor::scale(a, alpha), &tensor::scale(b, beta)).unwrap();
            prop_assert!(m.max_abs_diff(&lin) <= 1e-12);
        }
    }

    #[test]
    fn wavelet_energy_on_even_maps(x in (1usize..3, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| tensor_of(vec![c, 2 * h, 2 * w]))) {
        let s = dwt2(&x).unwrap();
        prop_assert!((s.energy() - x.sum_of_squares()).abs() <= 1e-9);
    }

    #[test]
    fn blocks_preserve_shape(x in token_map(), seed in 0u64..1000) {
        let mut init = Init::new(seed);
        let k = x.dims()[1];
        let wcp = WcpWeights::new("wcp", &mut init);
        let gdfn = GdfnWeights::new("gdfn", k, 2, &mut init);
        for out in [
            wcp_forward(&x, &wcp).unwrap(),
            msp_forward(&x).unwrap(),
            mwpa_forward(&x, Some(&wcp), MixerToggles::ALL).unwrap(),
            gdfn_forward(&x, &gdfn).unwrap(),
        ] {
            prop_assert_eq!(out.dims(), x.dims());
        }
    }

    #[test]
    fn block_identities(x in token_map(), seed in 0u64..1000) {
        let id = WcpWeights::identity("wcp");
        prop_assert!(wcp_forward(&x, &id).unwrap().max_abs_diff(&x) <= 1e-12);

        let mut gdfn = GdfnWeights::new("gdfn", x.dims()[1], 2, &mut Init::new(seed));
        zero_out(&mut gdfn.project);
        prop_assert_eq!(gdfn_forward(&x, &gdfn).unwrap(), x.clone());

        let plain = mwpa_forward(&x, None, MixerToggles { wcp: false, msp: false }).unwrap();
        let (m, k) = (x.dims()[0], x.dims()[1]);
        let pooled = tensor::avg_pool2d(&x.reshape([1, m, k]).unwrap(), 3).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&plain), bits(&pooled));
    }

    #[test]
    fn fusion_rescale_and_permutation(set in posterior_set(), factor in 0.01f64..100.0, rot in 0usize..5) {
        let base = late_fuse(&posts(&set)).unwrap();
        let scaled: Vec<Vec<f64>> = set.iter().map(|p| p.iter().map(|v| v * factor).collect()).collect();
        prop_assert_eq!(late_fuse(&posts(&scaled)).unwrap(), base);
        let mut rotated = set.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        prop_assert_eq!(late_fuse(&posts(&rotated)).unwrap(), base);
    }

    #[test]
    fn checkpoint_round_trip(cfg in small_config(), seed in any::<u64>()) {
        let model = GestFormerModel::new(cfg, seed).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn feature_file_round_trip(
        x in (1usize..6, 1usize..6).prop_flat_map(|(m, d)| tensor_of(vec![m, d])),
        label in prop::option::of(0usize..50),
        name in "[a-z]{0,12}",
    ) {
        let f = FeatureSequenceFile { modality: name, label, features: x };
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        let back = read_features(&buf[..]).unwrap();
        let mut again = Vec::new();
        write_features(&mut again, &back).unwrap();
        prop_assert_eq!(buf, again);
        prop_assert_eq!(back, f);
    }

    #[test]
    fn param_count_matches_scalars_an_optimizer_step_moves(cfg in small_config(), seed in 0u64..100) {
        let mut model = GestFormerModel::new(cfg, seed).unwrap();
        let before = model.clone();
        for p in model.params_mut() {
            let n = p.value.numel();
            p.value.accumulate_grad(&vec![1.0; n]).unwrap();
        }
        Adam::new(AdamConfig::default()).step(&mut model.params_mut()).unwrap();
        let moved: usize = model
            .params()
            .iter()
            .zip(before.params())
            .map(|(a, b)| a.value.data().iter().zip(b.value.data()).filter(|(x, y)| x != y).count())
            .sum();
        prop_assert_eq!(count_params(&model).total(), moved as u64);
    }

    #[test]
    fn token_dependent_macs_double_with_m(cfg in small_config()) {
        let doubled = ModelConfig { frames: 2 * cfg.frames, ..cfg.clone() };
        let (a, b) = (count_macs(&cfg), count_macs(&doubled));
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(&x.layer, &y.layer);
            if x.module == "head" {
                prop_assert_eq!(y.count, x.count);
            } else if x.layer.starts_with("wcp") && cfg.frames % 2 == 1 {
                // odd m pads one row before the transform
                prop_assert!(y.count < 2 * x.count);
            } else {
                prop_assert_eq!(y.count, 2 * x.count);
            }
        }
    }
}

#[test]
fn posteriors_are_deterministic() {
    let cfg = ModelConfig::toy();
    let x = Tensor::from_vec([4, 6], (0..24).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let a = GestFormerModel::new(cfg.clone(), 77).unwrap().forward(&x).unwrap();
    let b = GestFormerModel::new(cfg, 77).unwrap().forward(&x).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn stage_stack_splits_compose() {
    let cfg = ModelConfig {
        stages: 6,
        ..ModelConfig::toy()
    };
    let model = GestFormerModel::new(cfg, 3).unwrap();
    let x = Tensor::from_vec([4, 8], (0..32).map(|i| (i as f64 * 0.61).cos()).collect()).unwrap();

    let run = |ranges: &[std::ops::Range<usize>]| {
        let mut tape = Tape::new();
        let mut v = tape.leaf(x.clone());
        for r in ranges {
            v = model.record_stages(&mut tape, v, r.clone()).unwrap();
        }
        tape.value(v).clone()
    };
    let whole = run(&[0..6]);
    assert_eq!(whole, run(&[0..2, 2..6]));
    assert_eq!(whole, run(&[0..3, 3..4, 4..6]));

    let mut seq = x.clone();
    for s in &model.stages {
        seq = mwpt_stage(&seq, s, model.config.ablation).unwrap();
    }
    assert_eq!(whole, seq);
}

#[test]
fn every_baseline_keeps_shapes() {
    for bl in 1..=8 {
        let cfg = ModelConfig {
            ablation: Ablation::baseline(bl).unwrap(),
            ..ModelConfig::toy()
        };
        let model = GestFormerModel::new(cfg, bl as u64).unwrap();
        let p = model.forward(&Tensor::full([4, 6], 0.3).unwrap()).unwrap();
        assert_eq!(p.dims(), [3]);
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generator_balances_classes() {
    for (classes, train) in [(3, 300), (4, 10), (5, 7)] {
        let ds = gen_synthetic(&SyntheticSpec {
            classes,
            train_samples: train,
            test_samples: 11,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for split in [&ds.train, &ds.test] {
            let counts: Vec<usize> = (0..classes)
                .map(|c| split.iter().filter(|s| s.label == c).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }
}

#[test]
fn generator_is_deterministic() {
    let spec = SyntheticSpec {
        modalities: 2,
        train_samples: 20,
        test_samples: 5,
        seed: 7,
        ..SyntheticSpec::default()
    };
    assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
    let other = SyntheticSpec { seed: 8, ..spec.clone() };
    assert_ne!(gen_synthetic(&spec).unwrap(), gen_synthetic(&other).unwrap());
}

/// Nearest class mean of the training views, by squared distance.
fn nearest_prototype(protos: &[Tensor], x: &Tensor) -> usize {
    let d: Vec<f64> = protos
        .iter()
        .map(|p| tensor::sub(p, x).unwrap().sum_of_squares())
        .collect();
    mwpt::model::argmax(&d.iter().map(|v| -v).collect::<Vec<_>>())
}

#[test]
fn noiseless_data_is_separable_and_fusion_never_hurts() {
    let spec = SyntheticSpec {
        classes: 3,
        modalities: 3,
        noise: 0.0,
        train_samples: 30,
        test_samples: 12,
        ..SyntheticSpec::default()
    };
    let ds = gen_synthetic(&spec).unwrap();
    let mut single_acc = Vec::new();
    let mut fused_correct = 0;
    let protos: Vec<Vec<Tensor>> = (0..spec.modalities)
        .map(|m| {
            (0..spec.classes)
                .map(|c| ds.train.iter().find(|s| s.label == c).unwrap().views[m].clone())
                .collect()
        })
        .collect();
    for m in 0..spec.modalities {
        let correct = ds
            .test
            .iter()
            .filter(|s| nearest_prototype(&protos[m], &s.views[m]) == s.label)
            .count();
        single_acc.push(correct as f64 / ds.test.len() as f64);
    }
    for s in &ds.test {
        let one_hot: Vec<Vec<f64>> = (0..spec.modalities)
            .map(|m| {
                let mut p = vec![0.0; spec.classes];
                p[nearest_prototype(&protos[m], &s.views[m])] = 1.0;
                p
            })
            .collect();
        fused_correct += (late_fuse(&posts(&one_hot)).unwrap() == s.label) as usize;
    }
    assert!(single_acc.iter().all(|a| *a == 1.0), "{single_acc:?}");
    let fused = fused_correct as f64 / ds.test.len() as f64;
    assert!(fused >= single_acc.iter().cloned().fold(1.0, f64::min));
}
