//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mwpt::autodiff::{AdamConfig, LrSchedule};
use mwpt::blocks::{gdfn_forward, mwpa_forward, wcp_forward, GdfnWeights, MixerToggles, WcpWeights};
use mwpt::data::{gen_synthetic, Dataset, SyntheticSpec};
use mwpt::fusion::{count_macs, count_params, late_fuse, ModalityPosterior};
use mwpt::layers::{zero_out, Init};
use mwpt::model::{write_checkpoint, Ablation, GestFormerModel, ModelConfig};
use mwpt::tensor::{self, Tensor};
use mwpt::train::{evaluate, train, EpochMetrics, TrainConfig};
use mwpt::verify;
use mwpt::wavelet::{dwt2, idwt2};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    Tensor::from_vec(dims.to_vec(), data).unwrap()
}

fn wavelet_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut odd, mut even) = (0.0f64, 0, 0);
    for i in 0..1000 {
        // alternate parity so both kinds are well represented
        let c = rng.gen_range(1..=3);
        let mut h = rng.gen_range(2..=41);
        let mut w = rng.gen_range(2..=41);
        if i % 2 == 0 {
            h += h % 2;
            w += w % 2;
            h = h.min(40);
            w = w.min(40);
        }
        if h % 2 == 1 || w % 2 == 1 {
            odd += 1;
        } else {
            even += 1;
        }
        let x = random_tensor(&mut rng, &[c, h, w]);
        let back = idwt2(&dwt2(&x).unwrap()).unwrap();
        if back.dims() != x.dims() {
            return outcome(false, format!("shape {:?} came back as {:?}", x.dims(), back.dims()));
        }
        worst = worst.max(back.max_abs_diff(&x));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 10.0 && odd > 0 && even > 0,
        format!("max abs err {worst:.2e} over 1000 tensors ({even} even, {odd} with an odd extent), {secs:.2} s"),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let checks = match verify::full_suite(&ModelConfig::toy(), 7) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("suite errored: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    outcome(
        failed.is_empty() && secs < 120.0,
        format!(
            "{} checks, worst rel err {worst:.2e}, {secs:.2} s{}",
            checks.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failed.join(" "))
            }
        ),
    )
}

fn identity_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut wcp_err, mut gdfn_exact, mut pool_bitwise) = (0.0f64, true, true);
    for seed in 0..200 {
        let (m, k) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let x = random_tensor(&mut rng, &[m, k]);

        if m >= 2 && k >= 2 {
            let id = WcpWeights::identity("wcp");
            wcp_err = wcp_err.max(wcp_forward(&x, &id).unwrap().max_abs_diff(&x));
        }

        let mut gdfn = GdfnWeights::new("gdfn", k, 2, &mut Init::new(seed));
        zero_out(&mut gdfn.project);
        gdfn_exact &= common::bits(gdfn_forward(&x, &gdfn).unwrap().data()) == common::bits(x.data());

        let off = MixerToggles {
            wcp: false,
            msp: false,
        };
        let plain = mwpa_forward(&x, None, off).unwrap();
        let pooled = tensor::avg_pool2d(&x.reshape([1, m, k]).unwrap(), 3).unwrap();
        pool_bitwise &= common::bits(plain.data()) == common::bits(pooled.data());
    }
    outcome(
        wcp_err <= 1e-12 && gdfn_exact && pool_bitwise,
        format!(
            "200 maps: WCP identity err {wcp_err:.2e}, zero-gated GDFN exact: {gdfn_exact}, \
             toggles-off MWPA bitwise 3x3 pool: {pool_bitwise}"
        ),
    )
}

/// Enumerates every class and keeps the first whose summed score is not
/// beaten by any other class.
fn brute_force_fuse(sets: &[Vec<f64>]) -> usize {
    let n = sets[0].len();
    let score = |j: usize| {
        let mut s = 0.0;
        for p in sets {
            s += p[j];
        }
        s
    };
    (0..n)
        .find(|&j| (0..n).all(|o| score(o) <= score(j)))
        .expect("some class attains the maximum")
}

fn fusion_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut agree, mut ties) = (0, 0);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=25);
        let mods = rng.gen_range(1..=5);
        let quantized = trial % 2 == 0;
        let sets: Vec<Vec<f64>> = (0..mods)
            .map(|_| {
                // quantized posteriors are dyadic, so sums are exact and ties common
                let raw: Vec<f64> = (0..n)
                    .map(|_| {
                        if quantized {
                            rng.gen_range(0..4) as f64
                        } else {
                            rng.gen_range(0.0..1.0)
                        }
                    })
                    .collect();
                let raw = if raw.iter().all(|v| *v == 0.0) { vec![1.0; n] } else { raw };
                let z: f64 = raw.iter().sum();
                if quantized {
                    let q = (z as usize).next_power_of_two() as f64;
                    let mut v: Vec<f64> = raw.iter().map(|r| r / q).collect();
                    v[0] += 1.0 - z / q;
                    v
                } else {
                    raw.iter().map(|r| r / z).collect()
                }
            })
            .collect();
        let posts: Vec<ModalityPosterior> = sets
            .iter()
            .enumerate()
            .map(|(i, p)| ModalityPosterior::new(format!("m{i}"), Tensor::from_vec(vec![n], p.clone()).unwrap()).unwrap())
            .collect();
        let want = brute_force_fuse(&sets);
        let scores: Vec<f64> = (0..n).map(|j| sets.iter().map(|p| p[j]).sum()).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ties += (scores.iter().filter(|s| **s == best).count() > 1) as usize;
        agree += (late_fuse(&posts).unwrap() == want) as usize;
    }
    outcome(agree == 1000, format!("{agree}/1000 agree with enumeration, {ties} sets with tied maxima"))
}

fn recipe(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        adam: AdamConfig {
            lr: 1e-4,
            ..AdamConfig::default()
        },
        schedule: LrSchedule::new(1e-4, vec![50, 75], 0.1),
        shuffle_seed: 0,
    }
}

fn toy_k32(classes: usize, ablation: Ablation) -> ModelConfig {
    ModelConfig {
        frames: 40,
        input_dim: 16,
        embed_dim: 32,
        stages: 2,
        classes,
        expansion: 2,
        ablation,
    }
}

fn train_view(ds: &Dataset, modality: usize, ablation: Ablation, epochs: usize) -> (GestFormerModel, Vec<EpochMetrics>) {
    let (tr, te) = (ds.view(&ds.train, modality), ds.view(&ds.test, modality));
    let mut model = GestFormerModel::new(toy_k32(3, ablation), 0).unwrap();
    let log = train(&mut model, &tr, &te, &recipe(epochs), |_| Ok(())).unwrap();
    (model, log)
}

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let ds = gen_synthetic(&SyntheticSpec::default()).unwrap();
    let (_, bl8) = train_view(&ds, 0, Ablation::FULL, 200);
    let (_, bl1) = train_view(&ds, 0, Ablation::baseline(1).unwrap(), 200);
    let secs = start.elapsed().as_secs_f64();
    let reached = bl8.iter().find(|m| m.test_acc >= 0.9).map(|m| m.epoch);
    let (a8, a1) = (bl8.last().unwrap().test_acc, bl1.last().unwrap().test_acc);
    outcome(
        reached.is_some() && a8 >= a1 - 0.02 && secs < 600.0,
        format!(
            "BL8 reaches 90% at epoch {}, final BL8 {:.1}% vs BL1 {:.1}%, {secs:.0} s",
            reached.map_or("never".into(), |e| e.to_string()),
            100.0 * a8,
            100.0 * a1
        ),
    )
}

/// Training budget per modality model in the fusion experiment.
const FUSION_EPOCHS: usize = 20;

fn multimodal_gain() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 0..3 {
        let spec = SyntheticSpec {
            modalities: 3,
            noise: 0.6,
            seed,
            ..SyntheticSpec::default()
        };
        let ds = gen_synthetic(&spec).unwrap();
        let mut evals = Vec::new();
        for m in 0..3 {
            let (model, _) = train_view(&ds, m, Ablation::FULL, FUSION_EPOCHS);
            evals.push(evaluate(&model, &ds.view(&ds.test, m)).unwrap());
        }
        let best = evals.iter().map(|e| e.accuracy).fold(0.0, f64::max);
        let correct = ds
            .test
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let posts: Vec<ModalityPosterior> = evals
                    .iter()
                    .enumerate()
                    .map(|(m, e)| {
                        let p = &e.posteriors[*i];
                        ModalityPosterior::new(ds.modalities[m].clone(), Tensor::from_vec(vec![p.len()], p.clone()).unwrap()).unwrap()
                    })
                    .collect();
                late_fuse(&posts).unwrap() == s.label
            })
            .count();
        let fused = correct as f64 / ds.test.len() as f64;
        pass &= fused >= best - 0.01;
        lines.push(format!("seed {seed}: fused {:.1}% vs best single {:.1}%", 100.0 * fused, 100.0 * best));
    }
    outcome(pass, lines.join("; "))
}

fn cost_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut walk_ok = 0;
    for i in 0..10 {
        let cfg = ModelConfig {
            frames: rng.gen_range(2..=24),
            input_dim: rng.gen_range(1..=12),
            embed_dim: rng.gen_range(2..=16),
            stages: rng.gen_range(1..=4),
            classes: rng.gen_range(2..=6),
            expansion: rng.gen_range(1..=3),
            ablation: Ablation::baseline(rng.gen_range(1..=8)).unwrap(),
        };
        let model = GestFormerModel::new(cfg, i).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model).unwrap();
        let walked: u64 = common::checkpoint_walk(&bytes).iter().map(|(_, n)| n).sum();
        walk_ok += (walked == count_params(&model).total()) as usize;
    }

    let sheet = common::read_spreadsheet("toy_macs.txt");
    let (total, rows) = sheet.split_last().unwrap();
    let toy = toy_k32(3, Ablation::FULL);
    let report = count_macs(&toy);
    let got: Vec<(String, u64)> = report
        .entries
        .iter()
        .map(|e| (format!("{}.{}", e.module, e.layer), e.count))
        .collect();
    let sheet_ok = got == rows && report.total() == total.1;

    let doubled = count_macs(&ModelConfig {
        frames: 2 * toy.frames,
        ..toy.clone()
    });
    let linear = report.entries.iter().zip(&doubled.entries).all(|(a, b)| {
        a.layer == b.layer && if a.module == "head" { b.count == a.count } else { b.count == 2 * a.count }
    });
    outcome(
        walk_ok == 10 && sheet_ok && linear,
        format!(
            "checkpoint walk {walk_ok}/10 exact, spreadsheet match {sheet_ok} (total {}), \
             token-dependent layers double with m: {linear}",
            report.total()
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mwpt").chain(args.iter().copied());
    mwpt::cli::run(argv, &mut out, &mut err)
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let data = p("data");
    let gen = [
        "gen-data", "--classes", "3", "--frames", "12", "--dim", "6", "--train", "30", "--test", "12", "--seed", "11",
        "--out", &data,
    ];
    if run_cli(&gen) != 0 {
        return outcome(false, "gen-data failed");
    }
    let data_set = format!("data={data}");
    for run in ["a", "b"] {
        let out = p(run);
        let code = run_cli(&[
            "train", "--set", &data_set, "--set", "frames=12", "--set", "input_dim=6", "--set", "embed_dim=8",
            "--set", "epochs=4", "--set", "lr=1e-3", "--seed", "5", "--out", &out,
        ]);
        if code != 0 {
            return outcome(false, format!("train run {run} exited {code}"));
        }
    }
    let same = |f: &str| std::fs::read(Path::new(&p("a")).join(f)).unwrap() == std::fs::read(Path::new(&p("b")).join(f)).unwrap();
    let (ckpt, metrics) = (same("model.mwpt"), same("metrics.csv"));
    let lines = std::fs::read_to_string(Path::new(&p("a")).join("metrics.csv")).unwrap().lines().count();
    outcome(
        ckpt && metrics && lines == 5,
        format!("checkpoints identical: {ckpt}, metrics logs identical: {metrics} ({} epochs logged)", lines - 1),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("wavelet round trip", wavelet_round_trip),
        ("gradient suite", gradient_suite),
        ("identity algebra", identity_algebra),
        ("fusion oracle", fusion_oracle),
        ("desk-scale learning", desk_learning),
        ("multimodal gain direction", multimodal_gain),
        ("cost accounting", cost_accounting),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    let total = Instant::now();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        failures += !result.pass as usize;
        println!(
            "{} [{}] {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    let elapsed: Duration = total.elapsed();
    println!("acceptance: {}/8 passed in {:.0} s", 8 - failures, elapsed.as_secs_f64());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
