use anticipation::baselines::{fit_baseline, predict_baseline, BaselineMode};
use anticipation::inference::{aggregate, mc_predict, mc_predict_with, McOptions, SampleOutputs};
use anticipation::model::{init_params, NetworkConfig};
use anticipation::par::Exec;
use anticipation::workflow::{FeatureMatrix, ProcedureSequence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_train(rng: &mut ChaCha8Rng) -> Vec<ProcedureSequence> {
    let k = rng.gen_range(1..=3);
    (0..rng.gen_range(1..=5))
        .map(|v| {
            let n = rng.gen_range(50..400);
            let mut presence = vec![false; n * k];
            for inst in 0..k {
                for _ in 0..rng.gen_range(0..4) {
                    let s = rng.gen_range(0..n);
                    let len = rng.gen_range(1..40);
                    for t in s..(s + len).min(n) {
                        presence[t * k + inst] = true;
                    }
                }
            }
            let names = (0..k).map(|i| format!("i{i}")).collect();
            ProcedureSequence::new(format!("v{v}"), 1.0, names, presence).unwrap()
        })
        .collect()
}

/// Next-present distance by forward scan.
fn oracle_targets(track: &[bool], fps: f64, h: f64) -> Vec<f64> {
    (0..track.len())
        .map(|t| match (t..track.len()).find(|&u| track[u]) {
            Some(u) => ((u - t) as f64 / (fps * 60.0)).min(h),
            None => h,
        })
        .collect()
}

fn oracle_wmae(preds: &[Vec<f64>], targets: &[Vec<f64>], h: f64) -> Option<f64> {
    let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (p, r) in preds.iter().zip(targets) {
        for (&p, &r) in p.iter().zip(r) {
            let e = (p.clamp(0.0, h) - r).abs();
            if r > 0.0 && r < h {
                sa += e;
                na += 1;
            } else if r >= h {
                sb += e;
                nb += 1;
            }
        }
    }
    let a = (na > 0).then(|| sa / na as f64);
    let b = (nb > 0).then(|| sb / nb as f64);
    match (a, b) {
        (Some(a), Some(b)) => Some(0.5 * a + 0.5 * b),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Exhaustive threshold search written from the definitions alone.
fn oracle_fit(train: &[ProcedureSequence], inst: usize, h: f64, bins: usize, mode: BaselineMode) -> (Option<u64>, Option<f64>) {
    let bin = |t: usize, n: usize| (t * bins / n).min(bins - 1);
    let mut hist = vec![0u64; bins];
    for s in train {
        for t in 0..s.len() {
            if s.present(t, inst) {
                hist[bin(t, s.len())] += 1;
            }
        }
    }
    let mut cands: Vec<Option<u64>> = hist.iter().copied().map(Some).collect();
    cands.sort();
    cands.dedup();
    cands.push(None);
    let total: usize = train.iter().map(|s| s.len()).sum();
    let mean_len = ((total as f64 / train.len() as f64).round() as usize).max(1);
    let targets: Vec<Vec<f64>> = train.iter().map(|s| oracle_targets(&s.presence_track(inst), 1.0, h)).collect();
    let mut best: (Option<u64>, Option<f64>) = (None, None);
    let mut first = true;
    for c in cands {
        let expand = |len: usize| -> Vec<bool> {
            (0..len).map(|j| c.is_some_and(|th| hist[bin(j, len)] > th)).collect()
        };
        let preds: Vec<Vec<f64>> = train
            .iter()
            .map(|s| {
                let l = if mode == BaselineMode::Mean { mean_len } else { s.len() };
                let r = oracle_targets(&expand(l), 1.0, h);
                (0..s.len()).map(|j| r.get(j).copied().unwrap_or(h)).collect()
            })
            .collect();
        let w = oracle_wmae(&preds, &targets, h);
        let better = first
            || match (best.1, w) {
                (Some(b), Some(w)) => w <= b,
                (None, Some(_)) => true,
                _ => false,
            };
        if better {
            best = (c, w);
        }
        first = false;
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn thresholds_match_exhaustive_oracle(seed in any::<u64>(), bins in prop::sample::select(vec![10usize, 37, 1000])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_train(&mut rng);
        for mode in [BaselineMode::Mean, BaselineMode::Oracle] {
            let m = fit_baseline(&train, 3.0, bins, mode).unwrap();
            for inst in 0..train[0].num_instruments() {
                let (th, w) = oracle_fit(&train, inst, 3.0, bins, mode);
                prop_assert_eq!(m.thresholds[inst], th);
                prop_assert_eq!(m.train_wmae[inst], w);
            }
        }
    }
}

#[test]
fn mean_mode_predicts_to_mean_duration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let train = random_train(&mut rng);
    let m = fit_baseline(&train, 3.0, 10, BaselineMode::Mean).unwrap();
    let p = predict_baseline(&m, None).unwrap();
    assert_eq!(p.len(), m.mean_duration);
    assert_eq!(predict_baseline(&m, Some(17)).unwrap().len(), 17);
    let o = fit_baseline(&train, 3.0, 10, BaselineMode::Oracle).unwrap();
    assert!(predict_baseline(&o, None).is_err());
}

/// Welford-style single pass, kept separate from the library's two-pass code.
fn second_aggregate(samples: &[SampleOutputs]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let nk = samples[0].regression.len();
    let mut mean = vec![0.0; nk];
    let mut m2 = vec![0.0; nk];
    let mut pm = vec![0.0; 3 * nk];
    let mut pm2 = vec![0.0; 3 * nk];
    let mut ale = vec![0.0; 3 * nk];
    for (t, s) in samples.iter().enumerate() {
        let c = (t + 1) as f64;
        for i in 0..nk {
            let d = s.regression[i] - mean[i];
            mean[i] += d / c;
            m2[i] += d * (s.regression[i] - mean[i]);
        }
        for i in 0..3 * nk {
            let p = s.probabilities[i];
            let d = p - pm[i];
            pm[i] += d / c;
            pm2[i] += d * (p - pm[i]);
            ale[i] += (p * (1.0 - p) - ale[i]) / c;
        }
    }
    let t = samples.len() as f64;
    let var: Vec<f64> = m2.iter().map(|v| v / t).collect();
    let epi: Vec<f64> = pm2.chunks(3).map(|c| c.iter().sum::<f64>() / (3.0 * t)).collect();
    let al: Vec<f64> = ale.chunks(3).map(|c| c.iter().sum::<f64>() / 3.0).collect();
    (mean, var, pm, epi, al)
}

fn random_samples(rng: &mut ChaCha8Rng, t: usize, nk: usize) -> Vec<SampleOutputs> {
    (0..t)
        .map(|_| SampleOutputs {
            regression: (0..nk).map(|_| rng.gen_range(0.0..5.0)).collect(),
            probabilities: (0..nk)
                .flat_map(|_| {
                    let l: [f64; 3] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                    let z: f64 = l.iter().map(|v| v.exp()).sum();
                    l.map(|v| v.exp() / z)
                })
                .collect(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_matches_second_implementation(seed in any::<u64>(), t in 1usize..40, nk in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, t, nk);
        let s = aggregate(&samples, 5.0, false, 1).unwrap();
        let (mean, var, pm, epi, al) = second_aggregate(&samples);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
        prop_assert!(close(&s.reg_mean, &mean));
        prop_assert!(close(&s.reg_epistemic_var, &var));
        prop_assert!(close(&s.class_mean, &pm));
        prop_assert!(close(&s.class_epistemic_var, &epi));
        prop_assert!(close(&s.class_aleatoric_var, &al));
        // total variance of each class probability splits into the two parts
        for i in 0..3 * nk {
            let second_moment = samples.iter().map(|x| x.probabilities[i].powi(2)).sum::<f64>() / t as f64;
            let total = s.class_mean[i] * (1.0 - s.class_mean[i]);
            let split = s.class_aleatoric_per_class[i] + s.class_epistemic_per_class[i];
            prop_assert!((total - split).abs() <= 1e-12, "{total} vs {split} ({second_moment})");
        }
    }
}

fn small_net(dropout: f64) -> anticipation::model::NetworkParams {
    let mut c = NetworkConfig::new(3, 2, 3.0);
    c.encoder_widths = vec![8];
    c.hidden = 8;
    c.dropout = dropout;
    init_params(&c, 9).unwrap()
}

fn input() -> FeatureMatrix {
    FeatureMatrix::new(3, (0..60).map(|i| (i as f64 * 0.41).cos()).collect()).unwrap()
}

#[test]
fn zero_dropout_has_no_epistemic_variance() {
    let s = mc_predict(&small_net(0.0), &input(), 8, 1).unwrap();
    assert!(s.reg_epistemic_var.iter().all(|v| *v <= 1e-12));
    assert!(s.class_epistemic_var.iter().all(|v| *v <= 1e-12));
    assert!(s.class_aleatoric_var.iter().all(|v| *v > 0.0));
}

#[test]
fn execution_policy_does_not_change_summary() {
    let p = small_net(0.3);
    let mut o = McOptions::new(9, 4);
    o.exec = Exec::Sequential;
    let a = mc_predict_with(&p, &input(), &o).unwrap();
    o.exec = Exec::Parallel;
    assert_eq!(a, mc_predict_with(&p, &input(), &o).unwrap());
}
