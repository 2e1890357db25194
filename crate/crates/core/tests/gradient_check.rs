use anticipation::labels::compute_targets;
use anticipation::model::{
    backward, compute_loss, forward, init_params, sample_masks, DropoutMasks, NetworkConfig, NetworkParams,
    RecurrentState, RegressionOutput,
};
use anticipation::workflow::{FeatureMatrix, ProcedureSequence};
use anticipation::labels::AnticipationTargets;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor so that gradients at round-off scale compare absolutely.
const REL_FLOOR: f64 = 1e-6;

struct Case {
    params: NetworkParams,
    masks: DropoutMasks,
    features: FeatureMatrix,
    targets: AnticipationTargets,
    phases: Option<Vec<usize>>,
    initial: RecurrentState,
}

fn build(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=3);
    let h = [2.0, 3.0, 5.0][rng.gen_range(0..3)];
    let mut c = NetworkConfig::new(f, k, h);
    c.encoder_widths = (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(2..=5)).collect();
    c.hidden = rng.gen_range(1..=5);
    c.phases = rng.gen_bool(0.5).then(|| rng.gen_range(2..=4));
    c.lambda = rng.gen_range(0.01..1.0);
    c.lambda_phase = Some(rng.gen_range(0.01..1.0));
    c.gamma = rng.gen_range(0.0..1e-2);
    c.dropout = rng.gen_range(0.0..0.5);
    c.output = if rng.gen_bool(0.5) { RegressionOutput::LinearClamped } else { RegressionOutput::ScaledSigmoid };
    let params = init_params(&c, rng.gen()).unwrap();
    assert!(params.len() <= 1000, "{} params", params.len());

    let n = rng.gen_range(1..=30);
    // a tenth of a minute per frame keeps targets inside the horizon
    let presence: Vec<bool> = (0..n * k).map(|_| rng.gen_bool(0.15)).collect();
    let names = (0..k).map(|i| format!("i{i}")).collect();
    let seq = ProcedureSequence::new("g", 1.0 / 6.0, names, presence).unwrap();
    let targets = compute_targets(&seq, h).unwrap();
    let features = FeatureMatrix::new(f, (0..n * f).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
    let phases = c.phases.map(|p| (0..n).map(|_| rng.gen_range(0..p)).collect());
    let initial = RecurrentState {
        hidden: (0..c.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        cell: (0..c.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let masks = sample_masks(&c, rng.gen()).unwrap();
    Case {
        params,
        masks,
        features,
        targets,
        phases,
        initial,
    }
}

fn loss_at(case: &Case, values: &[f64]) -> f64 {
    let mut p = case.params.clone();
    p.values_mut().copy_from_slice(values);
    let (out, _) = forward(&p, &case.masks, &case.features, &case.initial).unwrap();
    compute_loss(&out, &case.targets, case.phases.as_deref(), &p).unwrap().total
}

/// Largest relative deviation between analytic and central-difference gradients.
fn max_relative_error(case: &Case) -> f64 {
    let (_, grad, _) = backward(
        &case.params,
        &case.masks,
        &case.features,
        &case.targets,
        case.phases.as_deref(),
        &case.initial,
    )
    .unwrap();
    let base = case.params.values().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += STEP;
        let mut minus = base.clone();
        minus[i] -= STEP;
        let numeric = (loss_at(case, &plus) - loss_at(case, &minus)) / (2.0 * STEP);
        let analytic = grad.values[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradient_matches_central_differences(seed in any::<u64>()) {
        let case = build(seed);
        let err = max_relative_error(&case);
        prop_assert!(err < MAX_REL_ERR, "max relative error {err:e}");
    }
}

#[test]
fn gradient_covers_every_tensor() {
    let case = build(7);
    let (_, grad, _) = backward(
        &case.params,
        &case.masks,
        &case.features,
        &case.targets,
        case.phases.as_deref(),
        &case.initial,
    )
    .unwrap();
    assert_eq!(grad.values.len(), case.params.len());
    assert!(grad.values.iter().all(|g| g.is_finite()));
}
