mod common;

use common::{names, random_params, rng};
use ochoice::data::{CoefficientMode, Dataset, DesignSpec, ScalingParams};
use ochoice::econ::{
    binary_effect, elasticity, elasticity_analytic, market_share, substitution_curve, linear_grid, ShareMode,
};
use ochoice::math::sigmoid;
use ochoice::ordered_logit::OrderedLogitFit;
use ochoice::reslogit::{ReslogitFit, ReslogitParams, TrainConfig};
use ochoice::ChoiceModel;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn ordered_logit(beta: Vec<f64>, deltas: Vec<f64>) -> OrderedLogitFit {
    let p = beta.len();
    OrderedLogitFit {
        design: DesignSpec::generic(names(p), "y"),
        feature_names: names(p),
        scaling: ScalingParams::default(),
        n_params: p + deltas.len(),
        beta,
        deltas,
        log_likelihood: f64::NAN,
        converged: true,
        iterations: 0,
        gradient_max_norm: 0.0,
        warnings: Vec::new(),
    }
}

fn reslogit(params: ReslogitParams) -> ReslogitFit {
    let p = params.n_features;
    ReslogitFit {
        design: DesignSpec::generic(names(p), "y").with_mode(params.mode),
        feature_names: names(p),
        scaling: ScalingParams::default(),
        config: TrainConfig::default(),
        n_params: params.n_trainable(),
        params,
        history: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        violation_count: 0,
    }
}

/// Rows of uniform values in `[lo, hi)`; columns listed in `binary` hold 0/1.
fn uniform_data(r: &mut ChaCha8Rng, n: usize, p: usize, k: usize, lo: f64, hi: f64, binary: &[usize]) -> Dataset {
    let mut features = Vec::with_capacity(n * p);
    for _ in 0..n {
        for j in 0..p {
            features.push(if binary.contains(&j) {
                f64::from(r.random_bool(0.5))
            } else {
                r.random_range(lo..hi)
            });
        }
    }
    let labels = (0..n).map(|_| r.random_range(1..=k as u32)).collect();
    Dataset::new(names(p), features, labels, k).unwrap()
}

#[test]
fn binary_outcome_elasticity_closed_form() {
    let (beta, delta) = (0.8, 0.2);
    let model = ordered_logit(vec![beta, -0.3], vec![delta]);
    let mut r = rng(1);
    let data = uniform_data(&mut r, 300, 2, 2, -2.0, 2.0, &[]);
    let e = elasticity(&model, &data, "x1").unwrap();
    let (mut num, mut den) = ([0.0; 2], [0.0; 2]);
    for i in 0..data.n_rows() {
        let x = data.row(i);
        let p2 = sigmoid(beta * x[0] - 0.3 * x[1] - delta);
        let p = [1.0 - p2, p2];
        let el = [-beta * x[0] * p2, beta * x[0] * (1.0 - p2)];
        for c in 0..2 {
            num[c] += p[c] * el[c];
            den[c] += p[c];
        }
    }
    for c in 0..2 {
        let want = num[c] / den[c];
        assert!((e.aggregate[c] - want).abs() < 1e-4 * want.abs().max(1e-3), "{c}: {} vs {want}", e.aggregate[c]);
    }
    assert_eq!(e.excluded, vec![0, 0]);
}

#[test]
fn zero_coefficient_has_zero_elasticity() {
    let model = ordered_logit(vec![1.0, 0.0], vec![-0.5, 0.5]);
    let mut r = rng(2);
    let data = uniform_data(&mut r, 100, 2, 3, 0.5, 3.0, &[]);
    let e = elasticity(&model, &data, "x2").unwrap();
    assert!(e.aggregate.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn elasticity_signs_follow_coefficient() {
    let model = ordered_logit(vec![0.9], vec![-0.5, 0.4, 1.2]);
    let mut r = rng(3);
    let data = uniform_data(&mut r, 200, 1, 4, 0.5, 2.0, &[]);
    let e = elasticity(&model, &data, "x1").unwrap();
    assert!(e.aggregate[0] < 0.0);
    assert!(e.aggregate[3] > 0.0);
}

#[test]
fn elasticity_rejects_binary_variable() {
    let model = ordered_logit(vec![0.5, 0.5], vec![0.0]);
    let mut r = rng(4);
    let data = uniform_data(&mut r, 50, 2, 2, -1.0, 1.0, &[1]);
    assert!(elasticity(&model, &data, "x2").is_err());
    assert!(binary_effect(&model, &data, "x1", None).is_err());
}

#[test]
fn deep_model_analytic_elasticity_matches_finite_differences() {
    let mut r = rng(5);
    for mode in [CoefficientMode::Generic, CoefficientMode::AlternativeSpecific] {
        let mut params = random_params(&mut r, 3, 4, 3, mode);
        params.coral_biases.sort_by(|a, b| b.total_cmp(a));
        let model = reslogit(params);
        let data = uniform_data(&mut r, 100, 3, 4, -2.0, 2.0, &[]);
        for v in ["x1", "x2", "x3"] {
            let fd = elasticity(&model, &data, v).unwrap();
            let an = elasticity_analytic(&model, &data, v).unwrap().unwrap();
            for (a, b) in fd.aggregate.iter().zip(&an.aggregate) {
                assert!((a - b).abs() < 1e-4 * b.abs().max(1.0), "{v}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn market_shares_sum_to_one() {
    let mut r = rng(6);
    let model = reslogit(random_params(&mut r, 2, 5, 2, CoefficientMode::Generic));
    let data = uniform_data(&mut r, 400, 2, 5, -2.0, 2.0, &[]);
    for mode in [ShareMode::Hard, ShareMode::Soft] {
        let s = market_share(&model, &data, mode).unwrap();
        assert!((s.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.shares.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn top_category_curve_is_monotone() {
    let model = ordered_logit(vec![0.7, -0.4], vec![-1.0, 0.0, 1.5]);
    let mut r = rng(7);
    let data = uniform_data(&mut r, 200, 2, 4, -2.0, 2.0, &[]);
    let curve = substitution_curve(&model, &data, "x1", &linear_grid(-4.0, 4.0, 41)).unwrap();
    assert!(curve.probs.windows(2).all(|w| w[1][3] >= w[0][3]));
    assert!(curve.probs.windows(2).all(|w| w[1][0] <= w[0][0]));
    for p in &curve.probs {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(!curve.crossings.is_empty());
}

#[test]
fn curve_at_observed_value_equals_soft_shares() {
    let mut r = rng(8);
    let model = reslogit(random_params(&mut r, 2, 3, 2, CoefficientMode::AlternativeSpecific));
    let mut data = uniform_data(&mut r, 150, 2, 3, -1.0, 1.0, &[]);
    let features: Vec<f64> = (0..data.n_rows()).flat_map(|i| [0.3, data.row(i)[1]]).collect();
    data = Dataset::new(names(2), features, data.labels().to_vec(), 3).unwrap();
    let soft = market_share(&model, &data, ShareMode::Soft).unwrap();
    let curve = substitution_curve(&model, &data, "x1", &[0.3]).unwrap();
    for (a, b) in curve.probs[0].iter().zip(&soft.shares) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn counterfactuals_pass_through_scaling() {
    let mut r = rng(9);
    let data = uniform_data(&mut r, 200, 2, 3, 5.0, 15.0, &[]);
    let spec = DesignSpec::generic(names(2), "y").with_standardized(vec!["x1".into()]);
    let (scaled, scaling) = ochoice::data::standardize(&data, &spec).unwrap();
    let mut model = ordered_logit(vec![0.6, 0.05], vec![-0.3, 0.6]);
    model.scaling = scaling;
    let direct = ordered_logit(vec![0.6, 0.05], vec![-0.3, 0.6]);
    let a = market_share(&model, &data, ShareMode::Soft).unwrap();
    let b = market_share(&direct, &scaled, ShareMode::Soft).unwrap();
    for (x, y) in a.shares.iter().zip(&b.shares) {
        assert!((x - y).abs() < 1e-12);
    }
    let e = elasticity(&model, &data, "x1").unwrap();
    let an = elasticity_analytic(&model, &data, "x1").unwrap().unwrap();
    for (x, y) in e.aggregate.iter().zip(&an.aggregate) {
        assert!((x - y).abs() < 1e-4 * y.abs().max(1.0));
    }
}

fn flipped(data: &Dataset, j: usize) -> Dataset {
    let p = data.n_features();
    let mut f = data.features().to_vec();
    for i in 0..data.n_rows() {
        f[i * p + j] = 1.0 - f[i * p + j];
    }
    Dataset::new(data.feature_names().to_vec(), f, data.labels().to_vec(), data.n_categories()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn binary_effects_conserve_probability(seed in any::<u64>(), k in 2usize..6, m in 0usize..4) {
        let mut r = rng(seed);
        let model = reslogit(random_params(&mut r, 3, k, m, CoefficientMode::AlternativeSpecific));
        let data = uniform_data(&mut r, 60, 3, k, -1.5, 1.5, &[2]);
        let eff = binary_effect(&model, &data, "x3", None).unwrap();
        prop_assert!(eff.mean_change.iter().sum::<f64>().abs() < 1e-12);
        let back = binary_effect(&model, &flipped(&data, 2), "x3", None).unwrap();
        for (a, b) in eff.mean_change.iter().zip(&back.mean_change) {
            prop_assert!((a + b).abs() < 1e-12);
        }
        prop_assert_eq!(eff.n_from_zero, back.n_from_one);
        if let (Some(z), Some(o)) = (&eff.from_zero, &back.from_one) {
            for (a, b) in z.iter().zip(o) {
                prop_assert!((a + b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_shares_average_choice_probabilities(seed in any::<u64>(), k in 2usize..5) {
        let mut r = rng(seed);
        let model = reslogit(random_params(&mut r, 2, k, 1, CoefficientMode::Generic));
        let data = uniform_data(&mut r, 40, 2, k, -2.0, 2.0, &[]);
        let shares = market_share(&model, &data, ShareMode::Soft).unwrap().shares;
        let mut want = vec![0.0; k];
        for i in 0..data.n_rows() {
            for (w, p) in want.iter_mut().zip(model.choice_probs(data.row(i)).probs) {
                *w += p / data.n_rows() as f64;
            }
        }
        for (a, b) in shares.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
