use proptest::prelude::*;
use vafactor_core::evalmetrics::{cramers_v, csmf_accuracy, interval_coverage};
use vafactor_core::math::normalize_log_weights;
use vafactor_core::model::{design_vector, implied_covariance, linear_predictor, probit_marginal, CovariateVector};
use vafactor_core::relevance::{entropy, ExactJoint, LikelihoodEvaluator, Predictor};
use vafactor_core::samplers::{sample_dirichlet, sample_truncated_normal, Support};
use vafactor_core::synth::{random_params, ParamScales};
use vafactor_core::{RngStream, Standardizer};

fn params(seed: u64, l: usize, p: usize, k: usize) -> vafactor_core::ModelParams {
    random_params(l, p, k, &ParamScales::default(), &mut RngStream::new(seed, 0)).unwrap()
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_loading_is_affine_in_covariates(seed in any::<u64>(), a0 in -2.0..2.0f64, s0 in -2.0..2.0f64,
                                                a1 in -2.0..2.0f64, s1 in -2.0..2.0f64, t in 0.0..1.0f64) {
        let m = params(seed, 2, 3, 2);
        let w0 = CovariateVector::standardized(a0, s0);
        let w1 = CovariateVector::standardized(a1, s1);
        let wt = CovariateVector::standardized((1.0 - t) * a0 + t * a1, (1.0 - t) * s0 + t * s1);
        let (mut r0, mut r1, mut rt) = (vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
        for y in 0..2 {
            for j in 0..3 {
                m.loadings.effective_row(y, j, &w0, &mut r0);
                m.loadings.effective_row(y, j, &w1, &mut r1);
                m.loadings.effective_row(y, j, &wt, &mut rt);
                for c in 0..4 {
                    prop_assert!((rt[c] - ((1.0 - t) * r0[c] + t * r1[c])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_predictor_splits_into_mean_and_factor_terms(seed in any::<u64>(), a in -2.0..2.0f64, s in -2.0..2.0f64) {
        let m = params(seed, 2, 3, 2);
        let w = CovariateVector::standardized(a, s);
        let eta: Vec<f64> = { let mut r = RngStream::new(seed, 1); (0..4).map(|_| r.standard_normal()).collect() };
        let mut design = vec![0.0; 11];
        design_vector(&w, &eta, &mut design);
        let mut row = vec![0.0; 4];
        for j in 0..3 {
            m.loadings.effective_row(1, j, &w, &mut row);
            let direct = m.loadings.mean(1, j, &w) + row.iter().zip(&eta).map(|(u, v)| u * v).sum::<f64>();
            prop_assert!((linear_predictor(&m.loadings, 1, j, &design) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn implied_covariance_is_symmetric_and_dominates_identity(seed in any::<u64>(), a in -2.0..2.0f64, s in -2.0..2.0f64) {
        let m = params(seed, 2, 4, 2);
        let cov = implied_covariance(&m.loadings, 0, &CovariateVector::standardized(a, s)).unwrap();
        prop_assert!((&cov - cov.transpose()).amax() < 1e-12);
        let eig = cov.symmetric_eigenvalues();
        prop_assert!(eig.min() > 1.0 - 1e-9);
    }

    #[test]
    fn probit_marginal_flips_with_the_mean(seed in any::<u64>()) {
        let mut m = params(seed, 1, 2, 1);
        let w = CovariateVector::standardized(0.3, -0.7);
        let p = probit_marginal(&m.loadings, 0, &w, 1);
        for v in m.loadings.b_mut(0, 1) {
            *v = -*v;
        }
        prop_assert!((probit_marginal(&m.loadings, 0, &w, 1) - (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn csmf_accuracy_is_permutation_invariant_and_bounded(raw_t in prop::collection::vec(0.01..1.0f64, 2..7),
                                                           shift in 0usize..7, seed in any::<u64>()) {
        let truth = simplex(&raw_t);
        let est = { let mut r = RngStream::new(seed, 0); simplex(&(0..truth.len()).map(|_| r.open_uniform()).collect::<Vec<_>>()) };
        let acc = csmf_accuracy(&truth, &est).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        let rot = |v: &[f64]| { let n = v.len(); let mut v = v.to_vec(); v.rotate_left(shift % n); v };
        prop_assert!((csmf_accuracy(&rot(&truth), &rot(&est)).unwrap() - acc).abs() < 1e-12);
        prop_assert!((csmf_accuracy(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cramers_v_is_symmetric_and_label_invariant(a in prop::collection::vec(prop::option::weighted(0.9, 0u32..3), 5..60),
                                                  b_seed in any::<u64>()) {
        let mut r = RngStream::new(b_seed, 0);
        let b: Vec<Option<u32>> = a.iter().map(|_| if r.open_uniform() < 0.1 { None } else { Some((r.open_uniform() * 3.0) as u32) }).collect();
        let v = cramers_v(&a, &b);
        prop_assert_eq!(v.map(|x| (x * 1e12).round()), cramers_v(&b, &a).map(|x| (x * 1e12).round()));
        let relabeled: Vec<Option<u32>> = a.iter().map(|x| x.map(|c| (c + 1) % 3 + 10)).collect();
        match (v, cramers_v(&relabeled, &b)) {
            (Some(x), Some(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
            }
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn coverage_is_a_fraction_of_causes(seed in any::<u64>(), l in 2usize..6, level in 0.5..0.99f64) {
        let mut r = RngStream::new(seed, 0);
        let draws: Vec<Vec<f64>> = (0..50).map(|_| simplex(&(0..l).map(|_| r.open_uniform()).collect::<Vec<_>>())).collect();
        let truth = simplex(&(0..l).map(|_| r.open_uniform()).collect::<Vec<_>>());
        let c = interval_coverage(&draws, &truth, level).unwrap();
        prop_assert!((c * l as f64 - (c * l as f64).round()).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn normalized_weights_ignore_a_common_shift(raw in prop::collection::vec(-30.0..30.0f64, 1..8), shift in -500.0..500.0f64) {
        let mut a = raw.clone();
        let mut b: Vec<f64> = raw.iter().map(|v| v + shift).collect();
        prop_assert!(normalize_log_weights(&mut a));
        prop_assert!(normalize_log_weights(&mut b));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_is_bounded_by_log_support(raw in prop::collection::vec(0.0..1.0f64, 1..10)) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let h = entropy(&simplex(&raw)).unwrap();
        prop_assert!(h >= -1e-15);
        prop_assert!(h <= (raw.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn dirichlet_and_truncated_normal_respect_their_supports(seed in any::<u64>(), mean in -4.0..4.0f64,
                                                             conc in prop::collection::vec(0.05..5.0f64, 2..6)) {
        let mut r = RngStream::new(seed, 0);
        let d = sample_dirichlet(&conc, &mut r).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(sample_truncated_normal(mean, Support::Positive, &mut r) >= 0.0);
        prop_assert!(sample_truncated_normal(mean, Support::Negative, &mut r) <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn enumerated_information_obeys_the_chain_rule(seed in any::<u64>()) {
        let m = params(seed, 2, 3, 1);
        let std = Standardizer { age_mean: 0.4, age_sd: 0.49, sex_mean: 0.5, sex_sd: 0.5 };
        let mut r = RngStream::new(seed, 3);
        let draws: Vec<f64> = (0..200 * 2).map(|_| r.standard_normal()).collect();
        let eval = LikelihoodEvaluator::new(&m, &std, &draws);
        let joint = ExactJoint::from_evaluator(&eval).unwrap();
        prop_assert!((joint.total() - 1.0).abs() < 1e-12);
        let all = joint.all_mask();
        let total = joint.conditional_mi(all, 0);
        for t in 0..5 {
            let bit = 1usize << t;
            let cmi = joint.conditional_mutual_information(Predictor::from_index(t));
            prop_assert!(cmi > -1e-12);
            prop_assert!(joint.mutual_information(Predictor::from_index(t)) > -1e-12);
            // I(y; all) = I(y; rest) + I(y; t | rest)
            let rest = joint.conditional_mi(all & !bit, 0);
            prop_assert!((total - (rest + cmi)).abs() < 1e-10);
        }
        // Symmetric in the ordering of a two-step chain.
        let (a, b) = (1usize << 2, 1usize << 3);
        let ab = joint.conditional_mi(a, 0) + joint.conditional_mi(b, a);
        let ba = joint.conditional_mi(b, 0) + joint.conditional_mi(a, b);
        prop_assert!((ab - ba).abs() < 1e-10);
        prop_assert!(total <= entropy(&[m.categorical.cause_prior[0], m.categorical.cause_prior[1]]).unwrap() + 1e-12);
    }
}
