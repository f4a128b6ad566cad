//! Randomized invariants.

use nsgmm::exact::{indicator_vector, minimize_ivqr_sweep, minimize_location, sweep};
use nsgmm::gmm::{build_weight, criterion};
use nsgmm::linalg::Matrix;
use nsgmm::mc::estimator_variance;
use nsgmm::moments::eval_ivqr;
use nsgmm::population::{pseudo_true, transformed_beta, PopulationModel, TransformInputs};
use nsgmm::rates::{fit_rate, normalize_decay};
use nsgmm::sampling::{gen_ivqr, gen_location, mvn_sample, CovarianceMatrix, EpsScale, LocationVariant, SeedSpec};
use nsgmm::*;
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = LocationVariant> {
    prop_oneof![
        Just(LocationVariant::G1),
        Just(LocationVariant::G2),
        Just(LocationVariant::G3),
        Just(LocationVariant::G4),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn location_weight_scaling(v in variant(), tau in 0.05f64..0.95, c in 0.01f64..100.0, seed in any::<u64>()) {
        let data = gen_location(30, v, EpsScale::Two, &SeedSpec::new(seed, "scale", 0)).unwrap();
        let spec = MomentSpec::location(v, tau).unwrap();
        let w = WeightMatrix::identity(spec.moment_dim());
        let a = minimize_location(&spec, &data, &w, &ParamBox::default()).unwrap();
        let b = minimize_location(&spec, &data, &w.scaled(c), &ParamBox::default()).unwrap();
        match (&a.diagnostics.cell, &b.diagnostics.cell) {
            (CellDescriptor::Interval { index: i, count: k, .. }, CellDescriptor::Interval { index: j, count: l, .. }) => {
                prop_assert_eq!((i, k), (j, l));
            }
            other => prop_assert!(false, "unexpected cells {:?}", other),
        }
        prop_assert!((a.theta_hat[0] - b.theta_hat[0]).abs() <= 1e-12 * a.theta_hat[0].abs().max(1.0));
        prop_assert!((b.q_hat - c * a.q_hat).abs() <= 1e-10 * (c * a.q_hat).max(1e-300));
    }

    #[test]
    fn ivqr_weight_scaling(n in 5usize..25, delta in prop_oneof![Just(0.0), Just(0.6)], c in 0.01f64..100.0, seed in any::<u64>()) {
        let data = gen_ivqr(n, delta, &SeedSpec::new(seed, "scale", 1)).unwrap();
        let spec = MomentSpec::ivqr(0.5).unwrap();
        let w = build_weight(WeightKind::TauScaledInstrumentOuter.into(), &spec, &data, None).unwrap();
        let a = minimize_ivqr_sweep(&data, 0.5, &w, &ParamBox::default()).unwrap();
        let b = minimize_ivqr_sweep(&data, 0.5, &w.scaled(c), &ParamBox::default()).unwrap();
        prop_assert_eq!(indicator_vector(&data, &a.theta_hat).unwrap(), indicator_vector(&data, &b.theta_hat).unwrap());
        prop_assert!((b.q_hat - c * a.q_hat).abs() <= 1e-10 * (c * a.q_hat).max(1e-300));
    }

    #[test]
    fn ivqr_constant_on_cells(n in 5usize..30, seed in any::<u64>(), a in -3.0f64..5.0, b in -2.0f64..4.0, da in -1e-3f64..1e-3, db in -1e-3f64..1e-3) {
        let data = gen_ivqr(n, 0.6, &SeedSpec::new(seed, "cells", 0)).unwrap();
        let spec = MomentSpec::ivqr(0.5).unwrap();
        let w = build_weight(WeightKind::TauScaledInstrumentOuter.into(), &spec, &data, None).unwrap();
        let p = [a, b];
        let q = [a + da, b + db];
        if indicator_vector(&data, &p).unwrap() == indicator_vector(&data, &q).unwrap() {
            let qp = criterion(&spec.eval(&data, &p).unwrap(), &w).unwrap();
            let qq = criterion(&spec.eval(&data, &q).unwrap(), &w).unwrap();
            prop_assert_eq!(qp, qq);
        }
    }

    #[test]
    fn reported_q_reevaluates(n in 5usize..40, delta in 0.0f64..0.8, seed in any::<u64>()) {
        let data = gen_ivqr(n, delta, &SeedSpec::new(seed, "reeval", 0)).unwrap();
        let spec = MomentSpec::ivqr(0.5).unwrap();
        let w = WeightMatrix::identity(3);
        let (fit, stats) = sweep(&data, 0.5, &w, &ParamBox::default()).unwrap();
        let q = criterion(&spec.eval(&data, &fit.theta_hat).unwrap(), &w).unwrap();
        prop_assert!(fit.q_hat >= 0.0);
        prop_assert!((fit.q_hat - q).abs() <= 1e-10);
        let d = data.d().unwrap();
        let distinct_pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| d[i] != d[j]).count();
        prop_assert_eq!(stats.observation_events, distinct_pairs);
    }

    #[test]
    fn ivqr_sign_flip(n in 1usize..20, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, tau in 0.05f64..0.95) {
        let data = gen_ivqr(n, 0.3, &SeedSpec::new(seed, "sign", 0)).unwrap();
        let g = eval_ivqr(&data, [a, b], tau).unwrap();
        let z: Vec<Vec<f64>> = (0..n).map(|i| data.instrument(i)).collect();
        let s = indicator_vector(&data, &[a, b]).unwrap();
        for k in 0..3 {
            let flipped: f64 = (0..n).map(|i| ((s[i] as u8 as f64) - tau) * z[i][k]).sum::<f64>() / n as f64;
            prop_assert!((g[k] + flipped).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_fit_rescaling(v in prop::collection::vec(1e-4f64..1.0, 4..8), c in 1e-3f64..1e3) {
        let s: Vec<(f64, f64)> = v.iter().enumerate().map(|(i, &x)| (100.0 * 2f64.powi(i as i32), x)).collect();
        let scaled: Vec<(f64, f64)> = s.iter().map(|&(n, x)| (n, c * x)).collect();
        let a = fit_rate(&s).unwrap();
        let b = fit_rate(&scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-12);
        prop_assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-10);
        let norm: Vec<(f64, f64)> = normalize_decay(&s).unwrap().iter().map(|p| (p.n, p.ratio)).collect();
        prop_assert!((fit_rate(&norm).unwrap().slope - a.slope).abs() < 1e-12);
    }

    #[test]
    fn exact_power_laws(k in 0.1f64..10.0, s in -2.0f64..-0.2) {
        let series: Vec<(f64, f64)> = [200.0, 400.0, 800.0, 1600.0, 3200.0].iter().map(|&n: &f64| (n, k * n.powf(s))).collect();
        let f = fit_rate(&series).unwrap();
        prop_assert!((f.slope - s).abs() < 1e-12);
        prop_assert!(f.slope_se < 1e-12);
        prop_assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mvn_factor_residual(entries in prop::collection::vec(-1.0f64..1.0, 16), diag in 0.0f64..2.0) {
        let a: Vec<Vec<f64>> = (0..4).map(|i| entries[4 * i..4 * i + 4].to_vec()).collect();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| (0..4).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { diag } else { 0.0 }).collect())
            .collect();
        if let Ok(cov) = CovarianceMatrix::from_rows(&rows) {
            let l = cov.factor();
            for i in 0..4 {
                for j in 0..4 {
                    let r: f64 = (0..4).map(|k| l[(i, k)] * l[(j, k)]).sum();
                    prop_assert!((r - rows[i][j]).abs() <= 1e-12, "({i},{j}) {r} vs {}", rows[i][j]);
                }
            }
        }
    }

    #[test]
    fn seed_determinism(seed in any::<u64>(), rep in any::<u64>(), id in "[a-z0-9]{1,8}") {
        let s = SeedSpec::new(seed, id, rep);
        let cov = CovarianceMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        prop_assert_eq!(mvn_sample(&cov, 5, &s).unwrap(), mvn_sample(&cov, 5, &s).unwrap());
    }

    #[test]
    fn transformed_beta_between(pi1 in 0.0f64..3.0, pi2 in 0.0f64..3.0, e1 in 0.01f64..2.0, e2 in 0.01f64..2.0, b0 in -5.0f64..5.0, bs in -5.0f64..5.0) {
        prop_assume!(pi1 + pi2 > 1e-6);
        let t = TransformInputs { pi1, pi2, ez1d: e1, ez2d: e2, beta0: b0, beta_star: bs };
        let b = transformed_beta(&t).unwrap();
        prop_assert!(b >= b0.min(bs) - 1e-12 && b <= b0.max(bs) + 1e-12);
        if pi2 == 0.0 {
            prop_assert_eq!(b, b0);
        }
    }
}

#[test]
fn pseudo_true_weight_scaling() {
    let model = PopulationModel::ivqr(0.5, 0.6).unwrap();
    let w = Matrix::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.0, 0.2], vec![0.1, 0.2, 1.5]]).unwrap();
    let a = pseudo_true(&model, &w, &ParamBox::default()).unwrap();
    for c in [0.1, 7.5] {
        let b = pseudo_true(&model, &w.scaled(c), &ParamBox::default()).unwrap();
        for k in 0..2 {
            assert!(
                (a.theta_star[k] - b.theta_star[k]).abs() < 1e-8,
                "c={c}: {:?} vs {:?}",
                a.theta_star,
                b.theta_star
            );
        }
    }
}

#[test]
fn variance_of_standard_normals() {
    let cov = CovarianceMatrix::from_rows(&[vec![1.0]]).unwrap();
    let draws: Vec<f64> = mvn_sample(&cov, 1_000_000, &SeedSpec::new(11, "var", 0))
        .unwrap()
        .into_iter()
        .map(|r| r[0])
        .collect();
    assert!((estimator_variance(&draws).unwrap() - 1.0).abs() < 0.01);
}
