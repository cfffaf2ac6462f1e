use normex_core::{mc_truncated_moments, truncated_moments, unconditional_moments, Error, FamilyParams, NormKind};
use proptest::prelude::*;

fn family(kind: usize, alpha: f64) -> (FamilyParams, NormKind) {
    match kind {
        0 => (FamilyParams::mv_pareto_lomax(alpha, 3).unwrap(), NormKind::L1),
        1 => (FamilyParams::indep_pareto_lomax(alpha, 3).unwrap(), NormKind::Linf),
        2 => (FamilyParams::clayton_pareto_lomax(alpha, 1.0 / alpha).unwrap(), NormKind::Linf),
        _ => (FamilyParams::radial_pareto_lomax(alpha, 3).unwrap(), NormKind::Linf),
    }
}

/// Plain Cholesky; `None` when a pivot is not strictly positive.
fn cholesky_pivots(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    let mut pivots = Vec::with_capacity(d);
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= l[j * d + k] * l[j * d + k];
        }
        if !(s > 0.0) {
            return None;
        }
        pivots.push(s);
        l[j * d + j] = s.sqrt();
        for i in j + 1..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = t / l[j * d + j];
        }
    }
    Some(pivots)
}

fn assert_within_se(name: &str, exact: f64, est: f64, se: f64, k: f64) {
    assert!((exact - est).abs() <= k * se, "{name}: closed {exact} oracle {est} se {se}");
}

#[test]
fn mv_pareto_lomax_matches_oracle() {
    let (p, norm) = family(0, 2.3);
    for (i, y) in [1.0, 5.0, 20.0].into_iter().enumerate() {
        let tm = truncated_moments(&p, norm, y).unwrap();
        let mc = mc_truncated_moments(&p, norm, y, 1_000_000, 100 + i as u64).unwrap();
        for j in 0..3 {
            assert_within_se(&format!("mu_{j} at {y}"), tm.mu[j], mc.moments.mu[j], mc.mu_se[j], 4.0);
            for k in 0..3 {
                assert_within_se(
                    &format!("E[Y{j}Y{k}] at {y}"),
                    tm.second_moment(j, k),
                    mc.second[j * 3 + k],
                    mc.second_se[j * 3 + k],
                    4.0,
                );
            }
        }
    }
}

#[test]
fn clayton_matches_oracle_at_five() {
    let (p, norm) = family(2, 2.3);
    let tm = truncated_moments(&p, norm, 5.0).unwrap();
    let mc = mc_truncated_moments(&p, norm, 5.0, 1_000_000, 7).unwrap();
    for j in 0..2 {
        assert_within_se("mu", tm.mu[j], mc.moments.mu[j], mc.mu_se[j], 4.0);
        for k in 0..2 {
            assert_within_se("second", tm.second_moment(j, k), mc.second[j * 2 + k], mc.second_se[j * 2 + k], 4.0);
        }
    }
}

#[test]
fn oracle_without_truncation_matches_unconditional() {
    // α = 4.5 keeps fourth moments finite so second-moment standard errors are honest
    for kind in 0..4 {
        let (p, norm) = family(kind, 4.5);
        let d = p.dim();
        let um = unconditional_moments(&p).unwrap();
        let mc = mc_truncated_moments(&p, norm, 1e8, 1_000_000, 40 + kind as u64).unwrap();
        assert_eq!(mc.accepted, mc.draws);
        for i in 0..d {
            assert_within_se("mean", um.mean[i], mc.moments.mu[i], mc.mu_se[i], 4.0);
            for j in 0..d {
                let exact = um.cov[i * d + j] + um.mean[i] * um.mean[j];
                assert_within_se("second", exact, mc.second[i * d + j], mc.second_se[i * d + j], 4.0);
            }
        }
    }
}

#[test]
fn unconditional_examples() {
    let (p, _) = family(0, 2.3);
    let um = unconditional_moments(&p).unwrap();
    assert!((um.cov[1] - 1.0 / (1.3f64.powi(2) * 0.3)).abs() < 1e-12);
    assert!((um.cov[0] - 2.3 / (1.3f64.powi(2) * 0.3)).abs() < 1e-12);
    assert!((um.cov[1] - 1.97239).abs() < 1e-5);
    assert!((um.cov[0] - 4.5365).abs() < 1e-4);
    let (r, _) = family(3, 2.3);
    let um = unconditional_moments(&r).unwrap();
    let e12 = um.cov[1] + um.mean[0] * um.mean[1];
    assert!((e12 - 20.0 / (4.0 * 1.3 * 0.3)).abs() < 1e-10);
    assert!((um.mean[0] - 4.0 / 2.6).abs() < 1e-12);
    assert!(matches!(unconditional_moments(&family(0, 1.5).0), Err(Error::InfiniteVariance(_))));
}

#[test]
fn heavy_tails_still_have_truncated_moments() {
    for kind in 0..4 {
        let (p, norm) = family(kind, 1.5);
        let tm = truncated_moments(&p, norm, 10.0).unwrap();
        assert!(tm.mu.iter().chain(&tm.sigma).all(|v| v.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_symmetric_positive_definite(kind in 0usize..4, alpha in 2.05f64..5.0) {
        let (p, norm) = family(kind, alpha);
        let d = p.dim();
        for i in 0..=56 {
            let y = 0.05 * 10f64.powf(i as f64 / 8.0);
            let tm = truncated_moments(&p, norm, y).unwrap();
            for r in 0..d {
                for c in 0..d {
                    prop_assert_eq!(tm.sigma_at(r, c), tm.sigma_at(c, r));
                }
            }
            prop_assert!(cholesky_pivots(&tm.sigma, d).is_some(), "{:?} y={y}: {:?}", p.family(), tm.sigma);
        }
    }

    #[test]
    fn mean_is_monotone_and_bounded(kind in 0usize..4, alpha in 2.05f64..5.0) {
        let (p, norm) = family(kind, alpha);
        let mean = unconditional_moments(&p).unwrap().mean;
        let mut prev = vec![0.0; p.dim()];
        for i in 0..=40 {
            let y = 0.01 * 10f64.powf(i as f64 / 5.0);
            let tm = truncated_moments(&p, norm, y).unwrap();
            for j in 0..p.dim() {
                prop_assert!(tm.mu[j] >= prev[j] * (1.0 - 1e-12), "{:?} y={y}", p.family());
                prop_assert!(tm.mu[j] >= 0.0 && tm.mu[j] <= mean[j] * (1.0 + 1e-12));
            }
            prev = tm.mu;
        }
    }

    #[test]
    fn indep_cross_covariance_is_zero(alpha in 0.5f64..5.0, y in 1e-3f64..1e6, d in 2usize..6) {
        let p = FamilyParams::indep_pareto_lomax(alpha, d).unwrap();
        let tm = truncated_moments(&p, NormKind::Linf, y).unwrap();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    prop_assert_eq!(tm.sigma_at(i, j), 0.0);
                }
            }
        }
    }
}
