use normex_core::families::{clayton_face_density, mv_pareto_lomax_l1_d3_cdf, radial_norm_cdf_gamma_sum};
use normex_core::stats::{ks_one_sample, ks_two_sample};
use normex_core::{frechet_cdf, frechet_quantile, FamilyParams, NormKind, SampleMatrix};
use proptest::prelude::*;

const ALPHA: f64 = 2.3;

fn families() -> Vec<(FamilyParams, NormKind)> {
    vec![
        (FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap(), NormKind::L1),
        (FamilyParams::indep_pareto_lomax(ALPHA, 3).unwrap(), NormKind::Linf),
        (FamilyParams::clayton_pareto_lomax(ALPHA, 1.0 / ALPHA).unwrap(), NormKind::Linf),
        (FamilyParams::radial_pareto_lomax(ALPHA, 3).unwrap(), NormKind::Linf),
    ]
}

/// Empirical `P(A)` with its binomial standard error.
fn proportion(sample: &SampleMatrix, event: impl Fn(&[f64]) -> bool) -> (f64, f64) {
    let n = sample.rows() as f64;
    let p = sample.iter_rows().filter(|r| event(r)).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt().max(1.0 / n))
}

#[test]
fn mv_pareto_lomax_component_means() {
    let p = FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap();
    let s = p.sample(1_000_000, 11).unwrap();
    // Var X_j = α/((α−1)²(α−2)) is finite, so the SE is meaningful.
    let var = ALPHA / ((ALPHA - 1.0).powi(2) * (ALPHA - 2.0));
    let se = (var / s.rows() as f64).sqrt();
    for (j, m) in s.mean().iter().enumerate() {
        assert!((m - 1.0 / (ALPHA - 1.0)).abs() < 3.0 * se, "component {j}: mean {m}");
    }
}

#[test]
fn indep_marginal_exceedance() {
    let p = FamilyParams::indep_pareto_lomax(ALPHA, 3).unwrap();
    let s = p.sample(1_000_000, 12).unwrap();
    let (est, se) = proportion(&s, |r| r[0] > 1.0);
    assert!((est - 2f64.powf(-ALPHA)).abs() < 3.0 * se, "{est}");
}

#[test]
fn clayton_joint_survival_at_one() {
    let p = FamilyParams::clayton_pareto_lomax(ALPHA, 1.0 / ALPHA).unwrap();
    let s = p.sample(1_000_000, 13).unwrap();
    let (est, se) = proportion(&s, |r| r[0] > 1.0 && r[1] > 1.0);
    let exact = p.joint_survival(&[1.0, 1.0]).unwrap();
    assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact}");
}

#[test]
fn sampler_matches_joint_survival_on_grid() {
    let grid: Vec<f64> = vec![0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.5, 4.0, 8.0];
    for (p, _) in families() {
        if p.joint_survival(&vec![0.0; p.dim()]).is_err() {
            continue;
        }
        let s = p.sample(1_000_000, 21).unwrap();
        for &x in &grid {
            // mix of diagonal and lopsided points
            let point: Vec<f64> = (0..p.dim()).map(|i| if i == 0 { x } else { x / (1 + i) as f64 }).collect();
            let exact = p.joint_survival(&point).unwrap();
            let (est, se) = proportion(&s, |r| r.iter().zip(&point).all(|(a, b)| a > b));
            assert!((est - exact).abs() < 4.0 * se, "{:?} at {point:?}: {est} vs {exact}", p.family());
        }
    }
}

#[test]
fn sampler_matches_norm_cdf_on_grid() {
    let grid = [0.1, 0.3, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0];
    for (p, norm) in families() {
        let s = p.sample(1_000_000, 22).unwrap();
        for &y in &grid {
            let exact = p.norm_cdf(norm, y).unwrap();
            let (est, se) = proportion(&s, |r| norm.eval(r) <= y);
            assert!((est - exact).abs() < 4.0 * se, "{:?} at y={y}: {est} vs {exact}", p.family());
        }
    }
}

#[test]
fn mv_pareto_lomax_norm_cdf_at_one() {
    let p = FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap();
    let exact = p.norm_cdf(NormKind::L1, 1.0).unwrap();
    let three_term = mv_pareto_lomax_l1_d3_cdf(ALPHA, 1.0);
    assert!((exact - three_term).abs() < 1e-12);
    let s = p.sample(1_000_000, 23).unwrap();
    let (est, se) = proportion(&s, |r| NormKind::L1.eval(r) <= 1.0);
    assert!((est - exact).abs() < 3.0 * se);
}

#[test]
fn three_term_and_gamma_sum_agree_on_log_grid() {
    for i in 0..=50 {
        let y = 10f64.powf(-1.0 + 5.0 * i as f64 / 50.0);
        let a = mv_pareto_lomax_l1_d3_cdf(ALPHA, y);
        let b = radial_norm_cdf_gamma_sum(ALPHA, 3, y);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-16, "y={y}: {a} vs {b}");
    }
}

#[test]
fn indep_theta_weights_are_uniform() {
    let p = FamilyParams::indep_pareto_lomax(ALPHA, 3).unwrap();
    let t = p.sample_theta(NormKind::Linf, 100_000, 31).unwrap();
    for i in 0..3 {
        let (est, se) = proportion(&t, |r| r[i] == 1.0);
        assert!((est - 1.0 / 3.0).abs() < 3.0 * se, "e_{i}: {est}");
    }
    // every row is a basis vector
    assert!(t.iter_rows().all(|r| r.iter().filter(|v| **v == 0.0).count() == 2));
}

fn clayton_free_coordinate(t: &SampleMatrix) -> Vec<f64> {
    t.iter_rows().map(|r| r[0].min(r[1])).collect()
}

#[test]
fn clayton_theta_matches_face_density() {
    let p = FamilyParams::clayton_pareto_lomax(ALPHA, 1.0 / ALPHA).unwrap();
    let t = p.sample_theta(NormKind::Linf, 100_000, 32).unwrap();
    let free = clayton_free_coordinate(&t);
    let norm = 1.0 - 2f64.powf(-(ALPHA + 1.0));
    let cdf = |x: f64| (1.0 - (1.0 + x).powf(-(ALPHA + 1.0))) / norm;
    let ks = ks_one_sample(&free, cdf).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
    // closed-form density agrees with the one used by the sampler
    for x in [0.0f64, 0.3, 0.7, 1.0] {
        let dens = (ALPHA + 1.0) * (1.0 + x).powf(-(ALPHA + 2.0)) / norm;
        assert!((clayton_face_density(ALPHA, 1.0 / ALPHA, x) - dens).abs() < 1e-12 * dens);
    }
    // faces are chosen evenly
    let (est, se) = proportion(&t, |r| r[0] == 1.0);
    assert!((est - 0.5).abs() < 3.0 * se);
}

#[test]
fn clayton_theta_close_to_empirical_directions() {
    let p = FamilyParams::clayton_pareto_lomax(ALPHA, 1.0 / ALPHA).unwrap();
    let exact = clayton_free_coordinate(&p.sample_theta(NormKind::Linf, 100_000, 33).unwrap());
    let emp = p.sample_theta_empirical(NormKind::Linf, 2_000, 0.999, 34).unwrap();
    assert!(emp.threshold > 0.0);
    let ks = ks_two_sample(&exact, &clayton_free_coordinate(&emp.directions)).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?} at threshold {}", emp.threshold);
}

#[test]
fn mv_pareto_lomax_theta_is_simplex_uniform() {
    let p = FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap();
    let simplex = p.sample_theta(NormKind::L1, 100_000, 35).unwrap();
    let emp = p.sample_theta_empirical(NormKind::L1, 5_000, 0.999, 36).unwrap();
    for j in 0..3 {
        let ks = ks_two_sample(&simplex.column(j), &emp.directions.column(j)).unwrap();
        assert!(ks.p_value > 0.01, "component {j}: {ks:?}");
        // a simplex-uniform coordinate in d=3 is Beta(1,2)
        let ks = ks_one_sample(&simplex.column(j), |x| 1.0 - (1.0 - x).powi(2)).unwrap();
        assert!(ks.p_value > 0.01, "component {j}: {ks:?}");
    }
}

#[test]
fn theta_rows_lie_on_the_unit_sphere() {
    for (p, norm) in families() {
        let t = p.sample_theta(norm, 10_000, 37).unwrap();
        for r in t.iter_rows() {
            assert!((norm.eval(r) - 1.0).abs() < 1e-12, "{:?}: {r:?}", p.family());
            assert!(r.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn norming_constants_examples() {
    let p = FamilyParams::indep_pareto_lomax(ALPHA, 3).unwrap();
    let c = p.norming_constants(NormKind::Linf, 52, Default::default()).unwrap();
    assert!((c.scale - 156f64.powf(1.0 / ALPHA)).abs() < 1e-12 * c.scale);
    assert_eq!(c.shift, -1.0);
    let clayton = FamilyParams::clayton_pareto_lomax(1.0, 1.0).unwrap();
    assert!((clayton.tail_constant(NormKind::Linf).unwrap() - 1.5).abs() < 1e-15);
}

#[test]
fn frechet_inverse_on_grid() {
    for i in 1..=99 {
        let u = i as f64 / 100.0;
        let x = frechet_quantile(ALPHA, u).unwrap();
        assert!((frechet_cdf(ALPHA, x).unwrap() - u).abs() < 1e-12);
    }
    let q = frechet_quantile(2.0, 0.5).unwrap();
    assert!((q - 2f64.ln().powf(-0.5)).abs() < 1e-12);
    assert!((frechet_cdf(ALPHA, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
}

fn any_family() -> impl Strategy<Value = (FamilyParams, NormKind)> {
    (0usize..4, 0.5f64..4.0, 1usize..5, 0.2f64..3.0).prop_map(|(k, a, d, th)| match k {
        0 => (FamilyParams::mv_pareto_lomax(a, d).unwrap(), NormKind::L1),
        1 => (FamilyParams::indep_pareto_lomax(a, d).unwrap(), NormKind::Linf),
        2 => (FamilyParams::clayton_pareto_lomax(a, th).unwrap(), NormKind::Linf),
        _ => (FamilyParams::radial_pareto_lomax(a, d).unwrap(), NormKind::Linf),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_cdf_is_monotone((p, norm) in any_family(), ys in proptest::collection::vec(0.0f64..1e4, 2..20)) {
        let mut ys = ys;
        ys.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for y in ys {
            let f = p.norm_cdf(norm, y).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f >= prev, "{:?}: F({y}) = {f} < {prev}", p.family());
            prev = f;
        }
        prop_assert_eq!(p.norm_cdf(norm, 0.0).unwrap(), 0.0);
        prop_assert!(p.norm_cdf(norm, 1e300).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn sampling_is_deterministic((p, _) in any_family(), count in 1usize..3000, seed in any::<u64>()) {
        let a = p.sample(count, seed).unwrap();
        let b = p.sample(count, seed).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn clayton_margins_are_consistent(a in 0.3f64..5.0, th in 0.1f64..5.0, x in 0.0f64..100.0) {
        let p = FamilyParams::clayton_pareto_lomax(a, th).unwrap();
        let m = p.marginal_survival(x).unwrap();
        prop_assert_eq!(p.joint_survival(&[x, 0.0]).unwrap(), m);
        prop_assert_eq!(p.joint_survival(&[0.0, x]).unwrap(), m);
    }

    #[test]
    fn frechet_quantile_inverts_cdf(a in 0.3f64..6.0, u in 0.001f64..0.999) {
        let x = frechet_quantile(a, u).unwrap();
        prop_assert!((frechet_cdf(a, x).unwrap() - u).abs() < 1e-12);
    }

    #[test]
    fn norming_scale_is_a_power_law((p, norm) in any_family(), n in 1u64..100_000) {
        let a1 = p.norming_constants(norm, n, Default::default()).unwrap().scale;
        let a2 = p.norming_constants(norm, 2 * n, Default::default()).unwrap().scale;
        prop_assert!((a2 / a1 - 2f64.powf(1.0 / p.alpha())).abs() < 1e-12);
    }
}
