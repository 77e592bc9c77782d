use mixed_whittle::aep::AepParams;
use mixed_whittle::covariance::CovarianceSpec;
use mixed_whittle::design::{irf_weights, DesignComponent, DesignSpec, IrfParams};
use mixed_whittle::estimate::{fit, Method, ModelSpec};
use mixed_whittle::optim::OptimConfig;
use mixed_whittle::predict::simple_krige;
use mixed_whittle::spectral::{periodogram, ObservedSeries};
use proptest::prelude::*;

fn matern() -> impl Strategy<Value = CovarianceSpec> {
    (0.0..0.5f64, 0.2..3.0f64, 0.5..15.0f64, 0.3..3.0f64).prop_map(|(a, b, c, d)| CovarianceSpec::matern(a, b, c, d))
}

/// Smallest pivot of an unpivoted Cholesky, or None when it breaks down.
fn cholesky_min_pivot(a: &[Vec<f64>]) -> Option<f64> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                min = min.min(d);
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(min)
}

fn intercept_fit(alpha: CovarianceSpec, n: usize) -> mixed_whittle::estimate::ModelFit {
    let mut spec = ModelSpec::new(DesignSpec::new(vec![DesignComponent::Intercept]).unwrap(), alpha.family, Method::Exact);
    for &p in alpha.family.params() {
        spec = spec.with_fixed(p, alpha.get(p));
    }
    let x: Vec<f64> = (0..n).map(|t| if t % 2 == 0 { 0.01 } else { -0.01 }).collect();
    let mut f = fit(&ObservedSeries::complete(x).unwrap(), None, &spec, &OptimConfig { restarts: 1, ..Default::default() }).unwrap();
    f.beta = vec![0.0];
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn acv_is_positive_definite_and_peaks_at_zero(cov in matern(), n in 2usize..40) {
        let acv = cov.acv_sequence(n).unwrap();
        prop_assert!(acv.iter().all(|c| c.abs() <= acv[0] + 1e-12));
        let c: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| acv[i.abs_diff(j)] + if i == j { 1e-9 } else { 0.0 }).collect()).collect();
        prop_assert!(cholesky_min_pivot(&c).is_some());
    }

    #[test]
    fn irf_weights_sum_to_one(shape in 0.2..20.0f64, rate in 0.01..2.0f64, window in 1usize..200) {
        let w = irf_weights(IrfParams::new(shape, rate).unwrap(), window).unwrap();
        prop_assert_eq!(w.len(), window);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodogram_satisfies_parseval(y in prop::collection::vec(-10.0..10.0f64, 1..100)) {
        let i = periodogram(&y).unwrap();
        let energy: f64 = y.iter().map(|v| v * v).sum();
        prop_assert!((i.iter().sum::<f64>() - energy).abs() <= 1e-9 * energy.max(1.0));
    }

    #[test]
    fn aep_cdf_is_monotone(mu in -2.0..2.0f64, sigma in 0.2..3.0f64, vs in 0.05..0.95f64, p1 in 0.5..4.0f64, p2 in 0.5..4.0f64,
                           mut z in prop::collection::vec(-15.0..15.0f64, 2..40)) {
        let p = AepParams::new(mu, sigma, vs, p1, p2).unwrap();
        z.sort_by(f64::total_cmp);
        let f: Vec<f64> = z.iter().map(|&v| p.cdf(v)).collect();
        prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn kriging_variance_shrinks_with_more_data(cov in matern(), seed in 0u64..1000) {
        let n = 24;
        let f = intercept_fit(cov, n);
        let x: Vec<f64> = (0..n).map(|t| ((t as u64 * 2654435761 + seed) % 97) as f64 / 50.0 - 1.0).collect();
        let mut mask = vec![true; n];
        for t in [3, 4, 10, 17] { mask[t] = false; }
        let before = simple_krige(&f, &ObservedSeries::new(x.clone(), mask.clone()).unwrap(), None, &[4], None).unwrap();
        mask[3] = true;
        let after = simple_krige(&f, &ObservedSeries::new(x, mask).unwrap(), None, &[4], None).unwrap();
        prop_assert!(after.variance[0] <= before.variance[0] + 1e-12);
        prop_assert!(before.variance[0] <= cov.total_variance() + 1e-12);
    }

    #[test]
    fn values_at_missing_positions_do_not_matter(cov in matern(), fill in -1e6..1e6f64) {
        let n = 20;
        let f = intercept_fit(cov, n);
        let x: Vec<f64> = (0..n).map(|t| (t as f64 * 0.7).sin()).collect();
        let mut mask = vec![true; n];
        mask[8] = false;
        let mut y = x.clone();
        y[8] = fill;
        let a = simple_krige(&f, &ObservedSeries::new(x, mask.clone()).unwrap(), None, &[8, 21], None).unwrap();
        let b = simple_krige(&f, &ObservedSeries::new(y, mask).unwrap(), None, &[8, 21], None).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.variance, b.variance);
    }
}
