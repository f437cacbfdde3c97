//! Concrete dually flat models and the refractive index they induce.

mod finite;
mod gamma;
mod gaussian;
pub mod special;

use std::sync::Arc;

pub use finite::FiniteExpFamily;
pub use gamma::{gamma_index, shape_from_eta, GammaModel, GammaParams};
pub use gaussian::{GaussianModel, GaussianParams, GAUSSIAN_INDEX};
pub use special::polygamma;

use crate::error::{Error, Result};
use crate::manifold::{dual_pair, quad, Chart, CoordVector, DuallyFlat};

pub fn gaussian_model() -> GaussianModel {
    GaussianModel::new()
}

pub fn gamma_model() -> GammaModel {
    GammaModel::new()
}

pub fn finite_exp_family(stats: Vec<Vec<f64>>) -> Result<FiniteExpFamily> {
    FiniteExpFamily::new(stats)
}

/// Built-in model ids, in listing order.
pub const BUILTIN_MODELS: [&str; 2] = ["gaussian", "gamma"];

/// Resolves `"gaussian"`, `"gamma"` or `"finite:<path-to-json>"`.
pub fn model_by_id(id: &str) -> Result<Arc<dyn DuallyFlat>> {
    match id {
        "gaussian" => Ok(Arc::new(GaussianModel::new())),
        "gamma" => Ok(Arc::new(GammaModel::new())),
        _ => match id.strip_prefix("finite:") {
            Some(path) if !path.is_empty() => Ok(Arc::new(FiniteExpFamily::from_path(path)?)),
            _ => Err(Error::UnknownModel(id.to_string())),
        },
    }
}

/// `n(eta) = sqrt(g_ij(eta) theta^i theta^j)` for an eta-point and
/// `n*(theta) = sqrt(g^ij(theta) eta_i eta_j)` for a theta-point.
pub fn refractive_index(model: &dyn DuallyFlat, x: &CoordVector) -> Result<f64> {
    let (theta, eta) = dual_pair(model, x)?;
    let sq = match x.chart {
        Chart::Eta => quad(&model.metric_lower_eta(&eta), &theta, &theta),
        Chart::Theta => quad(&model.metric_upper_theta(&theta), &eta, &eta),
    };
    if sq.is_finite() && sq >= 0.0 {
        Ok(sq.sqrt())
    } else {
        Err(Error::NonFinite("refractive_index"))
    }
}

/// `n^2(eta)` from raw eta-coordinates, no domain check.
pub(crate) fn index_sq_eta(model: &dyn DuallyFlat, eta: &[f64]) -> f64 {
    let theta = model.theta_of_eta(eta);
    quad(&model.metric_lower_eta(eta), &theta, &theta)
}

/// `n*^2(theta)` from raw theta-coordinates, no domain check.
pub(crate) fn index_sq_theta(model: &dyn DuallyFlat, theta: &[f64]) -> f64 {
    let eta = model.eta_of_theta(theta);
    quad(&model.metric_upper_theta(theta), &eta, &eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{
        coord_map, fd_gradient_check, legendre_residual, metric_at, metric_duality_residual,
        mat_vec,
    };
    use std::f64::consts::PI;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gaussian_coord_map() {
        let g = gaussian_model();
        let th = coord_map(&g, &CoordVector::eta(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(th.chart, Chart::Theta);
        assert!(close(&th.values, &[0.0, -0.5], 1e-15));
        let eta = coord_map(&g, &CoordVector::theta(vec![0.0, -0.5]).unwrap()).unwrap();
        assert!(close(&eta.values, &[0.0, 1.0], 1e-15));
        let p = GaussianParams::new(1.0, 1.0).unwrap();
        assert!(close(&p.eta(), &[1.0, 2.0], 0.0));
        let p = GaussianParams::new(2.0, 4.0).unwrap();
        assert!(close(&p.theta(), &[0.5, -0.125], 0.0));
    }

    #[test]
    fn gaussian_potential_at_standard_normal() {
        let g = gaussian_model();
        let v = g.psi_star(&[0.0, 1.0]);
        assert!((v + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).abs() < 1e-15);
        assert!((v + 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn gamma_coord_map() {
        let m = gamma_model();
        // (beta, nu) = (1, 1): eta = (1, phi(1)) = (1, -gamma)
        let eta = CoordVector::eta(vec![1.0, -EULER_GAMMA]).unwrap();
        let th = coord_map(&m, &eta).unwrap();
        assert!(close(&th.values, &[-1.0, 0.0], 1e-12), "{:?}", th.values);
        let p = GammaParams::new(2.0, 3.0).unwrap();
        assert!(close(&p.theta(), &[-2.0, 2.0], 0.0));
        assert_eq!(p.eta()[0], 1.5);
    }

    #[test]
    fn gamma_inversion_over_wide_range() {
        for &nu in &[1e-3, 0.05, 0.5, 1.0, 3.0, 30.0, 1e3, 1e5] {
            for &beta in &[0.01, 1.0, 50.0] {
                let p = GammaParams::new(beta, nu).unwrap();
                let back = GammaParams::from_eta(&p.eta());
                // conditioning of phi(nu) - ln nu degrades like 1/nu
                assert!((back.nu - nu).abs() <= 1e-12 * nu * (1.0 + nu), "nu={nu}: {}", back.nu);
                assert!((back.beta - beta).abs() <= 1e-12 * beta * (1.0 + nu));
            }
        }
    }

    #[test]
    fn metrics_at_reference_points() {
        let g = gaussian_model();
        let m = metric_at(&g, &CoordVector::eta(GaussianParams::new(0.0, 1.0).unwrap().eta()).unwrap())
            .unwrap();
        assert!(close(m.as_matrix().as_slice(), &[1.0, 0.0, 0.0, 2.0], 1e-15));
        let m = metric_at(&g, &CoordVector::theta(vec![0.0, -0.5]).unwrap()).unwrap();
        assert!(close(m.as_matrix().as_slice(), &[1.0, 0.0, 0.0, 0.5], 1e-15));

        let gm = gamma_model();
        let eta = GammaParams::new(1.0, 1.0).unwrap().eta();
        let m = metric_at(&gm, &CoordVector::eta(eta).unwrap()).unwrap();
        let z2 = PI * PI / 6.0;
        assert!(close(m.as_matrix().as_slice(), &[1.0, 1.0, 1.0, z2], 1e-12));
        // prefactor 1/(nu phi'(nu) - 1) of the inverse metric at (1, 1)
        let up = gm.metric_upper_theta(&[-1.0, 0.0]);
        assert!((up[(1, 1)] - 1.0 / (z2 - 1.0)).abs() < 1e-12);
        assert!((up[(0, 0)] - z2 / (z2 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn legendre_residuals() {
        let g = gaussian_model();
        let th = CoordVector::theta(GaussianParams::new(0.7, 2.3).unwrap().theta()).unwrap();
        assert!(legendre_residual(&g, &th).unwrap() < 1e-10);
        let gm = gamma_model();
        let th = CoordVector::theta(GammaParams::new(2.0, 3.0).unwrap().theta()).unwrap();
        assert!(legendre_residual(&gm, &th).unwrap() < 1e-10);
    }

    #[test]
    fn duality_residuals() {
        let g = gaussian_model();
        let x = CoordVector::eta(GaussianParams::new(1.0, 2.0).unwrap().eta()).unwrap();
        assert!(metric_duality_residual(&g, &x).unwrap() < 1e-10);
        let gm = gamma_model();
        let x = CoordVector::eta(GammaParams::new(0.5, 4.0).unwrap().eta()).unwrap();
        assert!(metric_duality_residual(&gm, &x).unwrap() < 1e-10);
        let bad = GammaModel::with_trigamma_perturbation(1e-3);
        assert!(metric_duality_residual(&bad, &x).unwrap() > 1e-4);
        let bad = GaussianModel::with_lower_metric_scale(0.5);
        let x = CoordVector::eta(GaussianParams::new(0.3, 1.7).unwrap().eta()).unwrap();
        assert!((metric_duality_residual(&bad, &x).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fd_gradient_checks() {
        let g = gaussian_model();
        let x = CoordVector::eta(GaussianParams::new(0.0, 1.0).unwrap().eta()).unwrap();
        assert!(fd_gradient_check(&g, &x, 1e-5).unwrap() < 1e-7);
        let gm = gamma_model();
        let x = CoordVector::eta(GammaParams::new(1.0, 2.0).unwrap().eta()).unwrap();
        assert!(fd_gradient_check(&gm, &x, 1e-5).unwrap() < 1e-7);
        let xt = CoordVector::theta(GammaParams::new(1.0, 2.0).unwrap().theta()).unwrap();
        assert!(fd_gradient_check(&gm, &xt, 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn fd_gradient_is_second_order() {
        let gm = gamma_model();
        let x = CoordVector::eta(GammaParams::new(1.0, 2.0).unwrap().eta()).unwrap();
        let coarse = fd_gradient_check(&gm, &x, 1e-2).unwrap();
        let fine = fd_gradient_check(&gm, &x, 1e-4).unwrap();
        let ratio = coarse / fine;
        assert!(ratio > 0.8e4 && ratio < 1.2e4, "ratio {ratio}");
    }

    #[test]
    fn fd_gradient_rejects_domain_exit() {
        let g = gaussian_model();
        // sigma2 = 1e-6; stepping eta_2 down by 1e-5 leaves the domain
        let x = CoordVector::eta(vec![0.0, 1e-6]).unwrap();
        assert!(matches!(fd_gradient_check(&g, &x, 1e-5), Err(Error::Domain(_))));
    }

    #[test]
    fn refractive_indices() {
        let g = gaussian_model();
        for &(mu, s2) in &[(0.0, 1.0), (2.0, 0.3), (-1.5, 7.0)] {
            let x = CoordVector::eta(GaussianParams::new(mu, s2).unwrap().eta()).unwrap();
            let n = refractive_index(&g, &x).unwrap();
            assert!((n - GAUSSIAN_INDEX).abs() < 1e-12);
        }
        // mu = sigma gives n* = 1
        let p = GaussianParams::new(1.5, 2.25).unwrap();
        let nt = refractive_index(&g, &CoordVector::theta(p.theta()).unwrap()).unwrap();
        assert!((nt - 1.0).abs() < 1e-12);
        assert!((p.theta_chart_index() - 1.0).abs() < 1e-15);

        let gm = gamma_model();
        for &beta in &[0.3, 1.0, 4.0] {
            let x = CoordVector::eta(GammaParams::new(beta, 1.0).unwrap().eta()).unwrap();
            assert!((refractive_index(&gm, &x).unwrap() - 1.0).abs() < 1e-12);
        }
        let n_a = refractive_index(&gm, &CoordVector::eta(GammaParams::new(0.5, 3.7).unwrap().eta()).unwrap()).unwrap();
        let n_b = refractive_index(&gm, &CoordVector::eta(GammaParams::new(4.5, 3.7).unwrap().eta()).unwrap()).unwrap();
        assert!((n_a - n_b).abs() < 1e-12);
        assert!((n_a - gamma_index(3.7)).abs() < 1e-12);
    }

    #[test]
    fn index_matches_gradient_flow_speed() {
        // n^2 = g^ij(eta) (deta/dt)_i (deta/dt)_j with deta/dt = -g(eta) theta
        let gm = gamma_model();
        let p = GammaParams::new(1.3, 2.2).unwrap();
        let eta = p.eta();
        let theta = p.theta();
        let v: Vec<f64> = mat_vec(&gm.metric_lower_eta(&eta), &theta).iter().map(|x| -x).collect();
        let lhs = quad(&gm.metric_upper_theta(&theta), &v, &v);
        assert!((lhs - gamma_index(2.2).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_family() {
        let b = finite_exp_family(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!((b.eta_of_theta(&[0.0])[0] - 0.5).abs() < 1e-15);
        let g = b.metric_lower_eta(&[0.5]);
        assert!((g[(0, 0)] - 0.25).abs() < 1e-15);
        let three = finite_exp_family(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(close(&three.eta_of_theta(&[0.0, 0.0]), &[1.0 / 3.0, 1.0 / 3.0], 1e-15));
    }

    #[test]
    fn finite_family_rejects_degenerate_stats() {
        assert!(matches!(finite_exp_family(vec![vec![1.0]]), Err(Error::Identifiability(_))));
        assert!(matches!(
            finite_exp_family(vec![vec![0.0], vec![1.0], vec![1.0]]),
            Err(Error::Identifiability(_))
        ));
        // F_2 = 2 F_1 is collinear
        assert!(matches!(
            finite_exp_family(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]]),
            Err(Error::Identifiability(_))
        ));
        // constant statistic
        assert!(matches!(
            finite_exp_family(vec![vec![1.0, 0.0], vec![1.0, 1.0]]),
            Err(Error::Identifiability(_))
        ));
    }

    #[test]
    fn finite_family_eta_outside_hull() {
        let b = finite_exp_family(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(b.check(&CoordVector::eta(vec![1.2]).unwrap()).is_err());
        assert!(b.check(&CoordVector::eta(vec![0.3]).unwrap()).is_ok());
    }

    #[test]
    fn finite_family_metric_is_brute_force_covariance() {
        let fam = finite_exp_family(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![2.0, -1.0],
        ])
        .unwrap();
        let theta = [0.4, -0.9];
        // brute force: explicit weights, no shared helpers
        let w: Vec<f64> = fam.stats().iter().map(|f| (theta[0] * f[0] + theta[1] * f[1]).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut mean = [0.0; 2];
        for (wi, f) in w.iter().zip(fam.stats()) {
            mean[0] += wi / z * f[0];
            mean[1] += wi / z * f[1];
        }
        let eta = fam.eta_of_theta(&theta);
        assert!(close(&eta, &mean, 1e-14));
        let g = fam.metric_lower_eta(&eta);
        for i in 0..2 {
            for j in 0..2 {
                let mut c = 0.0;
                for (wi, f) in w.iter().zip(fam.stats()) {
                    c += wi / z * (f[i] - mean[i]) * (f[j] - mean[j]);
                }
                assert!((g[(i, j)] - c).abs() < 1e-12);
            }
        }
        let x = CoordVector::eta(eta).unwrap();
        assert!(metric_duality_residual(&fam, &x).unwrap() < 1e-10);
        assert!(fd_gradient_check(&fam, &x, 1e-5).unwrap() < 1e-7);
        let xt = CoordVector::theta(theta.to_vec()).unwrap();
        assert!(legendre_residual(&fam, &xt).unwrap() < 1e-12);
    }

    #[test]
    fn analytic_metric_gradients_match_finite_differences() {
        use crate::manifold::central_matrix_grad;
        let models: Vec<(Box<dyn DuallyFlat>, Vec<f64>)> = vec![
            (Box::new(gaussian_model()), GaussianParams::new(0.8, 1.9).unwrap().theta()),
            (Box::new(gamma_model()), GammaParams::new(1.7, 2.6).unwrap().theta()),
            (
                Box::new(finite_exp_family(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()),
                vec![0.3, -0.6],
            ),
        ];
        for (model, theta) in models {
            let eta = model.eta_of_theta(&theta);
            let a = model.metric_lower_eta_grad(&eta);
            let f = central_matrix_grad(&eta, |x| model.metric_lower_eta(x));
            for (x, y) in a.iter().zip(&f) {
                assert!((x - y).amax() < 1e-6 * x.amax().max(1.0), "{}: {x} vs {y}", model.id());
            }
            let a = model.metric_upper_theta_grad(&theta);
            let f = central_matrix_grad(&theta, |x| model.metric_upper_theta(x));
            for (x, y) in a.iter().zip(&f) {
                assert!((x - y).amax() < 1e-6 * x.amax().max(1.0), "{}: {x} vs {y}", model.id());
            }
        }
    }

    #[test]
    fn model_lookup() {
        assert_eq!(model_by_id("gaussian").unwrap().id(), "gaussian");
        assert_eq!(model_by_id("gamma").unwrap().id(), "gamma");
        assert!(matches!(model_by_id("poisson"), Err(Error::UnknownModel(_))));
        assert!(matches!(model_by_id("finite:"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn domain_errors_name_the_predicate() {
        let g = gaussian_model();
        let err = coord_map(&g, &CoordVector::eta(vec![1.0, 0.5]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("eta_2 - eta_1^2 > 0"), "{err}");
        let gm = gamma_model();
        let err = coord_map(&gm, &CoordVector::theta(vec![1.0, 0.5]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("beta > 0"), "{err}");
    }
}
