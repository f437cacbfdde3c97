use super::integrator::{solve_ode, IntegratorConfig};
use super::trajectory::{DualState, Driver, Sample, Series, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::{mat_vec, quad, Chart, CoordVector, DuallyFlat};

pub(crate) fn check_span(span: (f64, f64)) -> Result<()> {
    if !(span.0.is_finite() && span.1.is_finite()) || span.1 < span.0 {
        return Err(Error::InvalidConfig(format!(
            "span [{}, {}] must be finite with start <= end",
            span.0, span.1
        )));
    }
    Ok(())
}

/// Integrates the gradient flow in the chart of `x0` over `t_span`.
///
/// In the eta-chart this is `d eta/dt = -g(eta) theta(eta)`, in the
/// theta-chart `d theta/dt = g(theta) eta(theta)`. The arc length and the
/// JM parameter are accumulated alongside as `ds = n dt`, `d tau = n^2 dt`
/// and both start at zero.
pub fn gradient_flow(
    model: &dyn DuallyFlat,
    x0: &CoordVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_span(t_span)?;
    model.check(x0)?;
    let m = model.dim();
    let chart = x0.chart;
    let mut y0 = x0.values.clone();
    y0.extend([0.0, 0.0]);

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let x = &y[..m];
        let (metric, dual) = match chart {
            Chart::Eta => (model.metric_lower_eta(x), model.theta_of_eta(x)),
            Chart::Theta => (model.metric_upper_theta(x), model.eta_of_theta(x)),
        };
        let v = mat_vec(&metric, &dual);
        let sign = if chart == Chart::Eta { -1.0 } else { 1.0 };
        for i in 0..m {
            dy[i] = sign * v[i];
        }
        let n2 = quad(&metric, &dual, &dual);
        dy[m] = n2.max(0.0).sqrt();
        dy[m + 1] = n2;
    };
    let admissible = |y: &[f64]| match chart {
        Chart::Eta => model.check_eta(&y[..m]).is_ok(),
        Chart::Theta => model.check_theta(&y[..m]).is_ok(),
    };
    let sol = solve_ode(rhs, admissible, t_span.0, &y0, t_span.1, cfg)?;

    let samples = sol
        .xs
        .iter()
        .zip(&sol.ys)
        .map(|(&t, y)| {
            let x = y[..m].to_vec();
            let state = match chart {
                Chart::Eta => DualState {
                    theta: model.theta_of_eta(&x),
                    eta: x,
                },
                Chart::Theta => DualState {
                    eta: model.eta_of_theta(&x),
                    theta: x,
                },
            };
            Sample {
                t,
                s: y[m],
                tau: y[m + 1],
                state,
            }
        })
        .collect();
    Ok(Trajectory {
        driver: match chart {
            Chart::Eta => Driver::GradientEta,
            Chart::Theta => Driver::GradientTheta,
        },
        model: model.id(),
        termination: sol.termination,
        config: *cfg,
        samples,
    })
}

/// Solution of the linearized flow: `theta0 e^{-t}` or `eta0 e^{t}`.
pub fn linear_flow_closed_form(x0: &CoordVector, t: f64) -> CoordVector {
    let factor = match x0.chart {
        Chart::Theta => (-t).exp(),
        Chart::Eta => t.exp(),
    };
    CoordVector {
        chart: x0.chart,
        values: x0.values.iter().map(|v| v * factor).collect(),
    }
}

/// Numerically integrates `d theta/dt = -theta` or `d eta/dt = eta`.
pub fn linear_flow(x0: &CoordVector, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Series> {
    check_span(t_span)?;
    let sign = match x0.chart {
        Chart::Theta => -1.0,
        Chart::Eta => 1.0,
    };
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        for (d, v) in dy.iter_mut().zip(y) {
            *d = sign * v;
        }
    };
    let sol = solve_ode(rhs, |_| true, t_span.0, &x0.values, t_span.1, cfg)?;
    Ok(Series {
        t: sol.xs,
        values: sol.ys,
    })
}

/// Componentwise products `c_i(t) = theta^i(t) eta_i(t)` on a shared grid.
pub fn integrability_products(theta: &Series, eta: &Series) -> Result<Series> {
    if theta.t.len() != eta.t.len() {
        return Err(Error::GridMismatch(format!(
            "{} theta samples vs {} eta samples",
            theta.t.len(),
            eta.t.len()
        )));
    }
    for (k, (a, b)) in theta.t.iter().zip(&eta.t).enumerate() {
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::GridMismatch(format!("time {a} vs {b} at sample {k}")));
        }
    }
    let values = theta
        .values
        .iter()
        .zip(&eta.values)
        .map(|(th, et)| {
            if th.len() != et.len() {
                return Err(Error::Dimension {
                    expected: th.len(),
                    got: et.len(),
                });
            }
            Ok(th.iter().zip(et).map(|(a, b)| a * b).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Series {
        t: theta.t.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gamma_model, gaussian_model, GammaParams, GaussianParams, GAUSSIAN_INDEX};

    #[test]
    fn gaussian_eta_flow_doubles_variance() {
        let model = gaussian_model();
        let x0 = CoordVector::eta(GaussianParams::new(1.0, 1.0).unwrap().eta()).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 2f64.ln()), &IntegratorConfig::default()).unwrap();
        let last = traj.last();
        assert!((last.state.eta[0] - 1.0).abs() < 1e-9);
        assert!((last.state.eta[1] - 3.0).abs() < 1e-6);
        // constant index: s = t / sqrt(2), tau = t / 2
        assert!((last.s - last.t * GAUSSIAN_INDEX).abs() < 1e-12);
        assert!((last.tau - last.t * 0.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_eta_flow_closed_form() {
        let model = gamma_model();
        let x0 = CoordVector::eta(GammaParams::new(2.0, 3.0).unwrap().eta()).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 2f64.ln()), &IntegratorConfig::default()).unwrap();
        let p = GammaParams::from_eta(&traj.last().state.eta);
        assert!((p.beta - 1.0).abs() < 1e-6, "{p:?}");
        assert!((p.nu - 2.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn theta_flow_fixed_point_at_zero_eta() {
        // Bernoulli with F = (-1, 1): eta(0) = 0
        let model = crate::models::finite_exp_family(vec![vec![-1.0], vec![1.0]]).unwrap();
        let x0 = CoordVector::theta(vec![0.0]).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        assert!(traj.samples.iter().all(|s| s.state.theta[0] == 0.0));
    }

    #[test]
    fn zero_span_single_sample() {
        let model = gaussian_model();
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let traj = gradient_flow(&model, &x0, (0.5, 0.5), &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.first().state.eta, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_out_of_domain_start() {
        let model = gaussian_model();
        let x0 = CoordVector::eta(vec![1.0, 0.5]).unwrap();
        let err = gradient_flow(&model, &x0, (0.0, 1.0), &IntegratorConfig::default()).unwrap_err();
        assert!(err.to_string().contains("eta_2 - eta_1^2 > 0"), "{err}");
    }

    #[test]
    fn gaussian_theta_flow_exits_domain() {
        // (mu, sigma2) = (1, 4): sigma2(t) = 5 e^t - e^{2t} hits 0 at ln 5
        let model = gaussian_model();
        let x0 = CoordVector::theta(GaussianParams::new(1.0, 4.0).unwrap().theta()).unwrap();
        let cfg = IntegratorConfig::default();
        assert!(matches!(
            gradient_flow(&model, &x0, (0.0, 3.0), &cfg),
            Err(Error::DomainExit { .. })
        ));
        let traj = gradient_flow(&model, &x0, (0.0, 3.0), &cfg.truncating()).unwrap();
        // the theta-chart exit is a blow-up, so a fixed step may overshoot slightly
        let end = traj.last().t;
        assert!((end - 5f64.ln()).abs() < 0.01, "{end}");
        let adaptive = IntegratorConfig::rkf45(1e-10, 1e-10).truncating();
        let traj = gradient_flow(&model, &x0, (0.0, 3.0), &adaptive).unwrap();
        assert!((traj.last().t - 5f64.ln()).abs() < 1e-3, "{}", traj.last().t);
    }

    #[test]
    fn linear_flow_examples() {
        let th = linear_flow_closed_form(&CoordVector::theta(vec![1.0, -0.5]).unwrap(), 1.0);
        let e = (-1f64).exp();
        assert!((th.values[0] - e).abs() < 1e-15 && (th.values[1] + 0.5 * e).abs() < 1e-15);
        let et = linear_flow_closed_form(&CoordVector::eta(vec![2.0, 0.0]).unwrap(), 3f64.ln());
        assert!((et.values[0] - 6.0).abs() < 1e-14 && et.values[1] == 0.0);
        let x0 = CoordVector::theta(vec![0.3, 7.0]).unwrap();
        assert_eq!(linear_flow_closed_form(&x0, 0.0).values, x0.values);
    }

    #[test]
    fn integrability_products_are_constant() {
        let cfg = IntegratorConfig::default();
        let th = linear_flow(&CoordVector::theta(vec![1.0, 1.0]).unwrap(), (0.0, 5.0), &cfg).unwrap();
        let et = linear_flow(&CoordVector::eta(vec![-1.0, -1.0]).unwrap(), (0.0, 5.0), &cfg).unwrap();
        let c = integrability_products(&th, &et).unwrap();
        for row in &c.values {
            for v in row {
                assert!((v + 1.0).abs() < 1e-9);
            }
        }
        let th = linear_flow(&CoordVector::theta(vec![2.0, 0.0]).unwrap(), (0.0, 5.0), &cfg).unwrap();
        let et = linear_flow(&CoordVector::eta(vec![1.0, 1.0]).unwrap(), (0.0, 5.0), &cfg).unwrap();
        let c = integrability_products(&th, &et).unwrap();
        assert!(c.max_drift().iter().all(|d| *d < 1e-9));
        assert!(c.values.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn integrability_grid_mismatch() {
        let cfg = IntegratorConfig::default();
        let th = linear_flow(&CoordVector::theta(vec![1.0]).unwrap(), (0.0, 1.0), &cfg).unwrap();
        let et = linear_flow(&CoordVector::eta(vec![1.0]).unwrap(), (0.0, 2.0), &cfg).unwrap();
        assert!(matches!(integrability_products(&th, &et), Err(Error::GridMismatch(_))));
    }
}
