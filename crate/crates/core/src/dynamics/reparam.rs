use super::interp::{cumulative_integral, Resampler};
use super::trajectory::{flat_row, unflat_row, DualState, Driver, Param, PhaseState, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::DuallyFlat;
use crate::models::{index_sq_eta, index_sq_theta};

/// Resamples `traj` on a uniform grid of `to`, recomputing the clocks from
/// `from` with `ds = n dt` and `d tau = n ds`.
///
/// The `from` column is kept as is; the other two are rebuilt by quadrature
/// of `index(state)` along the samples, starting from their first values.
/// States and the non-target clocks are then interpolated on the new grid.
pub fn reparametrize<S, F>(traj: &Trajectory<S>, from: Param, to: Param, index: F) -> Result<Trajectory<S>>
where
    S: PhaseState,
    F: Fn(&S) -> Result<f64>,
{
    if traj.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if traj.len() == 1 {
        return Ok(traj.clone());
    }
    if !traj.is_strictly_increasing(from) {
        return Err(Error::NonMonotone(from.name()));
    }
    let src = traj.param_values(from);
    let n: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| index(&s.state))
        .collect::<Result<_>>()?;
    if n.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite("refractive index along trajectory"));
    }

    let mut rows: Vec<Vec<f64>> = traj.samples.iter().map(flat_row).collect();
    for p in Param::ALL {
        if p == from {
            continue;
        }
        let power = p.order() - from.order();
        let integrand: Vec<f64> = n.iter().map(|v| v.powi(power)).collect();
        let col = cumulative_integral(&src, &integrand, traj.first().param(p));
        let j = p.order() as usize;
        for (row, v) in rows.iter_mut().zip(col) {
            row[j] = v;
        }
    }

    let target_col = to.order() as usize;
    let knots: Vec<f64> = rows.iter().map(|r| r[target_col]).collect();
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotone(to.name()));
    }
    let resampler = Resampler::new(knots.clone(), &rows, &[0, 1, 2])?;
    let count = traj.len();
    let (a, b) = (knots[0], knots[count - 1]);
    let like = &traj.first().state;
    let samples = (0..count)
        .map(|k| {
            let x = if k + 1 == count {
                b
            } else {
                a + (b - a) * k as f64 / (count - 1) as f64
            };
            let mut sample = unflat_row(&resampler.eval(x), like);
            sample.set_param(to, x);
            sample
        })
        .collect();
    Ok(Trajectory {
        samples,
        ..traj.clone()
    })
}

/// Refractive index appropriate to an IG flow: `n(eta)` for eta-chart
/// drivers, `n*(theta)` for theta-chart drivers.
pub fn ig_index(model: &dyn DuallyFlat, driver: Driver, state: &DualState) -> Result<f64> {
    let sq = match driver {
        Driver::GradientEta | Driver::GeodesicEta | Driver::NaturalIg => index_sq_eta(model, &state.eta),
        Driver::GradientTheta | Driver::GeodesicTheta => index_sq_theta(model, &state.theta),
        other => {
            return Err(Error::ModelMismatch(format!(
                "{other} trajectories have no information-geometric index"
            )))
        }
    };
    if sq.is_finite() && sq > 0.0 {
        Ok(sq.sqrt())
    } else {
        Err(Error::NonFinite("refractive index"))
    }
}

/// `reparametrize` for IG flows, using the model's index.
pub fn reparametrize_ig(traj: &Trajectory, from: Param, to: Param, model: &dyn DuallyFlat) -> Result<Trajectory> {
    if traj.model != model.id() {
        return Err(Error::ModelMismatch(format!(
            "trajectory was produced by `{}`, not `{}`",
            traj.model,
            model.id()
        )));
    }
    let driver = traj.driver;
    reparametrize(traj, from, to, |s| ig_index(model, driver, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        geodesic_flow, gradient_flow, natural_flow_t, FlowStart, HamiltonianSpec, IntegratorConfig,
    };
    use crate::manifold::CoordVector;
    use crate::models::{gamma_model, gaussian_model, GammaParams, GaussianParams, GAUSSIAN_INDEX};

    #[test]
    fn gaussian_arc_length_is_scaled_time() {
        let model = gaussian_model();
        let x0 = CoordVector::eta(GaussianParams::new(0.5, 2.0).unwrap().eta()).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        let r = reparametrize_ig(&traj, Param::T, Param::S, &model).unwrap();
        assert_eq!(r.len(), traj.len());
        for s in &r.samples {
            assert!((s.s - s.t * GAUSSIAN_INDEX).abs() < 1e-12);
            // t = ln sigma2 - ln sigma2_0
            let p = GaussianParams::from_eta(&s.state.eta);
            assert!((s.t - (p.sigma2 / 2.0).ln()).abs() < 1e-9);
        }
        let ds = r.samples[1].s - r.samples[0].s;
        let last = r.samples.len() - 1;
        assert!(((r.samples[last].s - r.samples[last - 1].s) - ds).abs() < 1e-12);
    }

    #[test]
    fn gamma_time_is_minus_log_beta() {
        let model = gamma_model();
        let x0 = CoordVector::eta(GammaParams::new(3.0, 2.0).unwrap().eta()).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        let r = reparametrize_ig(&traj, Param::T, Param::Tau, &model).unwrap();
        let back = reparametrize_ig(&r, Param::Tau, Param::T, &model).unwrap();
        for s in &back.samples {
            let beta = GammaParams::from_eta(&s.state.eta).beta;
            assert!((s.t + beta.ln() - 3f64.ln()).abs() < 1e-8, "t={} beta={beta}", s.t);
        }
    }

    #[test]
    fn geodesic_and_natural_paths_coincide() {
        let model = gamma_model();
        let start = FlowStart::Consistent(CoordVector::eta(GammaParams::new(2.0, 3.0).unwrap().eta()).unwrap());
        let cfg = IntegratorConfig::default();
        let geo = geodesic_flow(&model, &HamiltonianSpec::geodesic_eta(), &start, (0.0, 1.0), &cfg).unwrap();
        let geo_t = reparametrize_ig(&geo, Param::Tau, Param::T, &model).unwrap();
        let t_end = geo_t.last().t;
        let nat = natural_flow_t(&model, &HamiltonianSpec::natural_ig(), &start, (0.0, t_end), &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for s in &geo_t.samples {
            let other = nat.interpolate(Param::T, s.t.min(t_end)).unwrap();
            for (a, b) in s.state.eta.iter().zip(&other.state.eta) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn non_monotone_source_rejected() {
        let model = gaussian_model();
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let mut traj = gradient_flow(&model, &x0, (0.0, 0.1), &IntegratorConfig::default()).unwrap();
        traj.samples[3].t = traj.samples[1].t;
        assert!(matches!(
            reparametrize_ig(&traj, Param::T, Param::S, &model),
            Err(Error::NonMonotone("t"))
        ));
    }

    #[test]
    fn model_mismatch_rejected() {
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let traj = gradient_flow(&gaussian_model(), &x0, (0.0, 0.1), &IntegratorConfig::default()).unwrap();
        assert!(reparametrize_ig(&traj, Param::T, Param::S, &gamma_model()).is_err());
    }
}
