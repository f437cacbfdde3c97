//! Jacobi-Maupertuis transform of natural Hamiltonians into geodesic ones.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{quad, DuallyFlat};
use crate::models::index_sq_eta;

/// How kinetic and potential energy combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaturalForm {
    /// `H = sqrt(K^ij p_i p_j) + U(q)`, as for rays parametrized by arc length.
    FirstOrder,
    /// `H = 1/2 (K^ij p_i p_j + U(q))`, as for the IG flow in `t`.
    Quadratic,
}

/// A Hamiltonian made of a momentum-quadratic kinetic term and a potential.
pub trait NaturalHamiltonian {
    fn dim(&self) -> usize;
    fn form(&self) -> NaturalForm;
    /// The matrix `K(q)` contracted with the momenta in the kinetic term.
    fn kinetic_metric(&self, q: &[f64]) -> DMatrix<f64>;
    fn potential(&self, q: &[f64]) -> f64;

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        let kin = quad(&self.kinetic_metric(q), p, p);
        match self.form() {
            NaturalForm::FirstOrder => kin.sqrt() + self.potential(q),
            NaturalForm::Quadratic => 0.5 * (kin + self.potential(q)),
        }
    }
}

/// The IG natural Hamiltonian on the eta-chart: `K = g_ij(eta)`,
/// `U = -n^2(eta)`, quadratic form.
pub struct IgNatural<'m> {
    pub model: &'m dyn DuallyFlat,
}

impl NaturalHamiltonian for IgNatural<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn form(&self) -> NaturalForm {
        NaturalForm::Quadratic
    }

    fn kinetic_metric(&self, q: &[f64]) -> DMatrix<f64> {
        self.model.metric_lower_eta(q)
    }

    fn potential(&self, q: &[f64]) -> f64 {
        -index_sq_eta(self.model, q)
    }
}

/// Geodesic Hamiltonian `sqrt(K~ p p)` obtained from a natural one at
/// energy `E`, with `K~ = K / (E - U)^2` (first-order form) or
/// `K~ = K / (E - U)` (quadratic form), and the parameter map
/// `d tau = (E - U) d(native parameter)`.
pub struct JmGeodesic<'a, N: ?Sized> {
    natural: &'a N,
    energy: f64,
}

pub fn jm_transform<N: NaturalHamiltonian + ?Sized>(natural: &N, energy: f64) -> JmGeodesic<'_, N> {
    JmGeodesic { natural, energy }
}

impl<N: NaturalHamiltonian + ?Sized> JmGeodesic<'_, N> {
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `E - U(q)`, or a turning-point error where it is not positive.
    pub fn gap(&self, q: &[f64]) -> Result<f64> {
        let gap = self.energy - self.natural.potential(q);
        if gap > 0.0 {
            Ok(gap)
        } else if gap.is_nan() {
            Err(Error::NonFinite("jm gap"))
        } else {
            Err(Error::TurningPoint { gap })
        }
    }

    /// `K~(q)`, the matrix contracted with momenta in the geodesic Hamiltonian.
    pub fn metric_upper(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let gap = self.gap(q)?;
        let scale = match self.natural.form() {
            NaturalForm::FirstOrder => gap * gap,
            NaturalForm::Quadratic => gap,
        };
        Ok(self.natural.kinetic_metric(q) / scale)
    }

    /// Inverse of `metric_upper`: the JM metric on velocities.
    pub fn metric_lower(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.metric_upper(q)?
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric("JM metric".into()))
    }

    /// `d tau / d(native parameter) = E - U(q)`.
    pub fn time_factor(&self, q: &[f64]) -> Result<f64> {
        self.gap(q)
    }

    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        Ok(quad(&self.metric_upper(q)?, p, p).sqrt())
    }
}
