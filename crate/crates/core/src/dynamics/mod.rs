//! Gradient flows, geodesic and natural Hamiltonian flows, the
//! Jacobi-Maupertuis transform and reparametrization between `t`, `s` and
//! `tau`.

mod gradient;
mod hamiltonian;
pub mod integrator;
mod interp;
mod jm;
mod reparam;
mod trajectory;

pub use gradient::{gradient_flow, integrability_products, linear_flow, linear_flow_closed_form};
pub use hamiltonian::{
    dual_consistency_residual, geodesic_flow, hamiltonian_value, natural_flow_t, FlowStart,
    HamiltonianKind, HamiltonianSpec,
};
pub use integrator::{solve_ode, DomainGuard, IntegratorConfig, Method, Solution, Termination};
pub use jm::{jm_transform, IgNatural, JmGeodesic, NaturalForm, NaturalHamiltonian};
pub use reparam::{ig_index, reparametrize, reparametrize_ig};
pub use trajectory::{
    DualState, Driver, Param, PhaseState, RayState, RayTrajectory, ReplicatorState, Sample, Series,
    Trajectory,
};

pub(crate) use gradient::check_span;
