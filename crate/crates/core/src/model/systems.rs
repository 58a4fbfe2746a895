//! Built-in relaxation systems and a closure-backed custom system.

use std::fmt;

use crate::linalg::{RMat, RVec};

use super::RelaxationSystem;

/// Jin–Xin relaxation of Burgers' equation,
/// `u_t + p_x = 0`, `p_t + a² u_x = u²/2 − p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinXin {
    pub a: f64,
}

impl JinXin {
    pub fn new(a: f64) -> Self {
        JinXin { a }
    }

    pub fn equilibrium_flux(u: f64) -> f64 {
        0.5 * u * u
    }

    pub fn equilibrium_speed(u: f64) -> f64 {
        u
    }

    pub fn equilibrium(&self, u: f64) -> RVec {
        RVec::from_vec(vec![u, Self::equilibrium_flux(u)])
    }
}

impl RelaxationSystem for JinXin {
    fn name(&self) -> &str {
        "jin-xin"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn space_dim(&self) -> usize {
        1
    }
    fn flux(&self, w: &RVec, _j: usize) -> RVec {
        RVec::from_vec(vec![w[1], self.a * self.a * w[0]])
    }
    fn flux_jacobian(&self, _w: &RVec, _j: usize) -> RMat {
        RMat::from_row_slice(2, 2, &[0.0, 1.0, self.a * self.a, 0.0])
    }
    fn source(&self, w: &RVec) -> RVec {
        RVec::from_vec(vec![0.0, Self::equilibrium_flux(w[0]) - w[1]])
    }
    fn relax_jacobian(&self, w: &RVec) -> RMat {
        RMat::from_row_slice(2, 2, &[0.0, 0.0, Self::equilibrium_speed(w[0]), -1.0])
    }
    fn flux_jacobian_derivative(&self, _w: &RVec, _dw: &RVec, _j: usize) -> RMat {
        RMat::zeros(2, 2)
    }
}

/// Two-dimensional Jin–Xin relaxation with a state-dependent transverse
/// relaxation speed:
/// `u_t + p_x + q_y = 0`, `p_t + a² u_x = u²/2 − p`, `q_t + B(u)_y = −q`,
/// with `B(u) = c² (u + κ u²/2)`.
///
/// Planar fronts in `x` carry `q ≡ 0` and coincide with the 1-d Jin–Xin
/// fronts, while the principal symbol varies along the front through `B′(ū)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinXin2d {
    pub a: f64,
    pub c: f64,
    pub kappa: f64,
}

impl JinXin2d {
    pub fn new(a: f64, c: f64, kappa: f64) -> Self {
        JinXin2d { a, c, kappa }
    }

    pub fn transverse_speed_sq(&self, u: f64) -> f64 {
        self.c * self.c * (1.0 + self.kappa * u)
    }

    pub fn equilibrium(&self, u: f64) -> RVec {
        RVec::from_vec(vec![u, JinXin::equilibrium_flux(u), 0.0])
    }
}

impl RelaxationSystem for JinXin2d {
    fn name(&self) -> &str {
        "jin-xin-2d"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn space_dim(&self) -> usize {
        2
    }
    fn flux(&self, w: &RVec, j: usize) -> RVec {
        let u = w[0];
        match j {
            0 => RVec::from_vec(vec![w[1], self.a * self.a * u, 0.0]),
            _ => RVec::from_vec(vec![
                w[2],
                0.0,
                self.c * self.c * (u + 0.5 * self.kappa * u * u),
            ]),
        }
    }
    fn flux_jacobian(&self, w: &RVec, j: usize) -> RMat {
        let a2 = self.a * self.a;
        match j {
            0 => RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, a2, 0.0, 0.0, 0.0, 0.0, 0.0]),
            _ => RMat::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    0.0,
                    1.0,
                    0.0,
                    0.0,
                    0.0,
                    self.transverse_speed_sq(w[0]),
                    0.0,
                    0.0,
                ],
            ),
        }
    }
    fn source(&self, w: &RVec) -> RVec {
        RVec::from_vec(vec![0.0, JinXin::equilibrium_flux(w[0]) - w[1], -w[2]])
    }
    fn relax_jacobian(&self, w: &RVec) -> RMat {
        RMat::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, w[0], -1.0, 0.0, 0.0, 0.0, -1.0],
        )
    }
    fn flux_jacobian_derivative(&self, _w: &RVec, dw: &RVec, j: usize) -> RMat {
        let mut m = RMat::zeros(3, 3);
        if j == 1 {
            m[(2, 0)] = self.c * self.c * self.kappa * dw[0];
        }
        m
    }
}

/// Saint-Venant equations for inclined shallow-water flow in units where the
/// equilibrium flow has `q = h^{3/2}`:
/// `h_t + q_x = 0`, `q_t + (q²/h + h²/(2F²))_x = h − |q| q / h²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaintVenant {
    pub froude: f64,
}

impl SaintVenant {
    pub fn new(froude: f64) -> Self {
        SaintVenant { froude }
    }

    pub fn equilibrium(&self, h: f64) -> RVec {
        RVec::from_vec(vec![h, h.powf(1.5)])
    }
}

impl RelaxationSystem for SaintVenant {
    fn name(&self) -> &str {
        "saint-venant"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn space_dim(&self) -> usize {
        1
    }
    fn flux(&self, w: &RVec, _j: usize) -> RVec {
        let (h, q) = (w[0], w[1]);
        let f2 = self.froude * self.froude;
        RVec::from_vec(vec![q, q * q / h + h * h / (2.0 * f2)])
    }
    fn flux_jacobian(&self, w: &RVec, _j: usize) -> RMat {
        let (h, q) = (w[0], w[1]);
        let f2 = self.froude * self.froude;
        RMat::from_row_slice(2, 2, &[0.0, 1.0, -q * q / (h * h) + h / f2, 2.0 * q / h])
    }
    fn source(&self, w: &RVec) -> RVec {
        let (h, q) = (w[0], w[1]);
        RVec::from_vec(vec![0.0, h - q.abs() * q / (h * h)])
    }
    fn relax_jacobian(&self, w: &RVec) -> RMat {
        let (h, q) = (w[0], w[1]);
        RMat::from_row_slice(
            2,
            2,
            &[0.0, 0.0, 1.0 + 2.0 * q.abs() * q / (h * h * h), -2.0 * q.abs() / (h * h)],
        )
    }
}

/// Constant-coefficient 1-d system `w_t + A w_x = −B w` with `r(w) = −B w`.
/// Used for the structural corpus: block examples with undamped fields,
/// skew relaxation coupling, and hand-built symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub label: String,
    pub flux: Vec<RMat>,
    pub damping: RMat,
}

impl LinearSystem {
    pub fn new(label: impl Into<String>, flux: Vec<RMat>, damping: RMat) -> Self {
        LinearSystem {
            label: label.into(),
            flux,
            damping,
        }
    }

    /// Jin–Xin block (`a`, frozen `f′ = fp`) plus a scalar field transported
    /// at speed `c` with no relaxation at all.
    pub fn partially_damped(a: f64, fp: f64, c: f64) -> Self {
        let flux = RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, a * a, 0.0, 0.0, 0.0, 0.0, c]);
        let damping = RMat::from_row_slice(3, 3, &[0.0, 0.0, 0.0, -fp, 1.0, 0.0, 0.0, 0.0, 0.0]);
        LinearSystem::new("partially-damped", vec![flux], damping)
    }

    /// Strictly hyperbolic diagonal transport with every field damped but a
    /// skew coupling between the first two fields, so no diagonal
    /// symmetrizer renders the relaxation matrix symmetric semidefinite.
    pub fn skew_coupled(coupling: f64) -> Self {
        let flux = RMat::from_diagonal(&RVec::from_vec(vec![-1.0, 0.5, 2.0]));
        let damping = RMat::from_row_slice(
            3,
            3,
            &[1.0, coupling, 0.0, -coupling, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        LinearSystem::new("skew-coupled", vec![flux], damping)
    }

    /// Symmetric transport with isotropic damping `θ Id`.
    pub fn symmetric_damped(theta: f64) -> Self {
        let flux = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        LinearSystem::new("symmetric-damped", vec![flux], RMat::identity(2, 2) * theta)
    }
}

impl RelaxationSystem for LinearSystem {
    fn name(&self) -> &str {
        &self.label
    }
    fn state_dim(&self) -> usize {
        self.damping.nrows()
    }
    fn space_dim(&self) -> usize {
        self.flux.len()
    }
    fn flux(&self, w: &RVec, j: usize) -> RVec {
        &self.flux[j] * w
    }
    fn flux_jacobian(&self, _w: &RVec, j: usize) -> RMat {
        self.flux[j].clone()
    }
    fn source(&self, w: &RVec) -> RVec {
        -(&self.damping * w)
    }
    fn relax_jacobian(&self, _w: &RVec) -> RMat {
        -self.damping.clone()
    }
    fn flux_jacobian_derivative(&self, _w: &RVec, _dw: &RVec, _j: usize) -> RMat {
        let n = self.state_dim();
        RMat::zeros(n, n)
    }
}

type JacFn = dyn Fn(&RVec, usize) -> RMat + Send + Sync;
type FluxFn = dyn Fn(&RVec, usize) -> RVec + Send + Sync;
type VecFn = dyn Fn(&RVec) -> RVec + Send + Sync;
type MatFn = dyn Fn(&RVec) -> RMat + Send + Sync;

/// A system assembled from user closures.
pub struct CustomSystem {
    pub label: String,
    pub n: usize,
    pub d: usize,
    pub flux_fn: Box<FluxFn>,
    pub flux_jac: Box<JacFn>,
    pub source_fn: Box<VecFn>,
    pub relax_jac: Box<MatFn>,
}

impl fmt::Debug for CustomSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSystem")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("d", &self.d)
            .finish()
    }
}

impl CustomSystem {
    /// A system with the given flux Jacobians and relaxation Jacobian,
    /// frozen in the state (linear fluxes).
    pub fn constant(label: impl Into<String>, flux: Vec<RMat>, relax: RMat) -> Self {
        let n = relax.nrows();
        let d = flux.len();
        let fl = flux.clone();
        let rj = relax.clone();
        let rj2 = relax;
        CustomSystem {
            label: label.into(),
            n,
            d,
            flux_fn: Box::new(move |w, j| &fl[j] * w),
            flux_jac: Box::new(move |_, j| flux[j].clone()),
            source_fn: Box::new(move |w| &rj * w),
            relax_jac: Box::new(move |_| rj2.clone()),
        }
    }
}

impl RelaxationSystem for CustomSystem {
    fn name(&self) -> &str {
        &self.label
    }
    fn state_dim(&self) -> usize {
        self.n
    }
    fn space_dim(&self) -> usize {
        self.d
    }
    fn flux(&self, w: &RVec, j: usize) -> RVec {
        (self.flux_fn)(w, j)
    }
    fn flux_jacobian(&self, w: &RVec, j: usize) -> RMat {
        (self.flux_jac)(w, j)
    }
    fn source(&self, w: &RVec) -> RVec {
        (self.source_fn)(w)
    }
    fn relax_jacobian(&self, w: &RVec) -> RMat {
        (self.relax_jac)(w)
    }
}
