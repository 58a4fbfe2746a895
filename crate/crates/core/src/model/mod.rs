//! Relaxation systems, their Fourier symbols, and structural hypothesis checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

pub mod hypotheses;
pub mod systems;

pub use hypotheses::*;
pub use systems::{CustomSystem, JinXin, JinXin2d, LinearSystem, SaintVenant};

/// A hyperbolic balance law `w_t + Σ_j ∂_j f_j(w) = r(w)`.
///
/// Index `j` is zero-based: `j = 0` is the normal direction of a planar
/// front. Evaluators must be pure functions of their inputs.
pub trait RelaxationSystem: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn space_dim(&self) -> usize;

    fn flux(&self, w: &RVec, j: usize) -> RVec;
    fn flux_jacobian(&self, w: &RVec, j: usize) -> RMat;
    fn source(&self, w: &RVec) -> RVec;
    fn relax_jacobian(&self, w: &RVec) -> RMat;

    /// Highest derivative order the coefficients support.
    fn smoothness_order(&self) -> usize {
        3
    }

    fn is_equilibrium(&self, w: &RVec, tol: f64) -> bool {
        self.source(w).amax() <= tol
    }

    /// Directional derivative `dA_j(w)[dw]`; central differences by default.
    fn flux_jacobian_derivative(&self, w: &RVec, dw: &RVec, j: usize) -> RMat {
        let scale = dw.amax();
        if scale == 0.0 {
            let n = self.state_dim();
            return RMat::zeros(n, n);
        }
        let h = 1e-6 * (1.0 + w.amax()) / scale;
        let plus = self.flux_jacobian(&(w + dw * h), j);
        let minus = self.flux_jacobian(&(w - dw * h), j);
        (plus - minus) / (2.0 * h)
    }
}

pub type SharedSystem = Arc<dyn RelaxationSystem>;

/// `T(w, η) = Σ_j η_j A_j(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix {
    pub base_state: RVec,
    pub eta: Vec<f64>,
    pub matrix: RMat,
}

pub fn flux_jacobian_checked(sys: &dyn RelaxationSystem, w: &RVec, j: usize) -> Result<RMat> {
    let a = sys.flux_jacobian(w, j);
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation {
            j: j + 1,
            state: w.iter().copied().collect(),
        });
    }
    Ok(a)
}

pub fn assemble_symbol(sys: &dyn RelaxationSystem, w: &RVec, eta: &[f64]) -> Result<SymbolMatrix> {
    if eta.len() != sys.space_dim() {
        return Err(Error::Argument(format!(
            "eta has {} components, system has space dimension {}",
            eta.len(),
            sys.space_dim()
        )));
    }
    if eta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("eta must be finite".into()));
    }
    let n = sys.state_dim();
    let mut m = RMat::zeros(n, n);
    for (j, &e) in eta.iter().enumerate() {
        let a = flux_jacobian_checked(sys, w, j)?;
        m += a * e;
    }
    Ok(SymbolMatrix {
        base_state: w.clone(),
        eta: eta.to_vec(),
        matrix: m,
    })
}

/// `A_1(w) − s Id`, the normal flux Jacobian in the frame moving at speed `s`.
pub fn comoving_normal_jacobian(sys: &dyn RelaxationSystem, w: &RVec, s: f64) -> Result<RMat> {
    let n = sys.state_dim();
    Ok(flux_jacobian_checked(sys, w, 0)? - RMat::identity(n, n) * s)
}

/// Zero-order coefficient of the perturbation equations about a profile:
/// `E = −dr/dw(w̄) + dA_1(w̄)[w̄′]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOrderCoefficient {
    pub matrix: RMat,
}

pub fn zero_order_coefficient(sys: &dyn RelaxationSystem, w: &RVec, dw: &RVec) -> ZeroOrderCoefficient {
    let mut e = -sys.relax_jacobian(w);
    if dw.amax() > 0.0 {
        e += sys.flux_jacobian_derivative(w, dw, 0);
    }
    ZeroOrderCoefficient { matrix: e }
}

/// Builds a built-in system from its name and a parameter map.
pub fn system_from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<SharedSystem> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        match params.get(key).copied().or(default) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(Error::usage(format!("system.params.{key}"), "must be finite")),
            None => Err(Error::usage(format!("system.params.{key}"), "missing parameter")),
        }
    };
    match name {
        "jin-xin" => {
            let a = get("a", Some(2.0))?;
            if a <= 0.0 {
                return Err(Error::usage("system.params.a", "must be positive"));
            }
            Ok(Arc::new(JinXin::new(a)))
        }
        "jin-xin-2d" => {
            let a = get("a", Some(2.0))?;
            let c = get("c", Some(1.0))?;
            let kappa = get("kappa", Some(1.0))?;
            if a <= 0.0 || c <= 0.0 {
                return Err(Error::usage("system.params", "a and c must be positive"));
            }
            Ok(Arc::new(JinXin2d::new(a, c, kappa)))
        }
        "saint-venant" => {
            let f = get("froude", Some(1.5))?;
            if f <= 0.0 {
                return Err(Error::usage("system.params.froude", "must be positive"));
            }
            Ok(Arc::new(SaintVenant::new(f)))
        }
        "partially-damped" => Ok(Arc::new(LinearSystem::partially_damped(
            get("a", Some(2.0))?,
            get("fp", Some(0.0))?,
            get("c", Some(0.5))?,
        ))),
        "skew-coupled" => Ok(Arc::new(LinearSystem::skew_coupled(get("coupling", Some(0.5))?))),
        other => Err(Error::usage("system.name", format!("unknown system `{other}`"))),
    }
}
