//! Symmetrizers for `v′ = G(x) v`: the Lyapunov construction on a
//! dichotomy frame, constant frozen-coefficient symmetrizers, and the
//! certificate `2Re(SG) + S′ ≥ 2θ` with its energy estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{BlockField, DichotomyData};
use crate::discrete::{self, Samples};
use crate::error::{Error, Result};
use crate::field::{Bvp, LinearField};
use crate::linalg::{self, c64, identity, CMat, RVec};
use crate::model::{generator_symbol, RelaxationSystem};
use crate::resolvent::WavePacket;

/// `Q₊` with `Q₊′ = −I − Λ₊ᴴQ₊ − Q₊Λ₊` (integrated from `+L` backward) and
/// `Q₋` with `Q₋′ = I − Λ₋ᴴQ₋ − Q₋Λ₋` (integrated from `−L` forward).
#[derive(Debug, Clone)]
pub struct LyapunovForms {
    pub grid: Vec<f64>,
    pub q_plus: Vec<CMat>,
    pub q_minus: Vec<CMat>,
}

fn lyap_rhs(sign: f64, lam: &CMat, q: &CMat) -> CMat {
    identity(q.nrows()) * c64(sign, 0.0) - lam.adjoint() * q - q * lam
}

fn lyap_step(sign: f64, q: &CMat, l0: &CMat, lm: &CMat, l1: &CMat, dx: f64) -> CMat {
    let hh = c64(0.5 * dx, 0.0);
    let k1 = lyap_rhs(sign, l0, q);
    let k2 = lyap_rhs(sign, lm, &(q + &k1 * hh));
    let k3 = lyap_rhs(sign, lm, &(q + &k2 * hh));
    let k4 = lyap_rhs(sign, l1, &(q + &k3 * c64(dx, 0.0)));
    let next = q + (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * c64(dx / 6.0, 0.0);
    linalg::hermitian_part(&next)
}

pub fn lyapunov_q(plus: &BlockField, minus: &BlockField) -> Result<LyapunovForms> {
    let m = plus.grid.len();
    if m < 2 || minus.grid.len() != m || plus.nodes.len() != m || minus.nodes.len() != m {
        return Err(Error::Argument("block fields must share a grid with >= 2 nodes".into()));
    }
    let h = plus.grid[1] - plus.grid[0];
    let mid = |f: &BlockField, i: usize| -> CMat {
        f.mids
            .get(i)
            .cloned()
            .unwrap_or_else(|| (&f.nodes[i] + &f.nodes[i + 1]) * c64(0.5, 0.0))
    };
    let mut q_plus = vec![CMat::zeros(plus.dim(), plus.dim()); m];
    if plus.dim() > 0 {
        let end = &plus.nodes[m - 1];
        let worst = linalg::eigenvalues(end)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if !(worst < 0.0) {
            return Err(Error::Stability(format!(
                "forward block not stable at +L (max Re = {worst:.3e})"
            )));
        }
        q_plus[m - 1] = linalg::lyapunov_solve(end, &(-identity(plus.dim())))?;
        for i in (0..m - 1).rev() {
            q_plus[i] = lyap_step(-1.0, &q_plus[i + 1], &plus.nodes[i + 1], &mid(plus, i), &plus.nodes[i], -h);
        }
    }
    let mut q_minus = vec![CMat::zeros(minus.dim(), minus.dim()); m];
    if minus.dim() > 0 {
        let end = &minus.nodes[0];
        let worst = linalg::eigenvalues(end)?.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if !(worst > 0.0) {
            return Err(Error::Stability(format!(
                "backward block not unstable at -L (min Re = {worst:.3e})"
            )));
        }
        q_minus[0] = linalg::lyapunov_solve(end, &identity(minus.dim()))?;
        for i in 0..m - 1 {
            q_minus[i + 1] = lyap_step(1.0, &q_minus[i], &minus.nodes[i], &mid(minus, i), &minus.nodes[i + 1], h);
        }
    }
    let forms = LyapunovForms {
        grid: plus.grid.clone(),
        q_plus,
        q_minus,
    };
    for (i, (qp, qm)) in forms.q_plus.iter().zip(&forms.q_minus).enumerate() {
        let lo = min_eig_or_inf(qp).min(min_eig_or_inf(qm));
        if !(lo > 0.0) {
            return Err(Error::Stability(format!(
                "Lyapunov form lost definiteness at x = {} (min eig {lo:.3e})",
                forms.grid[i]
            )));
        }
    }
    Ok(forms)
}

fn min_eig_or_inf(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        f64::INFINITY
    } else {
        linalg::min_hermitian_eigenvalue(m)
    }
}

impl LyapunovForms {
    /// Worst relative mismatch between `Q±′` by fourth-order differences
    /// and the right-hand sides of the Lyapunov equations.
    pub fn derivative_identity_error(&self, plus: &BlockField, minus: &BlockField) -> f64 {
        let h = self.grid[1] - self.grid[0];
        let mut worst: f64 = 0.0;
        for (qs, lam, sign) in [(&self.q_plus, plus, -1.0), (&self.q_minus, minus, 1.0)] {
            if lam.dim() == 0 {
                continue;
            }
            let dq = discrete::fd_derivative(qs, h);
            for i in 0..qs.len() {
                let rhs = lyap_rhs(sign, &lam.nodes[i], &qs[i]);
                worst = worst.max((&dq[i] - &rhs).norm() / rhs.norm().max(1.0));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Lyapunov,
    ConstantFrame,
    User,
}

#[derive(Debug, Clone)]
pub struct SymmetrizerField {
    pub grid: Vec<f64>,
    pub s: Vec<CMat>,
    pub c0: f64,
    /// Coercivity constant, once certified.
    pub theta: Option<f64>,
    pub provenance: Provenance,
}

impl SymmetrizerField {
    pub fn from_nodes(grid: Vec<f64>, s: Vec<CMat>, provenance: Provenance) -> Self {
        let c0 = s.iter().map(linalg::norm2).fold(0.0, f64::max);
        SymmetrizerField {
            grid,
            s,
            c0,
            theta: None,
            provenance,
        }
    }

    pub fn hermitian_error(&self) -> f64 {
        self.s
            .iter()
            .map(|m| (m - m.adjoint()).norm() / m.norm().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// `S = T⁻ᴴ diag(−Q₊, Q₋) T⁻¹`.
pub fn assemble_symmetrizer(frames: &[CMat], forms: &LyapunovForms, cond_cap: f64) -> Result<SymmetrizerField> {
    if frames.len() != forms.grid.len() {
        return Err(Error::Argument("frames and Lyapunov forms on different grids".into()));
    }
    let mut s = Vec::with_capacity(frames.len());
    for (i, t) in frames.iter().enumerate() {
        let cond = linalg::condition_number(t);
        if !(cond <= cond_cap) {
            return Err(Error::Conditioning { x: forms.grid[i], cond });
        }
        let tinv = linalg::inverse(t)?;
        let d = linalg::block_diag(&(-&forms.q_plus[i]), &forms.q_minus[i]);
        s.push(linalg::hermitian_part(&(tinv.adjoint() * d * tinv)));
    }
    Ok(SymmetrizerField::from_nodes(forms.grid.clone(), s, Provenance::Lyapunov))
}

/// The Lyapunov symmetrizer of a dichotomy together with its forms.
pub fn symmetrizer_from_dichotomy(data: &DichotomyData) -> Result<(SymmetrizerField, LyapunovForms)> {
    let (plus, minus) = data.blocks();
    let forms = lyapunov_q(&plus, &minus)?;
    let sym = assemble_symmetrizer(&data.frames(), &forms, 1e8)?;
    Ok((sym, forms))
}

/// Default coercivity requirement for a Lyapunov symmetrizer on `frames`:
/// half of `½ min_x 1/‖T(x)‖²`, the value the construction attains exactly.
pub fn default_theta_req(frames: &[CMat]) -> f64 {
    0.5 * frames
        .iter()
        .map(|t| 0.5 / linalg::norm2(t).powi(2))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `½ min_x min-eig(2Re(SG) + S′)`
    pub theta_measured: f64,
    pub theta_req: f64,
    pub c0_measured: f64,
    /// Worst energy ratio, when checked.
    pub energy_check: Option<f64>,
    pub hermitian_error: f64,
    pub worst_x: f64,
    pub provenance: Provenance,
    pub pass: bool,
}

/// Certifies `2Re(S G) + S′ ≥ 2θ_req` on the grid of `sym` (`g` sampled at
/// the same nodes, `S′` by fourth-order differences).
pub fn verify_symmetrizer(sym: &SymmetrizerField, g: &[CMat], theta_req: f64) -> Result<Certificate> {
    let herm = sym.hermitian_error();
    if herm > 1e-10 {
        return Err(Error::Argument(format!("symmetrizer is not Hermitian (error {herm:.3e})")));
    }
    if g.len() != sym.s.len() {
        return Err(Error::Argument("field and symmetrizer sampled on different grids".into()));
    }
    let ds = if sym.s.len() >= 5 {
        discrete::fd_derivative(&sym.s, sym.grid[1] - sym.grid[0])
    } else {
        vec![CMat::zeros(g[0].nrows(), g[0].nrows()); sym.s.len()]
    };
    let mut theta = f64::INFINITY;
    let mut worst_x = sym.grid[0];
    for i in 0..sym.s.len() {
        let sg = &sym.s[i] * &g[i];
        let m = &sg + sg.adjoint() + linalg::hermitian_part(&ds[i]);
        let t = 0.5 * linalg::min_hermitian_eigenvalue(&m);
        if t < theta {
            theta = t;
            worst_x = sym.grid[i];
        }
    }
    let c0 = sym.s.iter().map(linalg::norm2).fold(0.0, f64::max);
    Ok(Certificate {
        theta_measured: theta,
        theta_req,
        c0_measured: c0,
        energy_check: None,
        hermitian_error: herm,
        worst_x,
        provenance: sym.provenance,
        pass: theta >= theta_req - 1e-12 * theta_req.abs().max(1.0) && c0 <= sym.c0 * (1.0 + 1e-12),
    })
}

impl Certificate {
    pub fn with_energy(mut self, ratio: f64) -> Self {
        self.energy_check = Some(ratio);
        self.pass = self.pass && ratio <= 1.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// Worst `θ²‖u‖² / (C₀²‖f‖²)`; the estimate asks ≤ 1.
    pub worst_ratio: f64,
    pub trials: usize,
    /// Largest `|u|` at the truncation points relative to `max |u|`.
    pub boundary_leak: f64,
}

/// Solves `u′ = G u + f` for random localized `f` on the symmetrizer grid
/// and compares `θ‖u‖²` with `(C₀²/θ)‖f‖²`.
pub fn energy_estimate_check(
    sym: &SymmetrizerField,
    field: &dyn LinearField,
    theta: f64,
    trials: usize,
    seed: u64,
) -> Result<EnergyCheck> {
    if !(theta > 0.0) {
        return Err(Error::Argument("energy check needs theta > 0".into()));
    }
    let bvp = Bvp::new(field, sym.grid.len())?;
    let n = field.dim();
    let domain = field.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut leak: f64 = 0.0;
    let k_max = (0.25 / bvp.h).min(10.0);
    let h = bvp.h;
    for _ in 0..trials {
        let packet = WavePacket::random(&mut rng, n, domain, k_max);
        let b = Samples::from_fn(bvp.nodes(), n, |k, z| packet.write(bvp.grid[k], z));
        let bm = Samples::from_fn(bvp.nodes() - 1, n, |k, z| packet.write(bvp.grid[k] + 0.5 * h, z));
        let sol = bvp.solve_sampled(b, bm)?;
        let (u, f) = (discrete::l2_norm(&sol.v, h), discrete::l2_norm(&sol.b, h));
        if f > 0.0 {
            worst = worst.max((theta * u).powi(2) / (sym.c0 * f).powi(2));
        }
        let umax = sol.v.max_norm();
        if umax > 0.0 {
            let ends = sol.v.norm_sqr_at(0).max(sol.v.norm_sqr_at(sol.v.len() - 1)).sqrt();
            leak = leak.max(ends / umax);
        }
    }
    Ok(EnergyCheck {
        worst_ratio: worst,
        trials,
        boundary_leak: leak,
    })
}

// ---------------------------------------------------------------- frozen coefficients

#[derive(Debug, Clone)]
pub struct ConstantSymmetrizer {
    pub s: CMat,
    /// `min(−Re σ(M))` for the generator symbol `M = −iA(η) − E`.
    pub theta: f64,
    /// `(θ/2) λ_min(S)`: lower bound for `Re(S(λ − M))` when `Re λ ≥ −θ/2`.
    pub theta2: f64,
    /// `λ_min(Re(S(λ − M)))` at `Re λ = −θ/2` (independent of `Im λ`).
    pub theta_measured: f64,
    pub c0: f64,
    pub condition: f64,
}

/// `S = R⁻ᴴR⁻¹` from the eigenvector matrix `R` of `M = −iA(η) − E` at the
/// frozen state `w0 + v0`.
pub fn constant_symmetrizer(
    sys: &dyn RelaxationSystem,
    w0: &RVec,
    eta: &[f64],
    v0: Option<&RVec>,
    cond_cap: f64,
) -> Result<ConstantSymmetrizer> {
    let w = match v0 {
        Some(v) => w0 + v,
        None => w0.clone(),
    };
    let m = generator_symbol(sys, &w, eta)?;
    let eig = linalg::eigen(&m)?;
    let condition = eig.vector_condition();
    if !(condition <= cond_cap) {
        return Err(Error::GeometricRegularity(format!(
            "eigenvector matrix condition {condition:.3e} at eta = {eta:?}: diagonalization fails near a coalescence"
        )));
    }
    let rinv = linalg::inverse(&eig.vectors)?;
    let s = linalg::hermitian_part(&(rinv.adjoint() * &rinv));
    let theta = eig.values.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
    let lam_min = linalg::min_hermitian_eigenvalue(&s);
    let sm = &s * &m;
    let re = &s * c64(-0.5 * theta, 0.0) - linalg::hermitian_part(&sm);
    Ok(ConstantSymmetrizer {
        theta_measured: linalg::min_hermitian_eigenvalue(&re),
        theta2: 0.5 * theta * lam_min,
        c0: linalg::norm2(&s),
        s,
        theta,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{propagate_subspaces, DichotomyOptions};
    use crate::field::ConstantField;
    use crate::linalg::CVec;
    use crate::model::{JinXin, LinearSystem};
    use crate::profile::{solve_profile_jinxin_on, uniform_grid};
    use crate::resolvent::{FrequencyPoint, ResolventField};

    fn diag(d: &[f64]) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|v| c64(*v, 0.0))))
    }

    fn empty(grid: &[f64]) -> BlockField {
        BlockField::constant(grid.to_vec(), CMat::zeros(0, 0))
    }

    #[test]
    fn scalar_lyapunov() {
        let grid = uniform_grid(-5.0, 5.0, 101);
        for c in [1.0, 0.3, 4.0] {
            let plus = BlockField::constant(grid.clone(), diag(&[-c]));
            let q = lyapunov_q(&plus, &empty(&grid)).unwrap();
            for m in &q.q_plus {
                assert!((m[(0, 0)].re - 0.5 / c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matrix_lyapunov_matches_quadrature() {
        let lam = CMat::from_row_slice(2, 2, &[c64(-1.0, 0.3), c64(2.0, 0.0), c64(0.0, 0.0), c64(-0.5, -1.0)]);
        let grid = uniform_grid(0.0, 2.0, 41);
        let q = lyapunov_q(&BlockField::constant(grid.clone(), lam.clone()), &empty(&grid)).unwrap();
        // ∫₀^∞ e^{Λᴴt} e^{Λt} dt by composite Simpson on [0, 60]
        let (n, tmax) = (6000, 60.0);
        let dt = tmax / n as f64;
        let step = linalg::expm(&(&lam * c64(dt, 0.0)));
        let mut e = identity(2);
        let mut acc = CMat::zeros(2, 2);
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += e.adjoint() * &e * c64(w * dt / 3.0, 0.0);
            e = &step * e;
        }
        for m in &q.q_plus {
            assert!((m - &acc).norm() < 1e-8, "{m} vs {acc}");
        }
    }

    #[test]
    fn unstable_block_is_rejected() {
        let grid = uniform_grid(0.0, 1.0, 11);
        let err = lyapunov_q(&BlockField::constant(grid.clone(), diag(&[0.5])), &empty(&grid))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Stability(_)));
    }

    #[test]
    fn worked_diagonal_example() {
        let grid = uniform_grid(-2.0, 2.0, 21);
        let forms = lyapunov_q(
            &BlockField::constant(grid.clone(), diag(&[-1.0])),
            &BlockField::constant(grid.clone(), diag(&[1.0])),
        )
        .unwrap();
        let sym = assemble_symmetrizer(&vec![identity(2); 21], &forms, 1e8).unwrap();
        assert!((&sym.s[3] - diag(&[-0.5, 0.5])).norm() < 1e-15);
        let g = vec![diag(&[-1.0, 1.0]); 21];
        let cert = verify_symmetrizer(&sym, &g, 0.5).unwrap();
        assert!((cert.theta_measured - 0.5).abs() < 1e-12, "{}", cert.theta_measured);
        assert!(cert.pass);
        assert!((sym.c0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stable_only_scalar() {
        let grid = uniform_grid(-2.0, 2.0, 21);
        let forms = lyapunov_q(&BlockField::constant(grid.clone(), diag(&[-2.0])), &empty(&grid)).unwrap();
        let sym = assemble_symmetrizer(&vec![identity(1); 21], &forms, 1e8).unwrap();
        assert!(sym.s[0][(0, 0)].re < 0.0);
        let cert = verify_symmetrizer(&sym, &vec![diag(&[-2.0]); 21], 0.4).unwrap();
        assert!((cert.theta_measured - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unitary_frame_keeps_norm() {
        let grid = uniform_grid(-2.0, 2.0, 21);
        let forms = lyapunov_q(
            &BlockField::constant(grid.clone(), diag(&[-0.25])),
            &BlockField::constant(grid.clone(), diag(&[1.0])),
        )
        .unwrap();
        let (c, s) = (0.6, 0.8);
        let u = CMat::from_row_slice(2, 2, &[c64(c, 0.0), c64(0.0, -s), c64(0.0, -s), c64(c, 0.0)]);
        let sym = assemble_symmetrizer(&vec![u; 21], &forms, 1e8).unwrap();
        assert!((sym.c0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn skew_field_with_identity_fails() {
        let grid = uniform_grid(0.0, 1.0, 11);
        let sym = SymmetrizerField::from_nodes(grid, vec![identity(2); 11], Provenance::User);
        let skew = CMat::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(-1.0, 0.0), c64(0.0, 0.0)]);
        let cert = verify_symmetrizer(&sym, &vec![skew; 11], 1e-3).unwrap();
        assert!(cert.theta_measured.abs() < 1e-14);
        assert!(!cert.pass);
    }

    #[test]
    fn non_hermitian_rejected() {
        let grid = uniform_grid(0.0, 1.0, 11);
        let bad = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
        let sym = SymmetrizerField::from_nodes(grid, vec![bad; 11], Provenance::User);
        assert!(matches!(verify_symmetrizer(&sym, &vec![identity(2); 11], 0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn scalar_energy_estimate() {
        let field = ConstantField {
            g: diag(&[-1.0]),
            left: -25.0,
            right: 25.0,
        };
        let grid = uniform_grid(-25.0, 25.0, 2001);
        let mut sym = SymmetrizerField::from_nodes(grid.clone(), vec![identity(1); 2001], Provenance::User);
        sym.c0 = 1.0;
        let check = energy_estimate_check(&sym, &field, 1.0, 100, 5).unwrap();
        assert!(check.worst_ratio <= 1.0 && check.worst_ratio > 0.0, "{check:?}");
        // the BVP solution agrees with the quadrature of u = ∫ e^{−(x−y)} f(y) dy
        let bvp = Bvp::new(&field, 2001).unwrap();
        let f = |y: f64| (-(y - 1.0).powi(2)).exp() * (3.0 * y).cos();
        let sol = bvp.solve(&|x| CVec::from_element(1, c64(f(x), 0.0))).unwrap();
        for k in (200..1800).step_by(150) {
            let x = grid[k];
            let m = 40_000;
            let a = x - 30.0;
            let dy = (x - a) / m as f64;
            let mut acc = 0.0;
            for i in 0..=m {
                let y = a + i as f64 * dy;
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * (-(x - y)).exp() * f(y);
            }
            acc *= dy / 3.0;
            assert!((sol.v.node(k)[0].re - acc).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn zero_forcing_zero_ratio() {
        let field = ConstantField {
            g: diag(&[-1.0]),
            left: -5.0,
            right: 5.0,
        };
        let sym = SymmetrizerField::from_nodes(uniform_grid(-5.0, 5.0, 101), vec![identity(1); 101], Provenance::User);
        let check = energy_estimate_check(&sym, &field, 1.0, 0, 0).unwrap();
        assert_eq!(check.worst_ratio, 0.0);
    }

    #[test]
    fn jinxin_front_certificate() {
        let sys = JinXin::new(2.0);
        let p = solve_profile_jinxin_on(2.0, 1.0, 0.0, Some(30.0), 1201).unwrap();
        let f = ResolventField::new(&sys, &p, FrequencyPoint::real(2.0), None).unwrap();
        let d = propagate_subspaces(&f, &DichotomyOptions::default()).unwrap();
        let (sym, forms) = symmetrizer_from_dichotomy(&d).unwrap();
        let (plus, minus) = d.blocks();
        assert!(forms.derivative_identity_error(&plus, &minus) < 1e-6);
        assert!(sym.hermitian_error() < 1e-12);
        let req = default_theta_req(&d.frames());
        let cert = verify_symmetrizer(&sym, d.g_nodes(), req).unwrap();
        assert!(cert.pass, "{cert:?}");
        // the construction gives 2Re(SG) + S′ = T⁻ᴴT⁻¹ exactly
        assert!((cert.theta_measured - 2.0 * req).abs() < 1e-4 * req, "{} vs {}", cert.theta_measured, 2.0 * req);
        let e = energy_estimate_check(&sym, &f, cert.theta_measured, 20, 3).unwrap();
        assert!(e.worst_ratio <= 1.0, "{e:?}");
    }

    #[test]
    fn normal_case_constant_symmetrizer() {
        let sys = LinearSystem::symmetric_damped(0.7);
        let cs = constant_symmetrizer(&sys, &RVec::zeros(2), &[3.0], None, 1e8).unwrap();
        assert!((cs.s.clone() - identity(2)).norm() < 1e-12);
        assert!((cs.theta - 0.7).abs() < 1e-12);
        assert!(cs.theta_measured >= cs.theta2 - 1e-12);
    }

    #[test]
    fn jinxin_constant_symmetrizer() {
        let sys = JinXin::new(2.0);
        let cs = constant_symmetrizer(&sys, &sys.equilibrium(0.0), &[10.0], None, 1e8).unwrap();
        assert!(linalg::min_hermitian_eigenvalue(&cs.s) > 0.0);
        assert!(cs.theta >= 0.4, "{}", cs.theta);
        assert!(cs.theta_measured >= cs.theta2 - 1e-12);
    }

    #[test]
    fn jordan_symbol_is_geometric_error() {
        // A = [[0,1],[0,0]] with no damping: M = −iA is a Jordan block
        let sys = crate::model::CustomSystem::constant(
            "jordan",
            vec![linalg::RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])],
            linalg::RMat::zeros(2, 2),
        );
        let err = constant_symmetrizer(&sys, &RVec::zeros(2), &[1.0], None, 1e8).err().unwrap();
        assert!(matches!(err, Error::GeometricRegularity(_)), "{err}");
    }
}
