//! Frequency-parametrized resolvent ODE about a front,
//! `λv + (A₁ − s)v′ + Σ iη_j A_j v + E v = f`, solved as a truncated BVP,
//! with randomized gain estimates and the damping/resolvent checks.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{self, HatNorm, Samples};
use crate::error::{Error, Result};
use crate::field::{resolving_nodes, Bvp, BvpSolution, LinearField};
use crate::linalg::{self, c64, to_complex, CMat, CVec, RVec};
use crate::model::{comoving_normal_jacobian, RelaxationSystem};
use crate::profile::WaveProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    /// Transverse frequencies `η_2..η_d`.
    pub eta: Vec<f64>,
    pub lambda: Complex64,
}

impl FrequencyPoint {
    pub fn new(eta: Vec<f64>, lambda: Complex64) -> Self {
        FrequencyPoint { eta, lambda }
    }

    pub fn real(lambda: f64) -> Self {
        FrequencyPoint::new(vec![], c64(lambda, 0.0))
    }

    /// `|η, τ|` with `τ = Im λ`.
    pub fn frequency(&self) -> f64 {
        (self.eta.iter().map(|e| e * e).sum::<f64>() + self.lambda.im * self.lambda.im).sqrt()
    }

    pub fn modulus(&self) -> f64 {
        (self.eta.iter().map(|e| e * e).sum::<f64>() + self.lambda.norm_sqr()).sqrt()
    }
}

/// Frozen small perturbation `v(x) = amplitude · direction · exp(−(x−c)²/(2w²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub amplitude: f64,
    pub direction: Vec<f64>,
    pub center: f64,
    pub width: f64,
}

impl Perturbation {
    pub fn eval(&self, x: f64) -> RVec {
        let g = (-(x - self.center).powi(2) / (2.0 * self.width * self.width)).exp();
        RVec::from_iterator(self.direction.len(), self.direction.iter().map(|d| self.amplitude * d * g))
    }
}

/// `G(x; η, λ, v) = −(A₁ − s)⁻¹(λ + Σ iη_j A_j(w̄+v) + E)` along a profile.
pub struct ResolventField<'a> {
    pub sys: &'a dyn RelaxationSystem,
    pub profile: &'a WaveProfile,
    pub fp: FrequencyPoint,
    pub perturbation: Option<Perturbation>,
}

impl<'a> ResolventField<'a> {
    pub fn new(
        sys: &'a dyn RelaxationSystem,
        profile: &'a WaveProfile,
        fp: FrequencyPoint,
        perturbation: Option<Perturbation>,
    ) -> Result<Self> {
        if fp.eta.len() + 1 != sys.space_dim() {
            return Err(Error::Argument(format!(
                "{} transverse frequencies for a {}-d system",
                fp.eta.len(),
                sys.space_dim()
            )));
        }
        if !(fp.lambda.re.is_finite() && fp.lambda.im.is_finite()) || fp.eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::Argument("frequency point must be finite".into()));
        }
        if let Some(p) = &perturbation {
            if p.direction.len() != sys.state_dim() {
                return Err(Error::Argument("perturbation direction has wrong dimension".into()));
            }
        }
        let field = ResolventField {
            sys,
            profile,
            fp,
            perturbation,
        };
        for (i, x) in profile.grid.iter().enumerate() {
            let a = field.normal_matrix(*x)?;
            if linalg::smallest_singular_value(&a) < 1e-10 {
                return Err(Error::Model(format!("A_1 - s Id is singular at profile node {i} (x = {x})")));
            }
        }
        Ok(field)
    }

    fn state(&self, x: f64) -> Result<(RVec, RVec, RVec)> {
        let (w, dw) = self.profile.sample(x)?;
        let v = self
            .perturbation
            .as_ref()
            .map_or_else(|| RVec::zeros(w.len()), |p| p.eval(x));
        Ok((w, dw, v))
    }

    fn normal_matrix(&self, x: f64) -> Result<CMat> {
        let (w, _, v) = self.state(x)?;
        Ok(to_complex(&comoving_normal_jacobian(self.sys, &(w + v), self.profile.speed)?))
    }

    fn coefficients(&self, w: &RVec, dw: &RVec, v: &RVec) -> Result<(CMat, CMat)> {
        let wv = w + v;
        let a = to_complex(&comoving_normal_jacobian(self.sys, &wv, self.profile.speed)?);
        let b = linalg::inverse(&a)?;
        let n = w.len();
        let mut e = -self.sys.relax_jacobian(w);
        if dw.amax() > 0.0 {
            e += self.sys.flux_jacobian_derivative(&wv, dw, 0);
        }
        let mut k = to_complex(&e) + linalg::identity(n) * self.fp.lambda;
        for (j, eta) in self.fp.eta.iter().enumerate() {
            k += to_complex(&self.sys.flux_jacobian(&wv, j + 1)) * c64(0.0, *eta);
        }
        Ok((-(&b * k), b))
    }

    /// `(G(x), (A₁ − s)⁻¹)` at `x`.
    pub fn at(&self, x: f64) -> Result<(CMat, CMat)> {
        let (w, dw, v) = self.state(x)?;
        self.coefficients(&w, &dw, &v)
    }

    /// Constant limits `G±∞` evaluated at the endstates.
    pub fn limits(&self) -> Result<(CMat, CMat)> {
        let n = self.sys.state_dim();
        let z = RVec::zeros(n);
        let gm = self.coefficients(&self.profile.endstates.0, &z, &z)?.0;
        let gp = self.coefficients(&self.profile.endstates.1, &z, &z)?.0;
        Ok((gm, gp))
    }
}

impl LinearField for ResolventField<'_> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }
    fn domain(&self) -> (f64, f64) {
        (self.profile.left(), self.profile.right())
    }
    fn eval(&self, x: f64) -> CMat {
        self.at(x).map(|(g, _)| g).unwrap_or_else(|_| {
            let n = self.dim();
            CMat::from_element(n, n, c64(f64::NAN, 0.0))
        })
    }
}

/// Conjugation by the weight `e^{αx}`: `v_α = e^{αx} v` solves
/// `v_α′ = (G + α) v_α + e^{αx} b`.
pub struct WeightedField<'a> {
    pub inner: &'a dyn LinearField,
    pub alpha: f64,
}

impl LinearField for WeightedField<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }
    fn eval(&self, x: f64) -> CMat {
        self.inner.eval(x) + linalg::identity(self.dim()) * c64(self.alpha, 0.0)
    }
}

// ---------------------------------------------------------------- forcing

/// Gaussian wave packet `c · exp(−(x−x₀)²/(2σ²)) · e^{ikx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    pub coeff: CVec,
    pub center: f64,
    pub width: f64,
    pub wavenumber: f64,
}

impl WavePacket {
    pub fn eval(&self, x: f64) -> CVec {
        let env = (-(x - self.center).powi(2) / (2.0 * self.width * self.width)).exp();
        &self.coeff * (c64(0.0, self.wavenumber * x).exp() * env)
    }

    pub fn write(&self, x: f64, out: &mut [Complex64]) {
        let env = (-(x - self.center).powi(2) / (2.0 * self.width * self.width)).exp();
        let ph = c64(0.0, self.wavenumber * x).exp() * env;
        for (o, c) in out.iter_mut().zip(self.coeff.iter()) {
            *o = c * ph;
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, n: usize, domain: (f64, f64), k_max: f64) -> Self {
        let (a, b) = domain;
        let span = b - a;
        let coeff = CVec::from_iterator(n, (0..n).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        WavePacket {
            coeff,
            center: a + span * rng.gen_range(0.25..0.75),
            width: rng.gen_range(0.5..(span / 12.0).max(0.6)),
            wavenumber: rng.gen_range(-k_max..=k_max),
        }
    }
}

// ---------------------------------------------------------------- solver

/// Forcing sampled at the BVP nodes and interval midpoints.
#[derive(Debug, Clone)]
pub struct SampledForcing {
    pub nodes: Samples,
    pub mids: Samples,
}

impl SampledForcing {
    pub fn from_fn(grid: &[f64], h: f64, f: &dyn Fn(f64) -> CVec) -> Self {
        let n = f(grid[0]).len();
        SampledForcing::from_writer(grid, h, n, &|x, z| z.copy_from_slice(f(x).as_slice()))
    }

    /// Same, with `f(x, out)` writing into the slot for `x`.
    pub fn from_writer(grid: &[f64], h: f64, n: usize, f: &dyn Fn(f64, &mut [Complex64])) -> Self {
        SampledForcing {
            nodes: Samples::from_fn(grid.len(), n, |k, z| f(grid[k], z)),
            mids: Samples::from_fn(grid.len() - 1, n, |k, z| f(grid[k] + 0.5 * h, z)),
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        SampledForcing {
            nodes: self.nodes.scaled(a),
            mids: self.mids.scaled(a),
        }
    }
}

fn apply_blocks(mats: &[CMat], f: &Samples) -> Samples {
    let n = f.dim();
    Samples::from_fn(f.len(), n, |k, z| {
        let (m, fk) = (&mats[k], f.node(k));
        for i in 0..n {
            z[i] = (0..n).map(|c| m[(i, c)] * fk[c]).sum();
        }
    })
}

/// One forcing/response pair with the norms used by the checks.
#[derive(Debug, Clone)]
pub struct Response {
    pub solution: BvpSolution,
    pub f_hat: f64,
    pub f_l2: f64,
    pub v_hat: f64,
    pub v_l2: f64,
    pub v_h1: f64,
}

impl Response {
    pub fn gain(&self) -> f64 {
        self.v_hat / self.f_hat
    }

    /// `‖v‖_{Ĥs} / (‖f‖_{Ĥs} + ‖v‖_{L²})`
    pub fn pdamp_ratio(&self) -> f64 {
        self.v_hat / (self.f_hat + self.v_l2)
    }

    /// `‖v‖_{L²} / (‖v‖_{H¹} + ‖f‖_{L²})`
    pub fn absorption(&self) -> f64 {
        self.v_l2 / (self.v_h1 + self.f_l2)
    }
}

/// A factored resolvent BVP at one frequency.
pub struct ResolventSolver {
    pub bvp: Bvp,
    pub norm: HatNorm,
    pub fp: FrequencyPoint,
    b_nodes: Vec<CMat>,
    b_mids: Vec<CMat>,
    n: usize,
}

impl ResolventSolver {
    pub fn new(field: &ResolventField<'_>, s: usize, h_max: f64) -> Result<Self> {
        let nodes = resolving_nodes(field, h_max);
        Self::with_nodes(field, s, nodes)
    }

    pub fn with_nodes(field: &ResolventField<'_>, s: usize, nodes: usize) -> Result<Self> {
        if s > 3 {
            return Err(Error::Argument("Sobolev order s must be an integer <= 3".into()));
        }
        let (a, b) = field.domain();
        if nodes < 5 {
            return Err(Error::Argument("resolvent grid needs >= 5 nodes".into()));
        }
        let h = (b - a) / (nodes - 1) as f64;
        let grid: Vec<f64> = (0..nodes).map(|i| a + h * i as f64).collect();
        let (g_nodes, b_nodes): (Vec<CMat>, Vec<CMat>) =
            grid.iter().map(|&x| field.at(x)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let (g_mid, b_mids): (Vec<CMat>, Vec<CMat>) = grid[..nodes - 1]
            .iter()
            .map(|&x| field.at(x + 0.5 * h))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let (gl, gr) = (g_nodes[0].clone(), g_nodes[nodes - 1].clone());
        let bvp = Bvp::assemble(grid, g_nodes, g_mid, &gl, &gr)?;
        Ok(ResolventSolver {
            norm: HatNorm::new(s, field.fp.frequency()),
            fp: field.fp.clone(),
            bvp,
            b_nodes,
            b_mids,
            n: field.dim(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.bvp.grid
    }

    pub fn h(&self) -> f64 {
        self.bvp.h
    }

    /// Largest wavenumber the grid resolves comfortably.
    pub fn max_wavenumber(&self) -> f64 {
        0.5 / self.h()
    }

    pub fn sample(&self, f: &dyn Fn(f64) -> CVec) -> SampledForcing {
        SampledForcing::from_fn(self.grid(), self.h(), f)
    }

    pub fn respond(&self, f: &SampledForcing) -> Result<Response> {
        let solution = self
            .bvp
            .solve_sampled(apply_blocks(&self.b_nodes, &f.nodes), apply_blocks(&self.b_mids, &f.mids))?;
        let h = self.h();
        let fstack = discrete::derivative_stack(&f.nodes, None, self.norm.s, h);
        let vstack = discrete::derivative_stack(&solution.v, Some(&solution.dv), self.norm.s.max(1), h);
        let f_l2 = discrete::l2_norm(&f.nodes, h);
        let v_l2 = discrete::l2_norm(&solution.v, h);
        let v_h1 = discrete::sobolev_norm(&vstack[..2], h);
        Ok(Response {
            f_hat: self.norm.from_stack(&fstack, h),
            v_hat: self.norm.from_stack(&vstack, h),
            f_l2,
            v_l2,
            v_h1,
            solution,
        })
    }

    /// Forcing proportional to a previous response, interpolated to the
    /// midpoints by cubic Hermite data `(v, v′)`.
    fn forcing_from_response(&self, r: &Response) -> SampledForcing {
        let h = self.h();
        let v = &r.solution.v;
        let dv = &r.solution.dv;
        let mids = Samples::from_fn(v.len() - 1, v.dim(), |k, z| {
            for (i, o) in z.iter_mut().enumerate() {
                *o = (v.node(k)[i] + v.node(k + 1)[i]) * 0.5 + (dv.node(k)[i] - dv.node(k + 1)[i]) * (h / 8.0);
            }
        });
        let s = SampledForcing { nodes: v.clone(), mids };
        let nrm = discrete::l2_norm(&s.nodes, h).max(1e-300);
        s.scale(c64(1.0 / nrm, 0.0))
    }

    /// Randomized trials plus power-iteration refinement of the best trial.
    pub fn trials(&self, trials: usize, power_iters: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Response>> {
        let k_max = self.max_wavenumber().min(linalg::norm2(self.bvp.g_at_node(0)).max(1.0) * 1.2 + 2.0);
        let domain = (self.grid()[0], *self.grid().last().expect("grid"));
        let mut out = Vec::with_capacity(trials + power_iters);
        for _ in 0..trials {
            let packet = WavePacket::random(rng, self.n, domain, k_max);
            let f = SampledForcing::from_writer(self.grid(), self.h(), self.n, &|x, z| packet.write(x, z));
            out.push(self.respond(&f)?);
        }
        if let Some(best) = out
            .iter()
            .max_by(|a, b| a.gain().partial_cmp(&b.gain()).unwrap_or(std::cmp::Ordering::Equal))
            .cloned()
        {
            let mut cur = best;
            for _ in 0..power_iters {
                let f = self.forcing_from_response(&cur);
                cur = self.respond(&f)?;
                out.push(cur.clone());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub gain: f64,
    pub trials: usize,
    pub power_iterations: usize,
    pub max_residual: f64,
    pub method: String,
}

pub const GAIN_METHOD: &str = "randomized lower bound: max over wave-packet forcings plus power iteration";

pub fn estimate_resolvent_gain(
    solver: &ResolventSolver,
    trials: usize,
    power_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GainEstimate> {
    if trials == 0 {
        return Err(Error::Argument("at least one trial is required".into()));
    }
    let rs = solver.trials(trials, power_iters, rng)?;
    Ok(GainEstimate {
        gain: rs.iter().map(Response::gain).fold(0.0, f64::max),
        trials,
        power_iterations: power_iters,
        max_residual: rs.iter().map(|r| r.solution.residual / r.f_l2.max(1e-300)).fold(0.0, f64::max),
        method: GAIN_METHOD.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingConstants {
    pub c: f64,
    pub gamma_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdampCheck {
    pub pass: bool,
    /// `max ‖v‖_{Ĥs}(Re λ − γ*) / (C(‖f‖_{Ĥs} + ‖v‖_{L²}))`; pass iff ≤ 1.
    pub worst_ratio: f64,
}

pub fn verify_pdamp(responses: &[Response], fp: &FrequencyPoint, k: DampingConstants) -> Result<PdampCheck> {
    let margin = fp.lambda.re - k.gamma_star;
    if !(margin > 0.0) {
        return Err(Error::Argument(format!(
            "Re lambda = {} must exceed gamma* = {}",
            fp.lambda.re, k.gamma_star
        )));
    }
    let worst = responses.iter().map(|r| r.pdamp_ratio() * margin / k.c).fold(0.0, f64::max);
    Ok(PdampCheck {
        pass: worst <= 1.0,
        worst_ratio: worst,
    })
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub s: usize,
    pub trials: usize,
    pub power_iterations: usize,
    pub gamma_star: f64,
    pub h_max: f64,
    pub seed: u64,
    /// Fraction of the grid (largest |λ|) used to calibrate the constants.
    pub calibration_fraction: f64,
    /// Multiplier applied to calibrated constants.
    pub safety: f64,
    /// |λ| from which the absorption exponent is fitted.
    pub absorption_from: f64,
    /// Explicit constants override calibration.
    pub c_hfres: Option<f64>,
    pub c_pdamp: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            s: 1,
            trials: 32,
            power_iterations: 3,
            gamma_star: -0.1,
            h_max: 0.1,
            seed: 0,
            calibration_fraction: 0.5,
            safety: 2.0,
            absorption_from: 10.0,
            c_hfres: None,
            c_pdamp: None,
        }
    }
}

/// `count_r` radii log-spaced in `[r_min, r_max]` times `count_phi` phases
/// with `Re λ ≥ 0`, at the given transverse frequency.
pub fn frequency_grid(r_min: f64, r_max: f64, count_r: usize, count_phi: usize, eta: &[f64]) -> Vec<FrequencyPoint> {
    let mut out = Vec::with_capacity(count_r * count_phi);
    let half = std::f64::consts::FRAC_PI_2;
    for i in 0..count_r {
        let r = if count_r == 1 {
            r_min
        } else {
            r_min * (r_max / r_min).powf(i as f64 / (count_r - 1) as f64)
        };
        for j in 0..count_phi {
            let phi = if count_phi == 1 {
                0.0
            } else {
                -half + std::f64::consts::PI * j as f64 / (count_phi - 1) as f64
            };
            let mut lambda = Complex64::from_polar(r, phi);
            if lambda.re.abs() < 1e-12 * r {
                lambda.re = 0.0;
            }
            out.push(FrequencyPoint::new(eta.to_vec(), lambda));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub fp: FrequencyPoint,
    pub singular: bool,
    pub note: Option<String>,
    pub nodes: usize,
    pub gain: f64,
    pub pdamp_ratio: f64,
    pub bounded_ratio: f64,
    pub absorption: f64,
    pub max_residual: f64,
    /// `gain · (Re λ − γ*)`
    pub hfres_measure: f64,
    /// `pdamp_ratio · (Re λ − γ*)`
    pub pdamp_measure: f64,
    pub hfres_pass: bool,
    pub pdamp_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
    pub c_hfres: f64,
    pub c_pdamp: f64,
    pub gamma_star: f64,
    pub s: usize,
    pub agreement: f64,
    pub singular_count: usize,
    pub absorption_exponent: Option<f64>,
    /// `max ‖v‖_{Ĥs}/‖v‖_{L²}` over points with |λ| below `absorption_from`.
    pub bounded_constant: Option<f64>,
    pub method: String,
}

fn measure_point(
    sys: &dyn RelaxationSystem,
    profile: &WaveProfile,
    fp: &FrequencyPoint,
    cfg: &SweepConfig,
    seed: u64,
) -> PointResult {
    let mut res = PointResult {
        fp: fp.clone(),
        singular: false,
        note: None,
        nodes: 0,
        gain: f64::NAN,
        pdamp_ratio: f64::NAN,
        bounded_ratio: f64::NAN,
        absorption: f64::NAN,
        max_residual: f64::NAN,
        hfres_measure: f64::INFINITY,
        pdamp_measure: f64::INFINITY,
        hfres_pass: false,
        pdamp_pass: false,
    };
    let margin = fp.lambda.re - cfg.gamma_star;
    if !(margin > 0.0) {
        res.singular = true;
        res.note = Some("Re lambda <= gamma*".into());
        return res;
    }
    let run = || -> Result<(usize, Vec<Response>)> {
        let field = ResolventField::new(sys, profile, fp.clone(), None)?;
        let solver = ResolventSolver::new(&field, cfg.s, cfg.h_max)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((solver.bvp.nodes(), solver.trials(cfg.trials, cfg.power_iterations, &mut rng)?))
    };
    match run() {
        Err(e @ (Error::CenterSpectrum { .. } | Error::Dichotomy(_))) => {
            res.singular = true;
            res.note = Some(e.to_string());
        }
        Err(e) => {
            res.singular = true;
            res.note = Some(format!("solver failure: {e}"));
        }
        Ok((nodes, rs)) => {
            res.nodes = nodes;
            res.gain = rs.iter().map(Response::gain).fold(0.0, f64::max);
            res.pdamp_ratio = rs.iter().map(Response::pdamp_ratio).fold(0.0, f64::max);
            res.bounded_ratio = rs.iter().map(|r| r.v_hat / r.v_l2.max(1e-300)).fold(0.0, f64::max);
            res.absorption = rs.iter().map(Response::absorption).fold(0.0, f64::max);
            res.max_residual = rs
                .iter()
                .map(|r| r.solution.residual / r.f_l2.max(1e-300))
                .fold(0.0, f64::max);
            res.hfres_measure = res.gain * margin;
            res.pdamp_measure = res.pdamp_ratio * margin;
        }
    }
    res
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs both the resolvent (hfres) and damping (pdamp) measurements on every
/// grid point, calibrates the constants on the high-frequency part of the
/// grid, and reports how far the two pass sets agree.
pub fn verify_equivalence(
    sys: &dyn RelaxationSystem,
    profile: &WaveProfile,
    grid: &[FrequencyPoint],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Argument("empty frequency grid".into()));
    }
    let mut points: Vec<PointResult> = grid
        .par_iter()
        .enumerate()
        .map(|(i, fp)| measure_point(sys, profile, fp, cfg, cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64)))
        .collect();
    let regular: Vec<usize> = (0..points.len()).filter(|&i| !points[i].singular).collect();
    let mut by_size = regular.clone();
    by_size.sort_by(|&a, &b| {
        points[b]
            .fp
            .modulus()
            .partial_cmp(&points[a].fp.modulus())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let take = ((by_size.len() as f64 * cfg.calibration_fraction).ceil() as usize).clamp(1.min(by_size.len()), by_size.len());
    let calib = &by_size[..take];
    let fit = |f: &dyn Fn(&PointResult) -> f64| calib.iter().map(|&i| f(&points[i])).fold(0.0, f64::max) * cfg.safety;
    let c_hfres = cfg.c_hfres.unwrap_or_else(|| fit(&|p| p.hfres_measure));
    let c_pdamp = cfg.c_pdamp.unwrap_or_else(|| fit(&|p| p.pdamp_measure));
    for &i in &regular {
        let p = &mut points[i];
        p.hfres_pass = p.hfres_measure <= c_hfres;
        p.pdamp_pass = p.pdamp_measure <= c_pdamp;
    }
    let agree = regular.iter().filter(|&&i| points[i].hfres_pass == points[i].pdamp_pass).count();
    let agreement = if regular.is_empty() {
        0.0
    } else {
        agree as f64 / regular.len() as f64
    };
    let absorption_exponent = loglog_slope(
        &regular
            .iter()
            .filter(|&&i| points[i].fp.modulus() >= cfg.absorption_from)
            .map(|&i| (points[i].fp.modulus(), points[i].absorption))
            .collect::<Vec<_>>(),
    );
    let bounded: Vec<f64> = regular
        .iter()
        .filter(|&&i| points[i].fp.modulus() < cfg.absorption_from)
        .map(|&i| points[i].bounded_ratio)
        .collect();
    Ok(SweepResult {
        singular_count: points.len() - regular.len(),
        points,
        c_hfres,
        c_pdamp,
        gamma_star: cfg.gamma_star,
        s: cfg.s,
        agreement,
        absorption_exponent,
        bounded_constant: (!bounded.is_empty()).then(|| bounded.iter().cloned().fold(0.0, f64::max)),
        method: GAIN_METHOD.into(),
    })
}

impl SweepResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d_eta = self.points.first().map_or(0, |p| p.fp.eta.len());
        let mut header = vec!["re_lambda".to_string(), "im_lambda".to_string()];
        header.extend((0..d_eta).map(|j| format!("eta_{}", j + 2)));
        header.extend(
            ["gain", "pdamp_ratio", "absorption", "hfres_pass", "pdamp_pass", "singular"]
                .iter()
                .map(|s| s.to_string()),
        );
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let mut row = vec![format!("{:e}", p.fp.lambda.re), format!("{:e}", p.fp.lambda.im)];
            row.extend(p.fp.eta.iter().map(|e| format!("{e:e}")));
            row.push(format!("{:e}", p.gain));
            row.push(format!("{:e}", p.pdamp_ratio));
            row.push(format!("{:e}", p.absorption));
            row.push(p.hfres_pass.to_string());
            row.push(p.pdamp_pass.to_string());
            row.push(p.singular.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::model::{JinXin, LinearSystem};
    use crate::profile::{solve_profile_jinxin_on, WaveProfile};

    fn front() -> (JinXin, WaveProfile) {
        (JinXin::new(2.0), solve_profile_jinxin_on(2.0, 1.0, 0.0, Some(40.0), 801).unwrap())
    }

    #[test]
    fn constant_profile_field_by_hand() {
        let sys = JinXin::new(2.0);
        let p = WaveProfile::constant(sys.equilibrium(0.0), 0.5, 5.0, 11);
        let f = ResolventField::new(&sys, &p, FrequencyPoint::real(1.0), None).unwrap();
        // A₁ − s = [[−½, 1], [4, −½]], det = −3.75; E = [[0, 0], [0, 1]]
        let inv = CMat::from_row_slice(2, 2, &[c64(-0.5, 0.0), c64(-1.0, 0.0), c64(-4.0, 0.0), c64(-0.5, 0.0)])
            * c64(1.0 / -3.75, 0.0);
        let expect = -(inv * CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(2.0, 0.0)]));
        for x in [-5.0, 0.3, 5.0] {
            assert!((f.at(x).unwrap().0 - &expect).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_generator() {
        let sys = LinearSystem::symmetric_damped(0.0);
        let p = WaveProfile::constant(RVec::zeros(2), 0.5, 5.0, 11);
        let f = ResolventField::new(&sys, &p, FrequencyPoint::real(0.0), None).unwrap();
        assert_eq!(f.at(1.0).unwrap().0.norm(), 0.0);
    }

    #[test]
    fn limits_match_endstates() {
        let (sys, p) = front();
        let f = ResolventField::new(&sys, &p, FrequencyPoint::real(2.0), None).unwrap();
        let (gm, gp) = f.limits().unwrap();
        let far_left = f.at(-1e3).unwrap().0;
        let far_right = f.at(1e3).unwrap().0;
        assert!((gm - far_left).norm() < 1e-14);
        assert!((gp - far_right).norm() < 1e-14);
    }

    #[test]
    fn characteristic_profile_is_model_error() {
        let sys = JinXin::new(1.0);
        let p = WaveProfile::constant(sys.equilibrium(0.0), 1.0, 5.0, 11);
        let err = ResolventField::new(&sys, &p, FrequencyPoint::real(1.0), None).err().unwrap();
        assert!(matches!(err, Error::Model(_)), "{err}");
    }

    #[test]
    fn front_residual_and_phase_equivariance() {
        let (sys, p) = front();
        let f = ResolventField::new(&sys, &p, FrequencyPoint::real(2.0), None).unwrap();
        let solver = ResolventSolver::new(&f, 1, 0.05).unwrap();
        let bump = |x: f64| CVec::from_vec(vec![c64((-(x - 1.0) * (x - 1.0)).exp(), 0.0), c64(0.0, 0.0)]);
        let forcing = solver.sample(&bump);
        let r = solver.respond(&forcing).unwrap();
        assert!(r.solution.residual <= 1e-8, "residual {:e}", r.solution.residual);
        let phase = Complex64::from_polar(1.0, 0.7);
        let r2 = solver.respond(&forcing.scale(phase)).unwrap();
        for (a, b) in r.solution.v.as_slice().iter().zip(r2.solution.v.as_slice()) {
            assert!((a * phase - b).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_coefficient_matches_fourier_oracle() {
        // v′ = G v + b with constant G: compare with the Fourier solve of a
        // localized forcing on a periodic supergrid
        let g = CMat::from_row_slice(2, 2, &[c64(-1.0, 0.5), c64(0.4, 0.0), c64(0.3, 0.0), c64(1.5, -0.2)]);
        let field = ConstantField {
            g: g.clone(),
            left: -30.0,
            right: 30.0,
        };
        let bvp = Bvp::new(&field, 2401).unwrap();
        let rhs = |x: f64| CVec::from_vec(vec![c64((-x * x).exp(), 0.0), c64(0.0, (-(x - 0.5).powi(2)).exp())]);
        let sol = bvp.solve(&rhs).unwrap();
        let nper = 4800;
        let period = 120.0;
        let dx = period / nper as f64;
        let mut planner = rustfft::FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nper);
        let inv = planner.plan_fft_inverse(nper);
        let mut comps: Vec<Vec<Complex64>> = (0..2)
            .map(|c| (0..nper).map(|j| rhs(-period / 2.0 + j as f64 * dx)[c]).collect())
            .collect();
        for c in comps.iter_mut() {
            fwd.process(c);
        }
        let mut out: Vec<Vec<Complex64>> = vec![vec![c64(0.0, 0.0); nper]; 2];
        for j in 0..nper {
            let k = if j <= nper / 2 { j as f64 } else { j as f64 - nper as f64 } * 2.0 * std::f64::consts::PI / period;
            // (ik − G) v̂ = b̂
            let m = linalg::identity(2) * c64(0.0, k) - &g;
            let b = CVec::from_vec(vec![comps[0][j], comps[1][j]]);
            let v = m.lu().solve(&b).unwrap();
            out[0][j] = v[0];
            out[1][j] = v[1];
        }
        for c in out.iter_mut() {
            inv.process(c);
        }
        for (x, v) in sol.grid.iter().zip(sol.v.iter()).step_by(40) {
            let j = ((x + period / 2.0) / dx).round() as usize;
            for c in 0..2 {
                let oracle = out[c][j] / nper as f64;
                assert!((v[c] - oracle).norm() < 1e-7, "x = {x}: {} vs {}", v[c], oracle);
            }
        }
    }

    #[test]
    fn constant_coefficient_gain_within_factor_two_of_symbol() {
        let sys = LinearSystem::symmetric_damped(0.5);
        let p = WaveProfile::constant(RVec::zeros(2), 0.25, 30.0, 11);
        let fp = FrequencyPoint::new(vec![], c64(0.3, 4.0));
        let field = ResolventField::new(&sys, &p, fp.clone(), None).unwrap();
        // s = 0 so the Ĥ⁰ gain is the L² operator norm
        let solver = ResolventSolver::new(&field, 0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = estimate_resolvent_gain(&solver, 32, 4, &mut rng).unwrap();
        let a = to_complex(&sys.flux[0]) - linalg::identity(2) * c64(0.25, 0.0);
        let e = linalg::identity(2) * c64(0.5, 0.0);
        let mut sup: f64 = 0.0;
        for j in 0..20001 {
            let xi = -20.0 + 40.0 * j as f64 / 20000.0;
            let m = linalg::identity(2) * fp.lambda + &a * c64(0.0, xi) + &e;
            sup = sup.max(linalg::norm2(&linalg::inverse(&m).unwrap()));
        }
        assert!(est.gain <= sup * 1.02, "gain {} exceeds symbol bound {sup}", est.gain);
        assert!(est.gain >= sup / 2.0, "gain {} below half of {sup}", est.gain);
    }

    #[test]
    fn pdamp_rejects_frequency_left_of_gamma_star() {
        let k = DampingConstants { c: 1.0, gamma_star: -0.1 };
        assert!(verify_pdamp(&[], &FrequencyPoint::real(-0.2), k).is_err());
    }

    #[test]
    fn skew_imaginary_axis_points_fail_together() {
        let sys = LinearSystem::symmetric_damped(0.0);
        let p = WaveProfile::constant(RVec::zeros(2), 0.25, 10.0, 11);
        let grid = vec![FrequencyPoint::new(vec![], c64(0.0, 3.0))];
        let r = verify_equivalence(&sys, &p, &grid, &SweepConfig { trials: 2, ..Default::default() }).unwrap();
        assert!(r.points[0].singular);
        assert!(!r.points[0].hfres_pass && !r.points[0].pdamp_pass);
    }

    #[test]
    fn small_front_sweep_agrees() {
        let (sys, p) = front();
        let grid = frequency_grid(10.0, 100.0, 4, 3, &[]);
        let cfg = SweepConfig {
            trials: 6,
            power_iterations: 1,
            ..Default::default()
        };
        let r = verify_equivalence(&sys, &p, &grid, &cfg).unwrap();
        assert_eq!(r.singular_count, 0);
        assert_eq!(r.agreement, 1.0);
        let e = r.absorption_exponent.unwrap();
        assert!((e + 1.0).abs() < 0.2, "exponent {e}");
        assert!(r.points.iter().all(|p| p.max_residual < 1e-8));
    }
}
