//! Semidiscrete simulation of the perturbation equations about a planar
//! front in one space dimension, with the energy functionals and damping
//! checks evaluated on the resulting trajectories.
//!
//! The phase modulation is fixed to zero. Transport uses third-order
//! upwind-biased differences on split fluxes and SSP-RK3 in time.

use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::discrete::{self, stencil};
use crate::error::{Error, Result};
use crate::linalg::{self, RMat, RVec};
use crate::model::{comoving_normal_jacobian, zero_order_coefficient, RelaxationSystem};
use crate::profile::{csv_err, uniform_grid, WaveProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Linearized,
    Nonlinear,
}

/// Spatial weight `α(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    Unit,
    /// `α = e^{a x}`
    Exp(f64),
}

impl Weight {
    pub fn at(&self, x: f64) -> f64 {
        match *self {
            Weight::Unit => 1.0,
            Weight::Exp(a) => (a * x).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Courant number limit for `dt max|speed| / dx`.
    pub cfl: f64,
    /// Sup-norm beyond which a run is declared unstable.
    pub sup_cap: f64,
    /// Width of the absorbing layers at both ends (0 disables them).
    pub sponge_width: f64,
    pub sponge_strength: f64,
    /// Allowed `|v|` at the truncation points.
    pub boundary_tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            cfl: 0.9,
            sup_cap: 1e6,
            sponge_width: 0.0,
            sponge_strength: 5.0,
            boundary_tol: 1e-6,
        }
    }
}

/// Forcing `f(t, x)` written into the output slice.
pub type Forcing<'f> = &'f (dyn Fn(f64, f64, &mut [f64]) + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// External forcing plus, in nonlinear mode, the quadratic remainder.
    pub forcing: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub grid: Vec<f64>,
    /// Node-major, `n` components per node.
    pub v: Vec<f64>,
    pub n: usize,
    pub t: f64,
    pub history: Option<History>,
}

impl SimState {
    pub fn zeros(grid: &[f64], n: usize) -> Self {
        SimState {
            grid: grid.to_vec(),
            v: vec![0.0; grid.len() * n],
            n,
            t: 0.0,
            history: None,
        }
    }

    pub fn from_fn(grid: &[f64], n: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut s = SimState::zeros(grid, n);
        for (k, slot) in s.v.chunks_exact_mut(n).enumerate() {
            f(grid[k], slot);
        }
        s
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.v[k * self.n..(k + 1) * self.n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.v.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    /// Largest `|v|` at the two end nodes.
    pub fn boundary_value(&self) -> f64 {
        let last = self.grid.len() - 1;
        let norm = |k: usize| self.node(k).iter().map(|z| z * z).sum::<f64>().sqrt();
        norm(0).max(norm(last))
    }
}

struct Nonlinear<'a> {
    sys: &'a dyn RelaxationSystem,
    speed: f64,
    wbar: Vec<RVec>,
    fbar: Vec<RVec>,
    rbar: Vec<RVec>,
    /// Splitting speed for the Lax–Friedrichs flux decomposition.
    alpha: f64,
}

/// Discretized perturbation operator about a front (or a constant state).
pub struct Simulator<'a> {
    pub grid: Vec<f64>,
    pub dx: f64,
    pub n: usize,
    pub periodic: bool,
    pub opts: SimOptions,
    a_plus: Vec<f64>,
    a_minus: Vec<f64>,
    e: Vec<f64>,
    sponge: Vec<f64>,
    max_speed: f64,
    nonlinear: Option<Nonlinear<'a>>,
}

/// `A = A⁺ + A⁻` by the eigen-decomposition of a real hyperbolic matrix.
fn split(a: &RMat) -> Result<(RMat, RMat, f64)> {
    let eig = linalg::eigen(&linalg::to_complex(a))?;
    let scale = a.amax().max(1.0);
    if eig.values.iter().any(|z| z.im.abs() > 1e-9 * scale) {
        return Err(Error::Model(format!("transport matrix has complex spectrum {:?}", eig.values)));
    }
    let rinv = linalg::inverse(&eig.vectors)?;
    let part = |pick: fn(f64) -> f64| -> RMat {
        let d = linalg::CMat::from_diagonal(&linalg::CVec::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|z| linalg::c64(pick(z.re), 0.0)),
        ));
        (&eig.vectors * d * &rinv).map(|z| z.re)
    };
    let radius = eig.values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    Ok((part(|x| x.max(0.0)), part(|x| x.min(0.0)), radius))
}

fn push_matrix(out: &mut Vec<f64>, m: &RMat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

/// `out += sign · M x` for a row-major block `m`.
fn mat_acc(m: &[f64], x: &[f64], sign: f64, out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        *o += sign * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl<'a> Simulator<'a> {
    /// Operator about `profile` on `[−L, L]` with `nodes` points and
    /// outflow ends.
    pub fn front(
        sys: &'a dyn RelaxationSystem,
        profile: &WaveProfile,
        half_width: f64,
        nodes: usize,
        opts: SimOptions,
    ) -> Result<Self> {
        if nodes < 5 || !(half_width > 0.0) {
            return Err(Error::Argument("simulation grid needs >= 5 nodes and L > 0".into()));
        }
        let grid = uniform_grid(-half_width, half_width, nodes);
        let n = sys.state_dim();
        let (mut a_plus, mut a_minus, mut e) = (vec![], vec![], vec![]);
        let mut max_speed: f64 = 0.0;
        let (mut wbar, mut fbar, mut rbar) = (vec![], vec![], vec![]);
        for &x in &grid {
            let (w, dw) = profile.sample(x)?;
            let a = comoving_normal_jacobian(sys, &w, profile.speed)?;
            let (p, m, r) = split(&a)?;
            max_speed = max_speed.max(r);
            push_matrix(&mut a_plus, &p);
            push_matrix(&mut a_minus, &m);
            push_matrix(&mut e, &zero_order_coefficient(sys, &w, &dw).matrix);
            fbar.push(sys.flux(&w, 0) - &w * profile.speed);
            rbar.push(sys.source(&w));
            wbar.push(w);
        }
        let mut sim = Simulator {
            dx: grid[1] - grid[0],
            grid,
            n,
            periodic: false,
            opts,
            a_plus,
            a_minus,
            e,
            sponge: vec![],
            max_speed,
            nonlinear: Some(Nonlinear {
                sys,
                speed: profile.speed,
                wbar,
                fbar,
                rbar,
                alpha: 1.1 * max_speed,
            }),
        };
        sim.sponge = sim.sponge_profile();
        Ok(sim)
    }

    /// Constant-coefficient operator `v_t + A v_x + E v = f`; periodic grids
    /// omit the right endpoint.
    pub fn constant(a: &RMat, e: &RMat, half_width: f64, nodes: usize, periodic: bool, opts: SimOptions) -> Result<Self> {
        if nodes < 5 || !(half_width > 0.0) || a.nrows() != e.nrows() {
            return Err(Error::Argument("invalid constant-coefficient simulation setup".into()));
        }
        let grid = if periodic {
            let dx = 2.0 * half_width / nodes as f64;
            (0..nodes).map(|j| -half_width + j as f64 * dx).collect()
        } else {
            uniform_grid(-half_width, half_width, nodes)
        };
        let (p, m, r) = split(a)?;
        let (mut a_plus, mut a_minus, mut ee) = (vec![], vec![], vec![]);
        for _ in 0..nodes {
            push_matrix(&mut a_plus, &p);
            push_matrix(&mut a_minus, &m);
            push_matrix(&mut ee, e);
        }
        let mut sim = Simulator {
            dx: if periodic { 2.0 * half_width / nodes as f64 } else { grid[1] - grid[0] },
            grid,
            n: a.nrows(),
            periodic,
            opts,
            a_plus,
            a_minus,
            e: ee,
            sponge: vec![],
            max_speed: r,
            nonlinear: None,
        };
        sim.sponge = sim.sponge_profile();
        Ok(sim)
    }

    fn sponge_profile(&self) -> Vec<f64> {
        let w = self.opts.sponge_width;
        let l = self.grid[self.grid.len() - 1].max(-self.grid[0]);
        self.grid
            .iter()
            .map(|&x| {
                if self.periodic || w <= 0.0 || x.abs() < l - w {
                    0.0
                } else {
                    self.opts.sponge_strength * ((x.abs() - (l - w)) / w).powi(2)
                }
            })
            .collect()
    }

    pub fn max_speed(&self, mode: Mode) -> f64 {
        match (mode, &self.nonlinear) {
            (Mode::Nonlinear, Some(nl)) => nl.alpha,
            _ => self.max_speed,
        }
    }

    pub fn cfl_limit(&self, mode: Mode) -> f64 {
        self.opts.cfl * self.dx / self.max_speed(mode).max(1e-300)
    }

    pub fn zero_state(&self) -> SimState {
        SimState::zeros(&self.grid, self.n)
    }

    fn at(&self, i: usize, off: isize) -> usize {
        let m = self.grid.len() as isize;
        let j = i as isize + off;
        if self.periodic {
            j.rem_euclid(m) as usize
        } else {
            j.clamp(0, m - 1) as usize
        }
    }

    /// Left-biased (`D⁻`) and right-biased (`D⁺`) third-order differences of
    /// component data `u` at node `i`, written into `dm`, `dp`.
    fn biased(&self, u: &[f64], i: usize, dm: &mut [f64], dp: &mut [f64]) {
        let n = self.n;
        let c = 1.0 / (6.0 * self.dx);
        let idx = [self.at(i, -2), self.at(i, -1), i, self.at(i, 1), self.at(i, 2)];
        for q in 0..n {
            let z = |k: usize| u[idx[k] * n + q];
            dm[q] = c * (z(0) - 6.0 * z(1) + 3.0 * z(2) + 2.0 * z(3));
            dp[q] = c * (-2.0 * z(1) - 3.0 * z(2) + 6.0 * z(3) - z(4));
        }
    }

    /// Right-hand side `v_t = 𝓛v (+ N(v)) + f`.
    pub fn rhs(&self, t: f64, v: &[f64], mode: Mode, forcing: Option<Forcing>, out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        let mut dm = vec![0.0; n];
        let mut dp = vec![0.0; n];
        out.iter_mut().for_each(|o| *o = 0.0);
        match mode {
            Mode::Linearized => {
                for i in 0..self.grid.len() {
                    self.biased(v, i, &mut dm, &mut dp);
                    let o = &mut out[i * n..(i + 1) * n];
                    mat_acc(&self.a_plus[i * nn..(i + 1) * nn], &dm, -1.0, o);
                    mat_acc(&self.a_minus[i * nn..(i + 1) * nn], &dp, -1.0, o);
                    mat_acc(&self.e[i * nn..(i + 1) * nn], &v[i * n..(i + 1) * n], -1.0, o);
                }
            }
            Mode::Nonlinear => {
                let nl = self
                    .nonlinear
                    .as_ref()
                    .ok_or_else(|| Error::Argument("nonlinear mode needs a front simulator".into()))?;
                let m = self.grid.len();
                let mut gp = vec![0.0; m * n];
                let mut gm = vec![0.0; m * n];
                let mut src = vec![0.0; m * n];
                for i in 0..m {
                    let vi = RVec::from_column_slice(&v[i * n..(i + 1) * n]);
                    let w = &nl.wbar[i] + &vi;
                    let g = nl.sys.flux(&w, 0) - &w * nl.speed - &nl.fbar[i];
                    let r = nl.sys.source(&w) - &nl.rbar[i];
                    for q in 0..n {
                        gp[i * n + q] = 0.5 * (g[q] + nl.alpha * vi[q]);
                        gm[i * n + q] = 0.5 * (g[q] - nl.alpha * vi[q]);
                        src[i * n + q] = r[q];
                    }
                }
                let mut scratch = vec![0.0; n];
                for i in 0..m {
                    self.biased(&gp, i, &mut dm, &mut scratch);
                    self.biased(&gm, i, &mut scratch, &mut dp);
                    for q in 0..n {
                        out[i * n + q] = -dm[q] - dp[q] + src[i * n + q];
                    }
                }
            }
        }
        let mut f = vec![0.0; n];
        for (i, &x) in self.grid.iter().enumerate() {
            let o = &mut out[i * n..(i + 1) * n];
            if self.sponge[i] != 0.0 {
                for q in 0..n {
                    o[q] -= self.sponge[i] * v[i * n + q];
                }
            }
            if let Some(force) = forcing {
                f.iter_mut().for_each(|z| *z = 0.0);
                force(t, x, &mut f);
                o.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
            }
        }
        Ok(())
    }

    /// Effective forcing at `v`: the external forcing plus, in nonlinear
    /// mode, the difference between the nonlinear and linearized operators.
    pub fn effective_forcing(&self, t: f64, v: &[f64], mode: Mode, forcing: Option<Forcing>) -> Result<Vec<f64>> {
        let mut f = vec![0.0; v.len()];
        if let Some(force) = forcing {
            for (i, &x) in self.grid.iter().enumerate() {
                force(t, x, &mut f[i * self.n..(i + 1) * self.n]);
            }
        }
        if mode == Mode::Nonlinear {
            let mut a = vec![0.0; v.len()];
            let mut b = vec![0.0; v.len()];
            self.rhs(t, v, Mode::Nonlinear, None, &mut a)?;
            self.rhs(t, v, Mode::Linearized, None, &mut b)?;
            for k in 0..f.len() {
                f[k] += a[k] - b[k];
            }
        }
        Ok(f)
    }

    /// One SSP-RK3 step.
    pub fn step(&self, state: SimState, dt: f64, mode: Mode, forcing: Option<Forcing>) -> Result<SimState> {
        let limit = self.cfl_limit(mode);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let t = state.t;
        let len = state.v.len();
        let mut k = vec![0.0; len];
        self.rhs(t, &state.v, mode, forcing, &mut k)?;
        let v1: Vec<f64> = state.v.iter().zip(&k).map(|(a, b)| a + dt * b).collect();
        self.rhs(t + dt, &v1, mode, forcing, &mut k)?;
        let v2: Vec<f64> = (0..len)
            .map(|i| 0.75 * state.v[i] + 0.25 * (v1[i] + dt * k[i]))
            .collect();
        self.rhs(t + 0.5 * dt, &v2, mode, forcing, &mut k)?;
        let mut next = state;
        for i in 0..len {
            next.v[i] = next.v[i] / 3.0 + 2.0 / 3.0 * (v2[i] + dt * k[i]);
        }
        next.t = t + dt;
        let sup = next.sup_norm();
        if !sup.is_finite() || sup > self.opts.sup_cap {
            return Err(Error::Instability { norm: sup, t: next.t });
        }
        Ok(next)
    }

    /// Derivative stack `[v, ∂v, …, ∂ˢv]` of flat data: spectral on periodic
    /// grids, fourth-order differences otherwise.
    pub fn derivative_stack(&self, v: &[f64], s: usize) -> Vec<Vec<f64>> {
        if self.periodic {
            return spectral_stack(v, self.n, self.dx, s);
        }
        let (m, n) = (self.grid.len(), self.n);
        let c = 1.0 / (12.0 * self.dx);
        let mut stack = vec![v.to_vec()];
        for k in 1..=s {
            let prev = &stack[k - 1];
            let mut d = vec![0.0; prev.len()];
            for i in 0..m {
                for &(j, a) in &stencil(i, m) {
                    if a != 0.0 {
                        for q in 0..n {
                            d[i * n + q] += a * c * prev[j * n + q];
                        }
                    }
                }
            }
            stack.push(d);
        }
        stack
    }

    /// `(Σ_{k≤s} ‖α ∂ᵏu‖², ‖α u‖²)` on the simulation grid.
    pub fn energy(&self, u: &[f64], s: usize, weight: Weight) -> Result<(f64, f64)> {
        if s > 3 {
            return Err(Error::Argument(format!("energy order {s} exceeds the supported order 3")));
        }
        let stack = self.derivative_stack(u, s);
        let m = self.grid.len();
        let quad: Vec<f64> = (0..m)
            .map(|i| {
                let end = !self.periodic && (i == 0 || i == m - 1);
                let a = weight.at(self.grid[i]);
                a * a * self.dx * if end { 0.5 } else { 1.0 }
            })
            .collect();
        let sq = |d: &[f64]| -> f64 {
            d.chunks_exact(self.n)
                .zip(&quad)
                .map(|(z, w)| w * z.iter().map(|c| c * c).sum::<f64>())
                .sum()
        };
        let l2 = sq(&stack[0]);
        Ok((stack.iter().map(|d| sq(d)).sum(), l2))
    }

    pub fn measure_energy(&self, state: &SimState, s: usize, weight: Weight) -> Result<(f64, f64)> {
        self.energy(&state.v, s, weight)
    }

    /// Integrates to `spec.t_end`, recording energies every
    /// `spec.record_every` steps.
    pub fn run(&self, initial: SimState, spec: &RunSpec, forcing: Option<Forcing>) -> Result<Run> {
        if !(spec.t_end > 0.0) || !(spec.dt > 0.0) || spec.record_every == 0 {
            return Err(Error::Argument("run needs t_end > 0, dt > 0, record_every >= 1".into()));
        }
        // whole steps, a whole number of records
        let re = spec.record_every;
        let steps = ((spec.t_end / spec.dt / re as f64).ceil() as usize).max(1) * re;
        let dt = spec.t_end / steps as f64;
        let mut trace = EnergyTrace::new(spec.s, spec.weight);
        let mut history = spec.keep_history.then(|| History {
            times: vec![],
            states: vec![],
            forcing: vec![],
        });
        let mut state = initial;
        let mut max_boundary: f64 = 0.0;
        for k in 0..=steps {
            if k % re == 0 {
                let f = self.effective_forcing(state.t, &state.v, spec.mode, forcing)?;
                let (e, l2) = self.energy(&state.v, spec.s, spec.weight)?;
                let (ef, _) = self.energy(&f, spec.s, spec.weight)?;
                trace.push(state.t, e, l2, ef);
                if let Some(h) = history.as_mut() {
                    h.times.push(state.t);
                    h.states.push(state.v.clone());
                    h.forcing.push(f);
                }
                max_boundary = max_boundary.max(state.boundary_value());
            }
            if k < steps {
                state = self.step(state, dt, spec.mode, forcing)?;
            }
        }
        state.history = history;
        Ok(Run {
            boundary_ok: self.periodic || max_boundary <= self.opts.boundary_tol,
            max_boundary,
            dt,
            state,
            trace,
        })
    }
}

fn spectral_stack(v: &[f64], n: usize, dx: f64, s: usize) -> Vec<Vec<f64>> {
    let m = v.len() / n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let period = m as f64 * dx;
    let wave = |j: usize| -> f64 {
        let j = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
        2.0 * std::f64::consts::PI * j / period
    };
    let mut stack = vec![v.to_vec()];
    stack.extend((1..=s).map(|_| vec![0.0; v.len()]));
    for q in 0..n {
        let mut hat: Vec<Complex64> = (0..m).map(|i| Complex64::new(v[i * n + q], 0.0)).collect();
        fwd.process(&mut hat);
        for (order, out) in stack.iter_mut().enumerate().skip(1) {
            let mut buf: Vec<Complex64> = hat
                .iter()
                .enumerate()
                .map(|(j, z)| {
                    if m % 2 == 0 && j == m / 2 && order % 2 == 1 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        z * Complex64::new(0.0, wave(j)).powi(order as i32)
                    }
                })
                .collect();
            inv.process(&mut buf);
            for i in 0..m {
                out[i * n + q] = buf[i].re / m as f64;
            }
        }
    }
    stack
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub t_end: f64,
    pub dt: f64,
    pub mode: Mode,
    pub record_every: usize,
    pub s: usize,
    pub weight: Weight,
    pub keep_history: bool,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub state: SimState,
    pub trace: EnergyTrace,
    /// Step actually used (`t_end` divided into whole steps).
    pub dt: f64,
    pub max_boundary: f64,
    pub boundary_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    /// `Σ_{k≤s} ‖α∂ᵏv‖²`
    pub e_values: Vec<f64>,
    pub l2_values: Vec<f64>,
    /// `‖f‖²` in the same norm as `e_values`.
    pub f_values: Vec<f64>,
    pub s: usize,
    pub weight: Weight,
}

impl EnergyTrace {
    pub fn new(s: usize, weight: Weight) -> Self {
        EnergyTrace {
            times: vec![],
            e_values: vec![],
            l2_values: vec![],
            f_values: vec![],
            s,
            weight,
        }
    }

    pub fn push(&mut self, t: f64, e: f64, l2: f64, f: f64) {
        self.times.push(t);
        self.e_values.push(e);
        self.l2_values.push(l2);
        self.f_values.push(f);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["t", "E", "L2", "f"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record(
                [self.times[i], self.e_values[i], self.l2_values[i], self.f_values[i]].map(|v| format!("{v:.12e}")),
            )
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 5 {
        return Err(Error::Argument(format!("need at least 5 samples, got {}", times.len())));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::Argument("samples must be uniformly spaced in time".into()));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitCaps {
    pub eta_max: f64,
    pub c_max: f64,
}

impl Default for FitCaps {
    fn default() -> Self {
        FitCaps {
            eta_max: 10.0,
            c_max: 100.0,
        }
    }
}

/// A sample at which no admissible `(η, C)` exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refutation {
    pub t: f64,
    pub de: f64,
    pub e: f64,
    pub l2: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingFit {
    pub feasible: bool,
    /// Largest `η ≤ η_max` for which some `C ≤ C_max` works.
    pub eta: f64,
    /// Smallest `C` that works with `eta`.
    pub c: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub refutation: Option<Refutation>,
}

/// Fits `dE/dt ≤ −ηE + C(L2 + f)` at every sample of `window`, with `dE/dt`
/// by fourth-order differences. The constraints are linear in `(η, C)`, so
/// the largest feasible `η` under the caps is found exactly.
pub fn verify_classical_damping(trace: &EnergyTrace, window: (f64, f64), caps: FitCaps) -> Result<DampingFit> {
    let h = uniform_step(&trace.times)?;
    let de = discrete::fd_derivative(&trace.e_values, h);
    let idx: Vec<usize> = (0..trace.len())
        .filter(|&i| trace.times[i] >= window.0 - 1e-12 && trace.times[i] <= window.1 + 1e-12)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Argument(format!(
            "damping window [{}, {}] holds {} samples; at least 3 are needed",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let mut eta = caps.eta_max;
    let mut binding = None;
    for &i in &idx {
        let (e, d) = (trace.e_values[i], trace.l2_values[i] + trace.f_values[i]);
        let bound = if e > 0.0 {
            (caps.c_max * d - de[i]) / e
        } else if de[i] <= caps.c_max * d {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if bound < eta {
            eta = bound;
            binding = Some(i);
        }
    }
    let refute = |i: usize| Refutation {
        t: trace.times[i],
        de: de[i],
        e: trace.e_values[i],
        l2: trace.l2_values[i],
        f: trace.f_values[i],
    };
    if !(eta > 0.0) {
        return Ok(DampingFit {
            feasible: false,
            eta: eta.max(0.0),
            c: f64::INFINITY,
            window,
            samples: idx.len(),
            refutation: binding.map(refute),
        });
    }
    let c = idx
        .iter()
        .filter_map(|&i| {
            let d = trace.l2_values[i] + trace.f_values[i];
            (d > 0.0).then(|| (de[i] + eta * trace.e_values[i]) / d)
        })
        .fold(0.0, f64::max);
    Ok(DampingFit {
        feasible: true,
        eta,
        c,
        window,
        samples: idx.len(),
        refutation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedCheck {
    /// `min_T (rhs − lhs)`
    pub min_slack: f64,
    pub min_relative_slack: f64,
    pub worst_t: f64,
}

/// Checks the Gronwall form `E(T) ≤ Ce^{−ηT}E(0) + C∫₀ᵀ e^{−η(T−t)}(L2 + f)`
/// at every sample. The constant used is `max(C, 1)`, which the Gronwall
/// step delivers from the differential inequality.
pub fn verify_integrated_damping(trace: &EnergyTrace, eta: f64, c: f64) -> IntegratedCheck {
    let c = c.max(1.0);
    let t0 = trace.times.first().copied().unwrap_or(0.0);
    let mut out = IntegratedCheck {
        min_slack: f64::INFINITY,
        min_relative_slack: f64::INFINITY,
        worst_t: t0,
    };
    let mut acc = 0.0;
    for k in 0..trace.len() {
        let t = trace.times[k];
        if k > 0 {
            let dt = t - trace.times[k - 1];
            // ∫ e^{−η(T−t)} g over the new cell, carried forward by e^{−η dt}
            let g0 = trace.l2_values[k - 1] + trace.f_values[k - 1];
            let g1 = trace.l2_values[k] + trace.f_values[k];
            acc = acc * (-eta * dt).exp() + 0.5 * dt * (g0 * (-eta * dt).exp() + g1);
        }
        let rhs = c * (-eta * (t - t0)).exp() * trace.e_values[0] + c * acc;
        let slack = rhs - trace.e_values[k];
        if slack < out.min_slack {
            out.min_slack = slack;
            out.worst_t = t;
        }
        if rhs > 0.0 {
            out.min_relative_slack = out.min_relative_slack.min(slack / rhs);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortTime {
    /// Smallest `C` with `E(t) ≤ C(E(0) + ∫₀ᵗ f)` on the trace.
    pub c_short: f64,
    pub worst_t: f64,
    pub refuted: bool,
}

pub const SHORT_TIME_CAP: f64 = 1e8;

pub fn verify_short_time(trace: &EnergyTrace) -> ShortTime {
    let mut out = ShortTime {
        c_short: 0.0,
        worst_t: trace.times.first().copied().unwrap_or(0.0),
        refuted: false,
    };
    let mut int_f = 0.0;
    for k in 0..trace.len() {
        if k > 0 {
            int_f += 0.5 * (trace.times[k] - trace.times[k - 1]) * (trace.f_values[k] + trace.f_values[k - 1]);
        }
        let rhs = trace.e_values[0] + int_f;
        let ratio = if trace.e_values[k] == 0.0 {
            0.0
        } else if rhs > 0.0 {
            trace.e_values[k] / rhs
        } else {
            f64::INFINITY
        };
        if !(ratio <= out.c_short) {
            out.c_short = if ratio.is_nan() { f64::INFINITY } else { ratio };
            out.worst_t = trace.times[k];
        }
    }
    out.refuted = !(out.c_short <= SHORT_TIME_CAP);
    out
}

// ---------------------------------------------------------------- truncation

/// `0` for `u ≤ 0`, `1` for `u ≥ 1`, smooth in between (built from `e^{−1/u}`).
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub tau_c: f64,
    pub t_end: f64,
}

impl CutoffPair {
    pub fn new(tau_c: f64, t_end: f64) -> Result<Self> {
        if !(tau_c > 0.0) || !(3.0 * tau_c <= t_end) {
            return Err(Error::Argument(format!(
                "cutoff width {tau_c} needs 0 < 3 tau_c <= T = {t_end}"
            )));
        }
        Ok(CutoffPair { tau_c, t_end })
    }

    pub fn chi1(&self, t: f64) -> f64 {
        smoothstep(t / self.tau_c)
    }

    pub fn chi_t(&self, t: f64) -> f64 {
        smoothstep((self.t_end - t) / self.tau_c)
    }

    pub fn product(&self, t: f64) -> f64 {
        self.chi1(t) * self.chi_t(t)
    }
}

/// `∫_a^b` of samples on `times`, linear interpolation at partial cells.
fn integrate(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        let (lo, hi) = (t0.max(a), t1.min(b));
        if hi <= lo {
            continue;
        }
        let lerp = |t: f64| values[k - 1] + (values[k] - values[k - 1]) * (t - t0) / (t1 - t0);
        acc += 0.5 * (hi - lo) * (lerp(lo) + lerp(hi));
    }
    acc
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub gamma: f64,
    pub tau_c: f64,
    pub t_end: f64,
    /// Measured constant of the weighted space-time bound for `ṽ`, `f̃`.
    pub c2: f64,
    pub weighted_lhs: f64,
    pub weighted_rhs: f64,
    pub plateau_lhs: f64,
    pub plateau_holds: bool,
    /// Start-up window constant.
    pub c_one: f64,
    /// Tail window constant.
    pub c_two: f64,
    pub assembled_lhs: f64,
    pub assembled_bound: f64,
    pub assembled_holds: bool,
    /// Measured constant of the pointwise Gronwall form with `η = −2γ`.
    pub c_integrated: f64,
    /// `max |ṽ − v|` over records on the plateau `[τ, T − τ]`.
    pub plateau_error: f64,
    pub pass: bool,
}

/// Cuts a stored trajectory off smoothly near `t = 0` and `t = T`, forms
/// `f̃ = ∂ₜṽ − 𝓛ṽ` (time derivative by fourth-order differences over the
/// records) and measures the constants of the weighted space-time bound,
/// the start-up and tail bounds, and their combination.
pub fn truncation_pipeline(
    sim: &Simulator,
    history: &History,
    cutoffs: CutoffPair,
    gamma: f64,
    s: usize,
) -> Result<TruncationReport> {
    let h = uniform_step(&history.times)?;
    if history.states.len() != history.times.len() || history.forcing.len() != history.times.len() {
        return Err(Error::Argument("history has missing records".into()));
    }
    let t0 = history.times[0];
    let big_t = history.times[history.times.len() - 1] - t0;
    if (big_t - cutoffs.t_end).abs() > 1e-9 * big_t.max(1.0) {
        return Err(Error::Argument(format!(
            "cutoffs built for T = {} but the history spans {big_t}",
            cutoffs.t_end
        )));
    }
    let tau = cutoffs.tau_c;
    let times: Vec<f64> = history.times.iter().map(|t| t - t0).collect();
    let m = times.len();
    let chi: Vec<f64> = times.iter().map(|&t| cutoffs.product(t)).collect();
    let tilde: Vec<Vec<f64>> = history
        .states
        .iter()
        .zip(&chi)
        .map(|(v, c)| v.iter().map(|z| c * z).collect())
        .collect();
    let len = tilde[0].len();
    let mut hs_v = vec![0.0; m];
    let mut hs_f = vec![0.0; m];
    let mut hs_vt = vec![0.0; m];
    let mut l2_vt = vec![0.0; m];
    let mut hs_ft = vec![0.0; m];
    let mut l2_v = vec![0.0; m];
    let mut plateau_error: f64 = 0.0;
    let mut lv = vec![0.0; len];
    for k in 0..m {
        let st = stencil(k, m);
        let mut ft = vec![0.0; len];
        for &(j, a) in &st {
            if a != 0.0 {
                for (o, z) in ft.iter_mut().zip(&tilde[j]) {
                    *o += a / (12.0 * h) * z;
                }
            }
        }
        sim.rhs(times[k], &tilde[k], Mode::Linearized, None, &mut lv)?;
        ft.iter_mut().zip(&lv).for_each(|(o, z)| *o -= z);
        (hs_v[k], l2_v[k]) = sim.energy(&history.states[k], s, Weight::Unit)?;
        hs_f[k] = sim.energy(&history.forcing[k], s, Weight::Unit)?.0;
        (hs_vt[k], l2_vt[k]) = sim.energy(&tilde[k], s, Weight::Unit)?;
        hs_ft[k] = sim.energy(&ft, s, Weight::Unit)?.0;
        if times[k] >= tau && times[k] <= big_t - tau {
            let err = tilde[k]
                .iter()
                .zip(&history.states[k])
                .fold(0.0, |e: f64, (a, b)| e.max((a - b).abs()));
            plateau_error = plateau_error.max(err);
        }
    }
    let w: Vec<f64> = times.iter().map(|&t| (2.0 * gamma * (big_t - t)).exp()).collect();
    let weighted = |vals: &[f64]| -> Vec<f64> { vals.iter().zip(&w).map(|(a, b)| a * b).collect() };
    let rhs_core: Vec<f64> = (0..m).map(|k| w[k] * (hs_ft[k] + l2_vt[k])).collect();
    let weighted_lhs = integrate(&times, &weighted(&hs_vt), 0.0, big_t);
    let weighted_rhs = integrate(&times, &rhs_core, 0.0, big_t);
    let c2 = ratio(weighted_lhs, weighted_rhs);
    let plateau_lhs = integrate(&times, &weighted(&hs_v), tau, big_t - tau);
    let plateau_holds = plateau_lhs <= c2 * weighted_rhs * (1.0 + 1e-9) + 1e-300;

    let one_lhs = integrate(&times, &hs_v, 0.0, tau);
    let one_rhs = hs_v[0] + integrate(&times, &hs_f, 0.0, tau);
    let c_one = ratio(one_lhs, one_rhs);
    let two_lhs = integrate(&times, &hs_v, big_t - tau, big_t);
    let prior = integrate(&times, &hs_v, big_t - 2.0 * tau, big_t - tau);
    let two_rhs = prior + integrate(&times, &hs_f, big_t - 2.0 * tau, big_t);
    let c_two = ratio(two_lhs, two_rhs);

    // assemble: start-up window, plateau, tail (with its prior window
    // bounded through the plateau estimate again)
    let wt = |t: f64| (2.0 * gamma * (big_t - t)).exp();
    let w_max = |a: f64, b: f64| wt(a).max(wt(b));
    let w_min = |a: f64, b: f64| wt(a).min(wt(b));
    let assembled_lhs = integrate(&times, &weighted(&hs_v), 0.0, big_t);
    let prior_bound = c2 * weighted_rhs / w_min(big_t - 2.0 * tau, big_t - tau);
    let assembled_bound = w_max(0.0, tau) * c_one * one_rhs
        + c2 * weighted_rhs
        + w_max(big_t - tau, big_t) * c_two * (prior_bound + integrate(&times, &hs_f, big_t - 2.0 * tau, big_t));
    let assembled_holds = assembled_lhs <= assembled_bound * (1.0 + 1e-9) + 1e-300;

    let eta = -2.0 * gamma;
    let mut c_integrated: f64 = 0.0;
    let mut acc = 0.0;
    for k in 0..m {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            let g0 = l2_v[k - 1] + hs_f[k - 1];
            let g1 = l2_v[k] + hs_f[k];
            acc = acc * (-eta * dt).exp() + 0.5 * dt * (g0 * (-eta * dt).exp() + g1);
        }
        let rhs = (-eta * times[k]).exp() * hs_v[0] + acc;
        c_integrated = c_integrated.max(ratio(hs_v[k], rhs));
    }
    let pass = c2.is_finite()
        && plateau_holds
        && c_one.is_finite()
        && c_two.is_finite()
        && assembled_holds
        && c_integrated.is_finite()
        && plateau_error == 0.0;
    Ok(TruncationReport {
        gamma,
        tau_c: tau,
        t_end: big_t,
        c2,
        weighted_lhs,
        weighted_rhs,
        plateau_lhs,
        plateau_holds,
        c_one,
        c_two,
        assembled_lhs,
        assembled_bound,
        assembled_holds,
        c_integrated,
        plateau_error,
        pass,
    })
}
