//! Steady traveling-wave profiles `w̄(x₁)` in the co-moving frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, RMat, RVec};
use crate::model::{comoving_normal_jacobian, JinXin, RelaxationSystem};

/// Endstate approach targeted by automatic domain truncation.
pub const AUTO_END_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub grid: Vec<f64>,
    pub values: Vec<RVec>,
    pub derivs: Vec<RVec>,
    pub speed: f64,
    pub endstates: (RVec, RVec),
    /// Slowest exponential approach rate to either endstate (0 for constant profiles).
    pub decay_rate: f64,
    pub params: BTreeMap<String, f64>,
}

impl WaveProfile {
    pub fn constant(w: RVec, speed: f64, half_width: f64, nodes: usize) -> Self {
        let grid = uniform_grid(-half_width, half_width, nodes.max(2));
        let n = w.len();
        WaveProfile {
            values: vec![w.clone(); grid.len()],
            derivs: vec![RVec::zeros(n); grid.len()],
            grid,
            speed,
            endstates: (w.clone(), w),
            decay_rate: 0.0,
            params: BTreeMap::new(),
        }
    }

    /// The same front with `extra` identically zero components appended,
    /// e.g. a 1-d Jin–Xin front as a planar front of the 2-d system.
    pub fn embedded(&self, extra: usize) -> WaveProfile {
        let pad = |v: &RVec| RVec::from_iterator(v.len() + extra, v.iter().copied().chain(std::iter::repeat_n(0.0, extra)));
        WaveProfile {
            grid: self.grid.clone(),
            values: self.values.iter().map(pad).collect(),
            derivs: self.derivs.iter().map(pad).collect(),
            speed: self.speed,
            endstates: (pad(&self.endstates.0), pad(&self.endstates.1)),
            decay_rate: self.decay_rate,
            params: self.params.clone(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.endstates.0.len()
    }

    pub fn left(&self) -> f64 {
        self.grid[0]
    }

    pub fn right(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    /// `max(|w̄(x_0) − w₋|, |w̄(x_N) − w₊|)`.
    pub fn endstate_error(&self) -> f64 {
        let l = (&self.values[0] - &self.endstates.0).amax();
        let r = (self.values.last().expect("nonempty") - &self.endstates.1).amax();
        l.max(r)
    }

    /// Largest `|(A₁(w̄) − s)w̄′ − r(w̄)|` over the nodes.
    pub fn residual(&self, sys: &dyn RelaxationSystem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (w, dw) in self.values.iter().zip(&self.derivs) {
            let a = comoving_normal_jacobian(sys, w, self.speed)?;
            worst = worst.max((a * dw - sys.source(w)).amax());
        }
        Ok(worst)
    }

    /// Monotone cubic Hermite interpolation of the profile and its slope;
    /// outside the grid the endstate is returned with zero slope.
    pub fn sample(&self, x: f64) -> Result<(RVec, RVec)> {
        if !x.is_finite() {
            return Err(Error::Argument(format!("sample point {x} is not finite")));
        }
        let n = self.state_dim();
        if x < self.left() {
            return Ok((self.endstates.0.clone(), RVec::zeros(n)));
        }
        if x > self.right() {
            return Ok((self.endstates.1.clone(), RVec::zeros(n)));
        }
        let k = match self.grid.binary_search_by(|g| g.partial_cmp(&x).expect("finite grid")) {
            Ok(k) => return Ok((self.values[k].clone(), self.derivs[k].clone())),
            Err(k) => k - 1,
        };
        let (x0, x1) = (self.grid[k], self.grid[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let mut w = RVec::zeros(n);
        let mut dw = RVec::zeros(n);
        for c in 0..n {
            let (y0, y1) = (self.values[k][c], self.values[k + 1][c]);
            let (m0, m1) = limit_slopes(y0, y1, self.derivs[k][c], self.derivs[k + 1][c], h);
            let (v, d) = hermite(t, h, y0, y1, m0, m1);
            w[c] = v;
            dw[c] = d;
        }
        Ok((w, dw))
    }

    /// Same profile with its grid shifted by `dx`.
    pub fn shifted(&self, dx: f64) -> WaveProfile {
        let mut p = self.clone();
        for x in &mut p.grid {
            *x += dx;
        }
        p
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.state_dim();
        let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["x".to_string()];
        header.extend((1..=n).map(|i| format!("w_{i}")));
        header.extend((1..=n).map(|i| format!("dw_{i}")));
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.grid.len() {
            let mut row = vec![format!("{:e}", self.grid[i])];
            row.extend(self.values[i].iter().map(|v| format!("{v:e}")));
            row.extend(self.derivs[i].iter().map(|v| format!("{v:e}")));
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush()?;
        let side = ProfileSidecar {
            speed: self.speed,
            w_minus: self.endstates.0.iter().copied().collect(),
            w_plus: self.endstates.1.iter().copied().collect(),
            decay_rate: self.decay_rate,
            params: self.params.clone(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<WaveProfile> {
        let side: ProfileSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let n = side.w_minus.len();
        if side.w_plus.len() != n {
            return Err(Error::Serde("sidecar endstates differ in length".into()));
        }
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 1 + 2 * n {
                return Err(Error::Serde(format!("expected {} columns, found {}", 1 + 2 * n, rec.len())));
            }
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Serde(e.to_string())))
                .collect::<Result<_>>()?;
            grid.push(nums[0]);
            values.push(RVec::from_column_slice(&nums[1..=n]));
            derivs.push(RVec::from_column_slice(&nums[1 + n..]));
        }
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Serde("profile grid must be strictly increasing with >= 2 nodes".into()));
        }
        Ok(WaveProfile {
            grid,
            values,
            derivs,
            speed: side.speed,
            endstates: (RVec::from_vec(side.w_minus), RVec::from_vec(side.w_plus)),
            decay_rate: side.decay_rate,
            params: side.params,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileSidecar {
    speed: f64,
    w_minus: Vec<f64>,
    w_plus: Vec<f64>,
    decay_rate: f64,
    params: BTreeMap<String, f64>,
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

pub fn uniform_grid(a: f64, b: f64, nodes: usize) -> Vec<f64> {
    let n = nodes.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Fritsch–Carlson limiting of Hermite slopes on one interval.
fn limit_slopes(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> (f64, f64) {
    let delta = (y1 - y0) / h;
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let (mut a, mut b) = (m0 / delta, m1 / delta);
    if a < 0.0 {
        a = 0.0;
    }
    if b < 0.0 {
        b = 0.0;
    }
    let r = a * a + b * b;
    if r > 9.0 {
        let t = 3.0 / r.sqrt();
        a *= t;
        b *= t;
    }
    (a * delta, b * delta)
}

fn hermite(t: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1;
    let d = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (3.0 * t2 - 2.0 * t) * m1;
    (v, d)
}

// ---------------------------------------------------------------- Jin–Xin

/// Closed-form Jin–Xin front for Burgers flux: with `s = (u₋+u₊)/2`,
/// `(a² − s²) u′ = (u − u₋)(u − u₊)/2`, hence a logistic `u` and `p = s u + c₀`.
pub fn solve_profile_jinxin(a: f64, u_minus: f64, u_plus: f64) -> Result<WaveProfile> {
    solve_profile_jinxin_on(a, u_minus, u_plus, None, 2001)
}

pub fn solve_profile_jinxin_on(
    a: f64,
    u_minus: f64,
    u_plus: f64,
    half_width: Option<f64>,
    nodes: usize,
) -> Result<WaveProfile> {
    let s = 0.5 * (u_minus + u_plus);
    if !(a > u_minus.abs() && a > u_plus.abs() && a > s.abs()) {
        return Err(Error::Model(format!(
            "subcharacteristic condition violated: a = {a}, u- = {u_minus}, u+ = {u_plus}"
        )));
    }
    let sys = JinXin::new(a);
    let mut params = BTreeMap::new();
    params.insert("a".into(), a);
    params.insert("u_minus".into(), u_minus);
    params.insert("u_plus".into(), u_plus);
    let amp = u_minus - u_plus;
    if amp == 0.0 {
        let mut p = WaveProfile::constant(sys.equilibrium(u_minus), s, half_width.unwrap_or(10.0), nodes);
        p.params = params;
        return Ok(p);
    }
    if amp < 0.0 {
        return Err(Error::Model(format!(
            "no smooth front from u- = {u_minus} to u+ = {u_plus} (Burgers fronts need u- > u+)"
        )));
    }
    let denom = a * a - s * s;
    let k = amp / (2.0 * denom);
    let c0 = JinXin::equilibrium_flux(u_minus) - s * u_minus;
    let l = half_width.unwrap_or_else(|| (amp / AUTO_END_TOL).ln() / k);
    let grid = uniform_grid(-l, l, nodes);
    let mut values = Vec::with_capacity(grid.len());
    let mut derivs = Vec::with_capacity(grid.len());
    for &x in &grid {
        let u = jinxin_u(x, k, u_minus, u_plus);
        let du = 0.5 * (u - u_minus) * (u - u_plus) / denom;
        values.push(RVec::from_vec(vec![u, s * u + c0]));
        derivs.push(RVec::from_vec(vec![du, s * du]));
    }
    Ok(WaveProfile {
        grid,
        values,
        derivs,
        speed: s,
        endstates: (sys.equilibrium(u_minus), sys.equilibrium(u_plus)),
        decay_rate: k,
        params,
    })
}

fn jinxin_u(x: f64, k: f64, um: f64, up: f64) -> f64 {
    let z = k * x;
    // numerically stable logistic
    if z > 0.0 {
        let e = (-z).exp();
        up + (um - up) * e / (1.0 + e)
    } else {
        up + (um - up) / (1.0 + z.exp())
    }
}

// ---------------------------------------------------------------- shooting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Half width `L`; `None` picks `L` so the endstate approach is ≤ 1e−8.
    pub half_width: Option<f64>,
    pub nodes: usize,
    /// Required endstate match at `±L`.
    pub tol: f64,
    /// Position where the leading component crosses the endstate midpoint.
    pub anchor: f64,
    /// Size of the initial offset along the unstable manifold.
    pub epsilon: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            half_width: None,
            nodes: 2001,
            tol: 1e-6,
            anchor: 0.0,
            epsilon: 1e-7,
        }
    }
}

fn profile_field(sys: &dyn RelaxationSystem, w: &RVec, s: f64) -> Option<RVec> {
    let a = comoving_normal_jacobian(sys, w, s).ok()?;
    let f = a.lu().solve(&sys.source(w))?;
    f.iter().all(|x| x.is_finite()).then_some(f)
}

fn rk4(sys: &dyn RelaxationSystem, w: &RVec, s: f64, h: f64) -> Option<RVec> {
    let k1 = profile_field(sys, w, s)?;
    let k2 = profile_field(sys, &(w + &k1 * (0.5 * h)), s)?;
    let k3 = profile_field(sys, &(w + &k2 * (0.5 * h)), s)?;
    let k4 = profile_field(sys, &(w + &k3 * h), s)?;
    Some(w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Linearization `DF(w*) = (A₁ − s)⁻¹ dr/dw` of the profile field at a rest point.
fn rest_point_jacobian(sys: &dyn RelaxationSystem, w: &RVec, s: f64) -> Result<RMat> {
    let a = comoving_normal_jacobian(sys, w, s)?;
    let lu = a.lu();
    lu.solve(&sys.relax_jacobian(w))
        .ok_or_else(|| Error::Model("A_1 - s Id is singular at an endstate".into()))
}

/// Real orthonormal basis of the invariant subspace of `df` with `Re μ > tol`
/// (or `< −tol` when `unstable` is false), plus the slowest such rate.
fn real_invariant_basis(df: &RMat, unstable: bool) -> Result<(RMat, f64)> {
    let eig = linalg::eigen(&to_complex(df))?;
    let scale = eig.values.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let tol = 1e-9 * scale;
    let mut cols: Vec<RVec> = Vec::new();
    let mut rate = f64::INFINITY;
    for (k, mu) in eig.values.iter().enumerate() {
        let re = if unstable { mu.re } else { -mu.re };
        if re > tol {
            rate = rate.min(re);
            let v = eig.vectors.column(k);
            cols.push(v.map(|z| z.re));
            if mu.im.abs() > tol {
                cols.push(v.map(|z| z.im));
            }
        }
    }
    let n = df.nrows();
    if cols.is_empty() {
        return Ok((RMat::zeros(n, 0), 0.0));
    }
    let m = RMat::from_columns(&cols);
    let qr = m.qr();
    let q = qr.q();
    let mut basis = Vec::new();
    for c in 0..q.ncols() {
        // drop columns that duplicated a conjugate pair
        if qr.r()[(c, c)].abs() > 1e-10 {
            basis.push(q.column(c).into_owned());
        }
    }
    let dim = basis.len().min(cols.len());
    Ok((RMat::from_columns(&basis[..dim]), rate))
}

struct Shot {
    anchor_state: RVec,
    miss: f64,
}

/// Integrates from `w₋ + ε·dir` until the leading component crosses `mid`;
/// then follows the orbit to estimate how close it passes to `w₊`.
fn shoot(
    sys: &dyn RelaxationSystem,
    wm: &RVec,
    wp: &RVec,
    s: f64,
    dir: &RVec,
    eps: f64,
    h: f64,
    horizon: f64,
) -> Option<Shot> {
    let mid = 0.5 * (wm[0] + wp[0]);
    let side0 = (wm[0] - mid).signum();
    let scale = (wm - wp).amax().max(1e-12);
    let mut w = wm + dir * eps;
    let max_steps = (horizon / h).ceil() as usize;
    let mut anchor = None;
    for _ in 0..max_steps {
        let next = rk4(sys, &w, s, h)?;
        if (next[0] - mid).signum() != side0 || next[0] == mid {
            // bisect the crossing inside this step
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let m = 0.5 * (lo + hi);
                let wm_ = rk4(sys, &w, s, m)?;
                if (wm_[0] - mid).signum() == side0 && wm_[0] != mid {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            anchor = Some(rk4(sys, &w, s, 0.5 * (lo + hi))?);
            break;
        }
        if (&next - wm).amax() > 1e3 * scale {
            return None;
        }
        w = next;
    }
    let anchor_state = anchor?;
    let mut w = anchor_state.clone();
    let mut miss = (&w - wp).amax();
    for _ in 0..max_steps {
        w = match rk4(sys, &w, s, h) {
            Some(v) => v,
            None => break,
        };
        let d = (&w - wp).amax();
        if !d.is_finite() || d > 1e3 * scale {
            break;
        }
        miss = miss.min(d);
        if d < 1e-12 * scale {
            break;
        }
    }
    Some(Shot { anchor_state, miss })
}

/// Candidate shooting directions in a `k`-dimensional unstable subspace.
fn sphere_directions(k: usize, count: usize) -> Vec<Vec<f64>> {
    match k {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => crate::model::circle_path(0.0, 2.0 * std::f64::consts::PI * (1.0 - 1.0 / count as f64), count),
        _ => {
            let mut dirs = crate::model::unit_directions(3, count);
            for d in &mut dirs {
                d.resize(k, 0.0);
            }
            dirs
        }
    }
}

/// Shooting solver for `(A₁(w) − s) w′ = r(w)` from `w₋` to `w₊`.
pub fn solve_profile_shooting(
    sys: &dyn RelaxationSystem,
    w_minus: &RVec,
    w_plus: &RVec,
    s: f64,
    opts: &ShootingOptions,
) -> Result<WaveProfile> {
    let n = sys.state_dim();
    if w_minus.len() != n || w_plus.len() != n {
        return Err(Error::Argument("endstate dimension mismatch".into()));
    }
    for w in [w_minus, w_plus] {
        if !sys.is_equilibrium(w, 1e-10) {
            return Err(Error::Model(format!("endstate {:?} is not an equilibrium", w.as_slice())));
        }
    }
    if (w_minus - w_plus).amax() <= opts.tol {
        let mut p = WaveProfile::constant(w_minus.clone(), s, opts.half_width.unwrap_or(10.0), opts.nodes);
        p = p.shifted(opts.anchor);
        return Ok(p);
    }
    let df_minus = rest_point_jacobian(sys, w_minus, s)?;
    let df_plus = rest_point_jacobian(sys, w_plus, s)?;
    let (unstable, rate_minus) = real_invariant_basis(&df_minus, true)?;
    let (_, rate_plus) = real_invariant_basis(&df_plus, false)?;
    if unstable.ncols() == 0 || rate_plus == 0.0 {
        return Err(Error::Convergence {
            residual: (w_minus - w_plus).amax(),
        });
    }
    let rho = linalg::singular_values(&to_complex(&df_minus))[0]
        .max(linalg::singular_values(&to_complex(&df_plus))[0])
        .max(1e-12);
    let slow = rate_minus.min(rate_plus);
    let h = (0.05 / rho).min(0.05 / slow);
    let amp = (w_minus - w_plus).amax();
    let horizon = 4.0 * ((amp / opts.epsilon).ln().max(1.0) + (amp / AUTO_END_TOL).ln()) / slow;

    let k = unstable.ncols();
    let dirs = sphere_directions(k, if k == 2 { 180 } else { 400 });
    let eval = |coef: &[f64]| -> Option<Shot> {
        let mut d = RVec::zeros(n);
        for (c, &x) in coef.iter().enumerate() {
            d += unstable.column(c) * x;
        }
        let nd = d.norm();
        if nd == 0.0 {
            return None;
        }
        shoot(sys, w_minus, w_plus, s, &(d / nd), opts.epsilon, h, horizon)
    };
    let mut best: Option<(Vec<f64>, Shot)> = None;
    for dir in &dirs {
        if let Some(shot) = eval(dir) {
            if best.as_ref().map_or(true, |(_, b)| shot.miss < b.miss) {
                best = Some((dir.clone(), shot));
            }
        }
    }
    let (mut coef, mut shot) = best.ok_or(Error::Convergence { residual: f64::INFINITY })?;
    if k > 1 {
        // compass refinement over the sphere of directions
        let mut step = 0.1;
        while step > 1e-10 && shot.miss > opts.tol * 1e-2 {
            let mut improved = false;
            for c in 0..k {
                for sgn in [-1.0, 1.0] {
                    let mut trial = coef.clone();
                    trial[c] += sgn * step;
                    let nt = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
                    trial.iter_mut().for_each(|x| *x /= nt);
                    if let Some(t) = eval(&trial) {
                        if t.miss < shot.miss {
                            coef = trial;
                            shot = t;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    if shot.miss > opts.tol {
        return Err(Error::Convergence { residual: shot.miss });
    }

    let l = opts.half_width.unwrap_or_else(|| (amp / AUTO_END_TOL).ln() / slow);
    let grid = uniform_grid(opts.anchor - l, opts.anchor + l, opts.nodes);
    let centre = grid.partition_point(|&x| x < opts.anchor);
    let mut values = vec![RVec::zeros(n); grid.len()];
    let integrate = |from: &RVec, x0: f64, x1: f64| -> Result<RVec> {
        let span = x1 - x0;
        let sub = (span.abs() / h).ceil().max(1.0) as usize;
        let hs = span / sub as f64;
        let mut w = from.clone();
        for _ in 0..sub {
            w = rk4(sys, &w, s, hs).ok_or(Error::Convergence { residual: f64::INFINITY })?;
        }
        Ok(w)
    };
    let mut w = shot.anchor_state.clone();
    let mut x = opts.anchor;
    for i in centre..grid.len() {
        w = integrate(&w, x, grid[i])?;
        x = grid[i];
        values[i] = w.clone();
    }
    let mut w = shot.anchor_state.clone();
    let mut x = opts.anchor;
    for i in (0..centre).rev() {
        w = integrate(&w, x, grid[i])?;
        x = grid[i];
        values[i] = w.clone();
    }
    let derivs = values
        .iter()
        .map(|w| profile_field(sys, w, s).ok_or(Error::Convergence { residual: f64::INFINITY }))
        .collect::<Result<Vec<_>>>()?;
    let end_err = (&values[0] - w_minus).amax().max((values.last().expect("nodes") - w_plus).amax());
    if !(end_err <= opts.tol.max(10.0 * AUTO_END_TOL)) && opts.half_width.is_none() {
        return Err(Error::Convergence { residual: end_err });
    }
    if opts.half_width.is_some() && !(end_err <= opts.tol.max(amp * (-slow * l).exp() * 10.0)) {
        return Err(Error::Convergence { residual: end_err });
    }
    let mut profile = WaveProfile {
        grid,
        values,
        derivs,
        speed: s,
        endstates: (w_minus.clone(), w_plus.clone()),
        decay_rate: slow,
        params: BTreeMap::new(),
    };
    if let Some(fit) = fit_decay_rate(&profile) {
        profile.decay_rate = fit;
    }
    Ok(profile)
}

/// Least-squares slope of `log |w̄ − w±|` over each tail, where the distance
/// lies in `[1e−11, 1e−3]·amplitude`; returns the slower of the two rates.
pub fn fit_decay_rate(p: &WaveProfile) -> Option<f64> {
    let amp = (&p.endstates.0 - &p.endstates.1).amax();
    if amp == 0.0 {
        return None;
    }
    let fit = |pairs: Vec<(f64, f64)>| -> Option<f64> {
        if pairs.len() < 5 {
            return None;
        }
        let m = pairs.len() as f64;
        let (sx, sy) = pairs.iter().fold((0.0, 0.0), |a, (x, y)| (a.0 + x, a.1 + y));
        let (mx, my) = (sx / m, sy / m);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in &pairs {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        (sxx > 0.0).then(|| (sxy / sxx).abs())
    };
    let window = |d: f64| d > 1e-11 * amp && d < 1e-3 * amp;
    let right: Vec<(f64, f64)> = p
        .grid
        .iter()
        .zip(&p.values)
        .filter_map(|(x, w)| {
            let d = (w - &p.endstates.1).norm();
            (*x > 0.0 && window(d)).then(|| (*x, d.ln()))
        })
        .collect();
    let left: Vec<(f64, f64)> = p
        .grid
        .iter()
        .zip(&p.values)
        .filter_map(|(x, w)| {
            let d = (w - &p.endstates.0).norm();
            (*x < 0.0 && window(d)).then(|| (*x, d.ln()))
        })
        .collect();
    match (fit(left), fit(right)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}
