//! Exponential dichotomies of `v′ = G(x) v`: limit splits, frames of the
//! decaying/growing solution spaces, projector checks, block
//! diagonalization, and turning-point detection along frequency rays.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete;
use crate::error::{Error, Result};
use crate::field::{resolving_nodes, LinearField};
use crate::linalg::{self, c64, identity, to_complex, CMat, RVec};
use crate::model::{comoving_normal_jacobian, RelaxationSystem};
use crate::profile::WaveProfile;

/// Invariant splitting of a constant matrix.
#[derive(Debug, Clone)]
pub struct LimitSplit {
    pub stable: CMat,
    pub unstable: CMat,
    /// `min |Re μ|` over the spectrum.
    pub theta: f64,
}

pub fn limit_spectral_split(g: &CMat, gap_tol: f64) -> Result<LimitSplit> {
    let s = linalg::spectral_split(g, gap_tol)?;
    Ok(LimitSplit {
        stable: s.stable,
        unstable: s.unstable,
        theta: s.gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DichotomyOptions {
    pub h_max: f64,
    /// Relative tolerance for eigenvalues on the imaginary axis at the ends.
    pub gap_tol: f64,
    /// Frames closer than this (smallest singular value of `T`) are
    /// treated as a turning point.
    pub angle_tol: f64,
}

impl Default for DichotomyOptions {
    fn default() -> Self {
        DichotomyOptions {
            h_max: 0.05,
            gap_tol: 1e-8,
            angle_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub theta: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
}

/// Frames `T = [Y₊ Y₋]` on a uniform grid: `Y₊` spans the solutions
/// decaying at `+∞`, `Y₋` those decaying at `−∞`; both orthonormal.
#[derive(Debug, Clone)]
pub struct DichotomyData {
    pub grid: Vec<f64>,
    pub h: f64,
    pub frame_plus: Vec<CMat>,
    pub frame_minus: Vec<CMat>,
    pub lambda_plus: Vec<CMat>,
    pub lambda_minus: Vec<CMat>,
    /// `T⁻¹` at the nodes.
    pub frame_inverse: Vec<CMat>,
    pub ranks: (usize, usize),
    pub decay: DecayFit,
    /// `min θ` of the two limit splits.
    pub endstate_theta: f64,
    pub min_angle: f64,
    g_nodes: Vec<CMat>,
    g_mid: Vec<CMat>,
    lambda_plus_mid: Vec<CMat>,
    lambda_minus_mid: Vec<CMat>,
}

/// A matrix field sampled at the nodes of a uniform grid and at the
/// interval midpoints.
#[derive(Debug, Clone)]
pub struct BlockField {
    pub grid: Vec<f64>,
    pub nodes: Vec<CMat>,
    pub mids: Vec<CMat>,
}

impl BlockField {
    pub fn constant(grid: Vec<f64>, m: CMat) -> Self {
        let len = grid.len();
        BlockField {
            nodes: vec![m.clone(); len],
            mids: vec![m; len.saturating_sub(1)],
            grid,
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |m| m.nrows())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomySummary {
    pub ranks: (usize, usize),
    pub nodes: usize,
    pub domain: (f64, f64),
    pub decay: DecayFit,
    pub endstate_theta: f64,
    pub min_angle: f64,
    pub max_projector_norm: f64,
}

fn lowdin(y: &CMat) -> CMat {
    if y.ncols() == 0 {
        return y.clone();
    }
    let eig = (y.adjoint() * y).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| c64(1.0 / v.max(1e-300).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    y * (v * CMat::from_diagonal(&d) * v.adjoint())
}

fn frame_rhs(g: &CMat, y: &CMat) -> CMat {
    let gy = g * y;
    let lam = y.adjoint() * &gy;
    gy - y * lam
}

/// One RK4 step of the projected frame flow from `y` with step `dx`
/// (negative for backward), `g0`, `gm`, `g1` at the start, middle, end.
fn frame_step(y: &CMat, g0: &CMat, gm: &CMat, g1: &CMat, dx: f64) -> CMat {
    let hh = c64(0.5 * dx, 0.0);
    let k1 = frame_rhs(g0, y);
    let k2 = frame_rhs(gm, &(y + &k1 * hh));
    let k3 = frame_rhs(gm, &(y + &k2 * hh));
    let k4 = frame_rhs(g1, &(y + &k3 * c64(dx, 0.0)));
    lowdin(&(y + (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * c64(dx / 6.0, 0.0)))
}

/// RK4 propagator of `c′ = A(x) c` across one step of size `dx`.
fn step_propagator(a0: &CMat, am: &CMat, a1: &CMat, dx: f64) -> CMat {
    let id = identity(a0.nrows());
    let hh = c64(0.5 * dx, 0.0);
    let k1 = a0.clone();
    let k2 = am * (&id + &k1 * hh);
    let k3 = am * (&id + &k2 * hh);
    let k4 = a1 * (&id + &k3 * c64(dx, 0.0));
    id + (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * c64(dx / 6.0, 0.0)
}

/// Builds the dichotomy frames of `field` on a grid resolving it.
pub fn propagate_subspaces(field: &dyn LinearField, opts: &DichotomyOptions) -> Result<DichotomyData> {
    let nodes = resolving_nodes(field, opts.h_max);
    let (a, b) = field.domain();
    let n = field.dim();
    let h = (b - a) / (nodes - 1) as f64;
    let grid: Vec<f64> = (0..nodes).map(|i| a + h * i as f64).collect();
    let g_nodes: Vec<CMat> = grid.iter().map(|&x| field.eval(x)).collect();
    let g_mid: Vec<CMat> = grid[..nodes - 1].iter().map(|&x| field.eval(x + 0.5 * h)).collect();
    if g_nodes.iter().chain(&g_mid).any(|g| !linalg::is_finite(g)) {
        return Err(Error::Numeric("field evaluation produced non-finite entries".into()));
    }
    let tol = |g: &CMat| opts.gap_tol * linalg::norm2(g).max(1.0);
    let left = limit_spectral_split(&g_nodes[0], tol(&g_nodes[0]))?;
    let right = limit_spectral_split(&g_nodes[nodes - 1], tol(&g_nodes[nodes - 1]))?;
    let (j, k) = (right.stable.ncols(), left.unstable.ncols());
    if j + k != n {
        return Err(Error::Dichotomy(format!(
            "decaying dimensions {j} (+) and {k} (-) do not add up to {n}"
        )));
    }

    let mut frame_plus = vec![CMat::zeros(n, j); nodes];
    frame_plus[nodes - 1] = right.stable.clone();
    for i in (0..nodes - 1).rev() {
        frame_plus[i] = frame_step(&frame_plus[i + 1], &g_nodes[i + 1], &g_mid[i], &g_nodes[i], -h);
    }
    let mut frame_minus = vec![CMat::zeros(n, k); nodes];
    frame_minus[0] = left.unstable.clone();
    for i in 0..nodes - 1 {
        frame_minus[i + 1] = frame_step(&frame_minus[i], &g_nodes[i], &g_mid[i], &g_nodes[i + 1], h);
    }

    let mut min_angle = f64::INFINITY;
    let mut frame_inverse = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let t = linalg::hstack(&frame_plus[i], &frame_minus[i]);
        let sv = linalg::smallest_singular_value(&t);
        min_angle = min_angle.min(sv);
        if sv < opts.angle_tol {
            return Err(Error::TurningPointSuspected { x: grid[i], angle: sv });
        }
        frame_inverse.push(linalg::inverse(&t)?);
    }

    let reduce = |y: &CMat, g: &CMat| y.adjoint() * g * y;
    let lambda_plus: Vec<CMat> = (0..nodes).map(|i| reduce(&frame_plus[i], &g_nodes[i])).collect();
    let lambda_minus: Vec<CMat> = (0..nodes).map(|i| reduce(&frame_minus[i], &g_nodes[i])).collect();
    let mid_frame = |y: &[CMat], i: usize| {
        let d0 = frame_rhs(&g_nodes[i], &y[i]);
        let d1 = frame_rhs(&g_nodes[i + 1], &y[i + 1]);
        lowdin(&((&y[i] + &y[i + 1]) * c64(0.5, 0.0) + (d0 - d1) * c64(h / 8.0, 0.0)))
    };
    let lambda_plus_mid: Vec<CMat> = (0..nodes - 1)
        .map(|i| reduce(&mid_frame(&frame_plus, i), &g_mid[i]))
        .collect();
    let lambda_minus_mid: Vec<CMat> = (0..nodes - 1)
        .map(|i| reduce(&mid_frame(&frame_minus, i), &g_mid[i]))
        .collect();

    let mut data = DichotomyData {
        grid,
        h,
        frame_plus,
        frame_minus,
        lambda_plus,
        lambda_minus,
        frame_inverse,
        ranks: (j, k),
        decay: DecayFit {
            c: f64::NAN,
            theta: f64::NAN,
            theta_plus: f64::NAN,
            theta_minus: f64::NAN,
        },
        endstate_theta: left.theta.min(right.theta),
        min_angle,
        g_nodes,
        g_mid,
        lambda_plus_mid,
        lambda_minus_mid,
    };
    data.decay = data.fit_decay();
    Ok(data)
}

impl DichotomyData {
    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.ranks.0 + self.ranks.1
    }

    pub fn frame(&self, i: usize) -> CMat {
        linalg::hstack(&self.frame_plus[i], &self.frame_minus[i])
    }

    /// `P₊ = T diag(I, 0) T⁻¹` at node `i`.
    pub fn p_plus(&self, i: usize) -> CMat {
        let j = self.ranks.0;
        &self.frame_plus[i] * self.frame_inverse[i].rows(0, j)
    }

    pub fn p_minus(&self, i: usize) -> CMat {
        let (j, k) = self.ranks;
        &self.frame_minus[i] * self.frame_inverse[i].rows(j, k)
    }

    /// `(Λ₊, Λ₋)` as sampled fields.
    pub fn blocks(&self) -> (BlockField, BlockField) {
        (
            BlockField {
                grid: self.grid.clone(),
                nodes: self.lambda_plus.clone(),
                mids: self.lambda_plus_mid.clone(),
            },
            BlockField {
                grid: self.grid.clone(),
                nodes: self.lambda_minus.clone(),
                mids: self.lambda_minus_mid.clone(),
            },
        )
    }

    pub fn frames(&self) -> Vec<CMat> {
        (0..self.nodes()).map(|i| self.frame(i)).collect()
    }

    pub fn g_nodes(&self) -> &[CMat] {
        &self.g_nodes
    }

    pub fn g_at(&self, i: usize) -> &CMat {
        &self.g_nodes[i]
    }

    /// The same data with the roles of the two families exchanged. Useful
    /// only as a negative control: the decay axioms fail for it.
    pub fn swapped(&self) -> DichotomyData {
        let mut d = self.clone();
        std::mem::swap(&mut d.frame_plus, &mut d.frame_minus);
        std::mem::swap(&mut d.lambda_plus, &mut d.lambda_minus);
        std::mem::swap(&mut d.lambda_plus_mid, &mut d.lambda_minus_mid);
        d.ranks = (self.ranks.1, self.ranks.0);
        d.frame_inverse = (0..d.nodes())
            .map(|i| linalg::inverse(&d.frame(i)).unwrap_or_else(|_| CMat::zeros(d.dim(), d.dim())))
            .collect();
        d
    }

    /// Worst `‖P²−P‖`, `‖P₊P₋‖`, `‖P₊+P₋−I‖` over the nodes.
    pub fn projector_error(&self) -> f64 {
        let id = identity(self.dim());
        (0..self.nodes())
            .map(|i| {
                let (pp, pm) = (self.p_plus(i), self.p_minus(i));
                let scale = linalg::norm2(&pp).max(1.0);
                let e = [
                    (&pp * &pp - &pp).norm(),
                    (&pm * &pm - &pm).norm(),
                    (&pp * &pm).norm(),
                    (&pp + &pm - &id).norm(),
                ];
                e.iter().cloned().fold(0.0, f64::max) / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn max_projector_norm(&self) -> f64 {
        (0..self.nodes())
            .map(|i| linalg::norm2(&self.p_plus(i)).max(linalg::norm2(&self.p_minus(i))))
            .fold(0.0, f64::max)
    }

    /// Reduced propagators of `c′ = Λ₊ c` forward and `c′ = Λ₋ c` backward,
    /// one per grid interval.
    fn reduced_steps(&self) -> (Vec<CMat>, Vec<CMat>) {
        let h = self.h;
        let fwd = (0..self.nodes() - 1)
            .map(|i| step_propagator(&self.lambda_plus[i], &self.lambda_plus_mid[i], &self.lambda_plus[i + 1], h))
            .collect();
        let bwd = (0..self.nodes() - 1)
            .map(|i| step_propagator(&self.lambda_minus[i + 1], &self.lambda_minus_mid[i], &self.lambda_minus[i], -h))
            .collect();
        (fwd, bwd)
    }

    /// Worst-case curves `max_y log‖P₊𝒮(y+d, y)‖` and the mirror for `P₋`,
    /// propagated in the reduced coordinates with log-scale tracking.
    fn decay_curves(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.nodes();
        let (j, k) = self.ranks;
        let (fwd, bwd) = self.reduced_steps();
        let stride = (m / 256).max(1);
        let mut plus = vec![f64::NEG_INFINITY; m];
        let mut minus = vec![f64::NEG_INFINITY; m];
        let track = |mut mat: CMat, steps: &mut dyn Iterator<Item = &CMat>, curve: &mut Vec<f64>| {
            let mut log_off = 0.0;
            let mut d = 0;
            loop {
                let nrm = mat.norm();
                if !(nrm > 0.0) {
                    break;
                }
                curve[d] = curve[d].max(log_off + nrm.ln());
                if !(1e-100..=1e100).contains(&nrm) {
                    mat /= c64(nrm, 0.0);
                    log_off += nrm.ln();
                }
                match steps.next() {
                    Some(s) => mat = s * mat,
                    None => break,
                }
                d += 1;
            }
        };
        if j > 0 {
            for y in (0..m).step_by(stride) {
                let r = self.frame_inverse[y].rows(0, j).into_owned();
                track(r, &mut fwd[y..].iter(), &mut plus);
            }
        }
        if k > 0 {
            for y in (0..m).step_by(stride) {
                let r = self.frame_inverse[y].rows(j, k).into_owned();
                track(r, &mut bwd[..y].iter().rev(), &mut minus);
            }
        }
        (plus, minus)
    }

    fn fit_decay(&self) -> DecayFit {
        let (plus, minus) = self.decay_curves();
        let h = self.h;
        let half = (self.nodes() - 1) / 2;
        let fit = |curve: &[f64]| -> (f64, f64) {
            if curve[0] == f64::NEG_INFINITY {
                return (f64::INFINITY, 0.0);
            }
            let lo = (half / 4).max(1);
            let pts: Vec<(f64, f64)> = (lo..=half)
                .filter(|&d| curve[d].is_finite())
                .map(|d| (d as f64 * h, curve[d]))
                .collect();
            let theta = -linear_slope(&pts).unwrap_or(0.0);
            let log_c = curve
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(d, v)| v + theta * d as f64 * h)
                .fold(f64::NEG_INFINITY, f64::max);
            (theta, log_c.exp())
        };
        let (tp, cp) = fit(&plus);
        let (tm, cm) = fit(&minus);
        DecayFit {
            c: cp.max(cm),
            theta: tp.min(tm),
            theta_plus: tp,
            theta_minus: tm,
        }
    }

    pub fn summary(&self) -> DichotomySummary {
        DichotomySummary {
            ranks: self.ranks,
            nodes: self.nodes(),
            domain: (self.grid[0], *self.grid.last().expect("grid")),
            decay: self.decay,
            endstate_theta: self.endstate_theta,
            min_angle: self.min_angle,
            max_projector_norm: self.max_projector_norm(),
        }
    }

    /// Frames as CSV: `x`, then real and imaginary parts of `T` column-major.
    pub fn write_frames_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.dim();
        let mut header = vec!["x".to_string()];
        for c in 0..n {
            for r in 0..n {
                header.push(format!("re_t{r}{c}"));
                header.push(format!("im_t{r}{c}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.nodes() {
            let t = self.frame(i);
            let mut row = vec![format!("{:e}", self.grid[i])];
            for z in t.iter() {
                row.push(format!("{:e}", z.re));
                row.push(format!("{:e}", z.im));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn linear_slope(pts: &[(f64, f64)]) -> Option<f64> {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub pass: bool,
    pub pairs: usize,
    /// Worst `‖P₊(x)𝒮 − 𝒮P₊(y)‖ / ‖𝒮‖`.
    pub commuting_error: f64,
    /// Worst `‖P±𝒮(x,y)‖ / (C e^{−θ|x−y|/2})`; the decay axiom asks ≤ 1.
    pub decay_ratio: f64,
    pub projector_error: f64,
    pub window: f64,
    pub worst_pair: (f64, f64),
}

/// Checks commutation with the propagator and exponential decay on random
/// pairs `(x, y)` no further apart than the overflow-safe window.
pub fn verify_dichotomy(data: &DichotomyData, pairs: usize, tol: f64, seed: u64) -> Result<DichotomyReport> {
    let m = data.nodes();
    let h = data.h;
    let growth = data
        .g_nodes
        .iter()
        .map(|g| linalg::eigenvalues(g).map(|v| v.iter().map(|z| z.re.abs()).fold(0.0, f64::max)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    // 𝒮 grows at most like e^{growth·d}; keep that well inside double range
    // so P₊𝒮 can still be resolved against C e^{−θd}
    let window = ((8.0 * std::f64::consts::LN_10) / (growth + data.decay.theta.max(0.0)).max(1e-12))
        .min(data.grid[m - 1] - data.grid[0]);
    let span = ((window / h).floor() as usize).max(1);
    let fwd: Vec<CMat> = (0..m - 1)
        .map(|i| step_propagator(&data.g_nodes[i], &data.g_mid[i], &data.g_nodes[i + 1], h))
        .collect();
    let bwd: Vec<CMat> = (0..m - 1)
        .map(|i| step_propagator(&data.g_nodes[i + 1], &data.g_mid[i], &data.g_nodes[i], -h))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DichotomyReport {
        pass: false,
        pairs,
        commuting_error: 0.0,
        decay_ratio: 0.0,
        projector_error: data.projector_error(),
        window,
        worst_pair: (f64::NAN, f64::NAN),
    };
    let n = data.dim();
    let (c, theta) = (data.decay.c, data.decay.theta);
    for _ in 0..pairs {
        let y = rng.gen_range(0..m);
        let lo = y.saturating_sub(span);
        let hi = (y + span).min(m - 1);
        let x = rng.gen_range(lo..=hi);
        let mut s = identity(n);
        if x >= y {
            for step in &fwd[y..x] {
                s = step * s;
            }
        } else {
            for step in bwd[x..y].iter().rev() {
                s = step * s;
            }
        }
        let snorm = linalg::norm2(&s);
        if !snorm.is_finite() || snorm > 1e150 {
            return Err(Error::WindowSize {
                from: data.grid[y],
                to: data.grid[x],
            });
        }
        let comm = (data.p_plus(x) * &s - &s * data.p_plus(y)).norm() / snorm;
        let dist = (data.grid[x] - data.grid[y]).abs();
        let proj = if x >= y { data.p_plus(x) } else { data.p_minus(x) };
        let decay = linalg::norm2(&(proj * &s)) / (c * (-0.5 * theta * dist).exp());
        if comm > report.commuting_error || decay > report.decay_ratio {
            report.worst_pair = (data.grid[x], data.grid[y]);
        }
        report.commuting_error = report.commuting_error.max(comm);
        report.decay_ratio = report.decay_ratio.max(decay);
    }
    report.pass = report.commuting_error <= tol
        && report.decay_ratio <= 1.0
        && report.projector_error <= 1e-10
        && theta.is_finite()
        && theta > 0.0;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct BlockDiagonal {
    pub lambda_plus: Vec<CMat>,
    pub lambda_minus: Vec<CMat>,
    /// `max_x ‖off-diagonal blocks of Λ‖ / max(1, ‖Λ‖)`.
    pub residual: f64,
    pub worst_x: f64,
}

/// `Λ = T⁻¹GT − T⁻¹T′` for an arbitrary frame sampled on a uniform grid,
/// split after the first `j` columns; `T′` by fourth-order differences.
pub fn block_diagonalize_frame(
    g: &[CMat],
    frame: &[CMat],
    grid: &[f64],
    j: usize,
    cond_cap: f64,
) -> Result<BlockDiagonal> {
    let m = grid.len();
    if m < 5 || g.len() != m || frame.len() != m {
        return Err(Error::Argument("frame, field and grid lengths differ (or < 5 nodes)".into()));
    }
    let h = grid[1] - grid[0];
    let dt = discrete::fd_derivative(frame, h);
    let n = frame[0].nrows();
    let k = n - j;
    let mut out = BlockDiagonal {
        lambda_plus: Vec::with_capacity(m),
        lambda_minus: Vec::with_capacity(m),
        residual: 0.0,
        worst_x: grid[0],
    };
    for i in 0..m {
        let cond = linalg::condition_number(&frame[i]);
        if !(cond <= cond_cap) {
            return Err(Error::Conditioning { x: grid[i], cond });
        }
        let tinv = linalg::inverse(&frame[i])?;
        let lam = &tinv * (&g[i] * &frame[i] - &dt[i]);
        let off = lam.view((0, j), (j, k)).norm().max(lam.view((j, 0), (k, j)).norm());
        let r = off / linalg::norm2(&lam).max(1.0);
        if r > out.residual {
            out.residual = r;
            out.worst_x = grid[i];
        }
        out.lambda_plus.push(lam.view((0, 0), (j, j)).into_owned());
        out.lambda_minus.push(lam.view((j, j), (k, k)).into_owned());
    }
    Ok(out)
}

pub fn block_diagonalize(data: &DichotomyData) -> Result<BlockDiagonal> {
    let frames: Vec<CMat> = (0..data.nodes()).map(|i| data.frame(i)).collect();
    block_diagonalize_frame(&data.g_nodes, &frames, &data.grid, data.ranks.0, 1e8)
}

// ---------------------------------------------------------------- turning points

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurningPointOptions {
    /// Flag when the eigenvalue gap is below `gap_tol · max(1, ‖G₀‖)` ...
    pub gap_tol: f64,
    /// ... and the eigenvector matrix condition number exceeds `cond_cap`.
    pub cond_cap: f64,
}

impl Default for TurningPointOptions {
    fn default() -> Self {
        TurningPointOptions {
            gap_tol: 0.1,
            cond_cap: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub x: f64,
    pub gap: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPointReport {
    /// `(η₂, …, η_d, τ)`, normalized.
    pub ray: Vec<f64>,
    pub locations: Vec<f64>,
    pub points: Vec<TurningPoint>,
    /// Gap minima meeting only one of the two criteria.
    pub warnings: Vec<TurningPoint>,
}

/// `G₀ = −(A₁ − s)⁻¹(Σ_{j≥2} iη_j A_j + iτ)` at state `w`.
pub fn principal_symbol(sys: &dyn RelaxationSystem, w: &RVec, s: f64, eta: &[f64], tau: f64) -> Result<CMat> {
    let n = sys.state_dim();
    let a1 = to_complex(&comoving_normal_jacobian(sys, w, s)?);
    let mut k = identity(n) * c64(0.0, tau);
    for (j, e) in eta.iter().enumerate() {
        k += to_complex(&sys.flux_jacobian(w, j + 1)) * c64(0.0, *e);
    }
    Ok(-(linalg::solve(&a1, &k)?))
}

fn closest_pair(values: &[num_complex::Complex64]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d = (values[i] - values[j]).norm();
            if best.map_or(true, |b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// Scans `x_grid` for local minima of the eigenvalue separation of `g0`,
/// refines each by the root of the linear fit of the squared difference of
/// the closest pair, and classifies it by gap and eigenvector conditioning.
pub fn detect_turning_points_field(
    g0: &dyn Fn(f64) -> Result<CMat>,
    x_grid: &[f64],
    ray: Vec<f64>,
    opts: &TurningPointOptions,
) -> Result<TurningPointReport> {
    let mut report = TurningPointReport {
        ray,
        locations: vec![],
        points: vec![],
        warnings: vec![],
    };
    if x_grid.len() < 3 {
        return Ok(report);
    }
    let sq_diff = |x: f64| -> Result<Option<num_complex::Complex64>> {
        let v = linalg::eigenvalues(&g0(x)?)?;
        Ok(closest_pair(&v).map(|(i, j, _)| (v[i] - v[j]) * (v[i] - v[j])))
    };
    let gaps: Vec<f64> = x_grid
        .iter()
        .map(|&x| Ok(linalg::eigen(&g0(x)?)?.min_separation()))
        .collect::<Result<_>>()?;
    let m = x_grid.len();
    for i in 0..m {
        let left = if i > 0 { gaps[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < m { gaps[i + 1] } else { f64::INFINITY };
        if !(gaps[i] <= left && gaps[i] < right) || (i == 0 || i == m - 1) {
            continue;
        }
        let (xl, xc, xr) = (x_grid[i - 1], x_grid[i], x_grid[i + 1]);
        let ds = [sq_diff(xl)?, sq_diff(xc)?, sq_diff(xr)?];
        let mut x_star = xc;
        if let [Some(a), Some(b), Some(c)] = ds {
            // least-squares line α + β t through the three samples, then the
            // real t minimizing |α + β t|
            let ts = [xl - xc, 0.0, xr - xc];
            let tm = ts.iter().sum::<f64>() / 3.0;
            let zm = (a + b + c) / 3.0;
            let stt: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
            let beta = ts.iter().zip([a, b, c]).map(|(t, z)| (z - zm) * (t - tm)).sum::<num_complex::Complex64>() / stt;
            let alpha = zm - beta * tm;
            if beta.norm() > 0.0 {
                let t = -(beta.conj() * alpha).re / beta.norm_sqr();
                x_star = xc + t.clamp(xl - xc, xr - xc);
            }
        }
        let mut g = g0(x_star)?;
        let mut eig = linalg::eigen(&g)?;
        // a crossing that is not a branch point has quadratic squared gap;
        // the linear root is then meaningless, keep the grid minimum
        if eig.min_separation() > gaps[i] {
            x_star = xc;
            g = g0(xc)?;
            eig = linalg::eigen(&g)?;
        }
        let tp = TurningPoint {
            x: x_star,
            gap: eig.min_separation(),
            condition: eig.vector_condition(),
        };
        let small_gap = tp.gap < opts.gap_tol * linalg::norm2(&g).max(1.0);
        let ill = !(tp.condition <= opts.cond_cap);
        if small_gap && ill {
            report.points.push(tp);
        } else if small_gap || ill {
            report.warnings.push(tp);
        }
    }
    report.points.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal));
    report.locations = report.points.iter().map(|p| p.x).collect();
    Ok(report)
}

/// Turning points of the principal symbol along a profile for the frequency
/// ray `(η₂, …, η_d, τ)`.
pub fn detect_turning_points(
    sys: &dyn RelaxationSystem,
    profile: &WaveProfile,
    ray: &[f64],
    x_grid: &[f64],
    opts: &TurningPointOptions,
) -> Result<TurningPointReport> {
    let d = sys.space_dim();
    if ray.len() != d {
        return Err(Error::Argument(format!("ray needs {} entries (eta_2..eta_d, tau)", d)));
    }
    let nrm = ray.iter().map(|r| r * r).sum::<f64>().sqrt();
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::Argument("ray must be a nonzero finite direction".into()));
    }
    let unit: Vec<f64> = ray.iter().map(|r| r / nrm).collect();
    let (eta, tau) = (unit[..d - 1].to_vec(), unit[d - 1]);
    let g0 = |x: f64| -> Result<CMat> {
        let (w, _) = profile.sample(x)?;
        principal_symbol(sys, &w, profile.speed, &eta, tau)
    };
    detect_turning_points_field(&g0, x_grid, unit.clone(), opts)
}
