//! Structural checks: noncharacteristic normal flux, hyperbolicity,
//! geometric regularity, high-frequency damping, and Kawashima coupling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, to_complex, CMat, RVec};
use crate::profile::WaveProfile;

use super::{assemble_symbol, comoving_normal_jacobian, RelaxationSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisTolerances {
    /// Minimum admissible singular value of `A_1 − s Id`.
    pub singular_margin: f64,
    /// Bound on |Im μ| for eigenvalues of the real symbol.
    pub imag_tol: f64,
    /// Eigenvalue separation below which branches count as coalesced.
    pub separation_tol: f64,
    /// Eigenvector-matrix condition number cap (semisimplicity proxy).
    pub cond_cap: f64,
    /// Equilibrium residual tolerance `|r(w0)|`.
    pub equilibrium_tol: f64,
}

impl Default for HypothesisTolerances {
    fn default() -> Self {
        HypothesisTolerances {
            singular_margin: 1e-8,
            imag_tol: 1e-8,
            separation_tol: 1e-6,
            cond_cap: 1e8,
            equilibrium_tol: 1e-10,
        }
    }
}

/// Unit directions in `d` dimensions: `±1` for d = 1, `count` points on the
/// circle for d = 2, a Fibonacci lattice on the sphere for d = 3.
pub fn unit_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(1))
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / count.max(1) as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect(),
        _ => {
            let n = count.max(1);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    let mut v = vec![0.0; d];
                    v[0] = r * t.cos();
                    v[1] = r * t.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

/// Arc of the unit circle from `phi0` to `phi1` (inclusive) with `count` samples.
pub fn circle_path(phi0: f64, phi1: f64, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(2);
    (0..count)
        .map(|k| {
            let phi = phi0 + (phi1 - phi0) * k as f64 / (count - 1) as f64;
            vec![phi.cos(), phi.sin()]
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- (A1)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoncharacteristicReport {
    pub margin: f64,
    pub worst_x: f64,
    pub pass: bool,
}

pub fn check_noncharacteristic(
    sys: &dyn RelaxationSystem,
    profile: &WaveProfile,
    delta: f64,
) -> Result<NoncharacteristicReport> {
    if profile.grid.is_empty() {
        return Err(Error::Argument("profile grid is empty".into()));
    }
    let mut margin = f64::INFINITY;
    let mut worst_x = profile.grid[0];
    for (x, w) in profile.grid.iter().zip(&profile.values) {
        let a = comoving_normal_jacobian(sys, w, profile.speed)?;
        let sv = linalg::smallest_singular_value(&to_complex(&a));
        if sv < margin {
            margin = sv;
            worst_x = *x;
        }
    }
    Ok(NoncharacteristicReport {
        margin,
        worst_x,
        pass: margin >= delta,
    })
}

// ---------------------------------------------------------------- (A2)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub pass: bool,
    pub worst_imag: f64,
    pub worst_condition: f64,
    pub failing_eta: Vec<Vec<f64>>,
}

pub fn check_hyperbolicity(
    sys: &dyn RelaxationSystem,
    w: &RVec,
    eta_samples: &[Vec<f64>],
    tol: &HypothesisTolerances,
) -> Result<HyperbolicityReport> {
    if eta_samples.is_empty() {
        return Err(Error::Argument("eta_samples is empty".into()));
    }
    let mut worst_imag: f64 = 0.0;
    let mut worst_condition: f64 = 1.0;
    let mut failing = Vec::new();
    for eta in eta_samples {
        if (norm(eta) - 1.0).abs() > 1e-8 {
            return Err(Error::Argument(format!("eta sample {eta:?} is not a unit vector")));
        }
        let t = assemble_symbol(sys, w, eta)?;
        let eig = linalg::eigen(&to_complex(&t.matrix)).map_err(|e| Error::Eigen {
            eta: eta.clone(),
            reason: e.to_string(),
        })?;
        let imag = eig.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let cond = eig.vector_condition();
        worst_imag = worst_imag.max(imag);
        worst_condition = worst_condition.max(cond);
        if imag > tol.imag_tol || !(cond <= tol.cond_cap) {
            failing.push(eta.clone());
        }
    }
    Ok(HyperbolicityReport {
        pass: failing.is_empty(),
        worst_imag,
        worst_condition,
        failing_eta: failing,
    })
}

// ---------------------------------------------------------------- (A3)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalescence {
    pub index: usize,
    pub eta: Vec<f64>,
    pub separation: f64,
    /// Largest branch projector norm next to the coalescence.
    pub projector_norm: f64,
    /// Projector-norm growth toward the coalescence (≈1 for analytic crossings).
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub pass: bool,
    pub coalescences: Vec<Coalescence>,
}

/// Largest angle (radians) allowed between consecutive path samples.
pub const MAX_PATH_STEP: f64 = std::f64::consts::PI / 16.0;

fn best_matching(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let n = prev.len();
    if n <= 7 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = perm.clone();
        let mut best_cost = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let cost: f64 = (0..n).map(|i| (prev[i] - next[p[i]]).norm_sqr()).sum();
            if cost < best_cost {
                best_cost = cost;
                best = p.to_vec();
            }
        });
        best
    } else {
        let mut used = vec![false; n];
        (0..n)
            .map(|i| {
                let mut bj = 0;
                let mut bd = f64::INFINITY;
                for j in 0..n {
                    if !used[j] && (prev[i] - next[j]).norm() < bd {
                        bd = (prev[i] - next[j]).norm();
                        bj = j;
                    }
                }
                used[bj] = true;
                bj
            })
            .collect()
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Norms of the rank-one spectral projectors `v_i w_iᴴ / (w_iᴴ v_i)`.
fn branch_projector_norms(vectors: &CMat) -> Vec<f64> {
    let n = vectors.ncols();
    match linalg::inverse(vectors) {
        Ok(inv) => (0..n)
            .map(|i| {
                let v = vectors.column(i).norm();
                let w = inv.row(i).norm();
                v * w
            })
            .collect(),
        Err(_) => vec![f64::INFINITY; n],
    }
}

/// Tracks eigenvalue branches and spectral projectors of the symbol along a
/// fine path of unit frequencies. A coalescence is flagged where a pair of
/// branches meets (to within path resolution) and the branch projectors
/// grow toward the meeting point, i.e. eigenvectors degenerate.
pub fn check_geometric_regularity(
    sys: &dyn RelaxationSystem,
    w: &RVec,
    path: &[Vec<f64>],
    tol: f64,
) -> Result<RegularityReport> {
    if path.len() < 3 {
        return Err(Error::PathTooCoarse { index: 0 });
    }
    for k in 1..path.len() {
        let dot: f64 = path[k].iter().zip(&path[k - 1]).map(|(a, b)| a * b).sum();
        let angle = dot.clamp(-1.0, 1.0).acos();
        if angle > MAX_PATH_STEP {
            return Err(Error::PathTooCoarse { index: k });
        }
    }
    let n = sys.state_dim();
    let mut values: Vec<Vec<Complex64>> = Vec::with_capacity(path.len());
    let mut proj: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for eta in path {
        let t = assemble_symbol(sys, w, eta)?;
        let eig = linalg::eigen(&to_complex(&t.matrix)).map_err(|e| Error::Eigen {
            eta: eta.clone(),
            reason: e.to_string(),
        })?;
        let pn = branch_projector_norms(&eig.vectors);
        let (vals, pn) = match values.last() {
            None => (eig.values, pn),
            Some(prev) => {
                let m = best_matching(prev, &eig.values);
                (m.iter().map(|&j| eig.values[j]).collect(), m.iter().map(|&j| pn[j]).collect())
            }
        };
        values.push(vals);
        proj.push(pn);
    }
    let steps = path.len();
    let mut disp_max: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..steps {
        for i in 0..n {
            scale = scale.max(values[k][i].norm());
            if k > 0 {
                disp_max = disp_max.max((values[k][i] - values[k - 1][i]).norm());
            }
        }
    }
    // separations below this cannot be told apart from zero on this path
    let resolution = tol.max(2.0 * disp_max);
    let probe = 4usize;
    let mut flags = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d: Vec<f64> = (0..steps).map(|k| (values[k][i] - values[k][j]).norm()).collect();
            if d.iter().all(|&x| x < tol) {
                // constant-multiplicity pair
                continue;
            }
            for k in 0..steps {
                let left = if k > 0 { d[k - 1] } else { f64::INFINITY };
                let right = if k + 1 < steps { d[k + 1] } else { f64::INFINITY };
                if !(d[k] <= left && d[k] <= right && d[k] < resolution) {
                    continue;
                }
                if k > 0 && d[k] == left && flags.iter().any(|c: &Coalescence| c.index + 1 == k) {
                    continue;
                }
                let near = |off: isize| -> Option<f64> {
                    let idx = k as isize + off;
                    if idx < 0 || idx >= steps as isize {
                        return None;
                    }
                    let idx = idx as usize;
                    Some(proj[idx][i].max(proj[idx][j]))
                };
                let mut growth: f64 = 1.0;
                let mut pmax: f64 = 0.0;
                for side in [-1isize, 1] {
                    if let (Some(p1), Some(pf)) = (near(side), near(side * probe as isize)) {
                        pmax = pmax.max(p1);
                        growth = growth.max(p1 / pf.max(1.0));
                    }
                }
                pmax = pmax.max(proj[k][i].max(proj[k][j]).min(f64::MAX));
                if growth > 2.0 {
                    flags.push(Coalescence {
                        index: k,
                        eta: path[k].clone(),
                        separation: d[k],
                        projector_norm: pmax,
                        growth,
                    });
                }
            }
        }
    }
    flags.sort_by_key(|c| c.index);
    flags.dedup_by_key(|c| c.index);
    Ok(RegularityReport {
        pass: flags.is_empty(),
        coalescences: flags,
    })
}

// ---------------------------------------------------------------- (chf)

/// `M(η) = −i Σ_j η_j A_j(w0) + dr/dw(w0)`, the generator of `v̂_t = M(η) v̂`.
pub fn generator_symbol(sys: &dyn RelaxationSystem, w0: &RVec, eta: &[f64]) -> Result<CMat> {
    let a = assemble_symbol(sys, w0, eta)?.matrix;
    let e = -sys.relax_jacobian(w0);
    Ok(to_complex(&a) * c64(0.0, -1.0) - to_complex(&e))
}

/// Frequencies on `rays` directions with log-spaced radii in `[eta_min, eta_max]`.
pub fn chf_grid(d: usize, eta_min: f64, eta_max: f64, radii: usize, rays: usize) -> Vec<Vec<f64>> {
    let dirs = unit_directions(d, rays);
    let radii = radii.max(2);
    let mut out = Vec::with_capacity(dirs.len() * radii);
    for dir in &dirs {
        for k in 0..radii {
            let r = eta_min * (eta_max / eta_min).powf(k as f64 / (radii - 1) as f64);
            out.push(dir.iter().map(|x| x * r).collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChfReport {
    /// Largest θ with `max Re σ(M(η)) ≤ −θ` for every grid point with |η| ≥ eta_min.
    pub theta: f64,
    /// Smallest grid radius from which `θ_req` holds on every larger grid point.
    pub eta_threshold: Option<f64>,
    pub eta_min: f64,
    pub worst_eta: Vec<f64>,
    pub pass: bool,
}

pub fn check_chf(
    sys: &dyn RelaxationSystem,
    w0: &RVec,
    eta_min: f64,
    eta_grid: &[Vec<f64>],
    theta_req: f64,
    tol: &HypothesisTolerances,
) -> Result<ChfReport> {
    if !sys.is_equilibrium(w0, tol.equilibrium_tol) {
        return Err(Error::Argument(format!(
            "w0 = {:?} is not an equilibrium (|r| = {:.3e})",
            w0.as_slice(),
            sys.source(w0).amax()
        )));
    }
    let mut samples: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    for eta in eta_grid {
        let r = norm(eta);
        if r < eta_min {
            continue;
        }
        let m = generator_symbol(sys, w0, eta)?;
        let vals = linalg::eigenvalues(&m).map_err(|e| Error::Eigen {
            eta: eta.clone(),
            reason: e.to_string(),
        })?;
        let max_re = vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        samples.push((r, max_re, eta.clone()));
    }
    if samples.is_empty() {
        return Err(Error::Argument("no grid frequency with |eta| >= eta_min".into()));
    }
    let (_, worst_re, worst_eta) = samples
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty");
    let theta = -worst_re;
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    // tail maxima: the threshold is the smallest radius whose tail satisfies θ_req
    let mut eta_threshold = None;
    let mut tail_max = f64::NEG_INFINITY;
    for (r, re, _) in samples.iter().rev() {
        tail_max = tail_max.max(*re);
        if -tail_max >= theta_req {
            eta_threshold = Some(*r);
        } else {
            break;
        }
    }
    Ok(ChfReport {
        theta,
        eta_threshold,
        eta_min,
        worst_eta,
        pass: theta >= theta_req,
    })
}

// ---------------------------------------------------------------- Kawashima

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KawashimaReport {
    /// No eigenvector of the convection symbol lies in the kernel of dr/dw.
    pub genuine_coupling: bool,
    /// Smallest `|dr/dw · r|` over sampled eigenvectors (eigenspaces).
    pub min_coupling: f64,
    /// Whether, at every sample with simple spectrum, some diagonal
    /// symmetrizer of the eigenbasis renders the relaxation matrix Hermitian
    /// positive semidefinite. `None` when no sample had simple spectrum.
    pub symmetric_dissipative: Option<bool>,
    pub pass: bool,
}

fn diagonal_symmetrizer_psd(et: &CMat, tol: f64) -> bool {
    let n = et.nrows();
    let scale = et.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let small = |z: Complex64| z.norm() <= tol * scale;
    let mut d: Vec<Option<f64>> = vec![None; n];
    for start in 0..n {
        if d[start].is_some() {
            continue;
        }
        d[start] = Some(1.0);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let di = d[i].expect("assigned");
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (eij, eji) = (et[(i, j)], et[(j, i)]);
                match (small(eij), small(eji)) {
                    (true, true) => continue,
                    (true, false) | (false, true) => return false,
                    _ => {}
                }
                // d_i E_ij = conj(d_j E_ji)  =>  d_j / d_i = E_ij / conj(E_ji)
                let ratio = eij / eji.conj();
                if ratio.re <= 0.0 || ratio.im.abs() > 1e-8 * ratio.norm() {
                    return false;
                }
                let dj = di * ratio.re;
                match d[j] {
                    None => {
                        d[j] = Some(dj);
                        stack.push(j);
                    }
                    Some(existing) => {
                        if (existing - dj).abs() > 1e-6 * existing.abs().max(dj.abs()) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    let mut h = et.clone();
    for i in 0..n {
        let di = d[i].expect("assigned");
        for j in 0..n {
            h[(i, j)] *= di;
        }
    }
    let hn = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    linalg::min_hermitian_eigenvalue(&h) >= -1e-10 * hn
}

pub fn check_kawashima(
    sys: &dyn RelaxationSystem,
    w0: &RVec,
    eta_samples: &[Vec<f64>],
    tol: &HypothesisTolerances,
) -> Result<KawashimaReport> {
    if !sys.is_equilibrium(w0, tol.equilibrium_tol) {
        return Err(Error::Argument("w0 is not an equilibrium".into()));
    }
    if eta_samples.is_empty() {
        return Err(Error::Argument("eta_samples is empty".into()));
    }
    let drdw = to_complex(&sys.relax_jacobian(w0));
    let damping = -drdw.clone();
    let coupling_tol = 1e-8 * drdw.norm().max(1.0);
    let mut min_coupling = f64::INFINITY;
    let mut sym: Option<bool> = None;
    for eta in eta_samples {
        let t = to_complex(&assemble_symbol(sys, w0, eta)?.matrix);
        let eig = linalg::eigen(&t).map_err(|e| Error::Eigen {
            eta: eta.clone(),
            reason: e.to_string(),
        })?;
        if !(eig.vector_condition() <= tol.cond_cap) {
            return Err(Error::Numeric(format!(
                "defective eigenvector basis at eta = {eta:?} (condition {:.3e})",
                eig.vector_condition()
            )));
        }
        let n = eig.values.len();
        let scale = eig.values.iter().map(|z| z.norm()).fold(1.0, f64::max);
        // cluster (numerically) repeated eigenvalues into eigenspaces
        let mut assigned = vec![false; n];
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let members: Vec<usize> = (0..n)
                .filter(|&j| !assigned[j] && (eig.values[j] - eig.values[i]).norm() <= tol.separation_tol * scale)
                .collect();
            for &j in &members {
                assigned[j] = true;
            }
            let mut basis = CMat::zeros(n, members.len());
            for (c, &j) in members.iter().enumerate() {
                basis.set_column(c, &eig.vectors.column(j));
            }
            let basis = linalg::orthonormalize(&basis);
            let image = &drdw * basis;
            min_coupling = min_coupling.min(linalg::smallest_singular_value(&image));
        }
        if eig.min_separation() > tol.separation_tol * scale {
            let inv = linalg::inverse(&eig.vectors)?;
            let et = inv * &damping * &eig.vectors;
            let ok = diagonal_symmetrizer_psd(&et, 1e-10);
            sym = Some(sym.unwrap_or(true) && ok);
        }
    }
    let genuine_coupling = min_coupling > coupling_tol;
    Ok(KawashimaReport {
        genuine_coupling,
        min_coupling,
        symmetric_dissipative: sym,
        pass: genuine_coupling && sym.unwrap_or(true),
    })
}

// ---------------------------------------------------------------- aggregate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub a1_margin: f64,
    pub a1_pass: bool,
    pub a2_pass: bool,
    pub a2_worst_imag: f64,
    pub a2_condition: f64,
    pub a3_pass: bool,
    pub a3_coalescences: Vec<Coalescence>,
    pub chf_theta: f64,
    pub chf_eta_min: f64,
    pub chf_eta_threshold: Option<f64>,
    pub chf_pass: bool,
    pub kawashima_pass: bool,
    pub kawashima: KawashimaReport,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.a1_pass && self.a2_pass && self.a3_pass && self.chf_pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisSettings {
    pub tolerances: HypothesisTolerances,
    pub eta_min: f64,
    pub eta_max: f64,
    pub radii: usize,
    pub rays: usize,
    pub theta_req: f64,
    pub path_samples: usize,
}

impl Default for HypothesisSettings {
    fn default() -> Self {
        HypothesisSettings {
            tolerances: HypothesisTolerances::default(),
            eta_min: 10.0,
            eta_max: 1e4,
            radii: 40,
            rays: 16,
            theta_req: 0.1,
            path_samples: 721,
        }
    }
}

/// Runs every structural check: (A1) along `profile`, the remaining ones at
/// each equilibrium in `states`, aggregating the worst case.
pub fn check_all(
    sys: &dyn RelaxationSystem,
    profile: &WaveProfile,
    states: &[RVec],
    settings: &HypothesisSettings,
) -> Result<HypothesisReport> {
    let tol = &settings.tolerances;
    let d = sys.space_dim();
    let a1 = check_noncharacteristic(sys, profile, tol.singular_margin)?;
    let dirs = unit_directions(d, settings.rays.max(8));
    let path = if d >= 2 {
        circle_path(0.0, 2.0 * std::f64::consts::PI, settings.path_samples)
    } else {
        vec![]
    };
    let grid = chf_grid(d, settings.eta_min, settings.eta_max, settings.radii, settings.rays);
    let mut report = HypothesisReport {
        a1_margin: a1.margin,
        a1_pass: a1.pass,
        a2_pass: true,
        a2_worst_imag: 0.0,
        a2_condition: 1.0,
        a3_pass: true,
        a3_coalescences: vec![],
        chf_theta: f64::INFINITY,
        chf_eta_min: settings.eta_min,
        chf_eta_threshold: Some(settings.eta_min),
        chf_pass: true,
        kawashima_pass: true,
        kawashima: KawashimaReport {
            genuine_coupling: true,
            min_coupling: f64::INFINITY,
            symmetric_dissipative: None,
            pass: true,
        },
    };
    // (A2)/(A3) along the profile as well as at the listed states
    let mut along: Vec<RVec> = states.to_vec();
    let stride = (profile.values.len() / 16).max(1);
    along.extend(profile.values.iter().step_by(stride).cloned());
    for w in &along {
        let a2 = check_hyperbolicity(sys, w, &dirs, tol)?;
        report.a2_pass &= a2.pass;
        report.a2_worst_imag = report.a2_worst_imag.max(a2.worst_imag);
        report.a2_condition = report.a2_condition.max(a2.worst_condition);
        if d >= 2 {
            let a3 = check_geometric_regularity(sys, w, &path, tol.separation_tol)?;
            report.a3_pass &= a3.pass;
            report.a3_coalescences.extend(a3.coalescences);
        }
    }
    for w0 in states {
        let chf = check_chf(sys, w0, settings.eta_min, &grid, settings.theta_req, tol)?;
        report.chf_theta = report.chf_theta.min(chf.theta);
        report.chf_pass &= chf.pass;
        report.chf_eta_threshold = match (report.chf_eta_threshold, chf.eta_threshold) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        let kw = check_kawashima(sys, w0, &dirs, tol)?;
        report.kawashima_pass &= kw.pass;
        report.kawashima.genuine_coupling &= kw.genuine_coupling;
        report.kawashima.min_coupling = report.kawashima.min_coupling.min(kw.min_coupling);
        report.kawashima.symmetric_dissipative = match (report.kawashima.symmetric_dissipative, kw.symmetric_dissipative) {
            (Some(a), Some(b)) => Some(a && b),
            (a, b) => a.or(b),
        };
        report.kawashima.pass &= kw.pass;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use crate::model::{CustomSystem, JinXin, JinXin2d, LinearSystem, SaintVenant};

    fn tol() -> HypothesisTolerances {
        HypothesisTolerances::default()
    }

    fn symbol_system(m: RMat) -> CustomSystem {
        let n = m.nrows();
        CustomSystem::constant("symbol", vec![m], -RMat::identity(n, n))
    }

    #[test]
    fn jin_xin_is_hyperbolic() {
        let sys = JinXin::new(2.0);
        let r = check_hyperbolicity(&sys, &sys.equilibrium(0.3), &unit_directions(1, 2), &tol()).unwrap();
        assert!(r.pass);
        assert!(r.worst_imag < 1e-12);
    }

    #[test]
    fn nilpotent_symbol_is_not_hyperbolic() {
        let sys = symbol_system(RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let r = check_hyperbolicity(&sys, &RVec::zeros(2), &[vec![1.0]], &tol()).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn identity_symbol_is_hyperbolic() {
        let sys = symbol_system(RMat::identity(3, 3));
        let r = check_hyperbolicity(&sys, &RVec::zeros(3), &[vec![1.0], vec![-1.0]], &tol()).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn non_unit_eta_rejected() {
        let sys = JinXin::new(2.0);
        assert!(check_hyperbolicity(&sys, &sys.equilibrium(0.0), &[vec![2.0]], &tol()).is_err());
    }

    #[test]
    fn jin_xin_2d_is_geometrically_regular() {
        let sys = JinXin2d::new(2.0, 1.0, 1.0);
        let path = circle_path(0.0, 2.0 * std::f64::consts::PI, 721);
        let r = check_geometric_regularity(&sys, &sys.equilibrium(0.5), &path, 1e-6).unwrap();
        assert!(r.pass, "{:?}", r.coalescences);
    }

    #[test]
    fn constant_multiplicity_passes() {
        // A(η) = η1 diag(1, 1, -1) + η2 diag(2, 2, 0): a double eigenvalue with a constant eigenspace
        let a1 = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 1.0, -1.0]));
        let a2 = RMat::from_diagonal(&RVec::from_vec(vec![2.0, 2.0, 0.0]));
        let sys = CustomSystem::constant("cm", vec![a1, a2], -RMat::identity(3, 3));
        let path = circle_path(-0.3, 2.8, 400);
        let r = check_geometric_regularity(&sys, &RVec::zeros(3), &path, 1e-6).unwrap();
        assert!(r.pass, "{:?}", r.coalescences);
    }

    #[test]
    fn analytic_crossing_is_not_flagged() {
        // diag(η1, -η1): branches cross at η1 = 0 with fixed eigenvectors
        let a1 = RMat::from_diagonal(&RVec::from_vec(vec![1.0, -1.0]));
        let a2 = RMat::zeros(2, 2);
        let sys = CustomSystem::constant("cross", vec![a1, a2], -RMat::identity(2, 2));
        let path = circle_path(0.0, std::f64::consts::PI, 301);
        let r = check_geometric_regularity(&sys, &RVec::zeros(2), &path, 1e-6).unwrap();
        assert!(r.pass, "{:?}", r.coalescences);
    }

    #[test]
    fn degenerating_crossing_is_flagged_once() {
        // η1 [[1,1,0],[0,1,0],[0,0,3]] + η2 diag(1,-1,0): a Jordan block at η2 = 0
        let a1 = RMat::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let a2 = RMat::from_diagonal(&RVec::from_vec(vec![1.0, -1.0, 0.0]));
        let sys = CustomSystem::constant("jordan", vec![a1, a2], -RMat::identity(3, 3));
        let half = std::f64::consts::FRAC_PI_2;
        let path = circle_path(-half + 0.01, half - 0.013, 400);
        let r = check_geometric_regularity(&sys, &RVec::zeros(3), &path, 1e-6).unwrap();
        assert_eq!(r.coalescences.len(), 1, "{:?}", r.coalescences);
        let c = &r.coalescences[0];
        assert!(c.eta[1].abs() < 0.02, "flag at {:?}", c.eta);
        // dense oracle: the branch projector norm behaves like 1/|η2|
        for eps in [1e-2, 1e-3, 1e-4] {
            let m = to_complex(&assemble_symbol(&sys, &RVec::zeros(3), &[1.0, eps]).unwrap().matrix);
            let e = linalg::eigen(&m).unwrap();
            let pn = branch_projector_norms(&e.vectors).into_iter().fold(0.0, f64::max);
            assert!(pn * eps > 0.3 && pn * eps < 3.0, "eps {eps}: {pn}");
        }
    }

    #[test]
    fn coarse_path_is_reported() {
        let sys = JinXin2d::new(2.0, 1.0, 1.0);
        let path = circle_path(0.0, std::f64::consts::PI, 5);
        let err = check_geometric_regularity(&sys, &sys.equilibrium(0.0), &path, 1e-6).unwrap_err();
        assert!(matches!(err, Error::PathTooCoarse { .. }));
    }

    #[test]
    fn chf_jin_xin_high_frequency() {
        let sys = JinXin::new(2.0);
        let w0 = sys.equilibrium(0.0);
        let grid = chf_grid(1, 10.0, 1e3, 30, 2);
        let r = check_chf(&sys, &w0, 10.0, &grid, 0.4, &tol()).unwrap();
        assert!(r.pass);
        assert!((r.theta - 0.5).abs() < 1e-10, "theta {}", r.theta);
    }

    #[test]
    fn chf_supercharacteristic_fails() {
        let sys = JinXin::new(1.0);
        let w0 = sys.equilibrium(2.0);
        let grid = chf_grid(1, 10.0, 1e3, 30, 2);
        let r = check_chf(&sys, &w0, 10.0, &grid, 0.0, &tol()).unwrap();
        assert!(!r.pass);
        assert!(r.theta < 0.0);
    }

    #[test]
    fn chf_without_relaxation_is_neutral() {
        let sys = CustomSystem::constant(
            "skew",
            vec![RMat::from_row_slice(2, 2, &[0.0, 1.0, 4.0, 0.0])],
            RMat::zeros(2, 2),
        );
        let grid = chf_grid(1, 10.0, 1e3, 10, 2);
        let r = check_chf(&sys, &RVec::zeros(2), 10.0, &grid, 1e-6, &tol()).unwrap();
        assert!(!r.pass);
        assert!(r.theta.abs() < 1e-10);
    }

    #[test]
    fn chf_requires_equilibrium() {
        let sys = JinXin::new(2.0);
        let w = RVec::from_vec(vec![1.0, 0.0]);
        let err = check_chf(&sys, &w, 1.0, &chf_grid(1, 1.0, 10.0, 3, 2), 0.1, &tol()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn kawashima_jin_xin_subcharacteristic() {
        let sys = JinXin::new(2.0);
        let r = check_kawashima(&sys, &sys.equilibrium(0.5), &unit_directions(1, 2), &tol()).unwrap();
        assert!(r.genuine_coupling);
        assert_eq!(r.symmetric_dissipative, Some(true));
        assert!(r.pass);
    }

    #[test]
    fn kawashima_zero_relaxation_fails() {
        let sys = CustomSystem::constant(
            "norelax",
            vec![RMat::from_row_slice(2, 2, &[0.0, 1.0, 4.0, 0.0])],
            RMat::zeros(2, 2),
        );
        let r = check_kawashima(&sys, &RVec::zeros(2), &[vec![1.0]], &tol()).unwrap();
        assert!(!r.genuine_coupling);
        assert!(!r.pass);
    }

    #[test]
    fn partially_damped_block_fails_coupling() {
        let sys = LinearSystem::partially_damped(2.0, 0.0, 0.5);
        let r = check_kawashima(&sys, &RVec::zeros(3), &unit_directions(1, 2), &tol()).unwrap();
        assert!(!r.genuine_coupling);
        assert!(r.min_coupling < 1e-12);
    }

    #[test]
    fn skew_coupling_is_not_symmetric_dissipative() {
        let sys = LinearSystem::skew_coupled(0.5);
        let r = check_kawashima(&sys, &RVec::zeros(3), &unit_directions(1, 2), &tol()).unwrap();
        assert!(r.genuine_coupling);
        assert_eq!(r.symmetric_dissipative, Some(false));
        assert!(!r.pass);
    }

    #[test]
    fn saint_venant_chf_threshold_at_froude_two() {
        let grid = chf_grid(1, 10.0, 1e4, 30, 2);
        for (f, expect) in [(1.5, true), (2.5, false)] {
            let sys = SaintVenant::new(f);
            let r = check_chf(&sys, &sys.equilibrium(1.0), 10.0, &grid, 1e-3, &tol()).unwrap();
            assert_eq!(r.pass, expect, "F = {f}: theta {}", r.theta);
        }
    }

    #[test]
    fn defective_symbol_is_numeric_error_for_kawashima() {
        let sys = symbol_system(RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let err = check_kawashima(&sys, &RVec::zeros(2), &[vec![1.0]], &tol()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }
}
