//! First-order linear ODE fields `v′ = G(x) v` on a bounded interval and a
//! fourth-order collocation solver for the associated boundary-value problem
//! `v′ = G v + b` with spectral-projection boundary conditions.

use num_complex::Complex64;

use crate::banded::{BandLu, BandMatrix};
use crate::discrete::{self, Samples};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, identity, CMat, CVec};

pub trait LinearField: Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> (f64, f64);
    fn eval(&self, x: f64) -> CMat;

    fn limit_minus(&self) -> CMat {
        self.eval(self.domain().0)
    }

    fn limit_plus(&self) -> CMat {
        self.eval(self.domain().1)
    }

    /// Upper bound for `‖G(x)‖` used to pick step sizes.
    fn scale(&self) -> f64 {
        let (a, b) = self.domain();
        (0..=64)
            .map(|k| linalg::norm2(&self.eval(a + (b - a) * k as f64 / 64.0)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantField {
    pub g: CMat,
    pub left: f64,
    pub right: f64,
}

impl LinearField for ConstantField {
    fn dim(&self) -> usize {
        self.g.nrows()
    }
    fn domain(&self) -> (f64, f64) {
        (self.left, self.right)
    }
    fn eval(&self, _x: f64) -> CMat {
        self.g.clone()
    }
}

/// Field given by a closure.
pub struct FnField<F: Fn(f64) -> CMat + Sync> {
    pub n: usize,
    pub left: f64,
    pub right: f64,
    pub f: F,
}

impl<F: Fn(f64) -> CMat + Sync> LinearField for FnField<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> (f64, f64) {
        (self.left, self.right)
    }
    fn eval(&self, x: f64) -> CMat {
        (self.f)(x)
    }
}

/// Step size resolving the field: `h ≤ min(h_max, 0.5/‖G‖)`.
pub fn resolving_nodes(field: &dyn LinearField, h_max: f64) -> usize {
    let (a, b) = field.domain();
    let h = h_max.min(0.5 / field.scale().max(1e-12));
    (((b - a) / h).ceil() as usize + 1).max(9)
}

/// Discretized BVP on a uniform grid, factored once for many right-hand sides.
pub struct Bvp {
    pub grid: Vec<f64>,
    pub h: f64,
    n: usize,
    g_nodes: Vec<CMat>,
    g_mid: Vec<CMat>,
    m_blocks: Vec<CMat>,
    n_blocks: Vec<CMat>,
    left_rows: CMat,
    right_rows: CMat,
    lu: BandLu,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub grid: Vec<f64>,
    pub h: f64,
    pub v: Samples,
    /// `v′ = G v + b` at the nodes.
    pub dv: Samples,
    pub b: Samples,
    /// `‖defect/h‖_{L²}` of the collocation equations.
    pub residual: f64,
}

impl Bvp {
    /// Boundary conditions: at the left end the solution has no component
    /// in the stable subspace of `G(left)`, at the right end none in the
    /// unstable subspace of `G(right)`; i.e. no growing modes enter.
    pub fn new(field: &dyn LinearField, nodes: usize) -> Result<Bvp> {
        let (a, b) = field.domain();
        if !(b > a) || nodes < 5 {
            return Err(Error::Argument("BVP needs a nondegenerate domain and >= 5 nodes".into()));
        }
        let h = (b - a) / (nodes - 1) as f64;
        let grid: Vec<f64> = (0..nodes).map(|i| a + h * i as f64).collect();
        let g_nodes: Vec<CMat> = grid.iter().map(|&x| field.eval(x)).collect();
        let g_mid: Vec<CMat> = grid[..nodes - 1].iter().map(|&x| field.eval(x + 0.5 * h)).collect();
        Bvp::assemble(grid, g_nodes, g_mid, &field.limit_minus(), &field.limit_plus())
    }

    /// Builds the BVP from `G` sampled at the nodes of a uniform grid and at
    /// the interval midpoints; `gl`, `gr` fix the boundary conditions.
    pub fn assemble(grid: Vec<f64>, g_nodes: Vec<CMat>, g_mid: Vec<CMat>, gl: &CMat, gr: &CMat) -> Result<Bvp> {
        let nodes = grid.len();
        if nodes < 5 || g_nodes.len() != nodes || g_mid.len() != nodes - 1 {
            return Err(Error::Argument("BVP needs >= 5 nodes with matching samples".into()));
        }
        let n = gl.nrows();
        let h = grid[1] - grid[0];
        let tol = |g: &CMat| 1e-8 * linalg::norm2(g).max(1.0);
        let sl = linalg::spectral_split(gl, tol(gl))?;
        let sr = linalg::spectral_split(gr, tol(gr))?;
        let (ns_left, _) = sl.ranks();
        let (_, nu_right) = sr.ranks();
        if ns_left + nu_right != n {
            return Err(Error::Dichotomy(format!(
                "boundary ranks {ns_left} + {nu_right} != {n}: nonzero Fredholm index"
            )));
        }
        let left_rows = linalg::range_basis(&sl.stable_projector.adjoint(), ns_left).adjoint();
        let pu_right = identity(n) - &sr.stable_projector;
        let right_rows = linalg::range_basis(&pu_right.adjoint(), nu_right).adjoint();

        let id = identity(n);
        let (h6, h23, h8) = (c64(h / 6.0, 0.0), c64(2.0 * h / 3.0, 0.0), c64(h / 8.0, 0.0));
        let half = c64(0.5, 0.0);
        let mut m_blocks = Vec::with_capacity(nodes - 1);
        let mut n_blocks = Vec::with_capacity(nodes - 1);
        for k in 0..nodes - 1 {
            let (gk, gm, gk1) = (&g_nodes[k], &g_mid[k], &g_nodes[k + 1]);
            let mk = -&id - gk * h6 - gm * (&id * half + gk * h8) * h23;
            let nk = &id - gk1 * h6 - gm * (&id * half - gk1 * h8) * h23;
            m_blocks.push(mk);
            n_blocks.push(nk);
        }
        let p = ns_left;
        let dim = nodes * n;
        let kl = p + n - 1;
        let ku = (2 * n - 1).saturating_sub(p).max(n - 1);
        let mut band = BandMatrix::zeros(dim, kl, ku);
        for i in 0..p {
            for c in 0..n {
                band.set(i, c, left_rows[(i, c)]);
            }
        }
        for k in 0..nodes - 1 {
            for i in 0..n {
                let row = p + k * n + i;
                for c in 0..n {
                    band.set(row, k * n + c, m_blocks[k][(i, c)]);
                    band.set(row, (k + 1) * n + c, n_blocks[k][(i, c)]);
                }
            }
        }
        for i in 0..nu_right {
            let row = p + (nodes - 1) * n + i;
            for c in 0..n {
                band.set(row, (nodes - 1) * n + c, right_rows[(i, c)]);
            }
        }
        let lu = band.factor()?;
        Ok(Bvp {
            grid,
            h,
            n,
            g_nodes,
            g_mid,
            m_blocks,
            n_blocks,
            left_rows,
            right_rows,
            lu,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn g_at_node(&self, k: usize) -> &CMat {
        &self.g_nodes[k]
    }

    pub fn solve(&self, rhs: &dyn Fn(f64) -> CVec) -> Result<BvpSolution> {
        let (n, h) = (self.n, self.h);
        let b = Samples::from_fn(self.nodes(), n, |k, z| z.copy_from_slice(rhs(self.grid[k]).as_slice()));
        let bm = Samples::from_fn(self.nodes() - 1, n, |k, z| z.copy_from_slice(rhs(self.grid[k] + 0.5 * h).as_slice()));
        self.solve_sampled(b, bm)
    }

    /// Solves with the inhomogeneity sampled at nodes and interval midpoints.
    pub fn solve_sampled(&self, b: Samples, bm: Samples) -> Result<BvpSolution> {
        let (n, nodes, h) = (self.n, self.nodes(), self.h);
        if b.len() != nodes || bm.len() != nodes - 1 || b.dim() != n || bm.dim() != n {
            return Err(Error::Argument("forcing sample count mismatch".into()));
        }
        let p = self.left_rows.nrows();
        let mut r = vec![Complex64::new(0.0, 0.0); nodes * n];
        let (w1, w2) = (h / 6.0, h * h / 12.0);
        for k in 0..nodes - 1 {
            let gm = &self.g_mid[k];
            let (bk, bmk, bk1) = (b.node(k), bm.node(k), b.node(k + 1));
            let out = &mut r[p + k * n..p + (k + 1) * n];
            for i in 0..n {
                let mut acc = (bk[i] + bmk[i] * 4.0 + bk1[i]) * w1;
                for c in 0..n {
                    acc += gm[(i, c)] * (bk[c] - bk1[c]) * w2;
                }
                out[i] = acc;
            }
        }
        let x = self.lu.solve(&r);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite BVP solution".into()));
        }
        let mut defect = 0.0;
        for k in 0..nodes - 1 {
            let (mk, nk) = (&self.m_blocks[k], &self.n_blocks[k]);
            for i in 0..n {
                let mut d = r[p + k * n + i];
                for c in 0..n {
                    d -= mk[(i, c)] * x[k * n + c] + nk[(i, c)] * x[(k + 1) * n + c];
                }
                defect += d.norm_sqr() / h;
            }
        }
        let v = Samples::from_flat(n, x);
        let bc = (&self.left_rows * v.vector(0)).norm() + (&self.right_rows * v.vector(nodes - 1)).norm();
        let residual = defect.sqrt() + bc;
        let dv = Samples::from_fn(nodes, n, |k, z| {
            let g = &self.g_nodes[k];
            let (vk, bk) = (v.node(k), b.node(k));
            for i in 0..n {
                let mut acc = bk[i];
                for c in 0..n {
                    acc += g[(i, c)] * vk[c];
                }
                z[i] = acc;
            }
        });
        Ok(BvpSolution {
            grid: self.grid.clone(),
            h,
            v,
            dv,
            b,
            residual,
        })
    }
}

impl BvpSolution {
    pub fn vector_at(&self, k: usize) -> CVec {
        self.v.vector(k)
    }

    pub fn l2(&self) -> f64 {
        discrete::l2_norm(&self.v, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: f64) -> ConstantField {
        ConstantField {
            g: CMat::from_element(1, 1, c64(g, 0.0)),
            left: -20.0,
            right: 20.0,
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let f = ConstantField {
            g: CMat::from_row_slice(2, 2, &[c64(-1.0, 0.0), c64(0.3, 0.0), c64(0.0, 0.0), c64(2.0, 0.0)]),
            left: -5.0,
            right: 5.0,
        };
        let bvp = Bvp::new(&f, 101).unwrap();
        let sol = bvp.solve(&|_| CVec::zeros(2)).unwrap();
        assert!(sol.v.max_norm() == 0.0);
    }

    #[test]
    fn scalar_decaying_green_function() {
        // u′ = −u + e^{−x²}: whole-line solution is ∫_{−∞}^x e^{−(x−y)} e^{−y²} dy
        let bvp = Bvp::new(&scalar(-1.0), 2001).unwrap();
        let sol = bvp
            .solve(&|x| CVec::from_element(1, c64((-x * x).exp(), 0.0)))
            .unwrap();
        let pi = std::f64::consts::PI;
        for (x, v) in sol.grid.iter().zip(sol.v.iter()).step_by(50) {
            let exact = 0.5 * pi.sqrt() * (0.25 - x).exp() * erfc_approx(0.5 - x);
            assert!((v[0].re - exact).abs() < 1e-8, "x = {x}: {} vs {exact}", v[0].re);
        }
        assert!(sol.residual < 1e-10);
    }

    // erfc via its continued-fraction-free series/asymptotics is overkill; use
    // numerical quadrature of e^{−t²} for the oracle instead.
    fn erfc_approx(z: f64) -> f64 {
        let upper = 12.0;
        if z >= upper {
            return 0.0;
        }
        let n = 20_000;
        let h = (upper - z) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| (-(z + i as f64 * h).powi(2)).exp()).collect();
        // Simpson
        let mut s = vals[0] + vals[n];
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * vals[i];
        }
        2.0 / std::f64::consts::PI.sqrt() * s * h / 3.0
    }

    #[test]
    fn fourth_order_convergence() {
        let field = FnField {
            n: 1,
            left: -10.0,
            right: 10.0,
            f: |x: f64| CMat::from_element(1, 1, c64(-1.0 - 0.5 * x.tanh(), 0.3)),
        };
        let rhs = |x: f64| CVec::from_element(1, c64((-x * x).exp(), 0.0));
        let reference = Bvp::new(&field, 4001).unwrap().solve(&rhs).unwrap();
        let mut errs = vec![];
        for nodes in [101, 201] {
            let sol = Bvp::new(&field, nodes).unwrap().solve(&rhs).unwrap();
            let stride = 4000 / (nodes - 1);
            let e = sol
                .v
                .iter()
                .enumerate()
                .map(|(k, v)| (CVec::from_column_slice(v) - reference.vector_at(k * stride)).norm())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!((errs[0] / errs[1]).log2() > 3.5, "{errs:?}");
    }

    #[test]
    fn center_spectrum_is_rejected() {
        let f = ConstantField {
            g: CMat::from_element(1, 1, c64(0.0, 1.0)),
            left: -1.0,
            right: 1.0,
        };
        assert!(matches!(Bvp::new(&f, 11), Err(Error::CenterSpectrum { .. })));
    }

    #[test]
    fn index_mismatch_is_rejected() {
        let f = FnField {
            n: 1,
            left: -5.0,
            right: 5.0,
            f: |x: f64| CMat::from_element(1, 1, c64(x.tanh(), 0.0)),
        };
        assert!(matches!(Bvp::new(&f, 51), Err(Error::Dichotomy(_))));
    }
}
