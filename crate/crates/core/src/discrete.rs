//! Grid calculus shared by the solvers: finite differences, quadrature,
//! discrete Sobolev norms.

use num_complex::Complex64;

use crate::linalg::{c64, CVec, RVec};

/// Values that can be combined linearly by the difference stencils.
pub trait Linear: Clone + std::ops::Add<Output = Self> {
    fn scaled(&self, a: f64) -> Self;
}

impl Linear for f64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
}

impl Linear for CVec {
    fn scaled(&self, a: f64) -> Self {
        self * c64(a, 0.0)
    }
}

impl Linear for crate::linalg::CMat {
    fn scaled(&self, a: f64) -> Self {
        self * c64(a, 0.0)
    }
}

impl Linear for Complex64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
}

impl Linear for RVec {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
}

/// Fourth-order first-derivative stencil at sample `i` of `n` (one-sided
/// near the ends), without the `1/(12h)` factor.
pub(crate) fn stencil(i: usize, n: usize) -> [(usize, f64); 5] {
    match i {
        0 => [(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)],
        1 => [(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)],
        _ if i == n - 2 => [(n - 1, 3.0), (n - 2, 10.0), (n - 3, -18.0), (n - 4, 6.0), (n - 5, -1.0)],
        _ if i == n - 1 => [(n - 1, 25.0), (n - 2, -48.0), (n - 3, 36.0), (n - 4, -16.0), (n - 5, 3.0)],
        _ => [(i - 2, 1.0), (i - 1, -8.0), (i + 1, 8.0), (i + 2, -1.0), (i, 0.0)],
    }
}

/// Fourth-order first derivative of uniformly sampled data (one-sided
/// stencils at the ends). Needs at least five samples.
pub fn fd_derivative<T: Linear>(y: &[T], h: f64) -> Vec<T> {
    let n = y.len();
    assert!(n >= 5, "fd_derivative needs at least five samples");
    let c = 1.0 / (12.0 * h);
    (0..n)
        .map(|i| {
            let w = stencil(i, n);
            let mut acc = y[w[0].0].scaled(w[0].1 * c);
            for &(k, a) in &w[1..] {
                acc = acc + y[k].scaled(a * c);
            }
            acc
        })
        .collect()
}

/// Vector-valued samples stored contiguously, `n` components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n: usize,
    data: Vec<Complex64>,
}

impl Samples {
    pub fn zeros(len: usize, n: usize) -> Self {
        assert!(n > 0, "samples need at least one component");
        Samples {
            n,
            data: vec![Complex64::new(0.0, 0.0); len * n],
        }
    }

    pub fn from_flat(n: usize, data: Vec<Complex64>) -> Self {
        assert!(n > 0 && data.len() % n == 0, "flat data does not match the component count");
        Samples { n, data }
    }

    /// Fills node `k` through `f(k, slot)`.
    pub fn from_fn(len: usize, n: usize, mut f: impl FnMut(usize, &mut [Complex64])) -> Self {
        let mut s = Samples::zeros(len, n);
        for (k, slot) in s.data.chunks_exact_mut(n).enumerate() {
            f(k, slot);
        }
        s
    }

    pub fn from_vecs(v: &[CVec]) -> Self {
        let n = v.first().map_or(1, |z| z.len());
        Samples::from_fn(v.len(), n, |k, slot| slot.copy_from_slice(v[k].as_slice()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn node(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn vector(&self, k: usize) -> CVec {
        CVec::from_column_slice(self.node(k))
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Samples {
            n: self.n,
            data: self.data.iter().map(|z| z * a).collect(),
        }
    }

    pub fn sub(&self, other: &Samples) -> Self {
        Samples {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn norm_sqr_at(&self, k: usize) -> f64 {
        self.node(k).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len()).map(|k| self.norm_sqr_at(k)).fold(0.0, f64::max).sqrt()
    }

    /// Fourth-order derivative on a uniform grid of spacing `h`.
    pub fn derivative(&self, h: f64) -> Samples {
        let (len, n) = (self.len(), self.n);
        assert!(len >= 5, "derivative needs at least five samples");
        let c = 1.0 / (12.0 * h);
        Samples::from_fn(len, n, |i, slot| {
            for &(k, a) in &stencil(i, len) {
                if a != 0.0 {
                    for (o, z) in slot.iter_mut().zip(self.node(k)) {
                        *o += z * (a * c);
                    }
                }
            }
        })
    }
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid_nonuniform(x: &[f64], values: &[f64]) -> f64 {
    x.windows(2)
        .zip(values.windows(2))
        .map(|(xs, vs)| 0.5 * (xs[1] - xs[0]) * (vs[0] + vs[1]))
        .sum()
}

pub fn l2_norm(v: &Samples, h: f64) -> f64 {
    let sq: Vec<f64> = (0..v.len()).map(|k| v.norm_sqr_at(k)).collect();
    trapezoid(&sq, h).sqrt()
}

/// `(Σ_{k≤s} ‖∂ᵏv‖²)^{1/2}` given the derivative stack `[v, v′, …]`.
pub fn sobolev_norm(stack: &[Samples], h: f64) -> f64 {
    stack.iter().map(|d| l2_norm(d, h).powi(2)).sum::<f64>().sqrt()
}

/// Derivative stack `[v, v′, …, v^{(s)}]`; the first derivative may be
/// supplied exactly.
pub fn derivative_stack(v: &Samples, first: Option<&Samples>, s: usize, h: f64) -> Vec<Samples> {
    let mut stack = vec![v.clone()];
    for k in 1..=s {
        let next = match (k, first) {
            (1, Some(d)) => d.clone(),
            _ => stack[k - 1].derivative(h),
        };
        stack.push(next);
    }
    stack
}

/// `‖f‖_{Ĥs} = ‖f‖_{H^s} + (1 + |η, τ|)^s ‖f‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatNorm {
    pub s: usize,
    /// `|η, τ|`
    pub frequency: f64,
}

impl HatNorm {
    pub fn new(s: usize, frequency: f64) -> Self {
        HatNorm { s, frequency }
    }

    pub fn weight(&self) -> f64 {
        (1.0 + self.frequency).powi(self.s as i32)
    }

    pub fn from_stack(&self, stack: &[Samples], h: f64) -> f64 {
        sobolev_norm(&stack[..=self.s], h) + self.weight() * l2_norm(&stack[0], h)
    }

    pub fn eval(&self, v: &Samples, first: Option<&Samples>, h: f64) -> f64 {
        self.from_stack(&derivative_stack(v, first, self.s, h), h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
        let h = 2.0 * std::f64::consts::PI / (n - 1) as f64;
        ((0..n).map(|i| f(i as f64 * h)).collect(), h)
    }

    #[test]
    fn fourth_order_derivative() {
        let mut errs = vec![];
        for n in [41, 81] {
            let (y, h) = samples(n, |x| x.sin());
            let d = fd_derivative(&y, h);
            let e = d
                .iter()
                .enumerate()
                .map(|(i, v)| (v - (i as f64 * h).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!((errs[0] / errs[1]).log2() > 3.5, "{errs:?}");
    }

    #[test]
    fn hat_norm_at_zero_frequency() {
        let h = 0.01;
        let v = Samples::from_fn(500, 1, |i, z| z[0] = c64((-(i as f64 * h - 2.5).powi(2)).exp(), 0.0));
        let hn = HatNorm::new(1, 0.0);
        let stack = derivative_stack(&v, None, 1, h);
        let expect = sobolev_norm(&stack, h) + l2_norm(&v, h);
        assert_eq!(hn.eval(&v, None, h), expect);
    }

    #[test]
    fn flat_derivative_matches_generic() {
        let (y, h) = samples(30, |x| (2.0 * x).sin());
        let flat = Samples::from_fn(30, 2, |i, z| {
            z[0] = c64(y[i], 0.0);
            z[1] = c64(0.0, -y[i]);
        });
        let d = flat.derivative(h);
        let g = fd_derivative(&y, h);
        for i in 0..30 {
            assert!((d.node(i)[0].re - g[i]).abs() < 1e-12);
            assert!((d.node(i)[1].im + g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let x: Vec<f64> = vec![0.0, 0.3, 1.0, 1.7];
        let v: Vec<f64> = x.iter().map(|t| 2.0 * t + 1.0).collect();
        assert!((trapezoid_nonuniform(&x, &v) - (1.7f64.powi(2) + 1.7)).abs() < 1e-14);
    }
}
