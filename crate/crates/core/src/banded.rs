//! Complex banded LU with partial pivoting.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` superdiagonals. Row `i` is stored
/// over columns `i − kl ..= i + kl + ku` to leave room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![Complex64::new(0.0, 0.0); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| i * self.width + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.idx(i, j).map_or(Complex64::new(0.0, 0.0), |k| self.data[k])
    }

    /// Sets an entry inside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let off = j as isize - i as isize;
        assert!(
            off >= -(self.kl as isize) && off <= self.ku as isize,
            "entry ({i}, {j}) outside band"
        );
        let k = self.idx(i, j).expect("inside band");
        self.data[k] = v;
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.kl + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let span = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for j in 0..n {
            let last = (j + self.kl).min(n - 1);
            let mut p = j;
            let mut best = 0.0;
            for i in j..=last {
                let v = self.get(i, j).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * 1e-3 * scale || !best.is_finite() {
                return Err(Error::Numeric(format!("singular band matrix at column {j}")));
            }
            piv[j] = p;
            let cmax = (j + span).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let a = self.idx(j, c).expect("band");
                    let b = self.idx(p, c).expect("band");
                    self.data.swap(a, b);
                }
            }
            let d = self.get(j, j);
            for i in j + 1..=last {
                let ki = self.idx(i, j).expect("band");
                if self.data[ki] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let m = self.data[ki] / d;
                self.data[ki] = m;
                for c in j + 1..=cmax {
                    let u = self.get(j, c);
                    if u != Complex64::new(0.0, 0.0) {
                        let k = self.idx(i, c).expect("band");
                        self.data[k] -= m * u;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.m.n;
        let kl = self.m.kl;
        let span = self.m.kl + self.m.ku;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            for i in j + 1..=(j + kl).min(n - 1) {
                x[i] -= self.m.get(i, j) * xj;
            }
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for c in j + 1..=(j + span).min(n - 1) {
                acc -= self.m.get(j, c) * x[c];
            }
            x[j] = acc / self.m.get(j, j);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, CMat, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, kl, ku) = (40, 3, 2);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = CMat::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal so pivoting is exercised
                let v = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * if i == j { 0.01 } else { 1.0 };
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<Complex64> = (0..n).map(|_| c64(rng.gen(), rng.gen())).collect();
        let x = band.clone().factor().unwrap().solve(&b);
        let xd = dense.lu().solve(&CVec::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).norm() < 1e-9, "{i}: {} vs {}", x[i], xd[i]);
        }
        let r = band.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(a, b)| (a - b).norm() < 1e-10));
    }

    #[test]
    fn singular_is_reported() {
        let band = BandMatrix::zeros(4, 1, 1);
        assert!(band.factor().is_err());
    }
}
