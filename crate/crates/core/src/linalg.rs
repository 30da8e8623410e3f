//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Double-double value hi + lo with |lo| <= ulp(hi) / 2.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn fast_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let s = Dd::fast_two_sum(s.hi, s.lo + t.hi);
        Dd::fast_two_sum(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::fast_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let e = self.sub(Dd::two_prod(x, x));
        Dd::fast_two_sum(x, e.hi / (2.0 * x))
    }

    fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }
}

/// Eigen decomposition of a real symmetric matrix by cyclic Jacobi
/// rotations, eigenvalues sorted descending.
///
/// Rotations are carried in double-double arithmetic and rounded once at the
/// end, so every eigenvector component is correct to about one ulp of its
/// own size. Weakly coupled networks need that: the receiver's share of a
/// distant transmitter mode can sit ten orders below one.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m.ncols(),
        });
    }
    let idx = |r: usize, c: usize| r * n + c;
    let mut a: Vec<Dd> = (0..n * n).map(|k| Dd::from(m[(k / n, k % n)])).collect();
    let mut v: Vec<Dd> = (0..n * n)
        .map(|k| if k / n == k % n { Dd::ONE } else { Dd::ZERO })
        .collect();
    const TINY: f64 = 1e-32;

    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq.hi == 0.0 {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                if apq.hi.abs() <= TINY * (app.hi.abs() * aqq.hi.abs()).sqrt() {
                    a[idx(p, q)] = Dd::ZERO;
                    a[idx(q, p)] = Dd::ZERO;
                    continue;
                }
                rotated = true;
                let theta = aqq.sub(app).div(apq.add(apq));
                let root = theta.mul(theta).add(Dd::ONE).sqrt();
                let mut t = Dd::ONE.div(theta.abs().add(root));
                if theta.hi < 0.0 {
                    t = t.neg();
                }
                let c = Dd::ONE.div(t.mul(t).add(Dd::ONE).sqrt());
                let s = t.mul(c);
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c.mul(akp).sub(s.mul(akq));
                    a[idx(k, q)] = s.mul(akp).add(c.mul(akq));
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c.mul(apk).sub(s.mul(aqk));
                    a[idx(q, k)] = s.mul(apk).add(c.mul(aqk));
                }
                a[idx(p, q)] = Dd::ZERO;
                a[idx(q, p)] = Dd::ZERO;
                for k in 0..n {
                    let vkp = v[idx(k, p)];
                    let vkq = v[idx(k, q)];
                    v[idx(k, p)] = c.mul(vkp).sub(s.mul(vkq));
                    v[idx(k, q)] = s.mul(vkp).add(c.mul(vkq));
                }
            }
        }
        if !rotated {
            let diag = |i: usize| a[idx(i, i)];
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| {
                let d = diag(j).sub(diag(i));
                d.hi.total_cmp(&0.0).then(i.cmp(&j))
            });
            let values = DVector::from_iterator(n, order.iter().map(|&i| diag(i).hi + diag(i).lo));
            let mut vectors = DMatrix::<f64>::zeros(n, n);
            for (dst, &src) in order.iter().enumerate() {
                let col: Vec<f64> = (0..n).map(|k| v[idx(k, src)].hi + v[idx(k, src)].lo).collect();
                // sign convention: largest-magnitude component positive
                let pivot = col.iter().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { *x } else { acc });
                let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
                for (k, x) in col.iter().enumerate() {
                    vectors[(k, dst)] = sign * x;
                }
            }
            return Ok((values, vectors));
        }
    }
    Err(Error::IllConditioned {
        condition: f64::INFINITY,
    })
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Induced 1-norm (max column sum).
pub fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse by partial-pivot LU together with the 1-norm condition number.
pub fn inverse_with_condition(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m.ncols(),
        });
    }
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() {
        return Err(Error::IllConditioned { condition: cond });
    }
    Ok((inv, cond))
}

/// Moore-Penrose pseudoinverse via SVD, together with the effective rank.
/// Singular values below `rel_tol * sigma_max` are treated as zero.
pub fn pseudo_inverse(m: &CMatrix, rel_tol: f64) -> (CMatrix, usize) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * rel_tol;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut rank = 0;
    let mut pinv = CMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let vi = vt.row(i).adjoint();
            let ui = u.column(i).adjoint();
            pinv += (vi * ui) * Complex64::new(1.0 / s, 0.0);
        }
    }
    (pinv, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, -2.0, 2.0, 1.0, 2.0, 0.0, 1.0, -2.0, 0.0, 3.0, -2.0, 2.0, 1.0, -2.0, -1.0,
            ],
        )
    }

    #[test]
    fn jacobi_reconstructs_and_is_orthogonal() {
        let m = sample();
        let (lam, q) = symmetric_eigen(&m).unwrap();
        let rebuilt = &q * DMatrix::from_diagonal(&lam) * q.transpose();
        assert!(max_abs_real(&(rebuilt - &m)) < 1e-13);
        let id = &q * q.transpose();
        assert!(max_abs_real(&(id - DMatrix::identity(4, 4))) < 1e-14);
        for w in lam.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn jacobi_agrees_with_nalgebra_eigenvalues() {
        let m = sample();
        let (lam, _) = symmetric_eigen(&m).unwrap();
        let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
        reference.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in lam.iter().zip(reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_resolves_tiny_couplings() {
        // weakly coupled pair: eigenvector mixing ~ eps / gap
        let eps = 1e-12;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, eps, eps, 0.9]);
        let (_, q) = symmetric_eigen(&m).unwrap();
        let mix = q[(1, 0)].abs();
        let expected = eps / 0.1;
        assert!(((mix - expected) / expected).abs() < 1e-9, "{mix}");
    }

    #[test]
    fn pinv_defining_identities() {
        let m = CMatrix::from_fn(5, 3, |i, j| {
            let x = 0.4 * i as f64 - 0.7;
            Complex64::new(x.powi(j as i32), 0.1 * (i + j) as f64)
        });
        let (p, rank) = pseudo_inverse(&m, 1e-12);
        assert_eq!(rank, 3);
        assert!(max_abs(&(&m * &p * &m - &m)) < 1e-10);
        assert!(max_abs(&(&p * &m * &p - &p)) < 1e-10);
    }

    #[test]
    fn pinv_of_duplicated_columns_splits_evenly() {
        let col = CVector::from_fn(4, |i, _| Complex64::new(i as f64 + 1.0, 0.5));
        let m = CMatrix::from_columns(&[col.clone(), col.clone()]);
        let (p, rank) = pseudo_inverse(&m, 1e-10);
        assert_eq!(rank, 1);
        let x = &p * &col;
        assert!((x[0] - x[1]).norm() < 1e-12);
        assert!((x[0] + x[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_condition_flags_singular() {
        let m = CMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(inverse_with_condition(&m).is_err());
    }
}
