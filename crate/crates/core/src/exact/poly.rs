//! Dense univariate polynomials (ascending coefficients) and real-root isolation.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T>(pub Vec<T>);

impl<T: Scalar> Poly<T> {
    pub fn zero() -> Self {
        Poly(vec![T::zero()])
    }

    pub fn constant(c: T) -> Self {
        Poly(vec![c])
    }

    pub fn eval(&self, x: T) -> T {
        self.0.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| {
                    self.0.get(i).copied().unwrap_or_else(T::zero) + other.0.get(i).copied().unwrap_or_else(T::zero)
                })
                .collect(),
        )
    }

    pub fn scale(&self, c: T) -> Self {
        Poly(self.0.iter().map(|&a| a * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * T::count(k))
                .collect(),
        )
    }

    fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != T::zero()).unwrap_or(0)
    }

    /// Real roots inside the open interval `(lo, hi)`, ascending.
    ///
    /// The interval is split at the roots of the derivative (found
    /// recursively) so that each piece is monotone; a sign change on a piece
    /// is then bracketed and bisected to machine precision.
    pub fn roots_in(&self, lo: T, hi: T) -> Vec<T> {
        let deg = self.degree();
        if deg == 0 || !(lo < hi) {
            return Vec::new();
        }
        if deg == 1 {
            let r = -self.0[0] / self.0[1];
            return if r > lo && r < hi { vec![r] } else { Vec::new() };
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().roots_in(lo, hi));
        knots.push(hi);
        let mut roots = Vec::new();
        for win in knots.windows(2) {
            let (a, b) = (win[0], win[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == T::zero() {
                if a > lo && roots.last() != Some(&a) {
                    roots.push(a);
                }
                continue;
            }
            if fb == T::zero() {
                if b < hi {
                    roots.push(b);
                }
                continue;
            }
            if (fa < T::zero()) == (fb < T::zero()) {
                continue;
            }
            roots.push(self.bisect(a, b, fa));
        }
        roots
    }

    fn bisect(&self, mut a: T, mut b: T, fa: T) -> T {
        let neg_a = fa < T::zero();
        let two = T::lit(2.0);
        for _ in 0..200 {
            let mid = a + (b - a) / two;
            if mid <= a || mid >= b {
                break;
            }
            let fm = self.eval(mid);
            if fm == T::zero() {
                return mid;
            }
            if (fm < T::zero()) == neg_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        a + (b - a) / two
    }
}
