//! Dense monomial-basis polynomials used for map branches and direction fields.

use serde::{Deserialize, Serialize};

/// Highest degree accepted for a branch polynomial.
pub const MAX_DEGREE: usize = 16;

/// Polynomial `c[0] + c[1] x + ... + c[n] x^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub(crate) fn set_constant_term(&mut self, value: f64) {
        self.coeffs[0] = value;
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value of the `order`-th derivative at `x`, without materializing it.
    pub fn eval_deriv(&self, x: f64, order: usize) -> f64 {
        if order == 0 {
            return self.eval(x);
        }
        let mut acc = 0.0;
        for k in (order..self.coeffs.len()).rev() {
            acc = acc * x + self.coeffs[k] * falling(k, order);
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &Poly, scale: f64) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(0.0)
                    + scale * other.coeffs.get(k).copied().unwrap_or(0.0)
            })
            .collect();
        Poly::new(coeffs)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Upper bound of `sup_{|x| <= 1} |D^order p(x)|` from the coefficient norm.
    pub fn deriv_bound(&self, order: usize) -> f64 {
        (order..self.coeffs.len())
            .map(|k| self.coeffs[k].abs() * falling(k, order))
            .sum()
    }

    /// `q(s) = p(center + radius s)`.
    pub fn rescaled(&self, center: f64, radius: f64) -> Poly {
        // Taylor shift by repeated synthetic division, then scale.
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                c[j] += center * c[j + 1];
            }
        }
        let mut r = 1.0;
        for ck in c.iter_mut() {
            *ck *= r;
            r *= radius;
        }
        Poly::new(c)
    }

    /// Bound of `sup |D^order p|` over `[lo, hi]` from the coefficients re-expanded about the midpoint.
    pub fn deriv_bound_on(&self, order: usize, lo: f64, hi: f64) -> f64 {
        let radius = 0.5 * (hi - lo);
        let q = self.rescaled(0.5 * (lo + hi), radius);
        q.deriv_bound(order) / radius.powi(order as i32)
    }
}

impl From<Vec<f64>> for Poly {
    fn from(c: Vec<f64>) -> Self {
        Poly::new(c)
    }
}

fn falling(k: usize, order: usize) -> f64 {
    (0..order).map(|j| (k - j) as f64).product()
}

/// Sup norm of `p^(order)` over `[lo, hi]`: dense sampling followed by a
/// golden-section polish around the sampled maximum.
pub(crate) fn sup_on(p: &Poly, order: usize, lo: f64, hi: f64, samples: usize) -> f64 {
    let n = samples.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let node = |i: usize| if i == n - 1 { hi } else { lo + h * i as f64 };
    let mut best = 0.0f64;
    let mut best_i = 0;
    for i in 0..n {
        let val = p.eval_deriv(node(i), order).abs();
        if val > best {
            best = val;
            best_i = i;
        }
    }
    let a = node(best_i.saturating_sub(1));
    let b = node((best_i + 1).min(n - 1));
    best.max(golden_max(|x| p.eval_deriv(x, order).abs(), a, b))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}
