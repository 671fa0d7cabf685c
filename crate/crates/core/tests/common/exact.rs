use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// Exact numbers `p + q sqrt(5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Q5 {
    pub p: BigRational,
    pub q: BigRational,
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Q5 {
    pub fn new(p: BigRational, q: BigRational) -> Self {
        Q5 { p, q }
    }
    pub fn int(n: i64) -> Self {
        Q5::new(rat(n, 1), BigRational::zero())
    }
    pub fn add(&self, o: &Q5) -> Q5 {
        Q5::new(&self.p + &o.p, &self.q + &o.q)
    }
    pub fn sub(&self, o: &Q5) -> Q5 {
        Q5::new(&self.p - &o.p, &self.q - &o.q)
    }
    pub fn mul(&self, o: &Q5) -> Q5 {
        let five = rat(5, 1);
        Q5::new(&self.p * &o.p + five * &self.q * &o.q, &self.p * &o.q + &self.q * &o.p)
    }
    pub fn recip(&self) -> Q5 {
        let norm = &self.p * &self.p - rat(5, 1) * &self.q * &self.q;
        Q5::new(&self.p / &norm, -&self.q / &norm)
    }
    pub fn is_zero(&self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }
    pub fn is_negative(&self) -> bool {
        let (ps, qs) = (self.p.signum(), self.q.signum());
        if !ps.is_negative() && !qs.is_negative() {
            return false;
        }
        if !ps.is_positive() && !qs.is_positive() {
            return !self.is_zero();
        }
        // opposite signs: compare p^2 with 5 q^2
        let lhs = &self.p * &self.p;
        let rhs = rat(5, 1) * &self.q * &self.q;
        if ps.is_negative() { lhs > rhs } else { lhs < rhs }
    }
    /// `floor(value * 10^digits)`, using a 60-digit rational approximation of sqrt(5).
    pub fn scaled(&self, digits: u32) -> BigInt {
        let s = BigInt::from(10).pow(60);
        let sqrt5 = BigRational::new((BigInt::from(5) * &s * &s).sqrt(), s);
        let v = &self.p + &self.q * sqrt5;
        (v * BigRational::from_integer(BigInt::from(10).pow(digits))).floor().to_integer()
    }
}

pub fn poly(coeffs: &[i64], x: &Q5) -> Q5 {
    coeffs.iter().rev().fold(Q5::int(0), |acc, &c| acc.mul(x).add(&Q5::int(c)))
}

/// `J` of the golden tent by the three-term periodic sum, exactly.
pub fn golden_j_exact(left: &[i64], right: &[i64]) -> Q5 {
    let a = Q5::new(rat(1, 2), rat(1, 2));
    let u = a.sub(&Q5::int(1));
    let f = |x: &Q5| -> Q5 {
        if x.is_negative() { u.add(&a.mul(x)) } else { u.sub(&a.mul(x)) }
    };
    let slope = |x: &Q5| -> Q5 {
        if x.is_negative() { a.clone() } else { Q5::int(0).sub(&a) }
    };
    let v = |x: &Q5| if x.is_negative() { poly(left, x) } else { poly(right, x) };
    let mut x = Q5::int(0);
    let mut fc = f(&x);
    let mut d = Q5::int(1);
    let mut sum = Q5::int(0);
    assert!(f(&f(&fc)).is_zero(), "period 3");
    for _ in 0..3 {
        sum = sum.add(&v(&x).mul(&d.recip()));
        // next term divides by Df at the next orbit point
        x = fc.clone();
        d = d.mul(&slope(&x));
        fc = f(&x);
    }
    sum
}

