use std::fmt;

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, One, Signed, ToPrimitive, Zero};

/// Numeric constant: exact rational when the inputs were rational, an IEEE
/// double otherwise. Rational overflow silently degrades to a double.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Rat(Rational64),
    Real(f64),
}

impl Num {
    pub fn int(v: i64) -> Num {
        Num::Rat(Rational64::from_integer(v))
    }

    pub fn ratio(num: i64, den: i64) -> Option<Num> {
        (den != 0).then(|| Num::Rat(Rational64::new(num, den)))
    }

    pub fn real(v: f64) -> Num {
        Num::Real(v)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Num::Rat(r) => r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN),
            Num::Real(x) => x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_zero(),
            Num::Real(x) => *x == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_one(),
            Num::Real(x) => *x == 1.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_negative(),
            Num::Real(x) => x.is_sign_negative() && *x != 0.0,
        }
    }

    /// True for rationals with denominator 1.
    pub fn is_integer(&self) -> bool {
        matches!(self, Num::Rat(r) if r.is_integer())
    }

    pub fn add(self, other: Num) -> Num {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a.checked_add(&b).map(Num::Rat).unwrap_or_else(|| Num::Real(self.to_f64() + other.to_f64())),
            _ => Num::Real(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Num) -> Num {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a.checked_mul(&b).map(Num::Rat).unwrap_or_else(|| Num::Real(self.to_f64() * other.to_f64())),
            _ => Num::Real(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Num {
        match self {
            Num::Rat(r) => {
                if *r.numer() == i64::MIN {
                    Num::Real(-self.to_f64())
                } else {
                    Num::Rat(-r)
                }
            }
            Num::Real(x) => Num::Real(-x),
        }
    }

    pub fn abs(self) -> Num {
        if self.is_negative() {
            self.neg()
        } else {
            self
        }
    }

    /// Reciprocal; `None` for zero.
    pub fn recip(self) -> Option<Num> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Num::Rat(r) => Rational64::one().checked_div(&r).map(Num::Rat).unwrap_or_else(|| Num::Real(1.0 / self.to_f64())),
            Num::Real(x) => Num::Real(1.0 / x),
        })
    }

    /// Integer power; `None` for zero raised to a negative power.
    pub fn powi(self, k: i32) -> Option<Num> {
        if k < 0 {
            return self.recip()?.powi(k.checked_neg()?);
        }
        match self {
            Num::Rat(_) => {
                let mut acc = Num::int(1);
                for _ in 0..k {
                    acc = acc.mul(self);
                }
                Some(acc)
            }
            Num::Real(x) => Some(Num::Real(x.powi(k))),
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Rat(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Num::Rat(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            // `{:?}` is the shortest representation that round-trips and
            // always carries a `.` or an exponent, so it re-parses as a real.
            Num::Real(x) => write!(f, "{x:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_stays_exact() {
        let a = Num::ratio(1, 3).unwrap();
        let s = a.add(a).add(a);
        assert_eq!(s, Num::int(1));
        assert!(s.is_one());
    }

    #[test]
    fn overflow_degrades_to_real() {
        let big = Num::int(i64::MAX);
        assert!(matches!(big.mul(big), Num::Real(_)));
        assert!(matches!(big.add(big), Num::Real(_)));
    }

    #[test]
    fn powers() {
        assert_eq!(Num::int(2).powi(-2), Num::ratio(1, 4));
        assert_eq!(Num::int(0).powi(-1), None);
        assert_eq!(Num::int(-3).powi(3), Some(Num::int(-27)));
    }

    #[test]
    fn display() {
        assert_eq!(Num::ratio(-1, 2).unwrap().to_string(), "-1/2");
        assert_eq!(Num::real(2.0).to_string(), "2.0");
        assert_eq!(Num::real(1e-7).to_string(), "1e-7");
    }
}
