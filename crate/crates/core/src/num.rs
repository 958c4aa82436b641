//! Exact and floating-point scalars.
//!
//! Exact mode uses arbitrary-precision rationals. Quantities of the form
//! `coeff * lambda^e` with rational `lambda` and rational exponent `e` are not
//! rational in general, so they are kept symbolically as [`ExactWeight`] and
//! summed as formal [`LambdaSum`]s keyed by exponent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    Rational::from_str(s.trim()).map_err(|_| Error::Parse(format!("not a rational number: {s:?}")))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator individually too large for f64
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Integer power with a possibly negative exponent.
pub fn pow_i(base: &Rational, e: i64) -> Rational {
    let mut acc = Rational::one();
    let b = if e < 0 { base.recip() } else { base.clone() };
    for _ in 0..e.unsigned_abs() {
        acc *= &b;
    }
    acc
}

/// `base^e` if it is rational (exact n-th root of a rational power), else `None`.
pub fn pow_rational_exact(base: &Rational, e: &Rational) -> Option<Rational> {
    if base.is_zero() {
        return if e.is_positive() { Some(Rational::zero()) } else { None };
    }
    if base.is_negative() {
        return None;
    }
    let n = e.denom().to_u32()?;
    let m = e.numer().to_i64()?;
    let p = pow_i(base, m);
    let root = |x: &BigInt| -> Option<BigInt> {
        let r = x.nth_root(n);
        if pow_big(&r, n) == *x {
            Some(r)
        } else {
            None
        }
    };
    Some(Rational::new(root(p.numer())?, root(p.denom())?))
}

fn pow_big(x: &BigInt, n: u32) -> BigInt {
    num_traits::pow(x.clone(), n as usize)
}

/// Arithmetic mode recorded in every result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Exact,
    Float,
}

/// A scalar that is either an exact rational or a binary64 float.
#[derive(Debug, Clone, PartialEq)]
pub enum Num {
    Exact(Rational),
    Float(f64),
}

impl Num {
    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Exact(r) => to_f64(r),
            Num::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Num::Exact(r) => Some(r),
            Num::Float(_) => None,
        }
    }

    pub fn mode(&self) -> Arithmetic {
        match self {
            Num::Exact(_) => Arithmetic::Exact,
            Num::Float(_) => Arithmetic::Float,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Exact(r) => r.is_zero(),
            Num::Float(x) => *x == 0.0,
        }
    }
}

impl From<Rational> for Num {
    fn from(r: Rational) -> Self {
        Num::Exact(r)
    }
}

impl From<f64> for Num {
    fn from(x: f64) -> Self {
        Num::Float(x)
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Exact(r) => write!(f, "{r}"),
            Num::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Num::Exact(r) => s.serialize_str(&r.to_string()),
            Num::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a \"num/den\" string")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num::Float(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num::Exact(int(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num::Exact(Rational::from_integer(BigInt::from(v))))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                parse_rational(v).map(Num::Exact).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Serde helper for fields holding an exact rational as a `"num/den"` string.
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        match Num::deserialize(d)? {
            Num::Exact(r) => Ok(r),
            Num::Float(_) => Err(de::Error::custom("expected an exact rational, got a float")),
        }
    }
}

/// `coeff * lambda^exponent`, all rational.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactWeight {
    #[serde(with = "rational_str")]
    pub coeff: Rational,
    #[serde(rename = "lambda", with = "rational_str")]
    pub base: Rational,
    #[serde(with = "rational_str")]
    pub exponent: Rational,
}

impl ExactWeight {
    pub fn new(coeff: Rational, base: Rational, exponent: Rational) -> Self {
        ExactWeight { coeff, base, exponent }
    }

    pub fn power(base: Rational, exponent: Rational) -> Self {
        ExactWeight { coeff: Rational::one(), base, exponent }
    }

    pub fn mul(&self, other: &ExactWeight) -> Result<ExactWeight> {
        if self.base != other.base {
            return Err(Error::Invalid("cannot multiply weights with different bases".into()));
        }
        Ok(ExactWeight {
            coeff: &self.coeff * &other.coeff,
            base: self.base.clone(),
            exponent: &self.exponent + &other.exponent,
        })
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.coeff) * to_f64(&self.base).powf(to_f64(&self.exponent))
    }
}

/// Formal sum `sum_e c_e * lambda^e` over rational exponents.
///
/// Zero as a formal sum implies zero as a real number; the converse need not
/// hold, so equality tests built on this are sufficient, not necessary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaSum {
    pub base: Rational,
    terms: BTreeMap<Rational, Rational>,
}

impl LambdaSum {
    pub fn zero(base: Rational) -> Self {
        LambdaSum { base, terms: BTreeMap::new() }
    }

    pub fn from_weight(w: &ExactWeight) -> Self {
        let mut s = LambdaSum::zero(w.base.clone());
        s.add_term(w.exponent.clone(), w.coeff.clone());
        s
    }

    pub fn add_term(&mut self, exponent: Rational, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        // base 1 collapses every exponent to a plain rational
        let key = if self.base.is_one() { Rational::zero() } else { exponent };
        let e = self.terms.entry(key.clone()).or_insert_with(Rational::zero);
        *e += coeff;
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add_weight(&mut self, w: &ExactWeight) -> Result<()> {
        if w.base != self.base {
            return Err(Error::Invalid("weight base differs from sum base".into()));
        }
        self.add_term(w.exponent.clone(), w.coeff.clone());
        Ok(())
    }

    pub fn add(&mut self, other: &LambdaSum) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), c.clone());
        }
    }

    pub fn sub(&mut self, other: &LambdaSum) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), -c.clone());
        }
    }

    /// Multiply by the monomial `coeff * lambda^exponent`.
    pub fn scale(&self, coeff: &Rational, exponent: &Rational) -> LambdaSum {
        let mut out = LambdaSum::zero(self.base.clone());
        for (e, c) in &self.terms {
            out.add_term(e + exponent, c * coeff);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Rational, &Rational)> {
        self.terms.iter()
    }

    pub fn to_f64(&self) -> f64 {
        let l = to_f64(&self.base);
        self.terms.iter().map(|(e, c)| to_f64(c) * l.powf(to_f64(e))).sum()
    }

    /// Sum of absolute values of each term, evaluated in floating point.
    pub fn abs_f64(&self) -> f64 {
        let l = to_f64(&self.base);
        self.terms.iter().map(|(e, c)| (to_f64(c) * l.powf(to_f64(e))).abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roots() {
        assert_eq!(pow_rational_exact(&rat(9, 4), &rat(1, 2)), Some(rat(3, 2)));
        assert_eq!(pow_rational_exact(&int(2), &rat(1, 2)), None);
        assert_eq!(pow_rational_exact(&rat(1, 8), &rat(-2, 3)), Some(int(4)));
    }

    #[test]
    fn num_serde() {
        let n: Num = serde_json::from_str("\"3/4\"").unwrap();
        assert_eq!(n, Num::Exact(rat(3, 4)));
        let f: Num = serde_json::from_str("0.25").unwrap();
        assert_eq!(f, Num::Float(0.25));
        assert_eq!(serde_json::to_string(&Num::Exact(rat(-1, 2))).unwrap(), "\"-1/2\"");
    }

    #[test]
    fn lambda_sum_cancels() {
        let mut a = LambdaSum::zero(rat(1, 2));
        a.add_term(rat(1, 2), int(3));
        a.add_term(int(0), int(1));
        let b = a.scale(&int(1), &rat(-1, 2));
        let mut c = b.scale(&int(1), &rat(1, 2));
        c.sub(&a);
        assert!(c.is_zero());
        assert!((a.to_f64() - (3.0 * 0.5f64.sqrt() + 1.0)).abs() < 1e-15);
    }
}
