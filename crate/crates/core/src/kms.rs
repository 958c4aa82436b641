//! Parameters `(d, s, beta)` of the binary correspondence family and the
//! quantities derived from them.
//!
//! `t = d - s`, `lambda = t/s` (for `t >= 1`),
//! `q = (log s - beta)/(log s - log t)` (for `1 <= t < s`),
//! `p = (e^beta - t)/(s - t)` (for `t != s`), trace mass `e^beta / d`.
//! Fields that are undefined for a branch are `None`.

use std::fmt;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{pf4_residual, MeasureRep};
use crate::num::{int, pow_i, pow_rational_exact, rat, rational_str, to_f64, Num, Rational};
use crate::par::Exec;

/// Inverse temperature, either numeric or symbolic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaJson", into = "BetaJson")]
pub enum Beta {
    Float(f64),
    /// `beta = log r`.
    LogOf(Rational),
    /// `beta = x log s + (1 - x) log t`.
    Affine(Rational),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaJson {
    Float(f64),
    LogOf {
        #[serde(with = "rational_str")]
        log_of: Rational,
    },
    Affine {
        affine: AffineX,
    },
}

#[derive(Serialize, Deserialize)]
struct AffineX {
    #[serde(with = "rational_str")]
    x: Rational,
}

impl TryFrom<BetaJson> for Beta {
    type Error = String;

    fn try_from(b: BetaJson) -> std::result::Result<Self, String> {
        Ok(match b {
            BetaJson::Float(x) => Beta::Float(x),
            BetaJson::LogOf { log_of } => Beta::LogOf(log_of),
            BetaJson::Affine { affine } => Beta::Affine(affine.x),
        })
    }
}

impl From<Beta> for BetaJson {
    fn from(b: Beta) -> Self {
        match b {
            Beta::Float(x) => BetaJson::Float(x),
            Beta::LogOf(r) => BetaJson::LogOf { log_of: r },
            Beta::Affine(x) => BetaJson::Affine { affine: AffineX { x } },
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Float(x) => write!(f, "{x}"),
            Beta::LogOf(r) => write!(f, "log({r})"),
            Beta::Affine(x) => write!(f, "{x}*log(s) + (1-{x})*log(t)"),
        }
    }
}

impl Beta {
    /// Parses `0.4`, `log(3/2)`, `log 2` or `affine(1/2)`.
    pub fn parse(s: &str) -> Result<Beta> {
        let s = s.trim();
        let inner = |prefix: &str| -> Option<&str> {
            let rest = s.strip_prefix(prefix)?.trim();
            Some(rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest))
        };
        if let Some(r) = inner("log") {
            return Ok(Beta::LogOf(crate::num::parse_rational(r)?));
        }
        if let Some(x) = inner("affine") {
            return Ok(Beta::Affine(crate::num::parse_rational(x)?));
        }
        s.parse::<f64>()
            .map(Beta::Float)
            .map_err(|_| Error::Parse(format!("cannot parse beta {s:?}; use a float, log(a/b) or affine(x)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmsParams {
    pub d: u32,
    pub s: u32,
    pub t: u32,
    pub beta: Beta,
    pub beta_f64: f64,
    /// `e^beta`, exact when rational.
    pub exp_beta: Num,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub lambda: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Num>,
    pub trace_mass: Num,
}

mod opt_rational {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_str(&r.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Rational>, D::Error> {
        let v: Option<Num> = Option::deserialize(d)?;
        match v {
            None => Ok(None),
            Some(Num::Exact(r)) => Ok(Some(r)),
            Some(Num::Float(_)) => Err(serde::de::Error::custom("lambda must be exact")),
        }
    }
}

/// Input form of the parameters, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub d: u32,
    pub s: u32,
    pub beta: Beta,
}

impl ParamsSpec {
    pub fn build(&self) -> Result<KmsParams> {
        derive(self.d, self.s, self.beta.clone())
    }
}

fn check_ds(d: u32, s: u32) -> Result<()> {
    if d < 2 {
        return Err(Error::Params(format!("d must be >= 2, got {d}")));
    }
    if 2 * s < d || s > d {
        return Err(Error::Params(format!("s must satisfy d/2 <= s <= d, got d={d}, s={s}")));
    }
    Ok(())
}

/// `x` with `e^beta = s^x t^(1-x)` when `beta = log r` and `r^N = s^M t^(N-M)` for some `N <= 12`.
fn affine_coordinate(r: &Rational, s: u32, t: u32) -> Option<Rational> {
    if t == 0 || s == t {
        return None;
    }
    for n in 1..=12i64 {
        let rn = pow_i(r, n);
        for m in 0..=n {
            if pow_i(&int(s as i64), m) * pow_i(&int(t as i64), n - m) == rn {
                return Some(rat(m, n));
            }
        }
    }
    None
}

pub fn derive(d: u32, s: u32, beta: Beta) -> Result<KmsParams> {
    check_ds(d, s)?;
    let t = d - s;
    let (sr, tr) = (int(s as i64), int(t as i64));
    let exp_beta = match &beta {
        Beta::Float(x) => Num::Float(x.exp()),
        Beta::LogOf(r) => {
            if !r.is_positive() {
                return Err(Error::Params(format!("log_of argument must be positive, got {r}")));
            }
            Num::Exact(r.clone())
        }
        Beta::Affine(x) => {
            if t == 0 && !x.is_one() {
                return Err(Error::Params("affine beta with t = 0 requires x = 1".into()));
            }
            let one_minus = Rational::one() - x;
            let a = pow_rational_exact(&sr, x);
            let b = if one_minus.is_zero() { Some(Rational::one()) } else { pow_rational_exact(&tr, &one_minus) };
            match (a, b) {
                (Some(a), Some(b)) => Num::Exact(a * b),
                _ => Num::Float((to_f64(x) * (s as f64).ln() + to_f64(&one_minus) * (t as f64).ln()).exp()),
            }
        }
    };
    let beta_f64 = match &beta {
        Beta::Float(x) => *x,
        Beta::LogOf(r) => to_f64(r).ln(),
        Beta::Affine(x) => {
            let xf = to_f64(x);
            let tl = if t == 0 { 0.0 } else { (1.0 - xf) * (t as f64).ln() };
            xf * (s as f64).ln() + tl
        }
    };
    let zero_beta = match &exp_beta {
        Num::Exact(e) => e.is_one(),
        Num::Float(_) => beta_f64 == 0.0,
    };
    if zero_beta || !beta_f64.is_finite() {
        return Err(Error::Params(format!("beta must be finite and nonzero, got {beta}")));
    }
    let lambda = (t >= 1).then(|| Rational::new(tr.numer().clone(), sr.numer().clone()));
    let q = if t >= 1 && t < s {
        let x = match &beta {
            Beta::Affine(x) => Some(x.clone()),
            Beta::LogOf(r) => affine_coordinate(r, s, t),
            Beta::Float(_) => None,
        };
        Some(match x {
            Some(x) => Num::Exact(Rational::one() - x),
            None => Num::Float(((s as f64).ln() - beta_f64) / ((s as f64).ln() - (t as f64).ln())),
        })
    } else {
        None
    };
    let p = (t != s).then(|| match &exp_beta {
        Num::Exact(e) => Num::Exact((e - &tr) / (&sr - &tr)),
        Num::Float(e) => Num::Float((e - t as f64) / (s as f64 - t as f64)),
    });
    let trace_mass = match &exp_beta {
        Num::Exact(e) => Num::Exact(e / int(d as i64)),
        Num::Float(e) => Num::Float(e / d as f64),
    };
    Ok(KmsParams { d, s, t, beta, beta_f64, exp_beta, lambda, q, p, trace_mass })
}

impl KmsParams {
    pub fn spec(&self) -> ParamsSpec {
        ParamsSpec { d: self.d, s: self.s, beta: self.beta.clone() }
    }

    pub fn exp_beta_exact(&self) -> Option<&Rational> {
        self.exp_beta.exact()
    }

    pub fn exp_beta_f64(&self) -> f64 {
        self.exp_beta.to_f64()
    }

    pub fn lambda_f64(&self) -> Option<f64> {
        self.lambda.as_ref().map(to_f64)
    }

    pub fn is_admissible(&self) -> bool {
        admissible_beta(self.d, self.s).map(|r| r.contains(self.beta_f64)).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRange {
    /// `None` means unbounded below.
    pub lower: Option<f64>,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub excludes_zero: bool,
    /// Human-readable form, e.g. `[log 2, log 3]`.
    pub display: String,
}

impl BetaRange {
    /// Membership with a relative slack of `1e-12` at closed endpoints.
    pub fn contains(&self, beta: f64) -> bool {
        if self.excludes_zero && beta == 0.0 {
            return false;
        }
        let eps = 1e-12 * (1.0 + beta.abs());
        let above = match self.lower {
            None => true,
            Some(l) if self.lower_closed => beta >= l - eps,
            Some(l) => beta > l,
        };
        let below = if self.upper_closed { beta <= self.upper + eps } else { beta < self.upper };
        above && below
    }
}

pub fn admissible_beta(d: u32, s: u32) -> Result<BetaRange> {
    check_ds(d, s)?;
    let t = d - s;
    let ln = |x: u32| (x as f64).ln();
    Ok(if t == 0 {
        BetaRange {
            lower: None,
            upper: ln(d),
            lower_closed: false,
            upper_closed: true,
            excludes_zero: true,
            display: format!("(-inf, log {d}], beta != 0"),
        }
    } else if t == s {
        if d == 2 {
            return Err(Error::Params("d = 2, s = t = 1 forces beta = log 1 = 0, which is excluded".into()));
        }
        BetaRange {
            lower: Some(ln(s)),
            upper: ln(s),
            lower_closed: true,
            upper_closed: true,
            excludes_zero: true,
            display: format!("{{log {s}}}"),
        }
    } else if t == 1 {
        BetaRange {
            lower: Some(0.0),
            upper: ln(s),
            lower_closed: false,
            upper_closed: true,
            excludes_zero: true,
            display: format!("(0, log {s}]"),
        }
    } else {
        BetaRange {
            lower: Some(ln(t)),
            upper: ln(s),
            lower_closed: true,
            upper_closed: true,
            excludes_zero: true,
            display: format!("[log {t}, log {s}]"),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pf12Report {
    /// `e^{-beta} d traceMass - 1`, exact when `e^beta` is.
    pub pf1_residual: Num,
    pub pf2_residual: f64,
    pub depth: usize,
}

/// Checks the trace normalization and the fixed-point equation for
/// `tau = traceMass * mu`.
pub fn pf1_pf2_check(params: &KmsParams, mu: &MeasureRep, depth: usize, exec: Exec) -> Result<Pf12Report> {
    let d = int(params.d as i64);
    let pf1 = match (&params.exp_beta, &params.trace_mass) {
        (Num::Exact(e), Num::Exact(m)) => Num::Exact(d * m / e - Rational::one()),
        _ => Num::Float(params.d as f64 * params.trace_mass.to_f64() / params.exp_beta_f64() - 1.0),
    };
    let pf2 = pf4_residual(mu, params, depth, exec)?;
    Ok(Pf12Report { pf1_residual: pf1, pf2_residual: pf2, depth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "kebab-case")]
pub enum GicarReport {
    /// `t < s`: the unique `r` with `s r + t (1 - r) = e^beta`.
    Product { r: Num, type_lambda: Num },
    /// `t = s`: the single admissible beta and the tracial simplex.
    Tracial { beta: f64, type_lambda: Num, description: String },
}

pub fn gicar_solve(params: &KmsParams) -> Result<GicarReport> {
    let (s, t) = (params.s, params.t);
    let range = admissible_beta(params.d, s)?;
    if !range.contains(params.beta_f64) {
        return Err(Error::Params(format!("beta = {} outside the admissible range {}", params.beta_f64, range.display)));
    }
    if s == t {
        return Ok(GicarReport::Tracial {
            beta: params.beta_f64,
            type_lambda: Num::Exact(rat(2, params.d as i64)),
            description: "every tracial state of the gauge-fixed algebra; extreme ones give product states".into(),
        });
    }
    let r = params.p.clone().expect("p is defined for t != s");
    // e^{-|beta|}, so the ratio stays in (0, 1) for negative beta
    let type_lambda = match &params.exp_beta {
        Num::Exact(e) => {
            let inv = e.recip();
            Num::Exact(if inv > Rational::one() { e.clone() } else { inv })
        }
        Num::Float(_) => Num::Float((-params.beta_f64.abs()).exp()),
    };
    Ok(GicarReport::Product { r, type_lambda })
}

/// `e^{-beta}` as `Num`, exact when possible.
pub fn exp_neg_beta(params: &KmsParams) -> Num {
    match &params.exp_beta {
        Num::Exact(e) => Num::Exact(e.recip()),
        Num::Float(e) => Num::Float(1.0 / e),
    }
}

/// `r` as an `i64` if it is an integer that fits.
pub fn as_small_int(r: &Rational) -> Option<i64> {
    r.is_integer().then(|| r.numer().to_i64()).flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_examples() {
        let p = derive(3, 2, Beta::Affine(rat(1, 2))).unwrap();
        assert_eq!(p.lambda, Some(rat(1, 2)));
        assert_eq!(p.q, Some(Num::Exact(rat(1, 2))));
        assert!((p.p.unwrap().to_f64() - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((p.trace_mass.to_f64() - 2f64.sqrt() / 3.0).abs() < 1e-15);

        let p = derive(4, 2, Beta::LogOf(int(2))).unwrap();
        assert_eq!(p.lambda, Some(int(1)));
        assert_eq!(p.q, None);
        assert_eq!(p.p, None);
        assert_eq!(p.trace_mass, Num::Exact(rat(1, 2)));

        let p = derive(2, 2, Beta::LogOf(int(2))).unwrap();
        assert_eq!((p.lambda.clone(), p.q.clone()), (None, None));
        assert_eq!(p.trace_mass, Num::Exact(int(1)));
        assert_eq!(p.p, Some(Num::Exact(int(1))));
    }

    #[test]
    fn symbolic_log_detects_exact_q() {
        let p = derive(3, 2, Beta::LogOf(rat(3, 2))).unwrap();
        assert!(matches!(p.q, Some(Num::Float(_))));
        assert_eq!(p.p, Some(Num::Exact(rat(1, 2))));
        let p = derive(5, 3, Beta::LogOf(int(6))).unwrap();
        assert!(matches!(p.q, Some(Num::Float(_))));
        // 2^2 = 4^1 1^1
        let p = derive(5, 4, Beta::LogOf(int(2))).unwrap();
        assert_eq!(p.q, Some(Num::Exact(rat(1, 2))));
        let p = derive(5, 3, Beta::LogOf(int(3))).unwrap();
        assert_eq!(p.q, Some(Num::Exact(int(0))));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(derive(1, 1, Beta::Float(0.1)).is_err());
        assert!(derive(4, 1, Beta::Float(0.1)).is_err());
        assert!(derive(3, 2, Beta::Float(0.0)).is_err());
        assert!(derive(3, 2, Beta::LogOf(int(1))).is_err());
        assert!(admissible_beta(2, 1).is_err());
    }

    #[test]
    fn ranges() {
        let r = admissible_beta(3, 2).unwrap();
        assert_eq!((r.lower, r.lower_closed), (Some(0.0), false));
        assert!(r.contains(2f64.ln()) && !r.contains(0.0));
        let r = admissible_beta(5, 3).unwrap();
        assert!(r.contains(2f64.ln()) && r.contains(3f64.ln()) && !r.contains(0.5));
        let r = admissible_beta(2, 2).unwrap();
        assert!(r.contains(-5.0) && !r.contains(0.0) && r.contains(2f64.ln()));
        let r = admissible_beta(4, 2).unwrap();
        assert!(r.contains(2f64.ln()) && !r.contains(1.0));
    }

    #[test]
    fn gicar() {
        let p = derive(4, 3, Beta::LogOf(int(2))).unwrap();
        match gicar_solve(&p).unwrap() {
            GicarReport::Product { r, type_lambda } => {
                assert_eq!(r, Num::Exact(rat(1, 2)));
                assert_eq!(type_lambda, Num::Exact(rat(1, 2)));
            }
            other => panic!("{other:?}"),
        }
        let p = derive(4, 3, Beta::LogOf(int(3))).unwrap();
        assert!(matches!(gicar_solve(&p).unwrap(), GicarReport::Product { r: Num::Exact(ref r), .. } if r.is_one()));
        let p = derive(6, 3, Beta::LogOf(int(3))).unwrap();
        assert!(matches!(gicar_solve(&p).unwrap(), GicarReport::Tracial { type_lambda: Num::Exact(ref l), .. } if *l == rat(1, 3)));
        assert!(gicar_solve(&derive(4, 3, Beta::LogOf(int(5))).unwrap()).is_err());
    }

    #[test]
    fn beta_json() {
        let b: Beta = serde_json::from_str(r#"{"log_of":"3/2"}"#).unwrap();
        assert_eq!(b, Beta::LogOf(rat(3, 2)));
        let b: Beta = serde_json::from_str(r#"{"affine":{"x":"1/2"}}"#).unwrap();
        assert_eq!(b, Beta::Affine(rat(1, 2)));
        let b: Beta = serde_json::from_str("0.25").unwrap();
        assert_eq!(b, Beta::Float(0.25));
        assert_eq!(Beta::parse("log(3/2)").unwrap(), Beta::LogOf(rat(3, 2)));
        assert_eq!(Beta::parse("affine(1/3)").unwrap(), Beta::Affine(rat(1, 3)));
    }
}
