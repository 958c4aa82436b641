//! The additive cocycle `c_n(z) = sum_{j<n} z_j - q n` of the shift.
//!
//! With `S(n) = sum_{0<=j<n} z_j` for `n >= 0` and `S(n) = -sum_{n<=j<0} z_j`
//! for `n < 0`, every branch reads `c_n = S(n) - q n`, and the cocycle identity
//! `c_{m+n}(z) = c_m(z) + c_n(shift(z, m))` holds for all integers.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{int, to_f64, Num, Rational};
use crate::par::{self, Exec};
use crate::symbolic::{BiSeq, Word};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleValue {
    pub value: Num,
    pub n: i64,
    /// Coordinates read, as the half-open interval `[lo, hi)`.
    pub window: (i64, i64),
}

/// Signed count `S(n)` of ones described in the module docs.
pub fn ones_count(z: &BiSeq, n: i64) -> i64 {
    if n >= 0 {
        (0..n).map(|j| z.coord(j) as i64).sum()
    } else {
        -(n..0).map(|j| z.coord(j) as i64).sum::<i64>()
    }
}

/// `S(k)` for every `k` in `lo..=hi` (requires `lo <= 0 <= hi`), in one pass.
pub fn ones_prefix(z: &BiSeq, lo: i64, hi: i64) -> Vec<i64> {
    assert!(lo <= 0 && hi >= 0, "prefix range must contain 0");
    let mut out = vec![0i64; (hi - lo + 1) as usize];
    let zero = (-lo) as usize;
    for k in 1..=hi {
        out[zero + k as usize] = out[zero + k as usize - 1] + z.coord(k - 1) as i64;
    }
    for k in (lo..0).rev() {
        let i = (k - lo) as usize;
        out[i] = out[i + 1] - z.coord(k) as i64;
    }
    out
}

fn value_from_count(count: i64, n: i64, q: &Num) -> Num {
    match q {
        Num::Exact(q) => Num::Exact(int(count) - q * int(n)),
        Num::Float(q) => Num::Float(count as f64 - q * n as f64),
    }
}

/// `c_n(z)`; exact when `q` is exact.
pub fn c(z: &BiSeq, n: i64, q: &Num) -> CocycleValue {
    CocycleValue { value: value_from_count(ones_count(z, n), n, q), n, window: (n.min(0), n.max(0)) }
}

/// Exact `c_n(z)` for rational `q`.
pub fn c_exact(z: &BiSeq, n: i64, q: &Rational) -> Rational {
    int(ones_count(z, n)) - q * int(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub m: i64,
    pub n: i64,
    /// Exact equality (rational mode only).
    pub exact_equal: Option<bool>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub pairs: Vec<PairCheck>,
    pub failures: usize,
    pub max_residual: f64,
}

/// Checks `c_{m+n}(z) = c_m(z) + c_n(shift(z, m))` pair by pair.
pub fn check_cocycle_identity(z: &BiSeq, pairs: &[(i64, i64)], q: &Num, exec: Exec) -> IdentityReport {
    let checks = par::map(exec, pairs, |&(m, n)| {
        let lhs = c(z, m + n, q).value;
        let a = c(z, m, q).value;
        let b = c(&z.shift(m), n, q).value;
        match (lhs, a, b) {
            (Num::Exact(l), Num::Exact(a), Num::Exact(b)) => {
                let diff = l - (a + b);
                PairCheck { m, n, exact_equal: Some(diff.is_zero()), residual: to_f64(&diff).abs() }
            }
            (l, a, b) => {
                let r = (l.to_f64() - a.to_f64() - b.to_f64()).abs();
                PairCheck { m, n, exact_equal: None, residual: r }
            }
        }
    });
    let failures = checks
        .iter()
        .filter(|p| match p.exact_equal {
            Some(eq) => !eq,
            None => p.residual > crate::DEFAULT_TOLERANCE,
        })
        .count();
    let max_residual = checks.iter().map(|p| p.residual).fold(0.0, par::fmax);
    IdentityReport { pairs: checks, failures, max_residual }
}

/// Exact `min` and `max` of `c_k(z)` over `|k| <= window`.
pub fn bound_scan(z: &BiSeq, q: &Rational, window: i64) -> Result<(Rational, Rational)> {
    if window < 1 {
        return Err(Error::Window("bound_scan window must be >= 1".into()));
    }
    // compare den*c_k = den*S(k) - num*k in integers
    let (num, den) = small_rational(q)?;
    let prefix = ones_prefix(z, -window, window);
    let (mut lo, mut hi) = (i128::MAX, i128::MIN);
    for (i, &s) in prefix.iter().enumerate() {
        let k = i as i128 - window as i128;
        let v = den * s as i128 - num * k;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let to_rat = |v: i128| Rational::new(BigInt::from(v), BigInt::from(den));
    Ok((to_rat(lo), to_rat(hi)))
}

fn small_rational(q: &Rational) -> Result<(i128, i128)> {
    match (q.numer().to_i128(), q.denom().to_i128()) {
        (Some(n), Some(d)) if n.abs() < 1 << 60 && d < 1 << 60 => Ok((n, d)),
        _ => Err(Error::Invalid(format!("q = {q} has too large a numerator or denominator"))),
    }
}

/// `c_{k+1}(z) - c_k(z) = z_k - q` for every `k` in `lo..hi`, exactly.
///
/// This is the exponent form of the Radon-Nikodym chain
/// `lambda^{c_{k+1}} = lambda^{c_k} lambda^{z_k - q}`.
pub fn exponent_chain_holds(z: &BiSeq, q: &Rational, lo: i64, hi: i64) -> bool {
    (lo..hi).all(|k| c_exact(z, k + 1, q) - c_exact(z, k, q) == int(z.coord(k) as i64) - q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Coordinates `[-train_window, train_window)` of each sample feed the linear system.
    pub train_window: i64,
    /// Largest `|c_k|` tolerated on the training window before declaring the cocycle unbounded.
    pub bound: f64,
    /// Number of base points used for the residual check.
    pub check_points: usize,
    /// Residual is checked for `1 <= |n| <= check_horizon`.
    pub check_horizon: i64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { train_window: 512, bound: 16.0, check_points: 100, check_horizon: 64 }
    }
}

/// Locally constant `h` with `c_n(z) ~ h(shift(z, n)) - h(z)`, keyed by the
/// central word `z[-depth/2, -depth/2 + depth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub depth: usize,
    pub table: BTreeMap<Word, f64>,
    /// Word at which `h` is pinned to 0.
    pub base_word: Word,
    /// Max of `|c_n(x) - (h(shift(x, n)) - h(x))|` over the check set.
    pub residual: f64,
    pub equations: usize,
    pub observed_bound: f64,
}

impl TransferFunction {
    pub fn central_word(&self, z: &BiSeq) -> Word {
        z.window(-(self.depth as i64 / 2), self.depth)
    }

    pub fn h(&self, z: &BiSeq) -> Option<f64> {
        self.table.get(&self.central_word(z)).copied()
    }
}

/// Least-squares solve of `h(shift(z)) - h(z) = z_0 - q` over central-word classes.
pub fn solve_transfer(
    samples: &[BiSeq],
    q: &Rational,
    depth: usize,
    cfg: &TransferConfig,
    exec: Exec,
) -> Result<TransferFunction> {
    if samples.is_empty() {
        return Err(Error::Invalid("solve_transfer needs at least one sample".into()));
    }
    if depth == 0 {
        return Err(Error::Invalid("transfer depth must be >= 1".into()));
    }
    let w = cfg.train_window.max(1);
    let mut observed = 0.0f64;
    for z in samples {
        let (lo, hi) = bound_scan(z, q, w)?;
        let b = to_f64(&lo).abs().max(to_f64(&hi).abs());
        if b > cfg.bound {
            return Err(Error::Unbounded { observed: b, bound: cfg.bound });
        }
        observed = observed.max(b);
    }
    let half = depth as i64 / 2;
    let qf = to_f64(q);
    // distinct transitions (w(k), w(k+1)); the right side is fixed by the word
    let mut edges: BTreeMap<(Word, Word), f64> = BTreeMap::new();
    for z in samples {
        let mut prev = z.window(-w - half, depth);
        for k in -w..w {
            let next = z.window(k + 1 - half, depth);
            edges.entry((prev.clone(), next.clone())).or_insert(z.coord(k) as f64 - qf);
            prev = next;
        }
    }
    let mut words: BTreeMap<Word, usize> = BTreeMap::new();
    for (a, b) in edges.keys() {
        words.entry(a.clone()).or_insert(0);
        words.entry(b.clone()).or_insert(0);
    }
    // column order = lexicographic; column 0 is the pinned base word
    for (i, v) in words.values_mut().enumerate() {
        *v = i;
    }
    let base_word = words.keys().next().cloned().expect("at least one word");
    let unknowns = words.len() - 1;
    let table = if unknowns == 0 {
        [(base_word.clone(), 0.0)].into_iter().collect()
    } else {
        let mut a = DMatrix::<f64>::zeros(edges.len(), unknowns);
        let mut rhs = DVector::<f64>::zeros(edges.len());
        for (row, ((from, to), r)) in edges.iter().enumerate() {
            let (i, j) = (words[from], words[to]);
            if j > 0 {
                a[(row, j - 1)] += 1.0;
            }
            if i > 0 {
                a[(row, i - 1)] -= 1.0;
            }
            rhs[row] = *r;
        }
        let sol = a
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Invalid(format!("least-squares solve failed: {e}")))?;
        words.iter().map(|(wd, &i)| (wd.clone(), if i == 0 { 0.0 } else { sol[i - 1] })).collect()
    };
    let mut tf = TransferFunction { depth, table, base_word, residual: 0.0, equations: edges.len(), observed_bound: observed };
    tf.residual = transfer_residual(&tf, samples, q, cfg, exec);
    Ok(tf)
}

/// Residual of `h` over `cfg.check_points` base points spread across the training window.
pub fn transfer_residual(tf: &TransferFunction, samples: &[BiSeq], q: &Rational, cfg: &TransferConfig, exec: Exec) -> f64 {
    let horizon = cfg.check_horizon;
    let span = (cfg.train_window - horizon - 1).max(0);
    let per = cfg.check_points.div_ceil(samples.len()).max(1);
    let mut points = Vec::new();
    for z in samples {
        for i in 0..per {
            let r = if per == 1 { 0 } else { -span + (2 * span * i as i64) / (per as i64 - 1) };
            points.push(z.shift(r));
        }
    }
    points.truncate(cfg.check_points.max(1));
    let qf = to_f64(q);
    let res = par::map(exec, &points, |x| {
        let Some(h0) = tf.h(x) else { return f64::INFINITY };
        let prefix = ones_prefix(x, -horizon, horizon);
        let mut worst = 0.0f64;
        for n in -horizon..=horizon {
            let cn = prefix[(n + horizon) as usize] as f64 - qf * n as f64;
            let hn = match tf.h(&x.shift(n)) {
                Some(v) => v,
                None => return f64::INFINITY,
            };
            worst = worst.max((cn - (hn - h0)).abs());
        }
        worst
    });
    res.into_iter().fold(0.0, par::fmax)
}
