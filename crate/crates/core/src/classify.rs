//! Factor type and reduced flow of weights for the enumerated KMS families.
//!
//! The classifier never upgrades a partial answer: when only the flow is
//! known the type label is absent, and the aperiodic-orbit case whose type
//! is undetermined carries its own label.

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::cocycle::{ones_prefix, solve_transfer, TransferConfig};
use crate::error::{Error, Result};
use crate::kms::{derive, gicar_solve, GicarReport, KmsParams, ParamsSpec};
use crate::measure::{nu_periodic, s_equals_d_trace_mass};
use crate::num::{int, pow_i, rat, Num, Rational};
use crate::par::Exec;
use crate::symbolic::{BiSeq, SequenceSpec, Word};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShiftInvariantKind {
    /// Uniform measure on the orbit of `word^Z`.
    AtomicPeriodic { word: Word },
    /// Invariant measure of an aperiodic subshift with bounded cocycle.
    Coboundary { subshift: SequenceSpec },
    Other { description: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    PeriodicOrbit { y: SequenceSpec },
    AperiodicOrbit { z: SequenceSpec, window: i64 },
    BernoulliPoint,
    ShiftInvariant { measure: ShiftInvariantKind },
    /// `lambda^h nu_0` on the orbit closure of `subshift`.
    CoboundaryMeasure { subshift: SequenceSpec, depth: usize },
    /// `s = d`, the state attached to `y` in `C_1`.
    BoundaryPoint { y: SequenceSpec },
    Gicar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmsDatum {
    pub params: ParamsSpec,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeLabel {
    #[serde(rename = "III_lambda")]
    IIILambda,
    #[serde(rename = "III_0")]
    III0,
    #[serde(rename = "II_1")]
    II1,
    #[serde(rename = "semifinite-open")]
    SemifiniteOpen,
    #[serde(rename = "not-extreme-semifinite")]
    NotExtremeSemifinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReducedFlow {
    Trivial,
    /// Cyclic permutation of an `n`-point orbit.
    Cycle { n: u64 },
    TranslationOnZ,
    /// Shift on `({0,1}^Z, measure)`.
    Shift { measure: String },
    SubshiftWithMeasure { subshift: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    /// The translation itself, for `beta > 0`.
    Forward,
    /// Its inverse, for `beta < 0`.
    Reverse,
}

impl TimeDirection {
    pub fn of(beta: f64) -> Self {
        if beta > 0.0 {
            TimeDirection::Forward
        } else {
            TimeDirection::Reverse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorVerdict {
    #[serde(rename = "type")]
    pub type_label: Option<TypeLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Num>,
    pub reduced_flow: ReducedFlow,
    pub time_direction: TimeDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_mass: Option<Num>,
}

fn verdict(params: &KmsParams, label: Option<TypeLabel>, lambda: Option<Num>, flow: ReducedFlow) -> FactorVerdict {
    FactorVerdict { type_label: label, lambda, reduced_flow: flow, time_direction: TimeDirection::of(params.beta_f64), trace_mass: None }
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::BranchMismatch(msg.into())
}

fn at_log(params: &KmsParams, x: u32) -> bool {
    match &params.exp_beta {
        Num::Exact(e) => *e == int(x as i64),
        Num::Float(_) => (params.beta_f64 - (x as f64).ln()).abs() < 1e-12,
    }
}

/// `prod_{k<n} 1/(s^{1-y_k} t^{y_k}) = 1/(s^{n-ones} t^{ones})`.
pub fn periodic_ratio_product(word: &Word, s: u32, t: u32) -> Rational {
    word.symbols()
        .iter()
        .map(|&y| if y == 0 { rat(1, s as i64) } else { rat(1, t as i64) })
        .fold(Rational::one(), |a, b| a * b)
}

/// `e^{-n beta}` at the forced temperature of the orbit of `word^Z`, from
/// `e^beta = s^x t^(1-x)` with `x = 1 - ones/n`.
pub fn periodic_ratio_from_beta(word: &Word, s: u32, t: u32) -> Rational {
    let n = word.len() as i64;
    let ones = word.digit_sum() as i64;
    // n x = n - ones and n (1 - x) = ones are integers
    let e_n_beta = pow_i(&int(s as i64), n - ones) * pow_i(&int(t as i64), ones);
    e_n_beta.recip()
}

fn periodic_verdict(params: &KmsParams, y: &BiSeq) -> Result<FactorVerdict> {
    let (d, s, t) = (params.d, params.s, params.t);
    let pm = nu_periodic(y, d, s, 4096)?;
    if (pm.params.beta_f64 - params.beta_f64).abs() > 1e-12 {
        return Err(mismatch(format!(
            "the orbit of {} forces beta = {}, but beta = {}",
            pm.word, pm.params.beta_f64, params.beta_f64
        )));
    }
    let a = periodic_ratio_product(&pm.word, s, t);
    let b = periodic_ratio_from_beta(&pm.word, s, t);
    if a != b {
        return Err(Error::Invalid(format!("ratio mismatch {a} vs {b}")));
    }
    Ok(verdict(params, Some(TypeLabel::IIILambda), Some(Num::Exact(a)), ReducedFlow::Cycle { n: pm.period }))
}

fn trivial_one_over(params: &KmsParams, x: u32) -> FactorVerdict {
    verdict(params, Some(TypeLabel::IIILambda), Some(Num::Exact(rat(1, x as i64))), ReducedFlow::Trivial)
}

pub fn classify(datum: &KmsDatum, exec: Exec) -> Result<FactorVerdict> {
    let params = datum.params.build()?;
    let (d, s, t) = (params.d, params.s, params.t);
    let admissible = params.is_admissible();
    if !admissible && !matches!(datum.family, Family::Gicar) {
        return Err(Error::Params(format!("beta = {} is not admissible for d = {d}, s = {s}", params.beta_f64)));
    }
    match &datum.family {
        Family::BoundaryPoint { y } => {
            if t != 0 {
                return Err(mismatch("boundary points belong to the s = d branch"));
            }
            let y = y.build()?;
            if y.coord(0) != 1 {
                return Err(mismatch("boundary point y must lie in C_1"));
            }
            if at_log(&params, d) {
                return Ok(trivial_one_over(&params, d));
            }
            let mut v = verdict(&params, Some(TypeLabel::II1), None, ReducedFlow::TranslationOnZ);
            v.trace_mass = Some(s_equals_d_trace_mass(&params));
            Ok(v)
        }
        Family::BernoulliPoint => {
            if t == 0 {
                return if at_log(&params, d) {
                    Ok(trivial_one_over(&params, d))
                } else {
                    Err(mismatch("for s = d below beta = log d the extreme states are the boundary points"))
                };
            }
            if t == s {
                return Ok(verdict(&params, None, None, ReducedFlow::Shift { measure: "two-sided Bernoulli product".into() }));
            }
            if at_log(&params, s) {
                return periodic_verdict(&params, &BiSeq::periodic(&Word::repeat(0, 1))?);
            }
            if t >= 2 && at_log(&params, t) {
                return periodic_verdict(&params, &BiSeq::periodic(&Word::repeat(1, 1))?);
            }
            Ok(verdict(
                &params,
                Some(TypeLabel::NotExtremeSemifinite),
                None,
                ReducedFlow::Shift { measure: "product extension of b_p with skewed negative marginals".into() },
            ))
        }
        Family::PeriodicOrbit { y } => {
            let y = y.build()?;
            if t == 0 {
                let zero = y.minimal_period(1).period == Some(1) && y.coord(0) == 0;
                return if zero && at_log(&params, d) {
                    Ok(trivial_one_over(&params, d))
                } else {
                    Err(mismatch("for s = d the only periodic state is 0^inf at beta = log d"))
                };
            }
            if t == s {
                return shift_invariant_verdict(&params, &ShiftInvariantKind::AtomicPeriodic { word: y.period_word(4096)? }, exec);
            }
            periodic_verdict(&params, &y)
        }
        Family::AperiodicOrbit { z, window } => {
            if t == 0 || t == s {
                return Err(mismatch("aperiodic orbit states need 1 <= t < s"));
            }
            let z = z.build()?;
            let cert = check_condition_c(&z, &params, *window)?;
            match cert.verdict {
                ConditionC::SatisfiedWithinWindow => {
                    Ok(verdict(&params, Some(TypeLabel::SemifiniteOpen), None, ReducedFlow::TranslationOnZ))
                }
                other => Err(mismatch(format!("condition (C) is {other:?} on the window {window}"))),
            }
        }
        Family::ShiftInvariant { measure } => {
            if t != s {
                return Err(mismatch("shift-invariant measures are quasi-invariant only when s = t"));
            }
            shift_invariant_verdict(&params, measure, exec)
        }
        Family::CoboundaryMeasure { subshift, depth } => {
            if t == 0 {
                return Err(mismatch("coboundary measures need t >= 1"));
            }
            coboundary_verdict(&params, subshift, *depth, exec)
        }
        Family::Gicar => match gicar_solve(&params)? {
            GicarReport::Product { type_lambda, .. } | GicarReport::Tracial { type_lambda, .. } => {
                Ok(verdict(&params, Some(TypeLabel::IIILambda), Some(type_lambda), ReducedFlow::Trivial))
            }
        },
    }
}

fn shift_invariant_verdict(params: &KmsParams, kind: &ShiftInvariantKind, exec: Exec) -> Result<FactorVerdict> {
    match kind {
        ShiftInvariantKind::AtomicPeriodic { word } => {
            let n = BiSeq::periodic(word)?.minimal_period(word.len() as u64).period.expect("periodic") as i64;
            let lambda = pow_i(&rat(2, params.d as i64), n);
            Ok(verdict(params, Some(TypeLabel::IIILambda), Some(Num::Exact(lambda)), ReducedFlow::Cycle { n: n as u64 }))
        }
        ShiftInvariantKind::Coboundary { subshift } => coboundary_verdict(params, subshift, 8, exec),
        ShiftInvariantKind::Other { description } => {
            Ok(verdict(params, None, None, ReducedFlow::Shift { measure: description.clone() }))
        }
    }
}

fn coboundary_verdict(params: &KmsParams, subshift: &SequenceSpec, depth: usize, exec: Exec) -> Result<FactorVerdict> {
    let z = subshift.build()?;
    if z.minimal_period(64).period.is_some() {
        return Err(mismatch("the subshift generator is periodic; use the periodic-orbit family"));
    }
    let name = describe(subshift);
    if params.t < params.s {
        let q = match &params.q {
            Some(Num::Exact(q)) => q.clone(),
            _ => return Err(mismatch("coboundary certification needs an exact q; give beta symbolically")),
        };
        let tf = solve_transfer(&[z], &q, depth, &TransferConfig::default(), exec)
            .map_err(|e| mismatch(format!("no coboundary witness: {e}")))?;
        if tf.residual > 1e-6 {
            return Err(mismatch(format!("transfer residual {} above 1e-6", tf.residual)));
        }
    }
    Ok(verdict(params, Some(TypeLabel::III0), None, ReducedFlow::SubshiftWithMeasure { subshift: name }))
}

fn describe(spec: &SequenceSpec) -> String {
    match spec {
        SequenceSpec::Substitution { rule, .. } => {
            let parts: Vec<String> = rule.iter().map(|(k, v)| format!("{k}->{v}")).collect();
            format!("substitution subshift {}", parts.join(", "))
        }
        SequenceSpec::Toeplitz { k, .. } => format!("Toeplitz subshift k = {k:?}"),
        SequenceSpec::Shifted { base, .. } => describe(base),
        other => format!("orbit closure of {}", serde_json::to_string(other).unwrap_or_default()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionC {
    SatisfiedWithinWindow,
    ViolatedWithinWindow,
    Inconclusive,
}

/// Window evidence for `sum_n lambda^{c_n(z)} < inf`; never a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCReport {
    pub window: i64,
    pub partial_sum: f64,
    /// Max over `m in [W/2, W]` of `(1/m) sum_{k=1}^m z_{-k}`.
    pub left_average_max: f64,
    /// Min over `m in [W/2, W]` of `(1/m) sum_{k=1}^m z_k`.
    pub right_average_min: f64,
    pub q: f64,
    /// Largest term `lambda^{c_n}` with `|n| in [W/2, W]`.
    pub outer_max_term: f64,
    /// Some `|n| in [W/4, W]` has `c_n <= 0`.
    pub returns_to_zero: bool,
    pub verdict: ConditionC,
}

pub fn check_condition_c(z: &BiSeq, params: &KmsParams, window: i64) -> Result<ConditionCReport> {
    if params.t == 0 || params.t >= params.s {
        return Err(Error::Params("condition (C) is stated for 1 <= t < s".into()));
    }
    if window < 1 {
        return Err(Error::Window("window must be >= 1".into()));
    }
    let lambda = params.lambda_f64().expect("t >= 1");
    let q = params.q.as_ref().expect("1 <= t < s").to_f64();
    let prefix = ones_prefix(z, -window - 1, window + 1);
    let off = window + 1;
    let s_at = |k: i64| prefix[(k + off) as usize];
    let c = |k: i64| s_at(k) as f64 - q * k as f64;
    let partial_sum: f64 = (-window..=window).map(|k| lambda.powf(c(k))).sum();
    let lo = (window / 2).max(1);
    // sum_{k=1}^m z_{-k} = -S(-m); sum_{k=1}^m z_k = S(m+1) - z_0
    let z0 = z.coord(0) as i64;
    let left_average_max = (lo..=window).map(|m| -s_at(-m) as f64 / m as f64).fold(f64::NEG_INFINITY, f64::max);
    let right_average_min =
        (lo..=window).map(|m| (s_at(m + 1) - z0) as f64 / m as f64).fold(f64::INFINITY, f64::min);
    let outer_max_term = (lo..=window).flat_map(|m| [lambda.powf(c(m)), lambda.powf(c(-m))]).fold(0.0, f64::max);
    let eps = 1e-12;
    let returns_to_zero = ((window / 4).max(1)..=window).any(|m| c(m) <= eps || c(-m) <= eps);
    let verdict = if returns_to_zero {
        ConditionC::ViolatedWithinWindow
    } else if left_average_max < q && q < right_average_min && outer_max_term < 1.0 {
        ConditionC::SatisfiedWithinWindow
    } else {
        ConditionC::Inconclusive
    };
    Ok(ConditionCReport { window, partial_sum, left_average_max, right_average_min, q, outer_max_term, returns_to_zero, verdict })
}

/// Convenience constructor for a datum from parts.
pub fn datum(d: u32, s: u32, beta: crate::kms::Beta, family: Family) -> KmsDatum {
    KmsDatum { params: ParamsSpec { d, s, beta }, family }
}

/// Parameters of a datum, validated.
pub fn datum_params(datum: &KmsDatum) -> Result<KmsParams> {
    derive(datum.params.d, datum.params.s, datum.params.beta.clone())
}
