//! `kmsflow`: parameter ranges, measure construction and verification, factor
//! classification, tail boundaries and cocycle tools from the command line.
//!
//! Every command prints one JSON envelope (or its TSV flattening) carrying the
//! schema version, arithmetic mode and tolerance. Exit code 0 is success, 1 a
//! residual above tolerance, 2 an input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kmsflow::classify::{classify, KmsDatum};
use kmsflow::cocycle::{bound_scan, check_cocycle_identity, solve_transfer, TransferConfig};
use kmsflow::kms::{admissible_beta, derive, pf1_pf2_check, Beta, KmsParams, ParamsSpec};
use kmsflow::markov::{
    backward_shift_pattern_check, bernoulli_shift, permutation, simulate_p_convergence, AnyMarkov, MatrixInput,
    ShiftPattern,
};
use kmsflow::measure::{
    bernoulli_for, extend_to_two_sided, m_p_y, nu_aperiodic_truncated, nu_periodic, quasi_invariance_residual,
    substitution_invariant_table, toeplitz_defect, toeplitz_nu, MeasureRep, Space,
};
use kmsflow::num::{parse_rational, rat};
use kmsflow::par::{self, Exec};
use kmsflow::symbolic::{toeplitz_identities, BiSeq, SequenceSpec, Substitution, Word};
use kmsflow::{Num, Rational, DEFAULT_TOLERANCE, SCHEMA_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "kmsflow", version, about = "KMS states of binary Cuntz-Pimsner families at desk scale")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Evaluate independent pieces (grid points, cylinders, input files) concurrently.
    #[arg(long, global = true)]
    par: bool,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Residual tolerance; defaults to the value recorded in the input, else 1e-12.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// `float` replaces beta by its binary64 value before anything is derived.
    #[arg(long, global = true, value_enum, default_value = "exact")]
    arithmetic: Mode,
    /// Seed for randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Exact,
    Float,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long)]
    d: u32,
    #[arg(long)]
    s: u32,
    /// A float, `log(a/b)` or `affine(x)` (meaning `x log s + (1-x) log t`).
    #[arg(long, allow_hyphen_values = true)]
    beta: String,
}

impl ParamArgs {
    fn spec(&self, mode: Mode) -> Result<ParamsSpec> {
        Ok(ParamsSpec { d: self.d, s: self.s, beta: beta_arg(&self.beta, self.d, self.s, mode)? })
    }
}

fn beta_arg(text: &str, d: u32, s: u32, mode: Mode) -> Result<Beta> {
    let beta = Beta::parse(text)?;
    Ok(match mode {
        Mode::Exact => beta,
        Mode::Float => Beta::Float(derive(d, s, beta)?.beta_f64),
    })
}

#[derive(Subcommand)]
enum Cmd {
    /// Admissible inverse temperatures for `(d, s)`.
    Range {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        s: u32,
    },
    /// PF1/PF4 residuals (one-sided) or the quasi-invariance residual (two-sided).
    Verify {
        /// Output of `construct`, or a bare measure JSON together with parameters.
        #[arg(long, required = true)]
        measure: Vec<PathBuf>,
        /// Parameter JSON `{"d":..,"s":..,"beta":..}` for bare measures.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
    /// Build one of the measures of the theory.
    Construct {
        #[command(subcommand)]
        kind: Construct,
    },
    /// Factor type and reduced flow of weights for a KMS datum file.
    Classify {
        #[arg(long)]
        datum: PathBuf,
    },
    /// Tail and Poisson boundary of a finite Markov operator.
    Tail(TailArgs),
    /// Additive cocycle tools.
    Cocycle {
        #[command(subcommand)]
        op: CocycleOp,
    },
    /// Toeplitz word identities and the truncation defect certificate.
    Toeplitz {
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u64>,
        #[arg(long)]
        n: usize,
        /// `lambda` used for the float defect value.
        #[arg(long, default_value = "2/3")]
        lambda: String,
    },
}

#[derive(Subcommand)]
enum Construct {
    /// `nu_y` for the periodic point `word^Z`, at its forced temperature.
    Periodic {
        #[arg(long)]
        word: Word,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        s: u32,
    },
    /// `b_p` with `p = (e^beta - t)/(s - t)`.
    Bernoulli(ParamArgs),
    /// `m_{p,y}` with `p = e^beta / d` for `s = d`; `y = word^Z` must start with 1.
    Mpy {
        #[arg(long)]
        d: u32,
        #[arg(long, allow_hyphen_values = true)]
        beta: String,
        #[arg(long, default_value = "1")]
        y: Word,
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// Toeplitz truncation `nu_n` (default parameters `d = 5, s = 3, beta = affine(1/2)`, so `q = 1/2`).
    Toeplitz {
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: u32,
        #[arg(long, default_value_t = 3)]
        s: u32,
        #[arg(long, default_value = "affine(1/2)", allow_hyphen_values = true)]
        beta: String,
    },
    /// Truncated orbit measure `nu_{beta,z,n}`.
    Orbit {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        n: u64,
    },
    /// Two-sided extension of `b_p` on `[-left, right)`.
    Extend {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        left: usize,
        #[arg(long)]
        right: usize,
    },
    /// Invariant measure of a substitution subshift on `[start, start + depth)`.
    Invariant {
        /// Images of 0 and 1, e.g. `01,10`.
        #[arg(long, default_value = "01,10")]
        rule: String,
        #[arg(long, default_value_t = -4, allow_hyphen_values = true)]
        start: i64,
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
}

#[derive(Args)]
struct TailArgs {
    /// JSON `{"rows": [[..], ..]}` or whitespace-separated rows; `-` reads stdin.
    #[arg(long, conflicts_with_all = ["bernoulli", "cycle", "backward_shift"])]
    matrix: Option<PathBuf>,
    /// Uniform Bernoulli shift on words: `d,k`.
    #[arg(long, value_delimiter = ',')]
    bernoulli: Option<Vec<usize>>,
    /// Cyclic permutation `x -> x + 1 mod n` with `P(f) = f o T`.
    #[arg(long)]
    cycle: Option<usize>,
    /// Shift-pattern check for the backward shift on `{0..W}`.
    #[arg(long)]
    backward_shift: Option<usize>,
    /// With `--g`: iterate `P^n(fg)` and report convergence.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    f: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    g: Option<Vec<f64>>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

#[derive(Subcommand)]
enum CocycleOp {
    /// Exact min and max of `c_k` over `|k| <= window`.
    Bound {
        #[arg(long)]
        seq: String,
        #[arg(long, default_value = "1/2")]
        q: String,
        #[arg(long, default_value_t = 1024)]
        window: i64,
    },
    /// Least-squares transfer function `h` with `c_n = h o shift^n - h`.
    Transfer {
        #[arg(long)]
        seq: String,
        #[arg(long, default_value = "1/2")]
        q: String,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 512)]
        train_window: i64,
        #[arg(long, default_value_t = 16.0)]
        bound: f64,
    },
    /// Cocycle identity over random pairs drawn from `--seed`.
    Identity {
        #[arg(long)]
        seq: String,
        #[arg(long, default_value = "1/2")]
        q: String,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 256)]
        range: i64,
    },
}

/// A command's payload plus the numbers that decide the exit code.
struct Outcome {
    result: Value,
    arithmetic: &'static str,
    tolerance: Option<f64>,
    /// Some residual exceeded its tolerance.
    above: bool,
}

impl Outcome {
    fn plain(result: Value, arithmetic: &'static str) -> Self {
        Outcome { result, arithmetic, tolerance: None, above: false }
    }

    fn checked(result: Value, arithmetic: &'static str, tolerance: f64, residual: f64) -> Self {
        Outcome { result, arithmetic, tolerance: Some(tolerance), above: residual > tolerance }
    }
}

fn mode_of(p: &KmsParams) -> &'static str {
    match p.exp_beta {
        Num::Exact(_) => "exact",
        Num::Float(_) => "float",
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

/// `thue-morse`, `periodic:01`, `toeplitz:3,3,3`, `step` (0 left of the origin, 1 from it),
/// inline JSON, or a path to a sequence JSON file.
fn parse_seq(s: &str) -> Result<BiSeq> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str::<SequenceSpec>(s)?.build()?);
    }
    if s == "thue-morse" {
        return Ok(BiSeq::thue_morse());
    }
    if s == "step" {
        return Ok(BiSeq::eventually_periodic("0".parse()?, Word::empty(), "1".parse()?, 0)?);
    }
    if let Some(w) = s.strip_prefix("periodic:") {
        return Ok(BiSeq::periodic(&w.parse()?)?);
    }
    if let Some(k) = s.strip_prefix("toeplitz:") {
        let k: Vec<u64> = k.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>()?;
        let depth = k.len();
        return Ok(BiSeq::toeplitz(k, depth)?);
    }
    let text = read_input(Path::new(s))?;
    Ok(serde_json::from_str::<SequenceSpec>(&text)?.build()?)
}

fn rational_arg(s: &str) -> Result<Rational> {
    Ok(parse_rational(s)?)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let exec = if cli.par { Exec::Parallel } else { Exec::Sequential };
    match &cli.cmd {
        Cmd::Range { d, s } => {
            let r = admissible_beta(*d, *s)?;
            Ok(Outcome::plain(json!({ "d": d, "s": s, "t": d - s, "range": r }), "float"))
        }
        Cmd::Verify { measure, params, depth } => verify(cli, measure, params.as_deref(), *depth, exec),
        Cmd::Construct { kind } => construct(kind, cli.arithmetic, cli.tolerance, exec),
        Cmd::Classify { datum } => {
            let datum: KmsDatum = serde_json::from_str(&read_input(datum)?)?;
            let p = datum.params.build()?;
            let verdict = classify(&datum, exec)?;
            Ok(Outcome::plain(json!({ "datum": datum, "verdict": verdict }), mode_of(&p)))
        }
        Cmd::Tail(args) => tail(args, cli.seed),
        Cmd::Cocycle { op } => cocycle(op, cli.seed, cli.tolerance, exec),
        Cmd::Toeplitz { k, n, lambda } => {
            let ids = (1..=*n).map(|m| toeplitz_identities(k, m)).collect::<kmsflow::Result<Vec<_>>>()?;
            let lf = kmsflow::num::to_f64(&rational_arg(lambda)?);
            let defects = (1..=*n).map(|m| toeplitz_defect(k, m, lf)).collect::<kmsflow::Result<Vec<_>>>()?;
            let ok = ids.iter().all(|i| i.sum_a_holds && i.sum_b_holds && i.l_is_product_of_k)
                && defects.iter().all(|d| d.bound_certified && d.twice_c_2l == 0);
            Ok(Outcome::plain(json!({ "k": k, "identities": ids, "defects": defects, "all_hold": ok }), "exact"))
        }
    }
}

fn verify(cli: &Cli, files: &[PathBuf], params: Option<&Path>, depth: usize, exec: Exec) -> Result<Outcome> {
    let external = params.map(|p| -> Result<ParamsSpec> { Ok(serde_json::from_str(&read_input(p)?)?) }).transpose()?;
    let inputs = files.iter().map(|f| Ok((f.clone(), serde_json::from_str::<Value>(&read_input(f)?)?))).collect::<Result<Vec<_>>>()?;
    // files are independent grid points; inner evaluation stays sequential when they run concurrently
    let inner = if inputs.len() > 1 { Exec::Sequential } else { exec };
    let reports = par::map(exec, &inputs, |(path, doc)| verify_one(doc, external.as_ref(), depth, cli.tolerance, inner).map_err(|e| (path.clone(), e)));
    let mut out = Vec::new();
    let mut above = false;
    let mut tolerance = f64::INFINITY;
    let mut arithmetic = "exact";
    for r in reports {
        let (report, residual, tol, mode) = r.map_err(|(p, e)| e.context(format!("verifying {}", p.display())))?;
        above |= residual > tol;
        tolerance = tolerance.min(tol);
        if mode == "float" {
            arithmetic = "float";
        }
        out.push(report);
    }
    let result = if out.len() == 1 { out.pop().expect("one") } else { Value::Array(out) };
    Ok(Outcome { result, arithmetic, tolerance: Some(tolerance), above })
}

fn verify_one(doc: &Value, external: Option<&ParamsSpec>, depth: usize, tol_override: Option<f64>, exec: Exec) -> Result<(Value, f64, f64, &'static str)> {
    let body = doc.get("result").unwrap_or(doc);
    let (measure_json, recorded_params, recorded_tol) = match body.get("measure") {
        Some(m) => (m.clone(), body.get("params").cloned(), body.get("tolerance").and_then(Value::as_f64)),
        None => (body.clone(), None, None),
    };
    let measure: MeasureRep = serde_json::from_value(measure_json).context("measure JSON")?;
    let spec = match (external, recorded_params) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => serde_json::from_value(p)?,
        (None, None) => bail!("no parameters: pass --params or verify a construct output"),
    };
    let params = spec.build()?;
    let tolerance = tol_override.or(recorded_tol).unwrap_or(DEFAULT_TOLERANCE);
    match measure.space() {
        Space::OneSided => {
            let rep = pf1_pf2_check(&params, &measure, depth, exec)?;
            let residual = rep.pf1_residual.to_f64().abs().max(rep.pf2_residual);
            let report = json!({
                "space": "one-sided", "params": spec, "depth": depth, "pf1_residual": rep.pf1_residual,
                "pf4_residual": rep.pf2_residual, "truncated_mass": measure.truncated_mass(),
                "tolerance": tolerance, "pass": residual <= tolerance,
            });
            Ok((report, residual, tolerance, mode_of(&params)))
        }
        Space::TwoSided => {
            let lambda = params.lambda.clone().ok_or_else(|| anyhow!("quasi-invariance needs t >= 1"))?;
            // for s = t, lambda = 1 and q plays no role
            let q = params.q.clone().unwrap_or(Num::Exact(rat(1, 2)));
            let rep = quasi_invariance_residual(&measure, &lambda, &q, depth, exec)?;
            let report = json!({
                "space": "two-sided", "params": spec, "depth": depth, "lambda": Num::Exact(lambda), "q": q,
                "qi_residual": rep.residual + 0.0, "exact_zero": rep.exact_zero, "cylinders": rep.cylinders,
                "tolerance": tolerance, "pass": rep.residual <= tolerance,
            });
            let mode = if rep.exact_zero.is_some() { "exact" } else { "float" };
            Ok((report, rep.residual, tolerance, mode))
        }
    }
}

fn construct(kind: &Construct, mode: Mode, tol_override: Option<f64>, exec: Exec) -> Result<Outcome> {
    let base = tol_override.unwrap_or(DEFAULT_TOLERANCE);
    let (measure, params, tolerance, extra): (MeasureRep, KmsParams, f64, Value) = match kind {
        Construct::Periodic { word, d, s } => {
            let pm = nu_periodic(&BiSeq::periodic(word)?, *d, *s, word.len() as u64)?;
            let extra = json!({ "forced_beta": pm.forced_beta, "forced_beta_value": pm.params.beta_f64, "period": pm.period });
            (pm.measure, pm.params, base, extra)
        }
        Construct::Bernoulli(a) => {
            let p = a.spec(mode)?.build()?;
            (bernoulli_for(&p)?, p, base, json!({}))
        }
        Construct::Mpy { d, beta, y, truncation } => {
            let p = derive(*d, *d, beta_arg(beta, *d, *d, mode)?)?;
            let pr = match &p.exp_beta {
                Num::Exact(e) => Num::Exact(e / Rational::from_integer((*d).into())),
                Num::Float(e) => Num::Float(e / *d as f64),
            };
            let m = m_p_y(&pr, &BiSeq::periodic(y)?, *truncation)?;
            let pf = pr.to_f64();
            // the truncated series misses the fixed-point equation by p^N max(1, (1-p)/p)
            let tol = base + m.truncated_mass() * f64::max(1.0, (1.0 - pf) / pf);
            let extra = json!({ "p": pr, "truncated_mass": m.truncated_mass() });
            (m, p, tol, extra)
        }
        Construct::Toeplitz { k, n, d, s, beta } => {
            let p = derive(*d, *s, beta_arg(beta, *d, *s, mode)?)?;
            let t = toeplitz_nu(k, *n, &p)?;
            // nu_n is only approximately quasi-invariant: its defect bounds every cylinder residual
            let extra = json!({ "tv_defect": t.tv_defect, "tv_defect_direct": t.tv_defect_direct, "atoms_from": t.first_index });
            (t.measure, p, base + t.tv_defect, extra)
        }
        Construct::Orbit { params, seq, n } => {
            let p = params.spec(mode)?.build()?;
            let t = nu_aperiodic_truncated(&parse_seq(seq)?, &p, *n)?;
            let extra = json!({ "tv_defect": t.tv_defect, "tv_defect_direct": t.tv_defect_direct, "atoms_from": t.first_index });
            (t.measure, p, base + t.tv_defect, extra)
        }
        Construct::Extend { params, left, right } => {
            let p = params.spec(mode)?.build()?;
            let mu = bernoulli_for(&p)?;
            let t = extend_to_two_sided(&mu, &p, *left, *right, base, exec)?;
            (MeasureRep::CylinderTable(t), p, base * 10.0, json!({ "left": left, "right": right }))
        }
        Construct::Invariant { rule, start, depth } => {
            let (a, b) = rule.split_once(',').ok_or_else(|| anyhow!("rule must be `image0,image1`"))?;
            let sub = Substitution::new(a.trim().parse()?, b.trim().parse()?)?;
            let t = substitution_invariant_table(&sub, *start, *depth)?;
            // lambda = 1 needs s = t; d = 4, s = 2 is the smallest such family with nonzero beta
            let p = derive(4, 2, Beta::LogOf(Rational::from_integer(2.into())))?;
            (MeasureRep::CylinderTable(t), p, 1e-10, json!({ "rule": rule }))
        }
    };
    let mode = match &measure {
        MeasureRep::Atomic { atoms, .. } if atoms.iter().all(|a| matches!(a.weight, kmsflow::measure::AtomWeight::Exact(_))) => "exact",
        _ => "float",
    };
    let result = json!({
        "measure": measure, "params": params.spec(), "derived": params, "tolerance": tolerance, "details": extra,
    });
    Ok(Outcome { result, arithmetic: mode, tolerance: Some(tolerance), above: false })
}

fn tail(args: &TailArgs, seed: u64) -> Result<Outcome> {
    if let Some(w) = args.backward_shift {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let patterns = vec![ShiftPattern::Finite(vec![1.0]), ShiftPattern::Constant(1.0), ShiftPattern::Finite(random)];
        let steps = w.saturating_sub(3).min(10);
        let rep = backward_shift_pattern_check(w, &patterns, steps)?;
        return Ok(Outcome::plain(json!({ "patterns": patterns, "report": rep }), "float"));
    }
    let op = if let Some(path) = &args.matrix {
        MatrixInput::parse_text(&read_input(path)?)?.build()?
    } else if let Some(b) = &args.bernoulli {
        let [d, k] = b[..] else { bail!("--bernoulli takes `d,k`") };
        AnyMarkov::Exact(bernoulli_shift(d, k)?)
    } else if let Some(n) = args.cycle {
        AnyMarkov::Exact(permutation(&(0..n).map(|x| (x + 1) % n).collect::<Vec<_>>())?)
    } else {
        bail!("give one of --matrix, --bernoulli, --cycle or --backward-shift");
    };
    let mode = match op {
        AnyMarkov::Exact(_) => "exact",
        AnyMarkov::Float(_) => "float",
    };
    let report = op.tail_decomposition()?;
    let fixed = op.harmonic_fixed_space()?;
    let mut result = json!({ "boundary": report, "harmonic_fixed_space": fixed });
    if let (Some(f), Some(g)) = (&args.f, &args.g) {
        let conv = match &op {
            AnyMarkov::Exact(p) => simulate_p_convergence(p, f, g, args.steps)?,
            AnyMarkov::Float(p) => simulate_p_convergence(p, f, g, args.steps)?,
        };
        result["convergence"] = serde_json::to_value(conv)?;
    }
    Ok(Outcome::plain(result, mode))
}

fn cocycle(op: &CocycleOp, seed: u64, tol_override: Option<f64>, exec: Exec) -> Result<Outcome> {
    match op {
        CocycleOp::Bound { seq, q, window } => {
            let (lo, hi) = bound_scan(&parse_seq(seq)?, &rational_arg(q)?, *window)?;
            Ok(Outcome::plain(json!({ "q": q, "window": window, "min": Num::Exact(lo), "max": Num::Exact(hi) }), "exact"))
        }
        CocycleOp::Transfer { seq, q, depth, train_window, bound } => {
            let cfg = TransferConfig { train_window: *train_window, bound: *bound, ..TransferConfig::default() };
            let tf = solve_transfer(&[parse_seq(seq)?], &rational_arg(q)?, *depth, &cfg, exec)?;
            let tolerance = tol_override.unwrap_or(1e-6);
            let residual = tf.residual;
            Ok(Outcome::checked(json!({ "q": q, "transfer": tf }), "float", tolerance, residual))
        }
        CocycleOp::Identity { seq, q, pairs, range } => {
            let z = parse_seq(seq)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ps: Vec<(i64, i64)> = (0..*pairs).map(|_| (rng.random_range(-range..=*range), rng.random_range(-range..=*range))).collect();
            let rep = check_cocycle_identity(&z, &ps, &Num::Exact(rational_arg(q)?), exec);
            let result = json!({ "q": q, "seed": seed, "pairs": pairs, "failures": rep.failures, "max_residual": rep.max_residual });
            Ok(Outcome::checked(result, "exact", 0.0, rep.failures as f64))
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<kmsflow::Error>() {
        Some(kmsflow::Error::Residual { .. } | kmsflow::Error::Unbounded { .. }) => 1,
        _ => 2,
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Range { .. } => "range",
        Cmd::Verify { .. } => "verify",
        Cmd::Construct { .. } => "construct",
        Cmd::Classify { .. } => "classify",
        Cmd::Tail(_) => "tail",
        Cmd::Cocycle { .. } => "cocycle",
        Cmd::Toeplitz { .. } => "toeplitz",
    }
}

fn render(envelope: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(envelope).expect("serializable") + "\n",
        Format::Tsv => {
            let mut rows = Vec::new();
            flatten("", envelope, &mut rows);
            rows.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = command_name(&cli.cmd);
    let (envelope, code) = match run(&cli) {
        Ok(out) => {
            let envelope = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command,
                "arithmetic": out.arithmetic,
                "tolerance": out.tolerance.unwrap_or(DEFAULT_TOLERANCE),
                "result": out.result,
            });
            (envelope, u8::from(out.above))
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            (json!({ "schema_version": SCHEMA_VERSION, "command": command, "error": format!("{e:#}") }), exit_code(&e))
        }
    };
    // a closed pipe downstream is not our failure
    let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), render(&envelope, cli.format).as_bytes());
    ExitCode::from(code)
}
