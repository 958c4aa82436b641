//! Probability measures on `X = {0,1}^{N_0}` and `X~ = {0,1}^Z`.
//!
//! Shift convention: for a measure `nu`, `(nu o sigma)(A) = nu(sigma(A))`, and
//! the shift moves a cylinder left, `sigma(C_{k,w}) = C_{k-1,w}`. A measure is
//! quasi-invariant with cocycle exponent `x_0 - q` when
//! `nu(sigma(A)) = integral over A of lambda^{x_0 - q} d nu` for every cylinder `A`.
//! The opposite pushforward convention flips the sign of the exponent.
//!
//! Truncated infinite series keep their discarded mass in
//! `truncated_mass`; nothing is renormalized behind the caller's back.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cocycle::{ones_prefix, TransferFunction};
use crate::error::{Error, Result};
use crate::kms::{derive, Beta, KmsParams};
use crate::num::{int, rat, to_f64, ExactWeight, LambdaSum, Num, Rational};
use crate::par::{self, Exec};
use crate::symbolic::{toeplitz_words, BiSeq, CylinderSet, SequenceSpec, Substitution, Word};

/// Which shift space a measure lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomWeight {
    Exact(ExactWeight),
    Float(f64),
}

impl AtomWeight {
    pub fn to_f64(&self) -> f64 {
        match self {
            AtomWeight::Exact(w) => w.to_f64(),
            AtomWeight::Float(x) => *x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub point: BiSeq,
    pub weight: AtomWeight,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    point: SequenceSpec,
    #[serde(default)]
    shift: i64,
    weight: AtomWeight,
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AtomJson { point: self.point.base().to_spec(), shift: self.point.offset(), weight: self.weight.clone() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = AtomJson::deserialize(d)?;
        let point = a.point.build().map_err(serde::de::Error::custom)?.shift(a.shift);
        Ok(Atom { point, weight: a.weight })
    }
}

/// Masses of every binary word on the window `[start, start + depth)`,
/// indexed by [`Word::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderTable {
    pub space: Space,
    pub start: i64,
    pub depth: usize,
    masses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    space: Space,
    start: i64,
    depth: usize,
    /// Nonzero masses keyed by word.
    masses: BTreeMap<Word, f64>,
}

impl Serialize for CylinderTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let masses = self
            .masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(i, &m)| (Word::from_index(i, self.depth), m))
            .collect();
        TableJson { space: self.space, start: self.start, depth: self.depth, masses }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CylinderTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = TableJson::deserialize(d)?;
        if t.depth > 24 {
            return Err(serde::de::Error::custom("cylinder table depth above 24 is not supported"));
        }
        let mut masses = vec![0.0; 1 << t.depth];
        for (w, m) in t.masses {
            if w.len() != t.depth {
                return Err(serde::de::Error::custom(format!("word {w} does not have length {}", t.depth)));
            }
            masses[w.index()] = m;
        }
        CylinderTable::new(t.space, t.start, t.depth, masses).map_err(serde::de::Error::custom)
    }
}

impl CylinderTable {
    pub fn new(space: Space, start: i64, depth: usize, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != 1usize << depth {
            return Err(Error::Invalid(format!("table of depth {depth} needs {} masses", 1usize << depth)));
        }
        if masses.iter().any(|&m| m.is_nan() || m < 0.0) {
            return Err(Error::Invalid("cylinder masses must be nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("cylinder masses sum to {total}, not 1")));
        }
        if space == Space::OneSided && start < 0 {
            return Err(Error::Invalid("one-sided table cannot start at a negative coordinate".into()));
        }
        Ok(CylinderTable { space, start, depth, masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn end(&self) -> i64 {
        self.start + self.depth as i64
    }

    /// Masses of all words on `[start, start + len)`, which must lie inside the table window.
    pub fn marginal(&self, start: i64, len: usize) -> Result<Vec<f64>> {
        if start < self.start || start + len as i64 > self.end() {
            return Err(Error::Window(format!(
                "cylinders on [{start}, {}) lie outside the table window [{}, {})",
                start + len as i64,
                self.start,
                self.end()
            )));
        }
        let lead = (start - self.start) as usize;
        let trail = self.depth - lead - len;
        let mask = (1usize << len) - 1;
        let mut out = vec![0.0; 1 << len];
        for (i, &m) in self.masses.iter().enumerate() {
            out[(i >> trail) & mask] += m;
        }
        Ok(out)
    }

    pub fn restrict(&self, start: i64, len: usize) -> Result<CylinderTable> {
        Ok(CylinderTable { space: self.space, start, depth: len, masses: self.marginal(start, len)? })
    }

    /// Largest difference between this table and another on the same window.
    pub fn max_diff(&self, other: &CylinderTable) -> Result<f64> {
        if self.start != other.start || self.depth != other.depth {
            return Err(Error::Window("tables cover different windows".into()));
        }
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).fold(0.0, par::fmax))
    }
}

/// A probability measure representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureRep {
    /// Point masses. With `normalize`, the mass of a set is its weight over the
    /// total weight; otherwise weights are masses as given.
    Atomic {
        space: Space,
        normalize: bool,
        #[serde(default)]
        truncated_mass: f64,
        atoms: Vec<Atom>,
    },
    /// Product measure on `X` with marginal `(p, 1-p)` on `(0, 1)`.
    Bernoulli { p: Num },
    CylinderTable(CylinderTable),
}

/// A cylinder function `sum_w values[w] 1_{C_{start,w}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunction {
    pub start: i64,
    pub values: BTreeMap<Word, f64>,
}

fn word_bits(z: &BiSeq, start: i64, len: usize) -> usize {
    (0..len as i64).fold(0usize, |acc, j| (acc << 1) | z.coord(start + j) as usize)
}

impl MeasureRep {
    pub fn space(&self) -> Space {
        match self {
            MeasureRep::Atomic { space, .. } => *space,
            MeasureRep::Bernoulli { .. } => Space::OneSided,
            MeasureRep::CylinderTable(t) => t.space,
        }
    }

    pub fn truncated_mass(&self) -> f64 {
        match self {
            MeasureRep::Atomic { truncated_mass, .. } => *truncated_mass,
            _ => 0.0,
        }
    }

    /// `delta_z` on the given space.
    pub fn dirac(point: BiSeq, space: Space) -> MeasureRep {
        MeasureRep::Atomic { space, normalize: false, truncated_mass: 0.0, atoms: vec![Atom { point, weight: AtomWeight::Float(1.0) }] }
    }

    fn atom_scale(&self) -> f64 {
        match self {
            MeasureRep::Atomic { normalize: true, atoms, .. } => 1.0 / atoms.iter().map(|a| a.weight.to_f64()).sum::<f64>(),
            _ => 1.0,
        }
    }

    /// Masses of all `2^len` words on `[start, start + len)`.
    pub fn masses(&self, start: i64, len: usize) -> Result<Vec<f64>> {
        if len > 24 {
            return Err(Error::Window(format!("cylinder length {len} above 24")));
        }
        if self.space() == Space::OneSided && start < 0 {
            return Err(Error::Window("one-sided measure has no negative coordinates".into()));
        }
        match self {
            MeasureRep::Atomic { atoms, .. } => {
                let scale = self.atom_scale();
                let mut out = vec![0.0; 1 << len];
                for a in atoms {
                    out[word_bits(&a.point, start, len)] += a.weight.to_f64() * scale;
                }
                Ok(out)
            }
            MeasureRep::Bernoulli { p } => {
                let p = p.to_f64();
                let mut out = vec![1.0];
                for _ in 0..len {
                    out = out.iter().flat_map(|&m| [m * p, m * (1.0 - p)]).collect();
                }
                Ok(out)
            }
            MeasureRep::CylinderTable(t) => t.marginal(start, len),
        }
    }

    pub fn mass(&self, cyl: &CylinderSet) -> Result<f64> {
        let w = &cyl.word;
        match self {
            MeasureRep::Atomic { atoms, .. } => {
                if self.space() == Space::OneSided && cyl.start < 0 {
                    return Err(Error::Window("one-sided measure has no negative coordinates".into()));
                }
                let scale = self.atom_scale();
                Ok(atoms.iter().filter(|a| cyl.contains(&a.point)).map(|a| a.weight.to_f64()).sum::<f64>() * scale)
            }
            _ => Ok(self.masses(cyl.start, w.len())?[w.index()]),
        }
    }

    /// `sum_w f(w) mu(C_{start,w})`.
    pub fn integrate(&self, f: &CylinderFunction) -> Result<f64> {
        f.values.iter().map(|(w, v)| Ok(v * self.mass(&CylinderSet::new(f.start, w.clone()))?)).sum()
    }

    /// Total mass (1 for normalized measures, `1 - truncated_mass` for truncated series).
    pub fn total_mass(&self) -> f64 {
        match self {
            MeasureRep::Atomic { normalize: true, .. } => 1.0,
            MeasureRep::Atomic { atoms, .. } => atoms.iter().map(|a| a.weight.to_f64()).sum(),
            _ => 1.0,
        }
    }

    fn exact_atoms(&self, lambda: &Rational) -> Option<Vec<(&BiSeq, &ExactWeight)>> {
        match self {
            MeasureRep::Atomic { atoms, .. } => atoms
                .iter()
                .map(|a| match &a.weight {
                    AtomWeight::Exact(w) if w.base == *lambda => Some((&a.point, w)),
                    _ => None,
                })
                .collect(),
            _ => None,
        }
    }
}

/// `b_p`.
pub fn bernoulli_b_p(p: Num) -> Result<MeasureRep> {
    let ok = match &p {
        Num::Exact(r) => !r.is_negative() && *r <= Rational::one(),
        Num::Float(x) => (0.0..=1.0).contains(x),
    };
    if !ok {
        return Err(Error::Invalid(format!("Bernoulli parameter {p} outside [0, 1]")));
    }
    Ok(MeasureRep::Bernoulli { p })
}

/// `b_p` at `p = (e^beta - t)/(s - t)`.
pub fn bernoulli_for(params: &KmsParams) -> Result<MeasureRep> {
    let p = params.p.clone().ok_or_else(|| Error::Params("p is undefined when s = t".into()))?;
    bernoulli_b_p(p)
}

/// Truncation length `N` with `p^N < 1e-16`, capped at `cap`.
pub fn default_truncation(p: f64, cap: usize) -> usize {
    if p <= 0.0 {
        return 1;
    }
    ((-16.0 * 10f64.ln() / p.ln()).ceil() as usize).clamp(1, cap)
}

/// `m_{p,y} = (1-p) sum_{n<N} p^n delta_{0^n y}` with discarded mass `p^N`.
pub fn m_p_y(p: &Num, y: &BiSeq, truncation: Option<usize>) -> Result<MeasureRep> {
    let pf = p.to_f64();
    if !(pf > 0.0 && pf < 1.0) {
        return Err(Error::Invalid(format!("m_(p,y) needs 0 < p < 1, got {p}")));
    }
    if y.coord(0) != 1 {
        return Err(Error::Invalid("m_(p,y) needs y in C_1 (y_0 = 1)".into()));
    }
    let n = truncation.unwrap_or_else(|| default_truncation(pf, 4_000_000));
    let atoms = (0..n)
        .map(|k| {
            let weight = match p {
                Num::Exact(r) => AtomWeight::Exact(ExactWeight::new(Rational::one() - r, r.clone(), int(k as i64))),
                Num::Float(x) => AtomWeight::Float((1.0 - x) * x.powi(k as i32)),
            };
            Atom { point: BiSeq::prefixed(Word::repeat(0, k), y.clone()), weight }
        })
        .collect();
    Ok(MeasureRep::Atomic { space: Space::OneSided, normalize: false, truncated_mass: pf.powf(n as f64), atoms })
}

/// `max_{|w| <= depth} |e^{-beta}(s mu(C_{0w}) + t mu(C_{1w})) - mu(C_w)|` over cylinders at 0.
pub fn pf4_residual(mu: &MeasureRep, params: &KmsParams, depth: usize, exec: Exec) -> Result<f64> {
    if mu.space() != Space::OneSided {
        return Err(Error::Invalid("the fixed-point equation lives on the one-sided space".into()));
    }
    let e = 1.0 / params.exp_beta_f64();
    let (s, t) = (params.s as f64, params.t as f64);
    let mut finer = mu.masses(0, depth + 1)?;
    let mut worst = 0.0f64;
    for len in (0..=depth).rev() {
        let coarse: Vec<f64> = (0..1usize << len).map(|i| finer[2 * i] + finer[2 * i + 1]).collect();
        let half = 1usize << len;
        let res = par::map_range(exec, 0..half, |i| (e * (s * finer[i] + t * finer[half + i]) - coarse[i]).abs());
        worst = res.into_iter().fold(worst, par::fmax);
        finer = coarse;
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QiReport {
    pub residual: f64,
    /// `Some(true)` when every cylinder balance vanished as a formal sum.
    pub exact_zero: Option<bool>,
    pub cylinders: usize,
    pub depth: usize,
}

/// Max over cylinders `A = C_{k,w}` containing coordinate 0 with `|w| <= depth`
/// of `|nu(sigma A) - integral_A lambda^{x_0 - q} d nu|`.
///
/// Atomic measures with exact weights over base `lambda` and exact `q` are
/// checked as formal sums.
pub fn quasi_invariance_residual(nu: &MeasureRep, lambda: &Rational, q: &Num, depth: usize, exec: Exec) -> Result<QiReport> {
    if nu.space() != Space::TwoSided {
        return Err(Error::Invalid("quasi-invariance is defined on the two-sided space".into()));
    }
    if depth == 0 {
        return Err(Error::Window("quasi-invariance depth must be >= 1".into()));
    }
    let lf = to_f64(lambda);
    let qf = q.to_f64();
    let factor = [lf.powf(-qf), lf.powf(1.0 - qf)];
    let shapes: Vec<(i64, usize)> = (1..=depth).flat_map(|len| (-(len as i64) + 1..=0).map(move |k| (k, len))).collect();
    match nu {
        MeasureRep::CylinderTable(t) => {
            let usable: Vec<(i64, usize)> =
                shapes.into_iter().filter(|&(k, len)| k > t.start && k + len as i64 <= t.end()).collect();
            if usable.is_empty() {
                return Err(Error::Window(format!("table window [{}, {}) too small for depth {depth}", t.start, t.end())));
            }
            let per = par::map(exec, &usable, |&(k, len)| {
                let a = t.marginal(k, len).expect("checked window");
                let sa = t.marginal(k - 1, len).expect("checked window");
                let bit = len - 1 - (-k) as usize;
                (0..a.len()).map(|i| (sa[i] - factor[(i >> bit) & 1] * a[i]).abs()).fold(0.0, par::fmax)
            });
            let cylinders = usable.iter().map(|&(_, len)| 1usize << len).sum();
            Ok(QiReport { residual: per.into_iter().fold(0.0, par::fmax), exact_zero: None, cylinders, depth })
        }
        MeasureRep::Atomic { atoms, .. } => {
            let exact = match q {
                Num::Exact(qe) => nu.exact_atoms(lambda).map(|ex| (qe, ex)),
                Num::Float(_) => None,
            };
            let scale = nu.atom_scale();
            let per = par::map(exec, &shapes, |&(k, len)| {
                let bit = len - 1 - (-k) as usize;
                if let Some((qe, ex)) = &exact {
                    let mut bal: HashMap<usize, LambdaSum> = HashMap::new();
                    for (pt, w) in ex {
                        let here = word_bits(pt, k, len);
                        let x0 = int(((here >> bit) & 1) as i64);
                        let e = bal.entry(here).or_insert_with(|| LambdaSum::zero(lambda.clone()));
                        e.sub(&LambdaSum::from_weight(w).scale(&Rational::one(), &(x0 - *qe)));
                        let shifted = word_bits(pt, k - 1, len);
                        bal.entry(shifted).or_insert_with(|| LambdaSum::zero(lambda.clone())).add_weight(w).expect("same base");
                    }
                    let zero = bal.values().all(LambdaSum::is_zero);
                    let r = bal.values().map(|b| b.abs_f64() * scale).fold(0.0, par::fmax);
                    (r, Some(zero), bal.len())
                } else {
                    let mut bal: HashMap<usize, f64> = HashMap::new();
                    for a in atoms {
                        let w = a.weight.to_f64() * scale;
                        let here = word_bits(&a.point, k, len);
                        *bal.entry(here).or_insert(0.0) -= factor[(here >> bit) & 1] * w;
                        *bal.entry(word_bits(&a.point, k - 1, len)).or_insert(0.0) += w;
                    }
                    let r = bal.values().map(|b| b.abs()).fold(0.0, par::fmax);
                    (r, None, bal.len())
                }
            });
            let residual = per.iter().map(|p| p.0).fold(0.0, par::fmax);
            let exact_zero = exact.as_ref().map(|_| per.iter().all(|p| p.1 == Some(true)));
            let cylinders = per.iter().map(|p| p.2).sum();
            Ok(QiReport { residual, exact_zero, cylinders, depth })
        }
        MeasureRep::Bernoulli { .. } => unreachable!("Bernoulli measures are one-sided"),
    }
}

/// Total variation `(1/2) sum |nu1 - nu2|`.
///
/// Atomic pairs are compared atom by atom; other pairs on the `2^depth`
/// cylinders of the window `[0, depth)` (one-sided) or `[-depth/2, depth - depth/2)`.
pub fn tv_distance(a: &MeasureRep, b: &MeasureRep, depth: usize) -> Result<f64> {
    if a.space() != b.space() {
        return Err(Error::Invalid("measures live on different spaces".into()));
    }
    if let (MeasureRep::Atomic { atoms: xa, .. }, MeasureRep::Atomic { atoms: xb, .. }) = (a, b) {
        let (sa, sb) = (a.atom_scale(), b.atom_scale());
        let ma: Vec<(BiSeq, f64)> = xa.iter().map(|x| (x.point.clone(), x.weight.to_f64() * sa)).collect();
        let mb: Vec<(BiSeq, f64)> = xb.iter().map(|x| (x.point.clone(), x.weight.to_f64() * sb)).collect();
        return Ok(0.5 * atomic_l1(&ma, &mb));
    }
    let start = match a.space() {
        Space::OneSided => 0,
        Space::TwoSided => -(depth as i64 / 2),
    };
    let (ma, mb) = (a.masses(start, depth)?, b.masses(start, depth)?);
    Ok(0.5 * ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `sum |a - b|` over the union of atoms, merging equal points.
fn atomic_l1(a: &[(BiSeq, f64)], b: &[(BiSeq, f64)]) -> f64 {
    // group points: shared representation first, window signature as fallback
    let mut groups: Vec<(BiSeq, f64)> = Vec::new();
    let mut by_id: HashMap<(usize, i64), usize> = HashMap::new();
    let mut by_sig: HashMap<Word, Vec<usize>> = HashMap::new();
    for (pts, sign) in [(a, 1.0), (b, -1.0)] {
        for (p, w) in pts {
            let key = (p.repr_id(), p.offset());
            let idx = by_id.get(&key).copied().or_else(|| {
                let sig = p.window(-32, 64);
                by_sig.get(&sig).and_then(|c| c.iter().copied().find(|&i| groups[i].0.same_point(p, 256)))
            });
            match idx {
                Some(i) => groups[i].1 += sign * w,
                None => {
                    let i = groups.len();
                    groups.push((p.clone(), sign * w));
                    by_sig.entry(p.window(-32, 64)).or_default().push(i);
                    by_id.insert(key, i);
                }
            }
        }
    }
    groups.iter().map(|g| g.1.abs()).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicMeasure {
    pub measure: MeasureRep,
    pub forced_beta: Beta,
    pub params: KmsParams,
    pub period: u64,
    /// `y_0 .. y_{n-1}`.
    pub word: Word,
}

/// `nu_y` for a periodic `y`, at the only temperature it admits.
pub fn nu_periodic(y: &BiSeq, d: u32, s: u32, max_period: u64) -> Result<PeriodicMeasure> {
    if s >= d || 2 * s == d {
        return Err(Error::Params("periodic orbit measures need 0 < t < s".into()));
    }
    let word = y.period_word(max_period)?;
    let n = word.len() as i64;
    let ones = word.digit_sum() as i64;
    let x = Rational::one() - rat(ones, n);
    let params = derive(d, s, Beta::Affine(x.clone()))?;
    let q = rat(ones, n);
    let lambda = params.lambda.clone().expect("t >= 1");
    let prefix = ones_prefix(y, 0, n);
    let atoms = (0..n)
        .map(|k| Atom {
            point: y.shift(k),
            weight: AtomWeight::Exact(ExactWeight::power(lambda.clone(), int(prefix[k as usize]) - &q * int(k))),
        })
        .collect();
    Ok(PeriodicMeasure {
        measure: MeasureRep::Atomic { space: Space::TwoSided, normalize: true, truncated_mass: 0.0, atoms },
        forced_beta: Beta::Affine(x),
        params,
        period: n as u64,
        word,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedMeasure {
    pub measure: MeasureRep,
    /// Defect `||nu o sigma - lambda^{c_1} nu||` (unhalved norm) from the closed form.
    pub tv_defect: f64,
    /// The same defect evaluated atom by atom.
    pub tv_defect_direct: f64,
    /// Sum of the unnormalized weights.
    pub normalizer: f64,
    /// Orbit indices of the atoms, `first..first + len`.
    pub first_index: i64,
}

fn orbit_weight(lambda: &Rational, q: &Num, c: (i64, i64)) -> AtomWeight {
    // c = (S(k), k)
    match q {
        Num::Exact(qe) => AtomWeight::Exact(ExactWeight::power(lambda.clone(), int(c.0) - qe * int(c.1))),
        Num::Float(qf) => AtomWeight::Float(to_f64(lambda).powf(c.0 as f64 - qf * c.1 as f64)),
    }
}

/// Orbit measure `sum_{k in range} lambda^{c_k(z)} delta_{sigma^k z} / Z` with both defect evaluations.
fn orbit_measure(z: &BiSeq, params: &KmsParams, lo: i64, hi: i64) -> Result<TruncatedMeasure> {
    let lambda = params.lambda.clone().ok_or_else(|| Error::Params("orbit measures need t >= 1".into()))?;
    let q = params.q.clone().ok_or_else(|| Error::Params("orbit measures need 1 <= t < s".into()))?;
    let prefix = ones_prefix(z, lo.min(0), hi.max(0) + 1);
    let sk = |k: i64| prefix[(k - lo.min(0)) as usize];
    let atoms: Vec<Atom> =
        (lo..=hi).map(|k| Atom { point: z.shift(k), weight: orbit_weight(&lambda, &q, (sk(k), k)) }).collect();
    let lf = to_f64(&lambda);
    let qf = q.to_f64();
    let weights: Vec<f64> = atoms.iter().map(|a| a.weight.to_f64()).collect();
    let normalizer: f64 = weights.iter().sum();
    let wf = |k: i64| lf.powf(sk(k) as f64 - qf * k as f64);
    let tv_defect = (wf(lo) + wf(hi + 1)) / normalizer;
    // nu o sigma puts w_k on the atom with index k-1; lambda^{c_1} nu puts w_k lambda^{z_k - q} on index k
    let mut diff: BTreeMap<i64, f64> = BTreeMap::new();
    for (i, w) in weights.iter().enumerate() {
        let k = lo + i as i64;
        *diff.entry(k - 1).or_insert(0.0) += w;
        *diff.entry(k).or_insert(0.0) -= w * lf.powf(z.coord(k) as f64 - qf);
    }
    let tv_defect_direct = diff.values().map(|v| v.abs()).sum::<f64>() / normalizer;
    Ok(TruncatedMeasure {
        measure: MeasureRep::Atomic { space: Space::TwoSided, normalize: true, truncated_mass: 0.0, atoms },
        tv_defect,
        tv_defect_direct,
        normalizer,
        first_index: lo,
    })
}

/// `nu_{beta,z,n}`: atoms `sigma^k z` for `|k| <= n`.
pub fn nu_aperiodic_truncated(z: &BiSeq, params: &KmsParams, n: u64) -> Result<TruncatedMeasure> {
    let n = n as i64;
    orbit_measure(z, params, -n, n)
}

/// Toeplitz `nu_n`: atoms `sigma^j z` for `0 <= j < l(n)`.
pub fn toeplitz_nu(k: &[u64], n: usize, params: &KmsParams) -> Result<TruncatedMeasure> {
    let l = toeplitz_words(k, n)?.l as i64;
    let z = BiSeq::toeplitz(k.to_vec(), n)?;
    orbit_measure(&z, params, 0, l - 1)
}

/// Exact facts behind `||nu_n o sigma - lambda^{c_1} nu_n|| <= 2/n` at `q = 1/2`,
/// plus the float value of the defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzDefect {
    pub n: usize,
    pub l: u64,
    /// `2 c_{l(n)}`, an integer.
    pub twice_c_l: i64,
    /// `2 c_{2 l(n)}`.
    pub twice_c_2l: i64,
    /// `#{0 <= j < l(n) : c_j <= 0}`.
    pub nonpositive_terms: u64,
    /// `c_{l(n)} >= 0` and at least `n` terms equal to `lambda^{c_j} >= 1`.
    pub bound_certified: bool,
    pub defect: f64,
}

pub fn toeplitz_defect(k: &[u64], n: usize, lambda: f64) -> Result<ToeplitzDefect> {
    let z = BiSeq::toeplitz(k.to_vec(), n)?;
    let l: u64 = k[..n].iter().product();
    let prefix = ones_prefix(&z, 0, 2 * l as i64);
    // 2 c_j = 2 S(j) - j
    let twice_c = |j: usize| 2 * prefix[j] - j as i64;
    let nonpositive = (0..l as usize).filter(|&j| twice_c(j) <= 0).count() as u64;
    let normalizer: f64 = (0..l as usize).map(|j| lambda.powf(twice_c(j) as f64 / 2.0)).sum();
    let defect = (1.0 + lambda.powf(twice_c(l as usize) as f64 / 2.0)) / normalizer;
    let twice_c_l = twice_c(l as usize);
    Ok(ToeplitzDefect {
        n,
        l,
        twice_c_l,
        twice_c_2l: twice_c(2 * l as usize),
        nonpositive_terms: nonpositive,
        bound_certified: twice_c_l >= 0 && nonpositive >= n as u64,
        defect,
    })
}

/// Two-sided table on `[-m, k)` extending a one-sided solution of the fixed-point equation:
/// `mass(w) = prod_{j<m} r0(w_j) * mu(C_{0,w})`, `r0(0) = s e^{-beta}`, `r0(1) = t e^{-beta}`.
pub fn extend_to_two_sided(
    mu: &MeasureRep,
    params: &KmsParams,
    m: usize,
    k: usize,
    tolerance: f64,
    exec: Exec,
) -> Result<CylinderTable> {
    let depth = m + k;
    if depth == 0 {
        return Err(Error::Window("extension window is empty".into()));
    }
    let residual = pf4_residual(mu, params, depth.saturating_sub(1), exec)?;
    if residual > tolerance {
        return Err(Error::Residual { residual, tolerance, context: "fixed-point equation before extension".into() });
    }
    let e = 1.0 / params.exp_beta_f64();
    let r0 = [params.s as f64 * e, params.t as f64 * e];
    let base = mu.masses(0, depth)?;
    let masses = par::map_range(exec, 0..1usize << depth, |i| {
        let lead = (0..m).map(|j| r0[(i >> (depth - 1 - j)) & 1]).product::<f64>();
        lead * base[i]
    });
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-12_f64.max(tolerance * (1 << m) as f64) {
        return Err(Error::Residual { residual: (total - 1.0).abs(), tolerance, context: "extension total mass".into() });
    }
    Ok(CylinderTable { space: Space::TwoSided, start: -(m as i64), depth, masses })
}

/// Invariant measure of a primitive substitution subshift as a table on `[start, start + depth)`.
pub fn substitution_invariant_table(rule: &Substitution, start: i64, depth: usize) -> Result<CylinderTable> {
    let mut masses = vec![0.0; 1 << depth];
    for (w, f) in rule.block_frequencies(depth)? {
        masses[w.index()] = f;
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    CylinderTable::new(Space::TwoSided, start, depth, masses)
}

/// `lambda^h nu0 / integral lambda^h d nu0` for a transfer function `h`.
pub fn coboundary_measure(nu0: &MeasureRep, h: &TransferFunction, lambda: f64) -> Result<MeasureRep> {
    let missing = |w: &Word| Error::Invalid(format!("central word {w} of the support is not in the transfer table"));
    match nu0 {
        MeasureRep::Atomic { space, atoms, .. } => {
            let scale = nu0.atom_scale();
            let atoms = atoms
                .iter()
                .map(|a| {
                    let hv = h.h(&a.point).ok_or_else(|| missing(&h.central_word(&a.point)))?;
                    Ok(Atom { point: a.point.clone(), weight: AtomWeight::Float(a.weight.to_f64() * scale * lambda.powf(hv)) })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MeasureRep::Atomic { space: *space, normalize: true, truncated_mass: 0.0, atoms })
        }
        MeasureRep::CylinderTable(t) => {
            let half = h.depth as i64 / 2;
            let lead = -half - t.start;
            if lead < 0 || -half + h.depth as i64 > t.end() {
                return Err(Error::Window("table window must contain the transfer function's central window".into()));
            }
            let trail = t.depth - lead as usize - h.depth;
            let mask = (1usize << h.depth) - 1;
            let mut masses = Vec::with_capacity(t.masses.len());
            for (i, &m) in t.masses.iter().enumerate() {
                if m == 0.0 {
                    masses.push(0.0);
                    continue;
                }
                let w = Word::from_index((i >> trail) & mask, h.depth);
                let hv = *h.table.get(&w).ok_or_else(|| missing(&w))?;
                masses.push(m * lambda.powf(hv));
            }
            let total: f64 = masses.iter().sum();
            masses.iter_mut().for_each(|m| *m /= total);
            Ok(MeasureRep::CylinderTable(CylinderTable::new(t.space, t.start, t.depth, masses)?))
        }
        MeasureRep::Bernoulli { .. } => Err(Error::Invalid("coboundary reweighting needs a two-sided measure".into())),
    }
}

/// Probability of each atom after normalization, in order.
pub fn atom_masses(mu: &MeasureRep) -> Vec<f64> {
    match mu {
        MeasureRep::Atomic { atoms, .. } => {
            let scale = mu.atom_scale();
            atoms.iter().map(|a| a.weight.to_f64() * scale).collect()
        }
        _ => Vec::new(),
    }
}

/// Checks `w_{k+1} / w_k = lambda^{z_k - q}` for consecutive orbit atoms `sigma^k z`,
/// exactly for exact weights. Returns the number of violations.
pub fn atom_transport_failures(mu: &MeasureRep, z: &BiSeq, first_index: i64, lambda: &Rational, q: &Num) -> usize {
    let MeasureRep::Atomic { atoms, .. } = mu else { return 0 };
    atoms
        .windows(2)
        .enumerate()
        .filter(|(i, pair)| {
            let k = first_index + *i as i64;
            let zk = z.coord(k) as i64;
            match (&pair[0].weight, &pair[1].weight, q) {
                (AtomWeight::Exact(a), AtomWeight::Exact(b), Num::Exact(qe)) => {
                    !(a.base == *lambda && b.base == *lambda && a.coeff == b.coeff && &b.exponent - &a.exponent == int(zk) - qe)
                }
                _ => {
                    let r = pair[1].weight.to_f64() / pair[0].weight.to_f64();
                    let want = to_f64(lambda).powf(zk as f64 - q.to_f64());
                    (r - want).abs() > 1e-12 * want
                }
            }
        })
        .count()
}

/// `e^beta (d - e^beta)/(d - 1)`, exact when `e^beta` is rational.
pub fn s_equals_d_trace_mass(params: &KmsParams) -> Num {
    let d = params.d as i64;
    match &params.exp_beta {
        Num::Exact(e) => Num::Exact(e * (int(d) - e) / int(d - 1)),
        Num::Float(e) => Num::Float(e * (d as f64 - e) / (d - 1) as f64),
    }
}
