//! Words, bi-infinite binary sequences, cylinder sets and the shift.
//!
//! A [`BiSeq`] is never materialized: coordinates are computed on demand from
//! a finite description, so every consumer states the window it inspects.
//! Values are immutable and cheap to clone (shared representation plus an
//! offset); shifting only moves the offset.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Symbol = u8;

/// Finite word over `{0, .., alphabet-1}`; binary unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        Self::with_alphabet(symbols, 2)
    }

    pub fn with_alphabet(symbols: Vec<Symbol>, alphabet: u8) -> Result<Self> {
        if let Some(bad) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::Invalid(format!("symbol {bad} outside alphabet of size {alphabet}")));
        }
        Ok(Word(symbols))
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn repeat(symbol: Symbol, n: usize) -> Self {
        Word(vec![symbol; n])
    }

    /// Word of length `len` whose binary digits spell `index` (most significant first).
    pub fn from_index(index: usize, len: usize) -> Self {
        Word((0..len).map(|i| ((index >> (len - 1 - i)) & 1) as Symbol).collect())
    }

    /// Inverse of [`Word::from_index`] for binary words.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &s| (acc << 1) | s as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Symbol {
        self.0[i]
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn digit_sum(&self) -> u64 {
        self.0.iter().map(|&s| s as u64).sum()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as Symbol)
                    .ok_or_else(|| Error::Parse(format!("bad symbol {c:?} in word {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .and_then(Word::new)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `{x : x_{start+j} = word_j for all j}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderSet {
    pub start: i64,
    pub word: Word,
}

impl CylinderSet {
    pub fn new(start: i64, word: Word) -> Self {
        CylinderSet { start, word }
    }

    pub fn contains(&self, z: &BiSeq) -> bool {
        self.word
            .symbols()
            .iter()
            .enumerate()
            .all(|(j, &s)| z.coord(self.start + j as i64) == s)
    }

    /// Image under the shift: `sigma(C_{start,w}) = C_{start-1,w}`.
    pub fn shifted_image(&self) -> CylinderSet {
        CylinderSet { start: self.start - 1, word: self.word.clone() }
    }
}

/// Substitution rule on `{0,1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    images: [Word; 2],
}

impl Substitution {
    pub fn new(zero: Word, one: Word) -> Result<Self> {
        if zero.is_empty() || one.is_empty() {
            return Err(Error::Invalid("substitution images must be nonempty".into()));
        }
        Ok(Substitution { images: [zero, one] })
    }

    pub fn thue_morse() -> Self {
        Substitution::new(Word(vec![0, 1]), Word(vec![1, 0])).expect("valid rule")
    }

    pub fn image(&self, s: Symbol) -> &Word {
        &self.images[s as usize]
    }

    pub fn apply(&self, w: &Word) -> Word {
        Word(w.symbols().iter().flat_map(|&s| self.image(s).symbols().iter().copied()).collect())
    }

    /// The rule composed with itself `p` times.
    pub fn power(&self, p: u32) -> Substitution {
        let mut imgs = [Word(vec![0]), Word(vec![1])];
        for _ in 0..p {
            imgs = [self.apply(&imgs[0]), self.apply(&imgs[1])];
        }
        Substitution { images: imgs }
    }

    /// Iterate the rule `n` times on `w`.
    pub fn iterate(&self, w: &Word, n: u32) -> Word {
        (0..n).fold(w.clone(), |acc, _| self.apply(&acc))
    }

    /// Frequencies of the length-`len` words of the (primitive) substitution
    /// language, as the normalized Perron vector of the induced substitution on
    /// `len`-blocks. Returned in lexicographic order.
    pub fn block_frequencies(&self, len: usize) -> Result<Vec<(Word, f64)>> {
        if len == 0 {
            return Ok(vec![(Word::empty(), 1.0)]);
        }
        // collect the language from a long iterate
        let mut w = Word(vec![0]);
        while w.len() < 64 * len.max(4) {
            w = self.apply(&w);
        }
        if self.image(0).len() < 2 && self.image(1).len() < 2 {
            return Err(Error::Invalid("substitution is not expanding".into()));
        }
        let mut blocks: BTreeMap<Word, usize> = BTreeMap::new();
        for win in w.symbols().windows(len) {
            let n = blocks.len();
            blocks.entry(Word(win.to_vec())).or_insert(n);
        }
        let words: Vec<Word> = blocks.keys().cloned().collect();
        let index: BTreeMap<&Word, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let n = words.len();
        // column j lists the blocks produced by block j
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, b) in words.iter().enumerate() {
            let img = self.apply(b);
            let first = self.image(b.get(0)).len();
            for start in 0..first {
                let sub = Word(img.symbols()[start..start + len].to_vec());
                let i = *index
                    .get(&sub)
                    .ok_or_else(|| Error::Invalid(format!("block {sub} missing from language sample")))?;
                cols[j].push(i);
            }
        }
        let mut f = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut g = vec![0.0; n];
            for (j, c) in cols.iter().enumerate() {
                for &i in c {
                    g[i] += f[j];
                }
            }
            let total: f64 = g.iter().sum();
            g.iter_mut().for_each(|x| *x /= total);
            let delta = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            f = g;
            if delta < 1e-17 {
                break;
            }
        }
        Ok(words.into_iter().zip(f).collect())
    }
}

#[derive(Debug)]
enum Repr {
    EventuallyPeriodic { left: Word, core: Word, right: Word },
    SubstitutionPoint { rule: Substitution, power: u32, effective: Substitution, seed: (Symbol, Symbol) },
    Toeplitz { k: Vec<u64>, depth: usize },
    Prefixed { prefix: Word, rest: BiSeq },
}

/// Bi-infinite binary sequence `(z_j)_{j in Z}`.
///
/// One-sided sequences in `{0,1}^{N_0}` are represented by the same type;
/// only coordinates `j >= 0` are then meaningful.
#[derive(Debug, Clone)]
pub struct BiSeq {
    repr: Arc<Repr>,
    offset: i64,
}

impl BiSeq {
    /// `...LLL core RRR...` with the first core symbol at coordinate `-origin_offset`.
    pub fn eventually_periodic(left: Word, core: Word, right: Word, origin_offset: i64) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Invalid("left and right periods must be nonempty".into()));
        }
        Ok(BiSeq { repr: Arc::new(Repr::EventuallyPeriodic { left, core, right }), offset: origin_offset })
    }

    /// Two-sided periodic point `word^Z` with `z_0 = word_0`.
    pub fn periodic(word: &Word) -> Result<Self> {
        Self::eventually_periodic(word.clone(), Word::empty(), word.clone(), 0)
    }

    /// Two-sided fixed point `... rule^inf(a) . rule^inf(b) ...`, `z_0 = b`.
    ///
    /// If the rule itself has no fixed point through the seed pair (e.g.
    /// Thue-Morse), the smallest power of it that does is used.
    pub fn substitution_point(rule: Substitution, seed: (Symbol, Symbol)) -> Result<Self> {
        let (a, b) = seed;
        if a > 1 || b > 1 {
            return Err(Error::Invalid("seed symbols must be binary".into()));
        }
        for power in 1..=6 {
            let eff = rule.power(power);
            let ea = eff.image(a);
            let eb = eff.image(b);
            if ea.symbols().last() == Some(&a) && eb.get(0) == b {
                if ea.len() < 2 || eb.len() < 2 {
                    return Err(Error::Invalid("seed symbols do not expand under the rule".into()));
                }
                return Ok(BiSeq {
                    repr: Arc::new(Repr::SubstitutionPoint { rule, power, effective: eff, seed }),
                    offset: 0,
                });
            }
        }
        Err(Error::Invalid(format!("no power of the rule fixes the seed pair ({a},{b})")))
    }

    pub fn thue_morse() -> Self {
        Self::substitution_point(Substitution::thue_morse(), (0, 0)).expect("valid seed")
    }

    /// Toeplitz point: `z_j = 0` for `j < 0`, `z_j = a(n)_j` for `j >= 0` and large `n`.
    /// Levels past the end of `k` reuse its last entry.
    pub fn toeplitz(k: Vec<u64>, depth: usize) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::Invalid("toeplitz k sequence must be nonempty".into()));
        }
        if let Some(bad) = k.iter().find(|&&x| x < 3) {
            return Err(Error::Invalid(format!("toeplitz k entries must be >= 3, got {bad}")));
        }
        if depth > k.len() {
            return Err(Error::Invalid(format!("depth {depth} exceeds k sequence length {}", k.len())));
        }
        Ok(BiSeq { repr: Arc::new(Repr::Toeplitz { k, depth }), offset: 0 })
    }

    /// The one-sided point `prefix · rest` (e.g. `0^n y`); negative coordinates
    /// continue `rest` to the left.
    pub fn prefixed(prefix: Word, rest: BiSeq) -> Self {
        BiSeq { repr: Arc::new(Repr::Prefixed { prefix, rest }), offset: 0 }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// The same representation with offset 0, so `z = z.base().shift(z.offset())`.
    pub fn base(&self) -> BiSeq {
        BiSeq { repr: Arc::clone(&self.repr), offset: 0 }
    }

    /// Identity of the shared representation; equal ids with equal offsets mean equal points.
    pub fn repr_id(&self) -> usize {
        Arc::as_ptr(&self.repr) as *const () as usize
    }

    pub fn coord(&self, j: i64) -> Symbol {
        self.repr.at(j + self.offset)
    }

    /// `shift(z, n)_j = z_{j+n}`.
    pub fn shift(&self, n: i64) -> BiSeq {
        BiSeq { repr: Arc::clone(&self.repr), offset: self.offset + n }
    }

    /// Coordinates `start .. start+len`.
    pub fn window(&self, start: i64, len: usize) -> Word {
        Word((0..len as i64).map(|j| self.coord(start + j)).collect())
    }

    pub fn is_eventually_periodic(&self) -> bool {
        matches!(*self.repr, Repr::EventuallyPeriodic { .. })
    }

    /// Whether the two sequences are the same point.
    ///
    /// Exact for eventually periodic pairs and for shifts of one shared
    /// representation; otherwise decided on the window `[-window, window)`.
    pub fn same_point(&self, other: &BiSeq, window: i64) -> bool {
        if Arc::ptr_eq(&self.repr, &other.repr) && self.offset == other.offset {
            return true;
        }
        if let Some(eq) = self.exact_eq(other) {
            return eq;
        }
        (-window..window).all(|j| self.coord(j) == other.coord(j))
    }

    fn ep_parts(&self) -> Option<(&Word, &Word, &Word)> {
        match &*self.repr {
            Repr::EventuallyPeriodic { left, core, right } => Some((left, core, right)),
            _ => None,
        }
    }

    fn exact_eq(&self, other: &BiSeq) -> Option<bool> {
        let (l1, c1, r1) = self.ep_parts()?;
        let (l2, c2, r2) = other.ep_parts()?;
        // beyond the cores both sides are periodic, so one common period past
        // the outermost core boundary decides equality
        let lo = (-self.offset).min(-other.offset);
        let hi = (-self.offset + c1.len() as i64).max(-other.offset + c2.len() as i64);
        let lcm_l = lcm(l1.len() as i64, l2.len() as i64);
        let lcm_r = lcm(r1.len() as i64, r2.len() as i64);
        Some((lo - lcm_l..hi + lcm_r).all(|j| self.coord(j) == other.coord(j)))
    }

    /// Smallest `n <= max_period` with `shift(z, n) = z`.
    pub fn minimal_period(&self, max_period: u64) -> PeriodReport {
        let max = max_period.max(1) as i64;
        let exact = self.is_eventually_periodic();
        let half = 2 * max;
        for n in 1..=max {
            let periodic = if exact {
                self.exact_eq(&self.shift(n)).unwrap_or(false)
            } else {
                (-half..half).all(|j| self.coord(j) == self.coord(j + n))
            };
            if periodic {
                return PeriodReport { period: Some(n as u64), exact, window_width: if exact { 0 } else { 4 * max as u64 } };
            }
        }
        PeriodReport { period: None, exact, window_width: if exact { 0 } else { 4 * max as u64 } }
    }

    /// `y_0 .. y_{n-1}` for a point of minimal period `n`.
    pub fn period_word(&self, max_period: u64) -> Result<Word> {
        let rep = self.minimal_period(max_period);
        match rep.period {
            Some(n) if rep.exact => Ok(self.window(0, n as usize)),
            Some(_) => Err(Error::Invalid("period found only on a window; need an eventually periodic representation".into())),
            None => Err(Error::Invalid("sequence is not periodic".into())),
        }
    }

    pub fn to_spec(&self) -> SequenceSpec {
        let with_offset = |spec: SequenceSpec, off: i64| -> SequenceSpec {
            if off == 0 {
                spec
            } else {
                SequenceSpec::Shifted { by: off, base: Box::new(spec) }
            }
        };
        match &*self.repr {
            Repr::EventuallyPeriodic { left, core, right } => SequenceSpec::EventuallyPeriodic {
                left: left.clone(),
                core: core.clone(),
                right: right.clone(),
                origin_offset: self.offset,
            },
            Repr::SubstitutionPoint { rule, seed, .. } => with_offset(
                SequenceSpec::Substitution {
                    rule: [("0".to_string(), rule.image(0).clone()), ("1".to_string(), rule.image(1).clone())]
                        .into_iter()
                        .collect(),
                    seed: [seed.0, seed.1],
                },
                self.offset,
            ),
            Repr::Toeplitz { k, depth } => with_offset(SequenceSpec::Toeplitz { k: k.clone(), depth: *depth }, self.offset),
            Repr::Prefixed { prefix, rest } => with_offset(
                SequenceSpec::Prefixed { prefix: prefix.clone(), rest: Box::new(rest.to_spec()) },
                self.offset,
            ),
        }
    }

    /// Substitution power actually used, for substitution points.
    pub fn substitution_power(&self) -> Option<u32> {
        match &*self.repr {
            Repr::SubstitutionPoint { power, .. } => Some(*power),
            _ => None,
        }
    }

    pub fn substitution_rule(&self) -> Option<&Substitution> {
        match &*self.repr {
            Repr::SubstitutionPoint { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

impl PartialEq for BiSeq {
    /// Equality on the window `[-256, 256)` unless decidable exactly.
    fn eq(&self, other: &Self) -> bool {
        self.same_point(other, 256)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

impl Repr {
    fn at(&self, p: i64) -> Symbol {
        match self {
            Repr::EventuallyPeriodic { left, core, right } => {
                if p < 0 {
                    let l = left.len() as i64;
                    left.get(p.rem_euclid(l) as usize)
                } else if (p as usize) < core.len() {
                    core.get(p as usize)
                } else {
                    right.get((p as usize - core.len()) % right.len())
                }
            }
            Repr::SubstitutionPoint { effective, seed, .. } => {
                if p >= 0 {
                    descend_from_front(effective, seed.1, p as u64)
                } else {
                    descend_from_back(effective, seed.0, (-p - 1) as u64)
                }
            }
            Repr::Toeplitz { k, .. } => {
                if p < 0 {
                    0
                } else {
                    toeplitz_coord(k, p as u64)
                }
            }
            Repr::Prefixed { prefix, rest } => {
                let n = prefix.len() as i64;
                if (0..n).contains(&p) {
                    prefix.get(p as usize)
                } else {
                    rest.coord(p - n)
                }
            }
        }
    }
}

/// Lengths `|rule^k(c)|` for `k = 0..` until the length for `seed` exceeds `index`.
fn level_lengths(rule: &Substitution, seed: Symbol, index: u64) -> Vec<[u64; 2]> {
    let mut lens = vec![[1u64, 1u64]];
    while lens.last().unwrap()[seed as usize] <= index {
        let prev = *lens.last().unwrap();
        let next = [0u8, 1u8].map(|c| rule.image(c).symbols().iter().map(|&s| prev[s as usize]).sum::<u64>());
        lens.push(next);
    }
    lens
}

fn descend(rule: &Substitution, lens: &[[u64; 2]], mut sym: Symbol, mut index: u64) -> Symbol {
    for level in (1..lens.len()).rev() {
        for &child in rule.image(sym).symbols() {
            let l = lens[level - 1][child as usize];
            if index < l {
                sym = child;
                break;
            }
            index -= l;
        }
    }
    sym
}

fn descend_from_front(rule: &Substitution, seed: Symbol, index: u64) -> Symbol {
    let lens = level_lengths(rule, seed, index);
    descend(rule, &lens, seed, index)
}

fn descend_from_back(rule: &Substitution, seed: Symbol, from_end: u64) -> Symbol {
    let lens = level_lengths(rule, seed, from_end);
    let total = lens.last().unwrap()[seed as usize];
    descend(rule, &lens, seed, total - 1 - from_end)
}

fn k_at(k: &[u64], level: usize) -> u64 {
    // levels are 1-based
    k[(level - 1).min(k.len() - 1)]
}

fn toeplitz_coord(k: &[u64], p: u64) -> Symbol {
    // k >= 3, so 41 levels already exceed every u64 index
    let mut lens = [1u64; 42];
    let mut levels = 1;
    while lens[levels - 1] <= p {
        lens[levels] = lens[levels - 1].saturating_mul(k_at(k, levels));
        levels += 1;
    }
    // walk down from a(m)
    let mut is_a = true;
    let mut idx = p;
    for level in (1..levels).rev() {
        let block = idx / lens[level - 1];
        idx %= lens[level - 1];
        is_a = if is_a { block != 1 } else { block == 0 };
    }
    if is_a {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub period: Option<u64>,
    /// `true` when decided from the exact representation, `false` when by window comparison.
    pub exact: bool,
    /// Width of the inspected window (0 for exact decisions).
    pub window_width: u64,
}

/// The nested Toeplitz words at one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToeplitzWords {
    pub a: Word,
    pub b: Word,
    pub l: u64,
}

/// `a(0)=1, b(0)=0, a(n)=a(n-1)b(n-1)a(n-1)^{k(n)-2}, b(n)=a(n-1)b(n-1)^{k(n)-1}`.
pub fn toeplitz_words(k: &[u64], n: usize) -> Result<ToeplitzWords> {
    if k.len() < n {
        return Err(Error::Invalid(format!("need {n} entries of k, got {}", k.len())));
    }
    if let Some(bad) = k[..n].iter().find(|&&x| x < 3) {
        return Err(Error::Invalid(format!("toeplitz k entries must be >= 3, got {bad}")));
    }
    let mut a: Vec<Symbol> = vec![1];
    let mut b: Vec<Symbol> = vec![0];
    for &kn in &k[..n] {
        let len = a.len() * kn as usize;
        let (mut na, mut nb) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for w in [&mut na, &mut nb] {
            w.extend_from_slice(&a);
            w.extend_from_slice(&b);
        }
        for _ in 0..kn - 2 {
            na.extend_from_slice(&a);
            nb.extend_from_slice(&b);
        }
        a = na;
        b = nb;
    }
    let (a, b) = (Word(a), Word(b));
    let l = a.len() as u64;
    Ok(ToeplitzWords { a, b, l })
}

/// Digit-sum identities `2 sum a(n) = l(n) + prod(k(j)-2)` and
/// `2 sum b(n) = l(n) - prod(k(j)-2)`, checked in integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToeplitzIdentityReport {
    pub n: usize,
    pub l: u64,
    pub sum_a: u64,
    pub sum_b: u64,
    pub product: u64,
    pub l_is_product_of_k: bool,
    pub sum_a_holds: bool,
    pub sum_b_holds: bool,
}

pub fn toeplitz_identities(k: &[u64], n: usize) -> Result<ToeplitzIdentityReport> {
    let w = toeplitz_words(k, n)?;
    let product: u64 = k[..n].iter().map(|x| x - 2).product();
    let l_prod: u64 = k[..n].iter().product();
    let sum_a = w.a.digit_sum();
    let sum_b = w.b.digit_sum();
    Ok(ToeplitzIdentityReport {
        n,
        l: w.l,
        sum_a,
        sum_b,
        product,
        l_is_product_of_k: l_prod == w.l && w.b.len() as u64 == w.l,
        sum_a_holds: 2 * sum_a == w.l + product,
        sum_b_holds: 2 * sum_b + product == w.l,
    })
}

/// JSON description of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SequenceSpec {
    EventuallyPeriodic {
        left: Word,
        #[serde(default)]
        core: Word,
        right: Word,
        #[serde(default)]
        origin_offset: i64,
    },
    Substitution {
        rule: BTreeMap<String, Word>,
        seed: [Symbol; 2],
    },
    Toeplitz {
        k: Vec<u64>,
        depth: usize,
    },
    Prefixed {
        prefix: Word,
        rest: Box<SequenceSpec>,
    },
    Shifted {
        by: i64,
        base: Box<SequenceSpec>,
    },
}

impl SequenceSpec {
    pub fn build(&self) -> Result<BiSeq> {
        match self {
            SequenceSpec::EventuallyPeriodic { left, core, right, origin_offset } => {
                BiSeq::eventually_periodic(left.clone(), core.clone(), right.clone(), *origin_offset)
            }
            SequenceSpec::Substitution { rule, seed } => {
                let get = |s: &str| {
                    rule.get(s).cloned().ok_or_else(|| Error::Parse(format!("substitution rule lacks symbol {s}")))
                };
                if rule.len() != 2 {
                    return Err(Error::Parse("substitution rule must map exactly the symbols 0 and 1".into()));
                }
                BiSeq::substitution_point(Substitution::new(get("0")?, get("1")?)?, (seed[0], seed[1]))
            }
            SequenceSpec::Toeplitz { k, depth } => BiSeq::toeplitz(k.clone(), *depth),
            SequenceSpec::Prefixed { prefix, rest } => Ok(BiSeq::prefixed(prefix.clone(), rest.build()?)),
            SequenceSpec::Shifted { by, base } => Ok(base.build()?.shift(*by)),
        }
    }
}

impl Serialize for BiSeq {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BiSeq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SequenceSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}
