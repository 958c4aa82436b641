//! Finite Markov operators `P(f)(x) = sum_y P[x,y] f(y)`, their harmonic
//! functions, and their tail boundaries.
//!
//! A bounded harmonic sequence is `(f_n)_{n in Z}` with `P f_n = f_{n-1}`.
//! On a finite state space these are spanned by the cyclic subclasses of the
//! closed communicating classes: for a class `C` of period `p` with subclasses
//! `C_0 .. C_{p-1}` (moves go `C_j -> C_{j+1}`) and a tail point `(C, r)`,
//! `f_n = 1` on `C_j` exactly when `j = r + n mod p`, extended to transient
//! states by first-entry probabilities. The translation `(f_n) -> (f_{n+1})`
//! sends `(C, r)` to `(C, r + 1)`; its fixed part is the space of harmonic
//! functions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;

use num_traits::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{int, rat, to_f64, Num, Rational};

/// Field operations used by the linear algebra here.
pub trait Scalar: Clone + Debug + PartialEq + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    /// Exactly zero for rationals, `|x| <= 1e-10` for floats.
    fn negligible(&self) -> bool;
    fn magnitude(&self) -> f64;
    fn to_num(&self) -> Num;
    fn is_negative(&self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn negligible(&self) -> bool {
        self.abs() <= 1e-10
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn to_num(&self) -> Num {
        Num::Float(*self)
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
}

impl Scalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn negligible(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        to_f64(self).abs()
    }
    fn to_num(&self) -> Num {
        Num::Exact(self.clone())
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
}

/// Row-stochastic operator with sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOp<S: Scalar> {
    rows: Vec<Vec<(usize, S)>>,
    /// Predecessor lists: `cols[y]` holds `(x, P[x,y])`.
    cols: Vec<Vec<(usize, S)>>,
    pub stationary: Option<Vec<S>>,
}

impl<S: Scalar> MarkovOp<S> {
    pub fn from_sparse(n: usize, rows: Vec<Vec<(usize, S)>>) -> Result<Self> {
        if rows.len() != n || n == 0 {
            return Err(Error::Invalid(format!("expected {n} > 0 rows, got {}", rows.len())));
        }
        let mut clean = Vec::with_capacity(n);
        for (x, row) in rows.into_iter().enumerate() {
            let mut acc: BTreeMap<usize, S> = BTreeMap::new();
            for (y, v) in row {
                if y >= n {
                    return Err(Error::Invalid(format!("row {x} refers to state {y} >= {n}")));
                }
                if v.is_negative() {
                    return Err(Error::Invalid(format!("negative entry P[{x},{y}]")));
                }
                let e = acc.entry(y).or_insert_with(S::zero);
                *e = e.add(&v);
            }
            let sum = acc.values().fold(S::zero(), |a, v| a.add(v));
            let defect = sum.sub(&S::one());
            let exact = defect.to_num().exact().is_some();
            if defect.magnitude() > 1e-12 || (exact && !defect.negligible()) {
                return Err(Error::Invalid(format!("row {x} sums to {}, not 1", sum.to_num())));
            }
            clean.push(acc.into_iter().filter(|(_, v)| v.magnitude() > 0.0).collect::<Vec<_>>());
        }
        let mut cols = vec![Vec::new(); n];
        for (x, row) in clean.iter().enumerate() {
            for (y, v) in row {
                cols[*y].push((x, v.clone()));
            }
        }
        Ok(MarkovOp { rows: clean, cols, stationary: None })
    }

    pub fn from_dense(rows: Vec<Vec<S>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("matrix must be square".into()));
        }
        let sparse = rows.into_iter().map(|r| r.into_iter().enumerate().filter(|(_, v)| v.magnitude() > 0.0).collect()).collect();
        Self::from_sparse(n, sparse)
    }

    pub fn with_stationary(mut self, mu: Vec<S>) -> Result<Self> {
        if mu.len() != self.len() {
            return Err(Error::Invalid("stationary vector has the wrong length".into()));
        }
        self.stationary = Some(mu);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<(usize, S)>] {
        &self.rows
    }

    pub fn apply(&self, f: &[S]) -> Vec<S> {
        self.rows.iter().map(|row| row.iter().fold(S::zero(), |a, (y, p)| a.add(&p.mul(&f[*y])))).collect()
    }

    /// `mu P` for a row vector `mu`.
    pub fn apply_left(&self, mu: &[S]) -> Vec<S> {
        self.cols.iter().map(|col| col.iter().fold(S::zero(), |a, (x, p)| a.add(&p.mul(&mu[*x])))).collect()
    }

    fn apply_sparse(&self, v: &SparseVec<S>) -> SparseVec<S> {
        let mut out: BTreeMap<usize, S> = BTreeMap::new();
        for (y, vy) in v {
            for (x, p) in &self.cols[*y] {
                let e = out.entry(*x).or_insert_with(S::zero);
                *e = e.add(&p.mul(vy));
            }
        }
        out.into_iter().filter(|(_, v)| !v.negligible()).collect()
    }

    /// `P^k`.
    pub fn power(&self, k: u32) -> Result<Self> {
        let n = self.len();
        let mut rows: Vec<BTreeMap<usize, S>> = (0..n).map(|x| [(x, S::one())].into_iter().collect()).collect();
        for _ in 0..k {
            rows = rows
                .into_iter()
                .map(|r| {
                    let mut out: BTreeMap<usize, S> = BTreeMap::new();
                    for (z, a) in r {
                        for (y, p) in &self.rows[z] {
                            let e = out.entry(*y).or_insert_with(S::zero);
                            *e = e.add(&a.mul(p));
                        }
                    }
                    out
                })
                .collect();
        }
        Self::from_sparse(n, rows.into_iter().map(|r| r.into_iter().collect()).collect())
    }
}

/// Uniform Bernoulli shift on words of length `k` over `d` letters:
/// `P(f)(x_0..x_{k-1}) = (1/d) sum_a f(x_1..x_{k-1} a)`. Word `x` is state
/// `sum_i x_i d^{k-1-i}`.
pub fn bernoulli_shift(d: usize, k: usize) -> Result<MarkovOp<Rational>> {
    if d < 2 || k == 0 {
        return Err(Error::Invalid("bernoulli shift needs d >= 2 and k >= 1".into()));
    }
    let n = d.checked_pow(k as u32).filter(|&n| n <= 1 << 20).ok_or_else(|| Error::Invalid("state space too large".into()))?;
    let w = rat(1, d as i64);
    let rows = (0..n).map(|x| (0..d).map(|a| ((x * d) % n + a, w.clone())).collect()).collect();
    MarkovOp::from_sparse(n, rows)?.with_stationary(vec![rat(1, n as i64); n])
}

/// `P(f) = f o T` for a map `T` on `{0..n-1}`, i.e. `P[x, T(x)] = 1`.
pub fn permutation(t: &[usize]) -> Result<MarkovOp<Rational>> {
    let n = t.len();
    let rows = t.iter().map(|&y| vec![(y, int(1))]).collect();
    MarkovOp::from_sparse(n, rows)
}

/// Sparse vector as sorted `(index, value)` pairs.
pub type SparseVec<S> = Vec<(usize, S)>;

/// Row echelon basis keyed by leading column.
struct Echelon<S: Scalar> {
    pivots: BTreeMap<usize, SparseVec<S>>,
}

impl<S: Scalar> Echelon<S> {
    fn new() -> Self {
        Echelon { pivots: BTreeMap::new() }
    }

    fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Reduces `v` against the basis; inserts it if independent. Returns whether it was.
    fn insert(&mut self, v: SparseVec<S>) -> bool {
        let mut row: BTreeMap<usize, S> = v.into_iter().filter(|(_, x)| !x.negligible()).collect();
        loop {
            let Some((&lead, lv)) = row.iter().next() else { return false };
            match self.pivots.get(&lead) {
                Some(piv) => {
                    let factor = lv.div(&piv[0].1);
                    for (c, pv) in piv {
                        let e = row.entry(*c).or_insert_with(S::zero);
                        *e = e.sub(&factor.mul(pv));
                        if e.negligible() {
                            row.remove(c);
                        }
                    }
                    row.remove(&lead);
                }
                None => {
                    self.pivots.insert(lead, row.into_iter().collect());
                    return true;
                }
            }
        }
    }

    fn vectors(&self) -> Vec<SparseVec<S>> {
        self.pivots.values().cloned().collect()
    }
}

fn dense_to_sparse<S: Scalar>(v: &[S]) -> SparseVec<S> {
    v.iter().enumerate().filter(|(_, x)| !x.negligible()).map(|(i, x)| (i, x.clone())).collect()
}

/// Solves `a x = b` (square, nonsingular) for several right-hand sides, with magnitude pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<Vec<S>>) -> Result<Vec<Vec<S>>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].magnitude().total_cmp(&a[j][col].magnitude()))
            .expect("nonempty");
        if a[piv][col].negligible() {
            return Err(Error::Invalid("singular transient system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r == col || a[r][col].negligible() {
                continue;
            }
            let f = a[r][col].div(&a[col][col]);
            for c in col..n {
                let v = f.mul(&a[col][c]);
                a[r][c] = a[r][c].sub(&v);
            }
            for c in 0..b[r].len() {
                let v = f.mul(&b[col][c]);
                b[r][c] = b[r][c].sub(&v);
            }
        }
    }
    Ok((0..n).map(|r| b[r].iter().map(|x| x.div(&a[r][r])).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub states: Vec<usize>,
    pub period: usize,
    /// `subclasses[j]` is `C_j`; moves go from `C_j` to `C_{j+1 mod period}`.
    pub subclasses: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub class: usize,
    pub subclass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub states: usize,
    pub classes: Vec<ClassInfo>,
    pub transient: Vec<usize>,
    pub tail_dim: usize,
    pub poisson_dim: usize,
    pub tail_points: Vec<TailPoint>,
    /// `translation[i]` is the index of the image of tail point `i`.
    pub translation: Vec<usize>,
    /// `f_0` of the harmonic sequence attached to each tail point.
    pub tail_basis: Vec<Vec<Num>>,
    /// Dimension of `V = intersection of range(P^n)`, by rank stabilization.
    pub eventual_image_dim: usize,
    /// Steps until `rank(P^n)` stabilized.
    pub stabilization_steps: usize,
    /// Every tail function lies in `V`.
    pub tail_in_eventual_image: bool,
    /// `dim ker(P - I)` by rank, independent of the class decomposition.
    pub kernel_dim_by_rank: usize,
    /// `max |P f_n - f_{n-1}|` over tail points and one full period of `n`.
    pub harmonic_residual: f64,
    /// `max |mu(Sigma f) - mu(f)|` over tail functions, when a stationary vector was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary_sigma_defect: Option<f64>,
}

impl BoundaryReport {
    /// The translation as a map on states, when every tail point is a single state.
    pub fn translation_on_states(&self) -> Option<Vec<(usize, usize)>> {
        let state = |i: usize| {
            let tp = &self.tail_points[i];
            let sub = &self.classes[tp.class].subclasses[tp.subclass];
            (sub.len() == 1).then(|| sub[0])
        };
        (0..self.tail_points.len()).map(|i| Some((state(i)?, state(self.translation[i])?))).collect()
    }
}

/// Closed classes with their periods and cyclic subclasses; transient states.
pub fn communicating_classes<S: Scalar>(p: &MarkovOp<S>) -> (Vec<ClassInfo>, Vec<usize>) {
    let n = p.len();
    let edges: Vec<(u32, u32)> = p.rows.iter().enumerate().flat_map(|(x, r)| r.iter().map(move |(y, _)| (x as u32, *y as u32))).collect();
    let mut g = DiGraph::<(), ()>::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    g.extend_with_edges(edges);
    let mut comp = vec![usize::MAX; n];
    let sccs = tarjan_scc(&g);
    for (ci, c) in sccs.iter().enumerate() {
        for v in c {
            comp[v.index()] = ci;
        }
    }
    let mut classes = Vec::new();
    let mut transient = Vec::new();
    for (ci, c) in sccs.iter().enumerate() {
        let mut states: Vec<usize> = c.iter().map(|v| v.index()).collect();
        states.sort_unstable();
        let closed = states.iter().all(|&x| p.rows[x].iter().all(|(y, _)| comp[*y] == ci));
        if !closed {
            transient.extend(states);
            continue;
        }
        // BFS levels; the period is the gcd of level defects along internal edges
        let mut level: BTreeMap<usize, i64> = BTreeMap::new();
        level.insert(states[0], 0);
        let mut queue = VecDeque::from([states[0]]);
        while let Some(x) = queue.pop_front() {
            for (y, _) in &p.rows[x] {
                if !level.contains_key(y) {
                    level.insert(*y, level[&x] + 1);
                    queue.push_back(*y);
                }
            }
        }
        let mut period = 0i64;
        for &x in &states {
            for (y, _) in &p.rows[x] {
                period = gcd(period, (level[&x] + 1 - level[y]).abs());
            }
        }
        let period = period.max(1) as usize;
        let mut subclasses = vec![Vec::new(); period];
        for &x in &states {
            subclasses[(level[&x] as usize) % period].push(x);
        }
        classes.push(ClassInfo { states, period, subclasses });
    }
    classes.sort_by_key(|c| c.states[0]);
    transient.sort_unstable();
    (classes, transient)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `f_n` for every tail point at `n = 0 .. period`, as dense vectors.
fn harmonic_sequences<S: Scalar>(p: &MarkovOp<S>, classes: &[ClassInfo], transient: &[usize]) -> Result<Vec<Vec<Vec<S>>>> {
    let n = p.len();
    let tpos: BTreeMap<usize, usize> = transient.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut where_in: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (ci, c) in classes.iter().enumerate() {
        for (j, sub) in c.subclasses.iter().enumerate() {
            for &x in sub {
                where_in.insert(x, (ci, j));
            }
        }
    }
    let mut out = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        let d = c.period;
        // rho(x, e): unknown index x_pos * d + e
        let rho: Vec<Vec<S>> = if transient.is_empty() {
            Vec::new()
        } else {
            let m = transient.len() * d;
            let mut a = vec![vec![S::zero(); m]; m];
            let mut b = vec![vec![S::zero()]; m];
            for (xi, &x) in transient.iter().enumerate() {
                for e in 0..d {
                    let row = xi * d + e;
                    a[row][row] = a[row][row].add(&S::one());
                    for (y, pxy) in &p.rows[x] {
                        if let Some(&yi) = tpos.get(y) {
                            let col = yi * d + (e + 1) % d;
                            a[row][col] = a[row][col].sub(pxy);
                        } else if let Some(&(cj, j)) = where_in.get(y) {
                            if cj == ci && (j + d - 1) % d == e {
                                b[row][0] = b[row][0].add(pxy);
                            }
                        }
                    }
                }
            }
            solve_dense(a, b)?
        };
        for r in 0..d {
            let mut seq = Vec::with_capacity(d + 1);
            for step in 0..=d {
                let target = (r + step) % d;
                let mut f = vec![S::zero(); n];
                for &x in &c.subclasses[target] {
                    f[x] = S::one();
                }
                for (xi, &x) in transient.iter().enumerate() {
                    f[x] = rho[xi * d + target][0].clone();
                }
                seq.push(f);
            }
            out.push(seq);
        }
    }
    Ok(out)
}

/// Basis of `{f : P f = f}`: one absorption-probability function per closed class.
pub fn harmonic_fixed_space<S: Scalar>(p: &MarkovOp<S>) -> Result<Vec<Vec<S>>> {
    let (classes, transient) = communicating_classes(p);
    let seqs = harmonic_sequences(p, &classes, &transient)?;
    let mut out = Vec::new();
    let mut i = 0;
    for c in &classes {
        let mut h = vec![S::zero(); p.len()];
        for seq in &seqs[i..i + c.period] {
            for (a, b) in h.iter_mut().zip(&seq[0]) {
                *a = a.add(b);
            }
        }
        i += c.period;
        out.push(h);
    }
    Ok(out)
}

/// Sparse basis of the eventual image and the number of steps to reach it.
pub fn eventual_image<S: Scalar>(p: &MarkovOp<S>) -> (Vec<SparseVec<S>>, usize) {
    let n = p.len();
    let mut basis: Vec<SparseVec<S>> = (0..n).map(|i| vec![(i, S::one())]).collect();
    let mut steps = 0;
    loop {
        let mut ech = Echelon::new();
        for v in &basis {
            ech.insert(p.apply_sparse(v));
        }
        let next = ech.vectors();
        if next.len() == basis.len() {
            return (next, steps);
        }
        basis = next;
        steps += 1;
    }
}

/// `dim ker(P - I)`, computed on a basis of the eventual image, which
/// contains every fixed vector: `dim V - rank{(P - I) v}`.
pub fn kernel_dim_by_rank<S: Scalar>(p: &MarkovOp<S>, image: &[SparseVec<S>]) -> usize {
    let mut ech = Echelon::new();
    for v in image {
        let mut out: BTreeMap<usize, S> = p.apply_sparse(v).into_iter().collect();
        for (i, x) in v {
            let e = out.entry(*i).or_insert_with(S::zero);
            *e = e.sub(x);
        }
        ech.insert(out.into_iter().collect());
    }
    image.len() - ech.rank()
}

pub fn tail_decomposition<S: Scalar>(p: &MarkovOp<S>) -> Result<BoundaryReport> {
    let (classes, transient) = communicating_classes(p);
    let seqs = harmonic_sequences(p, &classes, &transient)?;
    let mut tail_points = Vec::new();
    let mut translation = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        let base = tail_points.len();
        for r in 0..c.period {
            tail_points.push(TailPoint { class: ci, subclass: r });
            translation.push(base + (r + 1) % c.period);
        }
    }
    let mut residual = 0.0f64;
    for seq in &seqs {
        for step in 1..seq.len() {
            // P f_step = f_{step-1}
            let pf = p.apply(&seq[step]);
            for (a, b) in pf.iter().zip(&seq[step - 1]) {
                residual = residual.max(a.sub(b).magnitude());
            }
        }
    }
    let (v, steps) = eventual_image(p);
    let mut ech = Echelon::new();
    for b in &v {
        ech.insert(b.clone());
    }
    let tail_in = seqs.iter().all(|seq| !ech.insert(dense_to_sparse(&seq[0])));
    let stationary_sigma_defect = p.stationary.as_ref().map(|mu| {
        let dot = |f: &[S]| mu.iter().zip(f).fold(S::zero(), |a, (m, x)| a.add(&m.mul(x)));
        seqs.iter()
            .enumerate()
            .map(|(i, seq)| dot(&seqs[translation[i]][0]).sub(&dot(&seq[0])).magnitude())
            .fold(0.0, f64::max)
    });
    Ok(BoundaryReport {
        states: p.len(),
        tail_dim: tail_points.len(),
        poisson_dim: classes.len(),
        tail_basis: seqs.iter().map(|s| s[0].iter().map(Scalar::to_num).collect()).collect(),
        tail_points,
        translation,
        eventual_image_dim: v.len(),
        stabilization_steps: steps,
        tail_in_eventual_image: tail_in,
        kernel_dim_by_rank: kernel_dim_by_rank(p, &v),
        harmonic_residual: residual,
        stationary_sigma_defect,
        classes,
        transient,
    })
}

/// Span equality of two families of dense vectors.
pub fn same_span<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> bool {
    let rank = |vs: &[&Vec<S>]| {
        let mut e = Echelon::new();
        vs.iter().filter(|v| e.insert(dense_to_sparse(v))).count()
    };
    let ra = rank(&a.iter().collect::<Vec<_>>());
    let rb = rank(&b.iter().collect::<Vec<_>>());
    let rab = rank(&a.iter().chain(b).collect::<Vec<_>>());
    ra == rb && ra == rab
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCheck {
    pub window: usize,
    pub steps: usize,
    pub patterns: usize,
    pub matched: usize,
    pub max_residual: f64,
    /// Rank of the step-`steps` members equals the number of patterns.
    pub independent_after_steps: bool,
}

/// Shift patterns `f_k(n) = g(n - k)` on `{0..window}` against the backward
/// shift `P0 f(n) = f(n + 1)`, checked on `0 <= n < window`.
///
/// A pattern is either finitely supported on `[0, len)` or constant.
pub fn backward_shift_pattern_check(window: usize, patterns: &[ShiftPattern], steps: usize) -> Result<PatternCheck> {
    if window < 2 {
        return Err(Error::Window("pattern window must be >= 2".into()));
    }
    let at = |g: &ShiftPattern, m: i64| -> f64 {
        match g {
            ShiftPattern::Constant(c) => *c,
            ShiftPattern::Finite(v) => {
                if m >= 0 && (m as usize) < v.len() {
                    v[m as usize]
                } else {
                    0.0
                }
            }
        }
    };
    let member = |g: &ShiftPattern, k: usize| -> Vec<f64> { (0..=window).map(|n| at(g, n as i64 - k as i64)).collect() };
    let mut matched = 0;
    let mut worst = 0.0f64;
    for g in patterns {
        if let ShiftPattern::Finite(v) = g {
            if v.len() + steps > window {
                return Err(Error::Window(format!("pattern of length {} shifted {steps} steps leaves the window", v.len())));
            }
        }
        let mut ok = true;
        for k in 0..steps {
            let (fk, fk1) = (member(g, k), member(g, k + 1));
            let r = (0..window).map(|n| (fk1[n + 1] - fk[n]).abs()).fold(0.0, f64::max);
            worst = worst.max(r);
            ok &= r <= 1e-12;
        }
        matched += ok as usize;
    }
    let mut e = Echelon::<f64>::new();
    let independent = patterns.iter().filter(|g| e.insert(dense_to_sparse(&member(g, steps)))).count() == patterns.len();
    Ok(PatternCheck { window, steps, patterns: patterns.len(), matched, max_residual: worst, independent_after_steps: independent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftPattern {
    Constant(f64),
    Finite(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `sup |P^{n+1}(fg) - P^n(fg)|` for `n = 0 .. n_max - 1`.
    pub defects: Vec<f64>,
    /// First `n` with defect below `1e-10`.
    pub converged_at: Option<usize>,
    pub limit: Option<Vec<f64>>,
    /// Smallest `k <= 64` with `P^{n_max}(fg) = P^{n_max - k}(fg)` while not converged.
    pub oscillation_period: Option<usize>,
}

pub fn simulate_p_convergence<S: Scalar>(p: &MarkovOp<S>, f: &[f64], g: &[f64], n_max: usize) -> Result<ConvergenceReport> {
    if f.len() != p.len() || g.len() != p.len() {
        return Err(Error::Invalid("function length differs from the number of states".into()));
    }
    let rows: Vec<Vec<(usize, f64)>> = p.rows.iter().map(|r| r.iter().map(|(y, v)| (*y, v.to_num().to_f64())).collect()).collect();
    let step = |h: &[f64]| -> Vec<f64> { rows.iter().map(|r| r.iter().map(|(y, v)| v * h[*y]).sum()).collect() };
    let mut h: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    let mut history = vec![h.clone()];
    let mut defects = Vec::with_capacity(n_max);
    let mut converged_at = None;
    for n in 0..n_max {
        let next = step(&h);
        let d = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        defects.push(d);
        h = next;
        history.push(h.clone());
        if d < 1e-10 {
            converged_at = Some(n);
            break;
        }
    }
    let oscillation_period = if converged_at.is_none() {
        let last = history.len() - 1;
        (1..=64.min(last)).find(|&k| history[last].iter().zip(&history[last - k]).all(|(a, b)| (a - b).abs() < 1e-10))
    } else {
        None
    };
    Ok(ConvergenceReport { defects, limit: converged_at.map(|_| h), converged_at, oscillation_period })
}

/// Matrix read from JSON `{"rows": [[...], ...]}` or whitespace/tab-separated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixInput {
    pub rows: Vec<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<Num>>,
}

/// Exact operator when every entry is exact, float otherwise.
#[derive(Debug, Clone)]
pub enum AnyMarkov {
    Exact(MarkovOp<Rational>),
    Float(MarkovOp<f64>),
}

impl MatrixInput {
    pub fn parse_text(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return Ok(serde_json::from_str(text)?);
        }
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        if t.contains('.') || t.contains('e') {
                            t.parse::<f64>().map(Num::Float).map_err(|_| Error::Parse(format!("bad entry {t:?}")))
                        } else {
                            crate::num::parse_rational(t).map(Num::Exact)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixInput { rows, stationary: None })
    }

    pub fn build(&self) -> Result<AnyMarkov> {
        let all_exact = self.rows.iter().flatten().chain(self.stationary.iter().flatten()).all(|x| x.exact().is_some());
        if all_exact {
            let rows = self.rows.iter().map(|r| r.iter().map(|x| x.exact().cloned().expect("exact")).collect()).collect();
            let mut p = MarkovOp::from_dense(rows)?;
            if let Some(mu) = &self.stationary {
                p = p.with_stationary(mu.iter().map(|x| x.exact().cloned().expect("exact")).collect())?;
            }
            Ok(AnyMarkov::Exact(p))
        } else {
            let rows = self.rows.iter().map(|r| r.iter().map(Num::to_f64).collect()).collect();
            let mut p = MarkovOp::from_dense(rows)?;
            if let Some(mu) = &self.stationary {
                p = p.with_stationary(mu.iter().map(Num::to_f64).collect())?;
            }
            Ok(AnyMarkov::Float(p))
        }
    }
}

impl AnyMarkov {
    pub fn tail_decomposition(&self) -> Result<BoundaryReport> {
        match self {
            AnyMarkov::Exact(p) => tail_decomposition(p),
            AnyMarkov::Float(p) => tail_decomposition(p),
        }
    }

    pub fn harmonic_fixed_space(&self) -> Result<Vec<Vec<Num>>> {
        fn nums<S: Scalar>(v: Vec<Vec<S>>) -> Vec<Vec<Num>> {
            v.into_iter().map(|v| v.iter().map(Scalar::to_num).collect()).collect()
        }
        Ok(match self {
            AnyMarkov::Exact(p) => nums(harmonic_fixed_space(p)?),
            AnyMarkov::Float(p) => nums(harmonic_fixed_space(p)?),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            AnyMarkov::Exact(p) => p.len(),
            AnyMarkov::Float(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_tail() {
        let p = permutation(&[1, 2, 0]).unwrap();
        let rep = tail_decomposition(&p).unwrap();
        assert_eq!((rep.tail_dim, rep.poisson_dim), (3, 1));
        assert_eq!(rep.eventual_image_dim, 3);
        assert_eq!(rep.kernel_dim_by_rank, 1);
        assert_eq!(rep.harmonic_residual, 0.0);
        let mut sigma = rep.translation_on_states().unwrap();
        sigma.sort();
        assert_eq!(sigma, vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(harmonic_fixed_space(&p).unwrap().len(), 1);
    }

    #[test]
    fn fixed_spaces() {
        let id = permutation(&[0, 1, 2, 3]).unwrap();
        assert_eq!(harmonic_fixed_space(&id).unwrap().len(), 4);
        let pos = MarkovOp::from_dense(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let h = harmonic_fixed_space(&pos).unwrap();
        assert_eq!(h, vec![vec![1.0, 1.0]]);
        assert_eq!(kernel_dim_by_rank(&pos, &eventual_image(&pos).0), 1);
    }

    #[test]
    fn bernoulli_tail_is_trivial() {
        for k in 1..=6 {
            let p = bernoulli_shift(2, k).unwrap();
            let rep = tail_decomposition(&p).unwrap();
            assert_eq!((rep.tail_dim, rep.poisson_dim, rep.eventual_image_dim), (1, 1, 1));
            assert_eq!(rep.stabilization_steps, k);
            assert_eq!(rep.stationary_sigma_defect, Some(0.0));
        }
    }

    #[test]
    fn transient_states_get_entry_probabilities() {
        // state 0 is transient, moving to the 2-cycle {1,2} or the fixed point 3
        let p = MarkovOp::from_dense(vec![
            vec![rat(0, 1), rat(1, 2), rat(1, 4), rat(1, 4)],
            vec![rat(0, 1), rat(0, 1), rat(1, 1), rat(0, 1)],
            vec![rat(0, 1), rat(1, 1), rat(0, 1), rat(0, 1)],
            vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1)],
        ])
        .unwrap();
        let rep = tail_decomposition(&p).unwrap();
        assert_eq!((rep.tail_dim, rep.poisson_dim), (3, 2));
        assert_eq!(rep.harmonic_residual, 0.0);
        assert!(rep.tail_in_eventual_image);
        let h = harmonic_fixed_space(&p).unwrap();
        assert_eq!(h[0][0], rat(3, 4));
        assert_eq!(h[1][0], rat(1, 4));
    }

    #[test]
    fn nonperipheral_part_is_excluded() {
        // eigenvalues 1 and 0.2: V is 2-dimensional but only constants are bounded harmonic sequences
        let p = MarkovOp::from_dense(vec![vec![rat(3, 5), rat(2, 5)], vec![rat(2, 5), rat(3, 5)]]).unwrap();
        let rep = tail_decomposition(&p).unwrap();
        assert_eq!((rep.tail_dim, rep.eventual_image_dim), (1, 2));
    }

    #[test]
    fn pattern_check() {
        let pats = vec![ShiftPattern::Finite(vec![1.0]), ShiftPattern::Constant(2.0), ShiftPattern::Finite(vec![0.0, 1.0, -1.0])];
        let r = backward_shift_pattern_check(20, &pats, 10).unwrap();
        assert_eq!(r.matched, 3);
        assert!(r.independent_after_steps);
    }

    #[test]
    fn convergence() {
        let p = MarkovOp::from_dense(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let r = simulate_p_convergence(&p, &[1.0, 2.0], &[3.0, 1.0], 200).unwrap();
        let lim = r.limit.unwrap();
        // stationary (1/3, 2/3), fg = (3, 2)
        assert!((lim[0] - 7.0 / 3.0).abs() < 1e-9);
        let c = permutation(&[1, 2, 0]).unwrap();
        let r = simulate_p_convergence(&c, &[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 50).unwrap();
        assert_eq!((r.converged_at, r.oscillation_period), (None, Some(3)));
        let r = simulate_p_convergence(&c, &[2.0; 3], &[3.0; 3], 5).unwrap();
        assert_eq!(r.converged_at, Some(0));
    }

    #[test]
    fn text_input() {
        let m = MatrixInput::parse_text("0 1\n1/2 1/2\n").unwrap();
        assert!(matches!(m.build().unwrap(), AnyMarkov::Exact(_)));
        let m = MatrixInput::parse_text("{\"rows\": [[0.5, 0.5], [\"1\", 0]]}").unwrap();
        assert!(matches!(m.build().unwrap(), AnyMarkov::Float(_)));
        assert!(MatrixInput::parse_text("0.5 0.4\n1 0").unwrap().build().is_err());
    }
}
