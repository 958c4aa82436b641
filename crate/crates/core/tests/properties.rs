//! Invariants checked over generated inputs.

use std::collections::BTreeMap;

use kmsflow::classify::{classify, datum, periodic_ratio_from_beta, periodic_ratio_product, Family};
use kmsflow::cocycle::{c_exact, check_cocycle_identity, exponent_chain_holds};
use kmsflow::kms::{admissible_beta, derive, Beta};
use kmsflow::markov::{permutation, same_span, tail_decomposition, MarkovOp};
use kmsflow::measure::{
    bernoulli_for, extend_to_two_sided, m_p_y, nu_periodic, pf4_residual, quasi_invariance_residual,
    substitution_invariant_table, MeasureRep,
};
use kmsflow::num::{int, rat};
use kmsflow::par::Exec;
use kmsflow::symbolic::{toeplitz_words, BiSeq, Substitution, Word};
use kmsflow::{Num, Rational};
use num_traits::Zero;
use proptest::prelude::*;

fn word_strategy(max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(0u8..2, 1..=max).prop_map(|v| Word::new(v).unwrap())
}

fn seq_strategy() -> impl Strategy<Value = BiSeq> {
    prop_oneof![
        (word_strategy(4), word_strategy(6), word_strategy(4), -8i64..8)
            .prop_map(|(l, c, r, o)| BiSeq::eventually_periodic(l, c, r, o).unwrap()),
        word_strategy(8).prop_map(|w| BiSeq::periodic(&w).unwrap()),
        (-100i64..100).prop_map(|n| BiSeq::thue_morse().shift(n)),
        (prop::collection::vec(3u64..6, 1..5), -100i64..100)
            .prop_map(|(k, n)| BiSeq::toeplitz(k.clone(), k.len()).unwrap().shift(n)),
        (word_strategy(5), word_strategy(3)).prop_map(|(p, w)| BiSeq::prefixed(p, BiSeq::periodic(&w).unwrap())),
    ]
}

fn rational_q() -> impl Strategy<Value = Rational> {
    (0i64..=12, 1i64..=12).prop_filter_map("q in [0,1]", |(a, b)| (a <= b).then(|| rat(a, b)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn shift_is_a_bijection(z in seq_strategy(), n in -500i64..500, j in -300i64..300) {
        prop_assert_eq!(z.shift(n).shift(-n).coord(j), z.coord(j));
        prop_assert_eq!(z.shift(n).coord(j), z.coord(j + n));
        prop_assert!(z.shift(1).shift(-1).same_point(&z, 128));
    }

    #[test]
    fn cocycle_identity_is_exact(z in seq_strategy(), q in rational_q(),
                                 pairs in prop::collection::vec((-300i64..300, -300i64..300), 8)) {
        let rep = check_cocycle_identity(&z, &pairs, &Num::Exact(q), Exec::Sequential);
        prop_assert_eq!(rep.failures, 0);
        prop_assert!(rep.pairs.iter().all(|p| p.exact_equal == Some(true)));
    }

    #[test]
    fn radon_nikodym_chain(z in seq_strategy(), q in rational_q()) {
        prop_assert!(exponent_chain_holds(&z, &q, -64, 64));
        for k in -64..64 {
            let step = c_exact(&z, k + 1, &q) - c_exact(&z, k, &q);
            prop_assert_eq!(step, int(z.coord(k) as i64) - &q);
        }
    }

    #[test]
    fn periodic_cocycle_vanishes(w in word_strategy(8), reps in 1i64..5) {
        let y = BiSeq::periodic(&w).unwrap();
        let n = w.len() as i64;
        let q = rat(w.digit_sum() as i64, n);
        prop_assert!(c_exact(&y, reps * n, &q).is_zero());
        prop_assert!(c_exact(&y, -reps * n, &q).is_zero());
        let other = &q + rat(1, 13);
        prop_assert!(!c_exact(&y, n, &other).is_zero());
    }

    #[test]
    fn kms_parameters_stay_in_range(d in 3u32..9, s_off in 0u32..8, u in 0.0f64..=1.0) {
        let s = d / 2 + 1 + s_off % (d - d / 2);
        prop_assume!(s <= d && s < d);
        let t = d - s;
        prop_assume!(t < s);
        let lo = if t == 1 { 1e-9 } else { (t as f64).ln() };
        let beta = lo + u * ((s as f64).ln() - lo);
        let p = derive(d, s, Beta::Float(beta)).unwrap();
        let pv = p.p.clone().unwrap().to_f64();
        let qv = p.q.clone().unwrap().to_f64();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&pv), "p = {pv}");
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&qv), "q = {qv}");
        prop_assert!(admissible_beta(d, s).unwrap().contains(beta));
        // q strictly decreasing in beta
        let h = 1e-4 * ((s as f64).ln() - lo);
        if u < 0.99 {
            let p2 = derive(d, s, Beta::Float(beta + h)).unwrap();
            prop_assert!(p2.q.unwrap().to_f64() < qv);
        }
        // depth-1 marginal of b_p
        let mu = bernoulli_for(&p).unwrap();
        let m = mu.masses(0, 1).unwrap();
        prop_assert!((m[0] - pv).abs() < 1e-15 && (m[1] - (1.0 - pv)).abs() < 1e-15);
    }

    #[test]
    fn pf4_extension_quasi_invariance(d in 3u32..9, s_off in 0u32..8, u in 0.0f64..=1.0, m in 1usize..5) {
        let s = d / 2 + 1 + s_off % (d - d / 2);
        prop_assume!(s < d);
        let t = d - s;
        let lo = if t == 1 { 0.05 } else { (t as f64).ln() };
        let beta = lo + u * ((s as f64).ln() - lo);
        let p = derive(d, s, Beta::Float(beta)).unwrap();
        let mu = bernoulli_for(&p).unwrap();
        let depth = m + 3;
        let eps = pf4_residual(&mu, &p, depth, Exec::Sequential).unwrap();
        let ext = extend_to_two_sided(&mu, &p, m, 3, 1e-12, Exec::Sequential).unwrap();
        // restriction to nonnegative coordinates gives back mu
        let right = ext.restrict(0, 3).unwrap();
        let direct = mu.masses(0, 3).unwrap();
        prop_assert!(right.masses().iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-14));
        let c = (s.max(t) as f64) / p.exp_beta_f64();
        let qi = quasi_invariance_residual(&MeasureRep::CylinderTable(ext), p.lambda.as_ref().unwrap(),
                                           p.q.as_ref().unwrap(), depth - 1, Exec::Sequential).unwrap();
        // eps is itself at rounding level for b_p; the extended table adds its own
        prop_assert!(qi.residual <= c * eps + 1e-14, "qi {} eps {}", qi.residual, eps);
    }

    #[test]
    fn orbit_measures_are_normalized_and_transport(w in word_strategy(6), ds in 0usize..6) {
        let (d, s) = [(3, 2), (4, 3), (5, 4), (5, 3), (6, 5), (6, 4)][ds];
        prop_assume!(!(d - s == 1 && w.digit_sum() as usize == w.len()));
        let y = BiSeq::periodic(&w).unwrap();
        let pm = nu_periodic(&y, d, s, 64).unwrap();
        let lambda = pm.params.lambda.clone().unwrap();
        let masses = kmsflow::measure::atom_masses(&pm.measure);
        prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let fails = kmsflow::measure::atom_transport_failures(&pm.measure, &y, 0, &lambda, pm.params.q.as_ref().unwrap());
        prop_assert_eq!(fails, 0);
    }

    #[test]
    fn classify_ignores_basepoint(w in word_strategy(6), shift in 0i64..6, ds in 0usize..6) {
        let (d, s) = [(3, 2), (4, 3), (5, 4), (5, 3), (6, 5), (6, 4)][ds];
        prop_assume!(!(d - s == 1 && w.digit_sum() as usize == w.len()));
        let y = BiSeq::periodic(&w).unwrap();
        let beta = nu_periodic(&y, d, s, 64).unwrap().forced_beta;
        let a = classify(&datum(d, s, beta.clone(), Family::PeriodicOrbit { y: y.to_spec() }), Exec::Sequential).unwrap();
        let b = classify(&datum(d, s, beta, Family::PeriodicOrbit { y: y.shift(shift).to_spec() }), Exec::Sequential).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn direction_flips_with_beta(num in 2i64..20, den in 2i64..20, d in 2u32..6) {
        prop_assume!(num != den);
        let e = rat(num, den);
        prop_assume!(e < int(d as i64) && e.recip() < int(d as i64));
        let y = BiSeq::periodic(&"1".parse().unwrap()).unwrap().to_spec();
        let a = classify(&datum(d, d, Beta::LogOf(e.clone()), Family::BoundaryPoint { y: y.clone() }), Exec::Sequential).unwrap();
        let b = classify(&datum(d, d, Beta::LogOf(e.recip()), Family::BoundaryPoint { y }), Exec::Sequential).unwrap();
        prop_assert_ne!(a.time_direction, b.time_direction);
        prop_assert_eq!(a.type_label, b.type_label);
        prop_assert_eq!(a.reduced_flow, b.reduced_flow);
    }

    #[test]
    fn permutation_tail_is_the_permutation(perm in Just((0..9usize).collect::<Vec<_>>()).prop_shuffle(), n in 1usize..=9) {
        // restrict the shuffle to a permutation of 0..n
        let t: Vec<usize> = {
            let order: Vec<usize> = perm.into_iter().filter(|&x| x < n).collect();
            let mut t = vec![0; n];
            for i in 0..n {
                t[order[i]] = order[(i + 1) % n.max(1)];
            }
            t
        };
        let rep = tail_decomposition(&permutation(&t).unwrap()).unwrap();
        let mut sigma = rep.translation_on_states().unwrap();
        sigma.sort();
        let want: Vec<(usize, usize)> = t.iter().copied().enumerate().collect();
        prop_assert_eq!(sigma, want);
        prop_assert_eq!(rep.tail_dim, n);
    }

    #[test]
    fn powers_keep_the_tail(p in markov_strategy(), k in 1u32..=4) {
        let rep = tail_decomposition(&p).unwrap();
        let pk = p.power(k).unwrap();
        let rep_k = tail_decomposition(&pk).unwrap();
        let basis = |r: &kmsflow::markov::BoundaryReport| -> Vec<Vec<Rational>> {
            r.tail_basis.iter().map(|v| v.iter().map(|x| x.exact().unwrap().clone()).collect()).collect()
        };
        prop_assert_eq!(rep.eventual_image_dim, rep_k.eventual_image_dim);
        prop_assert!(same_span(&basis(&rep), &basis(&rep_k)));
        // P^k maps the tail function of Sigma'(w) back to that of w
        let bk = basis(&rep_k);
        for (i, v) in bk.iter().enumerate() {
            prop_assert_eq!(&pk.apply(&bk[rep_k.translation[i]]), v);
        }
        prop_assert_eq!(cycle_type(&rep_k.translation), cycle_type(&power_perm(&rep.translation, k)));
        prop_assert_eq!(rep.harmonic_residual, 0.0);
        prop_assert_eq!(rep.kernel_dim_by_rank, rep.poisson_dim);
        prop_assert!(rep.tail_in_eventual_image);
    }

    #[test]
    fn stationary_weights_are_sigma_invariant(perms in prop::collection::vec(Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(), 1..4)) {
        // an average of permutation matrices is doubly stochastic, so the uniform vector is stationary
        let n = 6;
        let share = rat(1, perms.len() as i64);
        let rows: Vec<Vec<(usize, Rational)>> = (0..n).map(|x| perms.iter().map(|p| (p[x], share.clone())).collect()).collect();
        let p = MarkovOp::from_sparse(n, rows).unwrap().with_stationary(vec![rat(1, n as i64); n]).unwrap();
        let mu = p.stationary.clone().unwrap();
        prop_assert_eq!(p.apply_left(&mu), mu);
        let rep = tail_decomposition(&p).unwrap();
        prop_assert_eq!(rep.stationary_sigma_defect, Some(0.0));
    }
}

fn markov_strategy() -> impl Strategy<Value = MarkovOp<Rational>> {
    (2usize..7).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec((0..n, 1i64..4), 1..=3), n).prop_map(move |rows| {
            let rows = rows
                .into_iter()
                .map(|r| {
                    let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
                    for (y, w) in r {
                        *acc.entry(y).or_default() += w;
                    }
                    let total: i64 = acc.values().sum();
                    acc.into_iter().map(|(y, w)| (y, rat(w, total))).collect()
                })
                .collect();
            MarkovOp::from_sparse(n, rows).unwrap()
        })
    })
}

fn power_perm(p: &[usize], k: u32) -> Vec<usize> {
    (0..p.len()).map(|i| (0..k).fold(i, |x, _| p[x])).collect()
}

fn cycle_type(p: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; p.len()];
    let mut out = Vec::new();
    for i in 0..p.len() {
        let mut len = 0;
        let mut x = i;
        while !seen[x] {
            seen[x] = true;
            x = p[x];
            len += 1;
        }
        if len > 0 {
            out.push(len);
        }
    }
    out.sort_unstable();
    out
}

#[test]
fn thue_morse_matches_digit_parity() {
    let tm = BiSeq::thue_morse();
    for j in 0..1i64 << 12 {
        assert_eq!(tm.coord(j) as u32, (j as u64).count_ones() % 2, "j = {j}");
    }
}

#[test]
fn toeplitz_words_nest() {
    for k in [vec![3u64; 9], (1..=9).map(|j| j + 2).collect::<Vec<u64>>()] {
        for n in 0..8 {
            let small = toeplitz_words(&k, n).unwrap();
            let big = toeplitz_words(&k, n + 1).unwrap();
            assert_eq!(&big.a.symbols()[..small.l as usize], small.a.symbols());
        }
    }
}

#[test]
fn ratio_two_ways_all_short_words() {
    for (d, s) in [(3u32, 2u32), (4, 3), (5, 4), (5, 3), (6, 5), (6, 4)] {
        for len in 1..=8 {
            for i in 0..1usize << len {
                let w = Word::from_index(i, len);
                assert_eq!(periodic_ratio_product(&w, s, d - s), periodic_ratio_from_beta(&w, s, d - s));
            }
        }
    }
}

#[test]
fn pf4_on_s_equals_d_series() {
    for (d, e) in [(2u32, rat(3, 2)), (3, int(2)), (4, rat(1, 2))] {
        let p = derive(d, d, Beta::LogOf(e.clone())).unwrap();
        let pr = &e / int(d as i64);
        let y = BiSeq::periodic(&"1".parse().unwrap()).unwrap();
        let full = m_p_y(&Num::Exact(pr.clone()), &y, None).unwrap();
        assert!(pf4_residual(&full, &p, 8, Exec::Sequential).unwrap() < 1e-12);
        // the truncated series errs by at most its discarded mass
        // the truncated series errs by its discarded mass times max(1, (1-p)/p): the
        // cylinder C_{0^k} loses p^N while e^{-beta} d mu(C_{0^{k+1}}) loses p^{N-1}
        let pf = kmsflow::num::to_f64(&pr);
        let short = m_p_y(&Num::Exact(pr), &y, Some(5)).unwrap();
        let r = pf4_residual(&short, &p, 6, Exec::Sequential).unwrap();
        let bound = short.truncated_mass() * f64::max(1.0, (1.0 - pf) / pf);
        assert!(r <= bound + 1e-15, "{r} vs {bound}");
        assert!((full.total_mass() + full.truncated_mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tables_are_kolmogorov_consistent() {
    let t = substitution_invariant_table(&Substitution::thue_morse(), -3, 9).unwrap();
    for len in 1..9 {
        let fine = t.marginal(-3, len + 1).unwrap();
        let coarse = t.marginal(-3, len).unwrap();
        for (i, c) in coarse.iter().enumerate() {
            assert!((fine[2 * i] + fine[2 * i + 1] - c).abs() < 1e-14);
        }
    }
}

#[test]
fn execution_mode_does_not_change_results() {
    let p = derive(5, 3, Beta::LogOf(rat(5, 2))).unwrap();
    let mu = bernoulli_for(&p).unwrap();
    assert_eq!(pf4_residual(&mu, &p, 8, Exec::Sequential).unwrap(), pf4_residual(&mu, &p, 8, Exec::Parallel).unwrap());
    let a = extend_to_two_sided(&mu, &p, 3, 3, 1e-12, Exec::Sequential).unwrap();
    let b = extend_to_two_sided(&mu, &p, 3, 3, 1e-12, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    let z = BiSeq::thue_morse();
    let pairs: Vec<(i64, i64)> = (-20..20).map(|i| (i * 7, 13 - i)).collect();
    let q = Num::Exact(rat(1, 2));
    assert_eq!(check_cocycle_identity(&z, &pairs, &q, Exec::Sequential), check_cocycle_identity(&z, &pairs, &q, Exec::Parallel));
}
