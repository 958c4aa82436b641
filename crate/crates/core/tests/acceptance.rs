//! Acceptance criteria 1-9. Each criterion prints one PASS/FAIL line with its
//! elapsed time; the test fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use kmsflow::classify::{classify, datum, Family, ReducedFlow, TimeDirection, TypeLabel};
use kmsflow::cocycle::{bound_scan, check_cocycle_identity, solve_transfer, TransferConfig};
use kmsflow::kms::{derive, pf1_pf2_check, Beta, KmsParams};
use kmsflow::markov::{bernoulli_shift, permutation, tail_decomposition};
use kmsflow::measure::{
    atom_transport_failures, bernoulli_b_p, bernoulli_for, coboundary_measure, extend_to_two_sided, m_p_y,
    nu_aperiodic_truncated, nu_periodic, quasi_invariance_residual, substitution_invariant_table, toeplitz_defect,
    MeasureRep, Space,
};
use kmsflow::num::{int, rat};
use kmsflow::par::Exec;
use kmsflow::symbolic::{toeplitz_identities, BiSeq, Substitution, Word};
use kmsflow::{Num, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn w(s: &str) -> Word {
    s.parse().unwrap()
}

fn exec() -> Exec {
    if cfg!(feature = "parallel") {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn pf_measure(p: &KmsParams) -> MeasureRep {
    let one_sided_zero = || MeasureRep::dirac(BiSeq::periodic(&w("0")).unwrap(), Space::OneSided);
    if p.t == 0 {
        let e = p.exp_beta.exact().expect("exact grid").clone();
        if e == int(p.d as i64) {
            return one_sided_zero();
        }
        let y = BiSeq::periodic(&w("10")).unwrap();
        return m_p_y(&Num::Exact(e / int(p.d as i64)), &y, None).unwrap();
    }
    if p.t == p.s {
        // any shift-invariant measure solves the equation at beta = log s
        return bernoulli_b_p(Num::Exact(rat(1, 3))).unwrap();
    }
    bernoulli_for(p).unwrap()
}

fn c1_pf_suite() -> Outcome {
    let grid: Vec<(u32, u32, Rational)> = vec![
        (2, 2, rat(3, 2)),
        (2, 2, int(2)),
        (2, 2, rat(1, 2)),
        (3, 3, rat(5, 2)),
        (3, 3, int(3)),
        (4, 4, rat(1, 3)),
        (3, 2, rat(3, 2)),
        (3, 2, rat(5, 4)),
        (3, 2, int(2)),
        (4, 3, int(2)),
        (4, 3, int(3)),
        (5, 4, rat(7, 2)),
        (5, 3, int(2)),
        (5, 3, rat(5, 2)),
        (5, 3, int(3)),
        (7, 4, int(3)),
        (7, 4, rat(7, 2)),
        (7, 4, int(4)),
        (4, 2, int(2)),
        (6, 3, int(3)),
        (8, 4, int(4)),
    ];
    let mut worst = 0.0f64;
    for (d, s, e) in &grid {
        let p = derive(*d, *s, Beta::LogOf(e.clone())).map_err(|x| x.to_string())?;
        let mu = pf_measure(&p);
        let rep = pf1_pf2_check(&p, &mu, 8, exec()).map_err(|x| x.to_string())?;
        ensure(rep.pf1_residual == Num::Exact(int(0)), || format!("PF1 at ({d},{s},log {e}) = {}", rep.pf1_residual))?;
        ensure(rep.pf2_residual < 1e-12, || format!("PF4 at ({d},{s},log {e}) = {:e}", rep.pf2_residual))?;
        worst = worst.max(rep.pf2_residual);
    }
    Ok(format!("{} triples, PF1 = 0, max PF4 residual {worst:.2e}", grid.len()))
}

fn primitive_words(max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    for len in 1..=max_len {
        for i in 0..1usize << len {
            let word = Word::from_index(i, len);
            let y = BiSeq::periodic(&word).unwrap();
            if y.minimal_period(len as u64).period == Some(len as u64) {
                out.push(word);
            }
        }
    }
    out
}

fn c2_quasi_invariance() -> Outcome {
    let triples = [(3, 2), (4, 3), (5, 4), (5, 3), (6, 5), (6, 4)];
    let words = primitive_words(6);
    let mut checked = 0;
    let mut skipped = 0;
    for &(d, s) in &triples {
        let t = d - s;
        for word in &words {
            if t == 1 && word.digit_sum() as usize == word.len() {
                // y = 1^inf forces beta = log 1 = 0
                skipped += 1;
                continue;
            }
            let pm = nu_periodic(&BiSeq::periodic(word).unwrap(), d, s, 64).map_err(|e| e.to_string())?;
            let lambda = pm.params.lambda.clone().unwrap();
            let q = pm.params.q.clone().unwrap();
            let rep = quasi_invariance_residual(&pm.measure, &lambda, &q, 6, exec()).map_err(|e| e.to_string())?;
            ensure(rep.exact_zero == Some(true), || format!("nu_{word} at ({d},{s}) not exactly balanced: {rep:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} orbit measures exactly quasi-invariant ({skipped} excluded: 1^inf at t = 1 forces beta = 0)"))
}

fn c3_toeplitz() -> Outcome {
    let families: [(&str, Vec<u64>); 2] = [("k = 3", vec![3; 8]), ("k(j) = j + 2", (1..=8).map(|j| j + 2).collect())];
    let mut worst_ratio = 0.0f64;
    for (name, k) in &families {
        for n in 1..=8 {
            let id = toeplitz_identities(k, n).map_err(|e| e.to_string())?;
            ensure(id.sum_a_holds && id.sum_b_holds && id.l_is_product_of_k, || format!("{name}, n = {n}: {id:?}"))?;
            // lambda = 1/2 is arbitrary: the certificate does not depend on it
            let def = toeplitz_defect(k, n, 0.5).map_err(|e| e.to_string())?;
            let half_product: i64 = k[..n].iter().map(|&x| x as i64 - 2).product();
            ensure(def.twice_c_l == half_product, || format!("{name}, n = {n}: 2c_l = {} != {half_product}", def.twice_c_l))?;
            ensure(def.twice_c_2l == 0, || format!("{name}, n = {n}: c_2l = {}/2", def.twice_c_2l))?;
            ensure(def.bound_certified, || format!("{name}, n = {n}: defect bound not certified"))?;
            ensure(def.defect <= 2.0 / n as f64, || format!("{name}, n = {n}: defect {}", def.defect))?;
            worst_ratio = worst_ratio.max(def.defect * n as f64 / 2.0);
        }
    }
    Ok(format!("both families, n <= 8; max defect / (2/n) = {worst_ratio:.3}"))
}

fn c4_thue_morse() -> Outcome {
    let window = 1i64 << 14;
    let (lo, hi) = bound_scan(&BiSeq::thue_morse(), &rat(1, 2), window).map_err(|e| e.to_string())?;
    ensure(lo >= int(-1) && hi <= int(1), || format!("range [{lo}, {hi}]"))?;
    Ok(format!("c_k in [{lo}, {hi}] for |k| <= {window}"))
}

fn c5_coboundary() -> Outcome {
    let p = derive(5, 3, Beta::Affine(rat(1, 2))).map_err(|e| e.to_string())?;
    let lambda = p.lambda.clone().unwrap();
    let tm = BiSeq::thue_morse();
    let tf = solve_transfer(&[tm], &rat(1, 2), 8, &TransferConfig::default(), exec()).map_err(|e| e.to_string())?;
    ensure(tf.residual < 1e-6, || format!("transfer residual {:e}", tf.residual))?;
    let nu0 = substitution_invariant_table(&Substitution::thue_morse(), -6, 12).map_err(|e| e.to_string())?;
    let nu = coboundary_measure(&MeasureRep::CylinderTable(nu0), &tf, kmsflow::num::to_f64(&lambda))
        .map_err(|e| e.to_string())?;
    let qi = quasi_invariance_residual(&nu, &lambda, &Num::Exact(rat(1, 2)), 6, exec()).map_err(|e| e.to_string())?;
    ensure(qi.residual <= 10.0 * tf.residual, || {
        format!("(qi) residual {:.3e} above 10 x transfer residual {:.3e}", qi.residual, tf.residual)
    })?;
    Ok(format!("transfer residual {:.2e}, (qi) residual {:.2e}", tf.residual, qi.residual))
}

fn c6_classifier() -> Outcome {
    let x = Exec::Sequential;
    let run = |d, s, beta, fam| classify(&datum(d, s, beta, fam), x).map_err(|e| e.to_string());
    let periodic = |s: &str| BiSeq::periodic(&w(s)).unwrap().to_spec();

    let v = run(3, 3, Beta::LogOf(int(3)), Family::BernoulliPoint)?;
    ensure(v.type_label == Some(TypeLabel::IIILambda) && v.lambda == Some(Num::Exact(rat(1, 3))), || format!("s = d, log d: {v:?}"))?;
    let v = run(2, 2, Beta::LogOf(rat(3, 2)), Family::BoundaryPoint { y: periodic("1") })?;
    ensure(v.type_label == Some(TypeLabel::II1) && v.trace_mass == Some(Num::Exact(rat(3, 4))), || format!("s = d below log d: {v:?}"))?;
    let v = run(3, 2, Beta::Affine(rat(1, 2)), Family::PeriodicOrbit { y: periodic("01") })?;
    ensure(v.type_label == Some(TypeLabel::IIILambda) && v.lambda == Some(Num::Exact(rat(1, 2))), || format!("(01): {v:?}"))?;
    let v = run(5, 3, Beta::Affine(rat(1, 2)), Family::CoboundaryMeasure { subshift: BiSeq::thue_morse().to_spec(), depth: 8 })?;
    ensure(v.type_label == Some(TypeLabel::III0), || format!("Thue-Morse: {v:?}"))?;
    let v = run(4, 3, Beta::LogOf(int(2)), Family::Gicar)?;
    ensure(v.type_label == Some(TypeLabel::IIILambda) && v.lambda == Some(Num::Exact(rat(1, 2))), || format!("GICAR: {v:?}"))?;
    let step = BiSeq::eventually_periodic(w("0"), w(""), w("1"), 0).unwrap().to_spec();
    let v = run(5, 3, Beta::Affine(rat(1, 2)), Family::AperiodicOrbit { z: step, window: 512 })?;
    ensure(v.type_label == Some(TypeLabel::SemifiniteOpen), || format!("aperiodic (C): {v:?}"))?;
    Ok("6 rows match".into())
}

fn c7_tail() -> Outcome {
    for k in 1..=10 {
        let rep = tail_decomposition(&bernoulli_shift(2, k).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(rep.tail_dim == 1 && rep.eventual_image_dim == 1 && rep.poisson_dim == 1, || format!("Bernoulli depth {k}: {rep:?}"))?;
    }
    for n in 1..=12usize {
        let t: Vec<usize> = (0..n).map(|x| (x + 1) % n).collect();
        let rep = tail_decomposition(&permutation(&t).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut sigma = rep.translation_on_states().ok_or("tail points are not single states")?;
        sigma.sort();
        let cycle: Vec<(usize, usize)> = t.iter().enumerate().map(|(x, &y)| (x, y)).collect();
        ensure(rep.tail_dim == n && rep.poisson_dim == 1 && sigma == cycle, || format!("{n}-cycle: {rep:?}"))?;
    }
    let y = BiSeq::periodic(&w("1")).unwrap().to_spec();
    let pos = classify(&datum(2, 2, Beta::LogOf(rat(3, 2)), Family::BoundaryPoint { y: y.clone() }), Exec::Sequential)
        .map_err(|e| e.to_string())?;
    let neg = classify(&datum(2, 2, Beta::LogOf(rat(2, 3)), Family::BoundaryPoint { y }), Exec::Sequential)
        .map_err(|e| e.to_string())?;
    ensure(pos.time_direction == TimeDirection::Forward && neg.time_direction == TimeDirection::Reverse, || {
        format!("directions {:?} / {:?}", pos.time_direction, neg.time_direction)
    })?;
    ensure(pos.reduced_flow == ReducedFlow::TranslationOnZ && neg.reduced_flow == pos.reduced_flow, || "flows differ".into())?;
    Ok("Bernoulli k <= 10 tail dim 1; n-cycles n <= 12 give Sigma = T; direction flips with sign(beta)".into())
}

fn c8_extension() -> Outcome {
    let grid = [(5, 3, rat(5, 2)), (5, 3, rat(9, 4)), (3, 2, rat(3, 2)), (7, 4, rat(10, 3)), (4, 3, rat(5, 2))];
    let right = 3;
    let mut worst = 0.0f64;
    for (d, s, e) in &grid {
        let p = derive(*d, *s, Beta::LogOf(e.clone())).map_err(|x| x.to_string())?;
        let mu = bernoulli_for(&p).map_err(|x| x.to_string())?;
        let pv = p.p.as_ref().unwrap().to_f64();
        let eb = 1.0 / p.exp_beta_f64();
        let want = [eb * *s as f64 * pv, eb * (*d - *s) as f64 * (1.0 - pv)];
        let mut prev = None;
        for m in 1..=6usize {
            let t = extend_to_two_sided(&mu, &p, m, right, 1e-12, exec()).map_err(|x| x.to_string())?;
            for j in 0..m {
                let marg = t.marginal(-(j as i64) - 1, 1).map_err(|x| x.to_string())?;
                let err = (marg[0] - want[0]).abs().max((marg[1] - want[1]).abs());
                ensure(err <= 1e-12, || format!("({d},{s},log {e}) m = {m}: left marginal off by {err:e}"))?;
                worst = worst.max(err);
            }
            if let Some(prev) = &prev {
                let diff = t.restrict(-(m as i64) + 1, m - 1 + right).and_then(|r| r.max_diff(prev)).map_err(|x| x.to_string())?;
                ensure(diff <= 1e-12, || format!("({d},{s},log {e}) m = {m}: inconsistent by {diff:e}"))?;
                worst = worst.max(diff);
            }
            prev = Some(t);
        }
    }
    Ok(format!("{} parameter points, leftDepth 1..6, max deviation {worst:.2e}", grid.len()))
}

fn random_seq(rng: &mut ChaCha8Rng) -> BiSeq {
    fn word(rng: &mut ChaCha8Rng, n: usize) -> Word {
        Word::new((0..n).map(|_| rng.random_range(0..2u8)).collect()).unwrap()
    }
    let z = match rng.random_range(0..4) {
        0 => {
            let (l, c, r) = (word(rng, 3), word(rng, 5), word(rng, 4));
            BiSeq::eventually_periodic(l, c, r, 0).unwrap()
        }
        1 => BiSeq::thue_morse(),
        2 => BiSeq::toeplitz(vec![3, 4, 3, 5, 3, 3], 6).unwrap(),
        _ => BiSeq::periodic(&word(rng, 7)).unwrap(),
    };
    z.shift(rng.random_range(-50..50))
}

fn c9_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6d73);
    let q = Num::Exact(rat(1, 2));
    let mut cocycle_failures = 0;
    for _ in 0..1000 {
        let z = random_seq(&mut rng);
        let pair = (rng.random_range(-200..200), rng.random_range(-200..200));
        cocycle_failures += check_cocycle_identity(&z, &[pair], &q, Exec::Sequential).failures;
    }
    let p = derive(5, 3, Beta::Affine(rat(1, 2))).map_err(|e| e.to_string())?;
    let lambda = p.lambda.clone().unwrap();
    let mut transport_failures = 0;
    for _ in 0..100 {
        let z = random_seq(&mut rng);
        let m = nu_aperiodic_truncated(&z, &p, rng.random_range(0..40)).map_err(|e| e.to_string())?;
        transport_failures += atom_transport_failures(&m.measure, &z, m.first_index, &lambda, p.q.as_ref().unwrap());
    }
    let mut group_failures = 0;
    for _ in 0..1000 {
        let z = random_seq(&mut rng);
        let (a, b) = (rng.random_range(-1000..1000i64), rng.random_range(-1000..1000i64));
        let j = rng.random_range(-100..100i64);
        let composed = z.shift(a).shift(b);
        let direct = z.shift(a + b);
        if composed.coord(j) != direct.coord(j) || composed.coord(j) != z.coord(j + a + b) || !z.shift(a).shift(-a).same_point(&z, 64) {
            group_failures += 1;
        }
    }
    let total = cocycle_failures + transport_failures + group_failures;
    ensure(total == 0, || format!("failures: cocycle {cocycle_failures}, transport {transport_failures}, group {group_failures}"))?;
    Ok("1000 cocycle pairs, 100 orbit measures, 1000 shift compositions: zero failures".into())
}

/// Name, check, and time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("1 PF-equation suite", c1_pf_suite, Some(5)),
        ("2 quasi-invariance suite", c2_quasi_invariance, Some(5)),
        ("3 exact Toeplitz identities", c3_toeplitz, Some(2)),
        ("4 Thue-Morse bound", c4_thue_morse, Some(2)),
        ("5 coboundary witness", c5_coboundary, Some(30)),
        ("6 classifier table", c6_classifier, None),
        ("7 tail-boundary oracles", c7_tail, Some(2)),
        ("8 extension consistency", c8_extension, None),
        ("9 property sweeps", c9_properties, None),
    ];
    let mut failed = Vec::new();
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let (Ok(msg), Some(secs)) = (&outcome, limit) {
            if elapsed > Duration::from_secs(secs) {
                outcome = Err(format!("{msg}; took {elapsed:.2?}, limit {secs} s"));
            }
        }
        let line = match outcome {
            Ok(msg) => format!("PASS criterion {name} [{elapsed:.2?}]: {msg}\n"),
            Err(msg) => {
                failed.push(name);
                format!("FAIL criterion {name} [{elapsed:.2?}]: {msg}\n")
            }
        };
        // bypass libtest capture so the report shows in a plain `cargo test`
        let _ = std::io::stderr().write_all(line.as_bytes());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
