//! End-to-end acceptance checks. Prints one line per criterion and fails if
//! any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distmu_core::automaton::{Automaton, Trace};
use distmu_core::fixtures;
use distmu_core::gen;
use distmu_core::graph::{enumerate_digraphs, random_digraph, Digraph, PointedDigraph};
use distmu_core::harness::{
    bisim_invariance_check, equiv_exhaustive, equiv_sampled, sample_digraphs, BisimVerdict, Device,
    EquivVerdict,
};
use distmu_core::logic::{approximants, lfp, MuSystem};
use distmu_core::runtime::{
    async_step, check_consistency, default_budget, sync_step, Activation, Consistency,
    TimingWitness, DEFAULT_STARVATION_BOUND,
};
use distmu_core::transform::{automaton_to_formula, compute_enables, formula_to_automaton};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const SEED_FORMULAS: [(&str, &str); 3] = [
    ("grounded", fixtures::GROUNDED_FORMULA),
    ("reach", "(mu ((X0 (or (p 0) (dia (var X0))))))"),
    ("box-pair", "(mu ((X0 (box (var Y))) (Y (p 0))))"),
];

fn seed_systems() -> Vec<(&'static str, MuSystem)> {
    SEED_FORMULAS
        .iter()
        .map(|&(name, text)| {
            (
                name,
                MuSystem::parse_with_bits(text, 1).expect("seed formula parses"),
            )
        })
        .collect()
}

fn expect_equivalent(what: &str, v: EquivVerdict) -> Result<u64, String> {
    match v {
        EquivVerdict::Equivalent { instances } => Ok(instances),
        other => Err(format!("{what}: {}", other.to_json())),
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let spent = start.elapsed();
    if spent > limit {
        Err(format!("{what} took {spent:.1?}, over {limit:?}"))
    } else {
        Ok(())
    }
}

fn grounded_equivalence() -> Outcome {
    let start = Instant::now();
    let a = Device::Automaton(fixtures::grounded_automaton());
    let f = Device::Formula(fixtures::grounded_formula());
    let n = expect_equivalent(
        "grounded",
        equiv_exhaustive(&a, &f, 3).map_err(|e| e.to_string())?,
    )?;
    within(start, Duration::from_secs(60), "exhaustive check")?;
    Ok(format!("{n} pointed digraphs, {:.1?}", start.elapsed()))
}

fn compile_up_round_trip() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for (name, sys) in seed_systems() {
        let a = formula_to_automaton(&sys).map_err(|e| e.to_string())?;
        if !a.is_quasi_acyclic().map_err(|e| e.to_string())? {
            return Err(format!("{name}: compiled automaton has a cycle"));
        }
        let v = equiv_exhaustive(&Device::Formula(sys), &Device::Automaton(a), 3)
            .map_err(|e| e.to_string())?;
        total += expect_equivalent(name, v)?;
    }
    within(start, Duration::from_secs(120), "round trip")?;
    Ok(format!(
        "3 formulas, {total} pointed digraphs, {:.1?}",
        start.elapsed()
    ))
}

fn compile_down_round_trip() -> Outcome {
    let start = Instant::now();
    let a = fixtures::grounded_automaton();
    let f = automaton_to_formula(&a).map_err(|e| e.to_string())?;
    let (da, df) = (Device::Automaton(a), Device::Formula(f));
    let n1 = expect_equivalent(
        "exhaustive",
        equiv_exhaustive(&da, &df, 2).map_err(|e| e.to_string())?,
    )?;
    let n2 = expect_equivalent(
        "sampled",
        equiv_sampled(&da, &df, 4, 500, 0).map_err(|e| e.to_string())?,
    )?;
    within(start, Duration::from_secs(120), "compile-down check")?;
    Ok(format!(
        "{n1} exhaustive + {n2} sampled pointed digraphs, {:.1?}",
        start.elapsed()
    ))
}

fn asynchrony_fuzz() -> Outcome {
    let start = Instant::now();
    let mut automata: Vec<(String, Automaton)> =
        vec![("grounded".into(), fixtures::grounded_automaton())];
    for (name, sys) in seed_systems() {
        automata.push((
            format!("compiled {name}"),
            formula_to_automaton(&sys).map_err(|e| e.to_string())?,
        ));
    }
    let graphs: Vec<Digraph> = sample_digraphs(5, 1, 50, 7).collect();
    for (name, a) in &automata {
        for (i, g) in graphs.iter().enumerate() {
            let budget = default_budget(g, DEFAULT_STARVATION_BOUND);
            let c =
                check_consistency(a, g, 100, false, i as u64, budget).map_err(|e| e.to_string())?;
            if let Consistency::Inconsistent { node, .. } = c {
                return Err(format!(
                    "{name}: timing-dependent verdict on graph {i} at {}",
                    g.node_id(node)
                ));
            }
        }
    }
    let lockstep = fixtures::lockstep_automaton();
    let cycle = Digraph::from_json(
        r#"{"bits":1,"nodes":["u","v"],"labels":{"u":"0","v":"0"},"edges":[["u","v"],["v","u"]]}"#,
    )
    .expect("valid graph");
    let budget = default_budget(&cycle, DEFAULT_STARVATION_BOUND);
    match check_consistency(&lockstep, &cycle, 100, false, 0, budget).map_err(|e| e.to_string())? {
        Consistency::Inconsistent {
            node,
            second: (TimingWitness::Sampled { seed, .. }, verdict),
            ..
        } => {
            within(start, Duration::from_secs(120), "fuzzing")?;
            Ok(format!(
                "4 automata x 50 graphs x 100 timings consistent; lockstep automaton flips to {verdict} at {} (timing seed {seed}), {:.1?}",
                cycle.node_id(node),
                start.elapsed()
            ))
        }
        other => Err(format!("lockstep automaton not caught: {other:?}")),
    }
}

fn bisimulation_invariance() -> Outcome {
    let a = fixtures::grounded_automaton();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut passed = 0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=4);
        let g = random_digraph(&mut rng, m, 1, 0.5);
        let p = PointedDigraph::at(g, rng.gen_range(0..m));
        let mut ok = true;
        for depth in [1, 2] {
            let v = bisim_invariance_check(&a, &p, depth).map_err(|e| e.to_string())?;
            if v != BisimVerdict::Pass {
                println!("    depth {depth}: {v:?}");
                ok = false;
            }
        }
        passed += ok as usize;
    }
    if passed == 100 {
        Ok("100/100 pointed digraphs at depths 1 and 2".into())
    } else {
        Err(format!("{passed}/100 passed"))
    }
}

fn structural_bounds() -> Outcome {
    let mut systems: Vec<MuSystem> = seed_systems().into_iter().map(|(_, s)| s).collect();
    let down = automaton_to_formula(&fixtures::grounded_automaton()).map_err(|e| e.to_string())?;
    let mut instances = 0;
    let mut check = |sys: &MuSystem, g: &Digraph| -> Result<(), String> {
        let fp = lfp(sys, g).map_err(|e| e.to_string())?;
        let bound = sys.var_count() * g.node_count() + 1;
        instances += 1;
        if fp.iterations > bound {
            return Err(format!(
                "{} iterations on {}, bound {bound}",
                fp.iterations,
                g.to_json()
            ));
        }
        Ok(())
    };
    for g in enumerate_digraphs(3, 1) {
        for sys in &systems {
            check(sys, &g)?;
        }
    }
    for g in enumerate_digraphs(2, 1).chain(sample_digraphs(4, 1, 500, 0)) {
        check(&down, &g)?;
    }
    systems.clear();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut automata = vec![fixtures::lockstep_automaton()];
    while automata.len() < 50 {
        let size = rng.gen_range(1..=4);
        let a = gen::random_automaton(&mut rng, 1, size, true);
        if a.traces().map_err(|e| e.to_string())?.len() <= 6 {
            automata.push(a);
        }
    }
    for a in &automata {
        let es = compute_enables(a).map_err(|e| e.to_string())?;
        let t = es.traces().len();
        if es.iterations_used > t << t {
            return Err(format!("{} rounds for {t} traces", es.iterations_used));
        }
    }

    for i in 0..1000 {
        let bits = rng.gen_range(1..=2);
        let size = rng.gen_range(1..=3);
        let sys = gen::random_system(&mut rng, bits, size, 3);
        let m = rng.gen_range(1..=5);
        let g = random_digraph(&mut rng, m, bits, 0.4);
        let chain = approximants(&sys, &g).map_err(|e| e.to_string())?;
        if !chain.windows(2).all(|w| w[0].is_subset(&w[1])) {
            return Err(format!("approximant chain {i} is not monotone: {sys}"));
        }
    }
    Ok(format!(
        "{instances} fixpoints within bound, {} closures within bound, 1000 monotone chains",
        automata.len()
    ))
}

fn trace_laws(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let law = |ok: bool, name: &str| {
        if ok {
            Ok(())
        } else {
            Err(format!("law {name} fails"))
        }
    };
    for _ in 0..200 {
        let n = rng.gen_range(2..6);
        let q = rng.gen_range(0..n);
        let size = rng.gen_range(1..5);
        let sigma = gen::random_trace(rng, n, size);
        let single = Trace::singleton(q);
        // q σ: prepend q when it differs from σ's first state
        let mut front = vec![q];
        front.extend(sigma.states().iter().copied().skip_while(|&s| s == q));
        let q_sigma = Trace::from_states(front).expect("no repeats");
        let sigma_q = sigma.push_last(q);
        let other = (q + 1) % n;

        law(single.first() == q, "[q].first = q")?;
        law(q_sigma.first() == q, "(q σ).first = q")?;
        law(single.last() == q, "[q].last = q")?;
        law(sigma_q.last() == q, "(σ q).last = q")?;
        law(sigma_q.push_last(q) == sigma_q, "(σ q).pushlast(q) = σ q")?;
        let mut longer = sigma_q.states().to_vec();
        longer.push(other);
        law(
            sigma_q.push_last(other).states() == longer.as_slice(),
            "(σ q).pushlast(q') = σ q q'",
        )?;
        law(single.pop_first() == single, "[q].popfirst = [q]")?;
        if q_sigma.len() > 1 {
            law(
                q_sigma.pop_first().states() == &q_sigma.states()[1..],
                "(q σ).popfirst = σ",
            )?;
        }
    }
    Ok(())
}

fn operator_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    trace_laws(&mut rng)?;

    for i in 0..200 {
        let size = rng.gen_range(1..=6);
        let a = gen::random_automaton(&mut rng, 1, size, i % 2 == 0);
        let m = rng.gen_range(1..=5);
        let g = random_digraph(&mut rng, m, 1, 0.4);
        let c = gen::random_sync_configuration(&mut rng, &a, &g);
        let s = sync_step(&a, &g, &c).map_err(|e| e.to_string())?;
        let t = async_step(&a, &g, &c, &Activation::all(&g)).map_err(|e| e.to_string())?;
        if s != t {
            return Err(format!("collapse fails on triple {i}"));
        }
    }

    for i in 0..200 {
        let size = rng.gen_range(1..=6);
        let a = gen::random_automaton(&mut rng, 1, size, true);
        let m = rng.gen_range(1..=5);
        let g = random_digraph(&mut rng, m, 1, 0.4);
        let c = gen::random_quiescent_configuration(&mut rng, &a, &g);
        if !c.is_quiescent(&a, &g) {
            return Err(format!("generated configuration {i} is not quiescent"));
        }
        for _ in 0..5 {
            let act = gen::random_activation(&mut rng, &g, 0.5);
            if async_step(&a, &g, &c, &act).map_err(|e| e.to_string())? != c {
                return Err(format!("quiescent configuration {i} moved"));
            }
        }
    }
    Ok("8 trace laws, 200 collapse triples, 200 quiescent configurations".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        (
            "grounded automaton = grounded formula, all digraphs up to 3 nodes",
            grounded_equivalence,
        ),
        ("formula -> automaton round trip", compile_up_round_trip),
        ("automaton -> formula round trip", compile_down_round_trip),
        ("timing independence fuzz", asynchrony_fuzz),
        (
            "invariance under backward unraveling",
            bisimulation_invariance,
        ),
        ("structural bounds", structural_bounds),
        ("trace and step laws", operator_laws),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
