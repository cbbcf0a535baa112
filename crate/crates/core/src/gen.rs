//! Random instances for property tests and fuzzing.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::automaton::{Automaton, Guard, Rule, StateIx, StateSet, Trace};
use crate::graph::Digraph;
use crate::logic::{ModalFormula, MuSystem};
use crate::runtime::{sync_step, Activation, Configuration};

fn random_state_set<R: Rng + ?Sized>(rng: &mut R, n: usize) -> StateSet {
    (0..n).filter(|_| rng.gen_bool(0.5)).collect()
}

fn random_guard<R: Rng + ?Sized>(rng: &mut R, n: usize, depth: usize) -> Guard {
    let leaf = depth == 0 || rng.gen_bool(0.5);
    if leaf {
        return if rng.gen_bool(0.5) {
            Guard::SubsetEq(random_state_set(rng, n))
        } else {
            Guard::SupsetEq(random_state_set(rng, n))
        };
    }
    match rng.gen_range(0..3) {
        0 => Guard::Not(Box::new(random_guard(rng, n, depth - 1))),
        1 => Guard::And(
            (0..rng.gen_range(0..3))
                .map(|_| random_guard(rng, n, depth - 1))
                .collect(),
        ),
        _ => Guard::Or(
            (0..rng.gen_range(0..3))
                .map(|_| random_guard(rng, n, depth - 1))
                .collect(),
        ),
    }
}

/// A random automaton with `states` states. With `quasi_acyclic`, every
/// rule of state `q` targets some state `≥ q`, so the diagram has no cycles
/// besides self-loops.
pub fn random_automaton<R: Rng + ?Sized>(
    rng: &mut R,
    bits: usize,
    states: usize,
    quasi_acyclic: bool,
) -> Automaton {
    assert!(states > 0);
    let names = (0..states).map(|i| format!("s{i}")).collect();
    let init = (0..1usize << bits)
        .map(|_| rng.gen_range(0..states))
        .collect();
    let target = |rng: &mut R, q: StateIx| {
        if quasi_acyclic {
            rng.gen_range(q..states)
        } else {
            rng.gen_range(0..states)
        }
    };
    let rules = (0..states)
        .map(|q| {
            let mut list: Vec<Rule> = (0..rng.gen_range(0..4))
                .map(|_| {
                    let g = random_guard(rng, states, 2);
                    Rule::when(g, target(rng, q))
                })
                .collect();
            list.push(Rule::otherwise(target(rng, q)));
            list
        })
        .collect();
    let accepting = (0..states).map(|_| rng.gen_bool(0.3)).collect();
    Automaton::new(bits, names, init, rules, accepting).expect("generated automata are valid")
}

fn random_body<R: Rng + ?Sized>(
    rng: &mut R,
    bits: usize,
    vars: usize,
    depth: usize,
) -> ModalFormula {
    if depth == 0 || rng.gen_bool(0.3) {
        let mut leaves = vec![ModalFormula::True, ModalFormula::False];
        leaves.extend((0..vars).map(ModalFormula::Var));
        leaves.extend((0..vars).map(ModalFormula::Var));
        for i in 0..bits {
            leaves.push(ModalFormula::Const(i));
            leaves.push(ModalFormula::NegConst(i));
        }
        return leaves.choose(rng).expect("nonempty").clone();
    }
    let d = depth - 1;
    match rng.gen_range(0..4) {
        0 => ModalFormula::or(
            random_body(rng, bits, vars, d),
            random_body(rng, bits, vars, d),
        ),
        1 => ModalFormula::and(
            random_body(rng, bits, vars, d),
            random_body(rng, bits, vars, d),
        ),
        2 => ModalFormula::dia(random_body(rng, bits, vars, d)),
        _ => ModalFormula::boxed(random_body(rng, bits, vars, d)),
    }
}

/// A random system with `vars` variables named `X0..` and bodies of depth at
/// most `depth`.
pub fn random_system<R: Rng + ?Sized>(
    rng: &mut R,
    bits: usize,
    vars: usize,
    depth: usize,
) -> MuSystem {
    assert!(vars > 0);
    let names = (0..vars).map(|j| format!("X{j}")).collect();
    let bodies = (0..vars)
        .map(|_| random_body(rng, bits, vars, depth))
        .collect();
    MuSystem::new(bits, names, bodies).expect("generated systems are valid")
}

/// A sequence of `len` states from `0..states` with no two consecutive ones
/// equal. Needs `states ≥ 2` when `len > 1`.
pub fn random_trace<R: Rng + ?Sized>(rng: &mut R, states: usize, len: usize) -> Trace {
    let mut seq = vec![rng.gen_range(0..states)];
    while seq.len() < len {
        let last = *seq.last().expect("nonempty");
        let next = (last + rng.gen_range(1..states)) % states;
        seq.push(next);
    }
    Trace::from_states(seq).expect("no repeats")
}

/// Random node states and arbitrary buffer contents of length up to
/// `max_buffer`.
pub fn random_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Automaton,
    g: &Digraph,
    max_buffer: usize,
) -> Configuration {
    let n = a.state_count();
    let node_state = (0..g.node_count()).map(|_| rng.gen_range(0..n)).collect();
    let buffer = g
        .edges()
        .iter()
        .map(|_| {
            let len = if n < 2 {
                1
            } else {
                rng.gen_range(1..=max_buffer.max(1))
            };
            random_trace(rng, n, len)
        })
        .collect();
    Configuration { node_state, buffer }
}

/// Random node states with every buffer holding its source's state.
pub fn random_sync_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Automaton,
    g: &Digraph,
) -> Configuration {
    let node_state = (0..g.node_count())
        .map(|_| rng.gen_range(0..a.state_count()))
        .collect();
    Configuration::synchronous(g, node_state)
}

/// A quiescent configuration reached by running a quasi-acyclic automaton
/// synchronously from random node states. Every node's state only moves
/// forward along the diagram, so the run settles.
pub fn random_quiescent_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Automaton,
    g: &Digraph,
) -> Configuration {
    let mut c = random_sync_configuration(rng, a, g);
    loop {
        let next = sync_step(a, g, &c).expect("matching bit widths");
        if next == c {
            return c;
        }
        c = next;
    }
}

pub fn random_activation<R: Rng + ?Sized>(rng: &mut R, g: &Digraph, p: f64) -> Activation {
    Activation {
        nodes: (0..g.node_count()).map(|_| rng.gen_bool(p)).collect(),
        edges: (0..g.edge_count()).map(|_| rng.gen_bool(p)).collect(),
    }
}
