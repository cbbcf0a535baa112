//! Translations between the backward μ-fragment and quasi-acyclic
//! distributed automata.
//!
//! * [`formula_to_automaton`]: every node remembers which constants and
//!   variables it has verified so far; states only ever grow.
//! * [`automaton_to_formula`]: one variable per trace, tied together by the
//!   "enables" relation computed in [`compute_enables`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde_json::json;
use thiserror::Error;

use crate::automaton::{Automaton, AutomatonError, Guard, Rule, StateIx, StateSet, Trace};
use crate::graph::Label;
use crate::logic::{LogicError, ModalFormula, MuSystem, VarIx};

/// Largest number of atomic propositions (constants plus variables after
/// flattening) accepted by [`formula_to_automaton`].
pub const MAX_ATOMS: usize = 16;

/// Largest trace count accepted by [`compute_enables`].
pub const MAX_ENABLES_TRACES: usize = 24;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("formula is not flattened: a modal operator is applied to a non-variable")]
    NotFlattened,
    #[error("{atoms} atomic propositions exceed the limit of {limit}")]
    TooManyAtoms { atoms: usize, limit: usize },
    #[error("{traces} traces exceed the limit of {limit}")]
    TooManyTraces { traces: usize, limit: usize },
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Rewrites `sys` so that every modal operator is applied directly to a
/// variable. Each modal subformula `◇̄ψ` or `□̄ψ` with `ψ` not a variable
/// gets a fresh variable `Y` with body `ψ` and becomes `◇̄Y` or `□̄Y`.
/// Fresh variables are appended, so the first variable is unchanged.
pub fn flatten(sys: &MuSystem) -> MuSystem {
    let mut vars = sys.vars().to_vec();
    let mut bodies = sys.bodies().to_vec();
    let mut used: HashSet<String> = vars.iter().cloned().collect();
    let mut counter = 0;
    let mut fresh = |vars: &mut Vec<String>| -> VarIx {
        loop {
            let name = format!("Y{counter}");
            counter += 1;
            if used.insert(name.clone()) {
                vars.push(name);
                return vars.len() - 1;
            }
        }
    };

    fn lift(
        f: ModalFormula,
        vars: &mut Vec<String>,
        pending: &mut Vec<ModalFormula>,
        fresh: &mut dyn FnMut(&mut Vec<String>) -> VarIx,
    ) -> ModalFormula {
        use ModalFormula as F;
        let dia = matches!(f, F::BackDia(_));
        match f {
            F::Or(a, b) => F::or(
                lift(*a, vars, pending, fresh),
                lift(*b, vars, pending, fresh),
            ),
            F::And(a, b) => F::and(
                lift(*a, vars, pending, fresh),
                lift(*b, vars, pending, fresh),
            ),
            F::BackDia(a) | F::BackBox(a) if !matches!(*a, F::Var(_)) => {
                let y = fresh(vars);
                pending.push(*a);
                if dia {
                    F::dia(F::Var(y))
                } else {
                    F::boxed(F::Var(y))
                }
            }
            other => other,
        }
    }

    let mut i = 0;
    while i < bodies.len() {
        let body = std::mem::replace(&mut bodies[i], ModalFormula::False);
        let mut pending = Vec::new();
        bodies[i] = lift(body, &mut vars, &mut pending, &mut fresh);
        bodies.extend(pending);
        i += 1;
    }
    MuSystem::new(sys.bits(), vars, bodies).expect("flattening preserves well-formedness")
}

/// Whether every modal operator in `f` is applied directly to a variable.
pub fn is_flat(f: &ModalFormula) -> bool {
    let mut flat = true;
    f.visit(&mut |g| {
        if let ModalFormula::BackDia(a) | ModalFormula::BackBox(a) = g {
            flat &= matches!(**a, ModalFormula::Var(_));
        }
    });
    flat
}

/// A set of atomic propositions: constants `pᵢ` (bit `i` of `consts`) and
/// variables `Xⱼ` (bit `j` of `vars`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomSet {
    pub consts: u64,
    pub vars: u64,
}

impl AtomSet {
    pub fn has_const(&self, i: usize) -> bool {
        self.consts >> i & 1 == 1
    }

    pub fn has_var(&self, j: VarIx) -> bool {
        self.vars >> j & 1 == 1
    }
}

/// Evaluates a flat formula at a node that satisfies exactly the atoms in
/// `own` and whose incoming neighbors satisfy exactly the atom sets in
/// `received`.
pub fn shallow_sat(
    f: &ModalFormula,
    own: AtomSet,
    received: &[AtomSet],
) -> Result<bool, TransformError> {
    use ModalFormula as F;
    Ok(match f {
        F::False => false,
        F::True => true,
        F::Const(i) => own.has_const(*i),
        F::NegConst(i) => !own.has_const(*i),
        F::Var(j) => own.has_var(*j),
        F::Or(a, b) => shallow_sat(a, own, received)? || shallow_sat(b, own, received)?,
        F::And(a, b) => shallow_sat(a, own, received)? && shallow_sat(b, own, received)?,
        F::BackDia(a) => match **a {
            F::Var(j) => received.iter().any(|s| s.has_var(j)),
            _ => return Err(TransformError::NotFlattened),
        },
        F::BackBox(a) => match **a {
            F::Var(j) => received.iter().all(|s| s.has_var(j)),
            _ => return Err(TransformError::NotFlattened),
        },
    })
}

/// A guard with constants folded away.
#[derive(Debug, Clone)]
enum Folded {
    Const(bool),
    Guard(Guard),
}

impl Folded {
    fn not(self) -> Folded {
        match self {
            Folded::Const(b) => Folded::Const(!b),
            Folded::Guard(Guard::Not(g)) => Folded::Guard(*g),
            Folded::Guard(g) => Folded::Guard(Guard::Not(Box::new(g))),
        }
    }

    fn join(items: Vec<Folded>, conj: bool) -> Folded {
        let mut guards = Vec::new();
        for f in items {
            match f {
                Folded::Const(b) if b == conj => {}
                Folded::Const(b) => return Folded::Const(b),
                Folded::Guard(g) => guards.push(g),
            }
        }
        match guards.len() {
            0 => Folded::Const(conj),
            1 => Folded::Guard(guards.pop().unwrap()),
            _ if conj => Folded::Guard(Guard::And(guards)),
            _ => Folded::Guard(Guard::Or(guards)),
        }
    }
}

/// Builds the quasi-acyclic automaton whose states are the sets of atomic
/// propositions of the flattened system.
///
/// A node starts with the constants its label sets and, on each
/// transition, adds every variable whose body holds given its own state and
/// the received states. It accepts once it holds the first variable.
///
/// Each state's rules form an exact case split over the bodies that are
/// not already decided by the state itself: `◇̄Xⱼ` becomes
/// `¬(N ⊆ {s : Xⱼ ∉ s})` and `□̄Xⱼ` becomes `N ⊆ {s : Xⱼ ∈ s}`.
pub fn formula_to_automaton(sys: &MuSystem) -> Result<Automaton, TransformError> {
    let flat = flatten(sys);
    let bits = flat.bits();
    let k = flat.var_count();
    let atoms = bits + k;
    if atoms > MAX_ATOMS {
        return Err(TransformError::TooManyAtoms {
            atoms,
            limit: MAX_ATOMS,
        });
    }
    let n_states = 1usize << atoms;
    let var_bit = |j: VarIx| 1usize << (bits + j);
    let with_var: Vec<StateSet> = (0..k)
        .map(|j| (0..n_states).filter(|s| s & var_bit(j) != 0).collect())
        .collect();
    let without_var: Vec<StateSet> = (0..k)
        .map(|j| (0..n_states).filter(|s| s & var_bit(j) == 0).collect())
        .collect();

    let compile = |f: &ModalFormula, q: usize| -> Folded {
        fn go(
            f: &ModalFormula,
            q: usize,
            bits: usize,
            with_var: &[StateSet],
            without_var: &[StateSet],
        ) -> Folded {
            use ModalFormula as F;
            match f {
                F::False => Folded::Const(false),
                F::True => Folded::Const(true),
                F::Const(i) => Folded::Const(q >> i & 1 == 1),
                F::NegConst(i) => Folded::Const(q >> i & 1 == 0),
                F::Var(j) => Folded::Const(q >> (bits + j) & 1 == 1),
                F::Or(a, b) | F::And(a, b) => Folded::join(
                    vec![
                        go(a, q, bits, with_var, without_var),
                        go(b, q, bits, with_var, without_var),
                    ],
                    matches!(f, F::And(..)),
                ),
                F::BackDia(a) => match **a {
                    F::Var(j) => Folded::Guard(Guard::SubsetEq(without_var[j].clone())).not(),
                    _ => unreachable!("flattened"),
                },
                F::BackBox(a) => match **a {
                    F::Var(j) => Folded::Guard(Guard::SubsetEq(with_var[j].clone())),
                    _ => unreachable!("flattened"),
                },
            }
        }
        go(f, q, bits, &with_var, &without_var)
    };

    let mut rules = Vec::with_capacity(n_states);
    for q in 0..n_states {
        let mut always = q;
        let mut open: Vec<(usize, Guard)> = Vec::new();
        for j in 0..k {
            if q & var_bit(j) != 0 {
                continue;
            }
            match compile(&flat.bodies()[j], q) {
                Folded::Const(true) => always |= var_bit(j),
                Folded::Const(false) => {}
                Folded::Guard(g) => open.push((var_bit(j), g)),
            }
        }
        let mut list = Vec::new();
        for choice in (1..1usize << open.len()).rev() {
            let parts = open
                .iter()
                .enumerate()
                .map(|(i, (_, g))| {
                    let g = Folded::Guard(g.clone());
                    if choice >> i & 1 == 1 {
                        g
                    } else {
                        g.not()
                    }
                })
                .collect();
            let target = open
                .iter()
                .enumerate()
                .filter(|(i, _)| choice >> i & 1 == 1)
                .fold(always, |acc, (_, (bit, _))| acc | bit);
            match Folded::join(parts, true) {
                Folded::Const(false) => {}
                Folded::Const(true) => unreachable!("open guards are not constant"),
                Folded::Guard(g) => list.push(Rule::when(g, target)),
            }
        }
        list.push(Rule::otherwise(always));
        rules.push(list);
    }

    let names: Vec<String> = (0..n_states)
        .map(|s| {
            let mut parts: Vec<String> = (0..bits)
                .filter(|i| s >> i & 1 == 1)
                .map(|i| format!("p{i}"))
                .collect();
            parts.extend(
                (0..k)
                    .filter(|&j| s & var_bit(j) != 0)
                    .map(|j| flat.vars()[j].clone()),
            );
            format!("{{{}}}", parts.join(","))
        })
        .collect();
    let init = (0..1usize << bits)
        .map(|w| {
            let label = Label::from_index(w, bits);
            (0..bits)
                .filter(|&i| label.bit(i))
                .fold(0, |acc, i| acc | 1 << i)
        })
        .collect();
    let accepting = (0..n_states).map(|s| s & var_bit(0) != 0).collect();
    Ok(Automaton::new(bits, names, init, rules, accepting)?)
}

/// The inductively computed "enables" relation `H ⊢ t` of an automaton.
///
/// `H ⊢ t` says that a node can traverse `t` while its incoming neighbors
/// are seen traversing exactly the traces in `H`, without message loss.
#[derive(Debug, Clone)]
pub struct EnablesSet {
    traces: Vec<Trace>,
    /// `H` (bitmask over `traces`) to the set of enabled traces (bitmask).
    closure: BTreeMap<u64, u64>,
    /// Rounds of the inductive clause until nothing new was derived.
    pub iterations_used: usize,
}

impl EnablesSet {
    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn trace_index(&self, t: &Trace) -> Option<usize> {
        self.traces.iter().position(|x| x == t)
    }

    fn mask_of(&self, h: &[Trace]) -> Option<u64> {
        h.iter()
            .try_fold(0u64, |m, t| self.trace_index(t).map(|i| m | 1 << i))
    }

    /// Whether `H ⊢ t`.
    pub fn contains(&self, h: &[Trace], t: &Trace) -> bool {
        match (self.mask_of(h), self.trace_index(t)) {
            (Some(h), Some(t)) => self.closure.get(&h).is_some_and(|ts| ts >> t & 1 == 1),
            _ => false,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.closure.values().map(|t| t.count_ones() as usize).sum()
    }

    /// Every pair `(H, t)` as trace indices, in a deterministic order.
    pub fn pairs(&self) -> impl Iterator<Item = (Vec<usize>, usize)> + '_ {
        self.closure.iter().flat_map(|(&h, &ts)| {
            let members = bits_of(h);
            bits_of(ts).into_iter().map(move |t| (members.clone(), t))
        })
    }

    /// For each trace index, the `H` sets that enable it.
    pub fn enablers(&self) -> Vec<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); self.traces.len()];
        for (&h, &ts) in &self.closure {
            let members = bits_of(h);
            for t in bits_of(ts) {
                out[t].push(members.clone());
            }
        }
        out
    }

    /// One JSON object per line: `{"H": [[...], ...], "t": [...]}`.
    pub fn to_jsonl(&self, a: &Automaton) -> String {
        let mut out = String::new();
        for (h, t) in self.pairs() {
            let hs: Vec<Vec<&str>> = h.iter().map(|&i| a.trace_names(&self.traces[i])).collect();
            let line = json!({ "H": hs, "t": a.trace_names(&self.traces[t]) });
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

fn bits_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Computes `⊢` as a least closure.
///
/// Base pairs: `N ⊢ q.pushlast(δ(q, N))` for every state `q` and every
/// `N ⊆ Q`, with `N` read as a set of one-state traces. Inductive clause:
/// from `H ⊢ t` and `H ⇝ H'` derive `H' ⊢ t.pushlast(δ(t.last, H'.last))`,
/// where `H ⇝ H'` means every member of `H` is extended by at most one
/// state into `H'` and every member of `H'` arises that way.
pub fn compute_enables(a: &Automaton) -> Result<EnablesSet, TransformError> {
    let traces = a.traces()?;
    if traces.len() > MAX_ENABLES_TRACES {
        return Err(TransformError::TooManyTraces {
            traces: traces.len(),
            limit: MAX_ENABLES_TRACES,
        });
    }
    let index: HashMap<&Trace, usize> = traces.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let singleton: Vec<usize> = (0..a.state_count())
        .map(|q| index[&Trace::singleton(q)])
        .collect();
    let last: Vec<StateIx> = traces.iter().map(Trace::last).collect();
    // cover[τ]: τ itself and its one-state extensions
    let mut cover: Vec<u64> = (0..traces.len()).map(|i| 1 << i).collect();
    let mut child: HashMap<(usize, StateIx), usize> = HashMap::new();
    for (i, t) in traces.iter().enumerate() {
        if let Some(p) = t.parent() {
            let p = index[&p];
            cover[p] |= 1 << i;
            child.insert((p, t.last()), i);
        }
    }
    let extend = |t: usize, q: StateIx| -> usize {
        if last[t] == q {
            t
        } else {
            child[&(t, q)]
        }
    };
    let mut delta_memo: HashMap<(StateIx, u64), StateIx> = HashMap::new();
    let mut delta = |q: StateIx, states: u64| -> StateIx {
        *delta_memo
            .entry((q, states))
            .or_insert_with(|| a.delta(q, &StateSet::from_mask(states)))
    };

    let mut closure: BTreeMap<u64, u64> = BTreeMap::new();
    let mut frontier: BTreeMap<u64, u64> = BTreeMap::new();
    for n in 0..(1u64 << a.state_count()) {
        let h = bits_of(n)
            .into_iter()
            .fold(0u64, |m, r| m | 1 << singleton[r]);
        for (q, &single) in singleton.iter().enumerate() {
            let t = extend(single, delta(q, n));
            let known = closure.entry(h).or_default();
            if *known >> t & 1 == 0 {
                *known |= 1 << t;
                *frontier.entry(h).or_default() |= 1 << t;
            }
        }
    }

    let mut rounds = 0;
    while !frontier.is_empty() {
        rounds += 1;
        let mut next: BTreeMap<u64, u64> = BTreeMap::new();
        for (&h, &fresh) in &frontier {
            let members = bits_of(h);
            let candidates = members.iter().fold(0u64, |m, &i| m | cover[i]);
            for h2 in submasks(candidates) {
                if !members.iter().all(|&i| h2 & cover[i] != 0) {
                    continue;
                }
                let lasts = bits_of(h2).into_iter().fold(0u64, |m, i| m | 1 << last[i]);
                for t in bits_of(fresh) {
                    let t2 = extend(t, delta(last[t], lasts));
                    let known = closure.entry(h2).or_default();
                    if *known >> t2 & 1 == 0 {
                        *known |= 1 << t2;
                        *next.entry(h2).or_default() |= 1 << t2;
                    }
                }
            }
        }
        frontier = next;
    }

    Ok(EnablesSet {
        traces,
        closure,
        iterations_used: rounds,
    })
}

/// All submasks of `mask`, including `0` and `mask` itself.
fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & mask)
        };
        Some(cur)
    })
}

/// Name of the variable standing for trace `t`.
fn trace_var_name(a: &Automaton, t: &Trace, i: usize, plain: bool) -> String {
    if plain {
        format!("X[{}]", a.trace_names(t).join("."))
    } else {
        format!("T{i}")
    }
}

/// Builds the μ-fragment system with one variable per trace.
///
/// * `X₀ = ⋁ { X_t : t.last accepting }`
/// * `X_[q] = ⋁ { label literals of w : init(w) = q }`
/// * `X_t = X_[t.first] ∧ ⋁_{H ⊢ t} ((⋀_{τ∈H} ◇̄X_τ) ∧ □̄ ⋁_{τ∈H} X_τ)` for
///   `|t| ≥ 2`
///
/// The result is equivalent to `a` when `a` is lossless-asynchronous. That
/// hypothesis is not checked.
pub fn automaton_to_formula(a: &Automaton) -> Result<MuSystem, TransformError> {
    let es = compute_enables(a)?;
    Ok(formula_from_enables(a, &es))
}

/// [`automaton_to_formula`] from a precomputed relation.
pub fn formula_from_enables(a: &Automaton, es: &EnablesSet) -> MuSystem {
    use ModalFormula as F;
    let traces = es.traces();
    let plain = a
        .states()
        .iter()
        .all(|s| !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || "().[];".contains(c)));
    let mut vars = vec!["X0".to_string()];
    vars.extend(
        traces
            .iter()
            .enumerate()
            .map(|(i, t)| trace_var_name(a, t, i, plain)),
    );
    let var = |i: usize| F::Var(i + 1);

    let mut bodies = Vec::with_capacity(traces.len() + 1);
    bodies.push(F::any_of(
        (0..traces.len())
            .filter(|&i| a.is_accepting(traces[i].last()))
            .map(var)
            .collect(),
    ));

    let bits = a.bits();
    let enablers = es.enablers();
    let singleton_var: HashMap<StateIx, usize> = traces
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() == 1)
        .map(|(i, t)| (t.first(), i))
        .collect();
    for (i, t) in traces.iter().enumerate() {
        let body = if t.len() == 1 {
            F::any_of(
                a.init_table()
                    .iter()
                    .enumerate()
                    .filter(|(_, &q)| q == t.first())
                    .map(|(w, _)| {
                        let label = Label::from_index(w, bits);
                        F::all_of(
                            (0..bits)
                                .map(|b| {
                                    if label.bit(b) {
                                        F::Const(b)
                                    } else {
                                        F::NegConst(b)
                                    }
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            )
        } else {
            let options = enablers[i]
                .iter()
                .map(|h| {
                    let seen = F::all_of(h.iter().map(|&j| F::dia(var(j))).collect());
                    let only = F::boxed(F::any_of(h.iter().map(|&j| var(j)).collect()));
                    if h.is_empty() {
                        only
                    } else {
                        F::and(seen, only)
                    }
                })
                .collect();
            F::and(var(singleton_var[&t.first()]), F::any_of(options))
        };
        bodies.push(body);
    }
    MuSystem::new(bits, vars, bodies).expect("constructed system is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::logic::lfp;

    #[test]
    fn flatten_nested_diamond() {
        let sys = MuSystem::parse("(mu ((X0 (dia (dia (var X0))))))").unwrap();
        let flat = flatten(&sys);
        assert_eq!(flat.vars(), ["X0", "Y0"]);
        use ModalFormula as F;
        assert_eq!(flat.bodies(), [F::dia(F::Var(1)), F::dia(F::Var(0))]);
    }

    #[test]
    fn flatten_box_of_constant() {
        let sys = MuSystem::parse("(mu ((X0 (box (p 0)))))").unwrap();
        let flat = flatten(&sys);
        use ModalFormula as F;
        assert_eq!(flat.bodies(), [F::boxed(F::Var(1)), F::Const(0)]);
    }

    #[test]
    fn flatten_leaves_flat_systems_alone() {
        let sys = fixtures::grounded_formula();
        assert_eq!(flatten(&sys), sys);
    }

    #[test]
    fn flatten_avoids_name_clashes() {
        let sys = MuSystem::parse("(mu ((Y0 (dia (box (var Y0))))))").unwrap();
        let flat = flatten(&sys);
        assert_eq!(flat.vars(), ["Y0", "Y1"]);
        assert!(flat.bodies().iter().all(is_flat));
    }

    #[test]
    fn shallow_sat_examples() {
        use ModalFormula as F;
        let x1 = 0;
        let x2 = 1;
        let atoms = |c: u64, v: u64| AtomSet { consts: c, vars: v };
        assert!(shallow_sat(&F::boxed(F::Var(x2)), atoms(0, 0), &[]).unwrap());
        let body = F::or(F::and(F::Const(0), F::Var(x2)), F::dia(F::Var(x1)));
        assert!(shallow_sat(&body, atoms(1, 1 << x2), &[]).unwrap());
        assert!(!shallow_sat(&F::dia(F::Var(x1)), atoms(0, 0), &[atoms(0, 1 << x2)]).unwrap());
        assert!(matches!(
            shallow_sat(&F::dia(F::Const(0)), atoms(0, 0), &[]),
            Err(TransformError::NotFlattened)
        ));
    }

    #[test]
    fn grounded_formula_automaton_shape() {
        let a = formula_to_automaton(&fixtures::grounded_formula()).unwrap();
        assert_eq!(a.state_count(), 8);
        assert_eq!(a.state_name(a.init(&Label::parse("1").unwrap())), "{p0}");
        assert_eq!(a.state_name(a.init(&Label::parse("0").unwrap())), "{}");
        let accepting: Vec<_> = (0..8).filter(|&q| a.is_accepting(q)).collect();
        assert_eq!(accepting.len(), 4);
        assert!(accepting.iter().all(|&q| a.state_name(q).contains("X1")));
        assert!(a.is_quasi_acyclic().unwrap());
        assert_eq!(a.delta_eval("{p0}", &[]).unwrap(), "{p0,X2}");
    }

    #[test]
    fn true_system_accepts_everything() {
        let sys = MuSystem::parse_with_bits("(mu ((X0 true)))", 1).unwrap();
        let a = formula_to_automaton(&sys).unwrap();
        assert_eq!(a.state_count(), 4);
        for q in 0..4 {
            for mask in 0..16 {
                let r = a.delta(q, &StateSet::from_mask(mask));
                assert!(a.is_accepting(r));
            }
        }
    }

    #[test]
    fn atom_guard() {
        let sys = MuSystem::parse_with_bits("(mu ((X0 true)))", 16).unwrap();
        assert!(matches!(
            formula_to_automaton(&sys),
            Err(TransformError::TooManyAtoms { atoms: 17, .. })
        ));
    }

    #[test]
    fn grounded_enables_examples() {
        let a = fixtures::grounded_automaton();
        let es = compute_enables(&a).unwrap();
        let t = |names: &[&str]| {
            Trace::from_states(names.iter().map(|n| a.state_index(n).unwrap()).collect()).unwrap()
        };
        assert!(es.contains(&[t(&["q4"]), t(&["q5"])], &t(&["q1", "q5"])));
        assert!(es.contains(&[], &t(&["q2", "q4"])));
        assert!(es.contains(&[t(&["q4"])], &t(&["q2", "q4"])));
        assert!(es.contains(&[t(&["q4", "q5"])], &t(&["q2", "q4", "q5"])));
        let n = es.traces().len();
        assert!(es.iterations_used <= n << n);
    }

    #[test]
    fn enables_jsonl_lines_parse() {
        let a = fixtures::lockstep_automaton();
        let es = compute_enables(&a).unwrap();
        let text = es.to_jsonl(&a);
        assert_eq!(text.lines().count(), es.pair_count());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["H"].is_array() && v["t"].is_array());
        }
    }

    #[test]
    fn single_state_automaton_to_formula() {
        let doc = |accepting: &str| {
            format!(
                r#"{{"bits":1,"states":["q"],"init":{{"0":"q","1":"q"}},"accepting":[{accepting}],
                    "rules":{{"q":[{{"guard":"else","to":"q"}}]}}}}"#
            )
        };
        let a = Automaton::from_json(&doc("\"q\"")).unwrap();
        let sys = automaton_to_formula(&a).unwrap();
        assert_eq!(sys.vars(), ["X0", "X[q]"]);
        for g in crate::graph::enumerate_digraphs(2, 1) {
            let fp = lfp(&sys, &g).unwrap();
            assert_eq!(fp.valuation.get(0).count_ones(..), g.node_count());
        }

        let a = Automaton::from_json(&doc("")).unwrap();
        let sys = automaton_to_formula(&a).unwrap();
        assert_eq!(sys.bodies()[0], ModalFormula::False);
    }

    #[test]
    fn submask_enumeration() {
        let subs: Vec<u64> = submasks(0b101).collect();
        assert_eq!(subs, [0b101, 0b100, 0b001, 0]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), [0]);
    }
}
