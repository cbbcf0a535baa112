//! Distributed automata: states, guarded transition rules, traces and the
//! state diagram.
//!
//! The transition function `δ: Q × P(Q) → Q` is stored per state as an
//! ordered rule list with first-match semantics. Every list ends in an
//! `else` rule, so `δ` is total.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::Label;

/// Index of a state within its automaton.
pub type StateIx = usize;

/// Largest state count for which `P(Q)` is enumerated.
pub const MAX_ENUMERABLE_STATES: usize = 20;

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("malformed automaton document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("automaton has no states")]
    NoStates,
    #[error("states[{index}]: duplicate state id {id:?}")]
    DuplicateState { index: usize, id: String },
    #[error("{context}: undeclared state {state:?}")]
    UndeclaredState { context: String, state: String },
    #[error("init not total: no entry for label {0:?}")]
    InitNotTotal(String),
    #[error("init: invalid label {0:?}")]
    InitLabel(String),
    #[error("δ not total at {0}")]
    NotTotal(String),
    #[error("rules.{state}[{index}]: else is only allowed as the final rule")]
    MisplacedElse { state: String, index: usize },
    #[error("rules.{state}[{index}]: invalid guard: {reason}")]
    BadGuard {
        state: String,
        index: usize,
        reason: String,
    },
    #[error("rules: entry for undeclared state {0:?}")]
    RulesForUnknownState(String),
    #[error("unknown state id {0:?}")]
    UnknownState(String),
    #[error("{count} states exceed the enumeration limit of {limit}")]
    TooManyStates { count: usize, limit: usize },
    #[error("automaton is not quasi-acyclic")]
    NotQuasiAcyclic,
}

/// A set of states, kept sorted and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateSet(Vec<StateIx>);

impl StateSet {
    pub fn new() -> Self {
        StateSet(Vec::new())
    }

    /// The set whose members are the set bits of `mask`.
    pub fn from_mask(mask: u64) -> Self {
        StateSet((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn contains(&self, q: StateIx) -> bool {
        self.0.binary_search(&q).is_ok()
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        if self.0.len() > other.0.len() {
            return false;
        }
        let mut rest = other.0.iter();
        'outer: for q in &self.0 {
            for r in rest.by_ref() {
                if r == q {
                    continue 'outer;
                }
                if r > q {
                    return false;
                }
            }
            return false;
        }
        true
    }

    pub fn insert(&mut self, q: StateIx) {
        if let Err(pos) = self.0.binary_search(&q) {
            self.0.insert(pos, q);
        }
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = StateIx> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[StateIx] {
        &self.0
    }
}

impl FromIterator<StateIx> for StateSet {
    fn from_iter<I: IntoIterator<Item = StateIx>>(iter: I) -> Self {
        let mut v: Vec<StateIx> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        StateSet(v)
    }
}

/// A boolean combination of inclusion tests on the received set `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Guard {
    /// `N ⊆ C`
    SubsetEq(StateSet),
    /// `C ⊆ N`
    SupsetEq(StateSet),
    Not(Box<Guard>),
    /// Conjunction; empty means true.
    And(Vec<Guard>),
    /// Disjunction; empty means false.
    Or(Vec<Guard>),
}

impl Guard {
    pub fn holds(&self, received: &StateSet) -> bool {
        match self {
            Guard::SubsetEq(c) => received.is_subset(c),
            Guard::SupsetEq(c) => c.is_subset(received),
            Guard::Not(g) => !g.holds(received),
            Guard::And(gs) => gs.iter().all(|g| g.holds(received)),
            Guard::Or(gs) => gs.iter().any(|g| g.holds(received)),
        }
    }

    fn states(&self, out: &mut Vec<StateIx>) {
        match self {
            Guard::SubsetEq(c) | Guard::SupsetEq(c) => out.extend(c.iter()),
            Guard::Not(g) => g.states(out),
            Guard::And(gs) | Guard::Or(gs) => gs.iter().for_each(|g| g.states(out)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    When(Guard),
    Else,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub condition: Condition,
    pub target: StateIx,
}

impl Rule {
    pub fn when(guard: Guard, target: StateIx) -> Self {
        Rule {
            condition: Condition::When(guard),
            target,
        }
    }

    pub fn otherwise(target: StateIx) -> Self {
        Rule {
            condition: Condition::Else,
            target,
        }
    }
}

/// A nonempty state sequence with no two consecutive states equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trace(Vec<StateIx>);

impl Trace {
    pub fn singleton(q: StateIx) -> Self {
        Trace(vec![q])
    }

    /// `None` if `states` is empty or repeats a state consecutively.
    pub fn from_states(states: Vec<StateIx>) -> Option<Self> {
        if states.is_empty() || states.windows(2).any(|w| w[0] == w[1]) {
            None
        } else {
            Some(Trace(states))
        }
    }

    pub fn first(&self) -> StateIx {
        self.0[0]
    }

    pub fn last(&self) -> StateIx {
        *self.0.last().expect("traces are nonempty")
    }

    /// Appends `q` unless it equals the last state.
    pub fn push_last(&self, q: StateIx) -> Trace {
        let mut t = self.clone();
        t.push_last_in_place(q);
        t
    }

    pub fn push_last_in_place(&mut self, q: StateIx) {
        if self.last() != q {
            self.0.push(q);
        }
    }

    /// Drops the first state unless it is the only one.
    pub fn pop_first(&self) -> Trace {
        let mut t = self.clone();
        t.pop_first_in_place();
        t
    }

    pub fn pop_first_in_place(&mut self) {
        if self.0.len() > 1 {
            self.0.remove(0);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> &[StateIx] {
        &self.0
    }

    /// The trace with its last state removed, if it has at least two.
    pub fn parent(&self) -> Option<Trace> {
        (self.0.len() > 1).then(|| Trace(self.0[..self.0.len() - 1].to_vec()))
    }
}

/// Serialized rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub guard: Value,
    pub to: String,
}

/// Serialized form of an [`Automaton`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomatonDoc {
    pub bits: usize,
    pub states: Vec<String>,
    pub init: BTreeMap<String, String>,
    pub accepting: Vec<String>,
    pub rules: BTreeMap<String, Vec<RuleDoc>>,
}

/// A deterministic distributed automaton with `bits`-bit input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    bits: usize,
    states: Vec<String>,
    index: HashMap<String, StateIx>,
    /// Indexed by [`Label::index`].
    init: Vec<StateIx>,
    rules: Vec<Vec<Rule>>,
    accepting: Vec<bool>,
}

impl Automaton {
    /// `init[w]` is the initial state for the label whose big-endian value
    /// is `w`.
    pub fn new(
        bits: usize,
        states: Vec<String>,
        init: Vec<StateIx>,
        rules: Vec<Vec<Rule>>,
        accepting: Vec<bool>,
    ) -> Result<Self, AutomatonError> {
        if states.is_empty() {
            return Err(AutomatonError::NoStates);
        }
        let mut index = HashMap::with_capacity(states.len());
        for (i, id) in states.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(AutomatonError::DuplicateState {
                    index: i,
                    id: id.clone(),
                });
            }
        }
        let n = states.len();
        if init.len() != 1 << bits {
            let missing = Label::from_index(init.len().min((1 << bits) - 1), bits);
            return Err(AutomatonError::InitNotTotal(missing.to_string()));
        }
        let undeclared = |context: String, q: StateIx| AutomatonError::UndeclaredState {
            context,
            state: format!("#{q}"),
        };
        for (w, &q) in init.iter().enumerate() {
            if q >= n {
                return Err(undeclared(
                    format!("init.{}", Label::from_index(w, bits)),
                    q,
                ));
            }
        }
        if rules.len() != n {
            return Err(AutomatonError::NotTotal(
                states[rules.len().min(n - 1)].clone(),
            ));
        }
        for (q, list) in rules.iter().enumerate() {
            match list.last() {
                Some(Rule {
                    condition: Condition::Else,
                    ..
                }) => {}
                _ => return Err(AutomatonError::NotTotal(states[q].clone())),
            }
            for (i, rule) in list.iter().enumerate() {
                if rule.condition == Condition::Else && i + 1 != list.len() {
                    return Err(AutomatonError::MisplacedElse {
                        state: states[q].clone(),
                        index: i,
                    });
                }
                if rule.target >= n {
                    return Err(undeclared(
                        format!("rules.{}[{i}].to", states[q]),
                        rule.target,
                    ));
                }
                if let Condition::When(g) = &rule.condition {
                    let mut refs = Vec::new();
                    g.states(&mut refs);
                    if let Some(&bad) = refs.iter().find(|&&r| r >= n) {
                        return Err(undeclared(format!("rules.{}[{i}].guard", states[q]), bad));
                    }
                }
            }
        }
        assert_eq!(accepting.len(), n, "one acceptance flag per state");
        Ok(Automaton {
            bits,
            states,
            index,
            init,
            rules,
            accepting,
        })
    }

    pub fn from_doc(doc: AutomatonDoc) -> Result<Self, AutomatonError> {
        if doc.states.is_empty() {
            return Err(AutomatonError::NoStates);
        }
        let mut index = HashMap::new();
        for (i, id) in doc.states.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(AutomatonError::DuplicateState {
                    index: i,
                    id: id.clone(),
                });
            }
        }
        let lookup = |context: &dyn Fn() -> String, id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| AutomatonError::UndeclaredState {
                    context: context(),
                    state: id.to_string(),
                })
        };

        let mut init = vec![None; 1 << doc.bits];
        for (w, q) in &doc.init {
            let label = Label::parse(w)
                .filter(|l| l.width() == doc.bits)
                .ok_or_else(|| AutomatonError::InitLabel(w.clone()))?;
            init[label.index()] = Some(lookup(&|| format!("init.{w}"), q)?);
        }
        let init = init
            .into_iter()
            .enumerate()
            .map(|(w, q)| {
                q.ok_or_else(|| {
                    AutomatonError::InitNotTotal(Label::from_index(w, doc.bits).to_string())
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        for id in doc.rules.keys() {
            if !index.contains_key(id) {
                return Err(AutomatonError::RulesForUnknownState(id.clone()));
            }
        }
        let mut rules = Vec::with_capacity(doc.states.len());
        for id in &doc.states {
            let docs = doc
                .rules
                .get(id)
                .ok_or_else(|| AutomatonError::NotTotal(id.clone()))?;
            let mut list = Vec::with_capacity(docs.len());
            for (i, rd) in docs.iter().enumerate() {
                let target = lookup(&|| format!("rules.{id}[{i}].to"), &rd.to)?;
                let condition = if rd.guard == Value::String("else".into()) {
                    Condition::Else
                } else {
                    let guard = parse_guard(&rd.guard, &index).map_err(|reason| match reason {
                        GuardParseError::Undeclared(s) => AutomatonError::UndeclaredState {
                            context: format!("rules.{id}[{i}].guard"),
                            state: s,
                        },
                        GuardParseError::Malformed(reason) => AutomatonError::BadGuard {
                            state: id.clone(),
                            index: i,
                            reason,
                        },
                    })?;
                    Condition::When(guard)
                };
                list.push(Rule { condition, target });
            }
            rules.push(list);
        }

        let mut accepting = vec![false; doc.states.len()];
        for q in &doc.accepting {
            accepting[lookup(&|| "accepting".to_string(), q)?] = true;
        }
        Self::new(doc.bits, doc.states, init, rules, accepting)
    }

    /// Parses the JSON automaton document format.
    pub fn from_json(text: &str) -> Result<Self, AutomatonError> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    pub fn to_doc(&self) -> AutomatonDoc {
        AutomatonDoc {
            bits: self.bits,
            states: self.states.clone(),
            init: self
                .init
                .iter()
                .enumerate()
                .map(|(w, &q)| {
                    (
                        Label::from_index(w, self.bits).to_string(),
                        self.states[q].clone(),
                    )
                })
                .collect(),
            accepting: (0..self.states.len())
                .filter(|&q| self.accepting[q])
                .map(|q| self.states[q].clone())
                .collect(),
            rules: self
                .rules
                .iter()
                .enumerate()
                .map(|(q, list)| {
                    let docs = list
                        .iter()
                        .map(|r| RuleDoc {
                            guard: match &r.condition {
                                Condition::Else => Value::String("else".into()),
                                Condition::When(g) => self.guard_to_json(g),
                            },
                            to: self.states[r.target].clone(),
                        })
                        .collect();
                    (self.states[q].clone(), docs)
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("automaton documents always serialize")
    }

    fn guard_to_json(&self, g: &Guard) -> Value {
        let names =
            |c: &StateSet| -> Vec<&str> { c.iter().map(|q| self.states[q].as_str()).collect() };
        match g {
            Guard::SubsetEq(c) => json!({ "subseteq": names(c) }),
            Guard::SupsetEq(c) => json!({ "supseteq": names(c) }),
            Guard::Not(g) => json!({ "not": self.guard_to_json(g) }),
            Guard::And(gs) => {
                json!({ "and": gs.iter().map(|g| self.guard_to_json(g)).collect::<Vec<_>>() })
            }
            Guard::Or(gs) => {
                json!({ "or": gs.iter().map(|g| self.guard_to_json(g)).collect::<Vec<_>>() })
            }
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, q: StateIx) -> &str {
        &self.states[q]
    }

    pub fn state_index(&self, id: &str) -> Result<StateIx, AutomatonError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| AutomatonError::UnknownState(id.to_string()))
    }

    pub fn init(&self, label: &Label) -> StateIx {
        self.init[label.index()]
    }

    /// Initial states indexed by big-endian label value.
    pub fn init_table(&self) -> &[StateIx] {
        &self.init
    }

    pub fn is_accepting(&self, q: StateIx) -> bool {
        self.accepting[q]
    }

    pub fn rules(&self, q: StateIx) -> &[Rule] {
        &self.rules[q]
    }

    /// `δ(q, received)`: the target of the first rule whose guard holds.
    pub fn delta(&self, q: StateIx, received: &StateSet) -> StateIx {
        self.rules[q]
            .iter()
            .find(|r| match &r.condition {
                Condition::Else => true,
                Condition::When(g) => g.holds(received),
            })
            .expect("rule lists end in else")
            .target
    }

    /// [`Automaton::delta`] addressed by state names.
    pub fn delta_eval(&self, q: &str, received: &[&str]) -> Result<&str, AutomatonError> {
        let q = self.state_index(q)?;
        let n = received
            .iter()
            .map(|s| self.state_index(s))
            .collect::<Result<StateSet, _>>()?;
        Ok(self.state_name(self.delta(q, &n)))
    }

    fn check_enumerable(&self) -> Result<(), AutomatonError> {
        if self.states.len() > MAX_ENUMERABLE_STATES {
            Err(AutomatonError::TooManyStates {
                count: self.states.len(),
                limit: MAX_ENUMERABLE_STATES,
            })
        } else {
            Ok(())
        }
    }

    /// For every state, the sorted list of states other than itself that
    /// `δ` can move it to.
    pub fn state_diagram(&self) -> Result<Vec<Vec<StateIx>>, AutomatonError> {
        self.check_enumerable()?;
        let n = self.states.len();
        let mut succ = vec![vec![false; n]; n];
        for mask in 0..(1u64 << n) {
            let s = StateSet::from_mask(mask);
            for (q, row) in succ.iter_mut().enumerate() {
                let r = self.delta(q, &s);
                if r != q {
                    row[r] = true;
                }
            }
        }
        Ok(succ
            .into_iter()
            .map(|row| (0..n).filter(|&r| row[r]).collect())
            .collect())
    }

    /// Whether the state diagram has no cycles apart from self-loops.
    pub fn is_quasi_acyclic(&self) -> Result<bool, AutomatonError> {
        Ok(diagram_is_acyclic(&self.state_diagram()?))
    }

    /// All traces, as paths in the self-loop-free state diagram. Ordered by
    /// start state, then depth-first.
    pub fn traces(&self) -> Result<Vec<Trace>, AutomatonError> {
        let diagram = self.state_diagram()?;
        if !diagram_is_acyclic(&diagram) {
            return Err(AutomatonError::NotQuasiAcyclic);
        }
        let mut out = Vec::new();
        fn walk(diagram: &[Vec<StateIx>], path: &mut Vec<StateIx>, out: &mut Vec<Trace>) {
            out.push(Trace(path.clone()));
            let q = *path.last().unwrap();
            for &r in &diagram[q] {
                path.push(r);
                walk(diagram, path, out);
                path.pop();
            }
        }
        for q in 0..self.states.len() {
            walk(&diagram, &mut vec![q], &mut out);
        }
        Ok(out)
    }

    /// Whether `t` is a trace of this automaton: every step is realized by
    /// `δ` for some received set. Enumerates `P(Q)`.
    pub fn is_trace(&self, t: &Trace) -> Result<bool, AutomatonError> {
        let diagram = self.state_diagram()?;
        Ok(t.states()
            .windows(2)
            .all(|w| diagram[w[0]].binary_search(&w[1]).is_ok()))
    }

    pub fn trace_names(&self, t: &Trace) -> Vec<&str> {
        t.states().iter().map(|&q| self.state_name(q)).collect()
    }
}

impl fmt::Display for Automaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

fn diagram_is_acyclic(diagram: &[Vec<StateIx>]) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Open,
        Done,
    }
    fn visit(q: StateIx, diagram: &[Vec<StateIx>], mark: &mut [Mark]) -> bool {
        match mark[q] {
            Mark::Open => return false,
            Mark::Done => return true,
            Mark::Fresh => {}
        }
        mark[q] = Mark::Open;
        for &r in &diagram[q] {
            if !visit(r, diagram, mark) {
                return false;
            }
        }
        mark[q] = Mark::Done;
        true
    }
    let mut mark = vec![Mark::Fresh; diagram.len()];
    (0..diagram.len()).all(|q| visit(q, diagram, &mut mark))
}

enum GuardParseError {
    Undeclared(String),
    Malformed(String),
}

fn parse_guard(v: &Value, index: &HashMap<String, StateIx>) -> Result<Guard, GuardParseError> {
    let malformed = |m: &str| GuardParseError::Malformed(m.to_string());
    let obj = v
        .as_object()
        .ok_or_else(|| malformed("expected an object or \"else\""))?;
    if obj.len() != 1 {
        return Err(malformed("guard objects have exactly one key"));
    }
    let (key, arg) = obj.iter().next().unwrap();
    let state_set = |arg: &Value| -> Result<StateSet, GuardParseError> {
        arg.as_array()
            .ok_or_else(|| malformed("expected a list of states"))?
            .iter()
            .map(|s| {
                let s = s
                    .as_str()
                    .ok_or_else(|| malformed("state ids are strings"))?;
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| GuardParseError::Undeclared(s.to_string()))
            })
            .collect()
    };
    let list = |arg: &Value| -> Result<Vec<Guard>, GuardParseError> {
        arg.as_array()
            .ok_or_else(|| malformed("expected a list of guards"))?
            .iter()
            .map(|g| parse_guard(g, index))
            .collect()
    };
    match key.as_str() {
        "subseteq" => Ok(Guard::SubsetEq(state_set(arg)?)),
        "supseteq" => Ok(Guard::SupsetEq(state_set(arg)?)),
        "not" => Ok(Guard::Not(Box::new(parse_guard(arg, index)?))),
        "and" => Ok(Guard::And(list(arg)?)),
        "or" => Ok(Guard::Or(list(arg)?)),
        other => Err(GuardParseError::Malformed(format!(
            "unknown guard {other:?}"
        ))),
    }
}
