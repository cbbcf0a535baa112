//! Execution of distributed automata on digraphs.
//!
//! Each edge carries a FIFO buffer holding a trace of its source node's
//! states. A step activates some nodes and edges: active nodes apply `δ` to
//! the front states of their incoming buffers, every edge appends its
//! source's new state, and active edges then drop their oldest state.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::automaton::{Automaton, AutomatonError, StateIx, StateSet, Trace};
use crate::graph::{Digraph, NodeIx, PointedDigraph};

pub const DEFAULT_P_ACTIVE: f64 = 0.5;
pub const DEFAULT_STARVATION_BOUND: usize = 8;

/// Default prefix length: `10 · K · |V|`.
pub fn default_budget(g: &Digraph, starvation_bound: usize) -> usize {
    10 * starvation_bound * g.node_count()
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("bit-width mismatch: automaton has {automaton}, graph has {graph}")]
    BitWidthMismatch { automaton: usize, graph: usize },
    #[error("configuration does not match the graph: {0}")]
    ConfigurationMismatch(String),
    #[error("activation map incomplete: {0}")]
    ActivationIncomplete(String),
    #[error("invalid sampler parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed timing document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("timing document: {0}")]
    TimingDoc(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

fn check_bits(a: &Automaton, g: &Digraph) -> Result<(), RunError> {
    if a.bits() != g.bits() {
        Err(RunError::BitWidthMismatch {
            automaton: a.bits(),
            graph: g.bits(),
        })
    } else {
        Ok(())
    }
}

/// Node states and edge buffers. Buffers are indexed like
/// [`Digraph::edges`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub node_state: Vec<StateIx>,
    pub buffer: Vec<Trace>,
}

impl Configuration {
    /// Every node in its initial state; every buffer holds its source's
    /// initial state.
    pub fn initial(a: &Automaton, g: &Digraph) -> Result<Self, RunError> {
        check_bits(a, g)?;
        let node_state: Vec<StateIx> = g.labels().iter().map(|l| a.init(l)).collect();
        Ok(Self::synchronous(g, node_state))
    }

    /// Buffers hold exactly the current state of their source.
    pub fn synchronous(g: &Digraph, node_state: Vec<StateIx>) -> Self {
        let buffer = g
            .edges()
            .iter()
            .map(|&(u, _)| Trace::singleton(node_state[u]))
            .collect();
        Configuration { node_state, buffer }
    }

    fn check(&self, a: &Automaton, g: &Digraph) -> Result<(), RunError> {
        if self.node_state.len() != g.node_count() {
            return Err(RunError::ConfigurationMismatch(format!(
                "{} node states for {} nodes",
                self.node_state.len(),
                g.node_count()
            )));
        }
        if self.buffer.len() != g.edge_count() {
            return Err(RunError::ConfigurationMismatch(format!(
                "{} buffers for {} edges",
                self.buffer.len(),
                g.edge_count()
            )));
        }
        let n = a.state_count();
        if self.node_state.iter().any(|&q| q >= n)
            || self.buffer.iter().flat_map(|b| b.states()).any(|&q| q >= n)
        {
            return Err(RunError::ConfigurationMismatch(
                "state index out of range".into(),
            ));
        }
        Ok(())
    }

    /// Every buffer holds exactly its source's current state, and a fully
    /// active step would leave every node where it is. Such a configuration
    /// is fixed by every activation map.
    pub fn is_quiescent(&self, a: &Automaton, g: &Digraph) -> bool {
        let buffers_settled = g
            .edges()
            .iter()
            .zip(&self.buffer)
            .all(|(&(u, _), b)| b.len() == 1 && b.first() == self.node_state[u]);
        buffers_settled
            && (0..g.node_count()).all(|v| {
                let received: StateSet = g.in_neighbors(v).map(|u| self.node_state[u]).collect();
                a.delta(self.node_state[v], &received) == self.node_state[v]
            })
    }
}

/// Which nodes and edges are active in one step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Activation {
    pub nodes: Vec<bool>,
    pub edges: Vec<bool>,
}

impl Activation {
    pub fn all(g: &Digraph) -> Self {
        Activation {
            nodes: vec![true; g.node_count()],
            edges: vec![true; g.edge_count()],
        }
    }

    fn check(&self, g: &Digraph) -> Result<(), RunError> {
        if self.nodes.len() != g.node_count() || self.edges.len() != g.edge_count() {
            return Err(RunError::ActivationIncomplete(format!(
                "{} node and {} edge entries for {} nodes and {} edges",
                self.nodes.len(),
                self.edges.len(),
                g.node_count(),
                g.edge_count()
            )));
        }
        Ok(())
    }

    /// Every active edge has an active target.
    pub fn is_lossless(&self, g: &Digraph) -> bool {
        g.edges()
            .iter()
            .zip(&self.edges)
            .all(|(&(_, v), &on)| !on || self.nodes[v])
    }
}

/// One synchronous step: every node reads the current states of its
/// incoming neighbors and every buffer is reset to the new source state.
pub fn sync_step(a: &Automaton, g: &Digraph, c: &Configuration) -> Result<Configuration, RunError> {
    check_bits(a, g)?;
    c.check(a, g)?;
    let node_state = (0..g.node_count())
        .map(|v| {
            let received: StateSet = g.in_neighbors(v).map(|u| c.node_state[u]).collect();
            a.delta(c.node_state[v], &received)
        })
        .collect();
    Ok(Configuration::synchronous(g, node_state))
}

/// One asynchronous step under `act`.
///
/// Active nodes apply `δ` to the set of buffer fronts on their incoming
/// edges; inactive nodes keep their state. Every buffer then appends its
/// source's new state (unless unchanged), and active buffers drop their
/// front (unless it is the only entry).
pub fn async_step(
    a: &Automaton,
    g: &Digraph,
    c: &Configuration,
    act: &Activation,
) -> Result<Configuration, RunError> {
    check_bits(a, g)?;
    c.check(a, g)?;
    act.check(g)?;
    Ok(apply_step(a, g, c, act))
}

fn apply_step(a: &Automaton, g: &Digraph, c: &Configuration, act: &Activation) -> Configuration {
    let mut received = StateSet::new();
    let node_state: Vec<StateIx> = (0..g.node_count())
        .map(|v| {
            if act.nodes[v] {
                received.clear();
                for &e in g.in_edges(v) {
                    received.insert(c.buffer[e].first());
                }
                a.delta(c.node_state[v], &received)
            } else {
                c.node_state[v]
            }
        })
        .collect();
    let buffer = g
        .edges()
        .iter()
        .zip(&c.buffer)
        .zip(&act.edges)
        .map(|((&(u, _), b), &on)| {
            let mut b = b.push_last(node_state[u]);
            if on {
                b.pop_first_in_place();
            }
            b
        })
        .collect();
    Configuration { node_state, buffer }
}

/// Outcome of a synchronous run, decided by configuration-cycle detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncOutcome {
    pub accepted: Vec<bool>,
    /// Earliest time each node is in an accepting state.
    pub first_accepting: Vec<Option<usize>>,
    /// The first configuration that reappears.
    pub cycle_start: usize,
    pub cycle_len: usize,
}

/// Runs the synchronous run until the global configuration repeats. Every
/// state a node will ever visit has been visited by then.
pub fn sync_run(a: &Automaton, g: &Digraph) -> Result<SyncOutcome, RunError> {
    check_bits(a, g)?;
    let n = g.node_count();
    let in_lists: Vec<Vec<NodeIx>> = (0..n).map(|v| g.in_neighbors(v).collect()).collect();
    let mut states: Vec<StateIx> = g.labels().iter().map(|l| a.init(l)).collect();
    let mut first_accepting = vec![None; n];
    let mut seen: HashMap<Vec<StateIx>, usize> = HashMap::new();
    let mut received = StateSet::new();
    let mut t = 0;
    loop {
        for v in 0..n {
            if first_accepting[v].is_none() && a.is_accepting(states[v]) {
                first_accepting[v] = Some(t);
            }
        }
        if let Some(&start) = seen.get(&states) {
            return Ok(SyncOutcome {
                accepted: first_accepting.iter().map(Option::is_some).collect(),
                first_accepting,
                cycle_start: start,
                cycle_len: t - start,
            });
        }
        let next: Vec<StateIx> = (0..n)
            .map(|v| {
                received.clear();
                for &u in &in_lists[v] {
                    received.insert(states[u]);
                }
                a.delta(states[v], &received)
            })
            .collect();
        seen.insert(std::mem::replace(&mut states, next), t);
        t += 1;
    }
}

/// Whether `a` accepts `p` under the synchronous timing.
pub fn sync_accepts(a: &Automaton, p: &PointedDigraph) -> Result<bool, RunError> {
    Ok(sync_run(a, &p.graph)?.accepted[p.point])
}

/// A finite timing prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingPrefix {
    pub lossless: bool,
    /// No entity stays inactive for `starvation_bound` consecutive steps.
    pub starvation_bound: usize,
    pub steps: Vec<Activation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingDoc {
    lossless: bool,
    #[serde(rename = "K")]
    k: usize,
    steps: Vec<StepDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    nodes: BTreeMap<String, u8>,
    edges: BTreeMap<String, u8>,
}

impl TimingPrefix {
    /// `steps` all-active steps.
    pub fn synchronous(g: &Digraph, steps: usize) -> Self {
        TimingPrefix {
            lossless: true,
            starvation_bound: 1,
            steps: vec![Activation::all(g); steps],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every step satisfies the lossless constraint.
    pub fn is_lossless(&self, g: &Digraph) -> bool {
        self.steps.iter().all(|s| s.is_lossless(g))
    }

    /// Longest run of consecutive inactive steps of any node or edge.
    pub fn longest_inactivity(&self) -> usize {
        let Some(first) = self.steps.first() else {
            return 0;
        };
        let width = first.nodes.len() + first.edges.len();
        let mut run = vec![0; width];
        let mut longest = 0;
        for s in &self.steps {
            for (r, on) in run.iter_mut().zip(s.nodes.iter().chain(&s.edges)) {
                *r = if *on { 0 } else { *r + 1 };
                longest = longest.max(*r);
            }
        }
        longest
    }

    pub fn to_json(&self, g: &Digraph) -> String {
        let doc = TimingDoc {
            lossless: self.lossless,
            k: self.starvation_bound,
            steps: self
                .steps
                .iter()
                .map(|s| StepDoc {
                    nodes: g
                        .nodes()
                        .iter()
                        .zip(&s.nodes)
                        .map(|(id, &on)| (id.clone(), on as u8))
                        .collect(),
                    edges: (0..g.edge_count())
                        .map(|e| (g.edge_key(e), s.edges[e] as u8))
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("timing documents always serialize")
    }

    /// Reads a timing for `g`. Every node and edge must appear in every
    /// step.
    pub fn from_json(text: &str, g: &Digraph) -> Result<Self, RunError> {
        let doc: TimingDoc = serde_json::from_str(text)?;
        let edge_index: HashMap<String, usize> =
            (0..g.edge_count()).map(|e| (g.edge_key(e), e)).collect();
        let flag = |t: usize, key: &str, v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(RunError::TimingDoc(format!(
                "steps[{t}].{key}: expected 0 or 1"
            ))),
        };
        let mut steps = Vec::with_capacity(doc.steps.len());
        for (t, s) in doc.steps.iter().enumerate() {
            let mut nodes = vec![None; g.node_count()];
            for (id, &v) in &s.nodes {
                let ix = g.node_index(id).map_err(|_| {
                    RunError::TimingDoc(format!("steps[{t}].nodes: unknown node {id:?}"))
                })?;
                nodes[ix] = Some(flag(t, id, v)?);
            }
            let mut edges = vec![None; g.edge_count()];
            for (key, &v) in &s.edges {
                let e = edge_index.get(key).ok_or_else(|| {
                    RunError::TimingDoc(format!("steps[{t}].edges: unknown edge {key:?}"))
                })?;
                edges[*e] = Some(flag(t, key, v)?);
            }
            let nodes = nodes
                .into_iter()
                .enumerate()
                .map(|(v, x)| {
                    x.ok_or_else(|| {
                        RunError::ActivationIncomplete(format!(
                            "steps[{t}]: node {:?} missing",
                            g.node_id(v)
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            let edges = edges
                .into_iter()
                .enumerate()
                .map(|(e, x)| {
                    x.ok_or_else(|| {
                        RunError::ActivationIncomplete(format!(
                            "steps[{t}]: edge {:?} missing",
                            g.edge_key(e)
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            steps.push(Activation { nodes, edges });
        }
        let prefix = TimingPrefix {
            lossless: doc.lossless,
            starvation_bound: doc.k,
            steps,
        };
        if prefix.lossless && !prefix.is_lossless(g) {
            return Err(RunError::TimingDoc(
                "marked lossless but an active edge has an inactive target".into(),
            ));
        }
        Ok(prefix)
    }
}

/// Samples a fair timing prefix of length `steps`.
///
/// Each node and edge is active independently with probability `p_active`;
/// anything inactive for `starvation_bound - 1` consecutive steps is forced
/// active on the next. With `lossless`, the target of every active edge is
/// then switched on as well.
pub fn sample_timing(
    g: &Digraph,
    steps: usize,
    p_active: f64,
    starvation_bound: usize,
    lossless: bool,
    seed: u64,
) -> Result<TimingPrefix, RunError> {
    if !(p_active > 0.0 && p_active <= 1.0) {
        return Err(RunError::InvalidParameter(format!(
            "p_active = {p_active} not in (0, 1]"
        )));
    }
    if starvation_bound == 0 {
        return Err(RunError::InvalidParameter(
            "starvation bound must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (g.node_count(), g.edge_count());
    let mut idle = vec![0usize; n + m];
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut flags: Vec<bool> = idle
            .iter()
            .map(|&k| k + 1 >= starvation_bound || rng.gen_bool(p_active))
            .collect();
        if lossless {
            for (e, &(_, v)) in g.edges().iter().enumerate() {
                if flags[n + e] {
                    flags[v] = true;
                }
            }
        }
        for (k, &on) in idle.iter_mut().zip(&flags) {
            *k = if on { 0 } else { *k + 1 };
        }
        let edges = flags.split_off(n);
        out.push(Activation {
            nodes: flags,
            edges,
        });
    }
    Ok(TimingPrefix {
        lossless,
        starvation_bound,
        steps: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

/// Result of an asynchronous run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub accepted: Vec<Verdict>,
    pub visited_accepting_at: Vec<Option<usize>>,
    /// First time the configuration was quiescent.
    pub stabilized_at: Option<usize>,
    /// Trace each node has traversed so far.
    pub trace_of: Vec<Trace>,
    /// Number of steps simulated.
    pub steps: usize,
}

impl RunReport {
    pub fn to_json(&self, a: &Automaton, g: &Digraph) -> Value {
        let per_node = |f: &dyn Fn(NodeIx) -> Value| -> serde_json::Map<String, Value> {
            (0..g.node_count())
                .map(|v| (g.node_id(v).to_string(), f(v)))
                .collect()
        };
        json!({
            "accepted": per_node(&|v| json!(self.accepted[v])),
            "visited_accepting_at": per_node(&|v| json!(self.visited_accepting_at[v])),
            "stabilized_at": self.stabilized_at,
            "trace_of": per_node(&|v| json!(a.trace_names(&self.trace_of[v]))),
            "steps": self.steps,
        })
    }
}

/// Runs `a` on `g` along the prefix `t`.
///
/// With `extend_until_quiescent`, the run continues with all-active steps
/// (a fair continuation) until the configuration is quiescent, which makes
/// every verdict definitive. This requires a quasi-acyclic automaton.
/// Without it, nodes that have not accepted by the end of the prefix are
/// reported `Unknown` unless the run already went quiescent.
pub fn async_run(
    a: &Automaton,
    g: &Digraph,
    t: &TimingPrefix,
    extend_until_quiescent: bool,
) -> Result<RunReport, RunError> {
    check_bits(a, g)?;
    for s in &t.steps {
        s.check(g)?;
    }
    if extend_until_quiescent && !a.is_quasi_acyclic()? {
        return Err(RunError::Automaton(AutomatonError::NotQuasiAcyclic));
    }
    run_prefix(a, g, t, extend_until_quiescent)
}

/// [`async_run`] without the argument checks.
fn run_prefix(
    a: &Automaton,
    g: &Digraph,
    t: &TimingPrefix,
    extend_until_quiescent: bool,
) -> Result<RunReport, RunError> {
    let n = g.node_count();
    let mut c = Configuration::initial(a, g)?;
    let mut visited = vec![None; n];
    let mut trace_of: Vec<Trace> = c.node_state.iter().map(|&q| Trace::singleton(q)).collect();
    let mut time = 0;
    let note = |c: &Configuration, time: usize, visited: &mut Vec<Option<usize>>| {
        for (seen, &q) in visited.iter_mut().zip(&c.node_state) {
            if seen.is_none() && a.is_accepting(q) {
                *seen = Some(time);
            }
        }
    };
    note(&c, time, &mut visited);
    let mut stabilized_at = c.is_quiescent(a, g).then_some(0);

    let full = Activation::all(g);
    let mut prefix = t.steps.iter();
    while stabilized_at.is_none() {
        let act = match prefix.next() {
            Some(act) => act,
            None if extend_until_quiescent => &full,
            None => break,
        };
        c = apply_step(a, g, &c, act);
        time += 1;
        for (tr, &q) in trace_of.iter_mut().zip(&c.node_state) {
            tr.push_last_in_place(q);
        }
        note(&c, time, &mut visited);
        if c.is_quiescent(a, g) {
            stabilized_at = Some(time);
        }
    }

    let accepted = visited
        .iter()
        .map(|v| match (v, stabilized_at) {
            (Some(_), _) => Verdict::Yes,
            (None, Some(_)) => Verdict::No,
            (None, None) => Verdict::Unknown,
        })
        .collect();
    Ok(RunReport {
        accepted,
        visited_accepting_at: visited,
        stabilized_at,
        trace_of,
        steps: time,
    })
}

/// The timing under which a verdict was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimingWitness {
    Synchronous,
    Sampled { seed: u64, prefix: TimingPrefix },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consistency {
    ConsistentUpToBudget,
    Inconsistent {
        node: NodeIx,
        first: (TimingWitness, bool),
        second: (TimingWitness, bool),
    },
}

/// Falsification search for timing-dependent verdicts.
///
/// Compares the synchronous verdict of every node with its verdicts under
/// `samples` sampled timings of length `budget`. Even-numbered samples are
/// lossless; odd-numbered ones are lossless only with `lossless_only`.
/// Only definitive verdicts are compared. Never claims the automaton is
/// asynchronous.
pub fn check_consistency(
    a: &Automaton,
    g: &Digraph,
    samples: usize,
    lossless_only: bool,
    seed: u64,
    budget: usize,
) -> Result<Consistency, RunError> {
    let sync = sync_run(a, g)?;
    let extend = a.is_quasi_acyclic()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..samples {
        let sample_seed: u64 = seeds.gen();
        let lossless = lossless_only || i % 2 == 0;
        let prefix = sample_timing(
            g,
            budget,
            DEFAULT_P_ACTIVE,
            DEFAULT_STARVATION_BOUND,
            lossless,
            sample_seed,
        )?;
        let report = run_prefix(a, g, &prefix, extend)?;
        for v in 0..g.node_count() {
            let observed = match report.accepted[v] {
                Verdict::Yes => true,
                Verdict::No => false,
                Verdict::Unknown => continue,
            };
            if observed != sync.accepted[v] {
                return Ok(Consistency::Inconsistent {
                    node: v,
                    first: (TimingWitness::Synchronous, sync.accepted[v]),
                    second: (
                        TimingWitness::Sampled {
                            seed: sample_seed,
                            prefix,
                        },
                        observed,
                    ),
                });
            }
        }
    }
    Ok(Consistency::ConsistentUpToBudget)
}
