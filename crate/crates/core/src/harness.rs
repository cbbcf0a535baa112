//! Brute-force equivalence and invariance checking.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::automaton::{Automaton, AutomatonError};
use crate::graph::{
    backward_bisimilar, backward_unravel, enumerate_digraphs, random_digraph, Digraph,
    PointedDigraph,
};
use crate::logic::{LogicError, MuSystem, Program};
use crate::runtime::{
    check_consistency, default_budget, sync_run, Consistency, RunError, DEFAULT_STARVATION_BOUND,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bit-width mismatch: {0} vs {1}")]
    BitWidthMismatch(usize, usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unknown device extension for {0} (expected .json or .sexp)")]
    UnknownDeviceKind(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("invalid thread count: {0}")]
    Jobs(String),
}

/// Anything that accepts or rejects pointed digraphs.
#[derive(Debug, Clone)]
pub enum Device {
    Formula(MuSystem),
    Automaton(Automaton),
}

impl Device {
    /// Loads an automaton from `.json` or a formula from `.sexp`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(Device::Automaton(Automaton::from_json(&text)?)),
            Some("sexp") => Ok(Device::Formula(MuSystem::parse(&text)?)),
            _ => Err(HarnessError::UnknownDeviceKind(path.display().to_string())),
        }
    }

    pub fn bits(&self) -> usize {
        match self {
            Device::Formula(s) => s.bits(),
            Device::Automaton(a) => a.bits(),
        }
    }

    /// Widens a formula that uses fewer bits than `bits`. Automata are left
    /// alone.
    pub fn widen_to(self, bits: usize) -> Result<Self, HarnessError> {
        match self {
            Device::Formula(s) if s.bits() < bits => Ok(Device::Formula(s.with_bits(bits)?)),
            d => Ok(d),
        }
    }

    /// Verdict at every node of `g`.
    pub fn evaluate_all(&self, g: &Digraph) -> Result<Vec<bool>, HarnessError> {
        Prepared::new(self).evaluate_all(g)
    }

    pub fn accepts(&self, p: &PointedDigraph) -> Result<bool, HarnessError> {
        Ok(self.evaluate_all(&p.graph)?[p.point])
    }
}

/// A device with its formula compiled once.
enum Prepared<'d> {
    Formula(&'d MuSystem, Program),
    Automaton(&'d Automaton),
}

impl<'d> Prepared<'d> {
    fn new(d: &'d Device) -> Self {
        match d {
            Device::Formula(s) => Prepared::Formula(s, Program::compile(s)),
            Device::Automaton(a) => Prepared::Automaton(a),
        }
    }

    fn evaluate_all(&self, g: &Digraph) -> Result<Vec<bool>, HarnessError> {
        match self {
            Prepared::Formula(s, prog) => {
                let fp = prog.lfp(g, s.bits())?;
                let x0 = fp.valuation.get(0);
                Ok((0..g.node_count()).map(|v| x0.contains(v)).collect())
            }
            Prepared::Automaton(a) => Ok(sync_run(a, g)?.accepted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EquivVerdict {
    /// No disagreement on the `instances` pointed digraphs examined.
    Equivalent { instances: u64 },
    Counterexample {
        witness: PointedDigraph,
        d1: bool,
        d2: bool,
    },
}

impl EquivVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, EquivVerdict::Equivalent { .. })
    }

    pub fn to_json(&self) -> Value {
        match self {
            EquivVerdict::Equivalent { instances } => {
                json!({"verdict": "equivalent", "instances": instances})
            }
            EquivVerdict::Counterexample { witness, d1, d2 } => json!({
                "verdict": "counterexample",
                "graph": witness.graph.to_doc(),
                "point": witness.point_id(),
                "d1": d1,
                "d2": d2,
            }),
        }
    }
}

fn check_pair(d1: &Device, d2: &Device) -> Result<(), HarnessError> {
    if d1.bits() != d2.bits() {
        return Err(HarnessError::BitWidthMismatch(d1.bits(), d2.bits()));
    }
    Ok(())
}

/// First disagreement on `g`, by node index.
fn compare(
    p1: &Prepared,
    p2: &Prepared,
    g: &Digraph,
) -> Result<Option<(usize, bool, bool)>, HarnessError> {
    let v1 = p1.evaluate_all(g)?;
    let v2 = p2.evaluate_all(g)?;
    Ok(v1
        .iter()
        .zip(&v2)
        .position(|(a, b)| a != b)
        .map(|v| (v, v1[v], v2[v])))
}

/// Sequentially compares the devices on each digraph in order. Returns the
/// first disagreement.
fn scan(
    d1: &Device,
    d2: &Device,
    graphs: impl Iterator<Item = Digraph>,
) -> Result<EquivVerdict, HarnessError> {
    let (p1, p2) = (Prepared::new(d1), Prepared::new(d2));
    let mut instances = 0u64;
    for g in graphs {
        if let Some((v, b1, b2)) = compare(&p1, &p2, &g)? {
            return Ok(EquivVerdict::Counterexample {
                witness: PointedDigraph::at(g, v),
                d1: b1,
                d2: b2,
            });
        }
        instances += g.node_count() as u64;
    }
    Ok(EquivVerdict::Equivalent { instances })
}

const CHUNK: usize = 2048;

/// Like [`scan`], but each chunk of digraphs is checked on a pool of `jobs`
/// threads. The reported counterexample is still the first in order.
fn scan_parallel(
    d1: &Device,
    d2: &Device,
    graphs: impl Iterator<Item = Digraph>,
    jobs: usize,
) -> Result<EquivVerdict, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Jobs(e.to_string()))?;
    let (p1, p2) = (Prepared::new(d1), Prepared::new(d2));
    let mut instances = 0u64;
    let mut graphs = graphs.peekable();
    while graphs.peek().is_some() {
        let chunk: Vec<Digraph> = graphs.by_ref().take(CHUNK).collect();
        let found = pool.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .find_map_first(|(i, g)| match compare(&p1, &p2, g) {
                    Ok(None) => None,
                    Ok(Some(hit)) => Some(Ok((i, hit))),
                    Err(e) => Some(Err(e)),
                })
        });
        match found {
            Some(Ok((i, (v, b1, b2)))) => {
                return Ok(EquivVerdict::Counterexample {
                    witness: PointedDigraph::at(chunk[i].clone(), v),
                    d1: b1,
                    d2: b2,
                })
            }
            Some(Err(e)) => return Err(e),
            None => instances += chunk.iter().map(|g| g.node_count() as u64).sum::<u64>(),
        }
    }
    Ok(EquivVerdict::Equivalent { instances })
}

fn dispatch(
    d1: &Device,
    d2: &Device,
    graphs: impl Iterator<Item = Digraph>,
    jobs: usize,
) -> Result<EquivVerdict, HarnessError> {
    if jobs <= 1 {
        scan(d1, d2, graphs)
    } else {
        scan_parallel(d1, d2, graphs, jobs)
    }
}

/// Compares the devices on every digraph with at most `max_nodes` nodes and
/// every point.
pub fn equiv_exhaustive(
    d1: &Device,
    d2: &Device,
    max_nodes: usize,
) -> Result<EquivVerdict, HarnessError> {
    equiv_exhaustive_jobs(d1, d2, max_nodes, 1)
}

pub fn equiv_exhaustive_jobs(
    d1: &Device,
    d2: &Device,
    max_nodes: usize,
    jobs: usize,
) -> Result<EquivVerdict, HarnessError> {
    check_pair(d1, d2)?;
    dispatch(d1, d2, enumerate_digraphs(max_nodes, d1.bits()), jobs)
}

/// The digraphs examined by [`equiv_sampled`]: node count uniform in
/// `1..=max_nodes`, each ordered pair an edge with probability 1/2, uniform
/// labels.
pub fn sample_digraphs(
    max_nodes: usize,
    bits: usize,
    samples: usize,
    seed: u64,
) -> impl Iterator<Item = Digraph> {
    assert!(max_nodes > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(move |_| {
        let m = rng.gen_range(1..=max_nodes);
        random_digraph(&mut rng, m, bits, 0.5)
    })
}

/// Compares the devices on `samples` random digraphs at all points.
/// Agreement here is evidence, not proof.
pub fn equiv_sampled(
    d1: &Device,
    d2: &Device,
    max_nodes: usize,
    samples: usize,
    seed: u64,
) -> Result<EquivVerdict, HarnessError> {
    equiv_sampled_jobs(d1, d2, max_nodes, samples, seed, 1)
}

pub fn equiv_sampled_jobs(
    d1: &Device,
    d2: &Device,
    max_nodes: usize,
    samples: usize,
    seed: u64,
    jobs: usize,
) -> Result<EquivVerdict, HarnessError> {
    check_pair(d1, d2)?;
    dispatch(
        d1,
        d2,
        sample_digraphs(max_nodes, d1.bits(), samples, seed),
        jobs,
    )
}

/// Result of [`fuzz_consistency`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuzzVerdict {
    ConsistentUpToBudget {
        graphs: usize,
    },
    Inconsistent {
        graph: Digraph,
        /// Seed passed to `check_consistency` for this graph.
        seed: u64,
        finding: Box<Consistency>,
    },
}

/// Runs [`check_consistency`] with `samples` timings on each of `graphs`
/// random digraphs of at most `max_nodes` nodes. Graph `i` uses timing seed
/// `seed + i`. The first inconsistent graph in order is reported.
pub fn fuzz_consistency(
    a: &Automaton,
    max_nodes: usize,
    graphs: usize,
    samples: usize,
    lossless_only: bool,
    seed: u64,
    jobs: usize,
) -> Result<FuzzVerdict, HarnessError> {
    let instances: Vec<Digraph> = sample_digraphs(max_nodes, a.bits(), graphs, seed).collect();
    let check = |(i, g): (usize, &Digraph)| -> Result<Option<FuzzVerdict>, HarnessError> {
        let s = seed.wrapping_add(i as u64);
        let budget = default_budget(g, DEFAULT_STARVATION_BOUND);
        Ok(
            match check_consistency(a, g, samples, lossless_only, s, budget)? {
                Consistency::ConsistentUpToBudget => None,
                finding => Some(FuzzVerdict::Inconsistent {
                    graph: g.clone(),
                    seed: s,
                    finding: Box::new(finding),
                }),
            },
        )
    };
    let found = if jobs <= 1 {
        instances
            .iter()
            .enumerate()
            .map(check)
            .find_map(|r| r.transpose())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Jobs(e.to_string()))?;
        pool.install(|| {
            instances
                .par_iter()
                .enumerate()
                .map(check)
                .find_map_first(|r| r.transpose())
        })
    };
    match found {
        Some(v) => v,
        None => Ok(FuzzVerdict::ConsistentUpToBudget { graphs }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BisimVerdict {
    Pass,
    /// The supposed unraveling is not backward bisimilar to the original.
    NotBisimilar {
        original: PointedDigraph,
        unraveled: PointedDigraph,
    },
    /// Bisimilar structures with different verdicts.
    InvarianceViolated {
        original: PointedDigraph,
        unraveled: PointedDigraph,
        original_accepts: bool,
        unraveled_accepts: bool,
    },
}

/// Unravels `p` backwards to `depth` and checks that the automaton's verdict
/// is unchanged.
pub fn bisim_invariance_check(
    a: &Automaton,
    p: &PointedDigraph,
    depth: usize,
) -> Result<BisimVerdict, HarnessError> {
    let w = backward_unravel(p, depth);
    check_with(a, p, &w)
}

/// Checks `w` against `p`: first that they are backward bisimilar, then that
/// `a` gives both the same verdict.
pub fn check_with(
    a: &Automaton,
    p: &PointedDigraph,
    w: &PointedDigraph,
) -> Result<BisimVerdict, HarnessError> {
    let bisimilar = p.graph.bits() == w.graph.bits()
        && backward_bisimilar(p, w).expect("bit widths checked above");
    if !bisimilar {
        return Ok(BisimVerdict::NotBisimilar {
            original: p.clone(),
            unraveled: w.clone(),
        });
    }
    let original_accepts = sync_run(a, &p.graph)?.accepted[p.point];
    let unraveled_accepts = sync_run(a, &w.graph)?.accepted[w.point];
    if original_accepts != unraveled_accepts {
        return Ok(BisimVerdict::InvarianceViolated {
            original: p.clone(),
            unraveled: w.clone(),
            original_accepts,
            unraveled_accepts,
        });
    }
    Ok(BisimVerdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::{digraph_count, Label};

    fn formula(text: &str) -> Device {
        Device::Formula(MuSystem::parse_with_bits(text, 1).unwrap())
    }

    #[test]
    fn constant_formulas_disagree_on_first_instance() {
        let t = formula("(mu ((X0 true)))");
        let f = formula("(mu ((X0 false)))");
        match equiv_exhaustive(&t, &f, 2).unwrap() {
            EquivVerdict::Counterexample { witness, d1, d2 } => {
                assert_eq!(witness.graph.node_count(), 1);
                assert_eq!(witness.graph.edge_count(), 0);
                assert_eq!(witness.graph.label(0), &Label::parse("0").unwrap());
                assert!(d1 && !d2);
            }
            v => panic!("expected counterexample, got {v:?}"),
        }
    }

    #[test]
    fn device_equals_itself() {
        let d = Device::Automaton(fixtures::grounded_automaton());
        let v = equiv_exhaustive(&d, &d, 2).unwrap();
        assert_eq!(
            v,
            EquivVerdict::Equivalent {
                instances: 4 + 2 * 64
            }
        );
    }

    #[test]
    fn grounded_pair_agrees_up_to_two_nodes() {
        let a = Device::Automaton(fixtures::grounded_automaton());
        let f = Device::Formula(fixtures::grounded_formula());
        assert!(equiv_exhaustive(&a, &f, 2).unwrap().is_equivalent());
        assert!(equiv_sampled(&a, &f, 5, 100, 0).unwrap().is_equivalent());
    }

    #[test]
    fn parallel_scan_reports_the_same_first_counterexample() {
        let f1 = formula("(mu ((X0 (dia (p 0)))))");
        let f2 = formula("(mu ((X0 (and (dia (p 0)) (not-p 0)))))");
        let seq = equiv_exhaustive(&f1, &f2, 3).unwrap();
        let par = equiv_exhaustive_jobs(&f1, &f2, 3, 4).unwrap();
        assert!(!seq.is_equivalent());
        assert_eq!(seq, par);
    }

    #[test]
    fn counterexample_replays() {
        let f1 = formula("(mu ((X0 (box (p 0)))))");
        let f2 = formula("(mu ((X0 (dia (p 0)))))");
        let EquivVerdict::Counterexample { witness, d1, d2 } =
            equiv_exhaustive(&f1, &f2, 3).unwrap()
        else {
            panic!("box and diamond differ on sources");
        };
        assert_eq!(f1.accepts(&witness).unwrap(), d1);
        assert_eq!(f2.accepts(&witness).unwrap(), d2);
    }

    #[test]
    fn four_node_motif_escapes_small_bounds() {
        // Four predecessors with pairwise distinct labels need four nodes.
        let motif =
            "(mu ((X0 (and (and (dia (and (not-p 0) (not-p 1))) (dia (and (p 0) (not-p 1)))) \
                     (and (dia (and (not-p 0) (p 1))) (dia (and (p 0) (p 1))))))))";
        let d1 = Device::Formula(MuSystem::parse(motif).unwrap());
        let d2 = Device::Formula(MuSystem::parse_with_bits("(mu ((X0 false)))", 2).unwrap());
        assert!(equiv_exhaustive(&d1, &d2, 3).unwrap().is_equivalent());
        assert!(equiv_sampled(&d1, &d2, 3, 300, 0).unwrap().is_equivalent());
        let g = Digraph::from_json(
            r#"{"bits":2,"nodes":["a","b","c","d"],"labels":{"a":"00","b":"10","c":"01","d":"11"},
                "edges":[["a","d"],["b","d"],["c","d"],["d","d"]]}"#,
        )
        .unwrap();
        let p = PointedDigraph::new(g, "d").unwrap();
        assert!(d1.accepts(&p).unwrap());
        assert!(!d2.accepts(&p).unwrap());
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let d1 = formula("(mu ((X0 true)))");
        let d2 = Device::Formula(MuSystem::parse_with_bits("(mu ((X0 true)))", 2).unwrap());
        assert!(matches!(
            equiv_exhaustive(&d1, &d2, 1),
            Err(HarnessError::BitWidthMismatch(1, 2))
        ));
    }

    #[test]
    fn verdict_json_shape() {
        let g = Digraph::from_json(r#"{"bits":1,"nodes":["n1"],"labels":{"n1":"1"},"edges":[]}"#)
            .unwrap();
        let v = EquivVerdict::Counterexample {
            witness: PointedDigraph::new(g, "n1").unwrap(),
            d1: true,
            d2: false,
        };
        let j = v.to_json();
        assert_eq!(j["verdict"], "counterexample");
        assert_eq!(j["point"], "n1");
        assert_eq!(j["d1"], true);
        assert_eq!(j["d2"], false);
        assert_eq!(j["graph"]["nodes"][0], "n1");
    }

    #[test]
    fn instance_count_matches_enumeration() {
        let d = formula("(mu ((X0 (p 0))))");
        let EquivVerdict::Equivalent { instances } = equiv_exhaustive(&d, &d, 3).unwrap() else {
            panic!()
        };
        let weighted: u64 = (1..=3u32).map(|m| m as u64 * 2u64.pow(m * m + m)).sum();
        assert_eq!(instances, weighted);
        assert_eq!(digraph_count(3, 1), 4 + 64 + 4096);
    }

    #[test]
    fn unraveling_preserves_grounded_verdict() {
        let a = fixtures::grounded_automaton();
        let g = Digraph::from_json(
            r#"{"bits":1,"nodes":["a","b","c"],"labels":{"a":"1","b":"0","c":"0"},
                "edges":[["a","b"],["b","c"],["c","b"],["c","c"]]}"#,
        )
        .unwrap();
        for point in ["a", "b", "c"] {
            let p = PointedDigraph::new(g.clone(), point).unwrap();
            for depth in 0..3 {
                assert_eq!(
                    bisim_invariance_check(&a, &p, depth).unwrap(),
                    BisimVerdict::Pass
                );
            }
        }
    }

    #[test]
    fn fuzzing_finds_the_lockstep_automaton_and_spares_grounded() {
        let grounded = fixtures::grounded_automaton();
        let v = fuzz_consistency(&grounded, 4, 10, 20, false, 0, 1).unwrap();
        assert_eq!(v, FuzzVerdict::ConsistentUpToBudget { graphs: 10 });
        let lockstep = fixtures::lockstep_automaton();
        let seq = fuzz_consistency(&lockstep, 3, 40, 20, false, 0, 1).unwrap();
        assert!(matches!(seq, FuzzVerdict::Inconsistent { .. }));
        assert_eq!(
            seq,
            fuzz_consistency(&lockstep, 3, 40, 20, false, 0, 3).unwrap()
        );
    }

    #[test]
    fn corrupted_unraveling_is_not_bisimilar() {
        let a = fixtures::grounded_automaton();
        let g = Digraph::from_json(
            r#"{"bits":1,"nodes":["a","b"],"labels":{"a":"1","b":"0"},"edges":[["a","b"]]}"#,
        )
        .unwrap();
        let p = PointedDigraph::new(g, "b").unwrap();
        let w = backward_unravel(&p, 2);
        let mut doc = w.graph.to_doc();
        for label in doc.labels.values_mut() {
            *label = "1".into();
        }
        let bad = PointedDigraph::at(Digraph::from_doc(doc).unwrap(), w.point);
        assert!(matches!(
            check_with(&a, &p, &bad).unwrap(),
            BisimVerdict::NotBisimilar { .. }
        ));
    }
}
