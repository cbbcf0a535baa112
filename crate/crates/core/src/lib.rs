//! Distributed automata on node-labeled digraphs, the backward modal
//! μ-fragment, and the translations between them.
//!
//! - [`graph`]: labeled digraphs, backward bisimulation, enumeration.
//! - [`automaton`]: guarded transition rules, traces, quasi-acyclicity.
//! - [`runtime`]: synchronous and asynchronous execution, timing sampling.
//! - [`logic`]: formula systems and least-fixpoint evaluation.
//! - [`transform`]: formula to automaton and back.
//! - [`harness`]: equivalence and invariance checking.

pub mod automaton;
pub mod fixtures;
pub mod gen;
pub mod graph;
pub mod harness;
pub mod logic;
pub mod runtime;
pub mod transform;

pub use automaton::{Automaton, AutomatonError, Guard, Rule, StateSet, Trace};
pub use graph::{Digraph, GraphError, Label, PointedDigraph};
pub use harness::{Device, EquivVerdict};
pub use logic::{LogicError, ModalFormula, MuSystem, Valuation};
pub use runtime::{Activation, Configuration, RunError, TimingPrefix};
pub use transform::TransformError;
