//! Bundled example devices.

use crate::automaton::Automaton;
use crate::logic::MuSystem;

/// Five-state quasi-acyclic automaton over 1-bit labels. A node accepts if
/// it can look backwards to a node labeled 1 none of whose backward paths
/// runs forever.
pub const GROUNDED_AUTOMATON_JSON: &str = include_str!("../data/grounded.json");

/// The formula equivalent to [`GROUNDED_AUTOMATON_JSON`].
pub const GROUNDED_FORMULA: &str = include_str!("../data/grounded.sexp");

/// An automaton that accepts only if a neighbor is still in its initial
/// state when it moves. On a 2-cycle the verdict depends on whether the
/// nodes move in lock step.
pub const LOCKSTEP_JSON: &str = include_str!("../data/lockstep.json");

pub fn grounded_automaton() -> Automaton {
    Automaton::from_json(GROUNDED_AUTOMATON_JSON).expect("bundled automaton is valid")
}

pub fn grounded_formula() -> MuSystem {
    MuSystem::parse_with_bits(GROUNDED_FORMULA, 1).expect("bundled formula is valid")
}

pub fn lockstep_automaton() -> Automaton {
    Automaton::from_json(LOCKSTEP_JSON).expect("bundled automaton is valid")
}
