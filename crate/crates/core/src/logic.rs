//! Backward modal logic and simultaneous least fixpoints over it.
//!
//! A [`MuSystem`] `μ(X₀..X_k).(φ₀..φ_k)` defines, on every digraph, the least
//! fixpoint of the operator that reassigns each `Xᵢ` to the nodes where
//! `φᵢ` holds. The formula holds at the nodes of the first component.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::graph::{Digraph, NodeIx, PointedDigraph};

/// Index of a variable within its system.
pub type VarIx = usize;

/// A set of nodes, indexed by [`NodeIx`].
pub type NodeSet = FixedBitSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("system has no variables")]
    EmptySystem,
    #[error("constant index {index} out of range for {bits}-bit labels")]
    ConstantOutOfRange { index: usize, bits: usize },
    #[error("variable index {0} out of range")]
    VariableOutOfRange(VarIx),
    #[error("valuation does not cover variable {0}")]
    ValuationMissing(VarIx),
    #[error("bit-width mismatch: formula has {formula}, graph has {graph}")]
    BitWidthMismatch { formula: usize, graph: usize },
}

/// A formula of backward modal logic. Negation only applies to constants,
/// so variables occur positively by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModalFormula {
    False,
    True,
    Const(usize),
    NegConst(usize),
    Var(VarIx),
    Or(Box<ModalFormula>, Box<ModalFormula>),
    And(Box<ModalFormula>, Box<ModalFormula>),
    /// Holds where some incoming neighbor satisfies the argument.
    BackDia(Box<ModalFormula>),
    /// Holds where every incoming neighbor satisfies the argument.
    BackBox(Box<ModalFormula>),
}

impl ModalFormula {
    pub fn or(a: ModalFormula, b: ModalFormula) -> Self {
        ModalFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn and(a: ModalFormula, b: ModalFormula) -> Self {
        ModalFormula::And(Box::new(a), Box::new(b))
    }

    pub fn dia(a: ModalFormula) -> Self {
        ModalFormula::BackDia(Box::new(a))
    }

    pub fn boxed(a: ModalFormula) -> Self {
        ModalFormula::BackBox(Box::new(a))
    }

    /// Balanced disjunction; `False` when empty.
    pub fn any_of(items: Vec<ModalFormula>) -> Self {
        balanced(items, ModalFormula::False, ModalFormula::or)
    }

    /// Balanced conjunction; `True` when empty.
    pub fn all_of(items: Vec<ModalFormula>) -> Self {
        balanced(items, ModalFormula::True, ModalFormula::and)
    }

    /// Largest number of modal operators on any root-to-leaf path.
    pub fn modal_depth(&self) -> usize {
        use ModalFormula::*;
        match self {
            False | True | Const(_) | NegConst(_) | Var(_) => 0,
            Or(a, b) | And(a, b) => a.modal_depth().max(b.modal_depth()),
            BackDia(a) | BackBox(a) => 1 + a.modal_depth(),
        }
    }

    pub fn visit(&self, f: &mut impl FnMut(&ModalFormula)) {
        f(self);
        match self {
            ModalFormula::Or(a, b) | ModalFormula::And(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ModalFormula::BackDia(a) | ModalFormula::BackBox(a) => a.visit(f),
            _ => {}
        }
    }
}

fn balanced(
    mut items: Vec<ModalFormula>,
    empty: ModalFormula,
    join: fn(ModalFormula, ModalFormula) -> ModalFormula,
) -> ModalFormula {
    match items.len() {
        0 => empty,
        1 => items.pop().unwrap(),
        n => {
            let right = items.split_off(n / 2);
            join(
                balanced(items, empty.clone(), join),
                balanced(right, empty, join),
            )
        }
    }
}

/// A simultaneous least-fixpoint system `μ(X₀..X_k).(φ₀..φ_k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuSystem {
    bits: usize,
    vars: Vec<String>,
    bodies: Vec<ModalFormula>,
}

impl MuSystem {
    pub fn new(
        bits: usize,
        vars: Vec<String>,
        bodies: Vec<ModalFormula>,
    ) -> Result<Self, LogicError> {
        if vars.is_empty() {
            return Err(LogicError::EmptySystem);
        }
        assert_eq!(vars.len(), bodies.len(), "one body per variable");
        let mut seen = HashMap::new();
        for v in &vars {
            if seen.insert(v.as_str(), ()).is_some() {
                return Err(LogicError::DuplicateVariable(v.clone()));
            }
        }
        let mut err = None;
        for body in &bodies {
            body.visit(&mut |f| match *f {
                ModalFormula::Const(i) | ModalFormula::NegConst(i) if i >= bits => {
                    err.get_or_insert(LogicError::ConstantOutOfRange { index: i, bits });
                }
                ModalFormula::Var(j) if j >= vars.len() => {
                    err.get_or_insert(LogicError::VariableOutOfRange(j));
                }
                _ => {}
            });
        }
        match err {
            Some(e) => Err(e),
            None => Ok(MuSystem { bits, vars, bodies }),
        }
    }

    /// Parses the s-expression format. The label width is the smallest one
    /// that covers every constant used.
    pub fn parse(text: &str) -> Result<Self, LogicError> {
        let (vars, bodies) = parse_system(text)?;
        let mut bits = 0;
        for b in &bodies {
            b.visit(&mut |f| {
                if let ModalFormula::Const(i) | ModalFormula::NegConst(i) = *f {
                    bits = bits.max(i + 1);
                }
            });
        }
        Self::new(bits, vars, bodies)
    }

    /// Parses the s-expression format for a fixed label width.
    pub fn parse_with_bits(text: &str, bits: usize) -> Result<Self, LogicError> {
        let (vars, bodies) = parse_system(text)?;
        Self::new(bits, vars, bodies)
    }

    /// The same system read over wider labels. Fails if a constant does not
    /// fit.
    pub fn with_bits(self, bits: usize) -> Result<Self, LogicError> {
        Self::new(bits, self.vars, self.bodies)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn bodies(&self) -> &[ModalFormula] {
        &self.bodies
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_index(&self, name: &str) -> Option<VarIx> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn to_sexp(&self) -> String {
        let mut out = String::from("(mu (");
        for (i, (v, b)) in self.vars.iter().zip(&self.bodies).enumerate() {
            if i > 0 {
                out.push_str("\n     ");
            }
            let _ = write!(out, "({v} ");
            self.write_formula(&mut out, b);
            out.push(')');
        }
        out.push_str("))\n");
        out
    }

    pub fn formula_to_sexp(&self, f: &ModalFormula) -> String {
        let mut out = String::new();
        self.write_formula(&mut out, f);
        out
    }

    fn write_formula(&self, out: &mut String, f: &ModalFormula) {
        use ModalFormula::*;
        match f {
            False => out.push_str("false"),
            True => out.push_str("true"),
            Const(i) => {
                let _ = write!(out, "(p {i})");
            }
            NegConst(i) => {
                let _ = write!(out, "(not-p {i})");
            }
            Var(j) => {
                let _ = write!(out, "(var {})", self.vars[*j]);
            }
            Or(a, b) | And(a, b) => {
                out.push_str(if matches!(f, Or(..)) { "(or " } else { "(and " });
                self.write_formula(out, a);
                out.push(' ');
                self.write_formula(out, b);
                out.push(')');
            }
            BackDia(a) | BackBox(a) => {
                out.push_str(if matches!(f, BackDia(_)) {
                    "(dia "
                } else {
                    "(box "
                });
                self.write_formula(out, a);
                out.push(')');
            }
        }
    }

    /// Total number of AST nodes over all bodies.
    pub fn size(&self) -> usize {
        let mut n = 0;
        for b in &self.bodies {
            b.visit(&mut |_| n += 1);
        }
        n
    }
}

impl fmt::Display for MuSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sexp())
    }
}

/// An assignment of node sets to the variables of a system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    sets: Vec<NodeSet>,
}

impl Valuation {
    pub fn empty(vars: usize, nodes: usize) -> Self {
        Valuation {
            sets: vec![NodeSet::with_capacity(nodes); vars],
        }
    }

    pub fn from_sets(sets: Vec<NodeSet>) -> Self {
        Valuation { sets }
    }

    pub fn get(&self, x: VarIx) -> &NodeSet {
        &self.sets[x]
    }

    pub fn sets(&self) -> &[NodeSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Componentwise inclusion.
    pub fn is_subset(&self, other: &Valuation) -> bool {
        self.sets.len() == other.sets.len()
            && self
                .sets
                .iter()
                .zip(&other.sets)
                .all(|(a, b)| a.is_subset(b))
    }
}

/// `⟦f⟧` on `g` under `s`, by direct recursion over the formula.
pub fn eval_modal(f: &ModalFormula, g: &Digraph, s: &Valuation) -> Result<NodeSet, LogicError> {
    use ModalFormula::*;
    let n = g.node_count();
    Ok(match f {
        False => NodeSet::with_capacity(n),
        True => {
            let mut all = NodeSet::with_capacity(n);
            all.insert_range(..);
            all
        }
        Const(i) | NegConst(i) => {
            if *i >= g.bits() {
                return Err(LogicError::ConstantOutOfRange {
                    index: *i,
                    bits: g.bits(),
                });
            }
            let want = matches!(f, Const(_));
            (0..n)
                .filter(|&v| g.label(v).bit(*i) == want)
                .collect_set(n)
        }
        Var(x) => {
            let set = s.sets.get(*x).ok_or(LogicError::ValuationMissing(*x))?;
            let mut out = set.clone();
            out.grow(n);
            out
        }
        Or(a, b) => {
            let mut l = eval_modal(a, g, s)?;
            l.union_with(&eval_modal(b, g, s)?);
            l
        }
        And(a, b) => {
            let mut l = eval_modal(a, g, s)?;
            l.intersect_with(&eval_modal(b, g, s)?);
            l
        }
        BackDia(a) => {
            let inner = eval_modal(a, g, s)?;
            (0..n)
                .filter(|&v| g.in_neighbors(v).any(|u| inner.contains(u)))
                .collect_set(n)
        }
        BackBox(a) => {
            let inner = eval_modal(a, g, s)?;
            (0..n)
                .filter(|&v| g.in_neighbors(v).all(|u| inner.contains(u)))
                .collect_set(n)
        }
    })
}

trait CollectSet {
    fn collect_set(self, n: usize) -> NodeSet;
}

impl<I: Iterator<Item = NodeIx>> CollectSet for I {
    fn collect_set(self, n: usize) -> NodeSet {
        let mut s = NodeSet::with_capacity(n);
        s.extend(self);
        s
    }
}

/// One application of the system's operator: each variable is reassigned
/// the set where its body holds under `s`.
pub fn apply_operator(sys: &MuSystem, g: &Digraph, s: &Valuation) -> Result<Valuation, LogicError> {
    check_bits(sys, g)?;
    let sets = sys
        .bodies
        .iter()
        .map(|b| eval_modal(b, g, s))
        .collect::<Result<_, _>>()?;
    Ok(Valuation { sets })
}

fn check_bits(sys: &MuSystem, g: &Digraph) -> Result<(), LogicError> {
    if sys.bits != g.bits() {
        Err(LogicError::BitWidthMismatch {
            formula: sys.bits,
            graph: g.bits(),
        })
    } else {
        Ok(())
    }
}

/// The least fixpoint together with the number of operator applications
/// needed to reach it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixpoint {
    pub valuation: Valuation,
    /// Applications of the operator, counting the final one that confirmed
    /// stability.
    pub iterations: usize,
}

/// Least fixpoint by approximant iteration from the all-empty valuation,
/// updating all variables simultaneously.
pub fn lfp(sys: &MuSystem, g: &Digraph) -> Result<Fixpoint, LogicError> {
    let program = Program::compile(sys);
    program.lfp(g, sys.bits)
}

/// The approximant chain `P⁰, P¹, …, Pⁿ` up to the first repetition
/// (`Pⁿ = Pⁿ⁺¹`, which is not repeated in the output).
pub fn approximants(sys: &MuSystem, g: &Digraph) -> Result<Vec<Valuation>, LogicError> {
    check_bits(sys, g)?;
    let program = Program::compile(sys);
    let mut eval = program.evaluator(g);
    let mut chain = vec![Valuation::empty(sys.var_count(), g.node_count())];
    loop {
        let next = eval.step(chain.last().unwrap());
        if &next == chain.last().unwrap() {
            return Ok(chain);
        }
        chain.push(next);
    }
}

/// Whether the point of `p` lies in the first component of the least
/// fixpoint.
pub fn satisfies(sys: &MuSystem, p: &PointedDigraph) -> Result<bool, LogicError> {
    Ok(lfp(sys, &p.graph)?.valuation.get(0).contains(p.point))
}

/// A system compiled to a hash-consed instruction list, evaluated over
/// word-packed node sets. Shared subformulas are evaluated once per
/// operator application.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    roots: Vec<u32>,
    vars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    False,
    True,
    Const(usize),
    NegConst(usize),
    Var(VarIx),
    Or(u32, u32),
    And(u32, u32),
    Dia(u32),
    Box(u32),
}

impl Program {
    pub fn compile(sys: &MuSystem) -> Self {
        let mut ops = Vec::new();
        let mut interned = HashMap::new();
        let roots = sys
            .bodies
            .iter()
            .map(|b| intern(b, &mut ops, &mut interned))
            .collect();
        Program {
            ops,
            roots,
            vars: sys.var_count(),
        }
    }

    /// Number of distinct subformulas.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn evaluator<'g>(&self, g: &'g Digraph) -> Evaluator<'_, 'g> {
        let words = g.node_count().div_ceil(64);
        Evaluator {
            program: self,
            g,
            words,
            arena: vec![0; self.ops.len() * words],
            vars: vec![0; self.vars * words],
        }
    }

    pub fn lfp(&self, g: &Digraph, bits: usize) -> Result<Fixpoint, LogicError> {
        if bits != g.bits() {
            return Err(LogicError::BitWidthMismatch {
                formula: bits,
                graph: g.bits(),
            });
        }
        let mut eval = self.evaluator(g);
        let mut iterations = 0;
        loop {
            iterations += 1;
            if !eval.step_in_place() {
                return Ok(Fixpoint {
                    valuation: eval.valuation(),
                    iterations,
                });
            }
        }
    }
}

fn intern(f: &ModalFormula, ops: &mut Vec<Op>, interned: &mut HashMap<Op, u32>) -> u32 {
    use ModalFormula as F;
    let op = match f {
        F::False => Op::False,
        F::True => Op::True,
        F::Const(i) => Op::Const(*i),
        F::NegConst(i) => Op::NegConst(*i),
        F::Var(x) => Op::Var(*x),
        F::Or(a, b) => Op::Or(intern(a, ops, interned), intern(b, ops, interned)),
        F::And(a, b) => Op::And(intern(a, ops, interned), intern(b, ops, interned)),
        F::BackDia(a) => Op::Dia(intern(a, ops, interned)),
        F::BackBox(a) => Op::Box(intern(a, ops, interned)),
    };
    *interned.entry(op).or_insert_with(|| {
        ops.push(op);
        (ops.len() - 1) as u32
    })
}

/// Evaluation state of a [`Program`] on one digraph.
pub struct Evaluator<'p, 'g> {
    program: &'p Program,
    g: &'g Digraph,
    words: usize,
    arena: Vec<u64>,
    vars: Vec<u64>,
}

impl Evaluator<'_, '_> {
    fn run(&mut self) {
        let w = self.words;
        let n = self.g.node_count();
        for (i, op) in self.program.ops.iter().enumerate() {
            let (done, rest) = self.arena.split_at_mut(i * w);
            let out = &mut rest[..w];
            let row = |j: u32| &done[j as usize * w..(j as usize + 1) * w];
            match *op {
                Op::False => out.fill(0),
                Op::True => {
                    out.fill(0);
                    (0..n).for_each(|v| set_bit(out, v));
                }
                Op::Const(b) | Op::NegConst(b) => {
                    out.fill(0);
                    let want = matches!(op, Op::Const(_));
                    for v in 0..n {
                        if self.g.label(v).bit(b) == want {
                            set_bit(out, v);
                        }
                    }
                }
                Op::Var(x) => out.copy_from_slice(&self.vars[x * w..(x + 1) * w]),
                Op::Or(a, b) => {
                    for ((o, x), y) in out.iter_mut().zip(row(a)).zip(row(b)) {
                        *o = x | y;
                    }
                }
                Op::And(a, b) => {
                    for ((o, x), y) in out.iter_mut().zip(row(a)).zip(row(b)) {
                        *o = x & y;
                    }
                }
                Op::Dia(a) | Op::Box(a) => {
                    let inner = row(a);
                    out.fill(0);
                    let dia = matches!(op, Op::Dia(_));
                    for v in 0..n {
                        let mut preds = self.g.in_neighbors(v);
                        let hit = if dia {
                            preds.any(|u| get_bit(inner, u))
                        } else {
                            preds.all(|u| get_bit(inner, u))
                        };
                        if hit {
                            set_bit(out, v);
                        }
                    }
                }
            }
        }
    }

    /// Applies the operator to the current valuation. Returns whether the
    /// valuation changed.
    pub fn step_in_place(&mut self) -> bool {
        self.run();
        let w = self.words;
        let mut changed = false;
        for (x, &root) in self.program.roots.iter().enumerate() {
            let src = &self.arena[root as usize * w..(root as usize + 1) * w];
            let dst = &mut self.vars[x * w..(x + 1) * w];
            if src != dst {
                dst.copy_from_slice(src);
                changed = true;
            }
        }
        changed
    }

    /// Applies the operator to `s` without touching the stored valuation.
    pub fn step(&mut self, s: &Valuation) -> Valuation {
        self.load(s);
        self.step_in_place();
        self.valuation()
    }

    pub fn load(&mut self, s: &Valuation) {
        let w = self.words;
        self.vars.fill(0);
        for (x, set) in s.sets.iter().enumerate().take(self.program.vars) {
            for v in set.ones() {
                set_bit(&mut self.vars[x * w..(x + 1) * w], v);
            }
        }
    }

    pub fn valuation(&self) -> Valuation {
        let w = self.words;
        let n = self.g.node_count();
        let sets = (0..self.program.vars)
            .map(|x| {
                let words = &self.vars[x * w..(x + 1) * w];
                (0..n).filter(|&v| get_bit(words, v)).collect_set(n)
            })
            .collect();
        Valuation { sets }
    }
}

fn set_bit(words: &mut [u64], i: usize) {
    words[i / 64] |= 1 << (i % 64);
}

fn get_bit(words: &[u64], i: usize) -> bool {
    words[i / 64] >> (i % 64) & 1 == 1
}

// --- s-expression reader -------------------------------------------------

#[derive(Debug)]
enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> LogicError {
    LogicError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn read_sexp(text: &str) -> Result<Sexp, LogicError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut done: Option<Sexp> = None;
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1, 1);
    let mut atom = String::new();
    let mut atom_pos = Pos { line, col };

    fn emit(
        item: Sexp,
        stack: &mut [(Vec<Sexp>, Pos)],
        done: &mut Option<Sexp>,
    ) -> Result<(), LogicError> {
        if let Some((top, _)) = stack.last_mut() {
            top.push(item);
            Ok(())
        } else if done.is_some() {
            Err(syntax(item.pos(), "trailing input after the system"))
        } else {
            *done = Some(item);
            Ok(())
        }
    }

    loop {
        let c = chars.next();
        let here = Pos { line, col };
        let boundary =
            matches!(c, None | Some('(' | ')' | ';')) || c.is_some_and(char::is_whitespace);
        if boundary && !atom.is_empty() {
            emit(
                Sexp::Atom(std::mem::take(&mut atom), atom_pos),
                &mut stack,
                &mut done,
            )?;
        }
        match c {
            None => break,
            Some('\n') => {
                line += 1;
                col = 0;
            }
            Some(';') => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        col = 0;
                        break;
                    }
                }
            }
            Some('(') => stack.push((Vec::new(), here)),
            Some(')') => {
                let (items, pos) = stack.pop().ok_or_else(|| syntax(here, "unbalanced ')'"))?;
                emit(Sexp::List(items, pos), &mut stack, &mut done)?;
            }
            Some(c) if c.is_whitespace() => {}
            Some(c) => {
                if atom.is_empty() {
                    atom_pos = here;
                }
                atom.push(c);
            }
        }
        col += 1;
    }
    if let Some((_, pos)) = stack.last() {
        return Err(syntax(*pos, "unclosed '('"));
    }
    done.ok_or_else(|| syntax(Pos { line, col }, "empty input"))
}

fn parse_system(text: &str) -> Result<(Vec<String>, Vec<ModalFormula>), LogicError> {
    let top = read_sexp(text)?;
    let Sexp::List(items, pos) = &top else {
        return Err(syntax(top.pos(), "expected (mu (...))"));
    };
    match items.as_slice() {
        [Sexp::Atom(mu, _), Sexp::List(defs, _)] if mu == "mu" => {
            let mut vars = Vec::with_capacity(defs.len());
            for d in defs {
                match d {
                    Sexp::List(pair, _) if pair.len() == 2 => match &pair[0] {
                        Sexp::Atom(name, _) => vars.push(name.clone()),
                        other => return Err(syntax(other.pos(), "expected a variable name")),
                    },
                    other => return Err(syntax(other.pos(), "expected (NAME formula)")),
                }
            }
            let index: HashMap<&str, VarIx> = vars
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i))
                .collect();
            if index.len() != vars.len() {
                let dup = vars
                    .iter()
                    .enumerate()
                    .find(|(i, v)| index[v.as_str()] != *i)
                    .map(|(_, v)| v.clone())
                    .unwrap();
                return Err(LogicError::DuplicateVariable(dup));
            }
            let bodies = defs
                .iter()
                .map(|d| match d {
                    Sexp::List(pair, _) => parse_formula(&pair[1], &index),
                    _ => unreachable!(),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((vars, bodies))
        }
        _ => Err(syntax(*pos, "expected (mu ((NAME formula) ...))")),
    }
}

fn parse_formula(s: &Sexp, index: &HashMap<&str, VarIx>) -> Result<ModalFormula, LogicError> {
    use ModalFormula as F;
    match s {
        Sexp::Atom(a, pos) => match a.as_str() {
            "true" => Ok(F::True),
            "false" => Ok(F::False),
            other => Err(syntax(*pos, format!("unexpected atom {other:?}"))),
        },
        Sexp::List(items, pos) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h, _), rest)) => (h.as_str(), rest),
                _ => return Err(syntax(*pos, "expected an operator")),
            };
            let int = |args: &[Sexp]| -> Result<usize, LogicError> {
                match args {
                    [Sexp::Atom(n, p)] => n
                        .parse()
                        .map_err(|_| syntax(*p, format!("expected a constant index, got {n:?}"))),
                    _ => Err(syntax(*pos, format!("{head} takes one index"))),
                }
            };
            let one = |args: &[Sexp]| -> Result<ModalFormula, LogicError> {
                match args {
                    [f] => parse_formula(f, index),
                    _ => Err(syntax(*pos, format!("{head} takes one argument"))),
                }
            };
            match head {
                "p" => Ok(F::Const(int(args)?)),
                "not-p" => Ok(F::NegConst(int(args)?)),
                "var" => match args {
                    [Sexp::Atom(name, _)] => index
                        .get(name.as_str())
                        .map(|&x| F::Var(x))
                        .ok_or_else(|| LogicError::UnknownVariable(name.clone())),
                    _ => Err(syntax(*pos, "var takes one name")),
                },
                "dia" => Ok(F::dia(one(args)?)),
                "box" => Ok(F::boxed(one(args)?)),
                "or" | "and" => {
                    if args.len() < 2 {
                        return Err(syntax(*pos, format!("{head} takes at least two arguments")));
                    }
                    let join = if head == "or" { F::or } else { F::and };
                    let mut it = args.iter();
                    let mut acc = parse_formula(it.next().unwrap(), index)?;
                    for a in it {
                        acc = join(acc, parse_formula(a, index)?);
                    }
                    Ok(acc)
                }
                other => Err(syntax(*pos, format!("unknown operator {other:?}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::Label;

    fn single(label: &str, self_loop: bool) -> Digraph {
        Digraph::new(
            label.len(),
            vec!["v".into()],
            vec![Label::parse(label).unwrap()],
            if self_loop { vec![(0, 0)] } else { vec![] },
        )
        .unwrap()
    }

    fn set(n: usize, members: &[usize]) -> NodeSet {
        members.iter().copied().collect_set(n)
    }

    #[test]
    fn parse_grounded_formula() {
        let sys = fixtures::grounded_formula();
        assert_eq!(sys.vars(), ["X1", "X2"]);
        assert_eq!(sys.bits(), 1);
        use ModalFormula as F;
        assert_eq!(
            sys.bodies()[0],
            F::or(F::and(F::Const(0), F::Var(1)), F::dia(F::Var(0)))
        );
        assert_eq!(sys.bodies()[1], F::boxed(F::Var(1)));
        let again = MuSystem::parse(&sys.to_sexp()).unwrap();
        assert_eq!(again, sys);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            MuSystem::parse("(mu ((X0 (var X9))))").unwrap_err(),
            LogicError::UnknownVariable("X9".into())
        );
        assert_eq!(
            MuSystem::parse_with_bits("(mu ((X0 (p 1))))", 1).unwrap_err(),
            LogicError::ConstantOutOfRange { index: 1, bits: 1 }
        );
        assert!(matches!(
            MuSystem::parse("(mu ((X0 (dia (var X0)))"),
            Err(LogicError::Syntax { .. })
        ));
        assert!(matches!(
            MuSystem::parse("(mu ((X0 (not (var X0)))))"),
            Err(LogicError::Syntax { .. })
        ));
        assert_eq!(
            MuSystem::parse("(mu ((X true) (X false)))").unwrap_err(),
            LogicError::DuplicateVariable("X".into())
        );
        assert!(matches!(
            MuSystem::parse("(mu ())"),
            Err(LogicError::EmptySystem)
        ));
    }

    #[test]
    fn nary_connectives_desugar_left() {
        let sys = MuSystem::parse("(mu ((X (and (p 0) (p 1) (p 2)))))").unwrap();
        use ModalFormula as F;
        assert_eq!(
            sys.bodies()[0],
            F::and(F::and(F::Const(0), F::Const(1)), F::Const(2))
        );
        assert_eq!(sys.bits(), 3);
    }

    #[test]
    fn true_system_defines_everything() {
        let sys = MuSystem::parse("(mu ((X0 true)))").unwrap();
        let g = single("", true);
        let fp = lfp(&sys, &g).unwrap();
        assert_eq!(fp.valuation.get(0), &set(1, &[0]));
        assert_eq!(fp.iterations, 2);
    }

    #[test]
    fn modal_clauses() {
        let g = Digraph::from_json(
            r#"{"bits":1,"nodes":["u","v"],"labels":{"u":"1","v":"0"},"edges":[["u","v"]]}"#,
        )
        .unwrap();
        let s = Valuation::from_sets(vec![set(2, &[0])]);
        use ModalFormula as F;
        assert_eq!(
            eval_modal(&F::dia(F::Var(0)), &g, &s).unwrap(),
            set(2, &[1])
        );
        // u has no incoming edges, so box holds vacuously there
        assert_eq!(
            eval_modal(&F::boxed(F::False), &g, &s).unwrap(),
            set(2, &[0])
        );
        assert_eq!(
            eval_modal(&F::and(F::Const(0), F::NegConst(0)), &g, &s).unwrap(),
            set(2, &[])
        );
        assert_eq!(
            eval_modal(&F::Var(3), &g, &s).unwrap_err(),
            LogicError::ValuationMissing(3)
        );
    }

    #[test]
    fn grounded_formula_on_single_nodes() {
        let sys = fixtures::grounded_formula();
        // P⁰=(∅,∅), P¹=(∅,{v}), P²=({v},{v}), P³=P²
        let chain = approximants(&sys, &single("1", false)).unwrap();
        assert_eq!(chain.len(), 3);
        assert_eq!(chain[1].sets(), [set(1, &[]), set(1, &[0])]);
        assert_eq!(chain[2].sets(), [set(1, &[0]), set(1, &[0])]);
        let fp = lfp(&sys, &single("1", false)).unwrap();
        assert_eq!(fp.iterations, 3);
        assert!(satisfies(&sys, &PointedDigraph::at(single("1", false), 0)).unwrap());

        let fp = lfp(&sys, &single("1", true)).unwrap();
        assert_eq!(fp.valuation.sets(), [set(1, &[]), set(1, &[])]);
        assert_eq!(fp.iterations, 1);

        assert!(!satisfies(&sys, &PointedDigraph::at(single("0", false), 0)).unwrap());
    }

    #[test]
    fn grounded_formula_on_chain() {
        let g = Digraph::from_json(
            r#"{"bits":1,"nodes":["u","v"],"labels":{"u":"1","v":"0"},"edges":[["u","v"]]}"#,
        )
        .unwrap();
        let sys = fixtures::grounded_formula();
        assert!(satisfies(&sys, &PointedDigraph::new(g, "v").unwrap()).unwrap());
    }

    #[test]
    fn false_system_is_unsatisfiable() {
        let sys = MuSystem::parse("(mu ((X0 false)))").unwrap();
        assert!(!satisfies(&sys, &PointedDigraph::at(single("", true), 0)).unwrap());
    }

    #[test]
    fn bit_width_mismatch() {
        let sys = fixtures::grounded_formula();
        assert_eq!(
            lfp(&sys, &single("", false)).unwrap_err(),
            LogicError::BitWidthMismatch {
                formula: 1,
                graph: 0
            }
        );
    }

    #[test]
    fn balanced_builders() {
        use ModalFormula as F;
        assert_eq!(F::any_of(vec![]), F::False);
        assert_eq!(F::all_of(vec![]), F::True);
        let big = F::any_of((0..1000).map(F::Var).collect());
        assert!(big.modal_depth() == 0);
    }
}
