//! Expression-tree programs.
//!
//! A [`Program`] is stored as a flat prefix-order vector of [`Node`]s. Every
//! subtree occupies a contiguous span, which keeps crossover and mutation to
//! slice operations.
//!
//! All operators are protected so evaluation is total: any finite input row
//! yields a finite output.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::Dataset;
use crate::metrics::mae;

/// Denominators and logarithm arguments below this magnitude are protected.
pub const PROTECT_EPS: f64 = 1e-6;
/// `exp` clamps its argument to `[-EXP_CLAMP, EXP_CLAMP]`.
pub const EXP_CLAMP: f64 = 32.0;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("parse error at token {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid size limits [{min}, {max}]")]
    Limits { min: usize, max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Exp,
    Log,
}

impl Op {
    pub const BINARY: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];
    pub const UNARY: [Op; 4] = [Op::Sin, Op::Cos, Op::Exp, Op::Log];
    pub const ALL: [Op; 8] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Sin,
        Op::Cos,
        Op::Exp,
        Op::Log,
    ];

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            Op::Sin | Op::Cos | Op::Exp | Op::Log => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Log => "log",
        }
    }

    fn from_symbol(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.symbol() == s)
    }

    #[inline]
    pub fn apply_unary(self, a: f64) -> f64 {
        let v = match self {
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Exp => a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Op::Log => {
                if a.abs() < PROTECT_EPS {
                    0.0
                } else {
                    a.abs().ln()
                }
            }
            _ => unreachable!("binary operator applied to one argument"),
        };
        saturate(v)
    }

    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        let v = match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b.abs() < PROTECT_EPS {
                    1.0
                } else {
                    a / b
                }
            }
            _ => unreachable!("unary operator applied to two arguments"),
        };
        saturate(v)
    }
}

/// Maps overflow to the largest finite magnitude and NaN to zero.
#[inline]
fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(f64::MIN, f64::MAX)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Op(Op),
    Feature(usize),
    Const(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Op(op) => op.arity(),
            _ => 0,
        }
    }
}

/// Inclusive bounds on program size (node count).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeLimits {
    pub min: usize,
    pub max: usize,
}

impl Default for SizeLimits {
    fn default() -> Self {
        SizeLimits { min: 3, max: 50 }
    }
}

impl SizeLimits {
    pub fn new(min: usize, max: usize) -> Result<Self, ExprError> {
        if min == 0 || min > max {
            return Err(ExprError::Limits { min, max });
        }
        Ok(SizeLimits { min, max })
    }

    pub fn contains(&self, size: usize) -> bool {
        (self.min..=self.max).contains(&size)
    }

    /// Deepest full binary tree that fits under `max`.
    fn max_depth(&self) -> usize {
        let d = ((self.max + 1) as f64).log2().floor() as usize;
        d.saturating_sub(1).max(1)
    }
}

/// Primitive set available to random generation and mutation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorSet {
    pub n_features: usize,
    pub erc_low: f64,
    pub erc_high: f64,
}

impl OperatorSet {
    pub fn new(n_features: usize) -> Self {
        OperatorSet {
            n_features,
            erc_low: -1.0,
            erc_high: 1.0,
        }
    }

    fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> Node {
        if self.n_features == 0 || rng.random_bool(0.5) {
            Node::Const(rng.random_range(self.erc_low..=self.erc_high))
        } else {
            Node::Feature(rng.random_range(0..self.n_features))
        }
    }

    fn random_op<R: Rng + ?Sized>(&self, rng: &mut R) -> Op {
        Op::ALL[rng.random_range(0..Op::ALL.len())]
    }

    fn random_node_of_arity<R: Rng + ?Sized>(&self, arity: usize, rng: &mut R) -> Node {
        match arity {
            0 => self.random_terminal(rng),
            1 => Node::Op(Op::UNARY[rng.random_range(0..Op::UNARY.len())]),
            _ => Node::Op(Op::BINARY[rng.random_range(0..Op::BINARY.len())]),
        }
    }
}

/// A symbolic-regression program plus its age in generations.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    nodes: Vec<Node>,
    pub age: u32,
}

impl Program {
    /// Builds a program from prefix-order nodes, checking that arities line up.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, ExprError> {
        if nodes.is_empty() {
            return Err(ExprError::Malformed("empty program".into()));
        }
        let mut open = 1usize;
        for (i, n) in nodes.iter().enumerate() {
            if open == 0 {
                return Err(ExprError::Malformed(format!("trailing nodes from index {i}")));
            }
            open = open - 1 + n.arity();
            if let Node::Const(c) = n {
                if !c.is_finite() {
                    return Err(ExprError::Malformed(format!("non-finite constant at {i}")));
                }
            }
        }
        if open != 0 {
            return Err(ExprError::Malformed(format!("{open} missing operand(s)")));
        }
        Ok(Program { nodes, age: 0 })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_constants(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Const(_)))
            .count()
    }

    pub fn constants(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Const(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Largest feature index referenced, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Feature(d) => Some(*d),
                _ => None,
            })
            .max()
    }

    /// One past the last index of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    /// Evaluates the program on a single feature row.
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter().rev() {
            let v = match *node {
                Node::Const(c) => c,
                Node::Feature(d) => row[d],
                Node::Op(op) if op.arity() == 1 => {
                    let a = stack.pop().expect("well-formed program");
                    op.apply_unary(a)
                }
                Node::Op(op) => {
                    let a = stack.pop().expect("well-formed program");
                    let b = stack.pop().expect("well-formed program");
                    op.apply_binary(a, b)
                }
            };
            stack.push(v);
        }
        stack.pop().expect("well-formed program")
    }

    /// Evaluates the program on every row of `data`, column-at-a-time.
    ///
    /// Element `t` is bit-identical to `evaluate(&data.row(t))`.
    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        let n = data.n_rows();
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
        let mut spare: Vec<Vec<f64>> = Vec::new();
        let fresh = |spare: &mut Vec<Vec<f64>>| spare.pop().unwrap_or_else(|| vec![0.0; n]);
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Const(c) => {
                    let mut buf = fresh(&mut spare);
                    buf.fill(c);
                    stack.push(buf);
                }
                Node::Feature(d) => {
                    let mut buf = fresh(&mut spare);
                    buf.copy_from_slice(data.column(d));
                    stack.push(buf);
                }
                Node::Op(op) if op.arity() == 1 => {
                    let a = stack.last_mut().expect("well-formed program");
                    for v in a.iter_mut() {
                        *v = op.apply_unary(*v);
                    }
                }
                Node::Op(op) => {
                    let mut a = stack.pop().expect("well-formed program");
                    let b = stack.pop().expect("well-formed program");
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x = op.apply_binary(*x, *y);
                    }
                    spare.push(b);
                    stack.push(a);
                }
            }
        }
        stack.pop().expect("well-formed program")
    }

    /// Renders the program as a prefix s-expression that [`FromStr`] parses back.
    pub fn to_sexpr(&self) -> String {
        fn go(nodes: &[Node], i: usize, out: &mut String) -> usize {
            match nodes[i] {
                Node::Const(c) => {
                    out.push_str(&format!("{c:?}"));
                    i + 1
                }
                Node::Feature(d) => {
                    out.push_str(&format!("x{d}"));
                    i + 1
                }
                Node::Op(op) => {
                    out.push('(');
                    out.push_str(op.symbol());
                    let mut j = i + 1;
                    for _ in 0..op.arity() {
                        out.push(' ');
                        j = go(nodes, j, out);
                    }
                    out.push(')');
                    j
                }
            }
        }
        let mut s = String::new();
        go(&self.nodes, 0, &mut s);
        s
    }

    fn with_constants(&self, values: &[f64]) -> Program {
        let mut it = values.iter();
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Const(_) => Node::Const(*it.next().expect("constant count matches")),
                other => *other,
            })
            .collect();
        Program {
            nodes,
            age: self.age,
        }
    }
}

fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut open = 1usize;
    let mut i = start;
    while open > 0 {
        open = open - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

impl fmt::Display for Program {
    /// Infix rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(nodes: &[Node], i: usize, f: &mut fmt::Formatter<'_>) -> Result<usize, fmt::Error> {
            match nodes[i] {
                Node::Const(c) => {
                    write!(f, "{c:.4}")?;
                    Ok(i + 1)
                }
                Node::Feature(d) => {
                    write!(f, "x{d}")?;
                    Ok(i + 1)
                }
                Node::Op(op) if op.arity() == 1 => {
                    write!(f, "{}(", op.symbol())?;
                    let j = go(nodes, i + 1, f)?;
                    write!(f, ")")?;
                    Ok(j)
                }
                Node::Op(op) => {
                    write!(f, "(")?;
                    let j = go(nodes, i + 1, f)?;
                    write!(f, " {} ", op.symbol())?;
                    let k = go(nodes, j, f)?;
                    write!(f, ")")?;
                    Ok(k)
                }
            }
        }
        go(&self.nodes, 0, f).map(|_| ())
    }
}

impl FromStr for Program {
    type Err = ExprError;

    /// Parses prefix s-expressions such as `(+ x0 (* 0.5 x1))`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut nodes = Vec::new();
        let mut pos = 0;
        parse_expr(&tokens, &mut pos, &mut nodes)?;
        if pos != tokens.len() {
            return Err(ExprError::Parse {
                pos,
                msg: "unexpected trailing tokens".into(),
            });
        }
        Program::from_nodes(nodes)
    }
}

fn parse_expr(tokens: &[&str], pos: &mut usize, out: &mut Vec<Node>) -> Result<(), ExprError> {
    let err = |pos: usize, msg: &str| ExprError::Parse {
        pos,
        msg: msg.to_string(),
    };
    let tok = *tokens.get(*pos).ok_or_else(|| err(*pos, "unexpected end of input"))?;
    *pos += 1;
    if tok == "(" {
        let sym = *tokens.get(*pos).ok_or_else(|| err(*pos, "missing operator"))?;
        let op = Op::from_symbol(sym).ok_or_else(|| err(*pos, "unknown operator"))?;
        *pos += 1;
        out.push(Node::Op(op));
        for _ in 0..op.arity() {
            parse_expr(tokens, pos, out)?;
        }
        match tokens.get(*pos) {
            Some(&")") => {
                *pos += 1;
                Ok(())
            }
            _ => Err(err(*pos, "expected ')'")),
        }
    } else if let Some(idx) = tok.strip_prefix('x') {
        let d = idx.parse().map_err(|_| err(*pos - 1, "bad feature index"))?;
        out.push(Node::Feature(d));
        Ok(())
    } else {
        let c: f64 = tok.parse().map_err(|_| err(*pos - 1, "bad constant"))?;
        out.push(Node::Const(c));
        Ok(())
    }
}

fn grow<R: Rng + ?Sized>(
    ops: &OperatorSet,
    depth: usize,
    max_depth: usize,
    full: bool,
    rng: &mut R,
    out: &mut Vec<Node>,
) {
    let terminal = if depth >= max_depth {
        true
    } else if depth == 0 || full {
        false
    } else {
        // uniform over the primitive set: 8 operators, 2 terminal kinds
        rng.random_range(0..Op::ALL.len() + 2) >= Op::ALL.len()
    };
    if terminal {
        out.push(ops.random_terminal(rng));
        return;
    }
    let op = ops.random_op(rng);
    out.push(Node::Op(op));
    for _ in 0..op.arity() {
        grow(ops, depth + 1, max_depth, full, rng, out);
    }
}

/// Random tree with exactly `size` nodes.
fn exact_size<R: Rng + ?Sized>(ops: &OperatorSet, size: usize, rng: &mut R, out: &mut Vec<Node>) {
    match size {
        0 => unreachable!(),
        1 => out.push(ops.random_terminal(rng)),
        2 => {
            out.push(ops.random_node_of_arity(1, rng));
            out.push(ops.random_terminal(rng));
        }
        _ => {
            out.push(ops.random_node_of_arity(2, rng));
            let left = rng.random_range(1..=size - 2);
            exact_size(ops, left, rng, out);
            exact_size(ops, size - 1 - left, rng, out);
        }
    }
}

const INIT_ATTEMPTS: usize = 100;

/// Ramped half-and-half initialization with size-limit rejection.
pub fn random_program<R: Rng + ?Sized>(
    limits: &SizeLimits,
    ops: &OperatorSet,
    rng: &mut R,
) -> Program {
    let max_depth = limits.max_depth();
    let min_depth = max_depth.min(2);
    let mut nodes = Vec::with_capacity(limits.max);
    for _ in 0..INIT_ATTEMPTS {
        nodes.clear();
        let depth = rng.random_range(min_depth..=max_depth);
        let full = rng.random_bool(0.5);
        grow(ops, 0, depth, full, rng, &mut nodes);
        if limits.contains(nodes.len()) {
            return Program { nodes, age: 0 };
        }
    }
    nodes.clear();
    let size = rng.random_range(limits.min..=limits.max);
    exact_size(ops, size, rng, &mut nodes);
    Program { nodes, age: 0 }
}

/// Replaces the subtree of `a` at `i` with the subtree of `b` at `j`.
pub fn splice(a: &Program, i: usize, b: &Program, j: usize) -> Vec<Node> {
    let end_i = a.subtree_end(i);
    let end_j = b.subtree_end(j);
    let mut nodes = Vec::with_capacity(a.size() - (end_i - i) + (end_j - j));
    nodes.extend_from_slice(&a.nodes[..i]);
    nodes.extend_from_slice(&b.nodes[j..end_j]);
    nodes.extend_from_slice(&a.nodes[end_i..]);
    nodes
}

const CROSSOVER_ATTEMPTS: usize = 10;

/// Subtree crossover: a uniformly chosen subtree of `p1` is replaced by a
/// uniformly chosen subtree of `p2`. Falls back to a copy of `p1` after ten
/// size-violating attempts.
pub fn subtree_crossover<R: Rng + ?Sized>(
    p1: &Program,
    p2: &Program,
    limits: &SizeLimits,
    rng: &mut R,
) -> Program {
    let age = p1.age.max(p2.age);
    for _ in 0..CROSSOVER_ATTEMPTS {
        let i = rng.random_range(0..p1.size());
        let j = rng.random_range(0..p2.size());
        let nodes = splice(p1, i, p2, j);
        if limits.contains(nodes.len()) {
            return Program { nodes, age };
        }
    }
    Program {
        nodes: p1.nodes.clone(),
        age,
    }
}

/// Replaces one uniformly chosen node with a random node of the same arity.
pub fn point_mutation<R: Rng + ?Sized>(parent: &Program, ops: &OperatorSet, rng: &mut R) -> Program {
    let mut nodes = parent.nodes.clone();
    let i = rng.random_range(0..nodes.len());
    nodes[i] = ops.random_node_of_arity(nodes[i].arity(), rng);
    Program {
        nodes,
        age: parent.age,
    }
}

/// Result of one hill-climbing pass, keeping the outputs so callers need not
/// re-evaluate.
#[derive(Clone, Debug)]
pub struct Climbed {
    pub program: Program,
    pub outputs: Vec<f64>,
    pub mae: f64,
}

/// One pass of Gaussian constant perturbation; the perturbed batch is kept
/// only if training MAE strictly improves.
pub fn hill_climb<R: Rng + ?Sized>(
    program: Program,
    outputs: Vec<f64>,
    train: &Dataset,
    noise_scale: f64,
    rng: &mut R,
) -> Climbed {
    let mae_before = finite_mae(&outputs, train.targets());
    let consts = program.constants();
    if consts.is_empty() || noise_scale <= 0.0 {
        return Climbed {
            program,
            outputs,
            mae: mae_before,
        };
    }
    let perturbed: Vec<f64> = consts
        .iter()
        .map(|&c| {
            let sd = noise_scale * (1.0 + c.abs());
            let noise = Normal::new(0.0, sd).expect("positive finite sd").sample(rng);
            saturate(c + noise)
        })
        .collect();
    let candidate = program.with_constants(&perturbed);
    let cand_out = candidate.predict(train);
    let cand_mae = finite_mae(&cand_out, train.targets());
    if cand_mae < mae_before {
        Climbed {
            program: candidate,
            outputs: cand_out,
            mae: cand_mae,
        }
    } else {
        Climbed {
            program,
            outputs,
            mae: mae_before,
        }
    }
}

/// Convenience wrapper around [`hill_climb`] that evaluates the input first.
pub fn hill_climb_constants<R: Rng + ?Sized>(
    program: &Program,
    train: &Dataset,
    noise_scale: f64,
    rng: &mut R,
) -> Program {
    let outputs = program.predict(train);
    hill_climb(program.clone(), outputs, train, noise_scale, rng).program
}

/// MAE with overflow mapped to `f64::MAX` so orderings stay total.
pub(crate) fn finite_mae(outputs: &[f64], targets: &[f64]) -> f64 {
    let m = mae(outputs, targets).expect("outputs and targets have equal length");
    if m.is_finite() {
        m
    } else {
        f64::MAX
    }
}
