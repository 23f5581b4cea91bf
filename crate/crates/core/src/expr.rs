//! Expression trees over feature terminals, stored as flat prefix programs.
//!
//! A tree is a `Vec<Node>` in prefix order: each function node is followed
//! by its `arity` argument subtrees. Depth counts edges, so a lone terminal
//! has depth 0 and a function over terminals has depth 1.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Below this magnitude a denominator or logarithm argument is treated as zero.
pub const PROTECTION_THRESHOLD: f64 = 1e-6;

/// Maps overflowed and undefined intermediate values back into the finite range.
#[inline]
pub(crate) fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

#[inline]
pub fn protected_div(a: f64, b: f64) -> f64 {
    if b.abs() > PROTECTION_THRESHOLD {
        saturate(a / b)
    } else {
        1.0
    }
}

#[inline]
pub fn protected_sqrt(a: f64) -> f64 {
    a.abs().sqrt()
}

#[inline]
pub fn protected_log(a: f64) -> f64 {
    if a.abs() > PROTECTION_THRESHOLD {
        a.abs().ln()
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FuncSymbol {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Log,
    Abs,
    Neg,
    Min,
    Max,
}

impl FuncSymbol {
    pub const ALL: [FuncSymbol; 10] = [
        FuncSymbol::Add,
        FuncSymbol::Sub,
        FuncSymbol::Mul,
        FuncSymbol::Div,
        FuncSymbol::Sqrt,
        FuncSymbol::Log,
        FuncSymbol::Abs,
        FuncSymbol::Neg,
        FuncSymbol::Min,
        FuncSymbol::Max,
    ];

    pub const fn arity(self) -> usize {
        match self {
            FuncSymbol::Sqrt | FuncSymbol::Log | FuncSymbol::Abs | FuncSymbol::Neg => 1,
            _ => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            FuncSymbol::Add => "add",
            FuncSymbol::Sub => "sub",
            FuncSymbol::Mul => "mul",
            FuncSymbol::Div => "div",
            FuncSymbol::Sqrt => "sqrt",
            FuncSymbol::Log => "log",
            FuncSymbol::Abs => "abs",
            FuncSymbol::Neg => "neg",
            FuncSymbol::Min => "min",
            FuncSymbol::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Applies the protected function. Unary functions ignore `b`.
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let v = match self {
            FuncSymbol::Add => a + b,
            FuncSymbol::Sub => a - b,
            FuncSymbol::Mul => a * b,
            FuncSymbol::Div => return protected_div(a, b),
            FuncSymbol::Sqrt => return protected_sqrt(a),
            FuncSymbol::Log => return protected_log(a),
            FuncSymbol::Abs => return a.abs(),
            FuncSymbol::Neg => return -a,
            FuncSymbol::Min => a.min(b),
            FuncSymbol::Max => a.max(b),
        };
        saturate(v)
    }
}

impl fmt::Display for FuncSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Func(FuncSymbol),
    Feature(usize),
    /// Ephemeral constant. Only produced when a [`TreeInitConfig`] enables them.
    Const(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Func(f) => f.arity(),
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
}

impl ExprTree {
    pub fn feature(index: usize) -> Self {
        Self {
            nodes: vec![Node::Feature(index)],
        }
    }

    /// Builds a tree from prefix-ordered nodes, checking arities.
    pub fn from_prefix(nodes: Vec<Node>) -> Result<Self> {
        let mut open = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if open == 0 {
                return Err(Error::Parse(format!("trailing nodes after position {i}")));
            }
            if let Node::Const(c) = node {
                if !c.is_finite() {
                    return Err(Error::Parse(format!("non-finite constant {c}")));
                }
            }
            open = open - 1 + node.arity();
        }
        if open != 0 || nodes.is_empty() {
            return Err(Error::Parse("incomplete prefix program".into()));
        }
        Ok(Self { nodes })
    }

    /// Convenience constructor for a function applied to subtrees.
    pub fn func(symbol: FuncSymbol, children: Vec<ExprTree>) -> Result<Self> {
        if children.len() != symbol.arity() {
            return Err(Error::arg(format!(
                "{symbol} takes {} argument(s), got {}",
                symbol.arity(),
                children.len()
            )));
        }
        let mut nodes = vec![Node::Func(symbol)];
        for child in children {
            nodes.extend(child.nodes);
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Exclusive end of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        let mut open = 1usize;
        let mut end = start;
        while open > 0 {
            open = open - 1 + self.nodes[end].arity();
            end += 1;
        }
        end
    }

    /// Depth of every node below the root, in prefix order.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depths = Vec::with_capacity(self.nodes.len());
        // remaining argument slots per open ancestor
        let mut stack: Vec<usize> = Vec::new();
        for node in &self.nodes {
            depths.push(stack.len());
            if let Some(top) = stack.last_mut() {
                *top -= 1;
            }
            if node.arity() > 0 {
                stack.push(node.arity());
            }
            while stack.last() == Some(&0) {
                stack.pop();
            }
        }
        depths
    }

    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Feature(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    /// Evaluates the tree on every row of `x`.
    pub fn eval(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_features(x.n_cols())?;
        Ok(self.eval_columns_unchecked(&x.columns(), x.n_rows()))
    }

    /// Evaluates on column-major data (one `Vec` per feature).
    pub fn eval_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_features(columns.len())?;
        let n = columns.first().map_or(0, Vec::len);
        Ok(self.eval_columns_unchecked(columns, n))
    }

    fn check_features(&self, n_features: usize) -> Result<()> {
        match self.max_feature() {
            Some(index) if index >= n_features => Err(Error::FeatureIndex { index, n_features }),
            _ => Ok(()),
        }
    }

    fn eval_columns_unchecked(&self, columns: &[Vec<f64>], n: usize) -> Vec<f64> {
        // Reverse prefix order: every function finds its arguments on top of
        // the stack, first argument uppermost.
        let mut stack: Vec<Operand<'_>> = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Feature(i) => stack.push(Operand::Borrowed(&columns[i])),
                Node::Const(c) => stack.push(Operand::Const(c)),
                Node::Func(f) if f.arity() == 1 => {
                    let a = stack.pop().expect("arity checked at construction");
                    stack.push(Operand::Owned(apply_unary(f, a, n)));
                }
                Node::Func(f) => {
                    let a = stack.pop().expect("arity checked at construction");
                    let b = stack.pop().expect("arity checked at construction");
                    stack.push(Operand::Owned(apply_binary(f, a, b, n)));
                }
            }
        }
        stack.pop().expect("nonempty tree").into_vec(n)
    }
}

enum Operand<'a> {
    Borrowed(&'a [f64]),
    Const(f64),
    Owned(Vec<f64>),
}

impl Operand<'_> {
    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Operand::Borrowed(v) => v[i],
            Operand::Const(c) => *c,
            Operand::Owned(v) => v[i],
        }
    }

    fn into_vec(self, n: usize) -> Vec<f64> {
        match self {
            Operand::Borrowed(v) => v.to_vec(),
            Operand::Const(c) => vec![c; n],
            Operand::Owned(v) => v,
        }
    }
}

fn apply_unary(f: FuncSymbol, a: Operand<'_>, n: usize) -> Vec<f64> {
    match a {
        Operand::Owned(mut v) => {
            for x in &mut v {
                *x = f.apply(*x, 0.0);
            }
            v
        }
        a => (0..n).map(|i| f.apply(a.at(i), 0.0)).collect(),
    }
}

fn apply_binary(f: FuncSymbol, a: Operand<'_>, b: Operand<'_>, n: usize) -> Vec<f64> {
    match (a, b) {
        (Operand::Owned(mut v), b) => {
            for (i, x) in v.iter_mut().enumerate() {
                *x = f.apply(*x, b.at(i));
            }
            v
        }
        (a, Operand::Owned(mut v)) => {
            for (i, x) in v.iter_mut().enumerate() {
                *x = f.apply(a.at(i), *x);
            }
            v
        }
        (a, b) => (0..n).map(|i| f.apply(a.at(i), b.at(i))).collect(),
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_at(t: &ExprTree, pos: usize, f: &mut fmt::Formatter<'_>) -> Result<usize, fmt::Error> {
            match t.nodes[pos] {
                Node::Feature(i) => {
                    write!(f, "x{i}")?;
                    Ok(pos + 1)
                }
                Node::Const(c) => {
                    write!(f, "{c:?}")?;
                    Ok(pos + 1)
                }
                Node::Func(sym) => {
                    write!(f, "{sym}(")?;
                    let mut next = pos + 1;
                    for k in 0..sym.arity() {
                        if k > 0 {
                            f.write_str(", ")?;
                        }
                        next = write_at(t, next, f)?;
                    }
                    f.write_str(")")?;
                    Ok(next)
                }
            }
        }
        write_at(self, 0, f).map(|_| ())
    }
}

impl FromStr for ExprTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = Parser { src: s, pos: 0 };
        let mut nodes = Vec::new();
        parser.parse_node(&mut nodes)?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(Error::Parse(format!(
                "unexpected input at byte {} of '{s}'",
                parser.pos
            )));
        }
        ExprTree::from_prefix(nodes)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{c}' at byte {}", self.pos)))
        }
    }

    fn token(&mut self) -> &str {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| c == '(' || c == ')' || c == ',' || c.is_whitespace())
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn parse_node(&mut self, out: &mut Vec<Node>) -> Result<()> {
        let tok = self.token().to_owned();
        if tok.is_empty() {
            return Err(Error::Parse(format!("expected a node at byte {}", self.pos)));
        }
        if let Some(sym) = FuncSymbol::from_name(&tok) {
            out.push(Node::Func(sym));
            self.expect('(')?;
            for k in 0..sym.arity() {
                if k > 0 {
                    self.expect(',')?;
                }
                self.parse_node(out)?;
            }
            return self.expect(')');
        }
        if let Some(index) = tok.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
            out.push(Node::Feature(index));
            return Ok(());
        }
        match tok.parse::<f64>() {
            Ok(c) if c.is_finite() => {
                out.push(Node::Const(c));
                Ok(())
            }
            _ => Err(Error::Parse(format!("unknown token '{tok}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    Full,
    Grow,
    RampedHalfAndHalf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeInitConfig {
    pub min_depth: usize,
    /// Also the hard depth cap enforced by the variation operators.
    pub max_depth: usize,
    pub method: InitMethod,
    pub function_set: Vec<FuncSymbol>,
    /// Closed range for ephemeral constants; `None` keeps terminals to features only.
    pub constant_range: Option<(f64, f64)>,
}

impl Default for TreeInitConfig {
    fn default() -> Self {
        Self {
            min_depth: 2,
            max_depth: 6,
            method: InitMethod::RampedHalfAndHalf,
            function_set: FuncSymbol::ALL.to_vec(),
            constant_range: None,
        }
    }
}

impl TreeInitConfig {
    pub fn new(min_depth: usize, max_depth: usize, method: InitMethod) -> Result<Self> {
        let config = Self {
            min_depth,
            max_depth,
            method,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_depth < 1 || self.min_depth > self.max_depth {
            return Err(Error::arg(format!(
                "tree depths must satisfy 1 <= min_depth <= max_depth, got [{}, {}]",
                self.min_depth, self.max_depth
            )));
        }
        if self.function_set.is_empty() {
            return Err(Error::arg("empty function set"));
        }
        if let Some((lo, hi)) = self.constant_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::arg(format!("bad constant range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn random_terminal<R: Rng + ?Sized>(config: &TreeInitConfig, n_features: usize, rng: &mut R) -> Node {
    match config.constant_range {
        Some((lo, hi)) if rng.gen_range(0..=n_features) == n_features => {
            Node::Const(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
        }
        _ => Node::Feature(rng.gen_range(0..n_features)),
    }
}

fn grow_into<R: Rng + ?Sized>(
    out: &mut Vec<Node>,
    config: &TreeInitConfig,
    n_features: usize,
    depth: usize,
    target: usize,
    full: bool,
    rng: &mut R,
) {
    let n_terminals = n_features + usize::from(config.constant_range.is_some());
    let n_funcs = config.function_set.len();
    let pick_function =
        depth < target && (full || depth < config.min_depth || rng.gen_range(0..n_funcs + n_terminals) < n_funcs);
    if pick_function {
        let f = config.function_set[rng.gen_range(0..n_funcs)];
        out.push(Node::Func(f));
        for _ in 0..f.arity() {
            grow_into(out, config, n_features, depth + 1, target, full, rng);
        }
    } else {
        out.push(random_terminal(config, n_features, rng));
    }
}

fn random_tree_with<R: Rng + ?Sized>(config: &TreeInitConfig, n_features: usize, full: bool, rng: &mut R) -> ExprTree {
    let target = rng.gen_range(config.min_depth..=config.max_depth);
    let mut nodes = Vec::new();
    grow_into(&mut nodes, config, n_features, 0, target, full, rng);
    ExprTree { nodes }
}

/// Draws a tree whose depth lies in `[min_depth, max_depth]`.
///
/// The target depth is uniform over that interval. Full trees reach it on
/// every branch; grow trees force functions above `min_depth` and pick
/// freely between functions and terminals below it. Ramped half-and-half
/// flips a fair coin between the two.
pub fn random_tree<R: Rng + ?Sized>(config: &TreeInitConfig, n_features: usize, rng: &mut R) -> ExprTree {
    assert!(n_features >= 1, "random_tree needs at least one feature");
    let full = match config.method {
        InitMethod::Full => true,
        InitMethod::Grow => false,
        InitMethod::RampedHalfAndHalf => rng.gen_bool(0.5),
    };
    random_tree_with(config, n_features, full, rng)
}

/// Initial population. Under ramped half-and-half the method alternates
/// full/grow by index.
pub fn random_population<R: Rng + ?Sized>(
    config: &TreeInitConfig,
    n_pop: usize,
    n_features: usize,
    rng: &mut R,
) -> Vec<ExprTree> {
    assert!(n_features >= 1, "random_population needs at least one feature");
    (0..n_pop)
        .map(|i| {
            let full = match config.method {
                InitMethod::Full => true,
                InitMethod::Grow => false,
                InitMethod::RampedHalfAndHalf => i % 2 == 0,
            };
            random_tree_with(config, n_features, full, rng)
        })
        .collect()
}

fn splice(host: &ExprTree, at: usize, donor: &[Node]) -> ExprTree {
    let end = host.subtree_end(at);
    let mut nodes = Vec::with_capacity(host.len() - (end - at) + donor.len());
    nodes.extend_from_slice(&host.nodes[..at]);
    nodes.extend_from_slice(donor);
    nodes.extend_from_slice(&host.nodes[end..]);
    ExprTree { nodes }
}

/// Replaces a uniformly chosen node of `p1` with a uniformly chosen subtree
/// of `p2`. Returns a copy of `p1` when the child would exceed `max_depth`.
pub fn subtree_crossover<R: Rng + ?Sized>(p1: &ExprTree, p2: &ExprTree, max_depth: usize, rng: &mut R) -> ExprTree {
    let at = rng.gen_range(0..p1.len());
    let from = rng.gen_range(0..p2.len());
    let donor = &p2.nodes[from..p2.subtree_end(from)];
    let child = splice(p1, at, donor);
    if child.depth() > max_depth {
        p1.clone()
    } else {
        child
    }
}

/// Replaces a uniformly chosen node with a freshly grown subtree.
///
/// The replacement is drawn with its depth bounds clipped to the budget left
/// under `config.max_depth` at the chosen position; a position already at the
/// cap receives a terminal. The parent copy is returned if the child still
/// exceeds the cap.
pub fn subtree_mutation<R: Rng + ?Sized>(
    tree: &ExprTree,
    config: &TreeInitConfig,
    n_features: usize,
    rng: &mut R,
) -> ExprTree {
    let at = rng.gen_range(0..tree.len());
    let depth_at = tree.node_depths()[at];
    let budget = config.max_depth.saturating_sub(depth_at);
    let fresh = if budget == 0 {
        vec![random_terminal(config, n_features, rng)]
    } else {
        let sub = TreeInitConfig {
            min_depth: config.min_depth.min(budget),
            max_depth: budget,
            ..config.clone()
        };
        random_tree(&sub, n_features, rng).nodes
    };
    let child = splice(tree, at, &fresh);
    if child.depth() > config.max_depth {
        tree.clone()
    } else {
        child
    }
}
