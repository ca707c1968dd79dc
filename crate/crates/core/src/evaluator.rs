//! Deterministic function descriptions with a size metric.
//!
//! An [`Evaluator`] maps `{0,1}^n_in → {0,1}^n_out` (both at most 64 bits) by a
//! composition tree of primitives. Every gate, table row, listed sparse row,
//! program edge and constant costs 1; plain wiring (input wires and fixed-bit
//! substitution) is free. A sub-evaluator referenced `k` times is counted `k`
//! times, so the size is that of the fully expanded tree.
//!
//! Evaluation of a large shared sub-evaluator can be accelerated with
//! [`Evaluator::tabulate`], which memoizes its outputs without changing its
//! description or size.

use crate::bits;
use crate::gf2k::Field;
use crate::obp::Obp;
use crate::rational::{self, Q};
use crate::table::{SparseTable, TruthTable};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("input has length {found}, evaluator takes {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("width {0} exceeds 64 bits")]
    TooWide(usize),
    #[error("{what}: expected width {expected}, found {found}")]
    Width { what: &'static str, expected: usize, found: usize },
    #[error("input wire {wire} out of range for {n_in} inputs")]
    Wire { wire: usize, n_in: usize },
    #[error("bad document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One argument bit-group of a table, program, decoder or call.
#[derive(Debug, Clone)]
pub enum Src {
    In(usize),
    NotIn(usize),
    Bit(bool),
    Node(Node),
}

impl Src {
    fn width(&self) -> usize {
        match self {
            Src::Node(n) => n.width(),
            _ => 1,
        }
    }

    fn cost(&self) -> u128 {
        match self {
            Src::Node(n) => n.cost(),
            _ => 0,
        }
    }

    #[inline]
    fn eval(&self, x: u64, n_in: usize) -> u64 {
        match self {
            Src::In(i) => (x >> (n_in - 1 - i)) & 1,
            Src::NotIn(i) => !(x >> (n_in - 1 - i)) & 1,
            Src::Bit(b) => *b as u64,
            Src::Node(n) => n.eval(x, n_in),
        }
    }
}

/// Input wires `0..n`.
pub fn wires(n: usize) -> Vec<Src> {
    (0..n).map(Src::In).collect()
}

#[derive(Debug, Clone)]
pub struct Node {
    kind: Kind,
    width: usize,
}

#[derive(Debug, Clone)]
enum Kind {
    Const(u64),
    Select(usize),
    Xor(Vec<Src>),
    And(Vec<Src>),
    Maj(Vec<Src>),
    WeightedMaj(Vec<(u64, Node)>),
    Inner(Vec<Src>, Vec<Src>),
    Lookup(Vec<Src>, Arc<TruthTable>),
    Sparse(Vec<Src>, Arc<SparseTable>),
    Program(Vec<Src>, Arc<Obp>),
    Decode { field: Arc<Field>, degree: usize, args: Vec<Src> },
    Plurality { children: Vec<Node>, k: usize },
    Call(Vec<Src>, Arc<Evaluator>),
    Concat(Vec<Src>),
    Project(Box<Node>, Vec<usize>),
}

fn width_of(srcs: &[Src]) -> usize {
    srcs.iter().map(Src::width).sum()
}

fn cost_of(srcs: &[Src]) -> u128 {
    srcs.iter().map(Src::cost).fold(0u128, |a, b| a.saturating_add(b))
}

#[inline]
fn eval_srcs(srcs: &[Src], x: u64, n_in: usize) -> u64 {
    let mut out = 0u64;
    for s in srcs {
        let w = s.width();
        let v = s.eval(x, n_in);
        out = if w >= 64 { v } else { (out << w) | v };
    }
    out
}

fn check_width(w: usize) -> Result<usize> {
    if w > 64 {
        Err(EvalError::TooWide(w))
    } else {
        Ok(w)
    }
}

/// Cost charged for one Berlekamp–Welch decode over a field of size `N`: `N³`.
pub fn decode_cost(n: usize) -> u128 {
    (n as u128).pow(3)
}

impl Node {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn constant(value: u64, width: usize) -> Result<Node> {
        check_width(width)?;
        Ok(Node { kind: Kind::Const(value & bits::mask(width)), width })
    }

    pub fn select(i: usize) -> Node {
        Node { kind: Kind::Select(i), width: 1 }
    }

    /// Parity of all argument bits.
    pub fn xor(args: Vec<Src>) -> Node {
        Node { kind: Kind::Xor(args), width: 1 }
    }

    pub fn and(args: Vec<Src>) -> Node {
        Node { kind: Kind::And(args), width: 1 }
    }

    /// 1 iff strictly more than half the argument bits are 1.
    pub fn maj(args: Vec<Src>) -> Node {
        Node { kind: Kind::Maj(args), width: 1 }
    }

    /// Majority over one-bit children where child `j` carries weight `w_j`;
    /// costs as `w_j` separate copies.
    pub fn weighted_maj(children: Vec<(u64, Node)>) -> Result<Node> {
        for (_, c) in &children {
            if c.width != 1 {
                return Err(EvalError::Width { what: "majority input", expected: 1, found: c.width });
            }
        }
        Ok(Node { kind: Kind::WeightedMaj(children), width: 1 })
    }

    pub fn inner(a: Vec<Src>, b: Vec<Src>) -> Result<Node> {
        let (wa, wb) = (width_of(&a), width_of(&b));
        if wa != wb {
            return Err(EvalError::Width { what: "inner product", expected: wa, found: wb });
        }
        check_width(wa)?;
        Ok(Node { kind: Kind::Inner(a, b), width: 1 })
    }

    pub fn lookup(args: Vec<Src>, table: Arc<TruthTable>) -> Result<Node> {
        let w = width_of(&args);
        if w != table.n_in() {
            return Err(EvalError::Width { what: "table index", expected: table.n_in(), found: w });
        }
        Ok(Node { width: table.n_out(), kind: Kind::Lookup(args, table) })
    }

    pub fn sparse(args: Vec<Src>, table: Arc<SparseTable>) -> Result<Node> {
        let w = width_of(&args);
        if w != table.n_in {
            return Err(EvalError::Width { what: "sparse index", expected: table.n_in, found: w });
        }
        check_width(table.n_out)?;
        Ok(Node { width: table.n_out, kind: Kind::Sparse(args, table) })
    }

    /// Outputs 1 iff the program ends in a label-1 state.
    pub fn program(args: Vec<Src>, obp: Arc<Obp>) -> Result<Node> {
        let w = width_of(&args);
        if w != obp.len() {
            return Err(EvalError::Width { what: "program input", expected: obp.len(), found: w });
        }
        check_width(w)?;
        Ok(Node { kind: Kind::Program(args, obp), width: 1 })
    }

    /// Decodes the word `(b_1, …, b_N)` (each `k` bits); outputs a success flag
    /// followed by `q(a_1) = q(0)` (zero on failure).
    pub fn decode(field: Arc<Field>, degree: usize, args: Vec<Src>) -> Result<Node> {
        let k = field.k() as usize;
        let w = width_of(&args);
        if w != k * field.size() {
            return Err(EvalError::Width { what: "decoder word", expected: k * field.size(), found: w });
        }
        check_width(w)?;
        Ok(Node { width: k + 1, kind: Kind::Decode { field, degree, args } })
    }

    /// Most frequent value among children whose flag bit is set; ties go to the
    /// smaller value and no votes give 0.
    pub fn plurality(children: Vec<Node>, k: usize) -> Result<Node> {
        for c in &children {
            if c.width != k + 1 {
                return Err(EvalError::Width { what: "plurality vote", expected: k + 1, found: c.width });
            }
        }
        Ok(Node { kind: Kind::Plurality { children, k }, width: k })
    }

    pub fn call(args: Vec<Src>, inner: Arc<Evaluator>) -> Result<Node> {
        let w = width_of(&args);
        if w != inner.n_in {
            return Err(EvalError::Width { what: "call arguments", expected: inner.n_in, found: w });
        }
        Ok(Node { width: inner.n_out, kind: Kind::Call(args, inner) })
    }

    pub fn concat(args: Vec<Src>) -> Result<Node> {
        let w = check_width(width_of(&args))?;
        Ok(Node { kind: Kind::Concat(args), width: w })
    }

    /// The listed output bits of `child`, in order.
    pub fn project(child: Node, picks: Vec<usize>) -> Result<Node> {
        if let Some(&p) = picks.iter().find(|&&p| p >= child.width) {
            return Err(EvalError::Width { what: "projection", expected: child.width, found: p + 1 });
        }
        let w = check_width(picks.len())?;
        Ok(Node { kind: Kind::Project(Box::new(child), picks), width: w })
    }

    pub fn cost(&self) -> u128 {
        match &self.kind {
            Kind::Const(_) | Kind::Select(_) => 1,
            Kind::Xor(a) | Kind::And(a) | Kind::Maj(a) => 1u128.saturating_add(cost_of(a)),
            Kind::WeightedMaj(c) => c.iter().fold(1u128, |acc, (w, n)| acc.saturating_add((*w as u128).saturating_mul(n.cost()))),
            Kind::Inner(a, b) => 1u128.saturating_add(cost_of(a)).saturating_add(cost_of(b)),
            Kind::Lookup(a, t) => (t.rows() as u128).saturating_add(cost_of(a)),
            Kind::Sparse(a, t) => (t.len() as u128 + 1).saturating_add(cost_of(a)),
            Kind::Program(a, o) => program_cost(o).saturating_add(cost_of(a)),
            Kind::Decode { field, args, .. } => decode_cost(field.size()).saturating_add(cost_of(args)),
            Kind::Plurality { children, .. } => children.iter().fold(1u128, |acc, n| acc.saturating_add(n.cost())),
            Kind::Call(a, e) => e.size().saturating_add(cost_of(a)),
            Kind::Concat(a) => cost_of(a),
            Kind::Project(c, _) => c.cost(),
        }
    }

    fn eval(&self, x: u64, n_in: usize) -> u64 {
        match &self.kind {
            Kind::Const(v) => *v,
            Kind::Select(i) => (x >> (n_in - 1 - i)) & 1,
            Kind::Xor(a) => {
                let mut p = 0u32;
                for s in a {
                    p ^= s.eval(x, n_in).count_ones();
                }
                (p & 1) as u64
            }
            Kind::And(a) => {
                for s in a {
                    let w = s.width();
                    if s.eval(x, n_in) != bits::mask(w) {
                        return 0;
                    }
                }
                1
            }
            Kind::Maj(a) => {
                let (mut ones, mut total) = (0usize, 0usize);
                for s in a {
                    ones += s.eval(x, n_in).count_ones() as usize;
                    total += s.width();
                }
                (2 * ones > total) as u64
            }
            Kind::WeightedMaj(c) => {
                let (mut ones, mut total) = (0u128, 0u128);
                for (w, n) in c {
                    total += *w as u128;
                    if n.eval(x, n_in) == 1 {
                        ones += *w as u128;
                    }
                }
                (2 * ones > total) as u64
            }
            Kind::Inner(a, b) => ((eval_srcs(a, x, n_in) & eval_srcs(b, x, n_in)).count_ones() & 1) as u64,
            Kind::Lookup(a, t) => t.get(eval_srcs(a, x, n_in)),
            Kind::Sparse(a, t) => t.get(eval_srcs(a, x, n_in)),
            Kind::Program(a, o) => {
                let y = eval_srcs(a, x, n_in);
                num_traits::One::is_one(o.label(o.run_packed(y))) as u64
            }
            Kind::Decode { field, degree, args } => {
                let word_bits = eval_srcs(args, x, n_in);
                let k = field.k() as usize;
                let n = field.size();
                let word: Vec<u32> = (0..n).map(|i| ((word_bits >> ((n - 1 - i) * k)) & bits::mask(k)) as u32).collect();
                match field.rs_decode_poly(&word, *degree) {
                    Ok(Some(q)) => (1u64 << k) | q[0] as u64,
                    _ => 0,
                }
            }
            Kind::Plurality { children, k } => {
                let mut counts: Vec<(u64, usize)> = Vec::new();
                for c in children {
                    let v = c.eval(x, n_in);
                    if v >> k & 1 == 1 {
                        let val = v & bits::mask(*k);
                        match counts.iter_mut().find(|e| e.0 == val) {
                            Some(e) => e.1 += 1,
                            None => counts.push((val, 1)),
                        }
                    }
                }
                counts.sort();
                let mut best: Option<(u64, usize)> = None;
                for (v, c) in counts {
                    if best.is_none_or(|b| c > b.1) {
                        best = Some((v, c));
                    }
                }
                best.map_or(0, |b| b.0)
            }
            Kind::Call(a, e) => e.run_packed(eval_srcs(a, x, n_in)),
            Kind::Concat(a) => eval_srcs(a, x, n_in),
            Kind::Project(c, picks) => {
                let v = c.eval(x, n_in);
                let w = c.width;
                picks.iter().fold(0u64, |acc, &p| (acc << 1) | ((v >> (w - 1 - p)) & 1))
            }
        }
    }

    fn check_wires(&self, n_in: usize) -> Result<()> {
        let srcs = |a: &[Src]| -> Result<()> {
            for s in a {
                match s {
                    Src::In(i) | Src::NotIn(i) if *i >= n_in => return Err(EvalError::Wire { wire: *i, n_in }),
                    Src::Node(n) => n.check_wires(n_in)?,
                    _ => {}
                }
            }
            Ok(())
        };
        match &self.kind {
            Kind::Const(_) => Ok(()),
            Kind::Select(i) => {
                if *i >= n_in {
                    Err(EvalError::Wire { wire: *i, n_in })
                } else {
                    Ok(())
                }
            }
            Kind::Xor(a) | Kind::And(a) | Kind::Maj(a) | Kind::Concat(a) => srcs(a),
            Kind::Lookup(a, _) | Kind::Sparse(a, _) | Kind::Program(a, _) | Kind::Call(a, _) => srcs(a),
            Kind::Decode { args, .. } => srcs(args),
            Kind::Inner(a, b) => {
                srcs(a)?;
                srcs(b)
            }
            Kind::WeightedMaj(c) => c.iter().try_for_each(|(_, n)| n.check_wires(n_in)),
            Kind::Plurality { children, .. } => children.iter().try_for_each(|n| n.check_wires(n_in)),
            Kind::Project(c, _) => c.check_wires(n_in),
        }
    }
}

fn program_cost(o: &Obp) -> u128 {
    let w = o.widths();
    let edges: usize = w[..w.len() - 1].iter().map(|x| 2 * x).sum();
    (edges + w[w.len() - 1]) as u128
}

/// Largest input length for which [`Evaluator::tabulate`] builds a cache.
pub const TABULATE_LIMIT: usize = 26;

#[derive(Debug)]
pub struct Evaluator {
    n_in: usize,
    n_out: usize,
    root: Node,
    size: OnceLock<u128>,
    cache: OnceLock<Arc<TruthTable>>,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Evaluator { n_in: self.n_in, n_out: self.n_out, root: self.root.clone(), size: self.size.clone(), cache: self.cache.clone() }
    }
}

impl Evaluator {
    pub fn new(n_in: usize, root: Node) -> Result<Evaluator> {
        check_width(n_in)?;
        let n_out = check_width(root.width())?;
        root.check_wires(n_in)?;
        Ok(Evaluator { n_in, n_out, root, size: OnceLock::new(), cache: OnceLock::new() })
    }

    pub fn constant(n_in: usize, value: u64, width: usize) -> Result<Evaluator> {
        Evaluator::new(n_in, Node::constant(value, width)?)
    }

    pub fn select(n_in: usize, i: usize) -> Result<Evaluator> {
        Evaluator::new(n_in, Node::select(i))
    }

    /// The table itself, wired straight to the inputs.
    pub fn table(table: Arc<TruthTable>) -> Evaluator {
        let n = table.n_in();
        Evaluator::new(n, Node::lookup(wires(n), table).unwrap()).unwrap()
    }

    pub fn sparse(table: Arc<SparseTable>) -> Evaluator {
        let n = table.n_in;
        Evaluator::new(n, Node::sparse(wires(n), table).unwrap()).unwrap()
    }

    pub fn program(obp: Arc<Obp>) -> Result<Evaluator> {
        let n = obp.len();
        Evaluator::new(n, Node::program(wires(n), obp)?)
    }

    /// Bitwise complement of a one-bit evaluator.
    pub fn complement(e: Arc<Evaluator>) -> Result<Evaluator> {
        let n = e.n_in;
        let call = Node::call(wires(n), e)?;
        Evaluator::new(n, Node::xor(vec![Src::Node(call), Src::Bit(true)]))
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn size(&self) -> u128 {
        *self.size.get_or_init(|| self.root.cost())
    }

    /// Same as [`Evaluator::size`].
    pub fn measure(&self) -> u128 {
        self.size()
    }

    #[inline]
    pub fn run_packed(&self, x: u64) -> u64 {
        if let Some(t) = self.cache.get() {
            return t.get(x);
        }
        self.root.eval(x, self.n_in)
    }

    pub fn run(&self, x: &[bool]) -> Result<Vec<bool>> {
        if x.len() != self.n_in {
            return Err(EvalError::InputLength { expected: self.n_in, found: x.len() });
        }
        Ok(bits::unpack(self.run_packed(bits::pack(x)), self.n_out))
    }

    /// Memoizes all outputs; a no-op past [`TABULATE_LIMIT`] inputs.
    pub fn tabulate(&self) -> bool {
        if self.n_in > TABULATE_LIMIT {
            return false;
        }
        if self.cache.get().is_none() {
            let t = TruthTable::from_fn(self.n_in, self.n_out, |x| self.root.eval(x, self.n_in));
            let _ = self.cache.set(Arc::new(t));
        }
        true
    }

    pub fn is_tabulated(&self) -> bool {
        self.cache.get().is_some()
    }

    /// The full truth table (tabulating first when possible).
    pub fn truth_table(&self) -> TruthTable {
        if self.tabulate() {
            (**self.cache.get().unwrap()).clone()
        } else {
            TruthTable::from_fn(self.n_in, self.n_out, |x| self.run_packed(x))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&doc::write(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Evaluator> {
        let d: doc::Document = serde_json::from_str(s).map_err(|e| EvalError::Document(e.to_string()))?;
        doc::read(&d)
    }
}

/// Which inputs [`success`] ranges over.
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    All,
    Subset(&'a [u64]),
}

/// Number of inputs in `domain` on which `e` agrees with `f`.
pub fn agreements(e: &Evaluator, f: &TruthTable, domain: Domain<'_>) -> u64 {
    assert_eq!(e.n_in(), f.n_in(), "input lengths differ");
    assert_eq!(e.n_out(), f.n_out(), "output lengths differ");
    match domain {
        Domain::All => (0..f.rows()).filter(|&x| e.run_packed(x) == f.get(x)).count() as u64,
        Domain::Subset(xs) => xs.iter().filter(|&&x| e.run_packed(x) == f.get(x)).count() as u64,
    }
}

/// `SUC(e, f)`: fraction of the domain where `e` and `f` agree.
pub fn success(e: &Evaluator, f: &TruthTable, domain: Domain<'_>) -> Q {
    let total = match domain {
        Domain::All => f.rows(),
        Domain::Subset(xs) => xs.len() as u64,
    };
    rational::ratio(agreements(e, f, domain), total.max(1))
}

/// `ADV(e, f) = 2·SUC(e, f) − 1`.
pub fn advantage(e: &Evaluator, f: &TruthTable, domain: Domain<'_>) -> Q {
    success(e, f, domain) * rational::int(2) - rational::int(1)
}

/// Size bound with the expression that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBudget {
    pub bound: u128,
    pub formula: String,
}

impl SizeBudget {
    pub fn new(bound: u128, formula: impl Into<String>) -> SizeBudget {
        SizeBudget { bound: bound.max(1), formula: formula.into() }
    }

    pub fn admits(&self, size: u128) -> bool {
        size <= self.bound
    }
}

mod doc {
    //! DAG serialization: shared sub-evaluators, tables and programs are
    //! written once and referenced by index.

    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct Document {
        pub tables: Vec<TableDoc>,
        pub sparse: Vec<SparseTable>,
        pub programs: Vec<crate::obp::ObpDocument>,
        pub evaluators: Vec<EvalDoc>,
        pub root: usize,
    }

    #[derive(Serialize, Deserialize)]
    pub struct TableDoc {
        pub n_in: usize,
        pub n_out: usize,
        pub hex: String,
    }

    #[derive(Serialize, Deserialize)]
    pub struct EvalDoc {
        pub n_in: usize,
        pub root: NodeDoc,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "op", rename_all = "snake_case")]
    pub enum NodeDoc {
        Const { value: u64, width: usize },
        Select { index: usize },
        Xor { args: Vec<SrcDoc> },
        And { args: Vec<SrcDoc> },
        Maj { args: Vec<SrcDoc> },
        WeightedMaj { children: Vec<(u64, NodeDoc)> },
        Inner { a: Vec<SrcDoc>, b: Vec<SrcDoc> },
        Lookup { args: Vec<SrcDoc>, table: usize },
        Sparse { args: Vec<SrcDoc>, table: usize },
        Program { args: Vec<SrcDoc>, program: usize },
        Decode { k: u32, degree: usize, args: Vec<SrcDoc> },
        Plurality { children: Vec<NodeDoc>, k: usize },
        Call { args: Vec<SrcDoc>, evaluator: usize },
        Concat { args: Vec<SrcDoc> },
        Project { child: Box<NodeDoc>, picks: Vec<usize> },
    }

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    pub enum SrcDoc {
        In(usize),
        NotIn(usize),
        Bit(bool),
        Node(NodeDoc),
    }

    #[derive(Default)]
    struct Writer {
        doc_tables: Vec<TableDoc>,
        doc_sparse: Vec<SparseTable>,
        doc_programs: Vec<crate::obp::ObpDocument>,
        doc_evals: Vec<EvalDoc>,
        tables: HashMap<usize, usize>,
        sparse: HashMap<usize, usize>,
        programs: HashMap<usize, usize>,
        evals: HashMap<usize, usize>,
    }

    impl Writer {
        fn eval(&mut self, e: &Evaluator) -> usize {
            let root = self.node(&e.root);
            self.doc_evals.push(EvalDoc { n_in: e.n_in, root });
            self.doc_evals.len() - 1
        }

        fn eval_arc(&mut self, e: &Arc<Evaluator>) -> usize {
            let key = Arc::as_ptr(e) as usize;
            if let Some(&i) = self.evals.get(&key) {
                return i;
            }
            let i = self.eval(e);
            self.evals.insert(key, i);
            i
        }

        fn srcs(&mut self, a: &[Src]) -> Vec<SrcDoc> {
            a.iter()
                .map(|s| match s {
                    Src::In(i) => SrcDoc::In(*i),
                    Src::NotIn(i) => SrcDoc::NotIn(*i),
                    Src::Bit(b) => SrcDoc::Bit(*b),
                    Src::Node(n) => SrcDoc::Node(self.node(n)),
                })
                .collect()
        }

        fn node(&mut self, n: &Node) -> NodeDoc {
            match &n.kind {
                Kind::Const(v) => NodeDoc::Const { value: *v, width: n.width },
                Kind::Select(i) => NodeDoc::Select { index: *i },
                Kind::Xor(a) => NodeDoc::Xor { args: self.srcs(a) },
                Kind::And(a) => NodeDoc::And { args: self.srcs(a) },
                Kind::Maj(a) => NodeDoc::Maj { args: self.srcs(a) },
                Kind::WeightedMaj(c) => NodeDoc::WeightedMaj { children: c.iter().map(|(w, n)| (*w, self.node(n))).collect() },
                Kind::Inner(a, b) => NodeDoc::Inner { a: self.srcs(a), b: self.srcs(b) },
                Kind::Lookup(a, t) => {
                    let key = Arc::as_ptr(t) as usize;
                    let idx = match self.tables.get(&key) {
                        Some(&i) => i,
                        None => {
                            self.doc_tables.push(TableDoc { n_in: t.n_in(), n_out: t.n_out(), hex: t.to_hex() });
                            self.tables.insert(key, self.doc_tables.len() - 1);
                            self.doc_tables.len() - 1
                        }
                    };
                    NodeDoc::Lookup { args: self.srcs(a), table: idx }
                }
                Kind::Sparse(a, t) => {
                    let key = Arc::as_ptr(t) as usize;
                    let idx = match self.sparse.get(&key) {
                        Some(&i) => i,
                        None => {
                            self.doc_sparse.push((**t).clone());
                            self.sparse.insert(key, self.doc_sparse.len() - 1);
                            self.doc_sparse.len() - 1
                        }
                    };
                    NodeDoc::Sparse { args: self.srcs(a), table: idx }
                }
                Kind::Program(a, o) => {
                    let key = Arc::as_ptr(o) as usize;
                    let idx = match self.programs.get(&key) {
                        Some(&i) => i,
                        None => {
                            self.doc_programs.push(o.document());
                            self.programs.insert(key, self.doc_programs.len() - 1);
                            self.doc_programs.len() - 1
                        }
                    };
                    NodeDoc::Program { args: self.srcs(a), program: idx }
                }
                Kind::Decode { field, degree, args } => NodeDoc::Decode { k: field.k(), degree: *degree, args: self.srcs(args) },
                Kind::Plurality { children, k } => NodeDoc::Plurality { children: children.iter().map(|c| self.node(c)).collect(), k: *k },
                Kind::Call(a, e) => {
                    let args = self.srcs(a);
                    NodeDoc::Call { args, evaluator: self.eval_arc(e) }
                }
                Kind::Concat(a) => NodeDoc::Concat { args: self.srcs(a) },
                Kind::Project(c, picks) => NodeDoc::Project { child: Box::new(self.node(c)), picks: picks.clone() },
            }
        }
    }

    pub fn write(e: &Evaluator) -> Document {
        let mut w = Writer::default();
        let root = w.eval(e);
        Document { tables: w.doc_tables, sparse: w.doc_sparse, programs: w.doc_programs, evaluators: w.doc_evals, root }
    }

    struct Reader<'a> {
        d: &'a Document,
        tables: Vec<Option<Arc<TruthTable>>>,
        sparse: Vec<Option<Arc<SparseTable>>>,
        programs: Vec<Option<Arc<Obp>>>,
        evals: Vec<Option<Arc<Evaluator>>>,
        fields: HashMap<u32, Arc<Field>>,
    }

    fn bad(msg: impl Into<String>) -> EvalError {
        EvalError::Document(msg.into())
    }

    impl<'a> Reader<'a> {
        fn eval(&mut self, i: usize) -> Result<Arc<Evaluator>> {
            if let Some(Some(e)) = self.evals.get(i) {
                return Ok(e.clone());
            }
            let ed = self.d.evaluators.get(i).ok_or_else(|| bad(format!("evaluator {i} missing")))?;
            let root = self.node(&ed.root)?;
            let e = Arc::new(Evaluator::new(ed.n_in, root)?);
            self.evals[i] = Some(e.clone());
            Ok(e)
        }

        fn srcs(&mut self, a: &[SrcDoc]) -> Result<Vec<Src>> {
            a.iter()
                .map(|s| {
                    Ok(match s {
                        SrcDoc::In(i) => Src::In(*i),
                        SrcDoc::NotIn(i) => Src::NotIn(*i),
                        SrcDoc::Bit(b) => Src::Bit(*b),
                        SrcDoc::Node(n) => Src::Node(self.node(n)?),
                    })
                })
                .collect()
        }

        fn node(&mut self, n: &NodeDoc) -> Result<Node> {
            Ok(match n {
                NodeDoc::Const { value, width } => Node::constant(*value, *width)?,
                NodeDoc::Select { index } => Node::select(*index),
                NodeDoc::Xor { args } => Node::xor(self.srcs(args)?),
                NodeDoc::And { args } => Node::and(self.srcs(args)?),
                NodeDoc::Maj { args } => Node::maj(self.srcs(args)?),
                NodeDoc::WeightedMaj { children } => {
                    let c = children.iter().map(|(w, n)| Ok((*w, self.node(n)?))).collect::<Result<Vec<_>>>()?;
                    Node::weighted_maj(c)?
                }
                NodeDoc::Inner { a, b } => {
                    let a = self.srcs(a)?;
                    Node::inner(a, self.srcs(b)?)?
                }
                NodeDoc::Lookup { args, table } => {
                    let t = self.table(*table)?;
                    Node::lookup(self.srcs(args)?, t)?
                }
                NodeDoc::Sparse { args, table } => {
                    let t = match self.sparse.get(*table) {
                        Some(Some(t)) => t.clone(),
                        _ => {
                            let t = Arc::new(self.d.sparse.get(*table).ok_or_else(|| bad("sparse table missing"))?.clone());
                            self.sparse[*table] = Some(t.clone());
                            t
                        }
                    };
                    Node::sparse(self.srcs(args)?, t)?
                }
                NodeDoc::Program { args, program } => {
                    let o = match self.programs.get(*program) {
                        Some(Some(o)) => o.clone(),
                        _ => {
                            let pd = self.d.programs.get(*program).ok_or_else(|| bad("program missing"))?;
                            let o = Arc::new(Obp::from_document(pd.clone()).map_err(|e| bad(e.to_string()))?);
                            self.programs[*program] = Some(o.clone());
                            o
                        }
                    };
                    Node::program(self.srcs(args)?, o)?
                }
                NodeDoc::Decode { k, degree, args } => {
                    let f = match self.fields.get(k) {
                        Some(f) => f.clone(),
                        None => {
                            let f = Arc::new(Field::new(*k).map_err(|e| bad(e.to_string()))?);
                            self.fields.insert(*k, f.clone());
                            f
                        }
                    };
                    Node::decode(f, *degree, self.srcs(args)?)?
                }
                NodeDoc::Plurality { children, k } => {
                    let c = children.iter().map(|n| self.node(n)).collect::<Result<Vec<_>>>()?;
                    Node::plurality(c, *k)?
                }
                NodeDoc::Call { args, evaluator } => {
                    let e = self.eval(*evaluator)?;
                    Node::call(self.srcs(args)?, e)?
                }
                NodeDoc::Concat { args } => Node::concat(self.srcs(args)?)?,
                NodeDoc::Project { child, picks } => Node::project(self.node(child)?, picks.clone())?,
            })
        }

        fn table(&mut self, i: usize) -> Result<Arc<TruthTable>> {
            if let Some(Some(t)) = self.tables.get(i) {
                return Ok(t.clone());
            }
            let td = self.d.tables.get(i).ok_or_else(|| bad(format!("table {i} missing")))?;
            let t = Arc::new(TruthTable::from_hex(td.n_in, td.n_out, &td.hex).ok_or_else(|| bad("bad table data"))?);
            self.tables[i] = Some(t.clone());
            Ok(t)
        }
    }

    pub fn read(d: &Document) -> Result<Evaluator> {
        let mut r = Reader {
            d,
            tables: vec![None; d.tables.len()],
            sparse: vec![None; d.sparse.len()],
            programs: vec![None; d.programs.len()],
            evals: vec![None; d.evaluators.len()],
            fields: HashMap::new(),
        };
        let e = r.eval(d.root)?;
        Ok(Arc::try_unwrap(e).unwrap_or_else(|a| (*a).clone()))
    }
}
