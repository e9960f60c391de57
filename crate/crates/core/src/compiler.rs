//! Compilation of event probabilities into fast arithmetic plans.
//!
//! Evaluating every `|amplitude|²` from scratch at each optimizer step would
//! repeat an enormous amount of identical algebra. Two structural reductions
//! cut it down:
//!
//! 1. **Event classes.** Detection events that differ only by a permutation
//!    of the output modes share one amplitude program: permuting detectors is
//!    the same as permuting the *columns* of `U`, which the evaluator realizes
//!    as an input re-indexing (never a matrix copy). Only one program per
//!    partition of the photon number is compiled.
//! 2. **Bell transforms.** The four Bell inputs differ by a signed
//!    permutation of the first four *rows* of `U`, so a single program — the
//!    `Φ⁺` one — serves all four after re-indexing rows with signs.
//!
//! Each program is a straight-line complex-arithmetic DAG built by dynamic
//! programming over column sub-multisets, with hash-consing for common
//! subexpressions, followed by one reverse sweep appending the adjoint
//! (gradient) instructions. Evaluating the prefix of length `n_fwd` yields
//! the amplitude alone; the full program also yields `∂g/∂u` for every
//! involved matrix entry.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::evolve::{enumerate_events, event_count, UnitaryMatrix};
use crate::fock::{input_polynomial, AncillaSpec, BellState, OccupationVector};
use crate::objective::{ProbabilityTable, DEFAULT_EPS_ZERO};
use crate::{Error, Result};

/// Format version of the serialized plan cache.
pub const PLAN_CACHE_VERSION: u32 = 1;

/// A detection-event equivalence class under output-mode permutation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventClass {
    /// Non-increasing positive counts summing to the photon number.
    pub partition: Vec<u32>,
    /// The partition left-aligned and zero-padded to the mode count.
    pub representative: OccupationVector,
}

/// Classifies an event: returns its class and the column permutation `σ`
/// mapping the representative onto the event, `e[σ(i)] = rep[i]`.
///
/// Sorting is descending by count with a stable tie-break on the mode index,
/// so `σ` is unique and deterministic.
pub fn canonical_class(e: &OccupationVector) -> (EventClass, Vec<usize>) {
    let n = e.modes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e[b].cmp(&e[a]).then(a.cmp(&b)));
    let rep: Vec<u32> = order.iter().map(|&i| e[i]).collect();
    let partition: Vec<u32> = rep.iter().copied().take_while(|&c| c > 0).collect();
    (EventClass { partition, representative: rep.into() }, order)
}

/// All partitions of `total` into at most `max_parts` parts, each partition
/// non-increasing; emitted in descending lexicographic order (`[total]`
/// first, all-ones last when it fits).
pub(crate) fn partitions(total: u32, max_parts: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, max_part: u32, slots: usize, acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(acc.clone());
            return;
        }
        if slots == 0 {
            return;
        }
        let hi = left.min(max_part);
        for part in (1..=hi).rev() {
            acc.push(part);
            rec(left - part, part, slots - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, total, max_parts, &mut Vec::new(), &mut out);
    out
}

/// Number of integer partitions of `total` (unbounded part count), by direct
/// enumeration — small photon numbers only.
pub fn partition_count(total: u32) -> u64 {
    partitions(total, total as usize).len() as u64
}

/// The signed row permutation turning the `Φ⁺` amplitude program into the
/// program for another Bell state; ancilla rows are untouched.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellTransform {
    source: [usize; 4],
    sign: [f64; 4],
}

impl BellTransform {
    pub fn for_state(bell: BellState) -> Self {
        let (source, sign) = match bell {
            BellState::PhiPlus => ([0, 1, 2, 3], [1.0, 1.0, 1.0, 1.0]),
            BellState::PhiMinus => ([0, 1, 2, 3], [1.0, -1.0, 1.0, 1.0]),
            BellState::PsiPlus => ([0, 1, 3, 2], [1.0, 1.0, 1.0, 1.0]),
            BellState::PsiMinus => ([0, 1, 3, 2], [1.0, -1.0, 1.0, 1.0]),
        };
        BellTransform { source, sign }
    }

    /// Which `U` row feeds plan row `row`, and with which sign.
    #[inline]
    pub fn source(&self, row: usize) -> (usize, f64) {
        if row < 4 {
            (self.source[row], self.sign[row])
        } else {
            (row, 1.0)
        }
    }
}

/// One straight-line complex instruction; operands index earlier
/// instructions, `Input` reads a gathered `u''[row][col]` entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Instruction {
    Const { re: f64, im: f64 },
    Input { row: u16, col: u16 },
    Add { a: u32, b: u32 },
    Mul { a: u32, b: u32 },
    Neg { a: u32 },
}

/// Hashable identity of an instruction (floats keyed by bit pattern).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Const(u64, u64),
    Input(u16, u16),
    Add(u32, u32),
    Mul(u32, u32),
    Neg(u32),
}

fn node_key(ins: &Instruction) -> NodeKey {
    match *ins {
        Instruction::Const { re, im } => NodeKey::Const(re.to_bits(), im.to_bits()),
        Instruction::Input { row, col } => NodeKey::Input(row, col),
        Instruction::Add { a, b } => NodeKey::Add(a, b),
        Instruction::Mul { a, b } => NodeKey::Mul(a, b),
        Instruction::Neg { a } => NodeKey::Neg(a),
    }
}

/// Compiled program for one event class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ClassProgram {
    partition: Vec<u32>,
    representative: OccupationVector,
    /// Number of distinct occupied columns (= partition length).
    cols: usize,
    /// `Π_j rep_j!`; multiplies `|g|²` to give the probability.
    norm_factor: f64,
    code: Vec<Instruction>,
    /// Prefix length computing the amplitude alone.
    n_fwd: usize,
    amp_node: u32,
    /// Node holding `∂g/∂u''[slot][col]`, row-major `slot·cols + col`;
    /// `u32::MAX` where the derivative is identically zero.
    grad_nodes: Vec<u32>,
}

/// Event dispatch entry: class index plus the gathered column sources
/// (`σ` restricted to the occupied columns of the representative).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EventBinding {
    class: u32,
    sigma: Vec<u32>,
}

/// Knobs for [`compile_with`].
#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    /// Hash-consing of identical DAG nodes; disabling it is only useful to
    /// test that sharing does not change results.
    pub cse: bool,
    /// Refuse instances whose projected node count exceeds this.
    pub node_ceiling: u64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { cse: true, node_ceiling: 10_000_000 }
    }
}

/// Size and sharing statistics of a compiled plan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PlanStats {
    pub classes: usize,
    pub events: usize,
    /// Total DAG nodes across class programs, gradient code included.
    pub plan_nodes: u64,
    /// Nodes in the amplitude-only prefixes.
    pub forward_nodes: u64,
    /// Instructions executed to fill one full 4×N probability table.
    pub table_ops: u64,
    /// Cost of the same table by naive term-by-term expansion of each
    /// amplitude (`p` multiplications for each of the `p!/Π e_j!` column
    /// assignments, per monomial, event and Bell state).
    pub naive_table_ops: u64,
}

/// An immutable compiled plan: per-class amplitude/gradient programs plus the
/// event dispatch table for a fixed `(ancilla, n)`. Share it freely across
/// threads; each worker owns a [`PlanEvaluator`] for scratch space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    spec: AncillaSpec,
    n: usize,
    photons: u32,
    /// Plan row slot → `U` row index (in the `Φ⁺` basis).
    rows: Vec<u32>,
    classes: Vec<ClassProgram>,
    events: Vec<OccupationVector>,
    bindings: Vec<EventBinding>,
    cse: bool,
    max_code_len: usize,
    max_gather: usize,
}

impl EvaluationPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn photons(&self) -> u32 {
        self.photons
    }

    pub fn spec(&self) -> &AncillaSpec {
        &self.spec
    }

    /// Detection events in ascending lexicographic order; probability-table
    /// columns follow this list.
    pub fn events(&self) -> &[OccupationVector] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// The `U` rows that can influence any amplitude; gradients outside these
    /// rows vanish identically.
    pub fn involved_rows(&self) -> Vec<usize> {
        self.rows.iter().map(|&r| r as usize).collect()
    }

    /// The class of one event.
    pub fn event_class(&self, event: usize) -> EventClass {
        let program = &self.classes[self.bindings[event].class as usize];
        EventClass {
            partition: program.partition.clone(),
            representative: program.representative.clone(),
        }
    }

    pub fn stats(&self) -> PlanStats {
        let forward_nodes: u64 = self.classes.iter().map(|c| c.n_fwd as u64).sum();
        let plan_nodes: u64 = self.classes.iter().map(|c| c.code.len() as u64).sum();
        let monomials = input_polynomial(BellState::PhiPlus, &self.spec)
            .expect("plan spec was validated at compile time")
            .len() as u128;
        let p = self.photons;
        let mut table_ops: u128 = 0;
        let mut naive_table_ops: u128 = 0;
        for binding in &self.bindings {
            let class = &self.classes[binding.class as usize];
            table_ops += 4 * class.n_fwd as u128;
            let mut assignments: u128 = (1..=p as u128).product();
            for &part in &class.partition {
                assignments /= (1..=part as u128).product::<u128>();
            }
            naive_table_ops += 4 * monomials * assignments * p as u128;
        }
        PlanStats {
            classes: self.classes.len(),
            events: self.events.len(),
            plan_nodes,
            forward_nodes,
            table_ops: table_ops.min(u64::MAX as u128) as u64,
            naive_table_ops: naive_table_ops.min(u64::MAX as u128) as u64,
        }
    }
}

/// Compiles the plan for `(spec, n)` with default options.
pub fn compile(spec: &AncillaSpec, n: usize) -> Result<EvaluationPlan> {
    compile_with(spec, n, CompileOptions::default())
}

/// Compiles the plan for `(spec, n)`.
///
/// Output is deterministic for fixed inputs: monomials are visited in the
/// polynomial's sorted term order and DP states in sorted sub-multiset order,
/// so node numbering never depends on hash-map iteration.
pub fn compile_with(
    spec: &AncillaSpec,
    n: usize,
    options: CompileOptions,
) -> Result<EvaluationPlan> {
    spec.validate()?;
    let min = spec.min_modes();
    if n < min {
        return Err(Error::DimensionMismatch(format!(
            "ancilla `{}` needs at least {min} modes, got {n}",
            spec.label()
        )));
    }
    let photons = spec.photons() + 2;
    let p_in = input_polynomial(BellState::PhiPlus, spec)?.pad_to(n)?;

    // Plan rows: every mode whose creation operator appears in some monomial.
    let mut involved: BTreeSet<usize> = BTreeSet::new();
    for (occ, _) in p_in.terms() {
        for (i, &c) in occ.iter().enumerate() {
            if c > 0 {
                involved.insert(i);
            }
        }
    }
    let rows: Vec<u32> = involved.iter().map(|&i| i as u32).collect();
    let slot_of: HashMap<usize, u16> =
        rows.iter().enumerate().map(|(s, &r)| (r as usize, s as u16)).collect();

    // Monomial row sequences, ancilla rows first so that monomials sharing an
    // ancilla factor share their DP prefix, Bell rows last.
    let mut monomials: Vec<(Vec<u16>, Complex64)> = Vec::with_capacity(p_in.len());
    for (occ, &coef) in p_in.terms() {
        let mut seq: Vec<u16> = Vec::with_capacity(photons as usize);
        let ancilla_then_bell =
            occ.iter().enumerate().skip(4).chain(occ.iter().enumerate().take(4));
        for (i, &c) in ancilla_then_bell {
            if c > 0 {
                seq.extend(std::iter::repeat_n(slot_of[&i], c as usize));
            }
        }
        monomials.push((seq, coef));
    }

    let partitions_list = partitions(photons, n);

    // Cheap upper bound on the node count before building anything: a
    // monomial touches at most Π(part_j + 1) DP states (one per column
    // sub-multiset), ~2d ops each; the adjoint sweep at most triples that.
    let mut projected: u128 = 0;
    for partition in &partitions_list {
        let d = partition.len() as u128;
        let states: u128 = partition.iter().map(|&c| c as u128 + 1).product();
        projected += monomials.len() as u128 * states * 2 * d * 3;
    }
    if projected > options.node_ceiling as u128 {
        return Err(Error::ResourceCeiling {
            projected: projected.min(u64::MAX as u128) as u64,
            ceiling: options.node_ceiling,
        });
    }
    let n_events = event_count(n, photons);
    if n_events > options.node_ceiling {
        return Err(Error::EnumerationGuard(format!(
            "{n_events} detection events exceed the node ceiling {}",
            options.node_ceiling
        )));
    }

    let mut budget = NodeBudget { used: 0, ceiling: options.node_ceiling };
    let mut classes = Vec::with_capacity(partitions_list.len());
    let mut class_index: HashMap<Vec<u32>, u32> = HashMap::new();
    for partition in partitions_list {
        let program = build_class(&partition, n, &monomials, &options, &mut budget)?;
        class_index.insert(partition, classes.len() as u32);
        classes.push(program);
    }

    let events = enumerate_events(n, photons);
    let mut bindings = Vec::with_capacity(events.len());
    for e in &events {
        let (class, sigma) = canonical_class(e);
        let idx = class_index[&class.partition];
        let cols = classes[idx as usize].cols;
        bindings.push(EventBinding {
            class: idx,
            sigma: sigma[..cols].iter().map(|&i| i as u32).collect(),
        });
    }

    let max_code_len = classes.iter().map(|c| c.code.len()).max().unwrap_or(0);
    let max_gather = classes.iter().map(|c| c.cols * rows.len()).max().unwrap_or(0);
    Ok(EvaluationPlan {
        spec: spec.clone(),
        n,
        photons,
        rows,
        classes,
        events,
        bindings,
        cse: options.cse,
        max_code_len,
        max_gather,
    })
}

struct NodeBudget {
    used: u64,
    ceiling: u64,
}

/// DAG construction with optional hash-consing; node ids are instruction
/// indices in emission order.
struct DagBuilder<'b> {
    code: Vec<Instruction>,
    cse: bool,
    interned: HashMap<NodeKey, u32>,
    budget: &'b mut NodeBudget,
}

impl<'b> DagBuilder<'b> {
    fn new(cse: bool, budget: &'b mut NodeBudget) -> Self {
        DagBuilder { code: Vec::new(), cse, interned: HashMap::new(), budget }
    }

    fn push(&mut self, ins: Instruction) -> Result<u32> {
        let key = node_key(&ins);
        if self.cse {
            if let Some(&id) = self.interned.get(&key) {
                return Ok(id);
            }
        }
        self.budget.used += 1;
        if self.budget.used > self.budget.ceiling {
            return Err(Error::ResourceCeiling {
                projected: self.budget.used,
                ceiling: self.budget.ceiling,
            });
        }
        let id = u32::try_from(self.code.len()).expect("node ids fit in u32");
        self.code.push(ins);
        if self.cse {
            self.interned.insert(key, id);
        }
        Ok(id)
    }

    fn constant(&mut self, c: Complex64) -> Result<u32> {
        self.push(Instruction::Const { re: c.re, im: c.im })
    }

    fn input(&mut self, row: u16, col: u16) -> Result<u32> {
        self.push(Instruction::Input { row, col })
    }

    fn add(&mut self, a: u32, b: u32) -> Result<u32> {
        self.push(Instruction::Add { a, b })
    }

    fn mul(&mut self, a: u32, b: u32) -> Result<u32> {
        self.push(Instruction::Mul { a, b })
    }

    fn neg(&mut self, a: u32) -> Result<u32> {
        self.push(Instruction::Neg { a })
    }
}

/// Multiplier that may be the symbolic one, avoiding `1·x` nodes.
#[derive(Clone, Copy)]
enum Factor {
    One,
    Node(u32),
}

fn build_class(
    partition: &[u32],
    n: usize,
    monomials: &[(Vec<u16>, Complex64)],
    options: &CompileOptions,
    budget: &mut NodeBudget,
) -> Result<ClassProgram> {
    let d = partition.len();
    let caps: Vec<u8> =
        partition.iter().map(|&c| u8::try_from(c).expect("photon counts fit u8")).collect();
    let photons: u32 = partition.iter().sum();
    let mut representative = vec![0u32; n];
    representative[..d].copy_from_slice(partition);

    let mut builder = DagBuilder::new(options.cse, budget);

    // Prefix trie over row sequences; a level reached through an already-seen
    // prefix is reused wholesale, which is what makes monomials sharing an
    // ancilla factor nearly free.
    let mut trie: HashMap<(u32, u16), u32> = HashMap::new();
    let mut next_prefix_id: u32 = 1; // 0 = the empty prefix
    let mut prefix_levels: HashMap<u32, BTreeMap<Vec<u8>, u32>> = HashMap::new();

    let mut amp: Option<u32> = None;
    for (seq, coef) in monomials {
        debug_assert_eq!(seq.len(), photons as usize);
        let mut prefix: u32 = 0;
        // Level 0: the empty product, represented symbolically.
        let mut level: BTreeMap<Vec<u8>, Factor> =
            BTreeMap::from([(vec![0u8; d], Factor::One)]);
        for &row in seq {
            let new_prefix = *trie.entry((prefix, row)).or_insert_with(|| {
                let id = next_prefix_id;
                next_prefix_id += 1;
                id
            });
            if let Some(cached) = prefix_levels.get(&new_prefix) {
                level =
                    cached.iter().map(|(q, &node)| (q.clone(), Factor::Node(node))).collect();
                prefix = new_prefix;
                continue;
            }
            let mut next: BTreeMap<Vec<u8>, u32> = BTreeMap::new();
            for (q, &factor) in &level {
                for j in 0..d {
                    if q[j] >= caps[j] {
                        continue;
                    }
                    let input = builder.input(row, j as u16)?;
                    let term = match factor {
                        Factor::One => input,
                        Factor::Node(node) => builder.mul(node, input)?,
                    };
                    let mut q_new = q.clone();
                    q_new[j] += 1;
                    match next.get(&q_new).copied() {
                        None => {
                            next.insert(q_new, term);
                        }
                        Some(prev) => {
                            let sum = builder.add(prev, term)?;
                            next.insert(q_new, sum);
                        }
                    }
                }
            }
            prefix_levels.insert(new_prefix, next.clone());
            level = next.into_iter().map(|(q, node)| (q, Factor::Node(node))).collect();
            prefix = new_prefix;
        }
        debug_assert_eq!(level.len(), 1, "only the full column multiset survives");
        let (_, factor) = level.into_iter().next().expect("full state present");
        let node = match factor {
            Factor::Node(node) => node,
            Factor::One => unreachable!("the photon number is at least two"),
        };
        let coef_node = builder.constant(*coef)?;
        let term = builder.mul(coef_node, node)?;
        amp = Some(match amp {
            None => term,
            Some(prev) => builder.add(prev, term)?,
        });
    }
    let amp_node = amp.expect("input polynomial has at least one monomial");
    let n_fwd = builder.code.len();

    // Where each gathered input is read: with CSE exactly one node per
    // (slot, col), without it possibly several — gradients sum over all.
    let mut input_nodes: BTreeMap<(u16, u16), Vec<u32>> = BTreeMap::new();
    for (id, ins) in builder.code.iter().enumerate() {
        if let Instruction::Input { row, col } = *ins {
            input_nodes.entry((row, col)).or_default().push(id as u32);
        }
    }
    let n_slots = input_nodes.keys().map(|&(row, _)| row as usize + 1).max().unwrap_or(0);

    let grad_by_node = append_adjoint(&mut builder, amp_node, n_fwd)?;
    let mut grad_nodes = vec![u32::MAX; n_slots * d];
    for ((row, col), ids) in &input_nodes {
        let mut total: Option<u32> = None;
        for id in ids {
            let Some(adj) = grad_by_node[*id as usize] else { continue };
            total = Some(match total {
                None => adj,
                Some(prev) => builder.add(prev, adj)?,
            });
        }
        if let Some(node) = total {
            grad_nodes[*row as usize * d + *col as usize] = node;
        }
    }

    let norm_factor: f64 = partition
        .iter()
        .map(|&c| (1..=c as u64).product::<u64>() as f64)
        .product();

    Ok(ClassProgram {
        partition: partition.to_vec(),
        representative: representative.into(),
        cols: d,
        norm_factor,
        code: builder.code,
        n_fwd,
        amp_node,
        grad_nodes,
    })
}

/// Appends the reverse-mode adjoint of `amp_node` to the code; returns, for
/// every forward node, the node holding `∂amp/∂(that node)` — `None` where
/// the derivative is structurally zero.
fn append_adjoint(
    builder: &mut DagBuilder<'_>,
    amp_node: u32,
    n_fwd: usize,
) -> Result<Vec<Option<u32>>> {
    #[derive(Clone, Copy)]
    enum Adjoint {
        One,
        Node(u32),
    }

    fn materialize(builder: &mut DagBuilder<'_>, a: Adjoint) -> Result<u32> {
        match a {
            Adjoint::One => builder.constant(Complex64::new(1.0, 0.0)),
            Adjoint::Node(node) => Ok(node),
        }
    }

    /// `adj[target] += contrib`, skipping constants (their adjoint is never
    /// read, so building it would only waste nodes).
    fn accumulate(
        builder: &mut DagBuilder<'_>,
        adj: &mut [Option<Adjoint>],
        target: u32,
        contrib: Adjoint,
    ) -> Result<()> {
        if matches!(builder.code[target as usize], Instruction::Const { .. }) {
            return Ok(());
        }
        let merged = match adj[target as usize] {
            None => contrib,
            Some(prev) => {
                let p = materialize(builder, prev)?;
                let c = materialize(builder, contrib)?;
                Adjoint::Node(builder.add(p, c)?)
            }
        };
        adj[target as usize] = Some(merged);
        Ok(())
    }

    let mut adj: Vec<Option<Adjoint>> = vec![None; n_fwd];
    adj[amp_node as usize] = Some(Adjoint::One);
    let mut result: Vec<Option<u32>> = vec![None; n_fwd];
    for x in (0..n_fwd).rev() {
        let Some(a) = adj[x] else { continue };
        match builder.code[x] {
            Instruction::Add { a: p, b: q } => {
                accumulate(builder, &mut adj, p, a)?;
                accumulate(builder, &mut adj, q, a)?;
            }
            Instruction::Mul { a: p, b: q } => {
                let to_p = match a {
                    Adjoint::One => Adjoint::Node(q),
                    Adjoint::Node(node) => Adjoint::Node(builder.mul(node, q)?),
                };
                accumulate(builder, &mut adj, p, to_p)?;
                let to_q = match a {
                    Adjoint::One => Adjoint::Node(p),
                    Adjoint::Node(node) => Adjoint::Node(builder.mul(node, p)?),
                };
                accumulate(builder, &mut adj, q, to_q)?;
            }
            Instruction::Neg { a: p } => {
                let contrib = match a {
                    Adjoint::One => Adjoint::Node(builder.constant(Complex64::new(-1.0, 0.0))?),
                    Adjoint::Node(node) => Adjoint::Node(builder.neg(node)?),
                };
                accumulate(builder, &mut adj, p, contrib)?;
            }
            Instruction::Const { .. } | Instruction::Input { .. } => {}
        }
        if let Instruction::Input { .. } = builder.code[x] {
            result[x] = Some(materialize(builder, a)?);
        }
    }
    Ok(result)
}

/// Per-worker evaluation scratch over a shared plan.
pub struct PlanEvaluator<'p> {
    plan: &'p EvaluationPlan,
    values: Vec<Complex64>,
    gathered: Vec<Complex64>,
    gather_stride: usize,
    transforms: [BellTransform; 4],
}

impl<'p> PlanEvaluator<'p> {
    pub fn new(plan: &'p EvaluationPlan) -> Self {
        PlanEvaluator {
            plan,
            values: vec![Complex64::ZERO; plan.max_code_len],
            gathered: vec![Complex64::ZERO; plan.max_gather],
            gather_stride: 0,
            transforms: [
                BellTransform::for_state(BellState::PhiPlus),
                BellTransform::for_state(BellState::PhiMinus),
                BellTransform::for_state(BellState::PsiPlus),
                BellTransform::for_state(BellState::PsiMinus),
            ],
        }
    }

    pub fn plan(&self) -> &'p EvaluationPlan {
        self.plan
    }

    fn check_dims(&self, u: &UnitaryMatrix) -> Result<()> {
        if u.n() != self.plan.n {
            return Err(Error::DimensionMismatch(format!(
                "plan compiled for n = {}, matrix has n = {}",
                self.plan.n,
                u.n()
            )));
        }
        Ok(())
    }

    fn gather(&mut self, u: &UnitaryMatrix, binding: &EventBinding, cols: usize, bell: BellState) {
        let transform = self.transforms[bell.index()];
        for (slot, &urow) in self.plan.rows.iter().enumerate() {
            let (src, sign) = transform.source(urow as usize);
            let base = slot * cols;
            for (c, &col) in binding.sigma.iter().enumerate() {
                self.gathered[base + c] = u.get(src, col as usize) * sign;
            }
        }
        self.gather_stride = cols;
    }

    fn run(&mut self, code: &[Instruction], limit: usize) {
        for (idx, ins) in code.iter().take(limit).enumerate() {
            self.values[idx] = match *ins {
                Instruction::Const { re, im } => Complex64::new(re, im),
                Instruction::Input { row, col } => {
                    self.gathered[self.gather_stride * row as usize + col as usize]
                }
                Instruction::Add { a, b } => self.values[a as usize] + self.values[b as usize],
                Instruction::Mul { a, b } => self.values[a as usize] * self.values[b as usize],
                Instruction::Neg { a } => -self.values[a as usize],
            };
        }
    }

    /// Amplitude coefficient `g` of one event for one Bell input (forward
    /// prefix only).
    fn forward_amplitude(&mut self, u: &UnitaryMatrix, event: usize, bell: BellState) -> Complex64 {
        let plan = self.plan;
        let binding = &plan.bindings[event];
        let class = &plan.classes[binding.class as usize];
        self.gather(u, binding, class.cols, bell);
        self.run(&class.code, class.n_fwd);
        self.values[class.amp_node as usize]
    }

    /// Full `4×N` probability table at `U` (with the default `ε_zero`).
    pub fn probabilities(&mut self, u: &UnitaryMatrix) -> Result<ProbabilityTable> {
        self.check_dims(u)?;
        let plan = self.plan;
        let n_events = plan.events.len();
        let mut rows = [(); 4].map(|_| vec![0.0f64; n_events]);
        for (event, binding) in plan.bindings.iter().enumerate() {
            let norm = plan.classes[binding.class as usize].norm_factor;
            for bell in BellState::ALL {
                let g = self.forward_amplitude(u, event, bell);
                rows[bell.index()][event] = g.norm_sqr() * norm;
            }
        }
        Ok(ProbabilityTable::new(rows, DEFAULT_EPS_ZERO))
    }

    /// Amplitudes of every event for one Bell input, in event order.
    pub fn amplitude_row(
        &mut self,
        u: &UnitaryMatrix,
        bell: BellState,
    ) -> Result<Vec<Complex64>> {
        self.check_dims(u)?;
        let plan = self.plan;
        let mut out = Vec::with_capacity(plan.events.len());
        for event in 0..plan.events.len() {
            let norm = plan.classes[plan.bindings[event].class as usize].norm_factor;
            let g = self.forward_amplitude(u, event, bell);
            out.push(g * norm.sqrt());
        }
        Ok(out)
    }

    /// Accumulates `Σ_{e,β} w_{e,β}·∇p_β^e` over `(Re u_ij, Im u_ij)`,
    /// layout `grad[2(i·n+j)]` real / `+1` imaginary. Zero-weight entries are
    /// skipped entirely.
    pub fn weighted_gradient(
        &mut self,
        u: &UnitaryMatrix,
        weights: &[[f64; 4]],
    ) -> Result<Vec<f64>> {
        self.check_dims(u)?;
        let plan = self.plan;
        if weights.len() != plan.events.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight rows for {} events",
                weights.len(),
                plan.events.len()
            )));
        }
        let n = plan.n;
        let mut grad = vec![0.0f64; 2 * n * n];
        for (event, event_weights) in weights.iter().enumerate() {
            for bell in BellState::ALL {
                let w = event_weights[bell.index()];
                if w == 0.0 {
                    continue;
                }
                self.accumulate_event_gradient(u, event, bell, w, &mut grad);
            }
        }
        Ok(grad)
    }

    /// Adds `weight·∇p_bell^event` into `grad` (dense `2n²` layout).
    fn accumulate_event_gradient(
        &mut self,
        u: &UnitaryMatrix,
        event: usize,
        bell: BellState,
        weight: f64,
        grad: &mut [f64],
    ) {
        let plan = self.plan;
        let n = plan.n;
        let binding = &plan.bindings[event];
        let class = &plan.classes[binding.class as usize];
        self.gather(u, binding, class.cols, bell);
        self.run(&class.code, class.code.len());
        let g = self.values[class.amp_node as usize];
        let transform = self.transforms[bell.index()];
        let scale_base = weight * class.norm_factor;
        for (slot, &urow) in plan.rows.iter().enumerate() {
            let (src, sign) = transform.source(urow as usize);
            for (c, &col) in binding.sigma.iter().enumerate() {
                let node = class.grad_nodes[slot * class.cols + c];
                if node == u32::MAX {
                    continue;
                }
                let adj = g.conj() * self.values[node as usize];
                let scale = scale_base * sign;
                let base = 2 * (src * n + col as usize);
                grad[base] += scale * 2.0 * adj.re;
                grad[base + 1] -= scale * 2.0 * adj.im;
            }
        }
    }
}

/// Spec-level entry point: the full probability table at `U`.
pub fn evaluate(plan: &EvaluationPlan, u: &UnitaryMatrix) -> Result<ProbabilityTable> {
    PlanEvaluator::new(plan).probabilities(u)
}

/// One sparse gradient record: `∂p/∂Re u[row][col]` and `∂p/∂Im u[row][col]`.
#[derive(Clone, Copy, Debug)]
pub struct GradientEntry {
    pub row: usize,
    pub col: usize,
    pub d_re: f64,
    pub d_im: f64,
}

/// Gradient of every `p_β^e`, stored sparsely over the involved entries.
pub struct GradientTable {
    n: usize,
    pub per_event: Vec<[Vec<GradientEntry>; 4]>,
}

impl GradientTable {
    /// Dense `2n²` layout (`2(i·n+j)` real part, `+1` imaginary part).
    pub fn dense(&self, bell: BellState, event: usize) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n * self.n];
        for entry in &self.per_event[event][bell.index()] {
            out[2 * (entry.row * self.n + entry.col)] += entry.d_re;
            out[2 * (entry.row * self.n + entry.col) + 1] += entry.d_im;
        }
        out
    }
}

/// Analytic gradient of the whole table; sized for diagnostics and tests —
/// optimization loops use [`PlanEvaluator::weighted_gradient`] instead.
pub fn evaluate_gradient(plan: &EvaluationPlan, u: &UnitaryMatrix) -> Result<GradientTable> {
    let mut evaluator = PlanEvaluator::new(plan);
    evaluator.check_dims(u)?;
    let n = plan.n;
    let mut per_event = Vec::with_capacity(plan.events.len());
    for event in 0..plan.events.len() {
        let binding = &plan.bindings[event];
        let class = &plan.classes[binding.class as usize];
        let mut rows_out: [Vec<GradientEntry>; 4] = [(); 4].map(|_| Vec::new());
        for bell in BellState::ALL {
            evaluator.gather(u, binding, class.cols, bell);
            evaluator.run(&class.code, class.code.len());
            let g = evaluator.values[class.amp_node as usize];
            let transform = evaluator.transforms[bell.index()];
            for (slot, &urow) in plan.rows.iter().enumerate() {
                let (src, sign) = transform.source(urow as usize);
                for (c, &col) in binding.sigma.iter().enumerate() {
                    let node = class.grad_nodes[slot * class.cols + c];
                    if node == u32::MAX {
                        continue;
                    }
                    let adj = g.conj() * evaluator.values[node as usize];
                    let scale = class.norm_factor * sign;
                    rows_out[bell.index()].push(GradientEntry {
                        row: src,
                        col: col as usize,
                        d_re: scale * 2.0 * adj.re,
                        d_im: -scale * 2.0 * adj.im,
                    });
                }
            }
        }
        per_event.push(rows_out);
    }
    Ok(GradientTable { n, per_event })
}

#[derive(Serialize, Deserialize)]
struct PlanCacheFile {
    version: u32,
    plan: EvaluationPlan,
}

/// Writes the plan to a JSON cache file.
pub fn save_plan_cache(plan: &EvaluationPlan, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let writer = std::io::BufWriter::new(file);
    serde_json::to_writer(
        writer,
        &PlanCacheFile { version: PLAN_CACHE_VERSION, plan: plan.clone() },
    )?;
    Ok(())
}

/// Loads a cached plan, verifying the format version and the `(spec, n)` key.
pub fn load_plan_cache(path: &Path, spec: &AncillaSpec, n: usize) -> Result<EvaluationPlan> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let cache: PlanCacheFile = serde_json::from_reader(reader)?;
    if cache.version != PLAN_CACHE_VERSION {
        return Err(Error::PlanCacheMismatch(format!(
            "cache version {} (this build reads {PLAN_CACHE_VERSION})",
            cache.version
        )));
    }
    if cache.plan.spec != *spec || cache.plan.n != n {
        return Err(Error::PlanCacheMismatch(format!(
            "cache holds ({}, n={}), requested ({}, n={n})",
            cache.plan.spec.label(),
            cache.plan.n,
            spec.label()
        )));
    }
    Ok(cache.plan)
}
