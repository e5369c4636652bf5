//! Recorded-operation graph backing reverse-mode differentiation.
//!
//! The graph is an append-only tape: every differentiable operation pushes one
//! node holding its operands (by node id when tracked, by value otherwise) and
//! enough saved data to run its backward rule. Recording order is topological,
//! so a single reverse sweep over node ids implements the chain rule.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{FlowError, Result};

pub type NodeId = usize;

/// Operation kinds recorded on the tape.
#[derive(Debug, Clone)]
pub(crate) enum OpKind {
    /// Watched input; gradients accumulate here.
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Ln,
    Tanh,
    Abs,
    Neg,
    AddScalar,
    MulScalar(f64),
    Matmul,
    Transpose,
    /// [n, d] -> [n, 1] sum over each row.
    RowSum,
    /// Any shape -> [1, 1] sum of all elements.
    SumAll,
    /// Any shape -> [1, 1] mean of all elements.
    MeanAll,
    /// [1, d] -> [n, d] row replication.
    BroadcastRows,
    /// Column reordering: out[:, j] = in[:, perm[j]].
    PermuteCols(Rc<Vec<usize>>),
    /// Triangular solve A·Y = B for Y, A in the first operand slot.
    SolveTri { lower: bool, unit_diag: bool },
}

/// One operand of a recorded node. `id` is present only when the operand is
/// itself tracked; untracked operands are constants for differentiation.
#[derive(Debug, Clone)]
pub(crate) struct Operand {
    pub id: Option<NodeId>,
    pub data: Rc<Vec<f64>>,
    pub shape: Vec<usize>,
}

#[derive(Debug)]
pub(crate) struct Node {
    pub op: OpKind,
    pub a: Option<Operand>,
    pub b: Option<Operand>,
    pub out_shape: Vec<usize>,
    pub out_data: Rc<Vec<f64>>,
}

#[derive(Debug, Default)]
struct GraphInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Shared handle to a recording tape. Cloning is cheap; all clones refer to
/// the same underlying node list. Rebuilt fresh each training step.
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Graph({} nodes)", self.inner.borrow().nodes.len())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn same_graph(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub(crate) fn push(&self, node: Node) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        inner.grads.push(None);
        inner.nodes.len() - 1
    }

    /// Gradient accumulated at `id`, if any backward pass reached it.
    pub fn grad_of(&self, id: NodeId) -> Option<Vec<f64>> {
        self.inner.borrow().grads[id].clone()
    }

    /// Clears accumulated gradients, keeping the recorded nodes.
    pub fn zero_grads(&self) {
        for g in self.inner.borrow_mut().grads.iter_mut() {
            *g = None;
        }
    }

    /// Reverse sweep from `seed_id`, accumulating d(seed)/d(node) into every
    /// reachable node. Repeated calls accumulate on top of existing grads.
    pub(crate) fn backward_from(&self, seed_id: NodeId) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        let inner = &mut *inner;

        let seed_len = inner.nodes[seed_id].out_data.len();
        if seed_len != 1 {
            return Err(FlowError::Contract(format!(
                "backward requires a scalar; got {} elements",
                seed_len
            )));
        }

        // Local downstream-gradient buffers for this sweep; persistent grads
        // only accumulate, so separate sweeps stay independent.
        let mut flow: Vec<Option<Vec<f64>>> = vec![None; seed_id + 1];
        flow[seed_id] = Some(vec![1.0]);

        for id in (0..=seed_id).rev() {
            let g = match flow[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &inner.nodes[id];
            apply_backward(node, &g, &mut flow);
            match &mut inner.grads[id] {
                Some(acc) => {
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        *a += gi;
                    }
                }
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn accumulate(flow: &mut [Option<Vec<f64>>], operand: &Operand, contribution: &[f64]) {
    let id = match operand.id {
        Some(id) => id,
        None => return,
    };
    match &mut flow[id] {
        Some(buf) => {
            for (b, c) in buf.iter_mut().zip(contribution) {
                *b += c;
            }
        }
        slot => *slot = Some(contribution.to_vec()),
    }
}

/// Sums an output-shaped gradient down to an operand that was broadcast as a
/// single-element tensor; passes it through unchanged otherwise.
fn reduce_for(operand: &Operand, grad: &[f64]) -> Vec<f64> {
    if operand.data.len() == 1 && grad.len() != 1 {
        vec![grad.iter().sum()]
    } else {
        grad.to_vec()
    }
}

/// Elementwise value of the operand at flat index `i`, honoring the
/// single-element broadcast convention.
fn bval(operand: &Operand, i: usize) -> f64 {
    if operand.data.len() == 1 {
        operand.data[0]
    } else {
        operand.data[i]
    }
}

fn apply_backward(node: &Node, g: &[f64], flow: &mut [Option<Vec<f64>>]) {
    let a = node.a.as_ref();
    let b = node.b.as_ref();
    match &node.op {
        OpKind::Leaf => {}
        OpKind::Add => {
            let (a, b) = (a.unwrap(), b.unwrap());
            accumulate(flow, a, &reduce_for(a, g));
            accumulate(flow, b, &reduce_for(b, g));
        }
        OpKind::Sub => {
            let (a, b) = (a.unwrap(), b.unwrap());
            accumulate(flow, a, &reduce_for(a, g));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            accumulate(flow, b, &reduce_for(b, &neg));
        }
        OpKind::Mul => {
            let (a, b) = (a.unwrap(), b.unwrap());
            if a.id.is_some() {
                let da: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * bval(b, i)).collect();
                accumulate(flow, a, &reduce_for(a, &da));
            }
            if b.id.is_some() {
                let db: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * bval(a, i)).collect();
                accumulate(flow, b, &reduce_for(b, &db));
            }
        }
        OpKind::Div => {
            let (a, b) = (a.unwrap(), b.unwrap());
            if a.id.is_some() {
                let da: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi / bval(b, i)).collect();
                accumulate(flow, a, &reduce_for(a, &da));
            }
            if b.id.is_some() {
                let db: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(i, gi)| {
                        let bv = bval(b, i);
                        -gi * bval(a, i) / (bv * bv)
                    })
                    .collect();
                accumulate(flow, b, &reduce_for(b, &db));
            }
        }
        OpKind::Exp => {
            let a = a.unwrap();
            let da: Vec<f64> = g
                .iter()
                .zip(node.out_data.iter())
                .map(|(gi, oi)| gi * oi)
                .collect();
            accumulate(flow, a, &da);
        }
        OpKind::Ln => {
            let a = a.unwrap();
            let da: Vec<f64> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gi, ai)| gi / ai)
                .collect();
            accumulate(flow, a, &da);
        }
        OpKind::Tanh => {
            let a = a.unwrap();
            let da: Vec<f64> = g
                .iter()
                .zip(node.out_data.iter())
                .map(|(gi, oi)| gi * (1.0 - oi * oi))
                .collect();
            accumulate(flow, a, &da);
        }
        OpKind::Abs => {
            let a = a.unwrap();
            let da: Vec<f64> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gi, ai)| {
                    if *ai == 0.0 {
                        0.0
                    } else {
                        gi * ai.signum()
                    }
                })
                .collect();
            accumulate(flow, a, &da);
        }
        OpKind::Neg => {
            let a = a.unwrap();
            let da: Vec<f64> = g.iter().map(|gi| -gi).collect();
            accumulate(flow, a, &da);
        }
        OpKind::AddScalar => {
            accumulate(flow, a.unwrap(), g);
        }
        OpKind::MulScalar(c) => {
            let a = a.unwrap();
            let da: Vec<f64> = g.iter().map(|gi| gi * c).collect();
            accumulate(flow, a, &da);
        }
        OpKind::Matmul => {
            // a: [m, k], b: [k, n], out/g: [m, n].
            let (a, b) = (a.unwrap(), b.unwrap());
            let (m, k) = (a.shape[0], a.shape[1]);
            let n = b.shape[1];
            if a.id.is_some() {
                // da = g · bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * b.data[p * n + j];
                        }
                    }
                }
                accumulate(flow, a, &da);
            }
            if b.id.is_some() {
                // db = aᵀ · g
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = a.data[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                accumulate(flow, b, &db);
            }
        }
        OpKind::Transpose => {
            let a = a.unwrap();
            let (r, c) = (a.shape[0], a.shape[1]);
            // g has shape [c, r]; transpose it back.
            let mut da = vec![0.0; r * c];
            for i in 0..c {
                for j in 0..r {
                    da[j * c + i] = g[i * r + j];
                }
            }
            accumulate(flow, a, &da);
        }
        OpKind::RowSum => {
            let a = a.unwrap();
            let (n, d) = (a.shape[0], a.shape[1]);
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    da[i * d + j] = g[i];
                }
            }
            accumulate(flow, a, &da);
        }
        OpKind::SumAll => {
            let a = a.unwrap();
            let da = vec![g[0]; a.data.len()];
            accumulate(flow, a, &da);
        }
        OpKind::MeanAll => {
            let a = a.unwrap();
            let scale = g[0] / a.data.len() as f64;
            let da = vec![scale; a.data.len()];
            accumulate(flow, a, &da);
        }
        OpKind::BroadcastRows => {
            let a = a.unwrap();
            let d = a.shape[1];
            let n = node.out_shape[0];
            let mut da = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    da[j] += g[i * d + j];
                }
            }
            accumulate(flow, a, &da);
        }
        OpKind::PermuteCols(perm) => {
            let a = a.unwrap();
            let (n, d) = (a.shape[0], a.shape[1]);
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                for (j, &src) in perm.iter().enumerate() {
                    da[i * d + src] += g[i * d + j];
                }
            }
            accumulate(flow, a, &da);
        }
        OpKind::SolveTri { lower, unit_diag } => {
            // Y = A⁻¹ B. With upstream G: dB = A⁻ᵀ G, dA = -dB · Yᵀ
            // restricted to the entries the substitution actually reads.
            let (a, b) = (a.unwrap(), b.unwrap());
            let d = a.shape[0];
            let m = b.shape[1];
            let s = solve_triangular_raw(&a.data, g, d, m, !lower, *unit_diag, true);
            if b.id.is_some() {
                accumulate(flow, b, &s);
            }
            if a.id.is_some() {
                let y = &node.out_data;
                let mut da = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let in_triangle = if *lower { j < i } else { j > i };
                        let on_diag = i == j && !*unit_diag;
                        if !(in_triangle || on_diag) {
                            continue;
                        }
                        let mut acc = 0.0;
                        for col in 0..m {
                            acc += s[i * m + col] * y[j * m + col];
                        }
                        da[i * d + j] = -acc;
                    }
                }
                accumulate(flow, a, &da);
            }
        }
    }
}

/// Solves A·Y = B (or Aᵀ·Y = B when `transpose`) for triangular A stored
/// dense row-major, by forward/back substitution over each column of B.
///
/// `lower` describes the triangle of the *effective* system being solved
/// (after any transposition has been folded in by the caller); `transpose`
/// selects whether coefficients are read as A[i][j] or A[j][i].
pub(crate) fn solve_triangular_raw(
    a: &[f64],
    b: &[f64],
    d: usize,
    m: usize,
    lower: bool,
    unit_diag: bool,
    transpose: bool,
) -> Vec<f64> {
    let at = |i: usize, j: usize| -> f64 {
        if transpose {
            a[j * d + i]
        } else {
            a[i * d + j]
        }
    };
    let mut y = vec![0.0; d * m];
    for col in 0..m {
        if lower {
            for i in 0..d {
                let mut acc = b[i * m + col];
                for j in 0..i {
                    acc -= at(i, j) * y[j * m + col];
                }
                y[i * m + col] = if unit_diag { acc } else { acc / at(i, i) };
            }
        } else {
            for i in (0..d).rev() {
                let mut acc = b[i * m + col];
                for j in (i + 1)..d {
                    acc -= at(i, j) * y[j * m + col];
                }
                y[i * m + col] = if unit_diag { acc } else { acc / at(i, i) };
            }
        }
    }
    y
}
