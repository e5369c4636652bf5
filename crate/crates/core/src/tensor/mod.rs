//! Dense float64 tensors with reverse-mode differentiation.
//!
//! Values are row-major `Vec<f64>` buffers behind `Rc`, so cloning a tensor
//! is cheap. A tensor optionally carries a handle into a [`Graph`]: when any
//! operand of an operation is tracked, the result is recorded and
//! differentiable; when none is, the same code path computes plain values.
//! Broadcasting is restricted to single-element-vs-tensor and equal shapes.

mod graph;

pub use graph::{Graph, NodeId};
use graph::{Node, OpKind, Operand};

use std::rc::Rc;

use crate::error::{FlowError, Result};

#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    node: Option<(Graph, NodeId)>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, tracked={}, data={:?})",
            self.shape,
            self.node.is_some(),
            if self.data.len() <= 8 {
                format!("{:?}", self.data)
            } else {
                format!("[{} elems]", self.data.len())
            }
        )
    }
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(FlowError::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Rc::new(data),
            node: None,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![v], &[1, 1]).expect("scalar shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(vec![0.0; numel], shape).expect("zeros shape")
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(vec![1.0; numel], shape).expect("ones shape")
    }

    /// Row vector `[1, d]`.
    pub fn row(values: &[f64]) -> Self {
        Self::new(values.to_vec(), &[1, values.len()]).expect("row shape")
    }

    /// Dense matrix from nested rows; every row must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(FlowError::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, &[n, d])
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self::new(data, &[d, d]).expect("identity shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar");
        self.data[0]
    }

    pub fn n_rows(&self) -> usize {
        self.shape[0]
    }

    pub fn n_cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.data)
    }

    /// True when this tensor participates in a recorded graph.
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.node.as_ref().map(|(g, _)| g)
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.as_ref().map(|(_, id)| *id)
    }

    /// Value-equal tensor that terminates gradient flow.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    /// Gradient accumulated for this tensor by backward passes, if tracked
    /// and reached.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.as_ref().and_then(|(g, id)| g.grad_of(*id))
    }

    /// Like [`grad`](Self::grad) but substitutes zeros when no gradient
    /// reached this tensor (or it is untracked).
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.data.len()])
    }

    /// Populates gradients of every tracked tensor reachable from this
    /// scalar. A detached scalar is a no-op (all gradients stay zero).
    pub fn backward(&self) -> Result<()> {
        if self.data.len() != 1 {
            return Err(FlowError::Contract(format!(
                "backward requires a scalar loss; got shape {:?}",
                self.shape
            )));
        }
        match &self.node {
            Some((g, id)) => g.backward_from(*id),
            None => Ok(()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Graph {
    /// Registers `t` as a watched leaf; the returned tensor shares its data
    /// and will accumulate gradients.
    pub fn leaf(&self, t: &Tensor) -> Tensor {
        let id = self.push(Node {
            op: OpKind::Leaf,
            a: None,
            b: None,
            out_shape: t.shape.clone(),
            out_data: t.data_rc(),
        });
        Tensor {
            shape: t.shape.clone(),
            data: t.data_rc(),
            node: Some((self.clone(), id)),
        }
    }
}

fn operand_of(t: &Tensor) -> Operand {
    Operand {
        id: t.node_id(),
        data: t.data_rc(),
        shape: t.shape.clone(),
    }
}

/// Graph shared by the operands, if any is tracked. Two distinct graphs in
/// one operation is a programming error.
fn common_graph(a: &Tensor, b: Option<&Tensor>) -> Result<Option<Graph>> {
    let ga = a.graph();
    let gb = b.and_then(|t| t.graph());
    match (ga, gb) {
        (Some(x), Some(y)) => {
            if x.same_graph(y) {
                Ok(Some(x.clone()))
            } else {
                Err(FlowError::Contract(
                    "operands belong to different graphs".into(),
                ))
            }
        }
        (Some(x), None) => Ok(Some(x.clone())),
        (None, Some(y)) => Ok(Some(y.clone())),
        (None, None) => Ok(None),
    }
}

fn finish(
    graph: Option<Graph>,
    op: OpKind,
    a: Option<&Tensor>,
    b: Option<&Tensor>,
    shape: Vec<usize>,
    data: Vec<f64>,
) -> Tensor {
    let data = Rc::new(data);
    let node = graph.map(|g| {
        let id = g.push(Node {
            op,
            a: a.map(operand_of),
            b: b.map(operand_of),
            out_shape: shape.clone(),
            out_data: Rc::clone(&data),
        });
        (g, id)
    });
    Tensor { shape, data, node }
}

/// Output shape for a binary elementwise op under the restricted broadcast
/// rule: equal shapes, or one side with a single element.
fn binary_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<Vec<usize>> {
    if a.shape == b.shape {
        Ok(a.shape.clone())
    } else if a.len() == 1 {
        Ok(b.shape.clone())
    } else if b.len() == 1 {
        Ok(a.shape.clone())
    } else {
        Err(FlowError::Shape(format!(
            "{}: incompatible shapes {:?} vs {:?}",
            op, a.shape, b.shape
        )))
    }
}

fn binary_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    let av = a.data();
    let bv = b.data();
    (0..n)
        .map(|i| {
            let x = if av.len() == 1 { av[0] } else { av[i] };
            let y = if bv.len() == 1 { bv[0] } else { bv[i] };
            f(x, y)
        })
        .collect()
}

macro_rules! binary_op {
    ($name:ident, $kind:ident, $f:expr) => {
        pub fn $name(&self, other: &Tensor) -> Result<Tensor> {
            let shape = binary_shape(self, other, stringify!($name))?;
            let graph = common_graph(self, Some(other))?;
            let data = binary_map(self, other, $f);
            Ok(finish(
                graph,
                OpKind::$kind,
                Some(self),
                Some(other),
                shape,
                data,
            ))
        }
    };
}

macro_rules! unary_op {
    ($name:ident, $kind:ident, $f:expr) => {
        pub fn $name(&self) -> Result<Tensor> {
            let graph = common_graph(self, None)?;
            let data = self.data.iter().map($f).collect();
            Ok(finish(
                graph,
                OpKind::$kind,
                Some(self),
                None,
                self.shape.clone(),
                data,
            ))
        }
    };
}

impl Tensor {
    binary_op!(add, Add, |x, y| x + y);
    binary_op!(sub, Sub, |x, y| x - y);
    binary_op!(mul, Mul, |x, y| x * y);
    binary_op!(div, Div, |x, y| x / y);

    unary_op!(exp, Exp, |x| x.exp());
    unary_op!(ln, Ln, |x| x.ln());
    unary_op!(tanh, Tanh, |x| x.tanh());
    unary_op!(abs, Abs, |x| x.abs());
    unary_op!(neg, Neg, |x| -x);

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        let graph = common_graph(self, None)?;
        let data = self.data.iter().map(|x| x + c).collect();
        Ok(finish(
            graph,
            OpKind::AddScalar,
            Some(self),
            None,
            self.shape.clone(),
            data,
        ))
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Tensor> {
        let graph = common_graph(self, None)?;
        let data = self.data.iter().map(|x| x * c).collect();
        Ok(finish(
            graph,
            OpKind::MulScalar(c),
            Some(self),
            None,
            self.shape.clone(),
            data,
        ))
    }

    /// Standard matrix product `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 {
            return Err(FlowError::Shape("matmul requires rank-2 tensors".into()));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(FlowError::Shape(format!(
                "matmul inner dimensions differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let graph = common_graph(self, Some(other))?;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = self.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let out = &mut data[i * n..(i + 1) * n];
                for (o, bv) in out.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        Ok(finish(
            graph,
            OpKind::Matmul,
            Some(self),
            Some(other),
            vec![m, n],
            data,
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(FlowError::Shape("transpose requires rank-2".into()));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let graph = common_graph(self, None)?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(finish(
            graph,
            OpKind::Transpose,
            Some(self),
            None,
            vec![c, r],
            data,
        ))
    }

    /// Per-row sum: `[n, d] -> [n, 1]`.
    pub fn row_sum(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(FlowError::Shape("row_sum requires rank-2".into()));
        }
        let (n, d) = (self.shape[0], self.shape[1]);
        let graph = common_graph(self, None)?;
        let data: Vec<f64> = (0..n)
            .map(|i| self.data[i * d..(i + 1) * d].iter().sum())
            .collect();
        Ok(finish(
            graph,
            OpKind::RowSum,
            Some(self),
            None,
            vec![n, 1],
            data,
        ))
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        let graph = common_graph(self, None)?;
        let data = vec![self.data.iter().sum()];
        Ok(finish(
            graph,
            OpKind::SumAll,
            Some(self),
            None,
            vec![1, 1],
            data,
        ))
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        if self.data.is_empty() {
            return Err(FlowError::Contract("mean of empty tensor".into()));
        }
        let graph = common_graph(self, None)?;
        let data = vec![self.data.iter().sum::<f64>() / self.data.len() as f64];
        Ok(finish(
            graph,
            OpKind::MeanAll,
            Some(self),
            None,
            vec![1, 1],
            data,
        ))
    }

    /// Replicates a `[1, d]` row vector to `[n, d]`.
    pub fn broadcast_rows(&self, n: usize) -> Result<Tensor> {
        if self.shape.len() != 2 || self.shape[0] != 1 {
            return Err(FlowError::Shape(format!(
                "broadcast_rows requires [1, d], got {:?}",
                self.shape
            )));
        }
        let d = self.shape[1];
        let graph = common_graph(self, None)?;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Ok(finish(
            graph,
            OpKind::BroadcastRows,
            Some(self),
            None,
            vec![n, d],
            data,
        ))
    }

    /// Column reordering: `out[:, j] = self[:, perm[j]]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(FlowError::Shape("permute_cols requires rank-2".into()));
        }
        let (n, d) = (self.shape[0], self.shape[1]);
        let mut seen = vec![false; d];
        let valid = perm.len() == d
            && perm.iter().all(|&p| {
                if p >= d || seen[p] {
                    false
                } else {
                    seen[p] = true;
                    true
                }
            });
        if !valid {
            return Err(FlowError::Config(format!(
                "invalid column permutation {:?} for d={}",
                perm, d
            )));
        }
        let graph = common_graph(self, None)?;
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            for (j, &src) in perm.iter().enumerate() {
                data[i * d + j] = self.data[i * d + src];
            }
        }
        Ok(finish(
            graph,
            OpKind::PermuteCols(Rc::new(perm.to_vec())),
            Some(self),
            None,
            vec![n, d],
            data,
        ))
    }

    /// Solves the triangular system `self · Y = rhs` for `Y`, reading only
    /// the indicated triangle of `self` (plus its diagonal unless
    /// `unit_diag`). Differentiable in both operands.
    pub fn solve_triangular(
        &self,
        rhs: &Tensor,
        lower: bool,
        unit_diag: bool,
    ) -> Result<Tensor> {
        if self.shape.len() != 2 || self.shape[0] != self.shape[1] {
            return Err(FlowError::Shape("solve_triangular requires square A".into()));
        }
        let d = self.shape[0];
        if rhs.shape.len() != 2 || rhs.shape[0] != d {
            return Err(FlowError::Shape(format!(
                "solve_triangular rhs shape {:?} incompatible with d={}",
                rhs.shape, d
            )));
        }
        if !unit_diag {
            for i in 0..d {
                if self.data[i * d + i] == 0.0 {
                    return Err(FlowError::Singular(format!(
                        "zero pivot at {} in triangular solve",
                        i
                    )));
                }
            }
        }
        let m = rhs.shape[1];
        let graph = common_graph(self, Some(rhs))?;
        let data =
            graph::solve_triangular_raw(&self.data, &rhs.data, d, m, lower, unit_diag, false);
        Ok(finish(
            graph,
            OpKind::SolveTri { lower, unit_diag },
            Some(self),
            Some(rhs),
            vec![d, m],
            data,
        ))
    }
}
