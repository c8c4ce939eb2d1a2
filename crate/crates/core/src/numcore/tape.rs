//! Reverse-mode gradient tape over whole matrices.
//!
//! Nodes are appended in evaluation order and each node stores its forward
//! value plus whatever the backward rule needs. [`Tape::backward`] allocates
//! fresh adjoints on every call and walks the nodes in exact reverse order,
//! so a tape can be differentiated more than once.
//!
//! The operation set is deliberately small: it covers MLP encoders, linear
//! heads, L2-normalized embeddings, cross-entropy and the symmetric InfoNCE
//! objective, and nothing else.

use crate::error::{invalid, Error, Result};
use crate::numcore::matrix::{dot, kernels};
use crate::numcore::{vexp, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    RowL2Normalize {
        x: NodeId,
        eps: f64,
        norms: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Matrix,
    },
    LogSumExpRows {
        x: NodeId,
        probs: Matrix,
    },
    /// Row-wise and column-wise cross-entropy of a square score matrix
    /// against the diagonal; output is `1×2` `[rows, cols]`.
    DiagonalCrossEntropyPair {
        scores: NodeId,
        inv_temp: f64,
        probs: PairProbs,
    },
    /// Fused `diagonal_cross_entropy_pair(za·zbᵀ)`; the score matrix is
    /// recomputed block by block in the backward pass instead of stored.
    InfoNcePair {
        za: NodeId,
        zb: NodeId,
        inv_temp: f64,
        shift: f64,
        row_inv: Vec<f64>,
        col_inv: Vec<f64>,
    },
    Scale(NodeId, f64),
    Mean(NodeId),
    MaskMul(NodeId, Matrix),
}

/// Row and column softmax probabilities of `t·S`.
#[derive(Debug)]
enum PairProbs {
    /// `P_row[i][j] = e[i][j]·row_inv[i]`, `P_col[i][j] = e[i][j]·col_inv[j]`.
    Shared {
        e: Matrix,
        row_inv: Vec<f64>,
        col_inv: Vec<f64>,
    },
    Split {
        p_row: Matrix,
        p_col: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints from one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.adj[id.0].as_ref()
    }

    /// Gradient for `id`, or zeros of `shape` if nothing flowed into it.
    pub fn take_or_zeros(&mut self, id: NodeId, shape: (usize, usize)) -> Matrix {
        self.adj[id.0].take().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::MatMulNt(a, b), ng))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        let ng = self.ng(&[a]);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    /// Adds a `1×c` row vector to every row of an `n×c` matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = av.clone();
        let b = bv.row(0).to_vec();
        for i in 0..out.rows() {
            for (x, bb) in out.row_mut(i).iter_mut().zip(&b) {
                *x += bb;
            }
        }
        let ng = self.ng(&[a, bias]);
        Ok(self.push(out, Op::AddRow(a, bias), ng))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(&[a]);
        self.push(v, Op::Relu(a), ng)
    }

    /// Divides each row by `max(‖row‖, eps)`; an all-zero row stays zero.
    pub fn row_l2_normalize(&mut self, a: NodeId, eps: f64) -> NodeId {
        let x = self.value(a);
        let mut out = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let d = n.max(eps);
            out.row_mut(i).iter_mut().for_each(|v| *v /= d);
            norms.push(n);
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::RowL2Normalize { x: a, eps, norms }, ng)
    }

    /// Mean softmax cross-entropy of `logits` (n×C) against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let l = self.value(logits);
        if labels.len() != l.rows() || l.rows() == 0 {
            return Err(invalid(format!(
                "softmax_cross_entropy: {} labels for {} rows",
                labels.len(),
                l.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= l.cols()) {
            return Err(invalid(format!("label {bad} out of range for {} classes", l.cols())));
        }
        let mut probs = Matrix::zeros(l.rows(), l.cols());
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = l.row(i);
            let lse = log_sum_exp_into(row, probs.row_mut(i));
            total += lse - row[y];
        }
        let loss = Matrix::from_raw(1, 1, vec![total / labels.len() as f64]);
        let ng = self.ng(&[logits]);
        Ok(self.push(
            loss,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Row-wise `log Σ_j exp(x_ij)`, output `n×1`.
    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let out: Vec<f64> = (0..x.rows())
            .map(|i| log_sum_exp_into(x.row(i), probs.row_mut(i)))
            .collect();
        let v = Matrix::from_raw(x.rows(), 1, out);
        let ng = self.ng(&[a]);
        self.push(v, Op::LogSumExpRows { x: a, probs }, ng)
    }

    /// For a square score matrix `S` (N×N) and `t = 1/τ`, returns the `1×2`
    /// node `[ −(1/N)Σ_i log softmax_j(t·S)_ii , −(1/N)Σ_j log softmax_i(t·S)_jj ]`:
    /// cross-entropy of every row and every column against the diagonal.
    ///
    /// The exponentials are shared between the two directions when the score
    /// range allows a single global shift without underflow.
    pub fn diagonal_cross_entropy_pair(&mut self, scores: NodeId, tau: f64) -> Result<NodeId> {
        if !(tau > 0.0) {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        let s = self.value(scores);
        let n = s.rows();
        if n == 0 || s.cols() != n {
            return Err(Error::Shape {
                op: "diagonal_cross_entropy_pair",
                left: s.shape(),
                right: (n, n),
            });
        }
        let t = 1.0 / tau;
        let (hi, lo) = s
            .data()
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(h, l), &v| (h.max(v), l.min(v)));
        let mut row_lse = vec![0.0; n];
        let mut col_lse = vec![0.0; n];

        let probs = if (hi - lo) * t < 600.0 {
            // one exp per entry, shared by rows and columns
            let mut e = Matrix::zeros(n, n);
            let mut col_sum = vec![0.0; n];
            for i in 0..n {
                let src = s.row(i);
                let row = e.row_mut(i);
                for (o, &v) in row.iter_mut().zip(src) {
                    *o = (v - hi) * t;
                }
                vexp::exp_in_place(row);
                let mut rs = 0.0;
                for (&x, c) in row.iter().zip(col_sum.iter_mut()) {
                    rs += x;
                    *c += x;
                }
                row_lse[i] = rs;
            }
            let row_inv = row_lse.iter().map(|v| 1.0 / v).collect();
            let col_inv = col_sum.iter().map(|v| 1.0 / v).collect();
            for i in 0..n {
                row_lse[i] = row_lse[i].ln() + hi * t;
                col_lse[i] = col_sum[i].ln() + hi * t;
            }
            PairProbs::Shared { e, row_inv, col_inv }
        } else {
            let scaled = s.scale(t);
            let mut p_row = Matrix::zeros(n, n);
            for i in 0..n {
                row_lse[i] = log_sum_exp_into(scaled.row(i), p_row.row_mut(i));
            }
            let st = scaled.transpose();
            let mut pt = Matrix::zeros(n, n);
            for j in 0..n {
                col_lse[j] = log_sum_exp_into(st.row(j), pt.row_mut(j));
            }
            PairProbs::Split {
                p_row,
                p_col: pt.transpose(),
            }
        };

        let mut l_rows = 0.0;
        let mut l_cols = 0.0;
        for i in 0..n {
            let d = s.get(i, i) * t;
            l_rows += row_lse[i] - d;
            l_cols += col_lse[i] - d;
        }
        let v = Matrix::from_raw(1, 2, vec![l_rows / n as f64, l_cols / n as f64]);
        let ng = self.ng(&[scores]);
        Ok(self.push(
            v,
            Op::DiagonalCrossEntropyPair {
                scores,
                inv_temp: t,
                probs,
            },
            ng,
        ))
    }

    /// `diagonal_cross_entropy_pair(za·zbᵀ, tau)` without materializing the
    /// N×N score matrix. All exponentials share the shift
    /// `max‖za_i‖·max‖zb_j‖ ≥ max s_ij`; when that bound is too loose to rule
    /// out underflow (`2·shift/τ ≥ 600`) the two separate ops are recorded
    /// instead.
    pub fn info_nce_pair(&mut self, za: NodeId, zb: NodeId, tau: f64) -> Result<NodeId> {
        if !(tau > 0.0) {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        let (a, b) = (self.value(za), self.value(zb));
        if a.shape() != b.shape() || a.rows() == 0 {
            return Err(Error::Shape {
                op: "info_nce_pair",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let t = 1.0 / tau;
        let max_norm = |m: &Matrix| {
            (0..m.rows())
                .map(|i| dot(m.row(i), m.row(i)).sqrt())
                .fold(0.0, f64::max)
        };
        let shift = max_norm(a) * max_norm(b);
        if !(2.0 * shift * t < 600.0) {
            let s = self.matmul_nt(za, zb)?;
            return self.diagonal_cross_entropy_pair(s, tau);
        }
        let n = a.rows();
        let mut row_sum = vec![0.0; n];
        let mut col_sum = vec![0.0; n];
        let mut diag = vec![0.0; n];
        score_blocks(a, b, t, shift, |i0, bw, e, raw_diag| {
            for j in 0..n {
                let r = &e[j * bw..(j + 1) * bw];
                for (ii, &x) in r.iter().enumerate() {
                    row_sum[i0 + ii] += x;
                }
                col_sum[j] += r.iter().sum::<f64>();
            }
            diag[i0..i0 + bw].copy_from_slice(raw_diag);
        });
        let (mut l_rows, mut l_cols) = (0.0, 0.0);
        for i in 0..n {
            let d = diag[i] * t;
            l_rows += row_sum[i].ln() + shift * t - d;
            l_cols += col_sum[i].ln() + shift * t - d;
        }
        let v = Matrix::from_raw(1, 2, vec![l_rows / n as f64, l_cols / n as f64]);
        let ng = self.ng(&[za, zb]);
        let op = Op::InfoNcePair {
            za,
            zb,
            inv_temp: t,
            shift,
            row_inv: row_sum.iter().map(|v| 1.0 / v).collect(),
            col_inv: col_sum.iter().map(|v| 1.0 / v).collect(),
        };
        Ok(self.push(v, op, ng))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        let ng = self.ng(&[a]);
        self.push(v, Op::Scale(a, c), ng)
    }

    /// Mean of all entries, as a `1×1` node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let v = x.data().iter().sum::<f64>() / x.data().len().max(1) as f64;
        let ng = self.ng(&[a]);
        self.push(Matrix::from_raw(1, 1, vec![v]), Op::Mean(a), ng)
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, a: NodeId, mask: Matrix) -> Result<NodeId> {
        let v = self.value(a).hadamard(&mask)?;
        let ng = self.ng(&[a]);
        Ok(self.push(v, Op::MaskMul(a, mask), ng))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let da = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut adj, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let da = g.matmul(self.value(*b))?;
                        accumulate(&mut adj, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = g.matmul_tn(self.value(*a))?;
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transpose()),
                Op::Add(a, b) => {
                    if self.nodes[b.0].needs_grad {
                        accumulate(&mut adj, *b, g.clone());
                    }
                    accumulate(&mut adj, *a, g);
                }
                Op::AddRow(a, bias) => {
                    if self.nodes[bias.0].needs_grad {
                        let mut db = vec![0.0; g.cols()];
                        for i in 0..g.rows() {
                            for (d, v) in db.iter_mut().zip(g.row(i)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut adj, *bias, Matrix::from_raw(1, g.cols(), db));
                    }
                    accumulate(&mut adj, *a, g);
                }
                Op::Relu(a) => {
                    let mut da = g;
                    for (d, &y) in da.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::RowL2Normalize { x, eps, norms } => {
                    let y = &node.value;
                    let mut dx = g;
                    for i in 0..y.rows() {
                        let n = norms[i];
                        let yr = y.row(i);
                        let gr = dx.row_mut(i);
                        if n > *eps {
                            let proj: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                            for (d, &yy) in gr.iter_mut().zip(yr) {
                                *d = (*d - yy * proj) / n;
                            }
                        } else {
                            gr.iter_mut().for_each(|d| *d /= eps);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let c = g.data()[0] / labels.len() as f64;
                    let mut d = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        let row = d.row_mut(i);
                        row[y] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= c);
                    }
                    accumulate(&mut adj, *logits, d);
                }
                Op::LogSumExpRows { x, probs } => {
                    let mut d = probs.clone();
                    for i in 0..d.rows() {
                        let gi = g.get(i, 0);
                        d.row_mut(i).iter_mut().for_each(|v| *v *= gi);
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::DiagonalCrossEntropyPair {
                    scores,
                    inv_temp,
                    probs,
                } => {
                    let n = self.value(*scores).rows();
                    let cr = g.data()[0] * inv_temp / n as f64;
                    let cc = g.data()[1] * inv_temp / n as f64;
                    let mut d = Matrix::zeros(n, n);
                    match probs {
                        PairProbs::Shared { e, row_inv, col_inv } => {
                            let cci: Vec<f64> = col_inv.iter().map(|v| cc * v).collect();
                            for i in 0..n {
                                let cri = cr * row_inv[i];
                                for ((o, &x), &c) in d.row_mut(i).iter_mut().zip(e.row(i)).zip(&cci) {
                                    *o = x * (cri + c);
                                }
                            }
                        }
                        PairProbs::Split { p_row, p_col } => {
                            let it = p_row.data().iter().zip(p_col.data());
                            for (o, (&pr, &pc)) in d.data_mut().iter_mut().zip(it) {
                                *o = cr * pr + cc * pc;
                            }
                        }
                    }
                    for i in 0..n {
                        d.data_mut()[i * n + i] -= cr + cc;
                    }
                    accumulate(&mut adj, *scores, d);
                }
                Op::InfoNcePair {
                    za,
                    zb,
                    inv_temp,
                    shift,
                    row_inv,
                    col_inv,
                } => {
                    let (a, b) = (self.value(*za), self.value(*zb));
                    let (n, d) = a.shape();
                    let cr = g.data()[0] * inv_temp / n as f64;
                    let cc = g.data()[1] * inv_temp / n as f64;
                    let mut da = vec![0.0; n * d];
                    let mut db = vec![0.0; n * d];
                    score_blocks(a, b, *inv_temp, *shift, |i0, bw, e, _| {
                        // e becomes dS for this block, laid out j-major.
                        let mut ds = e.to_vec();
                        for j in 0..n {
                            let cj = cc * col_inv[j];
                            for (ii, v) in ds[j * bw..(j + 1) * bw].iter_mut().enumerate() {
                                *v *= cr * row_inv[i0 + ii] + cj;
                            }
                            if (i0..i0 + bw).contains(&j) {
                                ds[j * bw + j - i0] -= cr + cc;
                            }
                        }
                        kernels::gemm(&mut db, &ds, &a.data()[i0 * d..(i0 + bw) * d], n, bw, d);
                        kernels::gemm_tn(&mut da[i0 * d..(i0 + bw) * d], &ds, b.data(), n, bw, d);
                    });
                    if self.nodes[za.0].needs_grad {
                        accumulate(&mut adj, *za, Matrix::from_raw(n, d, da));
                    }
                    if self.nodes[zb.0].needs_grad {
                        accumulate(&mut adj, *zb, Matrix::from_raw(n, d, db));
                    }
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(*c)),
                Op::Mean(a) => {
                    let shape = self.value(*a).shape();
                    let v = g.data()[0] / (shape.0 * shape.1).max(1) as f64;
                    accumulate(&mut adj, *a, Matrix::filled(shape.0, shape.1, v));
                }
                Op::MaskMul(a, mask) => {
                    let da = g.hadamard(mask)?;
                    accumulate(&mut adj, *a, da);
                }
            }
        }
        Ok(Gradients { adj })
    }
}

/// Rows of `za` processed per score block.
const SCORE_BLOCK: usize = 32;

/// Calls `f(i0, width, e, diag)` for consecutive blocks of rows of `za`, where
/// `e[j·width + ii] = exp(t·(s(i0+ii, j) − shift))` with `s = za·zbᵀ` and
/// `diag[ii] = s(i0+ii, i0+ii)`. Block values do not depend on the caller, so
/// the forward and backward passes see identical numbers.
fn score_blocks(za: &Matrix, zb: &Matrix, t: f64, shift: f64, mut f: impl FnMut(usize, usize, &[f64], &[f64])) {
    let (n, d) = za.shape();
    let at = za.transpose();
    let mut e = vec![0.0; n * SCORE_BLOCK];
    let mut a_blk = vec![0.0; d * SCORE_BLOCK];
    let mut diag = vec![0.0; SCORE_BLOCK];
    for i0 in (0..n).step_by(SCORE_BLOCK) {
        let bw = SCORE_BLOCK.min(n - i0);
        for p in 0..d {
            a_blk[p * bw..(p + 1) * bw].copy_from_slice(&at.row(p)[i0..i0 + bw]);
        }
        let e = &mut e[..n * bw];
        e.iter_mut().for_each(|v| *v = 0.0);
        kernels::gemm(e, zb.data(), &a_blk[..d * bw], n, d, bw);
        for ii in 0..bw {
            diag[ii] = e[(i0 + ii) * bw + ii];
        }
        e.iter_mut().for_each(|v| *v = (*v - shift) * t);
        vexp::exp_in_place(e);
        f(i0, bw, e, &diag[..bw]);
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut adj[id.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

/// Writes `softmax(row)` into `probs` and returns `log Σ exp(row)`.
fn log_sum_exp_into(row: &[f64], probs: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &v) in probs.iter_mut().zip(row) {
        *p = (v - max).exp();
        sum += *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    max + sum.ln()
}
