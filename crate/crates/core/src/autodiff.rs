//! Dense 2-D tensor arithmetic with reverse-mode differentiation, plus the
//! Adam optimizer and the step-decay learning-rate schedule.
//!
//! The engine is a tape: every operation appends a node holding its forward
//! value and enough bookkeeping to push gradients back to its inputs. A tape
//! instance is confined to one thread and is discarded after `backward`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Square sparse matrix in CSR form, with its transpose precomputed so the
/// backward pass of `sparse_matmul` needs no on-the-fly transposition.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    t_row_ptr: Vec<usize>,
    t_col_idx: Vec<usize>,
    t_vals: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets. Duplicate entries are summed;
    /// storage order is deterministic (row-major, then column).
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= dim || c >= dim {
                return Err(Error::Param(format!(
                    "sparse entry ({r},{c}) outside {dim}x{dim}"
                )));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        triplets.dedup_by(|later, earlier| {
            if later.0 == earlier.0 && later.1 == earlier.1 {
                earlier.2 += later.2;
                true
            } else {
                false
            }
        });
        let build = |trips: &[(usize, usize, f64)]| {
            let mut row_ptr = vec![0usize; dim + 1];
            for &(r, _, _) in trips {
                row_ptr[r + 1] += 1;
            }
            for i in 0..dim {
                row_ptr[i + 1] += row_ptr[i];
            }
            let col_idx = trips.iter().map(|t| t.1).collect();
            let vals = trips.iter().map(|t| t.2).collect();
            (row_ptr, col_idx, vals)
        };
        let (row_ptr, col_idx, vals) = build(&triplets);
        let mut transposed: Vec<(usize, usize, f64)> =
            triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        transposed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let (t_row_ptr, t_col_idx, t_vals) = build(&transposed);
        Ok(SparseMatrix {
            dim,
            row_ptr,
            col_idx,
            vals,
            t_row_ptr,
            t_col_idx,
            t_vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k]))
        })
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        for (r, c, v) in self.entries() {
            out[r * self.dim + c] = v;
        }
        out
    }

    /// y += A x, applied independently to each `dim`-row block of `x`.
    fn apply_block(&self, x: &[f64], cols: usize, out: &mut [f64], transpose: bool) {
        let (rp, ci, vs) = if transpose {
            (&self.t_row_ptr, &self.t_col_idx, &self.t_vals)
        } else {
            (&self.row_ptr, &self.col_idx, &self.vals)
        };
        let rows = x.len() / cols;
        debug_assert_eq!(rows % self.dim, 0);
        let blocks = rows / self.dim;
        for blk in 0..blocks {
            let base = blk * self.dim;
            for r in 0..self.dim {
                let o = (base + r) * cols;
                for k in rp[r]..rp[r + 1] {
                    let src = (base + ci[k]) * cols;
                    let v = vs[k];
                    for j in 0..cols {
                        out[o + j] += v * x[src + j];
                    }
                }
            }
        }
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(usize, usize),
    /// C = A B^T
    MatmulTransB(usize, usize),
    SparseMatmul {
        adj: Arc<SparseMatrix>,
        input: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    SubRow(usize, usize),
    MulRow(usize, usize),
    AddScalar(usize),
    Scale(usize, f64),
    Relu(usize),
    Tanh(usize),
    /// (x + eps)^(-1/2), elementwise.
    Rsqrt(usize),
    /// (R,C) -> (1,C) column means.
    MeanRows(usize),
    /// Mean over each consecutive group of `group` rows.
    MeanGroupedRows {
        input: usize,
        group: usize,
    },
    /// L2-normalize each row; all-zero rows stay zero.
    RowUnitize(usize),
    SoftmaxRows(usize),
    /// Softmax over the bin index for each (sample, joint) group of a
    /// (batch*bins*joints, 1) column, rows ordered sample-major then
    /// bin-major (row = s*bins*joints + b*joints + i).
    SoftmaxBins {
        input: usize,
        bins: usize,
        joints: usize,
    },
    /// v[s,i,:] = sum_b alpha[s,b,i] * h[s,b,i,:]
    AttnPool {
        alpha: usize,
        h: usize,
        bins: usize,
        joints: usize,
    },
    /// Keep every `stride`-th frequency bin (all joints retained).
    StrideBins {
        input: usize,
        stride: usize,
        bins: usize,
        joints: usize,
    },
    Dropout {
        input: usize,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
    },
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    training: bool,
}

impl Tape {
    pub fn new(training: bool) -> Self {
        Tape {
            nodes: Vec::new(),
            training,
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            values,
            grad: Vec::new(),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn leaf(&mut self, values: Vec<f64>, rows: usize, cols: usize, requires_grad: bool) -> Result<Var> {
        if values.len() != rows * cols {
            return Err(Error::dimension(
                "leaf",
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        Ok(self.push(rows, cols, values, requires_grad, Op::Leaf))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::dimension("matmul", format!("{m}x{k}"), format!("{k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.nodes[a.0].values, &self.nodes[b.0].values, m, k, n, &mut out, false, false);
        let rg = self.req(a.0) || self.req(b.0);
        Ok(self.push(m, n, out, rg, Op::Matmul(a.0, b.0)))
    }

    /// C = A B^T where A is (m,k) and B is (n,k).
    pub fn matmul_trans_b(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(Error::dimension("matmul_trans_b", format!("{m}x{k}"), format!("{n}x{k2}")));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += av[i * k + t] * bv[j * k + t];
                }
                out[i * n + j] = s;
            }
        }
        let rg = self.req(a.0) || self.req(b.0);
        Ok(self.push(m, n, out, rg, Op::MatmulTransB(a.0, b.0)))
    }

    /// Block-diagonal sparse product: the adjacency is applied to each
    /// `adj.dim()`-row block of `x` (one block per batch sample).
    pub fn sparse_matmul(&mut self, adj: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if rows % adj.dim() != 0 {
            return Err(Error::dimension(
                "sparse_matmul",
                format!("{}x{}", adj.dim(), adj.dim()),
                format!("{rows}x{cols}"),
            ));
        }
        let mut out = vec![0.0; rows * cols];
        adj.apply_block(&self.nodes[x.0].values, cols, &mut out, false);
        let rg = self.req(x.0);
        Ok(self.push(rows, cols, out, rg, Op::SparseMatmul { adj: Arc::clone(adj), input: x.0 }))
    }

    fn binary_same_shape(&mut self, a: Var, b: Var, name: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dimension(name, format!("{}x{}", sa.0, sa.1), format!("{}x{}", sb.0, sb.1)));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "add")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.req(a.0) || self.req(b.0);
        Ok(self.push(r, c, out, rg, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "sub")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.req(a.0) || self.req(b.0);
        Ok(self.push(r, c, out, rg, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.req(a.0) || self.req(b.0);
        Ok(self.push(r, c, out, rg, Op::Mul(a.0, b.0)))
    }

    fn row_broadcast(&mut self, a: Var, row: Var, name: &str) -> Result<(usize, usize)> {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != c {
            return Err(Error::dimension(name, format!("{r}x{c}"), format!("{rr}x{rc}")));
        }
        Ok((r, c))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast(a, row, "add_row")?;
        let rv = self.nodes[row.0].values.clone();
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .enumerate()
            .map(|(idx, x)| x + rv[idx % c])
            .collect();
        let rg = self.req(a.0) || self.req(row.0);
        Ok(self.push(r, c, out, rg, Op::AddRow(a.0, row.0)))
    }

    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast(a, row, "sub_row")?;
        let rv = self.nodes[row.0].values.clone();
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .enumerate()
            .map(|(idx, x)| x - rv[idx % c])
            .collect();
        let rg = self.req(a.0) || self.req(row.0);
        Ok(self.push(r, c, out, rg, Op::SubRow(a.0, row.0)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast(a, row, "mul_row")?;
        let rv = self.nodes[row.0].values.clone();
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .enumerate()
            .map(|(idx, x)| x * rv[idx % c])
            .collect();
        let rg = self.req(a.0) || self.req(row.0);
        Ok(self.push(r, c, out, rg, Op::MulRow(a.0, row.0)))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x + s).collect();
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::AddScalar(a.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x * s).collect();
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::Scale(a.0, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.max(0.0)).collect();
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::Relu(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.tanh()).collect();
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::Tanh(a.0))
    }

    /// (x + eps)^(-1/2) elementwise; used for batch-norm inverse std.
    pub fn rsqrt(&mut self, a: Var, eps: f64) -> Var {
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| 1.0 / (x + eps).sqrt()).collect();
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::Rsqrt(a.0))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.nodes[a.0].values[i * c + j];
            }
        }
        for v in &mut out {
            *v /= r as f64;
        }
        let rg = self.req(a.0);
        self.push(1, c, out, rg, Op::MeanRows(a.0))
    }

    pub fn mean_grouped_rows(&mut self, a: Var, group: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if group == 0 || r % group != 0 {
            return Err(Error::dimension("mean_grouped_rows", format!("{r} rows"), format!("group {group}")));
        }
        let out_rows = r / group;
        let mut out = vec![0.0; out_rows * c];
        for i in 0..r {
            for j in 0..c {
                out[(i / group) * c + j] += self.nodes[a.0].values[i * c + j];
            }
        }
        for v in &mut out {
            *v /= group as f64;
        }
        let rg = self.req(a.0);
        Ok(self.push(out_rows, c, out, rg, Op::MeanGroupedRows { input: a.0, group }))
    }

    pub fn row_unitize(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.nodes[a.0].values[i * c..(i + 1) * c];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for j in 0..c {
                    out[i * c + j] = row[j] / norm;
                }
            }
        }
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::RowUnitize(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.nodes[a.0].values[i * c..(i + 1) * c];
            softmax_into(row, &mut out[i * c..(i + 1) * c]);
        }
        let rg = self.req(a.0);
        self.push(r, c, out, rg, Op::SoftmaxRows(a.0))
    }

    /// Softmax over the frequency-bin axis for each (sample, joint) pair.
    pub fn softmax_bins(&mut self, a: Var, bins: usize, joints: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c != 1 || bins * joints == 0 || r % (bins * joints) != 0 {
            return Err(Error::dimension(
                "softmax_bins",
                format!("{r}x{c}"),
                format!("bins {bins} x joints {joints}"),
            ));
        }
        let batch = r / (bins * joints);
        let v = &self.nodes[a.0].values;
        let mut out = vec![0.0; r];
        let mut col = vec![0.0; bins];
        let mut sm = vec![0.0; bins];
        for s in 0..batch {
            let base = s * bins * joints;
            for i in 0..joints {
                for b in 0..bins {
                    col[b] = v[base + b * joints + i];
                }
                softmax_into(&col, &mut sm);
                for b in 0..bins {
                    out[base + b * joints + i] = sm[b];
                }
            }
        }
        let rg = self.req(a.0);
        Ok(self.push(r, 1, out, rg, Op::SoftmaxBins { input: a.0, bins, joints }))
    }

    /// Frequency-attention pooling: v[s,i,:] = sum_b alpha[s,b,i] h[s,b,i,:].
    pub fn attn_pool(&mut self, alpha: Var, h: Var, bins: usize, joints: usize) -> Result<Var> {
        let (ar, ac) = self.shape(alpha);
        let (hr, hc) = self.shape(h);
        if ac != 1 || ar != hr || bins * joints == 0 || hr % (bins * joints) != 0 {
            return Err(Error::dimension("attn_pool", format!("{ar}x{ac}"), format!("{hr}x{hc}")));
        }
        let batch = hr / (bins * joints);
        let av = &self.nodes[alpha.0].values;
        let hv = &self.nodes[h.0].values;
        let mut out = vec![0.0; batch * joints * hc];
        for s in 0..batch {
            for b in 0..bins {
                for i in 0..joints {
                    let r = s * bins * joints + b * joints + i;
                    let a = av[r];
                    let o = (s * joints + i) * hc;
                    for f in 0..hc {
                        out[o + f] += a * hv[r * hc + f];
                    }
                }
            }
        }
        let rg = self.req(alpha.0) || self.req(h.0);
        Ok(self.push(batch * joints, hc, out, rg, Op::AttnPool { alpha: alpha.0, h: h.0, bins, joints }))
    }

    /// Frequency-axis downsampling: keep bins where b % stride == 0.
    pub fn stride_bins(&mut self, a: Var, stride: usize, bins: usize, joints: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if stride == 0 || bins * joints == 0 || r % (bins * joints) != 0 {
            return Err(Error::dimension(
                "stride_bins",
                format!("{r}x{c}"),
                format!("stride {stride}, bins {bins} x joints {joints}"),
            ));
        }
        if stride == 1 {
            return Ok(a);
        }
        let batch = r / (bins * joints);
        let out_bins = bins.div_ceil(stride);
        let v = &self.nodes[a.0].values;
        let mut out = vec![0.0; batch * out_bins * joints * c];
        for s in 0..batch {
            for (ob, b) in (0..bins).step_by(stride).enumerate() {
                let src = (s * bins * joints + b * joints) * c;
                let dst = (s * out_bins * joints + ob * joints) * c;
                out[dst..dst + joints * c].copy_from_slice(&v[src..src + joints * c]);
            }
        }
        let rg = self.req(a.0);
        Ok(self.push(batch * out_bins * joints, c, out, rg, Op::StrideBins { input: a.0, stride, bins, joints }))
    }

    /// Inverted dropout: retained entries scaled by 1/(1-rate) in training
    /// mode; identity in evaluation mode or at rate 0.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut RngStream) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Param(format!("dropout rate {rate} outside [0,1)")));
        }
        if !self.training || rate == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let rg = self.req(a.0);
        Ok(self.push(r, c, out, rg, Op::Dropout { input: a.0, mask }))
    }

    /// Mean softmax cross-entropy of (batch, classes) logits against labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if labels.len() != r {
            return Err(Error::dimension("cross_entropy", format!("{r} rows"), format!("{} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Param(format!("label {bad} outside {c} classes")));
        }
        let v = &self.nodes[logits.0].values;
        let mut loss = 0.0;
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        loss /= r as f64;
        let rg = self.req(logits.0);
        Ok(self.push(1, 1, vec![loss], rg, Op::CrossEntropy { logits: logits.0, labels: labels.to_vec() }))
    }

    /// Reverse-mode sweep from a scalar loss; fills `grad` on every node
    /// reachable from a `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (r, c) = self.shape(loss);
        if r != 1 || c != 1 {
            return Err(Error::Contract(format!("backward on non-scalar {r}x{c} tensor")));
        }
        for node in &mut self.nodes {
            node.grad = vec![0.0; node.values.len()];
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad || self.nodes[id].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.backprop_node(id);
        }
        Ok(())
    }

    fn backprop_node(&mut self, id: usize) {
        // Take the node's grad out so we can mutate input grads freely.
        let grad = std::mem::take(&mut self.nodes[id].grad);
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.nodes[a].rows, self.nodes[a].cols);
                let n = self.nodes[b].cols;
                if self.nodes[a].requires_grad {
                    let bv = self.nodes[b].values.clone();
                    // dA += dC B^T
                    let mut da = vec![0.0; m * k];
                    matmul_into(&grad, &bv, m, n, k, &mut da, false, true);
                    axpy(&mut self.nodes[a].grad, &da);
                }
                if self.nodes[b].requires_grad {
                    let av = self.nodes[a].values.clone();
                    // dB += A^T dC
                    let mut db = vec![0.0; k * n];
                    matmul_into(&av, &grad, k, m, n, &mut db, true, false);
                    axpy(&mut self.nodes[b].grad, &db);
                }
            }
            Op::MatmulTransB(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.nodes[a].rows, self.nodes[a].cols);
                let n = self.nodes[b].rows;
                if self.nodes[a].requires_grad {
                    let bv = self.nodes[b].values.clone();
                    // dA += dC B
                    let mut da = vec![0.0; m * k];
                    matmul_into(&grad, &bv, m, n, k, &mut da, false, false);
                    axpy(&mut self.nodes[a].grad, &da);
                }
                if self.nodes[b].requires_grad {
                    let av = self.nodes[a].values.clone();
                    // dB += dC^T A
                    let mut db = vec![0.0; n * k];
                    matmul_into(&grad, &av, n, m, k, &mut db, true, false);
                    axpy(&mut self.nodes[b].grad, &db);
                }
            }
            Op::SparseMatmul { adj, input } => {
                let input = *input;
                let adj = Arc::clone(adj);
                if self.nodes[input].requires_grad {
                    let cols = self.nodes[input].cols;
                    let mut dx = vec![0.0; self.nodes[input].values.len()];
                    adj.apply_block(&grad, cols, &mut dx, true);
                    axpy(&mut self.nodes[input].grad, &dx);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].requires_grad {
                    axpy(&mut self.nodes[a].grad, &grad);
                }
                if self.nodes[b].requires_grad {
                    axpy(&mut self.nodes[b].grad, &grad);
                }
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].requires_grad {
                    axpy(&mut self.nodes[a].grad, &grad);
                }
                if self.nodes[b].requires_grad {
                    for (g, d) in self.nodes[b].grad.iter_mut().zip(&grad) {
                        *g -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].requires_grad {
                    let bv = self.nodes[b].values.clone();
                    for ((g, d), x) in self.nodes[a].grad.iter_mut().zip(&grad).zip(&bv) {
                        *g += d * x;
                    }
                }
                if self.nodes[b].requires_grad {
                    let av = self.nodes[a].values.clone();
                    for ((g, d), x) in self.nodes[b].grad.iter_mut().zip(&grad).zip(&av) {
                        *g += d * x;
                    }
                }
            }
            Op::AddRow(a, row) | Op::SubRow(a, row) => {
                let sign = if matches!(self.nodes[id].op, Op::SubRow(..)) { -1.0 } else { 1.0 };
                let (a, row) = (*a, *row);
                let c = self.nodes[a].cols;
                if self.nodes[a].requires_grad {
                    axpy(&mut self.nodes[a].grad, &grad);
                }
                if self.nodes[row].requires_grad {
                    for (idx, d) in grad.iter().enumerate() {
                        self.nodes[row].grad[idx % c] += sign * d;
                    }
                }
            }
            Op::MulRow(a, row) => {
                let (a, row) = (*a, *row);
                let c = self.nodes[a].cols;
                if self.nodes[a].requires_grad {
                    let rv = self.nodes[row].values.clone();
                    for (idx, d) in grad.iter().enumerate() {
                        self.nodes[a].grad[idx] += d * rv[idx % c];
                    }
                }
                if self.nodes[row].requires_grad {
                    let av = self.nodes[a].values.clone();
                    for (idx, d) in grad.iter().enumerate() {
                        self.nodes[row].grad[idx % c] += d * av[idx];
                    }
                }
            }
            Op::AddScalar(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    axpy(&mut self.nodes[a].grad, &grad);
                }
            }
            Op::Scale(a, s) => {
                let (a, s) = (*a, *s);
                if self.nodes[a].requires_grad {
                    for (g, d) in self.nodes[a].grad.iter_mut().zip(&grad) {
                        *g += s * d;
                    }
                }
            }
            Op::Relu(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let y = self.nodes[id].values.clone();
                    for ((g, d), out) in self.nodes[a].grad.iter_mut().zip(&grad).zip(&y) {
                        if *out > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let y = self.nodes[id].values.clone();
                    for ((g, d), out) in self.nodes[a].grad.iter_mut().zip(&grad).zip(&y) {
                        *g += d * (1.0 - out * out);
                    }
                }
            }
            Op::Rsqrt(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let y = self.nodes[id].values.clone();
                    for ((g, d), out) in self.nodes[a].grad.iter_mut().zip(&grad).zip(&y) {
                        *g += d * (-0.5 * out * out * out);
                    }
                }
            }
            Op::MeanRows(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let (r, c) = (self.nodes[a].rows, self.nodes[a].cols);
                    let inv = 1.0 / r as f64;
                    for i in 0..r {
                        for j in 0..c {
                            self.nodes[a].grad[i * c + j] += grad[j] * inv;
                        }
                    }
                }
            }
            Op::MeanGroupedRows { input, group } => {
                let (input, group) = (*input, *group);
                if self.nodes[input].requires_grad {
                    let (r, c) = (self.nodes[input].rows, self.nodes[input].cols);
                    let inv = 1.0 / group as f64;
                    for i in 0..r {
                        for j in 0..c {
                            self.nodes[input].grad[i * c + j] += grad[(i / group) * c + j] * inv;
                        }
                    }
                }
            }
            Op::RowUnitize(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let (r, c) = (self.nodes[a].rows, self.nodes[a].cols);
                    let x = self.nodes[a].values.clone();
                    let y = self.nodes[id].values.clone();
                    for i in 0..r {
                        let norm = x[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let dot: f64 = (0..c).map(|j| grad[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            self.nodes[a].grad[i * c + j] +=
                                (grad[i * c + j] - dot * y[i * c + j]) / norm;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                if self.nodes[a].requires_grad {
                    let (r, c) = (self.nodes[a].rows, self.nodes[a].cols);
                    let y = self.nodes[id].values.clone();
                    for i in 0..r {
                        let dot: f64 = (0..c).map(|j| grad[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            self.nodes[a].grad[i * c + j] += y[i * c + j] * (grad[i * c + j] - dot);
                        }
                    }
                }
            }
            Op::SoftmaxBins { input, bins, joints } => {
                let (input, bins, joints) = (*input, *bins, *joints);
                if self.nodes[input].requires_grad {
                    let y = self.nodes[id].values.clone();
                    let batch = y.len() / (bins * joints);
                    for s in 0..batch {
                        let base = s * bins * joints;
                        for i in 0..joints {
                            let dot: f64 = (0..bins)
                                .map(|b| grad[base + b * joints + i] * y[base + b * joints + i])
                                .sum();
                            for b in 0..bins {
                                let r = base + b * joints + i;
                                self.nodes[input].grad[r] += y[r] * (grad[r] - dot);
                            }
                        }
                    }
                }
            }
            Op::AttnPool { alpha, h, bins, joints } => {
                let (alpha, h, bins, joints) = (*alpha, *h, *bins, *joints);
                let hc = self.nodes[h].cols;
                let batch = self.nodes[h].rows / (bins * joints);
                let av = self.nodes[alpha].values.clone();
                let hv = self.nodes[h].values.clone();
                let da = self.nodes[alpha].requires_grad;
                let dh = self.nodes[h].requires_grad;
                for s in 0..batch {
                    for b in 0..bins {
                        for i in 0..joints {
                            let r = s * bins * joints + b * joints + i;
                            let o = (s * joints + i) * hc;
                            if da {
                                let mut acc = 0.0;
                                for f in 0..hc {
                                    acc += grad[o + f] * hv[r * hc + f];
                                }
                                self.nodes[alpha].grad[r] += acc;
                            }
                            if dh {
                                for f in 0..hc {
                                    self.nodes[h].grad[r * hc + f] += av[r] * grad[o + f];
                                }
                            }
                        }
                    }
                }
            }
            Op::StrideBins { input, stride, bins, joints } => {
                let (input, stride, bins, joints) = (*input, *stride, *bins, *joints);
                if self.nodes[input].requires_grad {
                    let c = self.nodes[input].cols;
                    let batch = self.nodes[input].rows / (bins * joints);
                    let out_bins = bins.div_ceil(stride);
                    for s in 0..batch {
                        for (ob, b) in (0..bins).step_by(stride).enumerate() {
                            let src = (s * bins * joints + b * joints) * c;
                            let dst = (s * out_bins * joints + ob * joints) * c;
                            for k in 0..joints * c {
                                self.nodes[input].grad[src + k] += grad[dst + k];
                            }
                        }
                    }
                }
            }
            Op::Dropout { input, mask } => {
                let input = *input;
                if self.nodes[input].requires_grad {
                    let mask = mask.clone();
                    for ((g, d), m) in self.nodes[input].grad.iter_mut().zip(&grad).zip(&mask) {
                        *g += d * m;
                    }
                }
            }
            Op::CrossEntropy { logits, labels } => {
                let logits = *logits;
                let labels = labels.clone();
                if self.nodes[logits].requires_grad {
                    let (r, c) = (self.nodes[logits].rows, self.nodes[logits].cols);
                    let v = self.nodes[logits].values.clone();
                    let d = grad[0] / r as f64;
                    let mut sm = vec![0.0; c];
                    for i in 0..r {
                        softmax_into(&v[i * c..(i + 1) * c], &mut sm);
                        for j in 0..c {
                            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                            self.nodes[logits].grad[i * c + j] += d * (sm[j] - onehot);
                        }
                    }
                }
            }
        }
        self.nodes[id].grad = grad;
    }
}

fn axpy(acc: &mut [f64], add: &[f64]) {
    for (a, b) in acc.iter_mut().zip(add) {
        *a += b;
    }
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// out += op(A) op(B) with optional transposes; A is (m,k) and B is (k,n)
/// AFTER applying the transposes (i.e. m,k,n describe the logical product).
fn matmul_into(
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f64],
    trans_a: bool,
    trans_b: bool,
) {
    for i in 0..m {
        for t in 0..k {
            let av = if trans_a { a[t * m + i] } else { a[i * k + t] };
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                let bv = if trans_b { b[j * k + t] } else { b[t * n + j] };
                out[i * n + j] += av * bv;
            }
        }
    }
}

/// Adam moment accumulators for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::Param(format!("learning rate {lr} must be positive")));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::dimension(
            "adam_step",
            format!("{} params", params.len()),
            format!("{} grads", grads.len()),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Step-decay schedule: base_lr * 0.1^floor(epoch/100).
pub fn lr_at(epoch: usize, base_lr: f64) -> f64 {
    base_lr * 0.1f64.powi((epoch / 100) as i32)
}
