//! Reverse-mode differentiation over dense 64-bit tensors.
//!
//! A [`Tape`] records every operation as it executes; [`Tape::backward`]
//! replays the records in reverse insertion order exactly once, accumulating
//! gradients into every tracked value reachable from the loss. The operator
//! set is exactly what the training pipelines need: dense matmul, sparse
//! weighted aggregation over an [`ArcSet`], per-segment softmax, the
//! activations, column concatenation, inverted dropout, masked cross-entropy,
//! and a few small glue ops (elementwise add/mul, weighted sums, reductions).
//!
//! Kernels that dominate runtime (matmul, sparse aggregation) are
//! row-parallel; each output row is summed sequentially, so results are
//! bit-identical regardless of thread count.

mod adam;

pub use adam::{AdamState, ParamSet};

use std::sync::Arc;

use rand::Rng;

use crate::error::{GrafError, Result};
use crate::parallel::par_chunks_mut;
use crate::rng::rng_from;
use crate::sparse::ArcSet;

/// Dense 64-bit tensor with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub tracked: bool,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
            tracked: false,
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(GrafError::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
            tracked: false,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
            grad: None,
            tracked: false,
        }
    }

    /// Uniform Glorot init scaled by fan-in/fan-out, tracked for training.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Tensor {
            shape: vec![rows, cols],
            values,
            grad: None,
            tracked: true,
        }
    }

    pub fn tracked(mut self) -> Self {
        self.tracked = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Gradient buffer, zeros when no backward pass has touched this tensor.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad.clone().unwrap_or_else(|| vec![0.0; self.numel()])
    }
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: ValueId,
        b: ValueId,
        m: usize,
        k: usize,
        n: usize,
    },
    SparseAggregate {
        weights: ValueId,
        x: ValueId,
        arcs: Arc<ArcSet>,
        d: usize,
    },
    SegmentSoftmax {
        scores: ValueId,
        segments: Arc<Vec<u32>>,
        n_segments: usize,
    },
    LeakyRelu {
        x: ValueId,
        slope: f64,
    },
    Relu {
        x: ValueId,
    },
    Tanh {
        x: ValueId,
    },
    Elu {
        x: ValueId,
    },
    EdgePairLeaky {
        pair: ValueId,
        arcs: Arc<ArcSet>,
        slope: f64,
    },
    ConcatCols {
        parts: Vec<ValueId>,
        rows: usize,
        widths: Vec<usize>,
    },
    Dropout {
        x: ValueId,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: ValueId,
        labels: Arc<Vec<u32>>,
        mask: Arc<Vec<u32>>,
        probs: Vec<f64>,
        classes: usize,
    },
    WeightedSum {
        parts: Vec<ValueId>,
        coeffs: ValueId,
    },
    StackScalars {
        parts: Vec<ValueId>,
    },
    MeanAll {
        x: ValueId,
    },
    SumAll {
        x: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    MulElem {
        a: ValueId,
        b: ValueId,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    tracked: bool,
    op: Op,
}

/// Recorded computation. Nodes form a DAG in insertion order: every
/// operation's inputs precede its output.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

const PAR_WORK_MIN: usize = 1 << 15;

fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let body = |row0: usize, slab: &mut [f64]| {
        for (r, out_row) in slab.chunks_mut(n).enumerate() {
            let i = row0 / n + r;
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &av) in a_row.iter().enumerate() {
                if av != 0.0 {
                    let b_row = &b[p * n..(p + 1) * n];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += av * bv;
                    }
                }
            }
        }
    };
    if m * k * n >= PAR_WORK_MIN && n > 0 {
        par_chunks_mut(&mut out, n, body);
    } else if n > 0 {
        body(0, &mut out);
    }
    out
}

/// a (m×n) · bᵀ where b is (k×n); result m×k.
fn mm_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    let body = |row0: usize, slab: &mut [f64]| {
        for (r, out_row) in slab.chunks_mut(k).enumerate() {
            let i = row0 / k + r;
            let a_row = &a[i * n..(i + 1) * n];
            for (p, o) in out_row.iter_mut().enumerate() {
                let b_row = &b[p * n..(p + 1) * n];
                let mut s = 0.0;
                for (&av, &bv) in a_row.iter().zip(b_row) {
                    s += av * bv;
                }
                *o = s;
            }
        }
    };
    if m * n * k >= PAR_WORK_MIN && k > 0 {
        par_chunks_mut(&mut out, k, body);
    } else if k > 0 {
        body(0, &mut out);
    }
    out
}

/// aᵀ · b where a is (m×k), b is (m×n); result k×n.
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    let body = |row0: usize, slab: &mut [f64]| {
        for (r, out_row) in slab.chunks_mut(n).enumerate() {
            let p = row0 / n + r;
            for i in 0..m {
                let av = a[i * k + p];
                if av != 0.0 {
                    let b_row = &b[i * n..(i + 1) * n];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += av * bv;
                    }
                }
            }
        }
    };
    if m * k * n >= PAR_WORK_MIN && n > 0 {
        par_chunks_mut(&mut out, n, body);
    } else if n > 0 {
        body(0, &mut out);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, tracked: bool, op: Op) -> ValueId {
        self.nodes.push(Node {
            shape,
            values,
            tracked,
            op,
        });
        self.grads.push(None);
        ValueId(self.nodes.len() - 1)
    }

    /// Register an owned tensor as a leaf.
    pub fn input(&mut self, t: &Tensor) -> ValueId {
        self.push(t.shape.clone(), t.values.clone(), t.tracked, Op::Leaf)
    }

    /// Untracked leaf from raw parts.
    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> ValueId {
        self.push(shape.to_vec(), values, false, Op::Leaf)
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn is_tracked(&self, id: ValueId) -> bool {
        self.nodes[id.0].tracked
    }

    pub fn grad(&self, id: ValueId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient of a node, zeros when backward never reached it.
    pub fn grad_or_zeros(&self, id: ValueId) -> Vec<f64> {
        self.grads[id.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; self.nodes[id.0].values.len()])
    }

    /// Copy a leaf's gradient back into its owning tensor.
    pub fn write_grad(&self, id: ValueId, t: &mut Tensor) {
        t.grad = Some(self.grad_or_zeros(id));
    }

    fn dims2(&self, id: ValueId) -> (usize, usize) {
        let s = &self.nodes[id.0].shape;
        match s.len() {
            1 => (s[0], 1),
            2 => (s[0], s[1]),
            _ => (s.iter().product(), 1),
        }
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, ka) = self.dims2(a);
        let (kb, n) = self.dims2(b);
        if ka != kb {
            return Err(GrafError::Shape(format!(
                "matmul inner dimensions disagree: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let values = mm_nn(&self.nodes[a.0].values, &self.nodes[b.0].values, m, ka, n);
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(
            vec![m, n],
            values,
            tracked,
            Op::MatMul { a, b, m, k: ka, n },
        ))
    }

    /// out[row, :] += w_e * x[col, :] for every arc e = (row, col).
    pub fn sparse_aggregate(
        &mut self,
        arcs: &Arc<ArcSet>,
        weights: ValueId,
        x: ValueId,
    ) -> Result<ValueId> {
        if self.nodes[weights.0].values.len() != arcs.len() {
            return Err(GrafError::Shape(format!(
                "{} weights for {} arcs",
                self.nodes[weights.0].values.len(),
                arcs.len()
            )));
        }
        let (rows, d) = self.dims2(x);
        if rows != arcs.n() {
            return Err(GrafError::Index(format!(
                "aggregation over {} nodes applied to {} feature rows",
                arcs.n(),
                rows
            )));
        }
        for &v in &self.nodes[weights.0].values {
            if !v.is_finite() {
                return Err(GrafError::Parameter("non-finite aggregation weight".into()));
            }
        }
        let w = &self.nodes[weights.0].values;
        let xv = &self.nodes[x.0].values;
        let n = arcs.n();
        let mut out = vec![0.0; n * d];
        let arcs_ref: &ArcSet = arcs;
        let body = |row0: usize, slab: &mut [f64]| {
            for (r, out_row) in slab.chunks_mut(d).enumerate() {
                let i = row0 / d + r;
                for e in arcs_ref.row_range(i) {
                    let we = w[e];
                    let col = arcs_ref.cols()[e] as usize;
                    let x_row = &xv[col * d..(col + 1) * d];
                    for (o, &v) in out_row.iter_mut().zip(x_row) {
                        *o += we * v;
                    }
                }
            }
        };
        if arcs.len() * d >= PAR_WORK_MIN && d > 0 {
            par_chunks_mut(&mut out, d, body);
        } else if d > 0 {
            body(0, &mut out);
        }
        let tracked = self.is_tracked(weights) || self.is_tracked(x);
        Ok(self.push(
            vec![n, d],
            out,
            tracked,
            Op::SparseAggregate {
                weights,
                x,
                arcs: Arc::clone(arcs),
                d,
            },
        ))
    }

    /// Softmax within each segment; segment ids need not be contiguous.
    pub fn segment_softmax(
        &mut self,
        scores: ValueId,
        segments: &Arc<Vec<u32>>,
        n_segments: usize,
    ) -> Result<ValueId> {
        let s = &self.nodes[scores.0].values;
        if s.len() != segments.len() {
            return Err(GrafError::Shape(format!(
                "{} scores for {} segment ids",
                s.len(),
                segments.len()
            )));
        }
        for &v in s.iter() {
            if !v.is_finite() {
                return Err(GrafError::Parameter("non-finite softmax score".into()));
            }
        }
        let mut seg_max = vec![f64::NEG_INFINITY; n_segments];
        for (v, &g) in s.iter().zip(segments.iter()) {
            let g = g as usize;
            if *v > seg_max[g] {
                seg_max[g] = *v;
            }
        }
        let mut out: Vec<f64> = s
            .iter()
            .zip(segments.iter())
            .map(|(&v, &g)| (v - seg_max[g as usize]).exp())
            .collect();
        let mut seg_sum = vec![0.0; n_segments];
        for (v, &g) in out.iter().zip(segments.iter()) {
            seg_sum[g as usize] += *v;
        }
        for (v, &g) in out.iter_mut().zip(segments.iter()) {
            *v /= seg_sum[g as usize];
        }
        let tracked = self.is_tracked(scores);
        let shape = self.nodes[scores.0].shape.clone();
        Ok(self.push(
            shape,
            out,
            tracked,
            Op::SegmentSoftmax {
                scores,
                segments: Arc::clone(segments),
                n_segments,
            },
        ))
    }

    pub fn leaky_relu(&mut self, x: ValueId, slope: f64) -> ValueId {
        let values = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let tracked = self.is_tracked(x);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, values, tracked, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let values = self.nodes[x.0].values.iter().map(|&v| v.max(0.0)).collect();
        let tracked = self.is_tracked(x);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, values, tracked, Op::Relu { x })
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let values = self.nodes[x.0].values.iter().map(|&v| v.tanh()).collect();
        let tracked = self.is_tracked(x);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, values, tracked, Op::Tanh { x })
    }

    pub fn elu(&mut self, x: ValueId) -> ValueId {
        let values = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
            .collect();
        let tracked = self.is_tracked(x);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, values, tracked, Op::Elu { x })
    }

    /// Per-arc attention logit: LeakyReLU(pair[row, 0] + pair[col, 1]).
    ///
    /// `pair` is n×2: column 0 holds each node's score as the attending node,
    /// column 1 its score as the neighbor.
    pub fn edge_pair_leaky(
        &mut self,
        pair: ValueId,
        arcs: &Arc<ArcSet>,
        slope: f64,
    ) -> Result<ValueId> {
        let (n, two) = self.dims2(pair);
        if two != 2 || n != arcs.n() {
            return Err(GrafError::Shape(format!(
                "pair scores must be {}x2, got {:?}",
                arcs.n(),
                self.shape(pair)
            )));
        }
        let p = &self.nodes[pair.0].values;
        let values: Vec<f64> = arcs
            .iter()
            .map(|(r, c)| {
                let v = p[r as usize * 2] + p[c as usize * 2 + 1];
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            })
            .collect();
        let tracked = self.is_tracked(pair);
        Ok(self.push(
            vec![arcs.len()],
            values,
            tracked,
            Op::EdgePairLeaky {
                pair,
                arcs: Arc::clone(arcs),
                slope,
            },
        ))
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(GrafError::Shape("concat of zero parts".into()));
        }
        let (rows, _) = self.dims2(parts[0]);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, w) = self.dims2(p);
            if r != rows {
                return Err(GrafError::Shape(format!(
                    "concat parts disagree on leading dimension: {} vs {}",
                    rows, r
                )));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let mut values = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = &self.nodes[p.0].values;
            for r in 0..rows {
                values[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&pv[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let tracked = parts.iter().any(|&p| self.is_tracked(p));
        Ok(self.push(
            vec![rows, total],
            values,
            tracked,
            Op::ConcatCols {
                parts: parts.to_vec(),
                rows,
                widths,
            },
        ))
    }

    /// Inverted dropout: zero with probability `rate`, scale survivors by
    /// 1/(1-rate). Identity when not training. The mask is a pure function of
    /// the seed.
    pub fn dropout(&mut self, x: ValueId, rate: f64, training: bool, seed: u64) -> Result<ValueId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(GrafError::Parameter(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mut rng = rng_from(seed);
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x.0].values.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let values = self.nodes[x.0]
            .values
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let tracked = self.is_tracked(x);
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, values, tracked, Op::Dropout { x, mask }))
    }

    /// Mean over masked rows of -log softmax(logits)[row, label[row]].
    pub fn cross_entropy(
        &mut self,
        logits: ValueId,
        labels: &Arc<Vec<u32>>,
        mask: &Arc<Vec<u32>>,
    ) -> Result<ValueId> {
        let (rows, classes) = self.dims2(logits);
        if mask.is_empty() {
            return Err(GrafError::Evaluation(
                "cross-entropy over an empty node set".into(),
            ));
        }
        if labels.len() != rows {
            return Err(GrafError::Shape(format!(
                "{} labels for {} logit rows",
                labels.len(),
                rows
            )));
        }
        let z = &self.nodes[logits.0].values;
        let mut probs = vec![0.0; mask.len() * classes];
        let mut loss = 0.0;
        for (mi, &row) in mask.iter().enumerate() {
            let row = row as usize;
            if row >= rows {
                return Err(GrafError::Index(format!("masked row {row} out of {rows}")));
            }
            let label = labels[row] as usize;
            if label >= classes {
                return Err(GrafError::Index(format!(
                    "label {label} out of {classes} classes"
                )));
            }
            let zr = &z[row * classes..(row + 1) * classes];
            let max = zr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in zr {
                sum += (v - max).exp();
            }
            let log_sum = max + sum.ln();
            loss -= zr[label] - log_sum;
            for (j, &v) in zr.iter().enumerate() {
                probs[mi * classes + j] = (v - max).exp() / sum;
            }
        }
        loss /= mask.len() as f64;
        let tracked = self.is_tracked(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            tracked,
            Op::CrossEntropy {
                logits,
                labels: Arc::clone(labels),
                mask: Arc::clone(mask),
                probs,
                classes,
            },
        ))
    }

    /// out = sum_p coeffs[p] * parts[p]; all parts share one shape and coeffs
    /// has one entry per part.
    pub fn weighted_sum(&mut self, parts: &[ValueId], coeffs: ValueId) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(GrafError::Shape("weighted sum of zero parts".into()));
        }
        if self.nodes[coeffs.0].values.len() != parts.len() {
            return Err(GrafError::Shape(format!(
                "{} coefficients for {} parts",
                self.nodes[coeffs.0].values.len(),
                parts.len()
            )));
        }
        let shape = self.nodes[parts[0].0].shape.clone();
        for &p in parts {
            if self.nodes[p.0].shape != shape {
                return Err(GrafError::Shape(
                    "weighted sum parts disagree on shape".into(),
                ));
            }
        }
        let mut values = vec![0.0; self.nodes[parts[0].0].values.len()];
        for (pi, &p) in parts.iter().enumerate() {
            let c = self.nodes[coeffs.0].values[pi];
            for (o, &v) in values.iter_mut().zip(&self.nodes[p.0].values) {
                *o += c * v;
            }
        }
        let tracked = self.is_tracked(coeffs) || parts.iter().any(|&p| self.is_tracked(p));
        Ok(self.push(
            shape,
            values,
            tracked,
            Op::WeightedSum {
                parts: parts.to_vec(),
                coeffs,
            },
        ))
    }

    /// Pack scalar nodes into one vector.
    pub fn stack_scalars(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let mut values = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.nodes[p.0].values.len() != 1 {
                return Err(GrafError::Shape(
                    "stack_scalars expects scalar inputs".into(),
                ));
            }
            values.push(self.nodes[p.0].values[0]);
        }
        let tracked = parts.iter().any(|&p| self.is_tracked(p));
        Ok(self.push(
            vec![parts.len()],
            values,
            tracked,
            Op::StackScalars {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn mean_all(&mut self, x: ValueId) -> ValueId {
        let v = &self.nodes[x.0].values;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let tracked = self.is_tracked(x);
        self.push(vec![1], vec![mean], tracked, Op::MeanAll { x })
    }

    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let s = self.nodes[x.0].values.iter().sum::<f64>();
        let tracked = self.is_tracked(x);
        self.push(vec![1], vec![s], tracked, Op::SumAll { x })
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(GrafError::Shape("add operands disagree on shape".into()));
        }
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x + y)
            .collect();
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, values, tracked, Op::Add { a, b }))
    }

    pub fn mul_elem(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(GrafError::Shape("mul operands disagree on shape".into()));
        }
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x * y)
            .collect();
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, values, tracked, Op::MulElem { a, b }))
    }

    /// Accumulate gradients of every tracked value reachable from `loss`.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(GrafError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;

        for idx in (0..=loss.0).rev() {
            if !nodes[idx].tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            Self::propagate(nodes, grads, idx, &g);
            grads[idx] = Some(g);
        }
        Ok(())
    }

    fn ensure(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: ValueId) -> bool {
        if !nodes[id.0].tracked {
            return false;
        }
        if grads[id.0].is_none() {
            grads[id.0] = Some(vec![0.0; nodes[id.0].values.len()]);
        }
        true
    }

    fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if Self::ensure(grads, nodes, *a) {
                    let da = mm_nt(g, &nodes[b.0].values, m, n, k);
                    let buf = grads[a.0].as_mut().unwrap();
                    for (o, v) in buf.iter_mut().zip(da) {
                        *o += v;
                    }
                }
                if Self::ensure(grads, nodes, *b) {
                    let db = mm_tn(&nodes[a.0].values, g, m, k, n);
                    let buf = grads[b.0].as_mut().unwrap();
                    for (o, v) in buf.iter_mut().zip(db) {
                        *o += v;
                    }
                }
            }
            Op::SparseAggregate {
                weights,
                x,
                arcs,
                d,
            } => {
                let d = *d;
                let xv = &nodes[x.0].values;
                let wv = &nodes[weights.0].values;
                if Self::ensure(grads, nodes, *weights) {
                    let buf = grads[weights.0].as_mut().unwrap();
                    let arcs_ref: &ArcSet = arcs;
                    let body = |e0: usize, slab: &mut [f64]| {
                        for (off, o) in slab.iter_mut().enumerate() {
                            let e = e0 + off;
                            let (r, c) = arcs_ref.arc(e);
                            let g_row = &g[r as usize * d..(r as usize + 1) * d];
                            let x_row = &xv[c as usize * d..(c as usize + 1) * d];
                            let mut s = 0.0;
                            for (&gv, &xv2) in g_row.iter().zip(x_row) {
                                s += gv * xv2;
                            }
                            *o += s;
                        }
                    };
                    if arcs.len() * d >= PAR_WORK_MIN {
                        par_chunks_mut(buf, 256, body);
                    } else {
                        body(0, buf);
                    }
                }
                if Self::ensure(grads, nodes, *x) {
                    let buf = grads[x.0].as_mut().unwrap();
                    let arcs_ref: &ArcSet = arcs;
                    let body = |row0: usize, slab: &mut [f64]| {
                        for (r, out_row) in slab.chunks_mut(d).enumerate() {
                            let col = row0 / d + r;
                            for &e in arcs_ref.col_arcs(col) {
                                let e = e as usize;
                                let we = wv[e];
                                let row = arcs_ref.rows()[e] as usize;
                                let g_row = &g[row * d..(row + 1) * d];
                                for (o, &gv) in out_row.iter_mut().zip(g_row) {
                                    *o += we * gv;
                                }
                            }
                        }
                    };
                    if arcs.len() * d >= PAR_WORK_MIN && d > 0 {
                        par_chunks_mut(buf, d, body);
                    } else if d > 0 {
                        body(0, buf);
                    }
                }
            }
            Op::SegmentSoftmax {
                scores,
                segments,
                n_segments,
            } => {
                if Self::ensure(grads, nodes, *scores) {
                    let out = &nodes[idx].values;
                    let mut seg_dot = vec![0.0; *n_segments];
                    for ((&gv, &ov), &s) in g.iter().zip(out).zip(segments.iter()) {
                        seg_dot[s as usize] += gv * ov;
                    }
                    let buf = grads[scores.0].as_mut().unwrap();
                    for (i, o) in buf.iter_mut().enumerate() {
                        let s = segments[i] as usize;
                        *o += out[i] * (g[i] - seg_dot[s]);
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                if Self::ensure(grads, nodes, *x) {
                    let xv = &nodes[x.0].values;
                    let buf = grads[x.0].as_mut().unwrap();
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(xv) {
                        *o += gv * if v >= 0.0 { 1.0 } else { *slope };
                    }
                }
            }
            Op::Relu { x } => {
                if Self::ensure(grads, nodes, *x) {
                    let xv = &nodes[x.0].values;
                    let buf = grads[x.0].as_mut().unwrap();
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(xv) {
                        if v > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Tanh { x } => {
                if Self::ensure(grads, nodes, *x) {
                    let out = &nodes[idx].values;
                    let buf = grads[x.0].as_mut().unwrap();
                    for ((o, &gv), &t) in buf.iter_mut().zip(g).zip(out) {
                        *o += gv * (1.0 - t * t);
                    }
                }
            }
            Op::Elu { x } => {
                if Self::ensure(grads, nodes, *x) {
                    let xv = &nodes[x.0].values;
                    let out = &nodes[idx].values;
                    let buf = grads[x.0].as_mut().unwrap();
                    for (((o, &gv), &v), &ov) in buf.iter_mut().zip(g).zip(xv).zip(out) {
                        *o += gv * if v > 0.0 { 1.0 } else { ov + 1.0 };
                    }
                }
            }
            Op::EdgePairLeaky { pair, arcs, slope } => {
                if Self::ensure(grads, nodes, *pair) {
                    let p = &nodes[pair.0].values;
                    let buf = grads[pair.0].as_mut().unwrap();
                    for (e, &gv) in g.iter().enumerate() {
                        let (r, c) = arcs.arc(e);
                        let pre = p[r as usize * 2] + p[c as usize * 2 + 1];
                        let f = if pre >= 0.0 { 1.0 } else { *slope };
                        buf[r as usize * 2] += gv * f;
                        buf[c as usize * 2 + 1] += gv * f;
                    }
                }
            }
            Op::ConcatCols {
                parts,
                rows,
                widths,
            } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&p, &w) in parts.iter().zip(widths) {
                    if Self::ensure(grads, nodes, p) {
                        let buf = grads[p.0].as_mut().unwrap();
                        for r in 0..*rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            for (o, &gv) in buf[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *o += gv;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Dropout { x, mask } => {
                if Self::ensure(grads, nodes, *x) {
                    let buf = grads[x.0].as_mut().unwrap();
                    for ((o, &gv), &m) in buf.iter_mut().zip(g).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                mask,
                probs,
                classes,
            } => {
                if Self::ensure(grads, nodes, *logits) {
                    let scale = g[0] / mask.len() as f64;
                    let buf = grads[logits.0].as_mut().unwrap();
                    for (mi, &row) in mask.iter().enumerate() {
                        let row = row as usize;
                        let label = labels[row] as usize;
                        for j in 0..*classes {
                            let p = probs[mi * classes + j];
                            let indicator = if j == label { 1.0 } else { 0.0 };
                            buf[row * classes + j] += scale * (p - indicator);
                        }
                    }
                }
            }
            Op::WeightedSum { parts, coeffs } => {
                for (pi, &p) in parts.iter().enumerate() {
                    let c = nodes[coeffs.0].values[pi];
                    if Self::ensure(grads, nodes, p) {
                        let buf = grads[p.0].as_mut().unwrap();
                        for (o, &gv) in buf.iter_mut().zip(g) {
                            *o += c * gv;
                        }
                    }
                }
                if Self::ensure(grads, nodes, *coeffs) {
                    let mut dc = vec![0.0; parts.len()];
                    for (pi, &p) in parts.iter().enumerate() {
                        let pv = &nodes[p.0].values;
                        let mut s = 0.0;
                        for (&gv, &v) in g.iter().zip(pv) {
                            s += gv * v;
                        }
                        dc[pi] = s;
                    }
                    let buf = grads[coeffs.0].as_mut().unwrap();
                    for (o, v) in buf.iter_mut().zip(dc) {
                        *o += v;
                    }
                }
            }
            Op::StackScalars { parts } => {
                for (pi, &p) in parts.iter().enumerate() {
                    if Self::ensure(grads, nodes, p) {
                        grads[p.0].as_mut().unwrap()[0] += g[pi];
                    }
                }
            }
            Op::MeanAll { x } => {
                if Self::ensure(grads, nodes, *x) {
                    let buf = grads[x.0].as_mut().unwrap();
                    let scale = g[0] / buf.len() as f64;
                    for o in buf.iter_mut() {
                        *o += scale;
                    }
                }
            }
            Op::SumAll { x } => {
                if Self::ensure(grads, nodes, *x) {
                    let buf = grads[x.0].as_mut().unwrap();
                    for o in buf.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Add { a, b } => {
                for &side in &[*a, *b] {
                    if Self::ensure(grads, nodes, side) {
                        let buf = grads[side.0].as_mut().unwrap();
                        for (o, &gv) in buf.iter_mut().zip(g) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::MulElem { a, b } => {
                if Self::ensure(grads, nodes, *a) {
                    let bv = &nodes[b.0].values;
                    let buf = grads[a.0].as_mut().unwrap();
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(bv) {
                        *o += gv * v;
                    }
                }
                if Self::ensure(grads, nodes, *b) {
                    let av = &nodes[a.0].values;
                    let buf = grads[b.0].as_mut().unwrap();
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(av) {
                        *o += gv * v;
                    }
                }
            }
        }
    }
}
