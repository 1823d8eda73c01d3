use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::matrix::dropout_mask;
use crate::tensor::{Matrix, SparseAdjacency};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a, T> {
    Constant,
    Param,
    MatMul(Var, Var),
    SpMM(&'a SparseAdjacency, Var),
    Relu(Var),
    Dropout(Var, Option<Vec<T>>),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Axpy(Var, Var, T),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    /// Mean over the listed users of the squared error of their factual arm.
    FactualMse {
        treated: Var,
        control: Var,
        terms: Vec<FactualTerm<T>>,
    },
    /// Mean binary cross-entropy of `sigmoid(logit)` against the listed targets.
    BceLogits {
        logits: Var,
        terms: Vec<(usize, T)>,
    },
}

struct FactualTerm<T> {
    user: usize,
    treated: bool,
    target: T,
}

struct Node<'a, T> {
    value: Matrix<T>,
    op: Op<'a, T>,
    needs_grad: bool,
}

/// Linear record of primitive applications for reverse-mode differentiation.
///
/// Every node keeps its forward value; backward replays the record in reverse,
/// skipping nodes that no parameter feeds into.
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`; handles to them become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, value: Matrix<T>, op: Op<'a, T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param => true,
            Op::Constant => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Param, &[])
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let m = self.value(v);
        if m.shape() != (1, 1) {
            return Err(Error::shape("scalar", format!("node has shape {:?}", m.shape())));
        }
        Ok(m.get(0, 0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn spmm(&mut self, adj: &'a SparseAdjacency, x: Var) -> Result<Var> {
        let value = adj.spmm(self.value(x))?;
        Ok(self.push(value, Op::SpMM(adj, x), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = super::relu(self.value(x));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn dropout<R: rand::Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        active: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let input = self.value(x);
        let mask = dropout_mask::<T, R>(input.rows() * input.cols(), p, active, rng)?;
        let value = match &mask {
            None => input.clone(),
            Some(mask) => Matrix::from_raw(
                input.rows(),
                input.cols(),
                input.as_slice().iter().zip(mask).map(|(&v, &m)| v * m).collect(),
            ),
        };
        Ok(self.push(value, Op::Dropout(x, mask), &[x]))
    }

    /// Adds a `1 × cols` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", bv.shape(), xv.shape()),
            ));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let value = Matrix::from_raw(
            av.rows(),
            av.cols(),
            av.as_slice().iter().zip(bv.as_slice()).map(|(&x, &y)| x * y).collect(),
        );
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    /// `a + alpha · b`.
    pub fn axpy(&mut self, a: Var, b: Var, alpha: T) -> Result<Var> {
        self.same_shape("axpy", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let value = Matrix::from_raw(
            av.rows(),
            av.cols(),
            av.as_slice()
                .iter()
                .zip(bv.as_slice())
                .map(|(&x, &y)| x + alpha * y)
                .collect(),
        );
        Ok(self.push(value, Op::Axpy(a, b, alpha), &[a, b]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} beside {:?}", av.shape(), bv.shape()),
            ));
        }
        let cols = av.cols() + bv.cols();
        let mut data = Vec::with_capacity(av.rows() * cols);
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let value = Matrix::from_raw(av.rows(), cols, data);
        Ok(self.push(value, Op::ConcatCols(a, b), &[a, b]))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(
                "concat_rows",
                format!("{:?} above {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut data = av.as_slice().to_vec();
        data.extend_from_slice(bv.as_slice());
        let value = Matrix::from_raw(av.rows() + bv.rows(), av.cols(), data);
        Ok(self.push(value, Op::ConcatRows(a, b), &[a, b]))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {}", start + len, xv.rows()),
            ));
        }
        let cols = xv.cols();
        let value = Matrix::from_raw(len, cols, xv.as_slice()[start * cols..(start + len) * cols].to_vec());
        Ok(self.push(value, Op::SliceRows(x, start), &[x]))
    }

    /// Factual squared error: mean over masked users of
    /// `T·(ŷᵗ − Y)² + (1 − T)·(ŷᶜ − Y)²`.
    ///
    /// Only the factual arm of each masked user is touched; outcomes of unmasked
    /// users are never read.
    pub fn factual_mse(
        &mut self,
        treated_pred: Var,
        control_pred: Var,
        outcome: &[T],
        treatment: &[bool],
        mask: &[bool],
    ) -> Result<Var> {
        let (tv, cv) = (self.value(treated_pred), self.value(control_pred));
        let n = tv.rows();
        if tv.shape() != (n, 1)
            || cv.shape() != (n, 1)
            || outcome.len() != n
            || treatment.len() != n
            || mask.len() != n
        {
            return Err(Error::shape(
                "factual_mse",
                format!(
                    "predictions {:?}/{:?}, outcome {}, treatment {}, mask {}",
                    tv.shape(),
                    cv.shape(),
                    outcome.len(),
                    treatment.len(),
                    mask.len()
                ),
            ));
        }
        let terms: Vec<FactualTerm<T>> = (0..n)
            .filter(|&i| mask[i])
            .map(|i| FactualTerm {
                user: i,
                treated: treatment[i],
                target: outcome[i],
            })
            .collect();
        if terms.is_empty() {
            return Err(Error::NoTrainingData("empty label mask".into()));
        }
        let count = T::from_usize(terms.len()).unwrap();
        let sum: T = terms
            .iter()
            .map(|t| {
                let pred = if t.treated { tv.get(t.user, 0) } else { cv.get(t.user, 0) };
                let d = pred - t.target;
                d * d
            })
            .sum();
        let value = Matrix::filled(1, 1, sum / count);
        Ok(self.push(
            value,
            Op::FactualMse {
                treated: treated_pred,
                control: control_pred,
                terms,
            },
            &[treated_pred, control_pred],
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets` over masked rows.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[bool], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        let n = lv.rows();
        if lv.shape() != (n, 1) || targets.len() != n || mask.len() != n {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?}, targets {}, mask {}", lv.shape(), targets.len(), mask.len()),
            ));
        }
        let terms: Vec<(usize, T)> = (0..n)
            .filter(|&i| mask[i])
            .map(|i| (i, if targets[i] { T::one() } else { T::zero() }))
            .collect();
        if terms.is_empty() {
            return Err(Error::NoTrainingData("empty label mask".into()));
        }
        let count = T::from_usize(terms.len()).unwrap();
        // max(z, 0) − z·t + ln(1 + e^{−|z|})
        let sum: T = terms
            .iter()
            .map(|&(i, t)| {
                let z = lv.get(i, 0);
                z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p()
            })
            .sum();
        let value = Matrix::filled(1, 1, sum / count);
        Ok(self.push(value, Op::BceLogits { logits, terms }, &[logits]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Smallest `|input|` over all ReLU nodes, i.e. the distance to the nearest kink.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x).as_slice().iter().fold(T::infinity(), |m, v| m.min(v.abs()))),
                _ => None,
            })
            .reduce(|a, b| a.min(b))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.matmul_bt(self.value(*b));
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).matmul_at(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::SpMM(adj, x) => {
                    let gx = adj.spmm_transpose(&g)?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let input = self.value(*x);
                    let gx = Matrix::from_raw(
                        g.rows(),
                        g.cols(),
                        g.as_slice()
                            .iter()
                            .zip(input.as_slice())
                            .map(|(&gv, &iv)| if iv > T::zero() { gv } else { T::zero() })
                            .collect(),
                    );
                    accumulate(&mut grads, *x, gx);
                }
                Op::Dropout(x, mask) => {
                    let gx = match mask {
                        None => g,
                        Some(mask) => Matrix::from_raw(
                            g.rows(),
                            g.cols(),
                            g.as_slice().iter().zip(mask).map(|(&gv, &m)| gv * m).collect(),
                        ),
                    };
                    accumulate(&mut grads, *x, gx);
                }
                Op::AddBias(x, bias) => {
                    if self.needs(*bias) {
                        accumulate(&mut grads, *bias, g.column_sums());
                    }
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = Matrix::from_raw(
                            g.rows(),
                            g.cols(),
                            g.as_slice().iter().zip(bv.as_slice()).map(|(&x, &y)| x * y).collect(),
                        );
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = Matrix::from_raw(
                            g.rows(),
                            g.cols(),
                            g.as_slice().iter().zip(av.as_slice()).map(|(&x, &y)| x * y).collect(),
                        );
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale(x, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *x, g.map(|v| v * f));
                }
                Op::Axpy(a, b, alpha) => {
                    let alpha = *alpha;
                    accumulate(&mut grads, *b, g.map(|v| v * alpha));
                    accumulate(&mut grads, *a, g);
                }
                Op::ConcatCols(a, b) => {
                    let left = self.value(*a).cols();
                    let right = self.value(*b).cols();
                    let mut ga = Vec::with_capacity(g.rows() * left);
                    let mut gb = Vec::with_capacity(g.rows() * right);
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        ga.extend_from_slice(&row[..left]);
                        gb.extend_from_slice(&row[left..]);
                    }
                    accumulate(&mut grads, *a, Matrix::from_raw(g.rows(), left, ga));
                    accumulate(&mut grads, *b, Matrix::from_raw(g.rows(), right, gb));
                }
                Op::ConcatRows(a, b) => {
                    let top = self.value(*a).rows();
                    let cols = g.cols();
                    let (ga, gb) = g.as_slice().split_at(top * cols);
                    accumulate(&mut grads, *a, Matrix::from_raw(top, cols, ga.to_vec()));
                    accumulate(&mut grads, *b, Matrix::from_raw(g.rows() - top, cols, gb.to_vec()));
                }
                Op::SliceRows(x, start) => {
                    let xv = self.value(*x);
                    let cols = xv.cols();
                    let mut gx = Matrix::zeros(xv.rows(), cols);
                    gx.as_mut_slice()[start * cols..(start + g.rows()) * cols]
                        .copy_from_slice(g.as_slice());
                    accumulate(&mut grads, *x, gx);
                }
                Op::FactualMse {
                    treated,
                    control,
                    terms,
                } => {
                    let upstream = g.get(0, 0);
                    let (tv, cv) = (self.value(*treated), self.value(*control));
                    let n = tv.rows();
                    let scale = upstream * T::from_f64_lossy(2.0) / T::from_usize(terms.len()).unwrap();
                    let mut gt = Matrix::zeros(n, 1);
                    let mut gc = Matrix::zeros(n, 1);
                    for t in terms {
                        if t.treated {
                            gt.set(t.user, 0, scale * (tv.get(t.user, 0) - t.target));
                        } else {
                            gc.set(t.user, 0, scale * (cv.get(t.user, 0) - t.target));
                        }
                    }
                    accumulate(&mut grads, *treated, gt);
                    accumulate(&mut grads, *control, gc);
                }
                Op::BceLogits { logits, terms } => {
                    let upstream = g.get(0, 0);
                    let lv = self.value(*logits);
                    let scale = upstream / T::from_usize(terms.len()).unwrap();
                    let mut gl = Matrix::zeros(lv.rows(), 1);
                    for &(i, t) in terms {
                        let z = lv.get(i, 0);
                        let sigma = T::one() / (T::one() + (-z).exp());
                        gl.set(i, 0, scale * (sigma - t));
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match node.op {
                Op::Param => Some(g.unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    #[inline]
    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a scalar loss with respect to every parameter node of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a parameter node; zero when the parameter does not reach the loss.
    ///
    /// # Panics
    /// If `param` was not created with [`Tape::param`].
    pub fn wrt(&self, param: Var) -> &Matrix<T> {
        self.grads[param.0]
            .as_ref()
            .expect("gradient requested for a non-parameter node")
    }
}
