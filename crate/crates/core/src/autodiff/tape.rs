use std::sync::atomic::{AtomicU64, Ordering};

use super::{broadcast_row, column_sums, cross_entropy_value, Ops, Reduction, LOG_CLAMP};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::scalar::Scalar;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, T),
    ScaleBy(usize, usize),
    Relu(usize),
    Softmax(usize),
    Normalize { input: usize, inv_std: Vec<T> },
    SliceCols { input: usize, start: usize },
    Concat(Vec<usize>),
    CrossEntropy { probs: usize, classes: Vec<usize>, factor: T },
    Sum(usize),
}

struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records primitive operations for one forward pass and replays them in
/// reverse to produce parameter gradients. One tape per training step.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that gradients flow into.
    pub fn param(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn idx(&self, v: &Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.id
    }

    fn grad_flag(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn record(&mut self, value: Mat<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let needs = self.grad_flag(inputs);
        self.push(value, op, needs)
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: &Var) -> Var {
        let i = self.idx(a);
        let s = self.nodes[i].value.sum();
        self.record(Mat::from_vec_unchecked(1, 1, vec![s]), Op::Sum(i), &[i])
    }

    /// Cross-entropy of row-stochastic `probs` against class indices.
    pub fn cross_entropy(&mut self, probs: &Var, classes: &[usize], reduction: Reduction) -> Var {
        let i = self.idx(probs);
        let p = &self.nodes[i].value;
        assert_eq!(p.rows(), classes.len(), "cross_entropy: label count");
        assert!(classes.iter().all(|&c| c < p.cols()), "cross_entropy: class index");
        let loss = cross_entropy_value(p, classes, reduction);
        let op = Op::CrossEntropy {
            probs: i,
            classes: classes.to_vec(),
            factor: reduction.factor(classes.len()),
        };
        self.record(Mat::from_vec_unchecked(1, 1, vec![loss]), op, &[i])
    }

    /// Gradients of the scalar `loss` with respect to each of `params`, in
    /// order. Parameters the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: &Var, params: &[Var]) -> Result<Vec<Mat<T>>> {
        for v in std::iter::once(loss).chain(params) {
            if v.tape != self.id || v.id >= self.nodes.len() {
                return Err(Error::UnrecordedDependency(format!(
                    "node {} is not recorded on this tape",
                    v.id
                )));
            }
        }
        for p in params {
            if !matches!(self.nodes[p.id].op, Op::Leaf) || !self.nodes[p.id].needs_grad {
                return Err(Error::UnrecordedDependency(format!(
                    "node {} is not a parameter leaf",
                    p.id
                )));
            }
        }
        if self.nodes[loss.id].value.shape() != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got {:?}",
                self.nodes[loss.id].value.shape()
            )));
        }

        let mut grads: Vec<Option<Mat<T>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Mat::filled(1, 1, T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        params
            .iter()
            .map(|p| {
                let g = grads[p.id]
                    .clone()
                    .unwrap_or_else(|| {
                        let (r, c) = self.nodes[p.id].value.shape();
                        Mat::zeros(r, c)
                    });
                g.ensure_finite("backward")?;
                Ok(g)
            })
            .collect()
    }

    fn propagate(&self, node: &Node<T>, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        let val = |i: usize| &self.nodes[i].value;
        let mut send = |i: usize, delta: Mat<T>| {
            if !self.nodes[i].needs_grad {
                return;
            }
            match &mut grads[i] {
                Some(acc) => acc.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        let wants = |i: usize| self.nodes[i].needs_grad;

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if wants(a) {
                    send(a, g.mm_nt(val(b)));
                }
                if wants(b) {
                    send(b, val(a).mm_tn(g));
                }
            }
            &Op::MatMulNt(a, b) => {
                if wants(a) {
                    send(a, g.mm(val(b)));
                }
                if wants(b) {
                    send(b, g.mm_tn(val(a)));
                }
            }
            &Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            &Op::AddRow(a, row) => {
                if wants(row) {
                    send(row, column_sums(g));
                }
                send(a, g.clone());
            }
            &Op::MulRow(a, row) => {
                if wants(row) {
                    send(row, column_sums(&g.zip_map(val(a), |x, y| x * y)));
                }
                if wants(a) {
                    send(a, broadcast_row(g, val(row), |x, r| x * r));
                }
            }
            &Op::Scale(a, c) => send(a, g.scale(c)),
            &Op::ScaleBy(a, s) => {
                if wants(s) {
                    let d = g.zip_map(val(a), |x, y| x * y).sum();
                    send(s, Mat::from_vec_unchecked(1, 1, vec![d]));
                }
                if wants(a) {
                    send(a, g.scale(val(s).at(0, 0)));
                }
            }
            &Op::Relu(a) => {
                send(a, g.zip_map(&node.value, |x, y| if y > T::zero() { x } else { T::zero() }));
            }
            &Op::Softmax(a) => {
                let p = &node.value;
                let mut d = g.clone();
                for i in 0..d.rows() {
                    let pr = p.row(i);
                    let dot: T = d.row(i).iter().zip(pr).map(|(&x, &y)| x * y).sum();
                    for (x, &y) in d.row_mut(i).iter_mut().zip(pr) {
                        *x = y * (*x - dot);
                    }
                }
                send(a, d);
            }
            Op::Normalize { input, inv_std } => {
                let y = &node.value;
                let width = T::usize(y.cols());
                let mut d = g.clone();
                for i in 0..d.rows() {
                    let yr = y.row(i);
                    let gsum: T = d.row(i).iter().copied().sum();
                    let gy: T = d.row(i).iter().zip(yr).map(|(&x, &v)| x * v).sum();
                    let inv = inv_std[i];
                    for (x, &v) in d.row_mut(i).iter_mut().zip(yr) {
                        *x = inv * (*x - gsum / width - v * gy / width);
                    }
                }
                send(*input, d);
            }
            &Op::SliceCols { input, start } => {
                let (rows, cols) = val(input).shape();
                let mut d = Mat::zeros(rows, cols);
                for i in 0..rows {
                    d.row_mut(i)[start..start + g.cols()].copy_from_slice(g.row(i));
                }
                send(input, d);
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        send(p, g.slice_cols(start, start + w));
                    }
                    start += w;
                }
            }
            Op::CrossEntropy {
                probs,
                classes,
                factor,
            } => {
                let p = val(*probs);
                let upstream = g.at(0, 0) * *factor;
                let clamp = T::of(LOG_CLAMP);
                let mut d = Mat::zeros(p.rows(), p.cols());
                for (j, &c) in classes.iter().enumerate() {
                    let pj = p.at(j, c);
                    if pj >= clamp {
                        d.set(j, c, -upstream / pj);
                    }
                }
                send(*probs, d);
            }
            &Op::Sum(a) => {
                let (r, c) = val(a).shape();
                send(a, Mat::filled(r, c, g.at(0, 0)));
            }
        }
    }
}

impl<T: Scalar> Ops<T> for Tape<T> {
    type Tensor = Var;

    fn constant(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn value<'a>(&'a self, t: &'a Var) -> &'a Mat<T> {
        &self.nodes[self.idx(t)].value
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let (a, b) = (self.idx(a), self.idx(b));
        let v = self.nodes[a].value.mm(&self.nodes[b].value);
        self.record(v, Op::MatMul(a, b), &[a, b])
    }

    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Var {
        let (a, b) = (self.idx(a), self.idx(b));
        let v = self.nodes[a].value.mm_nt(&self.nodes[b].value);
        self.record(v, Op::MatMulNt(a, b), &[a, b])
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let (a, b) = (self.idx(a), self.idx(b));
        let v = self.nodes[a].value.zip_map(&self.nodes[b].value, |x, y| x + y);
        self.record(v, Op::Add(a, b), &[a, b])
    }

    fn add_row(&mut self, a: &Var, row: &Var) -> Var {
        let (a, r) = (self.idx(a), self.idx(row));
        let v = broadcast_row(&self.nodes[a].value, &self.nodes[r].value, |x, y| x + y);
        self.record(v, Op::AddRow(a, r), &[a, r])
    }

    fn mul_row(&mut self, a: &Var, row: &Var) -> Var {
        let (a, r) = (self.idx(a), self.idx(row));
        let v = broadcast_row(&self.nodes[a].value, &self.nodes[r].value, |x, y| x * y);
        self.record(v, Op::MulRow(a, r), &[a, r])
    }

    fn scale(&mut self, a: &Var, c: T) -> Var {
        let a = self.idx(a);
        let v = self.nodes[a].value.scale(c);
        self.record(v, Op::Scale(a, c), &[a])
    }

    fn scale_by(&mut self, a: &Var, s: &Var) -> Var {
        let (a, s) = (self.idx(a), self.idx(s));
        assert_eq!(self.nodes[s].value.shape(), (1, 1), "scale_by expects a 1x1 factor");
        let v = self.nodes[a].value.scale(self.nodes[s].value.at(0, 0));
        self.record(v, Op::ScaleBy(a, s), &[a, s])
    }

    fn relu(&mut self, a: &Var) -> Var {
        let a = self.idx(a);
        let v = linalg::relu(&self.nodes[a].value);
        self.record(v, Op::Relu(a), &[a])
    }

    fn softmax_rows(&mut self, a: &Var) -> Var {
        let a = self.idx(a);
        let v = linalg::softmax_rows(&self.nodes[a].value);
        self.record(v, Op::Softmax(a), &[a])
    }

    fn normalize_rows(&mut self, a: &Var) -> Var {
        let a = self.idx(a);
        let (v, inv_std) = linalg::normalize_rows(&self.nodes[a].value);
        self.record(v, Op::Normalize { input: a, inv_std }, &[a])
    }

    fn slice_cols(&mut self, a: &Var, start: usize, end: usize) -> Var {
        let a = self.idx(a);
        let v = self.nodes[a].value.slice_cols(start, end);
        self.record(v, Op::SliceCols { input: a, start }, &[a])
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let ids: Vec<usize> = parts.iter().map(|p| self.idx(p)).collect();
        let refs: Vec<&Mat<T>> = ids.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Mat::hconcat(&refs).expect("concat_cols: row counts differ");
        self.record(v, Op::Concat(ids.clone()), &ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of `build` w.r.t. every entry of every input.
    fn check_gradients(inputs: Vec<Mat<f64>>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(&loss, &vars).unwrap();

        let eval = |ins: &[Mat<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ins.iter().map(|m| t.param(m.clone())).collect();
            let l = build(&mut t, &vs);
            t.value(&l).at(0, 0)
        };
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            for idx in 0..input.len() {
                let mut plus = inputs.clone();
                plus[k].as_mut_slice()[idx] += h;
                let mut minus = inputs.clone();
                minus[k].as_mut_slice()[idx] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = grads[k].as_slice()[idx];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / denom < 1e-5,
                    "input {k} entry {idx}: analytic {an} vs numeric {fd}"
                );
            }
        }
    }

    #[test]
    fn linear_sum_gradient_is_outer_structure() {
        // loss = sum(W x): dL/dW[i][j] = sum over columns of x row j
        let w = Mat::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let x = Mat::from_rows(&[[2.0, 1.0, 0.0], [-1.0, 4.0, 2.0]]).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(w);
        let xv = tape.constant(x.clone());
        let prod = tape.matmul(&wv, &xv);
        let loss = tape.sum(&prod);
        let g = tape.backward(&loss, &[wv]).unwrap();
        let expected = Mat::from_fn(2, 2, |_, j| x.row(j).iter().sum());
        assert_eq!(g[0], expected);
    }

    #[test]
    fn softmax_cross_entropy_gradient_identity() {
        let logits = Mat::from_rows(&[[0.3, -1.2], [2.0, 0.5], [0.0, 0.0]]).unwrap();
        let classes = [1, 0, 1];
        let mut tape = Tape::new();
        let l = tape.param(logits.clone());
        let p = tape.softmax_rows(&l);
        let loss = tape.cross_entropy(&p, &classes, Reduction::Sum);
        let g = tape.backward(&loss, &[l]).unwrap().remove(0);
        let probs = linalg::softmax_rows(&logits);
        for j in 0..3 {
            for c in 0..2 {
                let onehot: f64 = if classes[j] == c { 1.0 } else { 0.0 };
                assert!((g.at(j, c) - (probs.at(j, c) - onehot)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(4, 3, &mut rng);
        let b = random(3, 5, &mut rng);
        let c = random(6, 3, &mut rng);
        let row = random(1, 5, &mut rng);
        let s = random(1, 1, &mut rng);
        check_gradients(vec![a, b, c, row, s], |t, v| {
            let ab = t.matmul(&v[0], &v[1]);
            let ab = t.add_row(&ab, &v[3]);
            let ab = t.mul_row(&ab, &v[3]);
            let r = t.relu(&ab);
            let n = t.normalize_rows(&r);
            let sc = t.scale_by(&n, &v[4]);
            let att = t.matmul_nt(&v[0], &v[2]);
            let att = t.scale(&att, 0.7);
            let sm = t.softmax_rows(&att);
            let left = t.slice_cols(&sc, 1, 4);
            let both = t.concat_cols(&[left, sm]);
            let both = t.add(&both, &both);
            let probs = t.softmax_rows(&both);
            t.cross_entropy(&probs, &[0, 3, 8, 1], Reduction::Mean)
        });
    }

    #[test]
    fn eval_and_tape_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let mut e = Eval;
        let x = Ops::<f64>::matmul(&mut e, &a, &b);
        let y = Ops::<f64>::softmax_rows(&mut e, &x);
        let mut t = Tape::new();
        let (av, bv) = (t.param(a), t.param(b));
        let xv = t.matmul(&av, &bv);
        let yv = t.softmax_rows(&xv);
        assert_eq!(t.value(&yv), &y);
    }

    #[test]
    fn foreign_variables_rejected() {
        let mut t1 = Tape::<f64>::new();
        let mut t2 = Tape::<f64>::new();
        let p = t1.param(Mat::filled(1, 1, 2.0));
        let q = t2.param(Mat::filled(1, 1, 2.0));
        let loss = t1.sum(&p);
        assert!(matches!(
            t1.backward(&loss, &[q]),
            Err(Error::UnrecordedDependency(_))
        ));
        let c = t1.constant(Mat::filled(1, 1, 1.0));
        assert!(t1.backward(&loss, &[c]).is_err());
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let p = t.param(Mat::filled(2, 2, 1.0));
        let q = t.param(Mat::filled(1, 3, 1.0));
        let loss = t.sum(&p);
        let g = t.backward(&loss, &[p, q]).unwrap();
        assert_eq!(g[1], Mat::zeros(1, 3));
    }
}
