//! Forward-pass primitives behind one trait, so the model is written once and
//! runs either eagerly ([`Eval`]) or recorded for reverse mode ([`Tape`]).

mod tape;

pub use tape::{Tape, Var};

use crate::linalg::{self, Mat};
use crate::scalar::Scalar;

/// Reduction applied to per-node cross-entropy terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

impl Reduction {
    pub(crate) fn factor<T: Scalar>(self, n: usize) -> T {
        match self {
            Reduction::Mean => T::one() / T::usize(n.max(1)),
            Reduction::Sum => T::one(),
        }
    }
}

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Primitive operations the model is built from.
///
/// Shape errors here are programming errors (the model wires shapes from its
/// own configuration), so implementations panic instead of returning `Result`.
pub trait Ops<T: Scalar> {
    type Tensor;

    fn constant(&mut self, value: Mat<T>) -> Self::Tensor;
    fn value<'a>(&'a self, t: &'a Self::Tensor) -> &'a Mat<T>;

    fn matmul(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Self::Tensor;
    /// `a · bᵀ`
    fn matmul_nt(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Self::Tensor;
    fn add(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Self::Tensor;
    /// Adds a `1 × c` row to every row of `a`.
    fn add_row(&mut self, a: &Self::Tensor, row: &Self::Tensor) -> Self::Tensor;
    /// Multiplies every row of `a` elementwise by a `1 × c` row.
    fn mul_row(&mut self, a: &Self::Tensor, row: &Self::Tensor) -> Self::Tensor;
    fn scale(&mut self, a: &Self::Tensor, c: T) -> Self::Tensor;
    /// Multiplies `a` by the single entry of the `1 × 1` tensor `s`.
    fn scale_by(&mut self, a: &Self::Tensor, s: &Self::Tensor) -> Self::Tensor;
    fn relu(&mut self, a: &Self::Tensor) -> Self::Tensor;
    fn softmax_rows(&mut self, a: &Self::Tensor) -> Self::Tensor;
    /// Layer normalization without the affine part.
    fn normalize_rows(&mut self, a: &Self::Tensor) -> Self::Tensor;
    fn slice_cols(&mut self, a: &Self::Tensor, start: usize, end: usize) -> Self::Tensor;
    fn concat_cols(&mut self, parts: &[Self::Tensor]) -> Self::Tensor;
}

/// Eager evaluation: tensors are plain matrices and nothing is recorded.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eval;

impl<T: Scalar> Ops<T> for Eval {
    type Tensor = Mat<T>;

    fn constant(&mut self, value: Mat<T>) -> Mat<T> {
        value
    }

    fn value<'a>(&'a self, t: &'a Mat<T>) -> &'a Mat<T> {
        t
    }

    fn matmul(&mut self, a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
        a.mm(b)
    }

    fn matmul_nt(&mut self, a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
        a.mm_nt(b)
    }

    fn add(&mut self, a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
        a.zip_map(b, |x, y| x + y)
    }

    fn add_row(&mut self, a: &Mat<T>, row: &Mat<T>) -> Mat<T> {
        broadcast_row(a, row, |x, r| x + r)
    }

    fn mul_row(&mut self, a: &Mat<T>, row: &Mat<T>) -> Mat<T> {
        broadcast_row(a, row, |x, r| x * r)
    }

    fn scale(&mut self, a: &Mat<T>, c: T) -> Mat<T> {
        a.scale(c)
    }

    fn scale_by(&mut self, a: &Mat<T>, s: &Mat<T>) -> Mat<T> {
        assert_eq!(s.shape(), (1, 1), "scale_by expects a 1x1 factor");
        a.scale(s.at(0, 0))
    }

    fn relu(&mut self, a: &Mat<T>) -> Mat<T> {
        linalg::relu(a)
    }

    fn softmax_rows(&mut self, a: &Mat<T>) -> Mat<T> {
        linalg::softmax_rows(a)
    }

    fn normalize_rows(&mut self, a: &Mat<T>) -> Mat<T> {
        linalg::normalize_rows(a).0
    }

    fn slice_cols(&mut self, a: &Mat<T>, start: usize, end: usize) -> Mat<T> {
        a.slice_cols(start, end)
    }

    fn concat_cols(&mut self, parts: &[Mat<T>]) -> Mat<T> {
        let refs: Vec<&Mat<T>> = parts.iter().collect();
        Mat::hconcat(&refs).expect("concat_cols: row counts differ")
    }
}

pub(crate) fn broadcast_row<T: Scalar>(a: &Mat<T>, row: &Mat<T>, f: impl Fn(T, T) -> T) -> Mat<T> {
    assert_eq!(row.shape(), (1, a.cols()), "row broadcast shape");
    let r = row.row(0);
    let mut out = a.clone();
    for i in 0..out.rows() {
        for (v, &x) in out.row_mut(i).iter_mut().zip(r) {
            *v = f(*v, x);
        }
    }
    out
}

/// Column sums as a `1 × c` matrix.
pub(crate) fn column_sums<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    let mut out = vec![T::zero(); a.cols()];
    for i in 0..a.rows() {
        for (o, &v) in out.iter_mut().zip(a.row(i)) {
            *o += v;
        }
    }
    Mat::from_vec_unchecked(1, a.cols(), out)
}

/// Cross-entropy of row-stochastic `probs` against class indices.
pub(crate) fn cross_entropy_value<T: Scalar>(probs: &Mat<T>, classes: &[usize], reduction: Reduction) -> T {
    let clamp = T::of(LOG_CLAMP);
    let total: T = classes
        .iter()
        .enumerate()
        .map(|(j, &c)| -probs.at(j, c).max(clamp).ln())
        .sum();
    total * reduction.factor(classes.len())
}
