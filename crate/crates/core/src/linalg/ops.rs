use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    x.map(|v| v.max(T::zero()))
}

/// Row-wise softmax with max subtraction, so large logits never overflow.
pub fn softmax_rows<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Per-row standardization `(x - mean) / sqrt(var + eps)` with the population
/// variance. Returns the normalized rows and each row's `1/sqrt(var + eps)`.
pub fn normalize_rows<T: Scalar>(x: &Mat<T>) -> (Mat<T>, Vec<T>) {
    let eps = T::of(T::LAYER_NORM_EPS);
    let width = T::usize(x.cols());
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().copied().sum::<T>() / width;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / width;
        let inv = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (out, inv_std)
}

/// Layer normalization followed by a per-column affine map (`gain`, `bias`
/// are `1 × cols`).
pub fn layer_norm_rows<T: Scalar>(x: &Mat<T>, gain: &Mat<T>, bias: &Mat<T>) -> Result<Mat<T>> {
    if x.cols() < 2 {
        return Err(Error::InvalidArgument(
            "layer_norm_rows needs at least two columns".into(),
        ));
    }
    for p in [gain, bias] {
        if p.shape() != (1, x.cols()) {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_rows",
                left: x.shape(),
                right: p.shape(),
            });
        }
    }
    x.ensure_finite("layer_norm_rows input")?;
    let (mut out, _) = normalize_rows(x);
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = *v * gain.at(0, j) + bias.at(0, j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_and_overflow_safe() {
        let s = softmax_rows(&Mat::from_rows(&[[0.0, 0.0]]).unwrap());
        assert_eq!(s.row(0), &[0.5, 0.5]);
        let s = softmax_rows(&Mat::from_rows(&[[1000.0, 1000.0]]).unwrap());
        assert_eq!(s.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn relu_clips_negatives() {
        let r = relu(&Mat::from_rows(&[[-1.0, 2.0]]).unwrap());
        assert_eq!(r.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn layer_norm_zero_mean_unit_variance() {
        let x = Mat::from_rows(&[[1.0, 2.0, 3.0, 4.0], [10.0, -10.0, 5.0, 0.0]]).unwrap();
        let ones = Mat::filled(1, 4, 1.0);
        let zeros = Mat::zeros(1, 4);
        let y = layer_norm_rows(&x, &ones, &zeros).unwrap();
        for i in 0..2 {
            let mean: f64 = y.row(i).iter().sum::<f64>() / 4.0;
            let var: f64 = y.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            // eps in the denominator keeps variance just below one
            assert!((var - 1.0).abs() < 1e-5, "{var}");
        }
    }

    #[test]
    fn layer_norm_applies_gain_and_bias() {
        let x = Mat::from_rows(&[[1.0, 3.0]]).unwrap();
        let gain = Mat::from_rows(&[[2.0, 2.0]]).unwrap();
        let bias = Mat::from_rows(&[[1.0, -1.0]]).unwrap();
        let y = layer_norm_rows(&x, &gain, &bias).unwrap();
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.at(0, 0) - (1.0 - 2.0 * s)).abs() < 1e-12);
        assert!((y.at(0, 1) - (-1.0 + 2.0 * s)).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_rejects_single_column() {
        let x = Mat::from_rows(&[[1.0]]).unwrap();
        let p = Mat::filled(1, 1, 1.0);
        assert!(layer_norm_rows(&x, &p, &p).is_err());
    }
}
