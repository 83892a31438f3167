//! AdamW with decoupled weight decay.

use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of every tensor. `params` and `grads` must line up with the
    /// order used when `state` was created.
    pub fn step<T: Scalar>(&self, params: Vec<&mut Mat<T>>, grads: &[Mat<T>], state: &mut AdamState<T>) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        assert_eq!(params.len(), state.first.len(), "optimizer state size");
        state.step += 1;
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            adamw_update(
                p.as_mut_slice(),
                g.as_slice(),
                state.first[i].as_mut_slice(),
                state.second[i].as_mut_slice(),
                state.step,
                self,
            );
        }
    }
}

/// First and second moment buffers plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<Mat<T>>,
    pub second: Vec<Mat<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Mat<T>>) -> Self {
        let first: Vec<Mat<T>> = params
            .into_iter()
            .map(|p| Mat::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            second: first.clone(),
            first,
            step: 0,
        }
    }
}

/// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ` for step `t` (1-based).
pub fn adamw_update<T: Scalar>(theta: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, opt: &AdamW) {
    let b1 = T::of(opt.beta1);
    let b2 = T::of(opt.beta2);
    let one = T::one();
    let lr = T::of(opt.learning_rate);
    let decay = T::of(opt.learning_rate * opt.weight_decay);
    let eps = T::of(opt.eps);
    let c1 = one - b1.powi(t as i32);
    let c2 = one - b2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let old = theta[i];
        theta[i] = old - lr * m_hat / (v_hat.sqrt() + eps) - decay * old;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(theta: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let mut p = Mat::filled(1, 1, theta);
        let grads = [Mat::filled(1, 1, g)];
        let mut state = AdamState::zeros_like([&p]);
        AdamW::new(lr, wd).step(vec![&mut p], &grads, &mut state);
        p.at(0, 0)
    }

    #[test]
    fn first_step_closed_forms() {
        assert!((single(1.0, 1.0, 0.1, 0.0) - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((single(1.0, 1.0, 0.1, 0.0) - 0.9).abs() < 1e-8);
        assert!((single(1.0, 1.0, 0.1, 0.1) - 0.89).abs() < 1e-8);
        assert_eq!(single(1.0, 0.0, 0.1, 0.0), 1.0);
    }

    #[test]
    fn matches_reference_over_many_steps() {
        // straightforward transcription of the update equations in f64
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 50;
        let opt = AdamW::new(3e-3, 0.05);
        let mut p = Mat::from_fn(5, 10, |_, _| rng.random_range(-1.0..1.0));
        let mut state = AdamState::zeros_like([&p]);
        let mut theta: Vec<f64> = p.as_slice().to_vec();
        let mut m = vec![0.0; n];
        let mut v = vec![0.0; n];
        for t in 1..=20 {
            let g = Mat::from_fn(5, 10, |_, _| rng.random_range(-2.0..2.0));
            opt.step(vec![&mut p], std::slice::from_ref(&g), &mut state);
            for i in 0..n {
                let gi = g.as_slice()[i];
                m[i] = 0.9 * m[i] + 0.1 * gi;
                v[i] = 0.999 * v[i] + 0.001 * gi * gi;
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let vh = v[i] / (1.0 - 0.999f64.powi(t));
                theta[i] = theta[i] - 3e-3 * mh / (vh.sqrt() + 1e-8) - 3e-3 * 0.05 * theta[i];
            }
        }
        for (a, b) in p.as_slice().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(state.step, 20);
    }
}
