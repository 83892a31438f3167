use crate::autodiff::Ops;
use crate::scalar::Scalar;

/// `y = x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<P> {
    pub weight: P,
    pub bias: P,
}

impl<P> Affine<P> {
    pub fn apply<T: Scalar, B: Ops<T, Tensor = P>>(&self, ops: &mut B, x: &P) -> P {
        let y = ops.matmul(x, &self.weight);
        ops.add_row(&y, &self.bias)
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Affine<Q> {
        Affine {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut P>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Per-column gain and bias applied after row normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<P> {
    pub gain: P,
    pub bias: P,
}

impl<P> LayerNorm<P> {
    pub fn apply<T: Scalar, B: Ops<T, Tensor = P>>(&self, ops: &mut B, x: &P) -> P {
        let z = ops.normalize_rows(x);
        let z = ops.mul_row(&z, &self.gain);
        ops.add_row(&z, &self.bias)
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> LayerNorm<Q> {
        LayerNorm {
            gain: f(&self.gain),
            bias: f(&self.bias),
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        out.push((format!("{prefix}.gain"), &self.gain));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut P>) {
        out.push(&mut self.gain);
        out.push(&mut self.bias);
    }
}
