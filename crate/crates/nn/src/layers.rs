//! Layers over the tape: dense, NHWC convolution, instance norm, residual block.

use rand::Rng;

use crate::params::{BoundParams, ParamRef, ParamSet};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn conv_out_dim(in_dim: usize, k: usize, stride: usize, pad: usize) -> usize {
    (in_dim + 2 * pad - k) / stride + 1
}

/// 2-D convolution on NHWC tensors, weights stored as `(k*k*cin, cout)`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamRef,
    pub b: ParamRef,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = (k * k * cin) as f64;
        let std = (2.0 / fan_in).sqrt();
        let w = ps.add(&format!("{name}.w"), Tensor::randn(&[k * k * cin, cout], std, rng));
        let b = ps.add(&format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { w, b, cin, cout, k, stride, pad }
    }

    pub fn forward(&self, tape: &mut Tape, bp: &BoundParams, x: Var) -> Var {
        let shape = tape.value(x).shape().to_vec();
        assert_eq!(shape.len(), 4, "conv input must be NHWC");
        assert_eq!(shape[3], self.cin, "conv expected {} input channels", self.cin);
        let (n, h, w) = (shape[0], shape[1], shape[2]);
        let oh = conv_out_dim(h, self.k, self.stride, self.pad);
        let ow = conv_out_dim(w, self.k, self.stride, self.pad);
        let cols = tape.im2col(x, self.k, self.stride, self.pad);
        let out = tape.matmul(cols, bp.var(self.w));
        let bias = tape.reshape(bp.var(self.b), &[1, self.cout]);
        let bias = tape.broadcast_to(bias, &[n * oh * ow, self.cout]);
        let out = tape.add(out, bias);
        tape.reshape(out, &[n, oh, ow, self.cout])
    }
}

/// Fully connected layer on `(N, in)` inputs.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamRef,
    pub b: ParamRef,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Self {
        let std = (2.0 / in_features as f64).sqrt();
        let w = ps.add(&format!("{name}.w"), Tensor::randn(&[in_features, out_features], std, rng));
        let b = ps.add(&format!("{name}.b"), Tensor::zeros(&[out_features]));
        Self { w, b, in_features, out_features }
    }

    pub fn forward(&self, tape: &mut Tape, bp: &BoundParams, x: Var) -> Var {
        let shape = tape.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2, "dense input must be (N, features)");
        assert_eq!(shape[1], self.in_features);
        let out = tape.matmul(x, bp.var(self.w));
        let bias = tape.reshape(bp.var(self.b), &[1, self.out_features]);
        let bias = tape.broadcast_to(bias, &[shape[0], self.out_features]);
        tape.add(out, bias)
    }
}

/// Instance normalization: per-sample, per-channel over spatial dims, with
/// learned scale and shift. Composed from primitive ops so it differentiates
/// like everything else.
#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gamma: ParamRef,
    pub beta: ParamRef,
    pub c: usize,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(ps: &mut ParamSet, name: &str, c: usize) -> Self {
        let gamma = ps.add(&format!("{name}.gamma"), Tensor::full(&[c], 1.0));
        let beta = ps.add(&format!("{name}.beta"), Tensor::zeros(&[c]));
        Self { gamma, beta, c, eps: 1e-5 }
    }

    pub fn forward(&self, tape: &mut Tape, bp: &BoundParams, x: Var) -> Var {
        let shape = tape.value(x).shape().to_vec();
        assert_eq!(shape.len(), 4, "instance norm input must be NHWC");
        assert_eq!(shape[3], self.c);
        let hw = (shape[1] * shape[2]) as f64;
        let mean = tape.sum_axes(x, &[1, 2], true);
        let mean = tape.scale(mean, 1.0 / hw);
        let mean_b = tape.broadcast_to(mean, &shape);
        let centered = tape.sub(x, mean_b);
        let sq = tape.mul(centered, centered);
        let var = tape.sum_axes(sq, &[1, 2], true);
        let var = tape.scale(var, 1.0 / hw);
        let var_eps = tape.shift(var, self.eps);
        let std = tape.sqrt(var_eps);
        let std_b = tape.broadcast_to(std, &shape);
        let normed = tape.div(centered, std_b);
        let gamma = tape.reshape(bp.var(self.gamma), &[1, 1, 1, self.c]);
        let gamma = tape.broadcast_to(gamma, &shape);
        let beta = tape.reshape(bp.var(self.beta), &[1, 1, 1, self.c]);
        let beta = tape.broadcast_to(beta, &shape);
        let scaled = tape.mul(normed, gamma);
        tape.add(scaled, beta)
    }
}

/// conv-norm-relu-conv-norm plus the skip connection, channels preserved.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub norm1: InstanceNorm,
    pub conv2: Conv2d,
    pub norm2: InstanceNorm,
}

impl ResidualBlock {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, c: usize) -> Self {
        Self {
            conv1: Conv2d::new(ps, rng, &format!("{name}.conv1"), c, c, 3, 1, 1),
            norm1: InstanceNorm::new(ps, &format!("{name}.norm1"), c),
            conv2: Conv2d::new(ps, rng, &format!("{name}.conv2"), c, c, 3, 1, 1),
            norm2: InstanceNorm::new(ps, &format!("{name}.norm2"), c),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bp: &BoundParams, x: Var) -> Var {
        let h = self.conv1.forward(tape, bp, x);
        let h = self.norm1.forward(tape, bp, h);
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, bp, h);
        let h = self.norm2.forward(tape, bp, h);
        tape.add(x, h)
    }
}

/// Global average pool NHWC -> (N, C).
pub fn global_avg_pool(tape: &mut Tape, x: Var) -> Var {
    let shape = tape.value(x).shape().to_vec();
    assert_eq!(shape.len(), 4);
    let hw = (shape[1] * shape[2]) as f64;
    let s = tape.sum_axes(x, &[1, 2], false);
    tape.scale(s, 1.0 / hw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn conv_shapes_and_bias() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        let conv = Conv2d::new(&mut ps, &mut rng, "c", 3, 5, 3, 2, 1);
        // Zero weights, bias picks the output value.
        for v in ps.get_mut(conv.w).data_mut() {
            *v = 0.0;
        }
        ps.get_mut(conv.b).data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut tape = Tape::new();
        let bp = ps.bind(&mut tape);
        let x = tape.leaf(Tensor::full(&[2, 8, 8, 3], 0.7));
        let y = conv.forward(&mut tape, &bp, x);
        assert_eq!(tape.value(y).shape(), &[2, 4, 4, 5]);
        assert_eq!(&tape.value(y).data()[..5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let mut ps = ParamSet::new();
        let norm = InstanceNorm::new(&mut ps, "n", 2);
        let mut tape = Tape::new();
        let bp = ps.bind(&mut tape);
        let data: Vec<f64> = (0..32).map(|i| (i as f64) * 0.37 - 3.0).collect();
        let x = tape.leaf(Tensor::new(&[1, 4, 4, 2], data));
        let y = norm.forward(&mut tape, &bp, x);
        let out = tape.value(y);
        for c in 0..2 {
            let vals: Vec<f64> = out.data().iter().skip(c).step_by(2).copied().collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn residual_block_preserves_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let block = ResidualBlock::new(&mut ps, &mut rng, "r", 4);
        let mut tape = Tape::new();
        let bp = ps.bind(&mut tape);
        let x = tape.leaf(Tensor::full(&[1, 6, 6, 4], 0.1));
        let y = block.forward(&mut tape, &bp, x);
        assert_eq!(tape.value(y).shape(), &[1, 6, 6, 4]);
    }
}
