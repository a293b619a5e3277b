//! Model-complexity accounting: parameter counts, FLOPs, and FPS.
//!
//! The headline figures follow the per-convolution formulas
//! `#params = Σ (C_in/g · K_h · K_w) · C_out` and
//! `FLOPs = Σ 2 · C_in/g · K_h · K_w · C_out · H_out · W_out`
//! (multiply-accumulate counted as 2, convolution layers only). Everything
//! else — biases, batch-norm scale/shift, activations, pools, softmax,
//! reassembly sums — is tracked separately and folded into an extended
//! figure, so the headline stays comparable with the usual GFLOPs columns.

use crate::Scalar;

/// One primitive operation of a lowered network, with resolved output shape.
///
/// Blocks describe themselves as a flat list of these; the counters below
/// never look inside block structs.
#[derive(Debug, Clone)]
pub enum PrimitiveOp {
    Conv {
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        groups: usize,
        bias: bool,
        h_out: usize,
        w_out: usize,
        /// Re-application of weights counted elsewhere (shared tensors):
        /// contributes FLOPs but no parameters.
        shared_weights: bool,
    },
    BatchNorm {
        channels: usize,
        h: usize,
        w: usize,
    },
    /// Parameter-free elementwise / reduction work (activations, gates,
    /// pools, softmax, reassembly), pre-counted in scalar operations.
    Ops { name: &'static str, count: u64 },
}

impl PrimitiveOp {
    pub fn conv(
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        groups: usize,
        bias: bool,
        h_out: usize,
        w_out: usize,
    ) -> Self {
        PrimitiveOp::Conv {
            c_in,
            c_out,
            kh,
            kw,
            groups,
            bias,
            h_out,
            w_out,
            shared_weights: false,
        }
    }

    /// Parameters by the paper convolution formula (weights only, grouped
    /// convs divide `C_in` by groups).
    pub fn params_weights(&self) -> u64 {
        match *self {
            PrimitiveOp::Conv {
                c_in,
                c_out,
                kh,
                kw,
                groups,
                shared_weights,
                ..
            } => {
                if shared_weights {
                    0
                } else {
                    (c_in / groups) as u64 * kh as u64 * kw as u64 * c_out as u64
                }
            }
            _ => 0,
        }
    }

    pub fn params_bias(&self) -> u64 {
        match *self {
            PrimitiveOp::Conv {
                c_out,
                bias,
                shared_weights,
                ..
            } if bias && !shared_weights => c_out as u64,
            _ => 0,
        }
    }

    pub fn params_bn(&self) -> u64 {
        match *self {
            PrimitiveOp::BatchNorm { channels, .. } => 2 * channels as u64,
            _ => 0,
        }
    }

    /// FLOPs by the paper formula: convolutions only, 2 per MAC.
    pub fn flops_paper(&self) -> u64 {
        match *self {
            PrimitiveOp::Conv {
                c_in,
                c_out,
                kh,
                kw,
                groups,
                h_out,
                w_out,
                ..
            } => {
                2 * (c_in / groups) as u64
                    * kh as u64
                    * kw as u64
                    * c_out as u64
                    * h_out as u64
                    * w_out as u64
            }
            _ => 0,
        }
    }

    /// Everything on top of the paper figure: bias adds, batch-norm
    /// scale/shift (2 per element), and pre-counted elementwise work.
    pub fn flops_extra(&self) -> u64 {
        match *self {
            PrimitiveOp::Conv {
                c_out,
                bias,
                h_out,
                w_out,
                ..
            } => {
                if bias {
                    c_out as u64 * h_out as u64 * w_out as u64
                } else {
                    0
                }
            }
            PrimitiveOp::BatchNorm { channels, h, w } => 2 * channels as u64 * h as u64 * w as u64,
            PrimitiveOp::Ops { count, .. } => count,
        }
    }
}

/// Aggregated parameter/FLOPs figures for a list of primitives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCost {
    pub params_weights: u64,
    pub params_bias: u64,
    pub params_bn: u64,
    pub flops_paper: u64,
    pub flops_extra: u64,
}

impl LayerCost {
    pub fn accumulate(&mut self, op: &PrimitiveOp) {
        self.params_weights += op.params_weights();
        self.params_bias += op.params_bias();
        self.params_bn += op.params_bn();
        self.flops_paper += op.flops_paper();
        self.flops_extra += op.flops_extra();
    }

    /// Parameters by the paper formula (conv weights only).
    pub fn params_paper(&self) -> u64 {
        self.params_weights
    }

    /// All learnable parameters: weights + biases + batch-norm terms.
    pub fn params_total(&self) -> u64 {
        self.params_weights + self.params_bias + self.params_bn
    }

    pub fn flops_extended(&self) -> u64 {
        self.flops_paper + self.flops_extra
    }

    pub fn add(&mut self, other: &LayerCost) {
        self.params_weights += other.params_weights;
        self.params_bias += other.params_bias;
        self.params_bn += other.params_bn;
        self.flops_paper += other.flops_paper;
        self.flops_extra += other.flops_extra;
    }
}

/// Cost of a primitive list.
pub fn cost_of(ops: &[PrimitiveOp]) -> LayerCost {
    let mut cost = LayerCost::default();
    for op in ops {
        cost.accumulate(op);
    }
    cost
}

/// Paper-formula parameter total of a primitive list.
pub fn count_parameters(ops: &[PrimitiveOp]) -> u64 {
    cost_of(ops).params_paper()
}

/// Paper-formula FLOPs total of a primitive list.
pub fn count_flops(ops: &[PrimitiveOp]) -> u64 {
    cost_of(ops).flops_paper
}

/// Images per second given a measured batch.
pub fn fps<T: Scalar>(n_images: u64, elapsed_seconds: T) -> T {
    T::from_u64(n_images).expect("image count representable") / elapsed_seconds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_paper_figures() {
        // 3 -> 16 channels, 3x3 kernel, 320x320 output
        let op = PrimitiveOp::conv(3, 16, 3, 3, 1, false, 320, 320);
        assert_eq!(op.params_weights(), 432);
        assert_eq!(op.flops_paper(), 88_473_600);
    }

    #[test]
    fn grouped_conv_divides_input_channels() {
        let op = PrimitiveOp::conv(64, 64, 3, 3, 64, false, 10, 10);
        assert_eq!(op.params_weights(), 64 * 9);
        assert_eq!(op.flops_paper(), 2 * 9 * 64 * 100);
    }

    #[test]
    fn bias_and_bn_reported_separately() {
        let ops = [
            PrimitiveOp::Conv {
                c_in: 4,
                c_out: 8,
                kh: 1,
                kw: 1,
                groups: 1,
                bias: true,
                h_out: 5,
                w_out: 5,
                shared_weights: false,
            },
            PrimitiveOp::BatchNorm {
                channels: 8,
                h: 5,
                w: 5,
            },
        ];
        let cost = cost_of(&ops);
        assert_eq!(cost.params_paper(), 32);
        assert_eq!(cost.params_bias, 8);
        assert_eq!(cost.params_bn, 16);
        assert_eq!(cost.params_total(), 32 + 8 + 16);
        assert_eq!(cost.flops_paper, 2 * 4 * 8 * 25);
        assert_eq!(cost.flops_extended(), cost.flops_paper + 8 * 25 + 2 * 8 * 25);
    }

    #[test]
    fn shared_weights_cost_flops_not_params() {
        let mut op = PrimitiveOp::conv(4, 8, 1, 1, 1, false, 1, 1);
        if let PrimitiveOp::Conv { shared_weights, .. } = &mut op {
            *shared_weights = true;
        }
        assert_eq!(op.params_weights(), 0);
        assert_eq!(op.flops_paper(), 2 * 4 * 8);
    }

    #[test]
    fn fps_is_count_over_time() {
        assert_eq!(fps::<f64>(100, 2.0), 50.0);
    }
}
