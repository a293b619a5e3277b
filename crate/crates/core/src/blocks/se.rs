//! Squeeze-and-excitation channel recalibration, the squeezed convolutional
//! block built from it, and the efficient-channel-attention variant used for
//! comparison.

use rand::Rng;

use super::{matvec, scale_channels, seeded_bn, seeded_conv, uniform_weights};
use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{
    batchnorm_inference, conv2d, global_avg_pool, relu, sigmoid, silu_map, BatchNormParams,
    ConvParams, FeatureMap,
};
use crate::{Error, Result, Scalar};

/// Bottleneck weights of the squeeze-and-excitation gate: `W1 ∈ R^{C/r×C}`
/// followed by ReLU, `W2 ∈ R^{C×C/r}` followed by sigmoid.
#[derive(Debug, Clone)]
pub struct SEParams<T: Scalar> {
    pub channels: usize,
    pub reduction: usize,
    pub w1: Vec<T>,
    pub w2: Vec<T>,
}

impl<T: Scalar> SEParams<T> {
    pub fn new(channels: usize, reduction: usize, w1: Vec<T>, w2: Vec<T>) -> Result<Self> {
        if reduction == 0 {
            return Err(Error::param("se reduction must be >= 1"));
        }
        if channels == 0 || channels % reduction != 0 {
            return Err(Error::param(format!(
                "se reduction {reduction} must divide channels {channels}"
            )));
        }
        let mid = channels / reduction;
        if w1.len() != mid * channels {
            return Err(Error::shape(format!(
                "se W1 length {} does not match (C/r x C) = {}",
                w1.len(),
                mid * channels
            )));
        }
        if w2.len() != channels * mid {
            return Err(Error::shape(format!(
                "se W2 length {} does not match (C x C/r) = {}",
                w2.len(),
                channels * mid
            )));
        }
        Ok(Self {
            channels,
            reduction,
            w1,
            w2,
        })
    }

    pub fn seeded(channels: usize, reduction: usize, rng: &mut impl Rng) -> Result<Self> {
        let mid = channels
            .checked_div(reduction)
            .filter(|_| reduction > 0 && channels % reduction == 0)
            .ok_or_else(|| {
                Error::param(format!(
                    "se reduction {reduction} must divide channels {channels}"
                ))
            })?;
        let w1 = uniform_weights(rng, mid * channels);
        let w2 = uniform_weights(rng, channels * mid);
        Self::new(channels, reduction, w1, w2)
    }

    pub fn mid(&self) -> usize {
        self.channels / self.reduction
    }

    pub fn param_count(&self) -> u64 {
        (self.w1.len() + self.w2.len()) as u64
    }

    /// Per-batch-item gate vector `sigmoid(W2 · relu(W1 · z))`.
    fn gates(&self, x: &FeatureMap<T>) -> Result<Vec<T>> {
        let z = global_avg_pool(x)?;
        let n = x.batch();
        let c = self.channels;
        let mid = self.mid();
        let mut gates = Vec::with_capacity(n * c);
        for b in 0..n {
            let zb = &z[b * c..(b + 1) * c];
            let mut hidden = matvec(&self.w1, mid, c, zb);
            for v in &mut hidden {
                *v = relu(*v);
            }
            let mut s = matvec(&self.w2, c, mid, &hidden);
            for v in &mut s {
                *v = sigmoid(*v);
            }
            gates.extend(s);
        }
        Ok(gates)
    }

    pub fn lower(&self, h: usize, w: usize) -> Vec<PrimitiveOp> {
        let mid = self.mid();
        vec![
            PrimitiveOp::Ops {
                name: "se_avg_pool",
                count: (self.channels * h * w) as u64,
            },
            // the two FC layers are 1x1 convolutions on a 1x1 map
            PrimitiveOp::conv(self.channels, mid, 1, 1, 1, false, 1, 1),
            PrimitiveOp::conv(mid, self.channels, 1, 1, 1, false, 1, 1),
            PrimitiveOp::Ops {
                name: "se_gate",
                count: (mid + self.channels + self.channels * h * w) as u64,
            },
        ]
    }
}

/// Channel-wise recalibration: every channel of every batch item is scaled
/// by its gate `s_c ∈ (0, 1)`.
pub fn se_forward<T: Scalar>(x: &FeatureMap<T>, p: &SEParams<T>) -> Result<FeatureMap<T>> {
    if x.channels() != p.channels {
        return Err(Error::shape(format!(
            "se: input has {} channels, params expect {}",
            x.channels(),
            p.channels
        )));
    }
    Ok(scale_channels(x, &p.gates(x)?))
}

/// Convolution + batch norm + SiLU + squeeze-and-excitation.
#[derive(Debug, Clone)]
pub struct SEConvBlock<T: Scalar> {
    pub conv: ConvParams<T>,
    pub bn: BatchNormParams<T>,
    pub se: SEParams<T>,
}

impl<T: Scalar> SEConvBlock<T> {
    pub fn new(conv: ConvParams<T>, bn: BatchNormParams<T>, se: SEParams<T>) -> Result<Self> {
        if bn.channels() != conv.out_channels {
            return Err(Error::shape(format!(
                "seconvblock batchnorm stage: {} channels, conv stage emits {}",
                bn.channels(),
                conv.out_channels
            )));
        }
        if se.channels != conv.out_channels {
            return Err(Error::shape(format!(
                "seconvblock se stage: {} channels, conv stage emits {}",
                se.channels, conv.out_channels
            )));
        }
        Ok(Self { conv, bn, se })
    }

    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        reduction: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv = seeded_conv(
            rng,
            in_channels,
            out_channels,
            (kernel, kernel),
            stride,
            kernel / 2,
            1,
            false,
        )?;
        let bn = seeded_bn(rng, out_channels);
        let se = SEParams::seeded(out_channels, reduction, rng)?;
        Self::new(conv, bn, se)
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        seconvblock_forward(x, &self.conv, &self.bn, &self.se)
    }

    pub fn param_count(&self) -> u64 {
        self.conv.weight_count()
            + self.conv.bias_count()
            + self.bn.param_count()
            + self.se.param_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (ho, wo) = self.conv.output_hw(h, w)?;
        let c = self.conv.out_channels;
        let mut ops = vec![
            PrimitiveOp::conv(
                self.conv.in_channels,
                c,
                self.conv.kernel.0,
                self.conv.kernel.1,
                self.conv.groups,
                self.conv.bias.is_some(),
                ho,
                wo,
            ),
            PrimitiveOp::BatchNorm {
                channels: c,
                h: ho,
                w: wo,
            },
            PrimitiveOp::Ops {
                name: "silu",
                count: (c * ho * wo) as u64,
            },
        ];
        ops.extend(self.se.lower(ho, wo));
        Ok(ops)
    }
}

/// `SE(silu(BN(conv(x))))` with each stage mismatch named.
pub fn seconvblock_forward<T: Scalar>(
    x: &FeatureMap<T>,
    conv: &ConvParams<T>,
    bn: &BatchNormParams<T>,
    se: &SEParams<T>,
) -> Result<FeatureMap<T>> {
    let y = conv2d(x, conv).map_err(|e| Error::shape(format!("seconvblock conv stage: {e}")))?;
    let y = batchnorm_inference(&y, bn)
        .map_err(|e| Error::shape(format!("seconvblock batchnorm stage: {e}")))?;
    let y = silu_map(&y);
    se_forward(&y, se).map_err(|e| Error::shape(format!("seconvblock se stage: {e}")))
}

/// Efficient channel attention: a k-tap 1-D convolution shared across the
/// squeeze vector (zero padded, no wrap-around), sigmoid gated. Adds exactly
/// `k` learnable parameters.
#[derive(Debug, Clone)]
pub struct EcaParams<T: Scalar> {
    pub kernel: Vec<T>,
}

impl<T: Scalar> EcaParams<T> {
    pub fn new(kernel: Vec<T>) -> Result<Self> {
        if kernel.is_empty() || kernel.len() % 2 == 0 {
            return Err(Error::param(format!(
                "eca kernel size {} must be odd",
                kernel.len()
            )));
        }
        Ok(Self { kernel })
    }

    pub fn seeded(k: usize, rng: &mut impl Rng) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::param(format!("eca kernel size {k} must be odd")));
        }
        Self::new(uniform_weights(rng, k))
    }

    pub fn param_count(&self) -> u64 {
        self.kernel.len() as u64
    }

    pub fn lower(&self, channels: usize, h: usize, w: usize) -> Vec<PrimitiveOp> {
        vec![
            PrimitiveOp::Ops {
                name: "eca_avg_pool",
                count: (channels * h * w) as u64,
            },
            // k-tap 1-D convolution along the channel axis
            PrimitiveOp::conv(1, 1, 1, self.kernel.len(), 1, false, 1, channels),
            PrimitiveOp::Ops {
                name: "eca_gate",
                count: (channels + channels * h * w) as u64,
            },
        ]
    }
}

pub fn eca_forward<T: Scalar>(x: &FeatureMap<T>, p: &EcaParams<T>) -> Result<FeatureMap<T>> {
    let (n, c, _, _) = x.shape();
    let k = p.kernel.len();
    let half = (k / 2) as isize;
    let z = global_avg_pool(x)?;
    let mut gates = Vec::with_capacity(n * c);
    for b in 0..n {
        let zb = &z[b * c..(b + 1) * c];
        for i in 0..c {
            let mut acc = T::zero();
            for (j, &wj) in p.kernel.iter().enumerate() {
                let src = i as isize + j as isize - half;
                if src >= 0 && (src as usize) < c {
                    acc = acc + wj * zb[src as usize];
                }
            }
            gates.push(sigmoid(acc));
        }
    }
    Ok(scale_channels(x, &gates))
}
