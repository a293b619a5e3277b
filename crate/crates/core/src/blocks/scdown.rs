//! Spatial-channel decoupled downsampling: a point-wise channel reduction
//! (`1×1` conv + BN + SiLU) followed by a depth-wise strided convolution
//! (BN, no activation).

use rand::Rng;

use super::{seeded_bn, seeded_conv};
use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{batchnorm_inference, conv2d, silu_map, BatchNormParams, ConvParams, FeatureMap};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone)]
pub struct SCDownParams<T: Scalar> {
    pub c1: usize,
    pub c2: usize,
    pub k: usize,
    pub stride: usize,
    pub pw: ConvParams<T>,
    pub pw_bn: BatchNormParams<T>,
    /// Depth-wise: groups == c2.
    pub dw: ConvParams<T>,
    pub dw_bn: BatchNormParams<T>,
}

impl<T: Scalar> SCDownParams<T> {
    pub fn new(
        pw: ConvParams<T>,
        pw_bn: BatchNormParams<T>,
        dw: ConvParams<T>,
        dw_bn: BatchNormParams<T>,
    ) -> Result<Self> {
        if pw.kernel != (1, 1) {
            return Err(Error::param("scdown point-wise stage must be 1x1"));
        }
        if dw.groups != dw.out_channels || dw.in_channels != dw.out_channels {
            return Err(Error::param(format!(
                "scdown depth-wise stage must have groups == channels, got groups {} over {} channels",
                dw.groups, dw.out_channels
            )));
        }
        if pw.out_channels != dw.in_channels {
            return Err(Error::shape(format!(
                "scdown stages disagree: point-wise emits {}, depth-wise expects {}",
                pw.out_channels, dw.in_channels
            )));
        }
        if pw_bn.channels() != pw.out_channels || dw_bn.channels() != dw.out_channels {
            return Err(Error::shape("scdown batchnorm channels mismatch"));
        }
        Ok(Self {
            c1: pw.in_channels,
            c2: dw.out_channels,
            k: dw.kernel.0,
            stride: dw.stride,
            pw,
            pw_bn,
            dw,
            dw_bn,
        })
    }

    pub fn seeded(
        c1: usize,
        c2: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let pw = seeded_conv(rng, c1, c2, (1, 1), 1, 0, 1, false)?;
        let pw_bn = seeded_bn(rng, c2);
        let dw = seeded_conv(rng, c2, c2, (k, k), stride, k / 2, c2, false)?;
        let dw_bn = seeded_bn(rng, c2);
        Self::new(pw, pw_bn, dw, dw_bn)
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        scdown_forward(x, self)
    }

    pub fn param_count(&self) -> u64 {
        self.pw.weight_count()
            + self.pw.bias_count()
            + self.pw_bn.param_count()
            + self.dw.weight_count()
            + self.dw.bias_count()
            + self.dw_bn.param_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (ho, wo) = self.dw.output_hw(h, w)?;
        Ok(vec![
            PrimitiveOp::conv(self.c1, self.c2, 1, 1, 1, self.pw.bias.is_some(), h, w),
            PrimitiveOp::BatchNorm {
                channels: self.c2,
                h,
                w,
            },
            PrimitiveOp::Ops {
                name: "silu",
                count: (self.c2 * h * w) as u64,
            },
            PrimitiveOp::conv(
                self.c2,
                self.c2,
                self.k,
                self.k,
                self.c2,
                self.dw.bias.is_some(),
                ho,
                wo,
            ),
            PrimitiveOp::BatchNorm {
                channels: self.c2,
                h: ho,
                w: wo,
            },
        ])
    }
}

/// `DWConv(PConv(x))`; spatial extents must divide by the stride.
pub fn scdown_forward<T: Scalar>(x: &FeatureMap<T>, p: &SCDownParams<T>) -> Result<FeatureMap<T>> {
    let (_, c, h, w) = x.shape();
    if c != p.c1 {
        return Err(Error::shape(format!(
            "scdown: input has {c} channels, expected c1 = {}",
            p.c1
        )));
    }
    if h % p.stride != 0 || w % p.stride != 0 {
        return Err(Error::shape(format!(
            "scdown: spatial extents {h}x{w} not divisible by stride {}",
            p.stride
        )));
    }
    let y = silu_map(&batchnorm_inference(&conv2d(x, &p.pw)?, &p.pw_bn)?);
    batchnorm_inference(&conv2d(&y, &p.dw)?, &p.dw_bn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_map(rng: &mut StdRng, n: usize, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        let data = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMap::new(n, c, h, w, data).unwrap()
    }

    #[test]
    fn identity_composition_is_identity() {
        // c1 == c2, identity point-wise weights, identity-center depth-wise
        // kernels, stride 1, neutral BN; inputs large enough that the
        // point-wise SiLU is saturated into the identity
        let c = 3;
        let pw = ConvParams::<f64>::identity_1x1(c);
        let mut dw_w = vec![0.0f64; c * 9];
        for ch in 0..c {
            dw_w[ch * 9 + 4] = 1.0;
        }
        let dw = ConvParams::new(c, c, (3, 3), 1, 1, c, dw_w, None).unwrap();
        let p = SCDownParams::new(
            pw,
            BatchNormParams::identity(c),
            dw,
            BatchNormParams::identity(c),
        )
        .unwrap();
        // large positive values: sigmoid saturates and silu(x) -> x
        let x = FeatureMap::full(1, c, 4, 4, 40.0);
        let y = p.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn conv_weight_counts_match_formula() {
        let mut rng = StdRng::seed_from_u64(30);
        let p = SCDownParams::<f64>::seeded(64, 128, 3, 2, &mut rng).unwrap();
        // point-wise c1*c2 plus depth-wise c2*k^2 weights
        assert_eq!(p.pw.weight_count(), 64 * 128);
        assert_eq!(p.dw.weight_count(), 128 * 9);
        assert_eq!(p.param_count(), 8192 + 1152 + 2 * 2 * 128);
        let lowered: u64 = p
            .lower(16, 16)
            .unwrap()
            .iter()
            .map(|o| o.params_weights() + o.params_bias() + o.params_bn())
            .sum();
        assert_eq!(lowered, p.param_count());
    }

    #[test]
    fn matches_two_stage_composition_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        let x = random_map(&mut rng, 2, 4, 6, 6);
        let p = SCDownParams::<f64>::seeded(4, 8, 3, 2, &mut rng).unwrap();
        let y = p.forward(&x).unwrap();
        assert_eq!(y.shape(), (2, 8, 3, 3));
        let stage1 =
            silu_map(&batchnorm_inference(&conv2d(&x, &p.pw).unwrap(), &p.pw_bn).unwrap());
        let stage2 =
            batchnorm_inference(&conv2d(&stage1, &p.dw).unwrap(), &p.dw_bn).unwrap();
        assert_eq!(y, stage2);
    }

    #[test]
    fn rejects_indivisible_extents() {
        let mut rng = StdRng::seed_from_u64(32);
        let p = SCDownParams::<f64>::seeded(4, 8, 3, 2, &mut rng).unwrap();
        let x = FeatureMap::<f64>::zeros(1, 4, 5, 6);
        let err = p.forward(&x).unwrap_err().to_string();
        assert!(err.contains("not divisible"), "{err}");
    }
}
