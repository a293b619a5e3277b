//! Standard composites inherited from the YOLO11 baseline: ConvBlock
//! (conv + BN + SiLU), the CSP-style C3k2 bottleneck stack, SPPF pyramid
//! pooling, channel concat, and nearest-neighbor upsampling. Structural
//! hyperparameters (bottleneck counts, hidden ratio 0.5) are configuration
//! data carried by the constructors, mirroring the public reference
//! structure.

use rand::Rng;

use super::{add_maps, seeded_bn, seeded_conv};
use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{
    batchnorm_inference, conv2d, maxpool2d, silu_map, BatchNormParams, ConvParams, FeatureMap,
};
use crate::{Error, Result, Scalar};

/// Convolution + batch norm + SiLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Scalar> {
    pub conv: ConvParams<T>,
    pub bn: BatchNormParams<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new(conv: ConvParams<T>, bn: BatchNormParams<T>) -> Result<Self> {
        if bn.channels() != conv.out_channels {
            return Err(Error::shape(format!(
                "convblock batchnorm has {} channels, conv emits {}",
                bn.channels(),
                conv.out_channels
            )));
        }
        Ok(Self { conv, bn })
    }

    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::seeded_grouped(in_channels, out_channels, kernel, stride, 1, rng)
    }

    pub fn seeded_grouped(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv = seeded_conv(
            rng,
            in_channels,
            out_channels,
            (kernel, kernel),
            stride,
            kernel / 2,
            groups,
            false,
        )?;
        let bn = seeded_bn(rng, out_channels);
        Self::new(conv, bn)
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        convblock_forward(x, &self.conv, &self.bn)
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    pub fn param_count(&self) -> u64 {
        self.conv.weight_count() + self.conv.bias_count() + self.bn.param_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<(Vec<PrimitiveOp>, (usize, usize))> {
        let (ho, wo) = self.conv.output_hw(h, w)?;
        let ops = vec![
            PrimitiveOp::conv(
                self.conv.in_channels,
                self.conv.out_channels,
                self.conv.kernel.0,
                self.conv.kernel.1,
                self.conv.groups,
                self.conv.bias.is_some(),
                ho,
                wo,
            ),
            PrimitiveOp::BatchNorm {
                channels: self.conv.out_channels,
                h: ho,
                w: wo,
            },
            PrimitiveOp::Ops {
                name: "silu",
                count: (self.conv.out_channels * ho * wo) as u64,
            },
        ];
        Ok((ops, (ho, wo)))
    }
}

pub fn convblock_forward<T: Scalar>(
    x: &FeatureMap<T>,
    conv: &ConvParams<T>,
    bn: &BatchNormParams<T>,
) -> Result<FeatureMap<T>> {
    Ok(silu_map(&batchnorm_inference(&conv2d(x, conv)?, bn)?))
}

/// Two ConvBlocks with an optional residual add when channels match.
#[derive(Debug, Clone)]
pub struct Bottleneck<T: Scalar> {
    pub cv1: ConvBlock<T>,
    pub cv2: ConvBlock<T>,
    pub shortcut: bool,
}

impl<T: Scalar> Bottleneck<T> {
    /// `hidden = round(c_out · e)`; kernels `(k1, k2)`.
    pub fn seeded(
        c_in: usize,
        c_out: usize,
        k1: usize,
        k2: usize,
        e: f64,
        shortcut: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let hidden = ((c_out as f64 * e) as usize).max(1);
        Ok(Self {
            cv1: ConvBlock::seeded(c_in, hidden, k1, 1, rng)?,
            cv2: ConvBlock::seeded(hidden, c_out, k2, 1, rng)?,
            shortcut: shortcut && c_in == c_out,
        })
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let y = self.cv2.forward(&self.cv1.forward(x)?)?;
        if self.shortcut {
            add_maps(x, &y)
        } else {
            Ok(y)
        }
    }

    pub fn param_count(&self) -> u64 {
        self.cv1.param_count() + self.cv2.param_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (mut ops, (h1, w1)) = self.cv1.lower(h, w)?;
        let (ops2, _) = self.cv2.lower(h1, w1)?;
        ops.extend(ops2);
        if self.shortcut {
            ops.push(PrimitiveOp::Ops {
                name: "residual_add",
                count: (self.cv2.out_channels() * h * w) as u64,
            });
        }
        Ok(ops)
    }
}

/// Inner C3 stack used when the `c3k` flag is set: split through two 1×1
/// branches, a serial pair of 3×3 bottlenecks, concat, 1×1 merge.
#[derive(Debug, Clone)]
struct C3kInner<T: Scalar> {
    cv1: ConvBlock<T>,
    cv2: ConvBlock<T>,
    cv3: ConvBlock<T>,
    m: Vec<Bottleneck<T>>,
}

impl<T: Scalar> C3kInner<T> {
    fn seeded(c_in: usize, c_out: usize, n: usize, shortcut: bool, rng: &mut impl Rng) -> Result<Self> {
        let hidden = (c_out / 2).max(1);
        let m = (0..n)
            .map(|_| Bottleneck::seeded(hidden, hidden, 3, 3, 1.0, shortcut, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cv1: ConvBlock::seeded(c_in, hidden, 1, 1, rng)?,
            cv2: ConvBlock::seeded(c_in, hidden, 1, 1, rng)?,
            cv3: ConvBlock::seeded(2 * hidden, c_out, 1, 1, rng)?,
            m,
        })
    }

    fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let mut main = self.cv1.forward(x)?;
        for b in &self.m {
            main = b.forward(&main)?;
        }
        let side = self.cv2.forward(x)?;
        self.cv3.forward(&concat(&[&main, &side])?)
    }

    fn param_count(&self) -> u64 {
        self.cv1.param_count()
            + self.cv2.param_count()
            + self.cv3.param_count()
            + self.m.iter().map(Bottleneck::param_count).sum::<u64>()
    }

    fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (mut ops, _) = self.cv1.lower(h, w)?;
        for b in &self.m {
            ops.extend(b.lower(h, w)?);
        }
        ops.extend(self.cv2.lower(h, w)?.0);
        ops.extend(self.cv3.lower(h, w)?.0);
        Ok(ops)
    }
}

enum C3k2Stage<T: Scalar> {
    Plain(Bottleneck<T>),
    C3k(C3kInner<T>),
}

impl<T: Scalar> C3k2Stage<T> {
    fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        match self {
            C3k2Stage::Plain(b) => b.forward(x),
            C3k2Stage::C3k(c) => c.forward(x),
        }
    }

    fn param_count(&self) -> u64 {
        match self {
            C3k2Stage::Plain(b) => b.param_count(),
            C3k2Stage::C3k(c) => c.param_count(),
        }
    }

    fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        match self {
            C3k2Stage::Plain(b) => b.lower(h, w),
            C3k2Stage::C3k(c) => c.lower(h, w),
        }
    }
}

/// CSP bottleneck stack: a 1×1 expansion split into two chunks, `n` stages
/// each feeding the next (plain bottlenecks, or C3 stacks under the `c3k`
/// flag), everything concatenated into a 1×1 merge.
pub struct C3k2<T: Scalar> {
    pub c_in: usize,
    pub c_out: usize,
    chunk: usize,
    cv1: ConvBlock<T>,
    cv2: ConvBlock<T>,
    stages: Vec<C3k2Stage<T>>,
}

impl<T: Scalar> C3k2<T> {
    pub fn seeded(
        c_in: usize,
        c_out: usize,
        n: usize,
        c3k: bool,
        e: f64,
        shortcut: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("c3k2 needs at least one stage"));
        }
        let chunk = ((c_out as f64 * e) as usize).max(1);
        let cv1 = ConvBlock::seeded(c_in, 2 * chunk, 1, 1, rng)?;
        let stages = (0..n)
            .map(|_| {
                Ok(if c3k {
                    C3k2Stage::C3k(C3kInner::seeded(chunk, chunk, 2, shortcut, rng)?)
                } else {
                    C3k2Stage::Plain(Bottleneck::seeded(
                        chunk, chunk, 3, 3, 0.5, shortcut, rng,
                    )?)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cv2 = ConvBlock::seeded((2 + n) * chunk, c_out, 1, 1, rng)?;
        Ok(Self {
            c_in,
            c_out,
            chunk,
            cv1,
            cv2,
            stages,
        })
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let expanded = self.cv1.forward(x)?;
        let (n, _, h, w) = expanded.shape();
        let mut chunks: Vec<FeatureMap<T>> = Vec::with_capacity(2 + self.stages.len());
        for half in 0..2 {
            let mut part = FeatureMap::zeros(n, self.chunk, h, w);
            for b in 0..n {
                for c in 0..self.chunk {
                    for y in 0..h {
                        for xx in 0..w {
                            *part.at_mut(b, c, y, xx) =
                                expanded.at(b, half * self.chunk + c, y, xx);
                        }
                    }
                }
            }
            chunks.push(part);
        }
        for stage in &self.stages {
            let next = stage.forward(chunks.last().expect("chunks never empty"))?;
            chunks.push(next);
        }
        let refs: Vec<&FeatureMap<T>> = chunks.iter().collect();
        self.cv2.forward(&concat(&refs)?)
    }

    pub fn param_count(&self) -> u64 {
        self.cv1.param_count()
            + self.cv2.param_count()
            + self.stages.iter().map(C3k2Stage::param_count).sum::<u64>()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (mut ops, _) = self.cv1.lower(h, w)?;
        for stage in &self.stages {
            ops.extend(stage.lower(h, w)?);
        }
        ops.extend(self.cv2.lower(h, w)?.0);
        Ok(ops)
    }
}

/// Spatial pyramid pooling (fast): 1×1 reduce, three chained `k×k`
/// stride-1 max pools, concat of all four stages, 1×1 merge.
pub struct Sppf<T: Scalar> {
    pub k: usize,
    cv1: ConvBlock<T>,
    cv2: ConvBlock<T>,
}

impl<T: Scalar> Sppf<T> {
    pub fn seeded(c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::param(format!("sppf pool size {k} must be odd")));
        }
        let hidden = (c_in / 2).max(1);
        Ok(Self {
            k,
            cv1: ConvBlock::seeded(c_in, hidden, 1, 1, rng)?,
            cv2: ConvBlock::seeded(hidden * 4, c_out, 1, 1, rng)?,
        })
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let y = self.cv1.forward(x)?;
        let p1 = maxpool2d(&y, self.k, 1, self.k / 2)?;
        let p2 = maxpool2d(&p1, self.k, 1, self.k / 2)?;
        let p3 = maxpool2d(&p2, self.k, 1, self.k / 2)?;
        self.cv2.forward(&concat(&[&y, &p1, &p2, &p3])?)
    }

    pub fn param_count(&self) -> u64 {
        self.cv1.param_count() + self.cv2.param_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Result<Vec<PrimitiveOp>> {
        let (mut ops, _) = self.cv1.lower(h, w)?;
        let hidden = self.cv1.out_channels();
        ops.push(PrimitiveOp::Ops {
            name: "sppf_maxpool",
            count: 3 * (hidden * h * w * self.k * self.k) as u64,
        });
        ops.extend(self.cv2.lower(h, w)?.0);
        Ok(ops)
    }
}

/// Channel-axis concatenation of same-sized maps.
pub fn concat<T: Scalar>(xs: &[&FeatureMap<T>]) -> Result<FeatureMap<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::shape("concat of zero inputs"))?;
    let (n, _, h, w) = first.shape();
    let mut c_total = 0;
    for x in xs {
        let (xn, xc, xh, xw) = x.shape();
        if (xn, xh, xw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat: shapes ({xn},{xc},{xh},{xw}) and {:?} differ outside the channel axis",
                first.shape()
            )));
        }
        c_total += xc;
    }
    let mut out = FeatureMap::zeros(n, c_total, h, w);
    for b in 0..n {
        let mut offset = 0;
        for x in xs {
            let c = x.channels();
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        *out.at_mut(b, offset + ch, y, xx) = x.at(b, ch, y, xx);
                    }
                }
            }
            offset += c;
        }
    }
    Ok(out)
}

/// Block-replicating nearest-neighbor upsample.
pub fn nearest_upsample<T: Scalar>(x: &FeatureMap<T>, scale: usize) -> Result<FeatureMap<T>> {
    if scale == 0 {
        return Err(Error::param("upsample scale must be positive"));
    }
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h * scale, w * scale);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h * scale {
                for xx in 0..w * scale {
                    *out.at_mut(b, ch, y, xx) = x.at(b, ch, y / scale, xx / scale);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_map(rng: &mut StdRng, n: usize, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        let data = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMap::new(n, c, h, w, data).unwrap()
    }

    #[test]
    fn nearest_upsample_block_replicates() {
        let x = FeatureMap::new(1, 1, 2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = nearest_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), (1, 1, 4, 4));
        let expect = [
            1.0, 1.0, 2.0, 2.0, //
            1.0, 1.0, 2.0, 2.0, //
            3.0, 3.0, 4.0, 4.0, //
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.data(), &expect);
    }

    #[test]
    fn concat_sums_channels() {
        let a = FeatureMap::<f64>::zeros(2, 3, 4, 4);
        let b = FeatureMap::<f64>::full(2, 5, 4, 4, 1.0);
        let y = concat(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), (2, 8, 4, 4));
        assert_eq!(y.at(1, 2, 0, 0), 0.0);
        assert_eq!(y.at(1, 3, 0, 0), 1.0);
        let c = FeatureMap::<f64>::zeros(2, 1, 3, 4);
        assert!(concat(&[&a, &c]).is_err());
        assert!(concat::<f64>(&[]).is_err());
    }

    #[test]
    fn c3k2_output_shape_matches_declared() {
        let mut rng = StdRng::seed_from_u64(40);
        for (c3k, e) in [(false, 0.5), (false, 0.25), (true, 0.5)] {
            let block = C3k2::<f64>::seeded(8, 12, 2, c3k, e, true, &mut rng).unwrap();
            let x = random_map(&mut rng, 2, 8, 6, 6);
            let y = block.forward(&x).unwrap();
            assert_eq!(y.shape(), (2, 12, 6, 6));
            assert!(y.all_finite());
        }
    }

    #[test]
    fn c3k2_lowered_params_match_block_params() {
        let mut rng = StdRng::seed_from_u64(41);
        let block = C3k2::<f64>::seeded(16, 16, 2, true, 0.5, true, &mut rng).unwrap();
        let lowered: u64 = block
            .lower(8, 8)
            .unwrap()
            .iter()
            .map(|o| o.params_weights() + o.params_bias() + o.params_bn())
            .sum();
        assert_eq!(lowered, block.param_count());
    }

    #[test]
    fn sppf_preserves_spatial_extent() {
        let mut rng = StdRng::seed_from_u64(42);
        let block = Sppf::<f64>::seeded(8, 8, 5, &mut rng).unwrap();
        let x = random_map(&mut rng, 1, 8, 7, 7);
        let y = block.forward(&x).unwrap();
        assert_eq!(y.shape(), (1, 8, 7, 7));
    }

    #[test]
    fn bottleneck_residual_requires_matching_channels() {
        let mut rng = StdRng::seed_from_u64(43);
        let same = Bottleneck::<f64>::seeded(6, 6, 3, 3, 0.5, true, &mut rng).unwrap();
        assert!(same.shortcut);
        let diff = Bottleneck::<f64>::seeded(6, 8, 3, 3, 0.5, true, &mut rng).unwrap();
        assert!(!diff.shortcut);
    }

    #[test]
    fn convblock_composition() {
        let mut rng = StdRng::seed_from_u64(44);
        let block = ConvBlock::<f64>::seeded(3, 5, 3, 2, &mut rng).unwrap();
        let x = random_map(&mut rng, 1, 3, 8, 8);
        let y = block.forward(&x).unwrap();
        assert_eq!(y.shape(), (1, 5, 4, 4));
        let manual = silu_map(
            &batchnorm_inference(&conv2d(&x, &block.conv).unwrap(), &block.bn).unwrap(),
        );
        assert_eq!(y, manual);
    }
}
