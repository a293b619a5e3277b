//! Parallel hybrid attention: a channel gate and a spatial gate in series
//! (CBAM-style), fused with a coordinate gate that encodes the two spatial
//! directions separately, joined by `relu(X_cs + X_coord)`.

use rand::Rng;

use super::{add_maps, matvec, scale_channels, seeded_bn, seeded_conv, uniform_weights};
use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{
    batchnorm_inference, conv2d, global_avg_pool, global_max_pool, hard_swish_map, relu, sigmoid,
    BatchNormParams, ConvParams, FeatureMap,
};
use crate::{Error, Result, Scalar};

/// Coordinate-gate bottleneck width: `max(8, C / coord_reduction)`.
pub const COORD_MID_FLOOR: usize = 8;

#[derive(Debug, Clone)]
pub struct PHAMParams<T: Scalar> {
    pub channels: usize,
    pub reduction: usize,
    pub coord_reduction: usize,
    pub spatial_kernel: usize,
    /// Channel-gate MLP, shared between the avg and max branches:
    /// `W0 ∈ R^{C/r×C}` (ReLU after), `W1 ∈ R^{C×C/r}`.
    pub mlp_w0: Vec<T>,
    pub mlp_w1: Vec<T>,
    /// `2 → 1` convolution over the stacked avg/max maps, stride 1, padding
    /// `(k−1)/2` so the attention map keeps the input's spatial size.
    pub spatial_conv: ConvParams<T>,
    pub coord_conv1: ConvParams<T>,
    pub coord_bn: BatchNormParams<T>,
    pub coord_conv_h: ConvParams<T>,
    pub coord_conv_w: ConvParams<T>,
}

impl<T: Scalar> PHAMParams<T> {
    pub fn coord_mid(channels: usize, coord_reduction: usize) -> usize {
        (channels / coord_reduction).max(COORD_MID_FLOOR)
    }

    pub fn seeded(
        channels: usize,
        reduction: usize,
        coord_reduction: usize,
        spatial_kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::param(format!(
                "pham channel-gate reduction {reduction} must divide channels {channels}"
            )));
        }
        if coord_reduction == 0 {
            return Err(Error::param("pham coordinate reduction must be >= 1"));
        }
        if spatial_kernel % 2 == 0 {
            return Err(Error::param(format!(
                "pham spatial kernel {spatial_kernel} must be odd"
            )));
        }
        let mid = channels / reduction;
        let coord_mid = Self::coord_mid(channels, coord_reduction);
        Ok(Self {
            channels,
            reduction,
            coord_reduction,
            spatial_kernel,
            mlp_w0: uniform_weights(rng, mid * channels),
            mlp_w1: uniform_weights(rng, channels * mid),
            spatial_conv: seeded_conv(
                rng,
                2,
                1,
                (spatial_kernel, spatial_kernel),
                1,
                (spatial_kernel - 1) / 2,
                1,
                false,
            )?,
            coord_conv1: seeded_conv(rng, channels, coord_mid, (1, 1), 1, 0, 1, false)?,
            coord_bn: seeded_bn(rng, coord_mid),
            coord_conv_h: seeded_conv(rng, coord_mid, channels, (1, 1), 1, 0, 1, false)?,
            coord_conv_w: seeded_conv(rng, coord_mid, channels, (1, 1), 1, 0, 1, false)?,
        })
    }

    fn check_input(&self, x: &FeatureMap<T>, gate: &str) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::shape(format!(
                "pham {gate} gate: input has {} channels, params expect {}",
                x.channels(),
                self.channels
            )));
        }
        if x.height() == 0 || x.width() == 0 {
            return Err(Error::shape(format!("pham {gate} gate: empty spatial extent")));
        }
        Ok(())
    }

    /// `M_c = sigmoid(MLP(avgpool) + MLP(maxpool))`, multiplied onto `x`.
    pub fn channel_gate(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check_input(x, "channel")?;
        let (n, c, _, _) = x.shape();
        let mid = c / self.reduction;
        let zavg = global_avg_pool(x)?;
        let zmax = global_max_pool(x)?;
        let mut gates = Vec::with_capacity(n * c);
        for b in 0..n {
            let branch = |z: &[T]| -> Vec<T> {
                let mut hidden = matvec(&self.mlp_w0, mid, c, &z[b * c..(b + 1) * c]);
                for v in &mut hidden {
                    *v = relu(*v);
                }
                matvec(&self.mlp_w1, c, mid, &hidden)
            };
            let a = branch(&zavg);
            let m = branch(&zmax);
            for i in 0..c {
                gates.push(sigmoid(a[i] + m[i]));
            }
        }
        Ok(scale_channels(x, &gates))
    }

    /// `M_s = sigmoid(conv_k([mean_c; max_c]))`, broadcast over channels.
    pub fn spatial_gate(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check_input(x, "spatial")?;
        let (n, c, h, w) = x.shape();
        let cf = crate::scalar::<T>(c as f64);
        let mut stacked = FeatureMap::zeros(n, 2, h, w);
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let mut sum = T::zero();
                    let mut best = x.at(b, 0, y, xx);
                    for ch in 0..c {
                        let v = x.at(b, ch, y, xx);
                        sum = sum + v;
                        if v > best {
                            best = v;
                        }
                    }
                    *stacked.at_mut(b, 0, y, xx) = sum / cf;
                    *stacked.at_mut(b, 1, y, xx) = best;
                }
            }
        }
        let attn = conv2d(&stacked, &self.spatial_conv)?;
        let mut out = x.clone();
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        let g = sigmoid(attn.at(b, 0, y, xx));
                        let slot = out.at_mut(b, ch, y, xx);
                        *slot = *slot * g;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Directional encoding: average-pool along each axis, encode the
    /// concatenated strips through a 1×1 bottleneck (BN + hard swish), split,
    /// and gate with two per-direction sigmoid attention vectors:
    /// `out = x ⊗ a_w ⊗ a_h`.
    pub fn coordinate_gate(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check_input(x, "coordinate")?;
        let (n, c, h, w) = x.shape();
        let hf = crate::scalar::<T>(h as f64);
        let wf = crate::scalar::<T>(w as f64);

        // pooled strips laid out along one length axis: [h-strip | w-strip]
        let mut strips = FeatureMap::zeros(n, c, 1, h + w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    let mut sum = T::zero();
                    for xx in 0..w {
                        sum = sum + x.at(b, ch, y, xx);
                    }
                    *strips.at_mut(b, ch, 0, y) = sum / wf;
                }
                for xx in 0..w {
                    let mut sum = T::zero();
                    for y in 0..h {
                        sum = sum + x.at(b, ch, y, xx);
                    }
                    *strips.at_mut(b, ch, 0, h + xx) = sum / hf;
                }
            }
        }

        let encoded = hard_swish_map(&batchnorm_inference(
            &conv2d(&strips, &self.coord_conv1)?,
            &self.coord_bn,
        )?);
        let mid = encoded.channels();

        let mut part_h = FeatureMap::zeros(n, mid, 1, h);
        let mut part_w = FeatureMap::zeros(n, mid, 1, w);
        for b in 0..n {
            for ch in 0..mid {
                for y in 0..h {
                    *part_h.at_mut(b, ch, 0, y) = encoded.at(b, ch, 0, y);
                }
                for xx in 0..w {
                    *part_w.at_mut(b, ch, 0, xx) = encoded.at(b, ch, 0, h + xx);
                }
            }
        }

        let attn_h = conv2d(&part_h, &self.coord_conv_h)?;
        let attn_w = conv2d(&part_w, &self.coord_conv_w)?;

        let mut out = x.clone();
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    let gh = sigmoid(attn_h.at(b, ch, 0, y));
                    for xx in 0..w {
                        let gw = sigmoid(attn_w.at(b, ch, 0, xx));
                        let slot = out.at_mut(b, ch, y, xx);
                        *slot = *slot * gw * gh;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Y = relu(X_cs ⊕ X_coord)` with `X_cs = M_s(M_c(x))` and the
    /// coordinate branch running on the raw input in parallel.
    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let cs = self.spatial_gate(&self.channel_gate(x)?)?;
        let coord = self.coordinate_gate(x)?;
        let mut fused = add_maps(&cs, &coord)?;
        for v in fused.data_mut() {
            *v = relu(*v);
        }
        Ok(fused)
    }

    pub fn param_count(&self) -> u64 {
        (self.mlp_w0.len() + self.mlp_w1.len()) as u64
            + self.spatial_conv.weight_count()
            + self.spatial_conv.bias_count()
            + self.coord_conv1.weight_count()
            + self.coord_bn.param_count()
            + self.coord_conv_h.weight_count()
            + self.coord_conv_w.weight_count()
    }

    pub fn lower(&self, h: usize, w: usize) -> Vec<PrimitiveOp> {
        let c = self.channels;
        let mid = c / self.reduction;
        let coord_mid = Self::coord_mid(c, self.coord_reduction);
        let k = self.spatial_kernel;
        let hw = (h * w) as u64;
        vec![
            // channel gate: two pools, shared MLP applied twice, gate multiply
            PrimitiveOp::Ops {
                name: "pham_channel_pools",
                count: 2 * c as u64 * hw,
            },
            PrimitiveOp::conv(c, mid, 1, 1, 1, false, 1, 1),
            PrimitiveOp::conv(mid, c, 1, 1, 1, false, 1, 1),
            PrimitiveOp::Conv {
                c_in: c,
                c_out: mid,
                kh: 1,
                kw: 1,
                groups: 1,
                bias: false,
                h_out: 1,
                w_out: 1,
                shared_weights: true,
            },
            PrimitiveOp::Conv {
                c_in: mid,
                c_out: c,
                kh: 1,
                kw: 1,
                groups: 1,
                bias: false,
                h_out: 1,
                w_out: 1,
                shared_weights: true,
            },
            PrimitiveOp::Ops {
                name: "pham_channel_gate",
                count: c as u64 + c as u64 * hw,
            },
            // spatial gate: stack stats, k x k conv, gate multiply
            PrimitiveOp::Ops {
                name: "pham_spatial_stats",
                count: 2 * c as u64 * hw,
            },
            PrimitiveOp::conv(2, 1, k, k, 1, false, h, w),
            PrimitiveOp::Ops {
                name: "pham_spatial_gate",
                count: hw + c as u64 * hw,
            },
            // coordinate gate: strip pools, bottleneck, two direction convs
            PrimitiveOp::Ops {
                name: "pham_coord_pools",
                count: 2 * c as u64 * hw,
            },
            PrimitiveOp::conv(c, coord_mid, 1, 1, 1, false, 1, h + w),
            PrimitiveOp::BatchNorm {
                channels: coord_mid,
                h: 1,
                w: h + w,
            },
            PrimitiveOp::Ops {
                name: "hard_swish",
                count: coord_mid as u64 * (h + w) as u64,
            },
            PrimitiveOp::conv(coord_mid, c, 1, 1, 1, false, 1, h),
            PrimitiveOp::conv(coord_mid, c, 1, 1, 1, false, 1, w),
            PrimitiveOp::Ops {
                name: "pham_coord_gate",
                count: c as u64 * (h + w) as u64 + 2 * c as u64 * hw,
            },
            // fusion: add + relu
            PrimitiveOp::Ops {
                name: "pham_fuse",
                count: 2 * c as u64 * hw,
            },
        ]
    }
}

/// The individual gates, enumerable for per-gate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhamGate {
    Channel,
    Spatial,
    Coordinate,
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

    fn positive_map(rng: &mut StdRng, n: usize, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        let data = (0..n * c * h * w).map(|_| rng.random_range(0.2..1.0)).collect();
        FeatureMap::new(n, c, h, w, data).unwrap()
    }

    fn saturated_params(channels: usize) -> PHAMParams<f64> {
        let mut rng = StdRng::seed_from_u64(0);
        let mut p = PHAMParams::seeded(channels, 4, 16, 7, &mut rng).unwrap();
        let big = 1e6;
        p.mlp_w0.iter_mut().for_each(|v| *v = big);
        p.mlp_w1.iter_mut().for_each(|v| *v = big);
        p.spatial_conv.weights.iter_mut().for_each(|v| *v = big);
        p.coord_conv1.weights.iter_mut().for_each(|v| *v = 1.0);
        p.coord_bn = BatchNormParams::identity(p.coord_bn.channels());
        p.coord_conv_h.weights.iter_mut().for_each(|v| *v = big);
        p.coord_conv_w.weights.iter_mut().for_each(|v| *v = big);
        p
    }

    #[test]
    fn saturated_gates_give_relu_of_twice_input() {
        // positive input + saturated weights force every gate to 1, so
        // X_cs = x, X_coord = x, Y = relu(2x) = 2x
        let mut rng = StdRng::seed_from_u64(11);
        let x = positive_map(&mut rng, 1, 8, 5, 5);
        let p = saturated_params(8);
        let y = p.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(*a, 2.0 * b, epsilon = 1e-6);
        }
    }

    #[test]
    fn spatial_gate_uniform_on_constant_map() {
        let mut rng = StdRng::seed_from_u64(12);
        let p = PHAMParams::<f64>::seeded(4, 2, 16, 7, &mut rng).unwrap();
        let x = FeatureMap::full(1, 4, 12, 12, 0.8);
        let y = p.spatial_gate(&x).unwrap();
        // avg-map == max-map, so away from the zero padding every window sees
        // the same constant stats and the gate is spatially uniform
        let reference = y.at(0, 0, 3, 3) / 0.8;
        for y0 in 3..9 {
            for x0 in 3..9 {
                for c in 0..4 {
                    assert_abs_diff_eq!(
                        y.at(0, c, y0, x0) / 0.8,
                        reference,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn gates_match_composition_oracle() {
        let mut rng = StdRng::seed_from_u64(13);
        let x = random_map(&mut rng, 1, 8, 6, 6);
        let p = PHAMParams::<f64>::seeded(8, 4, 16, 7, &mut rng).unwrap();
        let y = p.forward(&x).unwrap();
        // gate-by-gate composition with the public pieces
        let cs = p.spatial_gate(&p.channel_gate(&x).unwrap()).unwrap();
        let coord = p.coordinate_gate(&x).unwrap();
        for i in 0..y.len() {
            let expect = (cs.data()[i] + coord.data()[i]).max(0.0);
            assert_abs_diff_eq!(y.data()[i], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn channel_gate_matches_manual_mlp() {
        let mut rng = StdRng::seed_from_u64(14);
        let x = random_map(&mut rng, 1, 4, 3, 3);
        let p = PHAMParams::<f64>::seeded(4, 2, 16, 7, &mut rng).unwrap();
        let y = p.channel_gate(&x).unwrap();
        let zavg = global_avg_pool(&x).unwrap();
        let zmax = global_max_pool(&x).unwrap();
        for c in 0..4usize {
            let branch = |z: &Vec<f64>| -> f64 {
                let hidden: Vec<f64> = (0..2)
                    .map(|m| {
                        (0..4)
                            .map(|j| p.mlp_w0[m * 4 + j] * z[j])
                            .sum::<f64>()
                            .max(0.0)
                    })
                    .collect();
                (0..2).map(|m| p.mlp_w1[c * 2 + m] * hidden[m]).sum()
            };
            let gate = 1.0 / (1.0 + (-(branch(&zavg) + branch(&zmax))).exp());
            for y0 in 0..3 {
                for x0 in 0..3 {
                    assert_abs_diff_eq!(
                        y.at(0, c, y0, x0),
                        gate * x.at(0, c, y0, x0),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_per_gate() {
        let mut rng = StdRng::seed_from_u64(15);
        let p = PHAMParams::<f64>::seeded(8, 4, 16, 7, &mut rng).unwrap();
        let x = FeatureMap::<f64>::zeros(1, 4, 3, 3);
        for (gate, res) in [
            ("channel", p.channel_gate(&x)),
            ("spatial", p.spatial_gate(&x)),
            ("coordinate", p.coordinate_gate(&x)),
        ] {
            let err = res.unwrap_err().to_string();
            assert!(err.contains(gate), "{gate}: {err}");
        }
    }

    #[test]
    fn forward_preserves_shape() {
        let mut rng = StdRng::seed_from_u64(16);
        let x = random_map(&mut rng, 2, 8, 5, 7);
        let p = PHAMParams::<f64>::seeded(8, 4, 16, 7, &mut rng).unwrap();
        let y = p.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.all_finite());
    }

    #[test]
    fn coord_mid_clamps_to_floor() {
        assert_eq!(PHAMParams::<f64>::coord_mid(256, 16), 16);
        assert_eq!(PHAMParams::<f64>::coord_mid(64, 16), 8);
        assert_eq!(PHAMParams::<f64>::coord_mid(8, 16), 8);
    }

    #[test]
    fn lowered_params_equal_block_params() {
        let mut rng = StdRng::seed_from_u64(17);
        let p = PHAMParams::<f64>::seeded(32, 16, 16, 7, &mut rng).unwrap();
        let lowered: u64 = p
            .lower(6, 6)
            .iter()
            .map(|o| o.params_weights() + o.params_bias() + o.params_bn())
            .sum();
        assert_eq!(lowered, p.param_count());
    }
}
