//! Content-aware reassembly upsampling (factor fixed at 2): a channel
//! compressor and content encoder predict one softmax-normalized
//! `k_up × k_up` kernel per output location, and every output pixel is the
//! kernel-weighted sum of its source neighborhood, applied identically to
//! all channels.

use rand::Rng;

use super::seeded_conv;
use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{conv2d, softmax_channels, ConvParams, FeatureMap};
use crate::{Error, Result, Scalar};

pub const DEFAULT_CM: usize = 64;
pub const DEFAULT_K_UP: usize = 5;

#[derive(Debug, Clone)]
pub struct CarafeParams<T: Scalar> {
    pub cm: usize,
    pub k_up: usize,
    /// Upsampling factor; only 2 is supported.
    pub scale: usize,
    /// `C → C_m`, 1×1.
    pub compressor: ConvParams<T>,
    /// `C_m → scale²·k_up²` with kernel `k_encoder = k_up − 2`.
    pub encoder: ConvParams<T>,
}

impl<T: Scalar> CarafeParams<T> {
    pub fn new(
        cm: usize,
        k_up: usize,
        scale: usize,
        compressor: ConvParams<T>,
        encoder: ConvParams<T>,
    ) -> Result<Self> {
        if scale != 2 {
            return Err(Error::param(format!(
                "carafe scale factor {scale} unsupported, only 2"
            )));
        }
        if k_up % 2 == 0 || k_up < 3 {
            return Err(Error::param(format!(
                "carafe k_up {k_up} must be odd and >= 3"
            )));
        }
        let k_enc = k_up - 2;
        if compressor.out_channels != cm || compressor.kernel != (1, 1) {
            return Err(Error::param(
                "carafe compressor must be a 1x1 convolution to C_m channels",
            ));
        }
        if encoder.in_channels != cm
            || encoder.kernel != (k_enc, k_enc)
            || encoder.out_channels != scale * scale * k_up * k_up
        {
            return Err(Error::param(format!(
                "carafe encoder must map C_m -> scale^2*k_up^2 = {} with kernel {k_enc}",
                scale * scale * k_up * k_up
            )));
        }
        Ok(Self {
            cm,
            k_up,
            scale,
            compressor,
            encoder,
        })
    }

    pub fn seeded(in_channels: usize, cm: usize, k_up: usize, rng: &mut impl Rng) -> Result<Self> {
        if k_up % 2 == 0 || k_up < 3 {
            return Err(Error::param(format!(
                "carafe k_up {k_up} must be odd and >= 3"
            )));
        }
        let k_enc = k_up - 2;
        let compressor = seeded_conv(rng, in_channels, cm, (1, 1), 1, 0, 1, false)?;
        let encoder = seeded_conv(
            rng,
            cm,
            4 * k_up * k_up,
            (k_enc, k_enc),
            1,
            (k_enc - 1) / 2,
            1,
            false,
        )?;
        Self::new(cm, k_up, 2, compressor, encoder)
    }

    pub fn param_count(&self) -> u64 {
        self.compressor.weight_count()
            + self.compressor.bias_count()
            + self.encoder.weight_count()
            + self.encoder.bias_count()
    }

    pub fn lower(&self, channels: usize, h: usize, w: usize) -> Vec<PrimitiveOp> {
        let k2 = (self.k_up * self.k_up) as u64;
        let out_pixels = (4 * h * w) as u64;
        vec![
            PrimitiveOp::conv(channels, self.cm, 1, 1, 1, false, h, w),
            PrimitiveOp::conv(
                self.cm,
                4 * self.k_up * self.k_up,
                self.k_up - 2,
                self.k_up - 2,
                1,
                false,
                h,
                w,
            ),
            PrimitiveOp::Ops {
                name: "carafe_softmax",
                count: 4 * k2 * out_pixels,
            },
            PrimitiveOp::Ops {
                name: "carafe_reassembly",
                count: 2 * channels as u64 * k2 * out_pixels,
            },
        ]
    }
}

/// Per-output-location reassembly kernels, already softmax-normalized:
/// shape `(N, k_up², 2H, 2W)`, each channel group summing to 1.
pub fn predict_kernels<T: Scalar>(
    x: &FeatureMap<T>,
    p: &CarafeParams<T>,
) -> Result<FeatureMap<T>> {
    if x.channels() != p.compressor.in_channels {
        return Err(Error::shape(format!(
            "carafe: input has {} channels, compressor expects {}",
            x.channels(),
            p.compressor.in_channels
        )));
    }
    let compressed = conv2d(x, &p.compressor)?;
    let encoded = conv2d(&compressed, &p.encoder)?;
    let shuffled = pixel_shuffle(&encoded, p.scale)?;
    Ok(softmax_channels(&shuffled))
}

/// `(N, r²·K, H, W) → (N, K, rH, rW)`:
/// `out[n, k, y·r+dy, x·r+dx] = in[n, k·r² + dy·r + dx, y, x]`.
fn pixel_shuffle<T: Scalar>(x: &FeatureMap<T>, r: usize) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if c % (r * r) != 0 {
        return Err(Error::shape(format!(
            "pixel shuffle: {c} channels not divisible by {}",
            r * r
        )));
    }
    let k = c / (r * r);
    let mut out = FeatureMap::zeros(n, k, h * r, w * r);
    for b in 0..n {
        for kc in 0..k {
            for dy in 0..r {
                for dx in 0..r {
                    let src_c = kc * r * r + dy * r + dx;
                    for y in 0..h {
                        for xx in 0..w {
                            *out.at_mut(b, kc, y * r + dy, xx * r + dx) =
                                x.at(b, src_c, y, xx);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Upsample by 2: each output pixel is its predicted kernel applied to the
/// `k_up × k_up` neighborhood (zero padded) of the corresponding low-res
/// location, identically over all channels.
pub fn carafe_forward<T: Scalar>(x: &FeatureMap<T>, p: &CarafeParams<T>) -> Result<FeatureMap<T>> {
    let kernels = predict_kernels(x, p)?;
    let (n, c, h, w) = x.shape();
    let k = p.k_up;
    let r = (k / 2) as isize;
    let mut out = FeatureMap::zeros(n, c, 2 * h, 2 * w);
    for b in 0..n {
        for oy in 0..2 * h {
            let iy = (oy / 2) as isize;
            for ox in 0..2 * w {
                let ix = (ox / 2) as isize;
                for ch in 0..c {
                    let mut acc = T::zero();
                    for dy in 0..k {
                        let sy = iy + dy as isize - r;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for dx in 0..k {
                            let sx = ix + dx as isize - r;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc = acc
                                + kernels.at(b, dy * k + dx, oy, ox)
                                    * x.at(b, ch, sy as usize, sx as usize);
                        }
                    }
                    *out.at_mut(b, ch, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}
