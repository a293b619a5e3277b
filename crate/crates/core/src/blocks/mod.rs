//! Forward-pass reference implementations of every block the detector uses:
//! squeeze-and-excitation and the squeezed convolutional block, ECA, SimAM,
//! the parallel hybrid attention gates, content-aware reassembly upsampling,
//! spatial-channel decoupled downsampling, and the standard ConvBlock /
//! C3k2 / SPPF composites needed to wire a whole network.
//!
//! Blocks are immutable after construction and their forwards are pure;
//! randomized weights (used only for shape and property checks, never
//! training) are seeded uniform in [-0.1, 0.1].

pub mod carafe;
pub mod composite;
pub mod pham;
pub mod scdown;
pub mod se;
pub mod simam;

pub use carafe::{carafe_forward, predict_kernels, CarafeParams};
pub use composite::{
    concat, convblock_forward, nearest_upsample, Bottleneck, C3k2, ConvBlock, Sppf,
};
pub use pham::{PhamGate, PHAMParams};
pub use scdown::{scdown_forward, SCDownParams};
pub use se::{eca_forward, se_forward, seconvblock_forward, EcaParams, SEConvBlock, SEParams};
pub use simam::{simam_forward, SimAmGate, SimAMParams};

use rand::Rng;

use crate::numerics::{BatchNormParams, ConvParams, FeatureMap};
use crate::{scalar, Result, Scalar};

/// Seeded uniform [-0.1, 0.1] weight draw.
pub(crate) fn uniform_weights<T: Scalar>(rng: &mut impl Rng, len: usize) -> Vec<T> {
    (0..len)
        .map(|_| scalar(rng.random_range(-0.1..=0.1)))
        .collect()
}

pub(crate) fn seeded_conv<T: Scalar>(
    rng: &mut impl Rng,
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
    groups: usize,
    bias: bool,
) -> Result<ConvParams<T>> {
    let len = (in_channels / groups) * kernel.0 * kernel.1 * out_channels;
    let weights = uniform_weights(rng, len);
    let bias = bias.then(|| uniform_weights(rng, out_channels));
    ConvParams::new(
        in_channels,
        out_channels,
        kernel,
        stride,
        padding,
        groups,
        weights,
        bias,
    )
}

/// Seeded batch-norm statistics kept close to neutral so deep stacks stay
/// well-scaled in forward checks.
pub(crate) fn seeded_bn<T: Scalar>(rng: &mut impl Rng, channels: usize) -> BatchNormParams<T> {
    let scale_v: Vec<T> = (0..channels)
        .map(|_| scalar(rng.random_range(0.9..=1.1)))
        .collect();
    let shift = uniform_weights(rng, channels);
    let mean = uniform_weights(rng, channels);
    let var: Vec<T> = (0..channels)
        .map(|_| scalar(rng.random_range(0.5..=1.5)))
        .collect();
    BatchNormParams::new(scale_v, shift, mean, var, scalar(crate::numerics::DEFAULT_BN_EPS))
        .expect("seeded batchnorm parameters are valid")
}

/// Row-major (rows x cols) matrix times vector.
pub(crate) fn matvec<T: Scalar>(w: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc = acc + *a * *b;
        }
        out.push(acc);
    }
    out
}

/// Multiply every value of channel `c` in batch item `n` by `gates[n*C + c]`.
pub(crate) fn scale_channels<T: Scalar>(x: &FeatureMap<T>, gates: &[T]) -> FeatureMap<T> {
    let (n, c, h, w) = x.shape();
    debug_assert_eq!(gates.len(), n * c);
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let g = gates[b * c + ch];
            let start = out.index(b, ch, 0, 0);
            for v in &mut out.data_mut()[start..start + h * w] {
                *v = *v * g;
            }
        }
    }
    out
}

/// Elementwise sum of two same-shape maps.
pub(crate) fn add_maps<T: Scalar>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    if a.shape() != b.shape() {
        return Err(crate::Error::shape(format!(
            "elementwise add of mismatched shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = *o + *v;
    }
    Ok(out)
}
