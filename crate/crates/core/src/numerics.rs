//! Minimal deterministic rank-4 tensor core.
//!
//! Exactly the primitives the network blocks need: direct convolution,
//! global/windowed pooling, the four activations, grouped softmax, and
//! inference-mode batch normalization. No autodiff, no layout tricks —
//! everything is a pure function over row-major `(N, C, H, W)` data with a
//! fixed summation order, so repeated invocation is bit-identical.

use crate::{scalar, Error, Result, Scalar};

/// Rank-4 feature map in row-major `(batch, channel, height, width)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Scalar> {
    data: Vec<T>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        let expect = n * c * h * w;
        if data.len() != expect {
            return Err(Error::shape(format!(
                "data length {} does not match shape ({n},{c},{h},{w}) = {expect}",
                data.len()
            )));
        }
        Ok(Self { data, n, c, h, w })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            data: vec![T::zero(); n * c * h * w],
            n,
            c,
            h,
            w,
        }
    }

    pub fn full(n: usize, c: usize, h: usize, w: usize, v: T) -> Self {
        Self {
            data: vec![v; n * c * h * w],
            n,
            c,
            h,
            w,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        let i = self.index(n, c, y, x);
        &mut self.data[i]
    }

    /// Contiguous `(batch, channel)` plane of `H·W` values.
    pub fn channel_plane(&self, n: usize, c: usize) -> &[T] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a new map of the same shape.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
        }
    }
}

/// Parameters of a (possibly grouped) 2-D convolution.
///
/// Weights are laid out `(c_out, c_in/groups, k_h, k_w)` row-major.
#[derive(Debug, Clone)]
pub struct ConvParams<T: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub weights: Vec<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        groups: usize,
        weights: Vec<T>,
        bias: Option<Vec<T>>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::param("conv channel counts must be positive"));
        }
        if kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::param("conv kernel extents must be positive"));
        }
        if stride == 0 {
            return Err(Error::param("conv stride must be positive"));
        }
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::param(format!(
                "groups {groups} must divide in_channels {in_channels} and out_channels {out_channels}"
            )));
        }
        let expect = (in_channels / groups) * kernel.0 * kernel.1 * out_channels;
        if weights.len() != expect {
            return Err(Error::shape(format!(
                "conv weights length {} does not match (in/groups)*kh*kw*out = {expect}",
                weights.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::shape(format!(
                    "conv bias length {} does not match out_channels {out_channels}",
                    b.len()
                )));
            }
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
            weights,
            bias,
        })
    }

    /// Identity 1x1 convolution (weight 1 on the diagonal, no bias).
    pub fn identity_1x1(channels: usize) -> Self {
        let mut weights = vec![T::zero(); channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = T::one();
        }
        Self {
            in_channels: channels,
            out_channels: channels,
            kernel: (1, 1),
            stride: 1,
            padding: 0,
            groups: 1,
            weights,
            bias: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let h_eff = h + 2 * self.padding;
        let w_eff = w + 2 * self.padding;
        if h_eff < kh || w_eff < kw {
            return Err(Error::shape(format!(
                "kernel {kh}x{kw} does not fit input {h}x{w} with padding {}",
                self.padding
            )));
        }
        Ok(((h_eff - kh) / self.stride + 1, (w_eff - kw) / self.stride + 1))
    }

    pub fn weight_count(&self) -> u64 {
        self.weights.len() as u64
    }

    pub fn bias_count(&self) -> u64 {
        self.bias.as_ref().map_or(0, |b| b.len() as u64)
    }
}

/// Direct dense convolution. `O(N·C_out·H_out·W_out·C_in/g·k_h·k_w)` — built
/// for desk-scale correctness, with a fixed accumulation order.
pub fn conv2d<T: Scalar>(x: &FeatureMap<T>, p: &ConvParams<T>) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if c != p.in_channels {
        return Err(Error::shape(format!(
            "conv2d: input has {c} channels, params expect in_channels {}",
            p.in_channels
        )));
    }
    let (h_out, w_out) = p.output_hw(h, w)?;
    let (kh, kw) = p.kernel;
    let cin_g = p.in_channels / p.groups;
    let cout_g = p.out_channels / p.groups;
    let mut out = FeatureMap::zeros(n, p.out_channels, h_out, w_out);

    for b in 0..n {
        for oc in 0..p.out_channels {
            let g = oc / cout_g;
            let bias = p.bias.as_ref().map_or(T::zero(), |bv| bv[oc]);
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut acc = bias;
                    for ic_g in 0..cin_g {
                        let ic = g * cin_g + ic_g;
                        for ky in 0..kh {
                            let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let wv = p.weights
                                    [((oc * cin_g + ic_g) * kh + ky) * kw + kx];
                                acc = acc + wv * x.at(b, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(b, oc, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Channel-wise global average pooling: one scalar per `(batch, channel)`,
/// flattened batch-major.
pub fn global_avg_pool<T: Scalar>(x: &FeatureMap<T>) -> Result<Vec<T>> {
    let (n, c, h, w) = x.shape();
    if h * w == 0 {
        return Err(Error::shape("global_avg_pool: empty spatial extent"));
    }
    let m = scalar::<T>((h * w) as f64);
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            let mut acc = T::zero();
            for &v in x.channel_plane(b, ch) {
                acc = acc + v;
            }
            out.push(acc / m);
        }
    }
    Ok(out)
}

/// Channel-wise global max pooling: one scalar per `(batch, channel)`.
pub fn global_max_pool<T: Scalar>(x: &FeatureMap<T>) -> Result<Vec<T>> {
    let (n, c, h, w) = x.shape();
    if h * w == 0 {
        return Err(Error::shape("global_max_pool: empty spatial extent"));
    }
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            let plane = x.channel_plane(b, ch);
            let mut best = plane[0];
            for &v in &plane[1..] {
                if v > best {
                    best = v;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

#[inline]
pub fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

#[inline]
pub fn silu<T: Scalar>(v: T) -> T {
    v * sigmoid(v)
}

/// `x · clamp((x + 3) / 6, 0, 1)`.
#[inline]
pub fn hard_swish<T: Scalar>(v: T) -> T {
    let three = scalar::<T>(3.0);
    let six = scalar::<T>(6.0);
    let gate = ((v + three) / six).max(T::zero()).min(T::one());
    v * gate
}

pub fn relu_map<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(relu)
}

pub fn sigmoid_map<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(sigmoid)
}

pub fn silu_map<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(silu)
}

pub fn hard_swish_map<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(hard_swish)
}

/// In-place softmax over one group of values (max-shifted for stability).
pub fn softmax_slice<T: Scalar>(vals: &mut [T]) {
    if vals.is_empty() {
        return;
    }
    let mut m = vals[0];
    for &v in vals.iter() {
        if v > m {
            m = v;
        }
    }
    let mut sum = T::zero();
    for v in vals.iter_mut() {
        *v = (*v - m).exp();
        sum = sum + *v;
    }
    for v in vals.iter_mut() {
        *v = *v / sum;
    }
}

/// Softmax across the channel axis, independently at every `(batch, y, x)`
/// location. Each group of `C` outputs sums to 1.
pub fn softmax_channels<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    let (n, c, h, w) = x.shape();
    let mut out = x.clone();
    let mut group = vec![T::zero(); c];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    group[ch] = x.at(b, ch, y, xx);
                }
                softmax_slice(&mut group);
                for ch in 0..c {
                    *out.at_mut(b, ch, y, xx) = group[ch];
                }
            }
        }
    }
    out
}

/// Inference-form batch normalization with stored statistics.
#[derive(Debug, Clone)]
pub struct BatchNormParams<T: Scalar> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub eps: T,
}

pub const DEFAULT_BN_EPS: f64 = 1e-3;

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(scale: Vec<T>, shift: Vec<T>, mean: Vec<T>, var: Vec<T>, eps: T) -> Result<Self> {
        if eps <= T::zero() {
            return Err(Error::param("batchnorm eps must be > 0"));
        }
        let c = scale.len();
        if shift.len() != c || mean.len() != c || var.len() != c {
            return Err(Error::shape(format!(
                "batchnorm parameter lengths differ: scale {c}, shift {}, mean {}, var {}",
                shift.len(),
                mean.len(),
                var.len()
            )));
        }
        Ok(Self {
            scale,
            shift,
            mean,
            var,
            eps,
        })
    }

    /// Exact pass-through: scale is chosen so `scale/sqrt(var+eps) == 1`.
    pub fn identity(channels: usize) -> Self {
        let eps = scalar::<T>(DEFAULT_BN_EPS);
        let gamma = (T::one() + eps).sqrt();
        Self {
            scale: vec![gamma; channels],
            shift: vec![T::zero(); channels],
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Learnable-parameter count (scale + shift).
    pub fn param_count(&self) -> u64 {
        2 * self.scale.len() as u64
    }
}

pub fn batchnorm_inference<T: Scalar>(
    x: &FeatureMap<T>,
    p: &BatchNormParams<T>,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if c != p.channels() {
        return Err(Error::shape(format!(
            "batchnorm: input has {c} channels, params have {}",
            p.channels()
        )));
    }
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let inv = T::one() / (p.var[ch] + p.eps).sqrt();
            let (scale, shift, mean) = (p.scale[ch], p.shift[ch], p.mean[ch]);
            let start = out.index(b, ch, 0, 0);
            for v in &mut out.data_mut()[start..start + h * w] {
                *v = scale * (*v - mean) * inv + shift;
            }
        }
    }
    Ok(out)
}

/// Windowed max pooling (used by the pyramid-pooling composite).
pub fn maxpool2d<T: Scalar>(
    x: &FeatureMap<T>,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if k == 0 || stride == 0 {
        return Err(Error::param("maxpool kernel and stride must be positive"));
    }
    let h_eff = h + 2 * padding;
    let w_eff = w + 2 * padding;
    if h_eff < k || w_eff < k {
        return Err(Error::shape(format!(
            "maxpool kernel {k} does not fit input {h}x{w} with padding {padding}"
        )));
    }
    let h_out = (h_eff - k) / stride + 1;
    let w_out = (w_eff - k) / stride + 1;
    let mut out = FeatureMap::zeros(n, c, h_out, w_out);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut best = T::neg_infinity();
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = x.at(b, ch, iy as usize, ix as usize);
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    *out.at_mut(b, ch, oy, ox) = best;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_map(rng: &mut StdRng, n: usize, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        let data = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMap::new(n, c, h, w, data).unwrap()
    }

    fn random_conv(
        rng: &mut StdRng,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> ConvParams<f64> {
        let weights = (0..(cin / groups) * k * k * cout)
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let bias = bias.then(|| (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect());
        ConvParams::new(cin, cout, (k, k), stride, padding, groups, weights, bias).unwrap()
    }

    /// Independent reference: five nested loops straight from the definition,
    /// with explicit zero padding.
    fn conv2d_reference(x: &FeatureMap<f64>, p: &ConvParams<f64>) -> FeatureMap<f64> {
        let (n, _, h, w) = x.shape();
        let (kh, kw) = p.kernel;
        let (h_out, w_out) = p.output_hw(h, w).unwrap();
        let cin_g = p.in_channels / p.groups;
        let cout_g = p.out_channels / p.groups;
        let mut out = FeatureMap::zeros(n, p.out_channels, h_out, w_out);
        for b in 0..n {
            for oc in 0..p.out_channels {
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let mut acc = p.bias.as_ref().map_or(0.0, |bv| bv[oc]);
                        for ic_g in 0..cin_g {
                            let ic = (oc / cout_g) * cin_g + ic_g;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = oy as isize * p.stride as isize + ky as isize
                                        - p.padding as isize;
                                    let ix = ox as isize * p.stride as isize + kx as isize
                                        - p.padding as isize;
                                    let xv = if iy >= 0
                                        && iy < h as isize
                                        && ix >= 0
                                        && ix < w as isize
                                    {
                                        x.at(b, ic, iy as usize, ix as usize)
                                    } else {
                                        0.0
                                    };
                                    acc += xv
                                        * p.weights[((oc * cin_g + ic_g) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        *out.at_mut(b, oc, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_all_ones_sums_kernel() {
        let x = FeatureMap::full(1, 1, 3, 3, 1.0f64);
        let p = ConvParams::new(1, 1, (3, 3), 1, 0, 1, vec![1.0; 9], None).unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), (1, 1, 1, 1));
        assert_abs_diff_eq!(y.data()[0], 9.0);
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = random_map(&mut rng, 2, 3, 5, 4);
        let p = ConvParams::identity_1x1(3);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_matches_reference_on_random_instance() {
        let mut rng = StdRng::seed_from_u64(11);
        let x = random_map(&mut rng, 1, 4, 8, 8);
        let p = random_conv(&mut rng, 4, 6, 3, 1, 1, 1, true);
        let y = conv2d(&x, &p).unwrap();
        let r = conv2d_reference(&x, &p);
        assert_eq!(y.shape(), (1, 6, 8, 8));
        for (a, b) in y.data().iter().zip(r.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_matches_reference_on_shape_sweep() {
        // All shapes up to (2, 8, 16, 16) would be slow to sweep exhaustively;
        // cover the contract with a seeded sample of strides/pads/groups.
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.random_range(1..=2);
            let groups = [1usize, 2, 4][rng.random_range(0..3)];
            let cin = groups * rng.random_range(1..=2);
            let cout = groups * rng.random_range(1..=2);
            let h = rng.random_range(1..=16);
            let w = rng.random_range(1..=16);
            let k = [1usize, 3, 5][rng.random_range(0..3)];
            let stride = rng.random_range(1..=2);
            let padding = rng.random_range(0..=k / 2 + 1);
            if h + 2 * padding < k || w + 2 * padding < k {
                continue;
            }
            let x = random_map(&mut rng, n, cin, h, w);
            let with_bias = rng.random();
            let p = random_conv(&mut rng, cin, cout, k, stride, padding, groups, with_bias);
            let y = conv2d(&x, &p).unwrap();
            let r = conv2d_reference(&x, &p);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data().iter().zip(r.data()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = FeatureMap::<f64>::zeros(1, 3, 4, 4);
        let p = ConvParams::<f64>::identity_1x1(4);
        let err = conv2d(&x, &p).unwrap_err().to_string();
        assert!(err.contains("3 channels"), "{err}");
        assert!(err.contains("in_channels 4"), "{err}");
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let x = FeatureMap::<f64>::zeros(1, 1, 2, 2);
        let p = ConvParams::new(1, 1, (3, 3), 1, 0, 1, vec![0.0; 9], None).unwrap();
        assert!(conv2d(&x, &p).is_err());
    }

    #[test]
    fn avg_pool_constant_and_small_cases() {
        let x = FeatureMap::full(1, 1, 2, 2, 5.0f64);
        assert_eq!(global_avg_pool(&x).unwrap(), vec![5.0]);
        let x = FeatureMap::new(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap(), vec![2.5]);
        assert_eq!(global_max_pool(&x).unwrap(), vec![4.0]);
    }

    #[test]
    fn avg_pool_matches_sum_oracle() {
        let mut rng = StdRng::seed_from_u64(17);
        let x = random_map(&mut rng, 2, 3, 5, 7);
        let pooled = global_avg_pool(&x).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                let plane = x.channel_plane(b, c);
                let mean: f64 = plane.iter().sum::<f64>() / plane.len() as f64;
                assert_abs_diff_eq!(pooled[b * 3 + c], mean, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pool_rejects_empty_spatial_extent() {
        let x = FeatureMap::<f64>::zeros(1, 2, 0, 4);
        assert!(global_avg_pool(&x).is_err());
        assert!(global_max_pool(&x).is_err());
    }

    #[test]
    fn activation_fixed_points() {
        assert_abs_diff_eq!(sigmoid(0.0f64), 0.5);
        assert_abs_diff_eq!(silu(0.0f64), 0.0);
        assert_abs_diff_eq!(relu(-1.5f64), 0.0);
        assert_abs_diff_eq!(relu(1.5f64), 1.5);
        // hard swish: identity above +3, zero below -3
        assert_abs_diff_eq!(hard_swish(4.0f64), 4.0);
        assert_abs_diff_eq!(hard_swish(-4.0f64), 0.0);
        assert_abs_diff_eq!(hard_swish(0.0f64), 0.0);
    }

    #[test]
    fn softmax_uniform_and_normalized() {
        let mut v = [0.0f64; 4];
        softmax_slice(&mut v);
        for x in v {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-15);
        }
        let mut rng = StdRng::seed_from_u64(23);
        let x = random_map(&mut rng, 1, 5, 3, 3);
        let s = softmax_channels(&x);
        for y in 0..3 {
            for xx in 0..3 {
                let sum: f64 = (0..5).map(|c| s.at(0, c, y, xx)).sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn batchnorm_identity_and_eps_rejection() {
        let mut rng = StdRng::seed_from_u64(29);
        let x = random_map(&mut rng, 1, 3, 4, 4);
        let bn = BatchNormParams::identity(3);
        let y = batchnorm_inference(&x, &bn).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(
            BatchNormParams::new(vec![1.0f64], vec![0.0], vec![0.0], vec![1.0], 0.0).is_err()
        );
        assert!(
            BatchNormParams::new(vec![1.0f64], vec![0.0], vec![0.0], vec![1.0], -1.0).is_err()
        );
    }

    #[test]
    fn batchnorm_formula() {
        let x = FeatureMap::new(1, 1, 1, 2, vec![3.0f64, -1.0]).unwrap();
        let bn =
            BatchNormParams::new(vec![2.0], vec![0.5], vec![1.0], vec![4.0], 1e-3).unwrap();
        let y = batchnorm_inference(&x, &bn).unwrap();
        let inv = 1.0 / (4.0f64 + 1e-3).sqrt();
        assert_abs_diff_eq!(y.data()[0], 2.0 * 2.0 * inv + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(y.data()[1], 2.0 * -2.0 * inv + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn maxpool_window() {
        let x = FeatureMap::new(
            1,
            1,
            3,
            3,
            vec![1.0f64, 2.0, 3.0, 4.0, 9.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let y = maxpool2d(&x, 3, 1, 1).unwrap();
        assert_eq!(y.shape(), (1, 1, 3, 3));
        // center window sees everything
        assert_abs_diff_eq!(y.at(0, 0, 1, 1), 9.0);
        // top-left window sees the 2x2 corner
        assert_abs_diff_eq!(y.at(0, 0, 0, 0), 9.0);
    }

    #[test]
    fn primitives_are_pure() {
        let mut rng = StdRng::seed_from_u64(31);
        let x = random_map(&mut rng, 1, 2, 6, 6);
        let p = random_conv(&mut rng, 2, 3, 3, 1, 1, 1, true);
        let a = conv2d(&x, &p).unwrap();
        let b = conv2d(&x, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
    }

    #[test]
    fn pool_then_broadcast_of_constant_is_identity() {
        let x = FeatureMap::full(2, 3, 4, 4, 1.25f64);
        let pooled = global_avg_pool(&x).unwrap();
        let mut re = FeatureMap::zeros(2, 3, 4, 4);
        for b in 0..2 {
            for c in 0..3 {
                let v = pooled[b * 3 + c];
                let start = re.index(b, c, 0, 0);
                for slot in &mut re.data_mut()[start..start + 16] {
                    *slot = v;
                }
            }
        }
        assert_eq!(re, x);
    }
}
