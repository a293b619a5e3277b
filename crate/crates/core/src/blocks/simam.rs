//! Parameter-free attention from a closed-form neuron energy.
//!
//! Each neuron `t` of a channel gets the minimal energy
//! `e*_t = 4(σ̂² + λ) / ((t − μ̂)² + 2σ̂² + 2λ)` where `μ̂` is the channel
//! mean and `σ̂²` the channel variance with an `M−1` denominator, both over
//! all `M = H·W` entries. The importance `1/e*_t` drives the output gate.
//! Adds zero learnable parameters.

use crate::metrics::complexity::PrimitiveOp;
use crate::numerics::{sigmoid, FeatureMap};
use crate::{scalar, Error, Result, Scalar};

/// Output gating applied to the importance map `1/E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimAmGate {
    /// `x ⊙ sigmoid(1/E)` — bounded, the reference behavior of the module.
    #[default]
    Sigmoid,
    /// `x ⊙ (1/E)` — the literal importance-weighted form.
    Raw,
}

#[derive(Debug, Clone, Copy)]
pub struct SimAMParams<T: Scalar> {
    pub lambda: T,
    pub gate: SimAmGate,
}

impl<T: Scalar> SimAMParams<T> {
    pub fn new(lambda: T, gate: SimAmGate) -> Result<Self> {
        if lambda <= T::zero() {
            return Err(Error::param(format!("simam lambda {lambda} must be > 0")));
        }
        Ok(Self { lambda, gate })
    }
}

impl<T: Scalar> Default for SimAMParams<T> {
    fn default() -> Self {
        Self {
            lambda: scalar(1e-4),
            gate: SimAmGate::Sigmoid,
        }
    }
}

/// Importance map `1/e*` over the whole tensor, before gating.
pub fn simam_importance<T: Scalar>(
    x: &FeatureMap<T>,
    p: &SimAMParams<T>,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    let m = h * w;
    if m < 2 {
        return Err(Error::shape(format!(
            "simam needs at least 2 spatial entries per channel, got {h}x{w}"
        )));
    }
    let mf = scalar::<T>(m as f64);
    let m1 = scalar::<T>((m - 1) as f64);
    let four = scalar::<T>(4.0);
    let two = scalar::<T>(2.0);
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let plane = x.channel_plane(b, ch);
            let mut sum = T::zero();
            for &v in plane {
                sum = sum + v;
            }
            let mean = sum / mf;
            let mut sq = T::zero();
            for &v in plane {
                let d = v - mean;
                sq = sq + d * d;
            }
            let var = sq / m1;
            let denom_base = two * var + two * p.lambda;
            let num = four * (var + p.lambda);
            let start = out.index(b, ch, 0, 0);
            for (slot, &v) in out.data_mut()[start..start + m].iter_mut().zip(plane) {
                let d = v - mean;
                let energy = num / (d * d + denom_base);
                *slot = T::one() / energy;
            }
        }
    }
    Ok(out)
}

/// `x ⊙ gate(1/E)`; shape preserved, zero parameters added.
pub fn simam_forward<T: Scalar>(x: &FeatureMap<T>, p: &SimAMParams<T>) -> Result<FeatureMap<T>> {
    let importance = simam_importance(x, p)?;
    let mut out = x.clone();
    for (o, &imp) in out.data_mut().iter_mut().zip(importance.data()) {
        let g = match p.gate {
            SimAmGate::Sigmoid => sigmoid(imp),
            SimAmGate::Raw => imp,
        };
        *o = *o * g;
    }
    Ok(out)
}

pub fn lower(channels: usize, h: usize, w: usize) -> Vec<PrimitiveOp> {
    vec![PrimitiveOp::Ops {
        name: "simam",
        // two reduction passes plus the per-neuron energy and gate (~6 ops)
        count: (channels * h * w) as u64 * 8,
    }]
}

/// The neuron energy
/// `e_t(w, b) = (1/(M−1)) Σ_i (−1 − (w·x_i + b))² + (1 − (w·t + b))² + λw²`
/// over the `M−1` other neurons `x_i` of the channel.
pub fn energy<T: Scalar>(t: T, others: &[T], lambda: T, w: T, b: T) -> T {
    let m1 = scalar::<T>(others.len() as f64);
    let mut acc = T::zero();
    for &x in others {
        let r = -T::one() - (w * x + b);
        acc = acc + r * r;
    }
    let rt = T::one() - (w * t + b);
    acc / m1 + rt * rt + lambda * w * w
}

/// Closed-form minimizer of [`energy`], from the mean/variance over the
/// other neurons: `w_t = 2(t−μ_t)/((t−μ_t)² + 2σ_t² + 2λ)`,
/// `b_t = −(t+μ_t)·w_t/2`.
pub fn energy_minimizer<T: Scalar>(t: T, others: &[T], lambda: T) -> (T, T) {
    let two = scalar::<T>(2.0);
    let m1 = scalar::<T>(others.len() as f64);
    let mut sum = T::zero();
    for &x in others {
        sum = sum + x;
    }
    let mu = sum / m1;
    let mut sq = T::zero();
    for &x in others {
        let d = x - mu;
        sq = sq + d * d;
    }
    let var = sq / m1;
    let d = t - mu;
    let w = two * d / (d * d + two * var + two * lambda);
    let b = -(t + mu) * w / two;
    (w, b)
}

/// Minimal energy value `4(σ_t² + λ) / ((t − μ_t)² + 2σ_t² + 2λ)` attained
/// by [`energy_minimizer`].
pub fn minimal_energy<T: Scalar>(t: T, others: &[T], lambda: T) -> T {
    let two = scalar::<T>(2.0);
    let four = scalar::<T>(4.0);
    let m1 = scalar::<T>(others.len() as f64);
    let mut sum = T::zero();
    for &x in others {
        sum = sum + x;
    }
    let mu = sum / m1;
    let mut sq = T::zero();
    for &x in others {
        let d = x - mu;
        sq = sq + d * d;
    }
    let var = sq / m1;
    let d = t - mu;
    four * (var + lambda) / (d * d + two * var + two * lambda)
}
