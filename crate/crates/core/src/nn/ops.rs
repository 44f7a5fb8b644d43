//! Parameter-free layers with their vector-Jacobian products.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::FeatureVolume;

/// Pointwise nonlinearity used after convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// max(0, x)
    #[default]
    Rectifier,
    /// ln(1 + e^x); smooth everywhere, used for finite-difference checks.
    Smooth,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Rectifier => x.max(S::zero()),
            Activation::Smooth => {
                if x > S::zero() {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative evaluated at the pre-activation value.
    #[inline]
    pub fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Rectifier => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Smooth => S::one() / (S::one() + (-x).exp()),
        }
    }
}

/// Source index pair and interpolation weight for one output coordinate of a
/// half-pixel-centred bilinear resize.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize of every channel to `out_h x out_w`.
pub fn bilinear_resize<S: Scalar>(x: &FeatureVolume<S>, out_h: usize, out_w: usize) -> FeatureVolume<S> {
    let ty = taps(x.height(), out_h);
    let tx = taps(x.width(), out_w);
    let mut out = FeatureVolume::zeros(x.channels(), out_h, out_w);
    for c in 0..x.channels() {
        let src = x.channel(c);
        let w = x.width();
        let dst = out.channel_mut(c);
        for (oy, t) in ty.iter().enumerate() {
            let fy = S::of(t.frac);
            for (ox, u) in tx.iter().enumerate() {
                let fx = S::of(u.frac);
                let a = src[t.lo * w + u.lo];
                let b = src[t.lo * w + u.hi];
                let cc = src[t.hi * w + u.lo];
                let d = src[t.hi * w + u.hi];
                let top = a + (b - a) * fx;
                let bot = cc + (d - cc) * fx;
                dst[oy * out_w + ox] = top + (bot - top) * fy;
            }
        }
    }
    out
}

/// Transpose of [`bilinear_resize`]: scatters output gradients back to the input grid.
pub fn bilinear_resize_backward<S: Scalar>(grad_out: &FeatureVolume<S>, in_h: usize, in_w: usize) -> FeatureVolume<S> {
    let (out_h, out_w) = (grad_out.height(), grad_out.width());
    let ty = taps(in_h, out_h);
    let tx = taps(in_w, out_w);
    let mut gin = FeatureVolume::zeros(grad_out.channels(), in_h, in_w);
    for c in 0..grad_out.channels() {
        let g = grad_out.channel(c);
        let dst = gin.channel_mut(c);
        for (oy, t) in ty.iter().enumerate() {
            let fy = S::of(t.frac);
            for (ox, u) in tx.iter().enumerate() {
                let fx = S::of(u.frac);
                let v = g[oy * out_w + ox];
                let top = v * (S::one() - fy);
                let bot = v * fy;
                dst[t.lo * in_w + u.lo] += top * (S::one() - fx);
                dst[t.lo * in_w + u.hi] += top * fx;
                dst[t.hi * in_w + u.lo] += bot * (S::one() - fx);
                dst[t.hi * in_w + u.hi] += bot * fx;
            }
        }
    }
    gin
}

/// Per-channel statistics recorded by [`channel_attention_forward`].
#[derive(Debug, Clone)]
pub struct AttentionCache<S> {
    pub argmax: Vec<usize>,
    pub scale: Vec<S>,
}

/// `out_c = x_c * (max(x_c) + mean(x_c))`, pooled over the spatial extent.
pub fn channel_attention_forward<S: Scalar>(x: &FeatureVolume<S>) -> (FeatureVolume<S>, AttentionCache<S>) {
    let n = S::of(x.plane_len() as f64);
    let mut out = x.clone();
    let mut argmax = Vec::with_capacity(x.channels());
    let mut scale = Vec::with_capacity(x.channels());
    for c in 0..x.channels() {
        let plane = x.channel(c);
        let (mut best, mut best_i) = (plane[0], 0);
        let mut sum = S::zero();
        for (i, &v) in plane.iter().enumerate() {
            if v > best {
                best = v;
                best_i = i;
            }
            sum += v;
        }
        let s = best + sum / n;
        out.channel_mut(c).iter_mut().for_each(|v| *v *= s);
        argmax.push(best_i);
        scale.push(s);
    }
    (out, AttentionCache { argmax, scale })
}

pub fn channel_attention_backward<S: Scalar>(
    x: &FeatureVolume<S>,
    cache: &AttentionCache<S>,
    grad_out: &FeatureVolume<S>,
) -> FeatureVolume<S> {
    let inv_n = S::one() / S::of(x.plane_len() as f64);
    let mut gin = FeatureVolume::zeros(x.channels(), x.height(), x.width());
    for c in 0..x.channels() {
        let xs = x.channel(c);
        let gs = grad_out.channel(c);
        let dot: S = xs.iter().zip(gs).map(|(&a, &b)| a * b).sum();
        let s = cache.scale[c];
        let dst = gin.channel_mut(c);
        for (d, &g) in dst.iter_mut().zip(gs) {
            *d = g * s + dot * inv_n;
        }
        dst[cache.argmax[c]] += dot;
    }
    gin
}

/// Per-channel extrema recorded by [`minmax_normalize_forward`].
#[derive(Debug, Clone)]
pub struct MinMaxCache<S> {
    pub argmin: Vec<usize>,
    pub argmax: Vec<usize>,
    pub range: Vec<S>,
}

/// `(x - min) / (max - min)` per channel; a constant channel maps to zeros.
pub fn minmax_normalize_forward<S: Scalar>(x: &FeatureVolume<S>) -> (FeatureVolume<S>, MinMaxCache<S>) {
    let mut out = x.clone();
    let mut cache = MinMaxCache {
        argmin: Vec::with_capacity(x.channels()),
        argmax: Vec::with_capacity(x.channels()),
        range: Vec::with_capacity(x.channels()),
    };
    for c in 0..x.channels() {
        let plane = x.channel(c);
        let (mut lo, mut lo_i, mut hi, mut hi_i) = (plane[0], 0, plane[0], 0);
        for (i, &v) in plane.iter().enumerate() {
            if v < lo {
                lo = v;
                lo_i = i;
            }
            if v > hi {
                hi = v;
                hi_i = i;
            }
        }
        let range = hi - lo;
        let dst = out.channel_mut(c);
        if range > S::zero() {
            dst.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            dst.iter_mut().for_each(|v| *v = S::zero());
        }
        cache.argmin.push(lo_i);
        cache.argmax.push(hi_i);
        cache.range.push(range);
    }
    (out, cache)
}

pub fn minmax_normalize_backward<S: Scalar>(
    out: &FeatureVolume<S>,
    cache: &MinMaxCache<S>,
    grad_out: &FeatureVolume<S>,
) -> FeatureVolume<S> {
    let mut gin = FeatureVolume::zeros(out.channels(), out.height(), out.width());
    for c in 0..out.channels() {
        let r = cache.range[c];
        if r <= S::zero() {
            continue;
        }
        let ys = out.channel(c);
        let gs = grad_out.channel(c);
        let mut to_min = S::zero();
        let mut to_max = S::zero();
        let dst = gin.channel_mut(c);
        for ((d, &g), &y) in dst.iter_mut().zip(gs).zip(ys) {
            *d = g / r;
            to_min += g * (y - S::one());
            to_max -= g * y;
        }
        dst[cache.argmin[c]] += to_min / r;
        dst[cache.argmax[c]] += to_max / r;
    }
    gin
}

/// Offset inside the square root of [`rms_normalize_forward`].
pub const RMS_EPS: f64 = 1e-12;

/// Divides the whole volume by its root-mean-square value.
pub fn rms_normalize_forward<S: Scalar>(x: &FeatureVolume<S>) -> (FeatureVolume<S>, S) {
    let n = S::of(x.data().len() as f64);
    let ms = x.data().iter().map(|&v| v * v).sum::<S>() / n;
    let rms = (ms + S::of(RMS_EPS)).sqrt();
    (x.map(|v| v / rms), rms)
}

pub fn rms_normalize_backward<S: Scalar>(
    out: &FeatureVolume<S>,
    rms: S,
    grad_out: &FeatureVolume<S>,
) -> FeatureVolume<S> {
    // y = x / r, dr/dx = x / (n r)  =>  dx = (g - y <g, y> / n) / r
    let n = S::of(out.data().len() as f64);
    let dot: S = out.data().iter().zip(grad_out.data()).map(|(&y, &g)| y * g).sum();
    let k = dot / n;
    let mut gin = grad_out.clone();
    for (d, &y) in gin.data_mut().iter_mut().zip(out.data()) {
        *d = (*d - y * k) / rms;
    }
    gin
}
