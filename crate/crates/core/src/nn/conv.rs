//! 2D convolution via im2col + GEMM.

use crate::scalar::Scalar;
use crate::tensor::FeatureVolume;

/// Geometry of one convolution application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeometry {
    #[inline]
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    #[inline]
    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    #[inline]
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    #[inline]
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output spatial extent of a convolution along one axis.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

fn im2col<S: Scalar>(x: &[S], g: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let k = g.kernel;
    let mut cols = vec![S::zero(); g.patch_len() * p];
    for c in 0..g.in_channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], g: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let k = g.kernel;
    let mut x = vec![S::zero(); g.in_channels * g.in_h * g.in_w];
    for c in 0..g.in_channels {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let base = iy as usize * g.in_w;
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            plane[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `weight` is `[out, in, k, k]`, `bias` is `[out]`.
pub fn conv2d_forward<S: Scalar>(x: &FeatureVolume<S>, weight: &[S], bias: &[S], g: &ConvGeometry) -> FeatureVolume<S> {
    debug_assert_eq!(x.shape(), (g.in_channels, g.in_h, g.in_w));
    debug_assert_eq!(weight.len(), g.out_channels * g.patch_len());
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let mut out = vec![S::zero(); g.out_channels * p];
    for (o, &b) in bias.iter().enumerate() {
        out[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = b);
    }
    let owned;
    let cols: &[S] = if g.is_pointwise() {
        x.data()
    } else {
        owned = im2col(x.data(), g);
        &owned
    };
    let kk = g.patch_len();
    S::gemm(
        g.out_channels,
        kk,
        p,
        weight,
        kk as isize,
        1,
        cols,
        p as isize,
        1,
        S::one(),
        &mut out,
        p as isize,
        1,
    );
    FeatureVolume::from_vec(g.out_channels, oh, ow, out).expect("conv output shape")
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv2d_backward<S: Scalar>(
    x: &FeatureVolume<S>,
    weight: &[S],
    g: &ConvGeometry,
    grad_out: &FeatureVolume<S>,
    grad_weight: &mut [S],
    grad_bias: &mut [S],
) -> FeatureVolume<S> {
    let p = g.out_h() * g.out_w();
    let kk = g.patch_len();
    let go = grad_out.data();
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += go[o * p..(o + 1) * p].iter().copied().sum::<S>();
    }
    let owned;
    let cols: &[S] = if g.is_pointwise() {
        x.data()
    } else {
        owned = im2col(x.data(), g);
        &owned
    };
    // dW += dOut * cols^T
    S::gemm(
        g.out_channels,
        p,
        kk,
        go,
        p as isize,
        1,
        cols,
        1,
        p as isize,
        S::one(),
        grad_weight,
        kk as isize,
        1,
    );
    // dCols = W^T * dOut
    let mut dcols = vec![S::zero(); kk * p];
    S::gemm(
        kk,
        g.out_channels,
        p,
        weight,
        1,
        kk as isize,
        go,
        p as isize,
        1,
        S::zero(),
        &mut dcols,
        p as isize,
        1,
    );
    let dx = if g.is_pointwise() { dcols } else { col2im(&dcols, g) };
    FeatureVolume::from_vec(g.in_channels, g.in_h, g.in_w, dx).expect("conv input gradient shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as a reference.
    fn direct(x: &FeatureVolume<f64>, w: &[f64], b: &[f64], g: &ConvGeometry) -> FeatureVolume<f64> {
        let k = g.kernel;
        FeatureVolume::from_fn(g.out_channels, g.out_h(), g.out_w(), |o, oy, ox| {
            let mut acc = b[o];
            for c in 0..g.in_channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                            acc += w[((o * g.in_channels + c) * k + ky) * k + kx] * x.get(c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn geometry(kernel: usize, stride: usize) -> ConvGeometry {
        ConvGeometry {
            in_channels: 3,
            out_channels: 4,
            kernel,
            stride,
            pad: kernel / 2,
            in_h: 9,
            in_w: 8,
        }
    }

    fn fixture(g: &ConvGeometry) -> (FeatureVolume<f64>, Vec<f64>, Vec<f64>) {
        let x = FeatureVolume::from_fn(g.in_channels, g.in_h, g.in_w, |c, y, x| {
            ((c * 31 + y * 7 + x * 3) as f64 * 0.13).sin()
        });
        let w: Vec<f64> = (0..g.out_channels * g.patch_len())
            .map(|i| (i as f64 * 0.71).cos() * 0.3)
            .collect();
        let b: Vec<f64> = (0..g.out_channels).map(|i| i as f64 * 0.1 - 0.2).collect();
        (x, w, b)
    }

    #[test]
    fn forward_matches_direct_convolution() {
        for (k, s) in [(1, 1), (3, 1), (3, 2), (5, 2), (5, 1)] {
            let g = geometry(k, s);
            let (x, w, b) = fixture(&g);
            let fast = conv2d_forward(&x, &w, &b, &g);
            let slow = direct(&x, &w, &b, &g);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn stride_two_same_padding_halves_even_sizes() {
        assert_eq!(conv_out_len(256, 5, 2, 2), 128);
        assert_eq!(conv_out_len(64, 3, 2, 1), 32);
        assert_eq!(conv_out_len(64, 3, 1, 1), 64);
        assert_eq!(conv_out_len(256, 4, 4, 0), 64);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), y> is bilinear; check gradients against finite differences of a linear functional
        for (k, s) in [(1, 1), (3, 2), (5, 1)] {
            let g = geometry(k, s);
            let (x, w, b) = fixture(&g);
            let probe = FeatureVolume::from_fn(g.out_channels, g.out_h(), g.out_w(), |c, y, x| {
                ((c + 2 * y + 3 * x) as f64 * 0.37).cos()
            });
            let f = |x: &FeatureVolume<f64>, w: &[f64], b: &[f64]| -> f64 {
                conv2d_forward(x, w, b, &g)
                    .data()
                    .iter()
                    .zip(probe.data())
                    .map(|(a, p)| a * p)
                    .sum()
            };
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; b.len()];
            let gx = conv2d_backward(&x, &w, &g, &probe, &mut gw, &mut gb);
            let h = 1e-6;
            for idx in [0, 5, x.data().len() - 1] {
                let mut xp = x.clone();
                xp.data_mut()[idx] += h;
                let mut xm = x.clone();
                xm.data_mut()[idx] -= h;
                let fd = (f(&xp, &w, &b) - f(&xm, &w, &b)) / (2.0 * h);
                assert!((fd - gx.data()[idx]).abs() < 1e-7);
            }
            for idx in [0, 7, w.len() - 1] {
                let mut wp = w.clone();
                wp[idx] += h;
                let mut wm = w.clone();
                wm[idx] -= h;
                let fd = (f(&x, &wp, &b) - f(&x, &wm, &b)) / (2.0 * h);
                assert!((fd - gw[idx]).abs() < 1e-7);
            }
            let sum_probe: Vec<f64> = (0..g.out_channels).map(|o| probe.channel(o).iter().sum()).collect();
            for (a, e) in gb.iter().zip(sum_probe) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
