//! Dense channel-major volumes.

use std::ops::{Deref, DerefMut};

use crate::error::{ensure_contract, Result};
use crate::scalar::Scalar;
use crate::JOINT_COUNT;

/// `channels x height x width` array stored channel-major, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume<S> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Scalar> FeatureVolume<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, S::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: S) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Result<Self> {
        ensure_contract!(
            channels >= 1 && height >= 1 && width >= 1,
            "volume dimensions must be positive, got {channels}x{height}x{width}"
        );
        ensure_contract!(
            data.len() == channels * height * width,
            "volume data length {} does not match {channels}x{height}x{width}",
            data.len()
        );
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: S) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[S] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [S] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> FeatureVolume<T> {
        FeatureVolume {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }

    /// Channel concatenation of volumes sharing a spatial size.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        ensure_contract!(!parts.is_empty(), "concat of zero volumes");
        let (h, w) = (parts[0].height, parts[0].width);
        ensure_contract!(
            parts.iter().all(|p| p.height == h && p.width == w),
            "concat requires equal spatial sizes"
        );
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(channels * h * w);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            channels,
            height: h,
            width: w,
            data,
        })
    }
}

/// Per-joint response maps, one channel per hand joint.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack<S>(FeatureVolume<S>);

impl<S: Scalar> HeatmapStack<S> {
    pub fn new(maps: FeatureVolume<S>) -> Result<Self> {
        ensure_contract!(
            maps.channels() == JOINT_COUNT,
            "heatmap stack needs {JOINT_COUNT} maps, got {}",
            maps.channels()
        );
        Ok(Self(maps))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(FeatureVolume::zeros(JOINT_COUNT, height, width))
    }

    pub fn volume(&self) -> &FeatureVolume<S> {
        &self.0
    }

    pub fn into_volume(self) -> FeatureVolume<S> {
        self.0
    }
}

impl<S> Deref for HeatmapStack<S> {
    type Target = FeatureVolume<S>;
    fn deref(&self) -> &FeatureVolume<S> {
        &self.0
    }
}

impl<S> DerefMut for HeatmapStack<S> {
    fn deref_mut(&mut self) -> &mut FeatureVolume<S> {
        &mut self.0
    }
}
