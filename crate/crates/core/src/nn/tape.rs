//! Reverse-mode differentiation over channel volumes.
//!
//! Every forward op appends a node holding its output value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates vector-Jacobian products.

use crate::error::{ensure_contract, Result};
use crate::nn::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::nn::ops::{
    bilinear_resize, bilinear_resize_backward, channel_attention_backward, channel_attention_forward,
    minmax_normalize_backward, minmax_normalize_forward, rms_normalize_backward, rms_normalize_forward, Activation,
    AttentionCache, MinMaxCache,
};
use crate::nn::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::FeatureVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<S> {
    Input,
    Conv {
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
        geometry: ConvGeometry,
    },
    Act {
        input: NodeId,
        kind: Activation,
    },
    Add(NodeId, NodeId),
    Resize {
        input: NodeId,
    },
    Concat(Vec<NodeId>),
    /// Output channel `c` is input channel `perm[c]`.
    Permute {
        input: NodeId,
        perm: Vec<usize>,
    },
    Attention {
        input: NodeId,
        cache: AttentionCache<S>,
    },
    MinMax {
        input: NodeId,
        cache: MinMaxCache<S>,
    },
    RmsNormalize {
        input: NodeId,
        rms: S,
    },
    /// `out_k = sum_q m[k][q] in_q`, row-major square matrix.
    Mix {
        input: NodeId,
        matrix: Vec<S>,
    },
    /// Per-channel constant scale.
    Scale {
        input: NodeId,
        factors: Vec<S>,
    },
}

struct Node<S> {
    value: FeatureVolume<S>,
    op: Op<S>,
}

pub struct Tape<'p, S: Scalar> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<S> {
        self.params
    }

    fn push(&mut self, value: FeatureVolume<S>, op: Op<S>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &FeatureVolume<S> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: FeatureVolume<S>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Convolution with weights `{layer}.weight` and `{layer}.bias`.
    pub fn conv(&mut self, input: NodeId, layer: &str, stride: usize, pad: usize) -> Result<NodeId> {
        let params = self.params;
        let weight = params
            .id(&format!("{layer}.weight"))
            .ok_or_else(|| crate::Error::Contract(format!("missing parameter {layer}.weight")))?;
        let bias = params
            .id(&format!("{layer}.bias"))
            .ok_or_else(|| crate::Error::Contract(format!("missing parameter {layer}.bias")))?;
        let w = params.get(weight);
        let x = self.value(input);
        ensure_contract!(
            w.shape.len() == 4 && w.shape[1] == x.channels(),
            "{layer}: weight shape {:?} incompatible with {} input channels",
            w.shape,
            x.channels()
        );
        let geometry = ConvGeometry {
            in_channels: x.channels(),
            out_channels: w.shape[0],
            kernel: w.shape[2],
            stride,
            pad,
            in_h: x.height(),
            in_w: x.width(),
        };
        ensure_contract!(
            x.height() + 2 * pad >= geometry.kernel && x.width() + 2 * pad >= geometry.kernel,
            "{layer}: input {}x{} smaller than kernel",
            x.height(),
            x.width()
        );
        let out = conv2d_forward(x, &w.data, &params.get(bias).data, &geometry);
        Ok(self.push(
            out,
            Op::Conv {
                input,
                weight,
                bias,
                geometry,
            },
        ))
    }

    pub fn act(&mut self, input: NodeId, kind: Activation) -> NodeId {
        let out = self.value(input).map(|v| kind.apply(v));
        self.push(out, Op::Act { input, kind })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        ensure_contract!(
            self.value(a).shape() == self.value(b).shape(),
            "add of mismatched shapes {:?} and {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        );
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn resize(&mut self, input: NodeId, out_h: usize, out_w: usize) -> NodeId {
        let out = bilinear_resize(self.value(input), out_h, out_w);
        self.push(out, Op::Resize { input })
    }

    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let parts: Vec<&FeatureVolume<S>> = inputs.iter().map(|&i| self.value(i)).collect();
        let out = FeatureVolume::concat(&parts)?;
        Ok(self.push(out, Op::Concat(inputs.to_vec())))
    }

    pub fn permute_channels(&mut self, input: NodeId, perm: Vec<usize>) -> Result<NodeId> {
        let x = self.value(input);
        ensure_contract!(perm.len() == x.channels(), "permutation length mismatch");
        let mut out = FeatureVolume::zeros(x.channels(), x.height(), x.width());
        for (c, &src) in perm.iter().enumerate() {
            out.channel_mut(c).copy_from_slice(x.channel(src));
        }
        Ok(self.push(out, Op::Permute { input, perm }))
    }

    pub fn attention(&mut self, input: NodeId) -> NodeId {
        let (out, cache) = channel_attention_forward(self.value(input));
        self.push(out, Op::Attention { input, cache })
    }

    pub fn minmax(&mut self, input: NodeId) -> NodeId {
        let (out, cache) = minmax_normalize_forward(self.value(input));
        self.push(out, Op::MinMax { input, cache })
    }

    pub fn rms_normalize(&mut self, input: NodeId) -> NodeId {
        let (out, rms) = rms_normalize_forward(self.value(input));
        self.push(out, Op::RmsNormalize { input, rms })
    }

    pub fn mix_channels(&mut self, input: NodeId, matrix: Vec<S>) -> Result<NodeId> {
        let x = self.value(input);
        let k = x.channels();
        ensure_contract!(matrix.len() == k * k, "mixing matrix must be {k}x{k}");
        let mut out = FeatureVolume::zeros(k, x.height(), x.width());
        for r in 0..k {
            for q in 0..k {
                let m = matrix[r * k + q];
                if m == S::zero() {
                    continue;
                }
                let src = x.channel(q);
                for (o, &s) in out.channel_mut(r).iter_mut().zip(src) {
                    *o += m * s;
                }
            }
        }
        Ok(self.push(out, Op::Mix { input, matrix }))
    }

    pub fn scale_channels(&mut self, input: NodeId, factors: Vec<S>) -> Result<NodeId> {
        let x = self.value(input);
        ensure_contract!(factors.len() == x.channels(), "one factor per channel required");
        let mut out = x.clone();
        for (c, &f) in factors.iter().enumerate() {
            out.channel_mut(c).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(out, Op::Scale { input, factors }))
    }

    /// Propagates the seeded output gradients back to every parameter.
    pub fn backward(&self, seeds: Vec<(NodeId, FeatureVolume<S>)>) -> ParamStore<S> {
        let mut grads: Vec<Option<FeatureVolume<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads = self.params.zeros_like();
        for (id, g) in seeds {
            accumulate(&mut grads[id.0], g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    input,
                    weight,
                    bias,
                    geometry,
                } => {
                    let w = &self.params.get(*weight).data;
                    let mut gw = std::mem::take(&mut pgrads.get_mut(*weight).data);
                    let mut gb = std::mem::take(&mut pgrads.get_mut(*bias).data);
                    let gx = conv2d_backward(self.value(*input), w, geometry, &g, &mut gw, &mut gb);
                    pgrads.get_mut(*weight).data = gw;
                    pgrads.get_mut(*bias).data = gb;
                    accumulate(&mut grads[input.0], gx);
                }
                Op::Act { input, kind } => {
                    let x = self.value(*input);
                    let mut gx = g;
                    for (d, &xv) in gx.data_mut().iter_mut().zip(x.data()) {
                        *d *= kind.derivative(xv);
                    }
                    accumulate(&mut grads[input.0], gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::Resize { input } => {
                    let x = self.value(*input);
                    accumulate(&mut grads[input.0], bilinear_resize_backward(&g, x.height(), x.width()));
                }
                Op::Concat(inputs) => {
                    let mut offset = 0;
                    for i in inputs {
                        let x = self.value(*i);
                        let n = x.data().len();
                        let part = FeatureVolume::from_vec(
                            x.channels(),
                            x.height(),
                            x.width(),
                            g.data()[offset..offset + n].to_vec(),
                        )
                        .expect("concat slice");
                        offset += n;
                        accumulate(&mut grads[i.0], part);
                    }
                }
                Op::Permute { input, perm } => {
                    let mut gx = FeatureVolume::zeros(g.channels(), g.height(), g.width());
                    for (c, &src) in perm.iter().enumerate() {
                        for (d, &v) in gx.channel_mut(src).iter_mut().zip(g.channel(c)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[input.0], gx);
                }
                Op::Attention { input, cache } => {
                    let gx = channel_attention_backward(self.value(*input), cache, &g);
                    accumulate(&mut grads[input.0], gx);
                }
                Op::MinMax { input, cache } => {
                    let gx = minmax_normalize_backward(&node.value, cache, &g);
                    accumulate(&mut grads[input.0], gx);
                }
                Op::RmsNormalize { input, rms } => {
                    let gx = rms_normalize_backward(&node.value, *rms, &g);
                    accumulate(&mut grads[input.0], gx);
                }
                Op::Mix { input, matrix } => {
                    let k = g.channels();
                    let mut gx = FeatureVolume::zeros(k, g.height(), g.width());
                    for r in 0..k {
                        for q in 0..k {
                            let m = matrix[r * k + q];
                            if m == S::zero() {
                                continue;
                            }
                            for (d, &v) in gx.channel_mut(q).iter_mut().zip(g.channel(r)) {
                                *d += m * v;
                            }
                        }
                    }
                    accumulate(&mut grads[input.0], gx);
                }
                Op::Scale { input, factors } => {
                    let mut gx = g;
                    for (c, &f) in factors.iter().enumerate() {
                        gx.channel_mut(c).iter_mut().for_each(|v| *v *= f);
                    }
                    accumulate(&mut grads[input.0], gx);
                }
            }
        }
        pgrads
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<FeatureVolume<S>>, g: FeatureVolume<S>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParamStore<f64> {
        let mut p = ParamStore::new();
        let w: Vec<f64> = (0..4 * 2 * 9).map(|i| ((i * 7) as f64 * 0.31).sin() * 0.4).collect();
        p.insert("c1.weight", vec![4, 2, 3, 3], w);
        p.insert("c1.bias", vec![4], vec![0.1, -0.2, 0.05, 0.0]);
        let w2: Vec<f64> = (0..3 * 8).map(|i| ((i * 3) as f64 * 0.57).cos() * 0.5).collect();
        p.insert("c2.weight", vec![3, 8, 1, 1], w2);
        p.insert("c2.bias", vec![3], vec![0.0, 0.3, -0.1]);
        p
    }

    /// Small graph touching every op; returns a scalar loss and its tape seeds.
    fn run<'a>(
        p: &'a ParamStore<f64>,
        x: &FeatureVolume<f64>,
    ) -> (f64, Tape<'a, f64>, Vec<(NodeId, FeatureVolume<f64>)>) {
        let mut t = Tape::new(p);
        let i = t.input(x.clone());
        let c = t.conv(i, "c1", 2, 1).unwrap();
        let a = t.act(c, Activation::Smooth);
        let up = t.resize(a, 6, 6);
        let perm = t.permute_channels(up, vec![2, 0, 3, 1]).unwrap();
        let cat = t.concat(&[perm, up]).unwrap();
        let at = t.attention(cat);
        let h = t.conv(at, "c2", 1, 0).unwrap();
        let n = t.minmax(h);
        let m = t
            .mix_channels(n, vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.25, 0.0, 0.25, 1.0])
            .unwrap();
        let s = t.scale_channels(m, vec![0.2, 0.3, 0.5]).unwrap();
        let s = t.add(s, n).unwrap();
        let r = t.rms_normalize(at);
        let r = t.conv(r, "c2", 1, 0).unwrap();
        let sum = t.add(s, r).unwrap();
        let target = FeatureVolume::from_fn(3, 6, 6, |c, y, x| ((c + y * x) as f64 * 0.1).cos() * 0.5);
        let v = t.value(sum);
        let mut g = FeatureVolume::zeros(3, 6, 6);
        let mut loss = 0.0;
        for (i, (&a, &b)) in v.data().iter().zip(target.data()).enumerate() {
            loss += (a - b) * (a - b);
            g.data_mut()[i] = 2.0 * (a - b);
        }
        (loss, t, vec![(sum, g)])
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = params();
        let x = FeatureVolume::from_fn(2, 5, 5, |c, y, x| ((c * 17 + y * 3 + x * 5) as f64 * 0.23).sin());
        let (_, tape, seeds) = run(&p, &x);
        let grads = tape.backward(seeds);
        let h = 1e-6;
        for flat in 0..p.scalar_count() {
            let mut pp = p.clone();
            pp.flat_set(flat, p.flat_get(flat) + h);
            let mut pm = p.clone();
            pm.flat_set(flat, p.flat_get(flat) - h);
            let fd = (run(&pp, &x).0 - run(&pm, &x).0) / (2.0 * h);
            let an = grads.flat_get(flat);
            assert!(
                (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                "param {flat}: fd {fd} analytic {an}"
            );
        }
    }
}
