//! Four-level U-net over `[1, F, T]` inputs.
//!
//! Encoder: four conv→ReLU→conv→ReLU blocks, each followed by 2×2 max-pool.
//! Decoder: four mirrored blocks, each fed the nearest-neighbor upsampling
//! of the deeper output concatenated with the same-scale encoder output.
//! A 1×1 convolution plus sigmoid maps back to one channel. Inputs are
//! reflect-padded so both spatial axes are multiples of 2⁴ = 16 and cropped
//! back afterwards.

use rand::Rng;

use crate::dsp::reflect_index;
use crate::error::{Error, Result};
use crate::nn::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use crate::nn::conv::{conv2d, conv2d_backward};
use crate::nn::pool::{downsample2, downsample2_backward, upsample2, upsample2_backward};
use crate::nn::store::ParameterStore;
use crate::nn::tensor::{Scalar, Tensor};

pub const DEPTH: usize = 4;
/// Spatial axes must be padded to multiples of this before pooling.
pub const SCALE: usize = 1 << DEPTH;

/// Names and channel widths of one U-net's parameters; the values live in a
/// [`ParameterStore`] so two U-nets can share one optimizer and checkpoint.
#[derive(Clone, Debug)]
pub struct UNet {
    prefix: String,
    enc_channels: [usize; DEPTH],
}

struct BlockCache<S> {
    x: Tensor<S>,
    a1: Tensor<S>,
    h1: Tensor<S>,
    a2: Tensor<S>,
    y: Tensor<S>,
}

pub struct UNetCache<S> {
    padded: PadPlan,
    enc: Vec<BlockCache<S>>,
    argmax: Vec<Vec<usize>>,
    dec: Vec<BlockCache<S>>,
    /// Input of the final 1×1 convolution.
    d1: Tensor<S>,
    /// Sigmoid output at padded size.
    y_pad: Tensor<S>,
}

impl UNet {
    pub fn new(prefix: &str, enc_channels: [usize; DEPTH]) -> Self {
        UNet { prefix: prefix.to_string(), enc_channels }
    }

    fn name(&self, rest: &str) -> String {
        format!("{}.{rest}", self.prefix)
    }

    /// (input channels, output channels) of block `conv1` per level; `conv2`
    /// maps output→output.
    fn block_io(&self, level: usize, decoder: bool) -> (usize, usize) {
        let c = &self.enc_channels;
        if !decoder {
            let c_in = if level == 0 { 1 } else { c[level - 1] };
            (c_in, c[level])
        } else {
            let deeper = if level == DEPTH - 1 { c[DEPTH - 1] } else { c[level + 1] };
            (deeper + c[level], c[level])
        }
    }

    /// Parameter (name, shape) pairs in initialization order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (side, decoder) in [("enc", false), ("dec", true)] {
            for level in 0..DEPTH {
                let (c_in, c_out) = self.block_io(level, decoder);
                let p = format!("{side}{}", level + 1);
                out.push((self.name(&format!("{p}.conv1.w")), vec![c_out, c_in, 3, 3]));
                out.push((self.name(&format!("{p}.conv1.b")), vec![c_out]));
                out.push((self.name(&format!("{p}.conv2.w")), vec![c_out, c_out, 3, 3]));
                out.push((self.name(&format!("{p}.conv2.b")), vec![c_out]));
            }
        }
        out.push((self.name("out.w"), vec![1, self.enc_channels[0], 1, 1]));
        out.push((self.name("out.b"), vec![1]));
        out
    }

    /// He-uniform weights, zero biases; the 1×1 head is Xavier-uniform since
    /// it feeds a sigmoid.
    pub fn init<S: Scalar, R: Rng>(&self, store: &mut ParameterStore<S>, rng: &mut R) -> Result<()> {
        for (name, shape) in self.manifest() {
            let tensor = if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let bound = if name.ends_with("out.w") {
                    (6.0 / (fan_in + shape[0]) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                Tensor::from_fn(&shape, |_| S::from_f64(rng.gen_range(-bound..bound)))
            };
            store.insert(&name, tensor)?;
        }
        Ok(())
    }

    fn block_forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        block: &str,
        x: Tensor<S>,
    ) -> Result<(Tensor<S>, BlockCache<S>)> {
        let w1 = store.get(&self.name(&format!("{block}.conv1.w")))?;
        let b1 = store.get(&self.name(&format!("{block}.conv1.b")))?;
        let a1 = conv2d(&x, w1, b1)?;
        let h1 = relu(&a1);
        let w2 = store.get(&self.name(&format!("{block}.conv2.w")))?;
        let b2 = store.get(&self.name(&format!("{block}.conv2.b")))?;
        let a2 = conv2d(&h1, w2, b2)?;
        let y = relu(&a2);
        Ok((y.clone(), BlockCache { x, a1, h1, a2, y }))
    }

    fn block_backward<S: Scalar>(
        &self,
        store: &mut ParameterStore<S>,
        block: &str,
        dy: &Tensor<S>,
        cache: &BlockCache<S>,
    ) -> Result<Tensor<S>> {
        let da2 = relu_backward(dy, &cache.a2);
        let g2 = conv2d_backward(&da2, &cache.h1, store.get(&self.name(&format!("{block}.conv2.w")))?)?;
        store.accumulate_grad(&self.name(&format!("{block}.conv2.w")), &g2.dw)?;
        store.accumulate_grad(&self.name(&format!("{block}.conv2.b")), &g2.db)?;
        let da1 = relu_backward(&g2.dx, &cache.a1);
        let g1 = conv2d_backward(&da1, &cache.x, store.get(&self.name(&format!("{block}.conv1.w")))?)?;
        store.accumulate_grad(&self.name(&format!("{block}.conv1.w")), &g1.dw)?;
        store.accumulate_grad(&self.name(&format!("{block}.conv1.b")), &g1.db)?;
        Ok(g1.dx)
    }

    /// `[1, F, T]` → `[1, F, T]` in [0, 1].
    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: &Tensor<S>,
    ) -> Result<(Tensor<S>, UNetCache<S>)> {
        let plan = PadPlan::for_input(x.shape())?;
        let mut cur = pad_reflect(x, &plan);

        let mut enc = Vec::with_capacity(DEPTH);
        let mut argmax = Vec::with_capacity(DEPTH);
        for level in 0..DEPTH {
            let (y, cache) = self.block_forward(store, &format!("enc{}", level + 1), cur)?;
            let (pooled, am) = downsample2(&y)?;
            enc.push(cache);
            argmax.push(am);
            cur = pooled;
        }

        let mut dec: Vec<BlockCache<S>> = Vec::with_capacity(DEPTH);
        for level in (0..DEPTH).rev() {
            let up = upsample2(&cur)?;
            let cat = concat_channels(&up, &enc[level].y)?;
            let (y, cache) = self.block_forward(store, &format!("dec{}", level + 1), cat)?;
            dec.push(cache);
            cur = y;
        }
        dec.reverse(); // dec[level] now matches enc[level]'s scale

        let d1 = cur;
        let z = conv2d(&d1, store.get(&self.name("out.w"))?, store.get(&self.name("out.b"))?)?;
        let y_pad = sigmoid(&z);
        let y = crop(&y_pad, &plan);
        Ok((y, UNetCache { padded: plan, enc, argmax, dec, d1, y_pad }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        store: &mut ParameterStore<S>,
        dy: &Tensor<S>,
        cache: &UNetCache<S>,
    ) -> Result<Tensor<S>> {
        let plan = &cache.padded;
        let dy_pad = crop_adjoint(dy, plan)?;
        let dz = sigmoid_backward(&dy_pad, &cache.y_pad);
        let g_out = conv2d_backward(&dz, &cache.d1, store.get(&self.name("out.w"))?)?;
        store.accumulate_grad(&self.name("out.w"), &g_out.dw)?;
        store.accumulate_grad(&self.name("out.b"), &g_out.db)?;

        // Walk the decoder from full resolution down, collecting the skip
        // gradients, then the encoder from the bottom back up.
        let mut d_dec = g_out.dx;
        let mut d_skip: Vec<Tensor<S>> = Vec::with_capacity(DEPTH);
        for level in 0..DEPTH {
            let dcat = self.block_backward(store, &format!("dec{}", level + 1), &d_dec, &cache.dec[level])?;
            let up_channels = if level == DEPTH - 1 {
                self.enc_channels[DEPTH - 1]
            } else {
                self.enc_channels[level + 1]
            };
            let (d_up, d_enc) = split_channels(&dcat, up_channels)?;
            d_skip.push(d_enc);
            d_dec = upsample2_backward(&d_up)?; // gradient at the deeper output
        }

        // d_dec now holds the gradient at pool(enc4).
        let mut d_pooled = d_dec;
        for level in (0..DEPTH).rev() {
            let mut d_enc_out =
                downsample2_backward(&d_pooled, &cache.argmax[level], cache.enc[level].y.shape());
            d_enc_out.add_scaled(&d_skip[level], S::one());
            d_pooled = self.block_backward(store, &format!("enc{}", level + 1), &d_enc_out, &cache.enc[level])?;
        }

        Ok(pad_reflect_adjoint(&d_pooled, plan))
    }
}

/// Padding bookkeeping: original size, padded size, and the low-side offset
/// per spatial axis.
pub struct PadPlan {
    channels: usize,
    orig: [usize; 2],
    padded: [usize; 2],
    lo: [usize; 2],
}

impl PadPlan {
    fn for_input(shape: &[usize]) -> Result<PadPlan> {
        let &[c, h, w] = shape else {
            return Err(Error::shape_mismatch("unet input", "[C, F, T]", format!("{shape:?}")));
        };
        if h == 0 || w == 0 {
            return Err(Error::EmptyInput("unet input with a zero axis".into()));
        }
        let pad = |n: usize| n.div_ceil(SCALE) * SCALE;
        let (hp, wp) = (pad(h), pad(w));
        Ok(PadPlan {
            channels: c,
            orig: [h, w],
            padded: [hp, wp],
            lo: [(hp - h) / 2, (wp - w) / 2],
        })
    }
}

/// Maps a padded coordinate to its source coordinate by reflection about the
/// original edges.
fn source_index(i: usize, lo: usize, n: usize) -> usize {
    reflect_index(i as isize - lo as isize, n)
}

fn pad_reflect<S: Scalar>(x: &Tensor<S>, plan: &PadPlan) -> Tensor<S> {
    let (c, [h, w], [hp, wp]) = (plan.channels, plan.orig, plan.padded);
    if [h, w] == plan.padded {
        return x.clone();
    }
    let mut out = Tensor::zeros(&[c, hp, wp]);
    for ci in 0..c {
        for i in 0..hp {
            let si = source_index(i, plan.lo[0], h);
            for j in 0..wp {
                let sj = source_index(j, plan.lo[1], w);
                out.data_mut()[(ci * hp + i) * wp + j] = x.data()[(ci * h + si) * w + sj];
            }
        }
    }
    out
}

/// Adjoint of [`pad_reflect`]: every padded cell scatters its gradient back
/// onto the source cell it mirrored.
fn pad_reflect_adjoint<S: Scalar>(dy: &Tensor<S>, plan: &PadPlan) -> Tensor<S> {
    let (c, [h, w], [hp, wp]) = (plan.channels, plan.orig, plan.padded);
    if [h, w] == plan.padded {
        return dy.clone();
    }
    let mut out = Tensor::zeros(&[c, h, w]);
    for ci in 0..c {
        for i in 0..hp {
            let si = source_index(i, plan.lo[0], h);
            for j in 0..wp {
                let sj = source_index(j, plan.lo[1], w);
                out.data_mut()[(ci * h + si) * w + sj] += dy.data()[(ci * hp + i) * wp + j];
            }
        }
    }
    out
}

fn crop<S: Scalar>(y: &Tensor<S>, plan: &PadPlan) -> Tensor<S> {
    let (c, [h, w], [hp, wp]) = (plan.channels, plan.orig, plan.padded);
    if [h, w] == plan.padded {
        return y.clone();
    }
    let mut out = Tensor::zeros(&[c, h, w]);
    for ci in 0..c {
        for i in 0..h {
            let src = ((ci * hp + i + plan.lo[0]) * wp) + plan.lo[1];
            out.data_mut()[(ci * h + i) * w..(ci * h + i + 1) * w]
                .copy_from_slice(&y.data()[src..src + w]);
        }
    }
    out
}

/// Adjoint of [`crop`]: embed the gradient into the padded shape, zeros
/// elsewhere.
fn crop_adjoint<S: Scalar>(dy: &Tensor<S>, plan: &PadPlan) -> Result<Tensor<S>> {
    let (c, [h, w], [hp, wp]) = (plan.channels, plan.orig, plan.padded);
    if [c, h, w] != dy.shape() {
        return Err(Error::shape_mismatch(
            "unet output gradient",
            format!("[{c}, {h}, {w}]"),
            format!("{:?}", dy.shape()),
        ));
    }
    if [h, w] == plan.padded {
        return Ok(dy.clone());
    }
    let mut out = Tensor::zeros(&[c, hp, wp]);
    for ci in 0..c {
        for i in 0..h {
            let dst = ((ci * hp + i + plan.lo[0]) * wp) + plan.lo[1];
            out.data_mut()[dst..dst + w]
                .copy_from_slice(&dy.data()[(ci * h + i) * w..(ci * h + i + 1) * w]);
        }
    }
    Ok(out)
}

fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let &[ca, h, w] = a.shape() else {
        return Err(Error::shape_mismatch("concat", "[C, H, W]", format!("{:?}", a.shape())));
    };
    let &[cb, hb, wb] = b.shape() else {
        return Err(Error::shape_mismatch("concat", "[C, H, W]", format!("{:?}", b.shape())));
    };
    if (h, w) != (hb, wb) {
        return Err(Error::shape_mismatch(
            "concat spatial dims",
            format!("{h}×{w}"),
            format!("{hb}×{wb}"),
        ));
    }
    let mut out = Tensor::zeros(&[ca + cb, h, w]);
    out.data_mut()[..ca * h * w].copy_from_slice(a.data());
    out.data_mut()[ca * h * w..].copy_from_slice(b.data());
    Ok(out)
}

fn split_channels<S: Scalar>(x: &Tensor<S>, first: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::shape_mismatch("split", "[C, H, W]", format!("{:?}", x.shape())));
    };
    if first > c {
        return Err(Error::shape_mismatch("split channels", format!("≤ {c}"), first));
    }
    let a = Tensor::from_vec(&[first, h, w], x.data()[..first * h * w].to_vec())?;
    let b = Tensor::from_vec(&[c - first, h, w], x.data()[first * h * w..].to_vec())?;
    Ok((a, b))
}
