//! Network specification, weight storage, and the full forward/backward pass.
//!
//! A [`NetworkSpec`] is interpreted into a flat layer plan; weights for all
//! layers live in one contiguous `f64` vector addressed through a tensor
//! index, which keeps SGD updates, finite-difference sweeps, and
//! serialization trivial. The stage pattern is a convolutional
//! encoder-decoder: conv+pool stem, bottleneck residual stages, a dilated
//! spatial pyramid at the bottleneck, then transposed-conv upsampling back to
//! the input size and a sigmoid head producing one channel in (0, 1).

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layers::{
    elu_grad_from_output, elu_inplace, maxpool2, maxpool2_backward, sigmoid_grad_from_output,
    sigmoid_inplace, ConvSpec, ConvT2Spec,
};
use super::tensor::Tensor;
use crate::error::CoreError;
use crate::Result;
use crate::raster::NormalizedImage;
use crate::rng::stream_rng;
use rand::Rng;

/// Dilations of the spatial-pyramid branches at the bottleneck.
pub const ASPP_DILATIONS: [usize; 3] = [1, 2, 4];

/// Kind of one encoder stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBlock {
    /// 3x3 conv stem; pools 2x when the stage downsamples.
    ConvPool,
    /// `blocks` bottleneck residual units; the first strides 2x when the
    /// stage downsamples.
    Residual { blocks: usize },
    /// Parallel dilated 3x3 branches fused by a 1x1 conv; never downsamples.
    Aspp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderStage {
    pub block: EncoderBlock,
    pub channels: usize,
    pub downsample: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderStage {
    pub channels: usize,
    pub upsample: bool,
}

/// Architecture description; output is always one channel at `input_px`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_px: usize,
    pub base_channels: usize,
    pub encoder: Vec<EncoderStage>,
    pub decoder: Vec<DecoderStage>,
}

impl NetworkSpec {
    /// Stage pattern at a chosen width and depth: stem, four residual
    /// stages (two strided), spatial pyramid, six-stage decoder.
    pub fn scaled(input_px: usize, base: usize, residual_blocks: [usize; 4]) -> NetworkSpec {
        let stage = |block, channels, downsample| EncoderStage {
            block,
            channels,
            downsample,
        };
        let dec = |channels, upsample| DecoderStage { channels, upsample };
        NetworkSpec {
            input_px,
            base_channels: base,
            encoder: vec![
                stage(EncoderBlock::ConvPool, base, true),
                stage(
                    EncoderBlock::Residual {
                        blocks: residual_blocks[0],
                    },
                    4 * base,
                    false,
                ),
                stage(
                    EncoderBlock::Residual {
                        blocks: residual_blocks[1],
                    },
                    8 * base,
                    true,
                ),
                stage(
                    EncoderBlock::Residual {
                        blocks: residual_blocks[2],
                    },
                    8 * base,
                    true,
                ),
                stage(
                    EncoderBlock::Residual {
                        blocks: residual_blocks[3],
                    },
                    16 * base,
                    false,
                ),
                stage(EncoderBlock::Aspp, 16 * base, false),
            ],
            decoder: vec![
                dec(8 * base, false),
                dec(8 * base, true),
                dec(4 * base, true),
                dec(4 * base, false),
                dec(2 * base, false),
                dec(base, true),
            ],
        }
    }

    /// Desk-scale variant: 64 px input, 16 base channels, light residual
    /// stages.
    pub fn desk() -> NetworkSpec {
        NetworkSpec::scaled(64, 16, [2, 2, 4, 2])
    }

    /// Full-scale reference variant (200 px input, 64 base channels,
    /// 3/3/27/3 residual stages).
    pub fn full() -> NetworkSpec {
        NetworkSpec::scaled(200, 64, [3, 3, 27, 3])
    }

    /// Smallest spec exercising every layer kind; test-sized.
    pub fn toy() -> NetworkSpec {
        NetworkSpec::scaled(16, 4, [1, 1, 1, 1])
    }

    pub fn downsample_count(&self) -> usize {
        self.encoder.iter().filter(|s| s.downsample).count()
    }

    pub fn upsample_count(&self) -> usize {
        self.decoder.iter().filter(|s| s.upsample).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() {
            return Err(CoreError::invalid("encoder has no stages"));
        }
        let downs = self.downsample_count();
        let ups = self.upsample_count();
        if downs != ups {
            return Err(CoreError::invalid(format!(
                "{downs} downsamples vs {ups} upsamples; round trip must preserve size"
            )));
        }
        let scale = 1usize
            .checked_shl(downs as u32)
            .ok_or_else(|| CoreError::invalid("too many downsamples"))?;
        if self.input_px == 0 || self.input_px % scale != 0 {
            return Err(CoreError::invalid(format!(
                "input {} px not divisible by total downsample factor {scale}",
                self.input_px
            )));
        }
        if self.base_channels == 0 || self.encoder[0].channels != self.base_channels {
            return Err(CoreError::invalid(
                "first encoder stage width must equal base_channels",
            ));
        }
        for (i, s) in self.encoder.iter().enumerate() {
            if s.channels == 0 {
                return Err(CoreError::invalid(format!("encoder stage {i}: zero channels")));
            }
            match s.block {
                EncoderBlock::Residual { blocks } => {
                    if blocks == 0 {
                        return Err(CoreError::invalid(format!(
                            "encoder stage {i}: residual stage with zero blocks"
                        )));
                    }
                    if s.channels % 4 != 0 {
                        return Err(CoreError::invalid(format!(
                            "encoder stage {i}: residual channels {} not divisible by 4",
                            s.channels
                        )));
                    }
                }
                EncoderBlock::Aspp => {
                    if s.channels % 4 != 0 {
                        return Err(CoreError::invalid(format!(
                            "encoder stage {i}: pyramid channels {} not divisible by 4",
                            s.channels
                        )));
                    }
                    if s.downsample {
                        return Err(CoreError::invalid(format!(
                            "encoder stage {i}: pyramid stage cannot downsample"
                        )));
                    }
                }
                EncoderBlock::ConvPool => {}
            }
        }
        for (i, s) in self.decoder.iter().enumerate() {
            if s.channels == 0 {
                return Err(CoreError::invalid(format!("decoder stage {i}: zero channels")));
            }
        }
        Ok(())
    }
}

/// One tensor's slot in the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct ConvRef {
    pub spec: ConvSpec,
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(super) struct ConvTRef {
    pub spec: ConvT2Spec,
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(super) enum Layer {
    Stem { conv: ConvRef, pool: bool },
    Bottleneck { c1: ConvRef, c2: ConvRef, c3: ConvRef, proj: Option<ConvRef> },
    Aspp { branches: [ConvRef; 3], fuse: ConvRef },
    DecodeConv { conv: ConvRef },
    DecodeUp { convt: ConvTRef },
    Head { conv: ConvRef },
}

pub(super) struct Plan {
    pub layers: Vec<Layer>,
    pub index: Vec<TensorInfo>,
    pub total: usize,
}

struct PlanBuilder {
    index: Vec<TensorInfo>,
    total: usize,
}

impl PlanBuilder {
    fn slot(&mut self, name: String, dims: Vec<usize>) -> usize {
        let offset = self.total;
        self.total += dims.iter().product::<usize>();
        self.index.push(TensorInfo { name, dims, offset });
        offset
    }

    fn conv(&mut self, name: &str, spec: ConvSpec) -> ConvRef {
        let w = self.slot(
            format!("{name}.w"),
            vec![spec.out_ch, spec.in_ch, spec.k, spec.k],
        );
        let b = self.slot(format!("{name}.b"), vec![spec.out_ch]);
        ConvRef { spec, w, b }
    }

    fn convt(&mut self, name: &str, spec: ConvT2Spec) -> ConvTRef {
        let w = self.slot(format!("{name}.w"), vec![spec.in_ch, spec.out_ch, 2, 2]);
        let b = self.slot(format!("{name}.b"), vec![spec.out_ch]);
        ConvTRef { spec, w, b }
    }
}

pub(super) fn plan(spec: &NetworkSpec) -> Result<Plan> {
    spec.validate()?;
    let mut pb = PlanBuilder {
        index: Vec::new(),
        total: 0,
    };
    let mut layers = Vec::new();
    let mut ch = 1usize;
    for (i, stage) in spec.encoder.iter().enumerate() {
        let name = format!("enc{i}");
        match stage.block {
            EncoderBlock::ConvPool => {
                let conv = pb.conv(&name, ConvSpec::same3(ch, stage.channels));
                layers.push(Layer::Stem {
                    conv,
                    pool: stage.downsample,
                });
            }
            EncoderBlock::Residual { blocks } => {
                let width = stage.channels / 4;
                for blk in 0..blocks {
                    let stride = if blk == 0 && stage.downsample { 2 } else { 1 };
                    let in_ch = if blk == 0 { ch } else { stage.channels };
                    let bname = format!("{name}.b{blk}");
                    let c1 = pb.conv(&format!("{bname}.c1"), ConvSpec::point(in_ch, width));
                    let c2 = pb.conv(
                        &format!("{bname}.c2"),
                        ConvSpec {
                            in_ch: width,
                            out_ch: width,
                            k: 3,
                            stride,
                            dilation: 1,
                            pad: 1,
                        },
                    );
                    let c3 = pb.conv(&format!("{bname}.c3"), ConvSpec::point(width, stage.channels));
                    let proj = if in_ch != stage.channels || stride != 1 {
                        Some(pb.conv(
                            &format!("{bname}.proj"),
                            ConvSpec {
                                in_ch,
                                out_ch: stage.channels,
                                k: 1,
                                stride,
                                dilation: 1,
                                pad: 0,
                            },
                        ))
                    } else {
                        None
                    };
                    layers.push(Layer::Bottleneck { c1, c2, c3, proj });
                }
            }
            EncoderBlock::Aspp => {
                let branch = stage.channels / 4;
                let mk = |pb: &mut PlanBuilder, j: usize, d: usize| {
                    pb.conv(&format!("{name}.br{j}"), ConvSpec::dilated3(ch, branch, d))
                };
                let branches = [
                    mk(&mut pb, 0, ASPP_DILATIONS[0]),
                    mk(&mut pb, 1, ASPP_DILATIONS[1]),
                    mk(&mut pb, 2, ASPP_DILATIONS[2]),
                ];
                let fuse = pb.conv(
                    &format!("{name}.fuse"),
                    ConvSpec::point(3 * branch, stage.channels),
                );
                layers.push(Layer::Aspp { branches, fuse });
            }
        }
        ch = stage.channels;
    }
    for (i, stage) in spec.decoder.iter().enumerate() {
        let name = format!("dec{i}");
        if stage.upsample {
            let convt = pb.convt(
                &name,
                ConvT2Spec {
                    in_ch: ch,
                    out_ch: stage.channels,
                },
            );
            layers.push(Layer::DecodeUp { convt });
        } else {
            let conv = pb.conv(&name, ConvSpec::same3(ch, stage.channels));
            layers.push(Layer::DecodeConv { conv });
        }
        ch = stage.channels;
    }
    let head = pb.conv("head", ConvSpec::point(ch, 1));
    layers.push(Layer::Head { conv: head });
    Ok(Plan {
        layers,
        index: pb.index,
        total: pb.total,
    })
}

/// All parameters of one network in a single flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub spec: NetworkSpec,
    /// Seed the initial tensors were drawn from.
    pub seed: u64,
    pub data: Vec<f64>,
}

impl Weights {
    pub fn parameter_count(&self) -> usize {
        self.data.len()
    }

    /// Flat index of every tensor, rebuilt from the spec.
    pub fn tensor_index(&self) -> Result<Vec<TensorInfo>> {
        Ok(plan(&self.spec)?.index)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Initializes weights from fan-in-scaled uniform draws (bound
/// `sqrt(6 / fan_in)`); biases start at zero. Tensor `i` draws from its own
/// seed stream, so the layout never silently reorders draws.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    let plan = plan(spec)?;
    let mut data = vec![0.0; plan.total];
    for (i, info) in plan.index.iter().enumerate() {
        if info.name.ends_with(".b") {
            continue;
        }
        let fan_in = fan_in_of(&plan, info);
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut rng = stream_rng(seed, "init", i as u64);
        for v in &mut data[info.offset..info.offset + info.len()] {
            *v = rng.gen_range(-bound..bound);
        }
    }
    Ok(Weights {
        spec: spec.clone(),
        seed,
        data,
    })
}

fn fan_in_of(plan: &Plan, info: &TensorInfo) -> usize {
    for layer in &plan.layers {
        if let Layer::DecodeUp { convt } = layer {
            if convt.w == info.offset {
                return convt.spec.fan_in();
            }
        }
    }
    // Conv weight dims are [out_ch, in_ch, k, k].
    info.dims[1] * info.dims[2] * info.dims[3]
}

pub(crate) enum LayerCache {
    Stem { x: Tensor, act: Tensor, arg: Option<Vec<u32>> },
    Bottleneck { x: Tensor, a1: Tensor, a2: Tensor, y: Tensor },
    Aspp { x: Tensor, b: [Tensor; 3], y: Tensor },
    Decode { x: Tensor, y: Tensor },
    Head { x: Tensor, y: Tensor },
}

fn wslice<'a>(data: &'a [f64], off: usize, len: usize) -> &'a [f64] {
    &data[off..off + len]
}

fn conv_fwd(data: &[f64], c: &ConvRef, x: &Tensor) -> Tensor {
    c.spec.forward(
        x,
        wslice(data, c.w, c.spec.weight_len()),
        wslice(data, c.b, c.spec.out_ch),
    )
}

fn conv_bwd(
    data: &[f64],
    grad: &mut [f64],
    c: &ConvRef,
    x: &Tensor,
    d_out: &Tensor,
) -> Tensor {
    let w = wslice(data, c.w, c.spec.weight_len());
    // Parameter slices are disjoint; split_at_mut keeps the borrows separate.
    let (dw_part, db_part) = {
        debug_assert!(c.b == c.w + c.spec.weight_len());
        let (_, rest) = grad.split_at_mut(c.w);
        let (dw, rest) = rest.split_at_mut(c.spec.weight_len());
        let (db, _) = rest.split_at_mut(c.spec.out_ch);
        (dw, db)
    };
    c.spec.backward(x, w, d_out, dw_part, db_part)
}

/// Runs the network, returning the output plane and the per-layer cache the
/// backward pass consumes.
pub(crate) fn forward_cached(w: &Weights, input: &Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
    let plan = plan(&w.spec)?;
    if input.channels != 1 || input.height != w.spec.input_px || input.width != w.spec.input_px {
        return Err(CoreError::invalid(format!(
            "input {}x{}x{} does not match spec input {} px",
            input.channels, input.height, input.width, w.spec.input_px
        )));
    }
    if w.data.len() != plan.total {
        return Err(CoreError::invalid(format!(
            "weight vector holds {} values, spec needs {}",
            w.data.len(),
            plan.total
        )));
    }
    let data = &w.data;
    let mut caches = Vec::with_capacity(plan.layers.len());
    let mut cur = input.clone();
    for layer in &plan.layers {
        match layer {
            Layer::Stem { conv, pool } => {
                let x = cur;
                let mut act = conv_fwd(data, conv, &x);
                elu_inplace(&mut act);
                let (next, arg) = if *pool {
                    let (p, a) = maxpool2(&act);
                    (p, Some(a))
                } else {
                    (act.clone(), None)
                };
                caches.push(LayerCache::Stem { x, act, arg });
                cur = next;
            }
            Layer::Bottleneck { c1, c2, c3, proj } => {
                let x = cur;
                let mut a1 = conv_fwd(data, c1, &x);
                elu_inplace(&mut a1);
                let mut a2 = conv_fwd(data, c2, &a1);
                elu_inplace(&mut a2);
                let mut y = conv_fwd(data, c3, &a2);
                match proj {
                    Some(p) => {
                        let s = conv_fwd(data, p, &x);
                        for (o, v) in y.data.iter_mut().zip(&s.data) {
                            *o += v;
                        }
                    }
                    None => {
                        for (o, v) in y.data.iter_mut().zip(&x.data) {
                            *o += v;
                        }
                    }
                }
                elu_inplace(&mut y);
                cur = y.clone();
                caches.push(LayerCache::Bottleneck { x, a1, a2, y });
            }
            Layer::Aspp { branches, fuse } => {
                let x = cur;
                let mut b: Vec<Tensor> = Vec::with_capacity(3);
                for br in branches {
                    let mut t = conv_fwd(data, br, &x);
                    elu_inplace(&mut t);
                    b.push(t);
                }
                let cat = concat_channels(&b);
                let mut y = conv_fwd(data, fuse, &cat);
                elu_inplace(&mut y);
                cur = y.clone();
                let b: [Tensor; 3] = match b.try_into() {
                    Ok(arr) => arr,
                    Err(_) => unreachable!(),
                };
                caches.push(LayerCache::Aspp { x, b, y });
            }
            Layer::DecodeConv { conv } => {
                let x = cur;
                let mut y = conv_fwd(data, conv, &x);
                elu_inplace(&mut y);
                cur = y.clone();
                caches.push(LayerCache::Decode { x, y });
            }
            Layer::DecodeUp { convt } => {
                let x = cur;
                let mut y = convt.spec.forward(
                    &x,
                    wslice(data, convt.w, convt.spec.weight_len()),
                    wslice(data, convt.b, convt.spec.out_ch),
                );
                elu_inplace(&mut y);
                cur = y.clone();
                caches.push(LayerCache::Decode { x, y });
            }
            Layer::Head { conv } => {
                let x = cur;
                let mut y = conv_fwd(data, conv, &x);
                sigmoid_inplace(&mut y);
                cur = y.clone();
                caches.push(LayerCache::Head { x, y });
            }
        }
    }
    Ok((cur, caches))
}

fn concat_channels(parts: &[Tensor]) -> Tensor {
    let (h, w) = (parts[0].height, parts[0].width);
    let channels = parts.iter().map(|t| t.channels).sum();
    let mut out = Tensor::zeros(channels, h, w);
    let mut off = 0;
    for t in parts {
        out.data[off..off + t.len()].copy_from_slice(&t.data);
        off += t.len();
    }
    out
}

/// Reverse pass over a cached forward; returns the gradient of every
/// parameter (same layout as `Weights::data`), accumulated over the call.
pub(crate) fn backward(
    w: &Weights,
    caches: &[LayerCache],
    d_output: Tensor,
    grad: &mut [f64],
) -> Result<()> {
    let plan = plan(&w.spec)?;
    debug_assert_eq!(grad.len(), plan.total);
    debug_assert_eq!(caches.len(), plan.layers.len());
    let data = &w.data;
    let mut d = d_output;
    for (layer, cache) in plan.layers.iter().zip(caches).rev() {
        match (layer, cache) {
            (Layer::Head { conv }, LayerCache::Head { x, y }) => {
                sigmoid_grad_from_output(y, &mut d);
                d = conv_bwd(data, grad, conv, x, &d);
            }
            (Layer::DecodeConv { conv }, LayerCache::Decode { x, y }) => {
                elu_grad_from_output(y, &mut d);
                d = conv_bwd(data, grad, conv, x, &d);
            }
            (Layer::DecodeUp { convt }, LayerCache::Decode { x, y }) => {
                elu_grad_from_output(y, &mut d);
                let wsl = wslice(data, convt.w, convt.spec.weight_len());
                let (dw, db) = {
                    let (_, rest) = grad.split_at_mut(convt.w);
                    let (dw, rest) = rest.split_at_mut(convt.spec.weight_len());
                    let (db, _) = rest.split_at_mut(convt.spec.out_ch);
                    (dw, db)
                };
                d = convt.spec.backward(x, wsl, &d, dw, db);
            }
            (Layer::Aspp { branches, fuse }, LayerCache::Aspp { x, b, y }) => {
                elu_grad_from_output(y, &mut d);
                let cat = concat_channels(b);
                let d_cat = conv_bwd(data, grad, fuse, &cat, &d);
                let mut d_x = Tensor::zeros(x.channels, x.height, x.width);
                let mut off = 0;
                for (br, bt) in branches.iter().zip(b) {
                    let mut d_b = Tensor::from_vec(
                        bt.channels,
                        bt.height,
                        bt.width,
                        d_cat.data[off..off + bt.len()].to_vec(),
                    );
                    off += bt.len();
                    elu_grad_from_output(bt, &mut d_b);
                    let dxb = conv_bwd(data, grad, br, x, &d_b);
                    for (a, v) in d_x.data.iter_mut().zip(&dxb.data) {
                        *a += v;
                    }
                }
                d = d_x;
            }
            (Layer::Bottleneck { c1, c2, c3, proj }, LayerCache::Bottleneck { x, a1, a2, y }) => {
                elu_grad_from_output(y, &mut d);
                let d_skip = d.clone();
                let mut d_a2 = conv_bwd(data, grad, c3, a2, &d);
                elu_grad_from_output(a2, &mut d_a2);
                let mut d_a1 = conv_bwd(data, grad, c2, a1, &d_a2);
                elu_grad_from_output(a1, &mut d_a1);
                let mut d_x = conv_bwd(data, grad, c1, x, &d_a1);
                match proj {
                    Some(p) => {
                        let d_xp = conv_bwd(data, grad, p, x, &d_skip);
                        for (a, v) in d_x.data.iter_mut().zip(&d_xp.data) {
                            *a += v;
                        }
                    }
                    None => {
                        for (a, v) in d_x.data.iter_mut().zip(&d_skip.data) {
                            *a += v;
                        }
                    }
                }
                d = d_x;
            }
            (Layer::Stem { conv, pool }, LayerCache::Stem { x, act, arg }) => {
                let mut d_act = if *pool {
                    maxpool2_backward(&d, arg.as_ref().expect("pool cache"), act.height, act.width)
                } else {
                    d
                };
                elu_grad_from_output(act, &mut d_act);
                d = conv_bwd(data, grad, conv, x, &d_act);
            }
            _ => unreachable!("cache kind mismatch"),
        }
    }
    Ok(())
}

/// Forward pass on a normalized image; output keeps the georeferencing and
/// lands in [0, 1] (sigmoid head).
pub fn forward(w: &Weights, image: &NormalizedImage) -> Result<NormalizedImage> {
    let out = forward_values(w, image)?;
    Ok(NormalizedImage {
        px: image.px,
        resolution_m: image.resolution_m,
        origin_x_m: image.origin_x_m,
        origin_y_m: image.origin_y_m,
        values: out.iter().map(|&v| v as f32).collect(),
    })
}

/// Forward pass keeping `f64` values; row-major plane of `input_px^2`.
pub fn forward_values(w: &Weights, image: &NormalizedImage) -> Result<Vec<f64>> {
    if image.px != w.spec.input_px {
        return Err(CoreError::invalid(format!(
            "image is {} px, network expects {}",
            image.px, w.spec.input_px
        )));
    }
    let input = Tensor::from_vec(
        1,
        image.px,
        image.px,
        image.values.iter().map(|&v| f64::from(v)).collect(),
    );
    let (out, _) = forward_cached(w, &input)?;
    Ok(out.data)
}

/// Header of the two-file weights container (`{base}.json` + `{base}.f32`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub spec: NetworkSpec,
    pub seed: u64,
    /// Training epoch these weights were captured at (0 = untrained).
    pub epoch: usize,
    /// Free-form metrics recorded at save time (losses, error medians).
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub tensors: Vec<TensorInfo>,
    pub total_values: usize,
}

/// Writes `{base}.json` (header + tensor index) and `{base}.f32`
/// (little-endian `f32` values in index order).
pub fn save_weights(
    base: &Path,
    w: &Weights,
    epoch: usize,
    metrics: &std::collections::BTreeMap<String, f64>,
) -> Result<()> {
    let index = w.tensor_index()?;
    let header = WeightsHeader {
        spec: w.spec.clone(),
        seed: w.seed,
        epoch,
        metrics: metrics.clone(),
        total_values: w.data.len(),
        tensors: index,
    };
    let jpath = base.with_extension("json");
    let text = serde_json::to_string_pretty(&header)
        .map_err(|e| CoreError::Numeric(format!("weights header serialization: {e}")))?;
    std::fs::write(&jpath, text + "\n").map_err(|e| CoreError::io(&jpath, e))?;
    let bpath = base.with_extension("f32");
    let mut bytes = Vec::with_capacity(w.data.len() * 4);
    for &v in &w.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(&bpath).map_err(|e| CoreError::io(&bpath, e))?;
    f.write_all(&bytes).map_err(|e| CoreError::io(&bpath, e))?;
    Ok(())
}

/// Loads a weights container; checks the index against the spec and the blob
/// length against the header.
pub fn load_weights(base: &Path) -> Result<(Weights, WeightsHeader)> {
    let jpath = base.with_extension("json");
    let text = std::fs::read_to_string(&jpath).map_err(|e| CoreError::io(&jpath, e))?;
    let header: WeightsHeader =
        serde_json::from_str(&text).map_err(|e| malformed(&jpath, e.to_string()))?;
    let plan = plan(&header.spec).map_err(|e| malformed(&jpath, e.to_string()))?;
    if plan.index != header.tensors || plan.total != header.total_values {
        return Err(malformed(&jpath, "tensor index does not match spec".into()));
    }
    let bpath = base.with_extension("f32");
    let mut bytes = Vec::new();
    std::fs::File::open(&bpath)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(&bpath, e))?;
    if bytes.len() != header.total_values * 4 {
        return Err(malformed(
            &bpath,
            format!(
                "blob holds {} bytes, header promises {}",
                bytes.len(),
                header.total_values * 4
            ),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(malformed(&bpath, "non-finite weight value".into()));
    }
    Ok((
        Weights {
            spec: header.spec.clone(),
            seed: header.seed,
            data,
        },
        header,
    ))
}

fn malformed(path: &Path, reason: String) -> CoreError {
    CoreError::MalformedArtifact {
        path: PathBuf::from(path),
        reason,
    }
}
