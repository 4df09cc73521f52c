//! The densify pass: rewrite a windowed classification net into a dense
//! prediction net over whole utterances.
//!
//! Pooling layers keep their window but lose their time stride; every
//! convolution (and every pooling window) downstream of a time-strided pool
//! has its time dilation multiplied by the product of the original strides,
//! so a layer after p stride-s pools ends up with dilation s^p. Fully
//! connected layers become convolutions: the first takes the kernel of the
//! pre-flatten extents, the rest are 1x1. Weights are reindexed, never
//! changed in value, and the receptive field is preserved.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{LayerSpec, Mode, NetworkSpec, Shape};
use crate::layers::{ConvSpec, PoolSpec};

/// What happened to one layer of the original net.
#[derive(Debug, Clone, PartialEq)]
pub enum Rewrite {
    ConvDilation { old: usize, new: usize },
    /// Time stride dropped to 1; the pool window spreads by the cumulative
    /// dilation so it keeps combining the values it combined before.
    PoolStride { old_stride: usize, old_dilation: usize, new_dilation: usize },
    FcToConv { in_dim: usize, out_dim: usize, kernel_f: usize, kernel_t: usize, dilation_t: usize },
    FlattenRemoved,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRewrite {
    /// Index in the original net's layer list.
    pub layer: usize,
    pub label: String,
    pub rewrite: Rewrite,
    /// Product of original time strides of all pooling layers up to and
    /// including this one.
    pub cumulative_dilation: usize,
}

/// Rewrite log of one densify run.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyReport {
    pub rewrites: Vec<LayerRewrite>,
}

impl DensifyReport {
    pub fn fc_conversions(&self) -> impl Iterator<Item = &LayerRewrite> {
        self.rewrites.iter().filter(|r| matches!(r.rewrite, Rewrite::FcToConv { .. }))
    }

    /// Cumulative dilation after the last layer: s^p for p time pools of
    /// stride s.
    pub fn final_dilation(&self) -> usize {
        self.rewrites.last().map(|r| r.cumulative_dilation).unwrap_or(1)
    }

    /// One record per line, fixed field order.
    pub fn machine_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rewrites {
            let detail = match &r.rewrite {
                Rewrite::ConvDilation { old, new } => format!("conv dilation_t {old} -> {new}"),
                Rewrite::PoolStride { old_stride, old_dilation, new_dilation } => format!(
                    "pool stride_t {old_stride} -> 1 dilation_t {old_dilation} -> {new_dilation}"
                ),
                Rewrite::FcToConv { in_dim, out_dim, kernel_f, kernel_t, dilation_t } => format!(
                    "fc {in_dim}->{out_dim} to conv kernel {kernel_f}x{kernel_t} dilation_t {dilation_t}"
                ),
                Rewrite::FlattenRemoved => "flatten removed".into(),
                Rewrite::Unchanged => "unchanged".into(),
            };
            out.push_str(&format!("rewrite {} {} cum={}\n", r.layer, detail, r.cumulative_dilation));
        }
        out
    }
}

impl fmt::Display for DensifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "densify report ({} layers)", self.rewrites.len())?;
        for r in &self.rewrites {
            let detail = match &r.rewrite {
                Rewrite::ConvDilation { old, new } if old == new => "dilation_t unchanged".into(),
                Rewrite::ConvDilation { old, new } => format!("dilation_t {old} -> {new}"),
                Rewrite::PoolStride { old_stride, old_dilation, new_dilation } => {
                    let mut s = format!("stride_t {old_stride} -> 1");
                    if old_dilation != new_dilation {
                        s.push_str(&format!(", window dilation_t {old_dilation} -> {new_dilation}"));
                    }
                    s
                }
                Rewrite::FcToConv { kernel_f, kernel_t, dilation_t, .. } => {
                    format!("-> conv {kernel_f}x{kernel_t} dilation_t {dilation_t}")
                }
                Rewrite::FlattenRemoved => "removed".into(),
                Rewrite::Unchanged => "unchanged".into(),
            };
            writeln!(
                f,
                "  layer {:>3}  {:<18} {:<44} cumulative dilation {}",
                r.layer, r.label, detail, r.cumulative_dilation
            )?;
        }
        Ok(())
    }
}

/// Densify a windowed net. Applying it to a net that is already dense is an
/// error: a silent second application would square the dilations.
pub fn densify(net: &NetworkSpec) -> Result<(NetworkSpec, DensifyReport)> {
    let (dense, report) = rewrite(net, true)?;
    Ok((dense, report))
}

/// Diagnostic variant: convert fully connected layers to convolutions but
/// keep every pooling stride, so the windowed net runs convolutionally and
/// shows the downsampled output sequence that densification repairs.
pub fn convolutionalize(net: &NetworkSpec) -> Result<NetworkSpec> {
    let (downsampled, _) = rewrite(net, false)?;
    Ok(downsampled)
}

fn rewrite(net: &NetworkSpec, dense: bool) -> Result<(NetworkSpec, DensifyReport)> {
    if net.mode() == Mode::Dense {
        return Err(Error::AlreadyDense);
    }
    let trace = net.infer_shapes()?;
    let mut cum = 1usize;
    let mut rewrites = Vec::with_capacity(net.layers().len());
    let mut out_layers = Vec::with_capacity(net.layers().len());
    let mut pre_flatten: Option<(usize, usize, usize)> = None;
    let mut first_fc_done = false;

    for (i, layer) in net.layers().iter().enumerate() {
        let label = layer.label();
        let push = |rewrite: Rewrite, cum: usize, rewrites: &mut Vec<LayerRewrite>| {
            rewrites.push(LayerRewrite { layer: i, label: label.clone(), rewrite, cumulative_dilation: cum });
        };
        match layer {
            LayerSpec::Conv(c) => {
                let new_dil = if dense {
                    c.dilation_t.checked_mul(cum).ok_or_else(|| {
                        Error::shape_at(i, "densified dilation overflows".to_string())
                    })?
                } else {
                    c.dilation_t
                };
                let mut conv = c.clone();
                conv.dilation_t = new_dil;
                push(Rewrite::ConvDilation { old: c.dilation_t, new: new_dil }, cum, &mut rewrites);
                out_layers.push(LayerSpec::Conv(conv));
            }
            LayerSpec::Pool(p) => {
                if dense {
                    let new_dil = p.dilation_t.checked_mul(cum).ok_or_else(|| {
                        Error::shape_at(i, "densified pool dilation overflows".to_string())
                    })?;
                    let pool =
                        PoolSpec::with_dilation(p.size_f, p.size_t, p.stride_f, 1, new_dil)
                            .map_err(|e| e.at_layer(i))?;
                    push(
                        Rewrite::PoolStride {
                            old_stride: p.stride_t,
                            old_dilation: p.dilation_t,
                            new_dilation: new_dil,
                        },
                        cum * p.stride_t,
                        &mut rewrites,
                    );
                    cum *= p.stride_t;
                    out_layers.push(LayerSpec::Pool(pool));
                } else {
                    push(Rewrite::Unchanged, cum, &mut rewrites);
                    out_layers.push(LayerSpec::Pool(p.clone()));
                }
            }
            LayerSpec::BatchNorm(b) => {
                if pre_flatten.is_some() && !first_fc_done {
                    return Err(Error::Unsupported(
                        "batchnorm between flatten and the first fully connected layer has no dense form"
                            .into(),
                    ));
                }
                push(Rewrite::Unchanged, cum, &mut rewrites);
                out_layers.push(LayerSpec::BatchNorm(b.clone()));
            }
            LayerSpec::Activation(a) => {
                push(Rewrite::Unchanged, cum, &mut rewrites);
                out_layers.push(LayerSpec::Activation(*a));
            }
            LayerSpec::Flatten => {
                match trace.shape_before(i) {
                    Shape::Map { fmaps, freq, time } => pre_flatten = Some((fmaps, freq, time)),
                    Shape::Flat { .. } => unreachable!("validated: flatten takes a map shape"),
                }
                push(Rewrite::FlattenRemoved, cum, &mut rewrites);
            }
            LayerSpec::FullyConnected(fc) => {
                let (maps, freq, time) = pre_flatten.expect("validated: fc follows flatten");
                let dilation_t = if dense { cum } else { 1 };
                let conv = if !first_fc_done {
                    first_fc_done = true;
                    ConvSpec::from_fully_connected(fc, maps, freq, time, dilation_t)
                        .map_err(|e| e.at_layer(i))?
                } else {
                    ConvSpec::from_fully_connected(fc, fc.in_dim, 1, 1, dilation_t)
                        .map_err(|e| e.at_layer(i))?
                };
                push(
                    Rewrite::FcToConv {
                        in_dim: fc.in_dim,
                        out_dim: fc.out_dim,
                        kernel_f: conv.kernel_f,
                        kernel_t: conv.kernel_t,
                        dilation_t,
                    },
                    cum,
                    &mut rewrites,
                );
                out_layers.push(LayerSpec::Conv(conv));
            }
        }
    }

    let rewritten = NetworkSpec::new(net.input_shape(), out_layers, Mode::Dense)?;
    Ok((rewritten, DensifyReport { rewrites }))
}

/// Valid output positions of a dense evaluation: utterance_time - RF + 1.
pub fn dense_output_length(net: &NetworkSpec, utterance_time: usize) -> Result<usize> {
    let rf = net.receptive_field_time();
    if utterance_time < rf {
        return Err(Error::InputTooShort { needed: rf, got: utterance_time });
    }
    Ok(utterance_time - rf + 1)
}
