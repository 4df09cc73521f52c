//! Stacked bottleneck networks in their two representations.
//!
//! An SBN is classically two cascaded DNNs: stage 1 maps a window of input
//! frames to a small bottleneck vector, stage 2 consumes bottleneck vectors
//! sampled at strided offsets around the center frame (by default
//! {-10, -5, 0, +5, +10}, i.e. 5 taps with stride 5). The same weights also
//! describe a single convolutional net: stage 1 is a conv with a large
//! first kernel followed by 1x1 convs, and stage 2 starts with a kernel-5
//! conv dilated by 5 along time. `build_sbn_as_cnn` produces that net and
//! `eval_sbn_two_stage` evaluates the classic form as an independent
//! oracle.

use crate::error::{Error, Result};
use crate::graph::{Activation, LayerSpec, Mode, NetworkSpec};
use crate::layers::{ConvSpec, FullyConnectedSpec};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor3;

/// Dimensions of an SBN. `offsets` are bottleneck sampling positions
/// relative to the center frame and must form an arithmetic progression.
#[derive(Debug, Clone, PartialEq)]
pub struct SbnConfig {
    /// Frequency components per input frame.
    pub input_dim: usize,
    /// Stage-1 input window length in frames.
    pub window: usize,
    pub stage1_hidden: Vec<usize>,
    pub bottleneck: usize,
    pub stage2_hidden: Vec<usize>,
    pub outputs: usize,
    pub offsets: Vec<i64>,
}

impl Default for SbnConfig {
    fn default() -> Self {
        SbnConfig {
            input_dim: 12,
            window: 11,
            stage1_hidden: vec![32, 32],
            bottleneck: 8,
            stage2_hidden: vec![32],
            outputs: 16,
            offsets: vec![-10, -5, 0, 5, 10],
        }
    }
}

impl SbnConfig {
    /// Tap count and stride implied by the offsets.
    pub fn taps_and_stride(&self) -> Result<(usize, usize)> {
        if self.offsets.is_empty() {
            return Err(Error::shape("sbn offsets must be nonempty"));
        }
        if self.offsets.len() == 1 {
            return Ok((1, 1));
        }
        let stride = self.offsets[1] - self.offsets[0];
        if stride < 1 {
            return Err(Error::shape("sbn offsets must be strictly increasing"));
        }
        for pair in self.offsets.windows(2) {
            if pair[1] - pair[0] != stride {
                return Err(Error::shape(format!(
                    "sbn offsets must form an arithmetic progression, got {:?}",
                    self.offsets
                )));
            }
        }
        Ok((self.offsets.len(), stride as usize))
    }

    fn validate(&self) -> Result<(usize, usize)> {
        if self.input_dim == 0 || self.window == 0 || self.bottleneck == 0 || self.outputs == 0 {
            return Err(Error::shape("sbn dims must be >= 1"));
        }
        if self.stage1_hidden.iter().chain(&self.stage2_hidden).any(|&d| d == 0) {
            return Err(Error::shape("sbn hidden dims must be >= 1"));
        }
        self.taps_and_stride()
    }

    /// Time frames feeding one output: the stage-1 window swept across the
    /// tap positions.
    pub fn receptive_field_time(&self) -> Result<usize> {
        let (taps, stride) = self.taps_and_stride()?;
        Ok(self.window + (taps - 1) * stride)
    }
}

/// An SBN with materialized weights, shared by both representations.
/// Hidden layers are followed by ReLU; the bottleneck output and the final
/// classifier are linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SbnSpec {
    config: SbnConfig,
    /// window*input_dim -> hidden... -> bottleneck. The stage-1 input
    /// vector is the window flattened frequency-major (all frames of
    /// frequency component 0, then component 1, ...).
    stage1: Vec<FullyConnectedSpec>,
    /// taps*bottleneck -> hidden... -> outputs. The stage-2 input vector
    /// groups taps per bottleneck unit: unit 0 at all tap positions in
    /// time order, then unit 1, ...
    stage2: Vec<FullyConnectedSpec>,
    /// Auxiliary classifier on the stage-1 bottleneck. Not part of the
    /// equivalence path.
    aux_head: Vec<FullyConnectedSpec>,
}

impl SbnSpec {
    pub fn seeded(config: SbnConfig, seed: u64) -> Result<SbnSpec> {
        let (taps, _) = config.validate()?;
        let mut rng = XorShift64Star::new(seed);
        let chain = |dims: Vec<usize>, rng: &mut XorShift64Star| -> Result<Vec<FullyConnectedSpec>> {
            dims.windows(2)
                .map(|pair| FullyConnectedSpec::seeded(pair[0], pair[1], rng))
                .collect()
        };
        let mut dims1 = vec![config.window * config.input_dim];
        dims1.extend(&config.stage1_hidden);
        dims1.push(config.bottleneck);
        let stage1 = chain(dims1, &mut rng)?;

        let mut dims2 = vec![taps * config.bottleneck];
        dims2.extend(&config.stage2_hidden);
        dims2.push(config.outputs);
        let stage2 = chain(dims2, &mut rng)?;

        Ok(SbnSpec { config, stage1, stage2, aux_head: Vec::new() })
    }

    /// Attach an auxiliary classifier head on the bottleneck features.
    pub fn with_aux_head(mut self, dims: &[usize], seed: u64) -> Result<SbnSpec> {
        let mut rng = XorShift64Star::new(seed);
        let mut chain_dims = vec![self.config.bottleneck];
        chain_dims.extend_from_slice(dims);
        self.aux_head = chain_dims
            .windows(2)
            .map(|pair| FullyConnectedSpec::seeded(pair[0], pair[1], &mut rng))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn config(&self) -> &SbnConfig {
        &self.config
    }

    pub fn aux_head(&self) -> &[FullyConnectedSpec] {
        &self.aux_head
    }
}

/// The single-net form: a dense-mode CNN whose first conv consumes the
/// stage-1 window and whose stage-2 entry conv has kernel taps at the
/// bottleneck sampling stride.
pub fn build_sbn_as_cnn(spec: &SbnSpec) -> Result<NetworkSpec> {
    let config = &spec.config;
    let (taps, stride) = config.taps_and_stride()?;
    let mut layers = Vec::new();

    for (i, fc) in spec.stage1.iter().enumerate() {
        let conv = if i == 0 {
            ConvSpec::from_fully_connected(fc, 1, config.input_dim, config.window, 1)?
        } else {
            ConvSpec::from_fully_connected(fc, fc.in_dim, 1, 1, 1)?
        };
        layers.push(LayerSpec::Conv(conv));
        if i + 1 < spec.stage1.len() {
            layers.push(LayerSpec::Activation(Activation::Relu));
        }
    }
    for (i, fc) in spec.stage2.iter().enumerate() {
        let conv = if i == 0 {
            ConvSpec::from_fully_connected(fc, config.bottleneck, 1, taps, stride)?
        } else {
            ConvSpec::from_fully_connected(fc, fc.in_dim, 1, 1, 1)?
        };
        layers.push(LayerSpec::Conv(conv));
        if i + 1 < spec.stage2.len() {
            layers.push(LayerSpec::Activation(Activation::Relu));
        }
    }

    let rf = config.receptive_field_time()?;
    NetworkSpec::new((1, config.input_dim, rf), layers, Mode::Dense)
}

fn apply_fc(fc: &FullyConnectedSpec, x: &[f32]) -> Result<Vec<f32>> {
    if x.len() != fc.in_dim {
        return Err(Error::shape(format!("sbn stage expects {} inputs, got {}", fc.in_dim, x.len())));
    }
    let mut out = Vec::with_capacity(fc.out_dim);
    for o in 0..fc.out_dim {
        let mut acc = fc.bias[o];
        for (i, &xi) in x.iter().enumerate() {
            acc += fc.weights[o * fc.in_dim + i] * xi;
        }
        out.push(acc);
    }
    Ok(out)
}

fn run_chain(chain: &[FullyConnectedSpec], mut v: Vec<f32>) -> Result<Vec<f32>> {
    for (i, fc) in chain.iter().enumerate() {
        v = apply_fc(fc, &v)?;
        if i + 1 < chain.len() {
            for x in &mut v {
                *x = x.max(0.0);
            }
        }
    }
    Ok(v)
}

/// Classic two-stage evaluation: run stage 1 independently on every needed
/// window (no caching), gather the bottleneck taps, run stage 2. One output
/// vector per valid center position.
pub fn eval_sbn_two_stage(spec: &SbnSpec, utterance: &Tensor3) -> Result<Vec<Vec<f32>>> {
    let config = &spec.config;
    if utterance.fmaps() != 1 || utterance.freq() != config.input_dim {
        return Err(Error::shape(format!(
            "sbn expects a 1 x {} x T utterance, got {} x {} x {}",
            config.input_dim,
            utterance.fmaps(),
            utterance.freq(),
            utterance.time()
        )));
    }
    let (taps, stride) = config.taps_and_stride()?;
    let rf = config.receptive_field_time()?;
    if utterance.time() < rf {
        return Err(Error::InputTooShort { needed: rf, got: utterance.time() });
    }

    let stage1_at = |start: usize| -> Result<Vec<f32>> {
        let mut x = Vec::with_capacity(config.input_dim * config.window);
        for f in 0..config.input_dim {
            for t in 0..config.window {
                x.push(utterance.get(0, f, start + t));
            }
        }
        run_chain(&spec.stage1, x)
    };

    let positions = utterance.time() - rf + 1;
    let mut out = Vec::with_capacity(positions);
    for q in 0..positions {
        let mut feats = Vec::with_capacity(taps);
        for j in 0..taps {
            feats.push(stage1_at(q + j * stride)?);
        }
        let mut s2 = Vec::with_capacity(taps * config.bottleneck);
        for unit in 0..config.bottleneck {
            for feat in &feats {
                s2.push(feat[unit]);
            }
        }
        out.push(run_chain(&spec.stage2, s2)?);
    }
    Ok(out)
}
