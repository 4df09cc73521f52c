//! Independent sliding-window evaluator and the equivalence harness.
//!
//! The spliced path here re-implements every layer from scratch and shares
//! no evaluation code with the engine's `NetworkSpec::forward`, so it can
//! serve as an oracle for the densify pass. Both sides accumulate each
//! output element in the same documented order (bias first, then input map,
//! frequency tap, time tap), which is what makes bit-exact comparison
//! meaningful: with a fixed order, float addition has nothing left to
//! disagree about.

use std::fmt;
use std::time::Instant;

use crate::densify::{convolutionalize, densify};
use crate::error::{Error, Result};
use crate::graph::{Activation, LayerSpec, Mode, NetworkSpec};
use crate::layers::{BatchNormSpec, ConvSpec, FullyConnectedSpec, PoolSpec};
use crate::tensor::Tensor3;

/// Outcome of comparing spliced and dense evaluation positionwise.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub positions: usize,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// Fraction of positions whose argmax agrees.
    pub argmax_agreement: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Wall-clock seconds, anecdotal (excluded from machine output).
    pub spliced_seconds: f64,
    pub dense_seconds: f64,
}

impl EquivalenceReport {
    /// One record, fixed field order, no timing (byte-stable across runs).
    pub fn machine_row(&self) -> String {
        format!(
            "equivalence positions={} max_abs={} max_rel={} argmax_agreement={} tolerance={} pass={}",
            self.positions,
            self.max_abs_diff,
            self.max_rel_diff,
            self.argmax_agreement,
            self.tolerance,
            self.pass
        )
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "equivalence report")?;
        writeln!(f, "  positions compared   {}", self.positions)?;
        writeln!(f, "  max absolute diff    {:e}", self.max_abs_diff)?;
        writeln!(f, "  max relative diff    {:e}", self.max_rel_diff)?;
        writeln!(f, "  argmax agreement     {}", self.argmax_agreement)?;
        writeln!(f, "  tolerance            {:e}", self.tolerance)?;
        writeln!(f, "  spliced wall time    {:.3}s", self.spliced_seconds)?;
        writeln!(f, "  dense wall time      {:.3}s", self.dense_seconds)?;
        writeln!(f, "  verdict              {}", if self.pass { "PASS" } else { "FAIL" })?;
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Oracle layer evaluators (independent of the engine implementations)
// ---------------------------------------------------------------------

fn o_conv(input: &Tensor3, spec: &ConvSpec) -> Result<Tensor3> {
    if input.fmaps() != spec.in_maps {
        return Err(Error::shape("oracle conv map mismatch"));
    }
    let (out_f, out_t) = spec.output_shape(input.freq(), input.time())?;
    let freq = input.freq() as isize;
    let mut data = vec![0.0f32; spec.out_maps * out_f * out_t];
    for om in 0..spec.out_maps {
        for of in 0..out_f {
            let row_base = (om * out_f + of) * out_t;
            let row = &mut data[row_base..row_base + out_t];
            row.fill(spec.bias[om]);
            for im in 0..spec.in_maps {
                for kf in 0..spec.kernel_f {
                    let fi = (of + kf * spec.dilation_f) as isize - spec.pad_f as isize;
                    if fi < 0 || fi >= freq {
                        continue;
                    }
                    let src = input.row(im, fi as usize);
                    for kt in 0..spec.kernel_t {
                        let w = spec.weights
                            [((om * spec.in_maps + im) * spec.kernel_f + kf) * spec.kernel_t + kt];
                        let shifted = &src[kt * spec.dilation_t..kt * spec.dilation_t + out_t];
                        for (acc, &x) in row.iter_mut().zip(shifted) {
                            *acc += w * x;
                        }
                    }
                }
            }
        }
    }
    Tensor3::from_vec(spec.out_maps, out_f, out_t, data)
}

fn o_pool(input: &Tensor3, spec: &PoolSpec) -> Result<Tensor3> {
    let (out_f, out_t) = spec.output_shape(input.freq(), input.time())?;
    let mut data = Vec::with_capacity(input.fmaps() * out_f * out_t);
    for m in 0..input.fmaps() {
        for of in 0..out_f {
            for ot in 0..out_t {
                let mut best = input.get(m, of * spec.stride_f, ot * spec.stride_t);
                for jf in 0..spec.size_f {
                    for jt in 0..spec.size_t {
                        let v = input.get(
                            m,
                            of * spec.stride_f + jf,
                            ot * spec.stride_t + jt * spec.dilation_t,
                        );
                        if v > best {
                            best = v;
                        }
                    }
                }
                data.push(best);
            }
        }
    }
    Tensor3::from_vec(input.fmaps(), out_f, out_t, data)
}

fn o_batchnorm(input: &Tensor3, spec: &BatchNormSpec) -> Result<Tensor3> {
    if input.fmaps() != spec.maps() {
        return Err(Error::shape("oracle batchnorm map mismatch"));
    }
    let mut data = Vec::with_capacity(input.len());
    for m in 0..input.fmaps() {
        let denom = (spec.variance[m] + spec.epsilon).sqrt();
        for f in 0..input.freq() {
            for t in 0..input.time() {
                data.push(spec.scale[m] * (input.get(m, f, t) - spec.mean[m]) / denom + spec.shift[m]);
            }
        }
    }
    Tensor3::from_vec(input.fmaps(), input.freq(), input.time(), data)
}

fn o_fc(input: &[f32], spec: &FullyConnectedSpec) -> Result<Vec<f32>> {
    if input.len() != spec.in_dim {
        return Err(Error::shape("oracle fc length mismatch"));
    }
    let mut out = Vec::with_capacity(spec.out_dim);
    for o in 0..spec.out_dim {
        let mut acc = spec.bias[o];
        for (i, &x) in input.iter().enumerate() {
            acc += spec.weights[o * spec.in_dim + i] * x;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Evaluate one window with the oracle implementations, returning the final
/// prediction as a flat vector.
fn o_forward(net: &NetworkSpec, window: &Tensor3) -> Result<Vec<f32>> {
    enum Value {
        Map(Tensor3),
        Flat(Vec<f32>),
    }
    let mut value = Value::Map(window.clone());
    for layer in net.layers() {
        value = match (value, layer) {
            (Value::Map(t), LayerSpec::Conv(c)) => Value::Map(o_conv(&t, c)?),
            (Value::Map(t), LayerSpec::Pool(p)) => Value::Map(o_pool(&t, p)?),
            (Value::Map(t), LayerSpec::BatchNorm(b)) => Value::Map(o_batchnorm(&t, b)?),
            (Value::Map(t), LayerSpec::Activation(Activation::Relu)) => {
                let data = t.data().iter().map(|&x| x.max(0.0)).collect();
                Value::Map(Tensor3::from_vec(t.fmaps(), t.freq(), t.time(), data)?)
            }
            (Value::Map(t), LayerSpec::Flatten) => Value::Flat(t.into_vec()),
            (Value::Flat(v), LayerSpec::FullyConnected(f)) => Value::Flat(o_fc(&v, f)?),
            (Value::Flat(v), LayerSpec::BatchNorm(b)) => {
                if v.len() != b.maps() {
                    return Err(Error::shape("oracle batchnorm unit mismatch"));
                }
                let out = v
                    .iter()
                    .enumerate()
                    .map(|(m, &x)| {
                        b.scale[m] * (x - b.mean[m]) / (b.variance[m] + b.epsilon).sqrt()
                            + b.shift[m]
                    })
                    .collect();
                Value::Flat(out)
            }
            (Value::Flat(v), LayerSpec::Activation(Activation::Relu)) => {
                Value::Flat(v.into_iter().map(|x| x.max(0.0)).collect())
            }
            _ => return Err(Error::shape("oracle: layer applied to wrong value kind")),
        };
    }
    Ok(match value {
        Value::Map(t) => t.into_vec(),
        Value::Flat(v) => v,
    })
}

/// Sliding-window evaluation of a windowed net: one output vector per valid
/// start position, each computed independently with the oracle layer
/// implementations.
pub fn eval_spliced(net: &NetworkSpec, utterance: &Tensor3) -> Result<Vec<Vec<f32>>> {
    if net.mode() != Mode::Windowed {
        return Err(Error::ModeMismatch { expected: "windowed", found: net.mode().as_str() });
    }
    let rf = net.receptive_field_time();
    if utterance.time() < rf {
        return Err(Error::InputTooShort { needed: rf, got: utterance.time() });
    }
    let positions = utterance.time() - rf + 1;
    let mut out = Vec::with_capacity(positions);
    for start in 0..positions {
        let window = utterance.slice_time(start, rf)?;
        out.push(o_forward(net, &window)?);
    }
    Ok(out)
}

/// Collapse an (maps, freq, time) engine output into one vector per time
/// step, flattening maps and frequency in storage order.
fn columns(output: &Tensor3) -> Vec<Vec<f32>> {
    let per = output.fmaps() * output.freq();
    let time = output.time();
    let mut cols = vec![Vec::with_capacity(per); time];
    for m in 0..output.fmaps() {
        for f in 0..output.freq() {
            let row = output.row(m, f);
            for (t, col) in cols.iter_mut().enumerate() {
                col.push(row[t]);
            }
        }
    }
    cols
}

/// Dense evaluation through the engine: the whole utterance in one forward
/// pass, reshaped to one output vector per valid position.
pub fn eval_dense(net: &NetworkSpec, utterance: &Tensor3) -> Result<Vec<Vec<f32>>> {
    if net.mode() != Mode::Dense {
        return Err(Error::ModeMismatch { expected: "dense", found: net.mode().as_str() });
    }
    Ok(columns(&net.forward(utterance)?))
}

/// Diagnostic: run the windowed net convolutionally with its pooling
/// strides intact. The output sequence is shorter than the valid-position
/// count by the product of the time strides.
pub fn eval_downsampled(net: &NetworkSpec, utterance: &Tensor3) -> Result<Vec<Vec<f32>>> {
    let down = convolutionalize(net)?;
    Ok(columns(&down.forward(utterance)?))
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn compare(
    spliced: &[Vec<f32>],
    dense: &[Vec<f32>],
    tolerance: f64,
    spliced_seconds: f64,
    dense_seconds: f64,
) -> Result<EquivalenceReport> {
    if spliced.len() != dense.len() {
        return Err(Error::shape(format!(
            "position count mismatch: spliced {} vs dense {}",
            spliced.len(),
            dense.len()
        )));
    }
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut agree = 0usize;
    for (a, b) in spliced.iter().zip(dense) {
        if a.len() != b.len() {
            return Err(Error::shape(format!(
                "output length mismatch: spliced {} vs dense {}",
                a.len(),
                b.len()
            )));
        }
        for (&x, &y) in a.iter().zip(b) {
            let abs = (x as f64 - y as f64).abs();
            if abs > max_abs {
                max_abs = abs;
            }
            let denom = (x.abs() as f64).max(y.abs() as f64);
            if denom > 0.0 {
                let rel = abs / denom;
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
        if argmax(a) == argmax(b) {
            agree += 1;
        }
    }
    let positions = spliced.len();
    Ok(EquivalenceReport {
        positions,
        max_abs_diff: max_abs,
        max_rel_diff: max_rel,
        argmax_agreement: if positions == 0 { 1.0 } else { agree as f64 / positions as f64 },
        tolerance,
        pass: max_abs <= tolerance,
        spliced_seconds,
        dense_seconds,
    })
}

/// Densify `windowed` and certify the rewrite on the given utterance:
/// spliced evaluation of the original vs dense evaluation of the rewrite,
/// positionwise.
pub fn verify_equivalence(
    windowed: &NetworkSpec,
    utterance: &Tensor3,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    let (dense, _) = densify(windowed)?;
    verify_equivalence_against(windowed, &dense, utterance, tolerance)
}

/// Equivalence check against a caller-provided dense net (used to exercise
/// deliberately corrupted rewrites).
pub fn verify_equivalence_against(
    windowed: &NetworkSpec,
    dense: &NetworkSpec,
    utterance: &Tensor3,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    let start = Instant::now();
    let spliced_out = eval_spliced(windowed, utterance)?;
    let spliced_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let dense_out = eval_dense(dense, utterance)?;
    let dense_seconds = start.elapsed().as_secs_f64();
    compare(&spliced_out, &dense_out, tolerance, spliced_seconds, dense_seconds)
}
