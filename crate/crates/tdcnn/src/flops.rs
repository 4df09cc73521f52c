//! Analytic multiply-accumulate cost model for spliced vs dense evaluation.
//!
//! Counts come from shapes alone, so they are exact integers and identical
//! on every platform. Convolution and fully connected MACs are the headline
//! metric; pooling comparisons, batchnorm normalizations and ReLU ops are
//! reported separately and excluded from the ratio.

use std::fmt;

use crate::densify::densify;
use crate::error::{Error, Result};
use crate::graph::{LayerSpec, Mode, NetworkSpec, Shape, ShapeTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub layer: usize,
    pub label: String,
    pub macs: u128,
    pub aux_ops: u128,
}

/// Per-layer and total counts for one evaluation path.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFragment {
    pub per_layer: Vec<LayerCost>,
    pub total_macs: u128,
    pub total_aux: u128,
}

impl CostFragment {
    fn from_rows(per_layer: Vec<LayerCost>) -> CostFragment {
        let total_macs = per_layer.iter().map(|c| c.macs).sum();
        let total_aux = per_layer.iter().map(|c| c.aux_ops).sum();
        CostFragment { per_layer, total_macs, total_aux }
    }
}

/// Spliced vs dense cost for one utterance length.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub utterance_time: usize,
    pub window: usize,
    pub windows: u128,
    pub spliced: CostFragment,
    pub dense: CostFragment,
    /// spliced/dense as a reduced fraction; (0, 0) when dense is free.
    pub ratio_num: u128,
    pub ratio_den: u128,
}

impl CostReport {
    pub fn ratio_f64(&self) -> Option<f64> {
        if self.ratio_den == 0 {
            None
        } else {
            Some(self.ratio_num as f64 / self.ratio_den as f64)
        }
    }

    /// Exact comparison of this ratio against another (cross-multiplied).
    pub fn ratio_ge(&self, other: &CostReport) -> bool {
        self.ratio_num * other.ratio_den >= other.ratio_num * self.ratio_den
    }

    pub fn machine_rows(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "cost meta utterance={} window={} windows={}\n",
            self.utterance_time, self.window, self.windows
        ));
        for (path, frag) in [("spliced", &self.spliced), ("dense", &self.dense)] {
            for c in &frag.per_layer {
                out.push_str(&format!(
                    "cost {path} {} {} macs={} aux={}\n",
                    c.layer,
                    c.label.replace(' ', "_"),
                    c.macs,
                    c.aux_ops
                ));
            }
        }
        out.push_str(&format!(
            "cost total spliced_macs={} dense_macs={} ratio={}/{}\n",
            self.spliced.total_macs, self.dense.total_macs, self.ratio_num, self.ratio_den
        ));
        out
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cost report: utterance {} frames, window {}, {} windows",
            self.utterance_time, self.window, self.windows
        )?;
        writeln!(f, "  {:<28} {:>20} {:>20}", "layer", "spliced MACs", "dense MACs")?;
        let blank = (0, String::new());
        for (i, s) in self.spliced.per_layer.iter().enumerate() {
            let d = self
                .dense
                .per_layer
                .iter()
                .find(|c| c.layer == s.layer)
                .map(|c| (c.macs, c.label.clone()))
                .unwrap_or(blank.clone());
            writeln!(
                f,
                "  {:<28} {:>20} {:>20}",
                format!("{:>3} {}", s.layer, s.label),
                s.macs,
                if i < self.dense.per_layer.len() { d.0.to_string() } else { String::new() }
            )?;
        }
        writeln!(
            f,
            "  {:<28} {:>20} {:>20}",
            "total MACs", self.spliced.total_macs, self.dense.total_macs
        )?;
        writeln!(
            f,
            "  {:<28} {:>20} {:>20}",
            "aux ops (pool/bn/relu)", self.spliced.total_aux, self.dense.total_aux
        )?;
        match self.ratio_f64() {
            Some(r) => writeln!(
                f,
                "  ratio spliced/dense        {}/{} = {:.3}",
                self.ratio_num, self.ratio_den, r
            )?,
            None => writeln!(f, "  ratio spliced/dense        n/a (zero cost)")?,
        }
        Ok(())
    }
}

fn elements(shape: Shape) -> u128 {
    match shape {
        Shape::Map { fmaps, freq, time } => fmaps as u128 * freq as u128 * time as u128,
        Shape::Flat { dim } => dim as u128,
    }
}

/// Cost of evaluating every layer once, given the layer list and its trace.
fn stack_cost(layers: &[LayerSpec], trace: &ShapeTrace) -> Vec<LayerCost> {
    layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let out = trace.rows[i].shape;
            let (macs, aux) = match layer {
                LayerSpec::Conv(c) => (
                    elements(out) * (c.in_maps * c.kernel_f * c.kernel_t) as u128,
                    0,
                ),
                LayerSpec::FullyConnected(fc) => ((fc.in_dim * fc.out_dim) as u128, 0),
                LayerSpec::Pool(p) => {
                    (0, elements(out) * ((p.size_f * p.size_t) as u128 - 1))
                }
                LayerSpec::BatchNorm(_) | LayerSpec::Activation(_) => (0, elements(out)),
                LayerSpec::Flatten => (0, 0),
            };
            LayerCost { layer: i, label: layer.label(), macs, aux_ops: aux }
        })
        .collect()
}

/// MACs of sliding the windowed net across the utterance: one window's cost
/// times the number of valid start positions.
pub fn count_macs_windowed(net: &NetworkSpec, utterance_time: usize) -> Result<CostFragment> {
    if net.mode() != Mode::Windowed {
        return Err(Error::ModeMismatch { expected: "windowed", found: net.mode().as_str() });
    }
    let rf = net.receptive_field_time();
    if utterance_time < rf {
        return Err(Error::InputTooShort { needed: rf, got: utterance_time });
    }
    let windows = (utterance_time - rf + 1) as u128;
    let trace = net.infer_shapes()?;
    let mut rows = stack_cost(net.layers(), &trace);
    for row in &mut rows {
        row.macs *= windows;
        row.aux_ops *= windows;
    }
    Ok(CostFragment::from_rows(rows))
}

/// MACs of one dense pass over the whole utterance. Dilation moves kernel
/// taps but adds none, so per-output cost is dilation-independent.
pub fn count_macs_dense(net: &NetworkSpec, utterance_time: usize) -> Result<CostFragment> {
    if net.mode() != Mode::Dense {
        return Err(Error::ModeMismatch { expected: "dense", found: net.mode().as_str() });
    }
    let (_, _, min_time) = net.input_shape();
    if utterance_time < min_time {
        return Err(Error::InputTooShort { needed: min_time, got: utterance_time });
    }
    let trace = net.infer_shapes_with_time(utterance_time)?;
    Ok(CostFragment::from_rows(stack_cost(net.layers(), &trace)))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Full spliced-vs-dense comparison for a windowed net: densifies
/// internally and reduces the MAC ratio to an exact fraction.
pub fn cost_report(windowed: &NetworkSpec, utterance_time: usize) -> Result<CostReport> {
    let (dense_net, _) = densify(windowed)?;
    cost_report_against(windowed, &dense_net, utterance_time)
}

/// Same comparison against an already-densified net, so repeated lengths
/// do not re-run the rewrite.
pub fn cost_report_against(
    windowed: &NetworkSpec,
    dense_net: &NetworkSpec,
    utterance_time: usize,
) -> Result<CostReport> {
    let spliced = count_macs_windowed(windowed, utterance_time)?;
    let dense = count_macs_dense(dense_net, utterance_time)?;
    let rf = windowed.receptive_field_time();
    let (ratio_num, ratio_den) = if dense.total_macs == 0 {
        (0, 0)
    } else {
        let g = gcd(spliced.total_macs, dense.total_macs);
        if g == 0 {
            (0, 1)
        } else {
            (spliced.total_macs / g, dense.total_macs / g)
        }
    };
    Ok(CostReport {
        utterance_time,
        window: rf,
        windows: (utterance_time - rf + 1) as u128,
        spliced,
        dense,
        ratio_num,
        ratio_den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_fig1_toy, build_table1, Mode, NetworkSpec};
    use crate::layers::ConvSpec;
    use crate::rng::XorShift64Star;

    fn single_conv3_net() -> NetworkSpec {
        let mut rng = XorShift64Star::new(2);
        let conv = ConvSpec::seeded(1, 1, 1, 3, 1, 1, 0, &mut rng).unwrap();
        NetworkSpec::new((1, 1, 3), vec![LayerSpec::Conv(conv)], Mode::Windowed).unwrap()
    }

    #[test]
    fn single_conv_hand_count() {
        let net = single_conv3_net();
        let frag = count_macs_windowed(&net, 10).unwrap();
        assert_eq!(frag.total_macs, 24); // 3 MACs x 8 windows

        let (dense, _) = densify(&net).unwrap();
        let dense_frag = count_macs_dense(&dense, 10).unwrap();
        assert_eq!(dense_frag.total_macs, 24); // 8 outputs x 3 MACs: ratio 1

        let report = cost_report(&net, 10).unwrap();
        assert_eq!((report.ratio_num, report.ratio_den), (1, 1));
    }

    #[test]
    fn zero_layer_net_costs_nothing() {
        let net = NetworkSpec::new((1, 1, 1), vec![], Mode::Windowed).unwrap();
        let frag = count_macs_windowed(&net, 5).unwrap();
        assert_eq!(frag.total_macs, 0);
        assert_eq!(frag.total_aux, 0);
    }

    #[test]
    fn fig1_toy_ratio_exceeds_two() {
        let report = cost_report(&build_fig1_toy(1), 100).unwrap();
        let ratio = report.ratio_f64().unwrap();
        assert!(ratio > 2.0, "ratio {ratio}");
        assert!(report.spliced.total_macs > report.dense.total_macs);
    }

    #[test]
    fn too_short_utterance() {
        let net = build_fig1_toy(1);
        assert!(matches!(
            count_macs_windowed(&net, 7),
            Err(Error::InputTooShort { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn dense_conv_macs_independent_of_dilation() {
        // same output length, different dilation: equal MACs
        let mut rng = XorShift64Star::new(4);
        let d1 = ConvSpec::seeded(2, 3, 1, 3, 1, 1, 0, &mut rng).unwrap();
        let mut d2 = d1.clone();
        d2.dilation_t = 2;
        let net1 =
            NetworkSpec::new((2, 1, 3), vec![LayerSpec::Conv(d1)], Mode::Dense).unwrap();
        let net2 =
            NetworkSpec::new((2, 1, 5), vec![LayerSpec::Conv(d2)], Mode::Dense).unwrap();
        let a = count_macs_dense(&net1, 10).unwrap(); // out time 8
        let b = count_macs_dense(&net2, 12).unwrap(); // out time 8
        assert_eq!(a.total_macs, b.total_macs);
    }

    #[test]
    fn ratio_monotone_on_toy() {
        let net = build_fig1_toy(1);
        let mut prev: Option<CostReport> = None;
        for time in [10, 20, 50, 100, 400] {
            let report = cost_report(&net, time).unwrap();
            if let Some(p) = &prev {
                assert!(report.ratio_ge(p), "ratio not monotone at {time}");
            }
            prev = Some(report);
        }
    }

    #[test]
    fn table1_ratio_smoke() {
        let report = cost_report(&build_table1(64, 1), 148).unwrap();
        let ratio = report.ratio_f64().unwrap();
        assert!(ratio > 5.0 && ratio < 48.0, "ratio {ratio}");
    }

    /// When every layer keeps the full window extent (1x1 kernels), no
    /// computation is shared between neighboring windows except through
    /// the head, so the ratio climbs toward the window size.
    #[test]
    fn ratio_approaches_window_size_for_full_extent_layers() {
        use crate::graph::{Activation, LayerSpec};
        use crate::layers::FullyConnectedSpec;
        let mut rng = XorShift64Star::new(8);
        let window = 6;
        let mut layers = vec![LayerSpec::Conv(
            ConvSpec::seeded(1, 16, 1, 1, 1, 1, 0, &mut rng).unwrap(),
        )];
        for _ in 0..2 {
            layers.push(LayerSpec::Activation(Activation::Relu));
            layers.push(LayerSpec::Conv(ConvSpec::seeded(16, 16, 1, 1, 1, 1, 0, &mut rng).unwrap()));
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::FullyConnected(
            FullyConnectedSpec::seeded(16 * window, 2, &mut rng).unwrap(),
        ));
        let net = NetworkSpec::new((1, 1, window), layers, Mode::Windowed).unwrap();
        let ratio = cost_report(&net, 600).unwrap().ratio_f64().unwrap();
        assert!(ratio > 4.0 && ratio < window as f64, "ratio {ratio}");
    }

    #[test]
    fn aux_ops_are_counted_but_separate() {
        let report = cost_report(&build_table1(16, 1), 100).unwrap();
        assert!(report.spliced.total_aux > 0);
        assert!(report.dense.total_aux > 0);
        // headline MACs exclude pooling comparisons: a pool row has no MACs
        for row in &report.spliced.per_layer {
            if row.label.starts_with("pool") {
                assert_eq!(row.macs, 0);
                assert!(row.aux_ops > 0);
            }
        }
    }
}
