//! Network description, shape inference, receptive-field arithmetic and
//! forward evaluation.

mod format;

pub use format::{parse_network, serialize_network};

use std::fmt;

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_inference, conv2d_dilated, fully_connected, maxpool, relu, BatchNormSpec, ConvSpec,
    FullyConnectedSpec, PoolSpec,
};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// One layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Pool(PoolSpec),
    BatchNorm(BatchNormSpec),
    FullyConnected(FullyConnectedSpec),
    Activation(Activation),
    /// Marker: collapse (maps, freq, time) into a flat vector in storage
    /// order (map outer, frequency, time fastest).
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::Pool(_) => "pool",
            LayerSpec::BatchNorm(_) => "batchnorm",
            LayerSpec::FullyConnected(_) => "fc",
            LayerSpec::Activation(Activation::Relu) => "relu",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Short human label, e.g. `conv 3x3 d1x2` or `pool 2x2 s2x1`.
    pub fn label(&self) -> String {
        match self {
            LayerSpec::Conv(c) => {
                let mut s = format!("conv {}x{}", c.kernel_f, c.kernel_t);
                if c.dilation_f != 1 || c.dilation_t != 1 {
                    s.push_str(&format!(" d{}x{}", c.dilation_f, c.dilation_t));
                }
                s
            }
            LayerSpec::Pool(p) => {
                let mut s = format!("pool {}x{}", p.size_f, p.size_t);
                if p.stride_f != p.size_f || p.stride_t != p.size_t {
                    s.push_str(&format!(" s{}x{}", p.stride_f, p.stride_t));
                }
                if p.dilation_t != 1 {
                    s.push_str(&format!(" d1x{}", p.dilation_t));
                }
                s
            }
            LayerSpec::BatchNorm(_) => "batchnorm".into(),
            LayerSpec::FullyConnected(f) => format!("fc {}", f.out_dim),
            LayerSpec::Activation(Activation::Relu) => "relu".into(),
            LayerSpec::Flatten => "flatten".into(),
        }
    }
}

/// Whether the net classifies one fixed window or densely labels a whole
/// utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Windowed,
    Dense,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Windowed => "windowed",
            Mode::Dense => "dense",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map { fmaps: usize, freq: usize, time: usize },
    Flat { dim: usize },
}

impl Shape {
    pub fn time(&self) -> Option<usize> {
        match self {
            Shape::Map { time, .. } => Some(*time),
            Shape::Flat { .. } => None,
        }
    }

    /// Compact form: `64x64x42` or `2048`.
    pub fn compact(&self) -> String {
        match self {
            Shape::Map { fmaps, freq, time } => format!("{fmaps}x{freq}x{time}"),
            Shape::Flat { dim } => format!("{dim}"),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Map { fmaps, freq, time } => write!(f, "{fmaps} x {freq} x {time}"),
            Shape::Flat { dim } => write!(f, "{dim}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub layer: usize,
    pub label: String,
    pub shape: Shape,
}

/// Per-layer output shapes, mirroring the architecture-table layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub input: Shape,
    pub rows: Vec<TraceRow>,
}

impl ShapeTrace {
    pub fn output(&self) -> Shape {
        self.rows.last().map(|r| r.shape).unwrap_or(self.input)
    }

    /// Shape feeding layer `index`.
    pub fn shape_before(&self, index: usize) -> Shape {
        if index == 0 {
            self.input
        } else {
            self.rows[index - 1].shape
        }
    }
}

/// An ordered layer list with a declared input shape and evaluation mode.
/// Construction validates the whole net: shape inference must succeed and
/// the mode invariants must hold, so a `NetworkSpec` is well-formed by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    mode: Mode,
}

impl NetworkSpec {
    pub fn new(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        mode: Mode,
    ) -> Result<NetworkSpec> {
        let net = NetworkSpec { input_shape, layers, mode };
        net.infer_shapes()?;
        Ok(net)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Index of the Flatten marker, if any.
    pub fn flatten_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, LayerSpec::Flatten))
    }

    /// Trace every layer's output shape for the declared input shape.
    /// Errors name the first failing layer.
    pub fn infer_shapes(&self) -> Result<ShapeTrace> {
        self.infer_shapes_with_time(self.input_shape.2)
    }

    /// Shape trace for the same net fed a different time extent (cost
    /// model support; dense nets accept any utterance length).
    pub fn infer_shapes_with_time(&self, time: usize) -> Result<ShapeTrace> {
        let (fmaps, freq, _) = self.input_shape;
        if fmaps == 0 || freq == 0 || time == 0 {
            return Err(Error::Dimension(format!(
                "input shape must be >= 1 per axis, got {fmaps} x {freq} x {time}"
            )));
        }
        let input = Shape::Map { fmaps, freq, time };
        let mut shape = input;
        let mut seen_flatten = false;
        let mut rows = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = step_shape(shape, layer, i, &mut seen_flatten, self.mode)?;
            rows.push(TraceRow { layer: i, label: layer.label(), shape });
        }
        if self.mode == Mode::Windowed {
            if let Shape::Map { time, .. } = shape {
                if time != 1 {
                    return Err(Error::shape(format!(
                        "windowed net must end with a single prediction, final time extent is {time}"
                    )));
                }
            }
        }
        Ok(ShapeTrace { input, rows })
    }

    /// Number of input time frames that influence one output position,
    /// by backward extent propagation through kernels, dilations and
    /// strides.
    pub fn receptive_field_time(&self) -> usize {
        let (stop, mut extent) = match self.flatten_index() {
            Some(fi) => {
                // The flatten marker hands the whole remaining time extent
                // to the fully connected head.
                let trace = self.infer_shapes().expect("validated at construction");
                let time = trace
                    .shape_before(fi)
                    .time()
                    .expect("flatten input is a map shape");
                (fi, time)
            }
            None => (self.layers.len(), 1),
        };
        for layer in self.layers[..stop].iter().rev() {
            extent = match layer {
                LayerSpec::Conv(c) => extent + c.time_extent() - 1,
                LayerSpec::Pool(p) => (extent - 1) * p.stride_t + p.time_extent(),
                _ => extent,
            };
        }
        extent
    }

    /// Evaluate the net. Windowed mode takes exactly the declared input
    /// shape and yields an (out, 1, 1) prediction; dense mode accepts any
    /// time extent >= the declared minimum and yields (out, 1, T_out).
    pub fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        let (fmaps, freq, time) = self.input_shape;
        if input.fmaps() != fmaps || input.freq() != freq {
            return Err(Error::shape(format!(
                "input shape {}x{} does not match declared {fmaps}x{freq}",
                input.fmaps(),
                input.freq()
            )));
        }
        match self.mode {
            Mode::Windowed if input.time() != time => {
                return Err(Error::shape(format!(
                    "windowed net expects exactly {time} time frames, got {}",
                    input.time()
                )))
            }
            Mode::Dense if input.time() < time => {
                return Err(Error::InputTooShort { needed: time, got: input.time() });
            }
            _ => {}
        }

        enum Value {
            Map(Tensor3),
            Flat(Vec<f32>),
        }

        let mut value = Value::Map(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            value = match (value, layer) {
                (Value::Map(t), LayerSpec::Conv(c)) => {
                    Value::Map(conv2d_dilated(&t, c).map_err(|e| e.at_layer(i))?)
                }
                (Value::Map(t), LayerSpec::Pool(p)) => {
                    Value::Map(maxpool(&t, p).map_err(|e| e.at_layer(i))?)
                }
                (Value::Map(t), LayerSpec::BatchNorm(b)) => {
                    Value::Map(batchnorm_inference(&t, b).map_err(|e| e.at_layer(i))?)
                }
                (Value::Map(t), LayerSpec::Activation(Activation::Relu)) => Value::Map(relu(&t)),
                (Value::Map(t), LayerSpec::Flatten) => Value::Flat(t.into_vec()),
                (Value::Flat(v), LayerSpec::FullyConnected(f)) => {
                    Value::Flat(fully_connected(&v, f).map_err(|e| e.at_layer(i))?)
                }
                (Value::Flat(v), LayerSpec::BatchNorm(b)) => {
                    let t = Tensor3::from_vec(v.len(), 1, 1, v)?;
                    Value::Flat(batchnorm_inference(&t, b).map_err(|e| e.at_layer(i))?.into_vec())
                }
                (Value::Flat(v), LayerSpec::Activation(Activation::Relu)) => {
                    Value::Flat(v.into_iter().map(|x| x.max(0.0)).collect())
                }
                _ => {
                    // valid nets cannot reach here
                    return Err(Error::shape_at(i, "layer applied to wrong value kind"));
                }
            };
        }
        match value {
            Value::Map(t) => Ok(t),
            Value::Flat(v) => {
                let d = v.len();
                Tensor3::from_vec(d, 1, 1, v)
            }
        }
    }
}

fn step_shape(
    shape: Shape,
    layer: &LayerSpec,
    index: usize,
    seen_flatten: &mut bool,
    mode: Mode,
) -> Result<Shape> {
    let err = |msg: String| Error::shape_at(index, msg);
    match (shape, layer) {
        (Shape::Map { fmaps, freq, time }, LayerSpec::Conv(c)) => {
            if fmaps != c.in_maps {
                return Err(err(format!("conv expects {} input maps, got {fmaps}", c.in_maps)));
            }
            let (out_f, out_t) = c.output_shape(freq, time).map_err(|e| e.at_layer(index))?;
            Ok(Shape::Map { fmaps: c.out_maps, freq: out_f, time: out_t })
        }
        (Shape::Map { fmaps, freq, time }, LayerSpec::Pool(p)) => {
            let (out_f, out_t) = p.output_shape(freq, time).map_err(|e| e.at_layer(index))?;
            Ok(Shape::Map { fmaps, freq: out_f, time: out_t })
        }
        (Shape::Map { fmaps, freq, time }, LayerSpec::BatchNorm(b)) => {
            if fmaps != b.maps() {
                return Err(err(format!("batchnorm expects {} maps, got {fmaps}", b.maps())));
            }
            Ok(Shape::Map { fmaps, freq, time })
        }
        (Shape::Flat { dim }, LayerSpec::BatchNorm(b)) => {
            if dim != b.maps() {
                return Err(err(format!("batchnorm expects {} units, got {dim}", b.maps())));
            }
            Ok(Shape::Flat { dim })
        }
        (s, LayerSpec::Activation(_)) => Ok(s),
        (Shape::Map { fmaps, freq, time }, LayerSpec::Flatten) => {
            if mode == Mode::Dense {
                return Err(err("dense mode nets cannot contain flatten".into()));
            }
            if *seen_flatten {
                return Err(err("duplicate flatten".into()));
            }
            *seen_flatten = true;
            Ok(Shape::Flat { dim: fmaps * freq * time })
        }
        (Shape::Flat { dim }, LayerSpec::FullyConnected(f)) => {
            if mode == Mode::Dense {
                return Err(err("dense mode nets cannot contain fully connected layers".into()));
            }
            if dim != f.in_dim {
                return Err(err(format!("fc expects input length {}, got {dim}", f.in_dim)));
            }
            Ok(Shape::Flat { dim: f.out_dim })
        }
        (Shape::Flat { .. }, l) => {
            Err(err(format!("{} cannot follow flatten", l.kind())))
        }
        (Shape::Map { .. }, LayerSpec::FullyConnected(_)) => {
            Err(err("fully connected layers require a preceding flatten".into()))
        }
    }
}

/// The reference 13-conv VGG-style architecture on 3 x 64 x 48 windows:
/// conv7x7/pool blocks down to 512 x 2 x 3, then a 2048/2048/2048/1024
/// fully connected head into `num_outputs` classes. BatchNorm and ReLU
/// follow every conv and every FC except the final classifier.
pub fn build_table1(num_outputs: usize, seed: u64) -> NetworkSpec {
    assert!(num_outputs >= 1, "need at least one output class");
    let mut rng = XorShift64Star::new(seed);
    let mut layers: Vec<LayerSpec> = Vec::new();

    let conv = |layers: &mut Vec<LayerSpec>, input: usize, out: usize, k: usize, pad: usize, rng: &mut XorShift64Star| {
        layers.push(LayerSpec::Conv(
            ConvSpec::seeded(input, out, k, k, 1, 1, pad, rng).expect("valid conv"),
        ));
        layers.push(LayerSpec::BatchNorm(BatchNormSpec::seeded(out, rng).expect("valid bn")));
        layers.push(LayerSpec::Activation(Activation::Relu));
    };
    let pool = |layers: &mut Vec<LayerSpec>, f: usize, t: usize| {
        layers.push(LayerSpec::Pool(PoolSpec::new(f, t, f, t).expect("valid pool")));
    };

    conv(&mut layers, 3, 64, 7, 3, &mut rng);
    pool(&mut layers, 2, 1);
    for input in [64, 64, 64] {
        conv(&mut layers, input, 64, 3, 1, &mut rng);
    }
    pool(&mut layers, 2, 1);
    for input in [64, 128, 128] {
        conv(&mut layers, input, 128, 3, 1, &mut rng);
    }
    pool(&mut layers, 2, 1);
    for input in [128, 256, 256] {
        conv(&mut layers, input, 256, 3, 1, &mut rng);
    }
    pool(&mut layers, 2, 2);
    for input in [256, 512, 512] {
        conv(&mut layers, input, 512, 3, 1, &mut rng);
    }
    pool(&mut layers, 2, 2);

    layers.push(LayerSpec::Flatten);
    let fc = |layers: &mut Vec<LayerSpec>, input: usize, out: usize, head: bool, rng: &mut XorShift64Star| {
        layers.push(LayerSpec::FullyConnected(
            FullyConnectedSpec::seeded(input, out, rng).expect("valid fc"),
        ));
        if !head {
            layers.push(LayerSpec::BatchNorm(BatchNormSpec::seeded(out, rng).expect("valid bn")));
            layers.push(LayerSpec::Activation(Activation::Relu));
        }
    };
    fc(&mut layers, 512 * 2 * 3, 2048, false, &mut rng);
    fc(&mut layers, 2048, 2048, false, &mut rng);
    fc(&mut layers, 2048, 2048, false, &mut rng);
    fc(&mut layers, 2048, 1024, false, &mut rng);
    fc(&mut layers, 1024, num_outputs, true, &mut rng);

    NetworkSpec::new((3, 64, 48), layers, Mode::Windowed).expect("reference net is well-formed")
}

/// The three-layer toy net (conv3, pool2 stride 2, conv3) on an 8-frame
/// window of 1-D frames: the smallest net that exercises a time-strided
/// pool.
pub fn build_fig1_toy(seed: u64) -> NetworkSpec {
    let mut rng = XorShift64Star::new(seed);
    let layers = vec![
        LayerSpec::Conv(ConvSpec::seeded(1, 4, 1, 3, 1, 1, 0, &mut rng).expect("valid conv")),
        LayerSpec::Pool(PoolSpec::new(1, 2, 1, 2).expect("valid pool")),
        LayerSpec::Conv(ConvSpec::seeded(4, 2, 1, 3, 1, 1, 0, &mut rng).expect("valid conv")),
    ];
    NetworkSpec::new((1, 1, 8), layers, Mode::Windowed).expect("toy net is well-formed")
}
