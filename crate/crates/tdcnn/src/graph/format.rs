//! Human-readable network description files.
//!
//! Line-oriented, versioned, diffable. Weight blobs are base64 of the raw
//! little-endian f32 bytes, so serialize -> parse reproduces every value
//! bit-for-bit.
//!
//! ```text
//! tdcnn-net v1
//! mode windowed
//! input 3 64 48
//! layer conv in_maps=3 out_maps=64 kernel_f=7 kernel_t=7 dilation_f=1 dilation_t=1 pad_f=3
//! weights b64:...
//! bias b64:...
//! layer pool size_f=2 size_t=1 stride_f=2 stride_t=1 dilation_t=1
//! layer batchnorm maps=64 epsilon=0.00001
//! mean b64:...
//! variance b64:...
//! scale b64:...
//! shift b64:...
//! layer relu
//! layer flatten
//! layer fc in_dim=3072 out_dim=2048
//! weights b64:...
//! bias b64:...
//! ```
//!
//! A file may instead declare a stacked bottleneck network with a single
//! `sbn` entry, which expands to its dilated-CNN form.

use std::collections::HashMap;
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;

use crate::error::{Error, Result};
use crate::graph::{Activation, LayerSpec, Mode, NetworkSpec};
use crate::layers::{BatchNormSpec, ConvSpec, FullyConnectedSpec, PoolSpec};
use crate::sbn::{build_sbn_as_cnn, SbnConfig, SbnSpec};

const HEADER: &str = "tdcnn-net v1";

pub fn serialize_network(net: &NetworkSpec) -> String {
    let mut out = String::new();
    let (m, f, t) = net.input_shape();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "mode {}", net.mode()).unwrap();
    writeln!(out, "input {m} {f} {t}").unwrap();
    for layer in net.layers() {
        match layer {
            LayerSpec::Conv(c) => {
                writeln!(
                    out,
                    "layer conv in_maps={} out_maps={} kernel_f={} kernel_t={} dilation_f={} dilation_t={} pad_f={}",
                    c.in_maps, c.out_maps, c.kernel_f, c.kernel_t, c.dilation_f, c.dilation_t, c.pad_f
                )
                .unwrap();
                writeln!(out, "weights b64:{}", encode_blob(&c.weights)).unwrap();
                writeln!(out, "bias b64:{}", encode_blob(&c.bias)).unwrap();
            }
            LayerSpec::Pool(p) => {
                writeln!(
                    out,
                    "layer pool size_f={} size_t={} stride_f={} stride_t={} dilation_t={}",
                    p.size_f, p.size_t, p.stride_f, p.stride_t, p.dilation_t
                )
                .unwrap();
            }
            LayerSpec::BatchNorm(b) => {
                writeln!(out, "layer batchnorm maps={} epsilon={}", b.maps(), b.epsilon).unwrap();
                writeln!(out, "mean b64:{}", encode_blob(&b.mean)).unwrap();
                writeln!(out, "variance b64:{}", encode_blob(&b.variance)).unwrap();
                writeln!(out, "scale b64:{}", encode_blob(&b.scale)).unwrap();
                writeln!(out, "shift b64:{}", encode_blob(&b.shift)).unwrap();
            }
            LayerSpec::FullyConnected(f) => {
                writeln!(out, "layer fc in_dim={} out_dim={}", f.in_dim, f.out_dim).unwrap();
                writeln!(out, "weights b64:{}", encode_blob(&f.weights)).unwrap();
                writeln!(out, "bias b64:{}", encode_blob(&f.bias)).unwrap();
            }
            LayerSpec::Activation(Activation::Relu) => writeln!(out, "layer relu").unwrap(),
            LayerSpec::Flatten => writeln!(out, "layer flatten").unwrap(),
        }
    }
    out
}

fn encode_blob(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

struct Cursor<'a> {
    // (line number, raw text), comments and blanks removed
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                let t = l.trim_start();
                !t.is_empty() && !t.starts_with('#')
            })
            .collect();
        Cursor { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| syntax(self.last_line() + 1, 1, format!("expected {what}")))
    }

    fn last_line(&self) -> usize {
        self.lines.last().map(|(n, _)| *n).unwrap_or(0)
    }
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, col, msg: msg.into() }
}

/// Whitespace tokens with their 1-based byte columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

struct Fields<'a> {
    line: usize,
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, toks: &[(usize, &'a str)]) -> Result<Self> {
        let mut map = HashMap::new();
        for &(col, tok) in toks {
            let eq = tok
                .find('=')
                .ok_or_else(|| syntax(line, col, format!("expected key=value, got '{tok}'")))?;
            let (key, value) = (&tok[..eq], &tok[eq + 1..]);
            if key.is_empty() || value.is_empty() {
                return Err(syntax(line, col, format!("expected key=value, got '{tok}'")));
            }
            if map.insert(key, (col, value)).is_some() {
                return Err(syntax(line, col, format!("duplicate field '{key}'")));
            }
        }
        Ok(Fields { line, map })
    }

    fn get_count(&self, key: &str) -> Result<usize> {
        let (col, raw) = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, 1, format!("missing field '{key}'")))?;
        raw.parse::<usize>()
            .map_err(|_| syntax(self.line, *col, format!("'{raw}' is not a count")))
    }

    fn get_count_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.map.contains_key(key) {
            self.get_count(key)
        } else {
            Ok(default)
        }
    }

    fn get_f32(&self, key: &str) -> Result<f32> {
        let (col, raw) = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, 1, format!("missing field '{key}'")))?;
        raw.parse::<f32>()
            .map_err(|_| syntax(self.line, *col, format!("'{raw}' is not a real")))
    }

    fn get_u64(&self, key: &str) -> Result<u64> {
        let (col, raw) = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, 1, format!("missing field '{key}'")))?;
        raw.parse::<u64>()
            .map_err(|_| syntax(self.line, *col, format!("'{raw}' is not an integer")))
    }

    fn get_counts(&self, key: &str) -> Result<Vec<usize>> {
        let (col, raw) = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, 1, format!("missing field '{key}'")))?;
        if raw.is_empty() {
            return Ok(vec![]);
        }
        raw.split(',')
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| syntax(self.line, *col, format!("'{p}' is not a count")))
            })
            .collect()
    }

    fn get_offsets(&self, key: &str) -> Result<Vec<i64>> {
        let (col, raw) = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, 1, format!("missing field '{key}'")))?;
        raw.split(',')
            .map(|p| {
                p.parse::<i64>()
                    .map_err(|_| syntax(self.line, *col, format!("'{p}' is not an integer")))
            })
            .collect()
    }
}

/// Read one `name b64:...` blob line.
fn parse_blob(cursor: &mut Cursor<'_>, name: &str) -> Result<Vec<f32>> {
    let (line, text) = cursor.expect(&format!("blob line '{name} b64:...'"))?;
    let toks = tokens(text);
    if toks.len() != 2 || toks[0].1 != name {
        return Err(syntax(line, toks.first().map(|t| t.0).unwrap_or(1), format!("expected blob '{name} b64:...'")));
    }
    let (col, payload) = toks[1];
    let payload = payload
        .strip_prefix("b64:")
        .ok_or_else(|| syntax(line, col, "blob payload must start with 'b64:'"))?;
    let bytes = B64
        .decode(payload)
        .map_err(|e| syntax(line, col, format!("invalid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(syntax(line, col, "blob byte length is not a multiple of 4"));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    let mut cursor = Cursor::new(text);

    let (line, header) = cursor.expect("header line")?;
    if header.trim() != HEADER {
        return Err(syntax(line, 1, format!("expected header '{HEADER}'")));
    }

    let (line, mode_line) = cursor.expect("mode line")?;
    let toks = tokens(mode_line);
    if toks.len() != 2 || toks[0].1 != "mode" {
        return Err(syntax(line, 1, "expected 'mode windowed|dense'"));
    }
    let mode = match toks[1].1 {
        "windowed" => Mode::Windowed,
        "dense" => Mode::Dense,
        other => return Err(syntax(line, toks[1].0, format!("unknown mode '{other}'"))),
    };

    // An sbn entry replaces the input/layer list entirely.
    if let Some((_, text)) = cursor.peek() {
        if tokens(text).first().map(|t| t.1) == Some("sbn") {
            let (line, text) = cursor.next().unwrap();
            if cursor.peek().is_some() {
                let (extra, _) = cursor.peek().unwrap();
                return Err(syntax(extra, 1, "sbn entry must be the only entry"));
            }
            if mode != Mode::Dense {
                return Err(syntax(line, 1, "sbn entries expand to a dense net; use 'mode dense'"));
            }
            return parse_sbn_entry(line, &tokens(text)[1..]);
        }
    }

    let (line, input_line) = cursor.expect("input line")?;
    let toks = tokens(input_line);
    if toks.len() != 4 || toks[0].1 != "input" {
        return Err(syntax(line, 1, "expected 'input <fmaps> <freq> <time>'"));
    }
    let mut dims = [0usize; 3];
    for (d, (col, raw)) in dims.iter_mut().zip(&toks[1..]) {
        *d = raw
            .parse::<usize>()
            .map_err(|_| syntax(line, *col, format!("'{raw}' is not a count")))?;
    }

    let mut layers = Vec::new();
    let mut entry_lines = Vec::new();
    while let Some((line, text)) = cursor.next() {
        let toks = tokens(text);
        if toks[0].1 != "layer" {
            return Err(syntax(line, toks[0].0, format!("expected 'layer', got '{}'", toks[0].1)));
        }
        let (kind_col, kind) = *toks.get(1).ok_or_else(|| syntax(line, 1, "missing layer kind"))?;
        let layer = match kind {
            "conv" => {
                let f = Fields::parse(line, &toks[2..])?;
                let in_maps = f.get_count("in_maps")?;
                let out_maps = f.get_count("out_maps")?;
                let kernel_f = f.get_count("kernel_f")?;
                let kernel_t = f.get_count("kernel_t")?;
                let dilation_f = f.get_count_or("dilation_f", 1)?;
                let dilation_t = f.get_count_or("dilation_t", 1)?;
                let pad_f = f.get_count_or("pad_f", 0)?;
                let weights = parse_blob(&mut cursor, "weights")?;
                let bias = parse_blob(&mut cursor, "bias")?;
                let spec = ConvSpec::new(
                    in_maps, out_maps, kernel_f, kernel_t, dilation_f, dilation_t, pad_f, weights,
                    bias,
                )
                .map_err(|e| semantic(layers.len(), e))?;
                LayerSpec::Conv(spec)
            }
            "pool" => {
                let f = Fields::parse(line, &toks[2..])?;
                let spec = PoolSpec::with_dilation(
                    f.get_count("size_f")?,
                    f.get_count("size_t")?,
                    f.get_count("stride_f")?,
                    f.get_count("stride_t")?,
                    f.get_count_or("dilation_t", 1)?,
                )
                .map_err(|e| semantic(layers.len(), e))?;
                LayerSpec::Pool(spec)
            }
            "batchnorm" => {
                let f = Fields::parse(line, &toks[2..])?;
                let maps = f.get_count("maps")?;
                let epsilon = f.get_f32("epsilon")?;
                let mean = parse_blob(&mut cursor, "mean")?;
                let variance = parse_blob(&mut cursor, "variance")?;
                let scale = parse_blob(&mut cursor, "scale")?;
                let shift = parse_blob(&mut cursor, "shift")?;
                if mean.len() != maps {
                    return Err(semantic(
                        layers.len(),
                        Error::shape(format!("batchnorm blob length {} != maps {maps}", mean.len())),
                    ));
                }
                let spec = BatchNormSpec::new(mean, variance, scale, shift, epsilon)
                    .map_err(|e| semantic(layers.len(), e))?;
                LayerSpec::BatchNorm(spec)
            }
            "fc" => {
                let f = Fields::parse(line, &toks[2..])?;
                let in_dim = f.get_count("in_dim")?;
                let out_dim = f.get_count("out_dim")?;
                let weights = parse_blob(&mut cursor, "weights")?;
                let bias = parse_blob(&mut cursor, "bias")?;
                let spec = FullyConnectedSpec::new(in_dim, out_dim, weights, bias)
                    .map_err(|e| semantic(layers.len(), e))?;
                LayerSpec::FullyConnected(spec)
            }
            "relu" => LayerSpec::Activation(Activation::Relu),
            "flatten" => LayerSpec::Flatten,
            other => return Err(syntax(line, kind_col, format!("unknown layer kind '{other}'"))),
        };
        entry_lines.push(line);
        layers.push(layer);
    }

    NetworkSpec::new((dims[0], dims[1], dims[2]), layers, mode).map_err(|e| match e {
        Error::Shape { layer: Some(i), msg } => Error::Semantic { layer: i, msg },
        Error::Shape { layer: None, msg } => {
            Error::Semantic { layer: entry_lines.len().saturating_sub(1), msg }
        }
        other => other,
    })
}

fn semantic(layer: usize, err: Error) -> Error {
    match err {
        Error::Shape { msg, .. } => Error::Semantic { layer, msg },
        other => other,
    }
}

fn parse_sbn_entry(line: usize, toks: &[(usize, &str)]) -> Result<NetworkSpec> {
    let f = Fields::parse(line, toks)?;
    let config = SbnConfig {
        input_dim: f.get_count("input_dim")?,
        window: f.get_count("window")?,
        stage1_hidden: f.get_counts("stage1_hidden")?,
        bottleneck: f.get_count("bottleneck")?,
        stage2_hidden: f.get_counts("stage2_hidden")?,
        outputs: f.get_count("outputs")?,
        offsets: f.get_offsets("offsets")?,
    };
    let seed = f.get_u64("seed")?;
    let spec = SbnSpec::seeded(config, seed).map_err(|e| semantic(0, e))?;
    build_sbn_as_cnn(&spec).map_err(|e| semantic(0, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_fig1_toy, build_table1};

    fn weights_bits(net: &NetworkSpec) -> Vec<u32> {
        let mut bits = Vec::new();
        for layer in net.layers() {
            match layer {
                LayerSpec::Conv(c) => {
                    bits.extend(c.weights.iter().map(|v| v.to_bits()));
                    bits.extend(c.bias.iter().map(|v| v.to_bits()));
                }
                LayerSpec::FullyConnected(f) => {
                    bits.extend(f.weights.iter().map(|v| v.to_bits()));
                    bits.extend(f.bias.iter().map(|v| v.to_bits()));
                }
                LayerSpec::BatchNorm(b) => {
                    for v in [&b.mean, &b.variance, &b.scale, &b.shift] {
                        bits.extend(v.iter().map(|x| x.to_bits()));
                    }
                    bits.push(b.epsilon.to_bits());
                }
                _ => {}
            }
        }
        bits
    }

    #[test]
    fn round_trip_fig1_toy() {
        let net = build_fig1_toy(7);
        let text = serialize_network(&net);
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(weights_bits(&back), weights_bits(&net));
    }

    #[test]
    fn round_trip_table1_small_head() {
        let net = build_table1(8, 3);
        let text = serialize_network(&net);
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(weights_bits(&back), weights_bits(&net));
    }

    #[test]
    fn malformed_layer_name() {
        let text = "tdcnn-net v1\nmode windowed\ninput 1 1 1\nlayer wiggle\n";
        match parse_network(text) {
            Err(Error::Syntax { line: 4, col, .. }) => assert!(col >= 7),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header() {
        assert!(matches!(parse_network("bogus\n"), Err(Error::Syntax { line: 1, .. })));
    }

    #[test]
    fn bad_base64_payload() {
        let text = "tdcnn-net v1\nmode windowed\ninput 1 1 1\nlayer fc in_dim=1 out_dim=1\nweights b64:!!!\nbias b64:AAAAAA==\n";
        assert!(matches!(parse_network(text), Err(Error::Syntax { line: 5, .. })));
    }

    #[test]
    fn inconsistent_fc_dim_is_semantic_error() {
        // conv stack output is 1x1x1 = 1 unit, fc expects 2
        let text = format!(
            "tdcnn-net v1\nmode windowed\ninput 1 1 3\n\
             layer conv in_maps=1 out_maps=1 kernel_f=1 kernel_t=3 dilation_f=1 dilation_t=1 pad_f=0\n\
             weights b64:{}\nbias b64:{}\n\
             layer flatten\n\
             layer fc in_dim=2 out_dim=1\nweights b64:{}\nbias b64:{}\n",
            encode_blob(&[1.0, 1.0, 1.0]),
            encode_blob(&[0.0]),
            encode_blob(&[1.0, 1.0]),
            encode_blob(&[0.0]),
        );
        match parse_network(&text) {
            Err(Error::Semantic { layer: 2, .. }) => {}
            other => panic!("expected semantic error at the fc layer, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let net = build_fig1_toy(1);
        let text = serialize_network(&net);
        let commented = format!("# toy net\n\n{}\n# trailing\n", text);
        assert_eq!(parse_network(&commented).unwrap(), net);
    }
}
