//! Command-line front end.
//!
//! Subcommands: `describe`, `densify`, `verify`, `flops`, `eval`. Networks
//! come from description files or from the built-in names `table1`
//! (optionally `table1:<outputs>:<seed>`), `fig1-toy[:<seed>]` and
//! `sbn-default[:<seed>]`. Exit codes: 0 success/pass, 1 verification
//! failure, 2 usage, parse or shape errors.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::densify::densify;
use crate::error::{Error, Result};
use crate::flops::cost_report;
use crate::graph::{build_fig1_toy, build_table1, parse_network, serialize_network, Mode, NetworkSpec, Shape};
use crate::oracle::{eval_dense, eval_downsampled, eval_spliced, verify_equivalence};
use crate::sbn::{build_sbn_as_cnn, SbnConfig, SbnSpec};
use crate::tensor::Tensor3;

#[derive(Parser)]
#[command(
    name = "tdcnn",
    about = "Time-dilated convolution engine: densify windowed CNNs and verify the rewrite",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Human-readable tables
    Text,
    /// One machine-readable record per line, byte-stable across runs
    Rows,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    /// Sliding-window oracle evaluation (windowed nets)
    Spliced,
    /// One full-utterance pass (dense nets; windowed nets are densified)
    Dense,
    /// Diagnostic: run the windowed net convolutionally with strides kept
    Downsampled,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-layer shape table and the time receptive field
    Describe {
        /// Network file or built-in name
        net: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Rewrite a windowed net for dense evaluation and report the rewrites
    Densify {
        net: String,
        /// Write the densified network description here
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Densify internally and compare dense vs sliding-window outputs
    Verify {
        net: String,
        /// Synthetic utterance length in frames
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Max absolute difference allowed (0 = bit-exact)
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        /// Zero-pad the utterance so every frame gets an output
        #[arg(long)]
        pad_full: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Exact multiply-accumulate counts for spliced vs dense evaluation
    Flops {
        net: String,
        /// Utterance length in frames
        #[arg(long)]
        len: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate an utterance and write the outputs as a tensor dump
    Eval {
        net: String,
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Utterance tensor dump (mutually exclusive with --len/--seed)
        #[arg(long, conflicts_with_all = ["len", "seed"])]
        input: Option<PathBuf>,
        /// Synthetic utterance length
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Zero-pad the utterance so every frame gets an output
        #[arg(long)]
        pad_full: bool,
        /// Output dump path
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Parse argv and run. Returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_net(name: &str) -> Result<NetworkSpec> {
    if let Some(net) = builtin(name)? {
        return Ok(net);
    }
    let text = std::fs::read_to_string(Path::new(name))?;
    parse_network(&text)
}

fn builtin(name: &str) -> Result<Option<NetworkSpec>> {
    let mut parts = name.split(':');
    let head = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let parse_u64 = |s: &str| -> Result<u64> {
        s.parse::<u64>().map_err(|_| {
            Error::Unsupported(format!("'{s}' is not an integer in built-in name '{name}'"))
        })
    };
    match head {
        "table1" => {
            let outputs = match args.first() {
                Some(s) => parse_u64(s)? as usize,
                None => 32000,
            };
            let seed = match args.get(1) {
                Some(s) => parse_u64(s)?,
                None => 1,
            };
            Ok(Some(build_table1(outputs, seed)))
        }
        "fig1-toy" => {
            let seed = match args.first() {
                Some(s) => parse_u64(s)?,
                None => 1,
            };
            Ok(Some(build_fig1_toy(seed)))
        }
        "sbn-default" => {
            let seed = match args.first() {
                Some(s) => parse_u64(s)?,
                None => 1,
            };
            let spec = SbnSpec::seeded(SbnConfig::default(), seed)?;
            Ok(Some(build_sbn_as_cnn(&spec)?))
        }
        _ => Ok(None),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Describe { net, format } => {
            let net = load_net(&net)?;
            describe(&net, format);
            Ok(0)
        }
        Command::Densify { net, output, format } => {
            let net = load_net(&net)?;
            let (dense, report) = densify(&net)?;
            if let Some(path) = output {
                std::fs::write(&path, serialize_network(&dense))?;
            }
            match format {
                Format::Text => {
                    print!("{report}");
                    println!(
                        "receptive field (time): {} frames before and after",
                        dense.receptive_field_time()
                    );
                }
                Format::Rows => print!("{}", report.machine_rows()),
            }
            Ok(0)
        }
        Command::Verify { net, len, seed, tol, pad_full, format } => {
            let net = load_net(&net)?;
            if net.mode() != Mode::Windowed {
                return Err(Error::ModeMismatch { expected: "windowed", found: net.mode().as_str() });
            }
            let utterance = synthetic(&net, len, seed, pad_full)?;
            let report = verify_equivalence(&net, &utterance, tol)?;
            match format {
                Format::Text => print!("{report}"),
                Format::Rows => println!("{}", report.machine_row()),
            }
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Flops { net, len, format } => {
            let net = load_net(&net)?;
            let report = cost_report(&net, len)?;
            match format {
                Format::Text => print!("{report}"),
                Format::Rows => print!("{}", report.machine_rows()),
            }
            Ok(0)
        }
        Command::Eval { net, mode, input, len, seed, pad_full, output } => {
            let net = load_net(&net)?;
            let utterance = match (&input, len) {
                (Some(path), _) => Tensor3::load_dump(path)?,
                (None, Some(len)) => {
                    let (m, f, _) = net.input_shape();
                    Tensor3::seeded_random(m, f, len, seed)?
                }
                (None, None) => {
                    return Err(Error::Unsupported(
                        "eval needs an utterance: --input FILE or --len N".into(),
                    ))
                }
            };
            let utterance = if pad_full {
                let rf = net.receptive_field_time();
                let left = (rf - 1) / 2;
                utterance.pad_time(left, rf - 1 - left)?
            } else {
                utterance
            };
            let vectors = match mode {
                EvalMode::Spliced => eval_spliced(&net, &utterance)?,
                EvalMode::Dense => {
                    if net.mode() == Mode::Windowed {
                        let (dense, _) = densify(&net)?;
                        eval_dense(&dense, &utterance)?
                    } else {
                        eval_dense(&net, &utterance)?
                    }
                }
                EvalMode::Downsampled => eval_downsampled(&net, &utterance)?,
            };
            let dump = pack_vectors(&vectors)?;
            dump.save_dump(&output)?;
            println!(
                "wrote {} outputs of dimension {} to {}",
                dump.time(),
                dump.fmaps(),
                output.display()
            );
            Ok(0)
        }
    }
}

fn synthetic(net: &NetworkSpec, len: usize, seed: u64, pad_full: bool) -> Result<Tensor3> {
    let (m, f, _) = net.input_shape();
    let utterance = Tensor3::seeded_random(m, f, len, seed)?;
    if pad_full {
        let rf = net.receptive_field_time();
        let left = (rf - 1) / 2;
        utterance.pad_time(left, rf - 1 - left)
    } else {
        Ok(utterance)
    }
}

/// (dim, 1, positions) tensor with element (d, 0, p) = vectors[p][d].
fn pack_vectors(vectors: &[Vec<f32>]) -> Result<Tensor3> {
    let positions = vectors.len();
    if positions == 0 {
        return Err(Error::shape("no output positions to dump"));
    }
    let dim = vectors[0].len();
    let mut data = vec![0.0f32; dim * positions];
    for (p, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::shape("ragged output vectors"));
        }
        for (d, &x) in v.iter().enumerate() {
            data[d * positions + p] = x;
        }
    }
    Tensor3::from_vec(dim, 1, positions, data)
}

fn describe(net: &NetworkSpec, format: Format) {
    let trace = net.infer_shapes().expect("constructed nets are well-formed");
    match format {
        Format::Text => {
            let (m, f, t) = net.input_shape();
            println!("network: {} mode, {} layers", net.mode(), net.layers().len());
            println!("  {:<6} {:<22} {}", "layer", "", "output: fmaps x f x T");
            println!("  {:<6} {:<22} {}", "", "input window", Shape::Map { fmaps: m, freq: f, time: t });
            for row in &trace.rows {
                println!("  {:<6} {:<22} {}", row.layer, row.label, row.shape);
            }
            println!("receptive field (time): {} frames", net.receptive_field_time());
        }
        Format::Rows => {
            println!("mode {}", net.mode());
            println!("shape input input {}", trace.input.compact());
            for row in &trace.rows {
                println!(
                    "shape {} {} {}",
                    row.layer,
                    net.layers()[row.layer].kind(),
                    row.shape.compact()
                );
            }
            println!("rf {}", net.receptive_field_time());
        }
    }
}
