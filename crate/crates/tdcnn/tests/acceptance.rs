//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).

use std::process::Command;
use std::time::Instant;

use tdcnn::densify::{densify, dense_output_length, Rewrite};
use tdcnn::graph::{build_fig1_toy, build_table1, parse_network, serialize_network, LayerSpec};
use tdcnn::layers::ConvSpec;
use tdcnn::netgen::{random_utterance_for, random_windowed_net};
use tdcnn::oracle::{eval_dense, eval_downsampled, eval_spliced, verify_equivalence};
use tdcnn::rng::XorShift64Star;
use tdcnn::sbn::{build_sbn_as_cnn, eval_sbn_two_stage, SbnConfig, SbnSpec};
use tdcnn::tensor::Tensor3;
use tdcnn::flops::{cost_report_against};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdcnn"))
}

fn pass(criterion: usize, name: &str, started: Instant, budget_secs: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_secs,
        "criterion {criterion} exceeded its {budget_secs}s budget: {elapsed:.1}s"
    );
    println!("ACCEPTANCE {criterion:>2} {name}: PASS ({elapsed:.2}s)");
}

/// Table 1 right column, input through the fully connected head.
const TABLE1_COLUMN: &[(&str, &str)] = &[
    ("input", "3x64x48"),
    ("conv", "64x64x42"),
    ("pool", "64x32x42"),
    ("conv", "64x32x40"),
    ("conv", "64x32x38"),
    ("conv", "64x32x36"),
    ("pool", "64x16x36"),
    ("conv", "128x16x34"),
    ("conv", "128x16x32"),
    ("conv", "128x16x30"),
    ("pool", "128x8x30"),
    ("conv", "256x8x28"),
    ("conv", "256x8x26"),
    ("conv", "256x8x24"),
    ("pool", "256x4x12"),
    ("conv", "512x4x10"),
    ("conv", "512x4x8"),
    ("conv", "512x4x6"),
    ("pool", "512x2x3"),
    ("fc", "2048"),
    ("fc", "2048"),
    ("fc", "2048"),
    ("fc", "1024"),
    ("fc", "32000"),
];

#[test]
fn acceptance_01_table1_shape_reproduction() {
    let started = Instant::now();
    let out = bin().args(["describe", "table1", "--format", "rows"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let got: Vec<(String, String)> = stdout
        .lines()
        .filter_map(|l| {
            let mut f = l.split_whitespace();
            if f.next() != Some("shape") {
                return None;
            }
            let _idx = f.next()?;
            let kind = f.next()?;
            let shape = f.next()?;
            matches!(kind, "input" | "conv" | "pool" | "fc")
                .then(|| (kind.to_string(), shape.to_string()))
        })
        .collect();
    let expect: Vec<(String, String)> =
        TABLE1_COLUMN.iter().map(|(k, s)| (k.to_string(), s.to_string())).collect();
    assert_eq!(got, expect, "describe table1 must reproduce the architecture column exactly");
    assert!(stdout.lines().any(|l| l == "rf 48"));
    pass(1, "table1 shape reproduction", started, 1.0);
}

#[test]
fn acceptance_02_fig1_toy_equivalence() {
    let started = Instant::now();
    let net = build_fig1_toy(1);
    let (dense, _) = densify(&net).unwrap();

    // densified structure: conv3, pool2 stride 1, conv3 dilation 2
    let kinds: Vec<String> = dense.layers().iter().map(|l| l.label()).collect();
    assert_eq!(kinds, vec!["conv 1x3", "pool 1x2 s1x1", "conv 1x3 d1x2"]);

    let mut rng = XorShift64Star::new(2024);
    for case in 0..100 {
        let len = 8 + (rng.next_below(57) as usize); // 8..=64
        let utt = Tensor3::seeded_random(1, 1, len, 3_000 + case).unwrap();
        let report = verify_equivalence(&net, &utt, 0.0).unwrap();
        assert!(report.pass, "case {case} len {len}: max_abs {}", report.max_abs_diff);
        assert_eq!(report.max_abs_diff, 0.0);
        assert_eq!(report.positions, len - 8 + 1);
    }
    pass(2, "figure-1 toy equivalence (100 utterances, tol 0)", started, 5.0);
}

#[test]
fn acceptance_03_table1_equivalence_desk_scale() {
    let started = Instant::now();
    let net = build_table1(64, 1);
    let utt = Tensor3::seeded_random(3, 64, 148, 42).unwrap();
    let report = verify_equivalence(&net, &utt, 0.0).unwrap();
    assert_eq!(report.positions, 101);
    assert!(report.pass, "max_abs {}", report.max_abs_diff);
    assert_eq!(report.max_abs_diff, 0.0, "fixed-order paths must agree bit-exactly");
    assert_eq!(report.argmax_agreement, 1.0);
    pass(3, "table1 equivalence at desk scale (101 positions)", started, 60.0);
}

#[test]
fn acceptance_04_dilation_bookkeeping() {
    let started = Instant::now();
    let net = build_table1(64, 1);
    let (dense, report) = densify(&net).unwrap();

    let mut conv_dilations = Vec::new();
    let mut fc_dilations = Vec::new();
    for r in &report.rewrites {
        match r.rewrite {
            Rewrite::ConvDilation { new, .. } => conv_dilations.push(new),
            Rewrite::FcToConv { dilation_t, .. } => fc_dilations.push(dilation_t),
            _ => {}
        }
    }
    // 13 convs: ten before any time pool keep dilation 1, the three
    // block-5 convs get dilation 2
    assert_eq!(conv_dilations, [vec![1usize; 10], vec![2; 3]].concat());
    // all five fc-derived head convs get dilation 4 = 2^2
    assert_eq!(fc_dilations, vec![4; 5]);
    assert_eq!(net.receptive_field_time(), 48);
    assert_eq!(dense.receptive_field_time(), 48);
    pass(4, "dilation bookkeeping (s^p rule, rf 48)", started, 1.0);
}

#[test]
fn acceptance_05_downsampling_diagnostic() {
    let started = Instant::now();
    let net = build_table1(64, 1);
    let utt = Tensor3::seeded_random(3, 64, 148, 42).unwrap();

    let down = eval_downsampled(&net, &utt).unwrap();
    let dense_positions = dense_output_length(&net, 148).unwrap();
    assert_eq!(dense_positions, 101);
    // without densification the output sequence is one value per 2^p = 4
    // frames: window starts 0, 4, 8, ...
    assert_eq!(down.len(), (dense_positions - 1) / 4 + 1);
    assert_eq!(down.len(), 26);

    // and those values are exactly the dense outputs at stride 4
    let (dense_net, _) = densify(&net).unwrap();
    let dense = eval_dense(&dense_net, &utt).unwrap();
    for (i, v) in down.iter().enumerate() {
        assert_eq!(v, &dense[4 * i], "downsampled output {i}");
    }
    pass(5, "downsampling diagnostic (factor 2^p = 4)", started, 60.0);
}

/// Freshly written quadruple-loop reference: for each output element, sum
/// bias plus weight x input over (in_map, freq tap, time tap).
fn naive_conv_oracle(input: &Tensor3, spec: &ConvSpec) -> Tensor3 {
    let out_f = input.freq() + 2 * spec.pad_f - (spec.kernel_f - 1) * spec.dilation_f;
    let out_t = input.time() - (spec.kernel_t - 1) * spec.dilation_t;
    let mut data = Vec::new();
    for om in 0..spec.out_maps {
        for of in 0..out_f {
            for ot in 0..out_t {
                let mut acc = spec.bias[om];
                for im in 0..spec.in_maps {
                    for kf in 0..spec.kernel_f {
                        for kt in 0..spec.kernel_t {
                            let fi = of as isize + (kf * spec.dilation_f) as isize
                                - spec.pad_f as isize;
                            if fi < 0 || fi >= input.freq() as isize {
                                continue;
                            }
                            let w = spec.weights[((om * spec.in_maps + im) * spec.kernel_f + kf)
                                * spec.kernel_t
                                + kt];
                            acc += w * input.get(im, fi as usize, ot + kt * spec.dilation_t);
                        }
                    }
                }
                data.push(acc);
            }
        }
    }
    Tensor3::from_vec(spec.out_maps, out_f, out_t, data).unwrap()
}

#[test]
fn acceptance_06_dilated_conv_vs_naive_oracle() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(606);
    let mut ran = 0;
    while ran < 1000 {
        let in_maps = 1 + rng.next_below(4) as usize;
        let out_maps = 1 + rng.next_below(4) as usize;
        let freq = 1 + rng.next_below(8) as usize;
        let time = 1 + rng.next_below(16) as usize;
        let kernel_f = 1 + rng.next_below(5) as usize;
        let kernel_t = 1 + rng.next_below(5) as usize;
        let dilation_f = 1 + rng.next_below(4) as usize;
        let dilation_t = 1 + rng.next_below(4) as usize;
        let pad_f = rng.next_below(3) as usize;
        // keep only geometries where the dilated kernel fits
        if freq + 2 * pad_f < (kernel_f - 1) * dilation_f + 1
            || time < (kernel_t - 1) * dilation_t + 1
        {
            continue;
        }
        let input = Tensor3::seeded_random(in_maps, freq, time, 7_000 + ran as u64).unwrap();
        let spec = ConvSpec::seeded(
            in_maps, out_maps, kernel_f, kernel_t, dilation_f, dilation_t, pad_f, &mut rng,
        )
        .unwrap();
        let engine = tdcnn::layers::conv2d_dilated(&input, &spec).unwrap();
        let oracle = naive_conv_oracle(&input, &spec);
        assert_eq!(engine, oracle, "case {ran}");
        ran += 1;
    }
    pass(6, "dilated conv vs naive quadruple-loop oracle (1000 cases)", started, 30.0);
}

#[test]
fn acceptance_07_flop_ratio() {
    let lengths = [100usize, 200, 500, 1000];

    // desk-scale head (the configuration the equivalence criterion pins)
    let net = build_table1(64, 1);
    let net_dense = densify(&net).unwrap().0;
    let full = build_table1(32000, 1);
    let full_dense = densify(&full).unwrap().0;

    // the counting itself is analytic and must be fast; weight generation
    // and the rewrite above are fixture setup
    let started = Instant::now();
    let reports: Vec<_> = lengths
        .iter()
        .map(|&t| cost_report_against(&net, &net_dense, t).unwrap())
        .collect();
    for pair in reports.windows(2) {
        assert!(pair[1].ratio_ge(&pair[0]), "ratio must be monotone in utterance length");
    }
    let at_500 = &reports[2];
    let ratio = at_500.ratio_f64().unwrap();
    assert!((10.0..=48.0).contains(&ratio), "ratio at 500 frames: {ratio}");
    // window_size is the asserted upper bound at every length
    for r in &reports {
        assert!(r.ratio_f64().unwrap() <= 48.0);
    }

    // the full 32000-class head keeps the bound and the monotonicity
    let full_reports: Vec<_> = lengths
        .iter()
        .map(|&t| cost_report_against(&full, &full_dense, t).unwrap())
        .collect();
    for pair in full_reports.windows(2) {
        assert!(pair[1].ratio_ge(&pair[0]));
    }
    for r in &full_reports {
        assert!(r.ratio_f64().unwrap() <= 48.0);
    }
    pass(7, "flop ratio in [10, 48], monotone", started, 1.0);
}

#[test]
fn acceptance_08_sbn_equivalence() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(808);
    for case in 0..50u64 {
        let config = SbnConfig {
            input_dim: 1 + rng.next_below(12) as usize,
            window: 1 + rng.next_below(16) as usize,
            stage1_hidden: match rng.next_below(3) {
                0 => vec![],
                1 => vec![1 + rng.next_below(32) as usize],
                _ => vec![1 + rng.next_below(32) as usize, 1 + rng.next_below(32) as usize],
            },
            bottleneck: 1 + rng.next_below(8) as usize,
            stage2_hidden: match rng.next_below(2) {
                0 => vec![],
                _ => vec![1 + rng.next_below(32) as usize],
            },
            outputs: 2 + rng.next_below(15) as usize,
            offsets: vec![-10, -5, 0, 5, 10],
        };
        let spec = SbnSpec::seeded(config.clone(), 9_000 + case).unwrap();
        let net = build_sbn_as_cnn(&spec).unwrap();
        let rf = config.receptive_field_time().unwrap();
        let slack = rng.next_below(9) as usize;
        let utt =
            Tensor3::seeded_random(1, config.input_dim, rf + slack, 10_000 + case).unwrap();
        let two_stage = eval_sbn_two_stage(&spec, &utt).unwrap();
        let dense = eval_dense(&net, &utt).unwrap();
        assert_eq!(two_stage.len(), slack + 1);
        assert_eq!(two_stage, dense, "case {case}: representations must agree bit-exactly");
    }
    pass(8, "sbn two-stage vs dilated-cnn equivalence (50 specs)", started, 30.0);
}

#[test]
fn acceptance_09_random_architecture_suite() {
    let started = Instant::now();
    for seed in 0..100u64 {
        let net = random_windowed_net(seed);
        let slack = (seed % 12) as usize;
        let utt = random_utterance_for(&net, slack, 20_000 + seed);
        let report = verify_equivalence(&net, &utt, 0.0).unwrap();
        assert!(report.pass, "net {seed}: max_abs {}", report.max_abs_diff);
        assert_eq!(report.max_abs_diff, 0.0);
        // T_out = T_in - RF + 1
        assert_eq!(report.positions, utt.time() - net.receptive_field_time() + 1);
        assert_eq!(report.positions, slack + 1);
    }
    pass(9, "random architecture property suite (100 nets, tol 0)", started, 120.0);
}

#[test]
fn acceptance_10_round_trip_and_determinism() {
    let started = Instant::now();

    // serialize -> parse: structural equality and bit-equal weights
    for net in [build_table1(8, 5), build_fig1_toy(3), random_windowed_net(77)] {
        let text = serialize_network(&net);
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        for (a, b) in net.layers().iter().zip(back.layers()) {
            if let (LayerSpec::Conv(x), LayerSpec::Conv(y)) = (a, b) {
                let xb: Vec<u32> = x.weights.iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u32> = y.weights.iter().map(|v| v.to_bits()).collect();
                assert_eq!(xb, yb);
            }
        }
        // a second serialize is byte-identical
        assert_eq!(serialize_network(&back), text);
    }
    let sbn = build_sbn_as_cnn(&SbnSpec::seeded(SbnConfig::default(), 1).unwrap()).unwrap();
    assert_eq!(parse_network(&serialize_network(&sbn)).unwrap(), sbn);

    // machine-readable CLI output is byte-identical across repeated runs
    let commands: Vec<Vec<&str>> = vec![
        vec!["describe", "fig1-toy", "--format", "rows"],
        vec!["describe", "table1:16:3", "--format", "rows"],
        vec!["densify", "fig1-toy", "--format", "rows"],
        vec!["verify", "fig1-toy", "--len", "24", "--seed", "9", "--format", "rows"],
        vec!["flops", "fig1-toy", "--len", "64", "--format", "rows"],
    ];
    for args in &commands {
        let a = bin().args(args).output().unwrap();
        let b = bin().args(args).output().unwrap();
        assert!(a.status.success(), "command {args:?}");
        assert_eq!(a.stdout, b.stdout, "stdout must be byte-identical: {args:?}");
        assert!(!a.stdout.is_empty());
    }
    pass(10, "round-trip and determinism", started, 30.0);
}
