//! Random windowed-architecture generator for the property suites: small
//! conv/pool stacks with 1-3 time pools of stride 2, random kernels up to
//! 5 taps, and a fully connected head.

use crate::graph::{Activation, LayerSpec, Mode, NetworkSpec};
use crate::layers::{BatchNormSpec, ConvSpec, FullyConnectedSpec, PoolSpec};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor3;

/// Deterministically generate a small valid windowed net from a seed.
pub fn random_windowed_net(seed: u64) -> NetworkSpec {
    let mut rng = XorShift64Star::new(seed.wrapping_mul(0x9E37_79B9).wrapping_add(seed));
    let input_maps = 1 + rng.next_below(3) as usize;
    let input_freq = 1 + rng.next_below(8) as usize;
    let time_pools = 1 + rng.next_below(3) as usize;

    struct Gen {
        layers: Vec<LayerSpec>,
        maps: usize,
        freq: usize,
    }
    let mut gen = Gen { layers: Vec::new(), maps: input_maps, freq: input_freq };

    let add_conv = |gen: &mut Gen, rng: &mut XorShift64Star| {
        let kernel_f = 1 + rng.next_below(3.min(gen.freq as u64)) as usize;
        let pad_f = if kernel_f > 1 && rng.next_below(2) == 0 { 1 } else { 0 };
        let kernel_t = 1 + rng.next_below(5) as usize;
        let out_maps = 1 + rng.next_below(4) as usize;
        let conv = ConvSpec::seeded(gen.maps, out_maps, kernel_f, kernel_t, 1, 1, pad_f, rng)
            .expect("generated conv is valid");
        gen.freq = gen.freq + 2 * pad_f - (kernel_f - 1);
        gen.maps = out_maps;
        gen.layers.push(LayerSpec::Conv(conv));
        if rng.next_below(2) == 0 {
            gen.layers.push(LayerSpec::BatchNorm(
                BatchNormSpec::seeded(gen.maps, rng).expect("generated bn is valid"),
            ));
        }
        if rng.next_below(4) != 0 {
            gen.layers.push(LayerSpec::Activation(Activation::Relu));
        }
    };

    for _ in 0..time_pools {
        for _ in 0..1 + rng.next_below(2) {
            add_conv(&mut gen, &mut rng);
        }
        let size_t = 2 + rng.next_below(2) as usize;
        let (size_f, stride_f) = if gen.freq >= 2 && rng.next_below(2) == 0 {
            (2, 1 + rng.next_below(2) as usize)
        } else {
            (1, 1)
        };
        let pool = PoolSpec::new(size_f, size_t, stride_f, 2).expect("generated pool is valid");
        gen.freq = (gen.freq - size_f) / stride_f + 1;
        gen.layers.push(LayerSpec::Pool(pool));
    }
    if rng.next_below(2) == 0 {
        add_conv(&mut gen, &mut rng);
    }

    // choose how many time steps the head consumes, then derive the input
    // window by backward extent propagation
    let head_time = 1 + rng.next_below(3) as usize;
    let mut extent = head_time;
    for layer in gen.layers.iter().rev() {
        extent = match layer {
            LayerSpec::Conv(c) => extent + c.time_extent() - 1,
            LayerSpec::Pool(p) => (extent - 1) * p.stride_t + p.time_extent(),
            _ => extent,
        };
    }
    let window = extent;

    let mut layers = gen.layers;
    layers.push(LayerSpec::Flatten);
    let flat = gen.maps * gen.freq * head_time;
    let out_dim = 2 + rng.next_below(7) as usize;
    if rng.next_below(2) == 0 {
        let mid = 2 + rng.next_below(7) as usize;
        layers.push(LayerSpec::FullyConnected(
            FullyConnectedSpec::seeded(flat, mid, &mut rng).expect("generated fc is valid"),
        ));
        if rng.next_below(2) == 0 {
            layers.push(LayerSpec::BatchNorm(
                BatchNormSpec::seeded(mid, &mut rng).expect("generated bn is valid"),
            ));
        }
        layers.push(LayerSpec::Activation(Activation::Relu));
        layers.push(LayerSpec::FullyConnected(
            FullyConnectedSpec::seeded(mid, out_dim, &mut rng).expect("generated fc is valid"),
        ));
    } else {
        layers.push(LayerSpec::FullyConnected(
            FullyConnectedSpec::seeded(flat, out_dim, &mut rng).expect("generated fc is valid"),
        ));
    }

    NetworkSpec::new((input_maps, input_freq, window), layers, Mode::Windowed)
        .expect("generated net is well-formed")
}

/// A random utterance the net can consume: receptive field plus some slack.
pub fn random_utterance_for(net: &NetworkSpec, slack: usize, seed: u64) -> Tensor3 {
    let (maps, freq, _) = net.input_shape();
    let time = net.receptive_field_time() + slack;
    Tensor3::seeded_random(maps, freq, time, seed).expect("valid utterance dims")
}
