//! The five layer primitives: dilated 2-D convolution, max pooling,
//! inference-mode batch normalization, fully connected, ReLU.
//!
//! All operations are pure and shape-checked. Convolution and the fully
//! connected product accumulate in a fixed, documented order (input map
//! outer, frequency tap, time tap inner; bias first) so that windowed and
//! dense evaluation of the same network agree bit-for-bit.

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor3;

/// Dilated 2-D convolution parameters. Frequency may be zero-padded
/// symmetrically (`pad_f`); time is never padded inside a layer. Kernels are
/// stored 0-based with the first tap as anchor; receptive-field arithmetic
/// works on extents, so even kernel sizes are well-defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub in_maps: usize,
    pub out_maps: usize,
    pub kernel_f: usize,
    pub kernel_t: usize,
    pub dilation_f: usize,
    pub dilation_t: usize,
    pub pad_f: usize,
    /// out_maps x in_maps x kernel_f x kernel_t, row-major.
    pub weights: Vec<f32>,
    /// One bias per output map.
    pub bias: Vec<f32>,
}

impl ConvSpec {
    pub fn new(
        in_maps: usize,
        out_maps: usize,
        kernel_f: usize,
        kernel_t: usize,
        dilation_f: usize,
        dilation_t: usize,
        pad_f: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<ConvSpec> {
        if in_maps == 0 || out_maps == 0 || kernel_f == 0 || kernel_t == 0 {
            return Err(Error::shape("conv maps and kernel dims must be >= 1"));
        }
        if dilation_f == 0 || dilation_t == 0 {
            return Err(Error::shape("conv dilations must be >= 1"));
        }
        let want = out_maps
            .checked_mul(in_maps)
            .and_then(|n| n.checked_mul(kernel_f))
            .and_then(|n| n.checked_mul(kernel_t))
            .ok_or_else(|| Error::shape("conv weight count overflows"))?;
        if weights.len() != want {
            return Err(Error::shape(format!(
                "conv weights length {} != {out_maps} x {in_maps} x {kernel_f} x {kernel_t}",
                weights.len()
            )));
        }
        if bias.len() != out_maps {
            return Err(Error::shape(format!(
                "conv bias length {} != out_maps {out_maps}",
                bias.len()
            )));
        }
        Ok(ConvSpec {
            in_maps,
            out_maps,
            kernel_f,
            kernel_t,
            dilation_f,
            dilation_t,
            pad_f,
            weights,
            bias,
        })
    }

    /// Random conv with fan-in scaled uniform weights (keeps activation
    /// magnitudes stable through deep stacks).
    pub fn seeded(
        in_maps: usize,
        out_maps: usize,
        kernel_f: usize,
        kernel_t: usize,
        dilation_f: usize,
        dilation_t: usize,
        pad_f: usize,
        rng: &mut XorShift64Star,
    ) -> Result<ConvSpec> {
        let fan_in = (in_maps * kernel_f * kernel_t) as f32;
        let scale = (6.0 / fan_in).sqrt();
        let weights = (0..out_maps * in_maps * kernel_f * kernel_t)
            .map(|_| rng.next_unit() * scale)
            .collect();
        let bias = (0..out_maps).map(|_| rng.next_unit() * 0.1).collect();
        ConvSpec::new(
            in_maps, out_maps, kernel_f, kernel_t, dilation_f, dilation_t, pad_f, weights, bias,
        )
    }

    /// Reinterpret a fully connected layer as a convolution whose kernel
    /// covers (in_maps, kernel_f, kernel_t) of the incoming value. The FC
    /// weight rows are laid out map-outer, frequency, time fastest --
    /// exactly the conv kernel layout -- so the weights transfer without
    /// any value change.
    pub fn from_fully_connected(
        fc: &FullyConnectedSpec,
        in_maps: usize,
        kernel_f: usize,
        kernel_t: usize,
        dilation_t: usize,
    ) -> Result<ConvSpec> {
        let covered = in_maps
            .checked_mul(kernel_f)
            .and_then(|n| n.checked_mul(kernel_t))
            .ok_or_else(|| Error::shape("fc kernel coverage overflows"))?;
        if fc.in_dim != covered {
            return Err(Error::shape(format!(
                "fc input length {} != {in_maps} maps x {kernel_f} x {kernel_t} kernel",
                fc.in_dim
            )));
        }
        ConvSpec::new(
            in_maps,
            fc.out_dim,
            kernel_f,
            kernel_t,
            1,
            dilation_t,
            0,
            fc.weights.clone(),
            fc.bias.clone(),
        )
    }

    /// Kernel extent along time: 1 + (kernel_t - 1) * dilation_t.
    pub fn time_extent(&self) -> usize {
        1 + (self.kernel_t - 1) * self.dilation_t
    }

    pub fn freq_extent(&self) -> usize {
        1 + (self.kernel_f - 1) * self.dilation_f
    }

    /// Output (freq, time) for a given input, or a shape error when the
    /// dilated kernel does not fit.
    pub fn output_shape(&self, freq: usize, time: usize) -> Result<(usize, usize)> {
        let padded_f = freq + 2 * self.pad_f;
        let ext_f = self.freq_extent();
        let ext_t = self.time_extent();
        if padded_f < ext_f {
            return Err(Error::shape(format!(
                "conv kernel extent {ext_f} exceeds padded frequency {padded_f}"
            )));
        }
        if time < ext_t {
            return Err(Error::shape(format!(
                "conv kernel extent {ext_t} exceeds time {time}"
            )));
        }
        Ok((padded_f - ext_f + 1, time - ext_t + 1))
    }
}

/// Max-pooling window. `dilation_t` spreads the window taps along time; it
/// is 1 in windowed networks and is raised by the densify pass so stride-1
/// pooling keeps combining the same values it combined before the rewrite.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub size_f: usize,
    pub size_t: usize,
    pub stride_f: usize,
    pub stride_t: usize,
    pub dilation_t: usize,
}

impl PoolSpec {
    pub fn new(size_f: usize, size_t: usize, stride_f: usize, stride_t: usize) -> Result<PoolSpec> {
        PoolSpec::with_dilation(size_f, size_t, stride_f, stride_t, 1)
    }

    pub fn with_dilation(
        size_f: usize,
        size_t: usize,
        stride_f: usize,
        stride_t: usize,
        dilation_t: usize,
    ) -> Result<PoolSpec> {
        if size_f == 0 || size_t == 0 || stride_f == 0 || stride_t == 0 || dilation_t == 0 {
            return Err(Error::shape("pool sizes, strides and dilation must be >= 1"));
        }
        if stride_t > size_t {
            return Err(Error::shape(format!(
                "pool time stride {stride_t} > window {size_t}: windows must tile or overlap"
            )));
        }
        Ok(PoolSpec { size_f, size_t, stride_f, stride_t, dilation_t })
    }

    pub fn time_extent(&self) -> usize {
        1 + (self.size_t - 1) * self.dilation_t
    }

    pub fn output_shape(&self, freq: usize, time: usize) -> Result<(usize, usize)> {
        let ext_t = self.time_extent();
        if freq < self.size_f {
            return Err(Error::shape(format!(
                "pool window {} exceeds frequency {freq}",
                self.size_f
            )));
        }
        if time < ext_t {
            return Err(Error::shape(format!("pool window extent {ext_t} exceeds time {time}")));
        }
        Ok(((freq - self.size_f) / self.stride_f + 1, (time - ext_t) / self.stride_t + 1))
    }
}

/// Frozen inference statistics, one entry per feature map (statistics are
/// shared across frequency and time).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormSpec {
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormSpec {
    pub fn new(
        mean: Vec<f32>,
        variance: Vec<f32>,
        scale: Vec<f32>,
        shift: Vec<f32>,
        epsilon: f32,
    ) -> Result<BatchNormSpec> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::shape("batchnorm needs at least one feature map"));
        }
        if variance.len() != n || scale.len() != n || shift.len() != n {
            return Err(Error::shape(format!(
                "batchnorm vector lengths differ: mean {n}, variance {}, scale {}, shift {}",
                variance.len(),
                scale.len(),
                shift.len()
            )));
        }
        if variance.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::shape("batchnorm variance must be >= 0"));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::shape("batchnorm epsilon must be a positive real"));
        }
        Ok(BatchNormSpec { mean, variance, scale, shift, epsilon })
    }

    pub fn maps(&self) -> usize {
        self.mean.len()
    }

    /// Random statistics near the identity transform.
    pub fn seeded(maps: usize, rng: &mut XorShift64Star) -> Result<BatchNormSpec> {
        let mean = (0..maps).map(|_| rng.next_unit() * 0.1).collect();
        let variance = (0..maps).map(|_| 1.0 + rng.next_unit() * 0.25).collect();
        let scale = (0..maps).map(|_| 1.0 + rng.next_unit() * 0.25).collect();
        let shift = (0..maps).map(|_| rng.next_unit() * 0.1).collect();
        BatchNormSpec::new(mean, variance, scale, shift, 1e-5)
    }
}

/// Dense affine map on flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FullyConnectedSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    /// out_dim x in_dim, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl FullyConnectedSpec {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<FullyConnectedSpec> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::shape("fc dims must be >= 1"));
        }
        let want = out_dim
            .checked_mul(in_dim)
            .ok_or_else(|| Error::shape("fc weight count overflows"))?;
        if weights.len() != want {
            return Err(Error::shape(format!(
                "fc weights length {} != {out_dim} x {in_dim}",
                weights.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::shape(format!("fc bias length {} != out_dim {out_dim}", bias.len())));
        }
        Ok(FullyConnectedSpec { in_dim, out_dim, weights, bias })
    }

    pub fn seeded(in_dim: usize, out_dim: usize, rng: &mut XorShift64Star) -> Result<FullyConnectedSpec> {
        let scale = (6.0 / in_dim as f32).sqrt();
        let weights = (0..out_dim * in_dim).map(|_| rng.next_unit() * scale).collect();
        let bias = (0..out_dim).map(|_| rng.next_unit() * 0.1).collect();
        FullyConnectedSpec::new(in_dim, out_dim, weights, bias)
    }
}

/// Dilated 2-D convolution, valid in time, zero-padded in frequency.
///
/// Each output element is `bias + sum(weight * input)` over input maps and
/// kernel taps at dilated offsets. Taps that fall into the frequency padding
/// contribute nothing. The accumulation order per output element is fixed:
/// input map outer, then frequency tap, then time tap.
pub fn conv2d_dilated(input: &Tensor3, spec: &ConvSpec) -> Result<Tensor3> {
    if input.fmaps() != spec.in_maps {
        return Err(Error::shape(format!(
            "conv expects {} input maps, got {}",
            spec.in_maps,
            input.fmaps()
        )));
    }
    let freq = input.freq();
    let time = input.time();
    let (out_f, out_t) = spec.output_shape(freq, time)?;
    let mut out = vec![0.0f32; spec.out_maps * out_f * out_t];
    let plane_len = out_f * out_t;
    for om in 0..spec.out_maps {
        let plane = &mut out[om * plane_len..(om + 1) * plane_len];
        plane.fill(spec.bias[om]);
        for im in 0..spec.in_maps {
            for kf in 0..spec.kernel_f {
                for kt in 0..spec.kernel_t {
                    let w = spec.weights
                        [((om * spec.in_maps + im) * spec.kernel_f + kf) * spec.kernel_t + kt];
                    let t_off = kt * spec.dilation_t;
                    for of in 0..out_f {
                        let fi = (of + kf * spec.dilation_f) as isize - spec.pad_f as isize;
                        if fi < 0 || fi >= freq as isize {
                            continue; // zero padding: no contribution
                        }
                        let src = input.row(im, fi as usize);
                        let src = &src[t_off..t_off + out_t];
                        let dst = &mut plane[of * out_t..(of + 1) * out_t];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    Tensor3::from_vec(spec.out_maps, out_f, out_t, out)
}

/// Max pooling over (size_f x size_t) windows, time taps spread by
/// dilation_t. Feature maps pass through unchanged.
pub fn maxpool(input: &Tensor3, spec: &PoolSpec) -> Result<Tensor3> {
    let (out_f, out_t) = spec.output_shape(input.freq(), input.time())?;
    let mut out = Vec::with_capacity(input.fmaps() * out_f * out_t);
    for m in 0..input.fmaps() {
        for of in 0..out_f {
            for ot in 0..out_t {
                let mut best = f32::NEG_INFINITY;
                for jf in 0..spec.size_f {
                    let row = input.row(m, of * spec.stride_f + jf);
                    for jt in 0..spec.size_t {
                        best = best.max(row[ot * spec.stride_t + jt * spec.dilation_t]);
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor3::from_vec(input.fmaps(), out_f, out_t, out)
}

/// Inference batch normalization: y = scale * (x - mean) / sqrt(var + eps)
/// + shift, per feature map. Positionwise independent.
pub fn batchnorm_inference(input: &Tensor3, spec: &BatchNormSpec) -> Result<Tensor3> {
    if input.fmaps() != spec.maps() {
        return Err(Error::shape(format!(
            "batchnorm expects {} maps, got {}",
            spec.maps(),
            input.fmaps()
        )));
    }
    let mut out = Vec::with_capacity(input.len());
    let plane = input.freq() * input.time();
    for m in 0..input.fmaps() {
        let denom = (spec.variance[m] + spec.epsilon).sqrt();
        let (mean, scale, shift) = (spec.mean[m], spec.scale[m], spec.shift[m]);
        let base = m * plane;
        for &x in &input.data()[base..base + plane] {
            out.push(scale * (x - mean) / denom + shift);
        }
    }
    Tensor3::from_vec(input.fmaps(), input.freq(), input.time(), out)
}

/// Elementwise max(x, 0).
pub fn relu(input: &Tensor3) -> Tensor3 {
    let data = input.data().iter().map(|&x| x.max(0.0)).collect();
    Tensor3::from_vec(input.fmaps(), input.freq(), input.time(), data)
        .expect("relu preserves shape")
}

/// weights . input + bias. Accumulates in ascending input index order.
pub fn fully_connected(input: &[f32], spec: &FullyConnectedSpec) -> Result<Vec<f32>> {
    if input.len() != spec.in_dim {
        return Err(Error::shape(format!(
            "fc expects input length {}, got {}",
            spec.in_dim,
            input.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.out_dim);
    for o in 0..spec.out_dim {
        let row = &spec.weights[o * spec.in_dim..(o + 1) * spec.in_dim];
        let mut acc = spec.bias[o];
        for (&w, &x) in row.iter().zip(input) {
            acc += w * x;
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conv_1d(input: &[f32], kernel: &[f32], dilation_t: usize, bias: f32) -> Vec<f32> {
        let t = Tensor3::from_vec(1, 1, input.len(), input.to_vec()).unwrap();
        let spec = ConvSpec::new(1, 1, 1, kernel.len(), 1, dilation_t, 0, kernel.to_vec(), vec![bias])
            .unwrap();
        conv2d_dilated(&t, &spec).unwrap().into_vec()
    }

    #[test]
    fn conv_dilated_hand_example() {
        // (1*1 + 3*0 + 5*(-1)) with taps 2 apart
        assert_eq!(conv_1d(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 0.0, -1.0], 2, 0.0), vec![-4.0]);
    }

    #[test]
    fn conv_undilated_hand_example() {
        assert_eq!(
            conv_1d(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 0.0, -1.0], 1, 0.0),
            vec![-2.0, -2.0, -2.0]
        );
    }

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor3::seeded_random(3, 4, 9, 17).unwrap();
        for dilation in [1, 2, 5] {
            let mut weights = vec![0.0; 3 * 3];
            for m in 0..3 {
                weights[m * 3 + m] = 1.0; // 1x1 identity across maps
            }
            let spec = ConvSpec::new(3, 3, 1, 1, dilation, dilation, 0, weights, vec![0.0; 3]).unwrap();
            let out = conv2d_dilated(&input, &spec).unwrap();
            assert_eq!(out, input);
        }
    }

    #[test]
    fn conv_table1_first_layer_shape() {
        let input = Tensor3::zeros(3, 64, 48).unwrap();
        let mut rng = XorShift64Star::new(1);
        let spec = ConvSpec::seeded(3, 64, 7, 7, 1, 1, 3, &mut rng).unwrap();
        let out = conv2d_dilated(&input, &spec).unwrap();
        assert_eq!(out.shape(), (64, 64, 42));
    }

    #[test]
    fn conv_shape_errors() {
        let input = Tensor3::zeros(2, 4, 4).unwrap();
        let mut rng = XorShift64Star::new(1);
        let wrong_maps = ConvSpec::seeded(3, 1, 1, 1, 1, 1, 0, &mut rng).unwrap();
        assert!(matches!(conv2d_dilated(&input, &wrong_maps), Err(Error::Shape { .. })));
        let too_wide = ConvSpec::seeded(2, 1, 1, 3, 1, 2, 0, &mut rng).unwrap();
        assert!(matches!(conv2d_dilated(&input, &too_wide), Err(Error::Shape { .. })));
    }

    #[test]
    fn maxpool_hand_examples() {
        let t = Tensor3::from_vec(1, 1, 4, vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let strided = maxpool(&t, &PoolSpec::new(1, 2, 1, 2).unwrap()).unwrap();
        assert_eq!(strided.data(), &[3.0, 5.0]);
        let dense = maxpool(&t, &PoolSpec::new(1, 2, 1, 1).unwrap()).unwrap();
        assert_eq!(dense.data(), &[3.0, 3.0, 5.0]);
    }

    #[test]
    fn maxpool_table1_shape() {
        let input = Tensor3::seeded_random(64, 64, 42, 3).unwrap();
        let out = maxpool(&input, &PoolSpec::new(2, 1, 2, 1).unwrap()).unwrap();
        assert_eq!(out.shape(), (64, 32, 42));
    }

    #[test]
    fn maxpool_window_too_large() {
        let input = Tensor3::zeros(1, 2, 2).unwrap();
        assert!(matches!(
            maxpool(&input, &PoolSpec::new(3, 1, 1, 1).unwrap()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn maxpool_dilated_window() {
        // window taps {t, t+2} after densification
        let t = Tensor3::from_vec(1, 1, 5, vec![1.0, 9.0, 2.0, 0.0, 4.0]).unwrap();
        let spec = PoolSpec::with_dilation(1, 2, 1, 1, 2).unwrap();
        let out = maxpool(&t, &spec).unwrap();
        assert_eq!(out.data(), &[2.0, 9.0, 4.0]);
    }

    #[test]
    fn pool_rejects_stride_exceeding_window() {
        assert!(PoolSpec::new(1, 2, 1, 3).is_err());
    }

    #[test]
    fn batchnorm_identity_stats() {
        let input = Tensor3::seeded_random(3, 4, 5, 21).unwrap();
        let spec = BatchNormSpec::new(vec![0.0; 3], vec![1.0; 3], vec![1.0; 3], vec![0.0; 3], 1e-12)
            .unwrap();
        let out = batchnorm_inference(&input, &spec).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_centering_zeroes_constant_input() {
        let input = Tensor3::from_vec(1, 2, 2, vec![3.5; 4]).unwrap();
        let spec =
            BatchNormSpec::new(vec![3.5], vec![1.0], vec![1.0], vec![0.0], 1e-5).unwrap();
        let out = batchnorm_inference(&input, &spec).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batchnorm_scalar_oracle() {
        let input = Tensor3::from_vec(1, 1, 1, vec![2.0]).unwrap();
        let spec = BatchNormSpec::new(vec![1.0], vec![3.0], vec![2.0], vec![0.5], 1e-5).unwrap();
        let out = batchnorm_inference(&input, &spec).unwrap();
        let expect = 2.0f32 * (2.0 - 1.0) / (3.0f32 + 1e-5).sqrt() + 0.5;
        assert_eq!(out.data()[0], expect);
    }

    #[test]
    fn batchnorm_length_mismatch() {
        let input = Tensor3::zeros(2, 1, 1).unwrap();
        let spec = BatchNormSpec::new(vec![0.0], vec![1.0], vec![1.0], vec![0.0], 1e-5).unwrap();
        assert!(matches!(batchnorm_inference(&input, &spec), Err(Error::Shape { .. })));
    }

    #[test]
    fn batchnorm_commutes_with_slice_time() {
        let input = Tensor3::seeded_random(3, 2, 10, 33).unwrap();
        let mut rng = XorShift64Star::new(5);
        let spec = BatchNormSpec::seeded(3, &mut rng).unwrap();
        let normalized = batchnorm_inference(&input, &spec).unwrap();
        for (start, len) in [(0, 10), (2, 5), (7, 3)] {
            let a = normalized.slice_time(start, len).unwrap();
            let b = batchnorm_inference(&input.slice_time(start, len).unwrap(), &spec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn relu_hand_examples() {
        let t = Tensor3::from_vec(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor3::from_vec(1, 1, 3, vec![-1.0, -5.0, -0.25]).unwrap();
        assert_eq!(relu(&neg).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_idempotent() {
        let t = Tensor3::seeded_random(2, 3, 4, 44).unwrap();
        let once = relu(&t);
        assert_eq!(relu(&once), once);
    }

    #[test]
    fn fully_connected_identity_and_bias() {
        let x = vec![0.5, -1.0, 2.0];
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let id = FullyConnectedSpec::new(3, 3, eye, vec![0.0; 3]).unwrap();
        assert_eq!(fully_connected(&x, &id).unwrap(), x);

        let biased = FullyConnectedSpec::new(3, 2, vec![0.0; 6], vec![1.5, -2.0]).unwrap();
        assert_eq!(fully_connected(&x, &biased).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn fully_connected_hand_matvec() {
        let spec = FullyConnectedSpec::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(fully_connected(&[1.0, 1.0], &spec).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn fully_connected_length_mismatch() {
        let spec = FullyConnectedSpec::new(2, 1, vec![1.0, 1.0], vec![0.0]).unwrap();
        assert!(matches!(fully_connected(&[1.0], &spec), Err(Error::Shape { .. })));
    }

    /// Brute-force per-output conv used as local oracle: plain quadruple
    /// loop, same documented accumulation order.
    fn brute_conv(input: &Tensor3, spec: &ConvSpec) -> Tensor3 {
        let (out_f, out_t) = spec.output_shape(input.freq(), input.time()).unwrap();
        let mut out = Tensor3::zeros(spec.out_maps, out_f, out_t).unwrap();
        for om in 0..spec.out_maps {
            for of in 0..out_f {
                for ot in 0..out_t {
                    let mut acc = spec.bias[om];
                    for im in 0..spec.in_maps {
                        for kf in 0..spec.kernel_f {
                            let fi = (of + kf * spec.dilation_f) as isize - spec.pad_f as isize;
                            if fi < 0 || fi >= input.freq() as isize {
                                continue;
                            }
                            for kt in 0..spec.kernel_t {
                                let w = spec.weights[((om * spec.in_maps + im) * spec.kernel_f
                                    + kf)
                                    * spec.kernel_t
                                    + kt];
                                acc += w * input.get(im, fi as usize, ot + kt * spec.dilation_t);
                            }
                        }
                    }
                    out.set(om, of, ot, acc);
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_brute_force_oracle() {
        let mut rng = XorShift64Star::new(99);
        for case in 0..200 {
            let in_maps = 1 + (case % 4);
            let out_maps = 1 + (case % 3);
            let freq = 1 + (case % 8);
            let kernel_f = 1 + (case % 3).min(freq - 1);
            let pad_f = case % 2;
            let kernel_t = 1 + (case % 5);
            let dilation_t = 1 + (case % 4);
            let time = (kernel_t - 1) * dilation_t + 1 + (case % 9);
            if freq + 2 * pad_f < kernel_f {
                continue;
            }
            let input = Tensor3::seeded_random(in_maps, freq, time, case as u64).unwrap();
            let spec = ConvSpec::seeded(
                in_maps, out_maps, kernel_f, kernel_t, 1, dilation_t, pad_f, &mut rng,
            )
            .unwrap();
            let fast = conv2d_dilated(&input, &spec).unwrap();
            let brute = brute_conv(&input, &spec);
            assert_eq!(fast, brute, "case {case}");
        }
    }

    /// Dilated conv equals undilated conv applied per time phase: subsample
    /// the time axis at stride d starting at each phase, convolve with
    /// dilation 1, and the outputs are the dense outputs of that phase.
    #[test]
    fn conv_phase_decomposition() {
        let mut rng = XorShift64Star::new(4242);
        for case in 0u64..60 {
            let d = 2 + (case as usize % 3);
            let in_maps = 1 + (case as usize % 2);
            let freq = 1 + (case as usize % 4);
            let kernel_t = 2 + (case as usize % 3);
            let time = (kernel_t - 1) * d + 1 + (case as usize % 10);
            let input = Tensor3::seeded_random(in_maps, freq, time, 1000 + case).unwrap();
            let spec = ConvSpec::seeded(in_maps, 2, 1, kernel_t, 1, d, 0, &mut rng).unwrap();
            let dilated = conv2d_dilated(&input, &spec).unwrap();

            let mut undilated = spec.clone();
            undilated.dilation_t = 1;
            for phase in 0..d {
                // subsample phase, phase+d, ...
                let count = (time - phase + d - 1) / d;
                if count < kernel_t {
                    continue;
                }
                let mut sub = Vec::new();
                for m in 0..in_maps {
                    for f in 0..freq {
                        for i in 0..count {
                            sub.push(input.get(m, f, phase + i * d));
                        }
                    }
                }
                let sub = Tensor3::from_vec(in_maps, freq, count, sub).unwrap();
                let out = conv2d_dilated(&sub, &undilated).unwrap();
                for m in 0..out.fmaps() {
                    for f in 0..out.freq() {
                        for i in 0..out.time() {
                            let dense_t = phase + i * d;
                            assert_eq!(
                                out.get(m, f, i),
                                dilated.get(m, f, dense_t),
                                "case {case} phase {phase}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_matches_brute_force_and_window_permutation() {
        let input = Tensor3::seeded_random(2, 6, 11, 77).unwrap();
        let spec = PoolSpec::with_dilation(2, 3, 2, 2, 1).unwrap();
        let out = maxpool(&input, &spec).unwrap();
        for m in 0..out.fmaps() {
            for of in 0..out.freq() {
                for ot in 0..out.time() {
                    let mut vals = Vec::new();
                    for jf in 0..spec.size_f {
                        for jt in 0..spec.size_t {
                            vals.push(input.get(m, of * spec.stride_f + jf, ot * spec.stride_t + jt));
                        }
                    }
                    let brute = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    assert_eq!(out.get(m, of, ot), brute);
                    // permutation invariance within the window
                    vals.reverse();
                    let rev = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    assert_eq!(brute, rev);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn conv_output_shape_formula(
            in_maps in 1usize..4,
            out_maps in 1usize..4,
            freq in 1usize..10,
            time_slack in 0usize..8,
            kernel_f in 1usize..4,
            kernel_t in 1usize..5,
            dilation_f in 1usize..3,
            dilation_t in 1usize..4,
            pad_f in 0usize..3,
            seed in 0u64..u64::MAX,
        ) {
            let ext_f = 1 + (kernel_f - 1) * dilation_f;
            let ext_t = 1 + (kernel_t - 1) * dilation_t;
            prop_assume!(freq + 2 * pad_f >= ext_f);
            let time = ext_t + time_slack;
            let input = Tensor3::seeded_random(in_maps, freq, time, seed).unwrap();
            let mut rng = XorShift64Star::new(seed ^ 0xabcd);
            let spec = ConvSpec::seeded(
                in_maps, out_maps, kernel_f, kernel_t, dilation_f, dilation_t, pad_f, &mut rng,
            ).unwrap();
            let out = conv2d_dilated(&input, &spec).unwrap();
            prop_assert_eq!(out.shape(), (
                out_maps,
                freq + 2 * pad_f - ext_f + 1,
                time - ext_t + 1,
            ));
        }

        #[test]
        fn pool_output_shape_formula(
            maps in 1usize..4,
            freq in 1usize..10,
            time in 1usize..16,
            size_f in 1usize..4,
            size_t in 1usize..4,
            stride_f in 1usize..3,
            stride_t in 1usize..4,
            dilation_t in 1usize..3,
            seed in 0u64..u64::MAX,
        ) {
            prop_assume!(stride_t <= size_t);
            let ext_t = 1 + (size_t - 1) * dilation_t;
            prop_assume!(freq >= size_f && time >= ext_t);
            let input = Tensor3::seeded_random(maps, freq, time, seed).unwrap();
            let spec = PoolSpec::with_dilation(size_f, size_t, stride_f, stride_t, dilation_t).unwrap();
            let out = maxpool(&input, &spec).unwrap();
            prop_assert_eq!(out.shape(), (
                maps,
                (freq - size_f) / stride_f + 1,
                (time - ext_t) / stride_t + 1,
            ));
        }
    }
}
