//! Four-layer 1-D CNN over two-channel magnitude spectra.
//!
//! conv(64, k16) → pool → conv(32, k16) → pool → conv(32, k8) → pool →
//! conv(16, k8) → global average pooling → dense(9). Convolutions use zero
//! 'same' padding and ReLU; pooling is max over pairs.

mod io;
mod kernels;
mod train;

pub use io::{load_model, read_model_from, save_model, write_model_to, MODEL_MAGIC};
pub use train::{
    evaluate, predict_set, train, train_from, EarlyStopping, EpochRecord, History, LabeledSet,
    PlateauScheduler, TrainConfig,
};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coords::ElevationClass;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use kernels::{conv_relu_backward, conv_relu_forward, maxpool2_backward, maxpool2_forward};

pub const N_CLASSES: usize = ElevationClass::COUNT;
pub const INPUT_CHANNELS: usize = 2;
/// Shortest accepted spectrum: the widest kernel.
pub const MIN_INPUT_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    /// Max-pool by 2 after the activation.
    pub pool: bool,
}

impl ConvSpec {
    pub const fn n_params(&self) -> usize {
        self.filters * self.in_channels * self.kernel + self.filters
    }
}

pub const CONV_LAYERS: [ConvSpec; 4] = [
    ConvSpec { in_channels: 2, filters: 64, kernel: 16, pool: true },
    ConvSpec { in_channels: 64, filters: 32, kernel: 16, pool: true },
    ConvSpec { in_channels: 32, filters: 32, kernel: 8, pool: true },
    ConvSpec { in_channels: 32, filters: 16, kernel: 8, pool: false },
];

/// Channels of the last convolution, i.e. the CAM feature maps.
pub const FEATURE_CHANNELS: usize = CONV_LAYERS[3].filters;

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "conv3", "conv4", "dense"];

/// Weight and bias ranges of one layer within the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub weight_shape: Vec<usize>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.bias.end - self.weight.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter layout in storage order: for each layer its weights, then its
/// biases. Conv weights are `[filter][in_channel][tap]`, dense weights
/// `[class][feature]`.
pub fn param_blocks() -> Vec<ParamBlock> {
    let mut at = 0;
    let mut out = Vec::with_capacity(5);
    for (i, c) in CONV_LAYERS.iter().enumerate() {
        let w = c.filters * c.in_channels * c.kernel;
        out.push(ParamBlock {
            name: LAYER_NAMES[i],
            weight: at..at + w,
            bias: at + w..at + w + c.filters,
            weight_shape: vec![c.filters, c.in_channels, c.kernel],
        });
        at += w + c.filters;
    }
    let w = N_CLASSES * FEATURE_CHANNELS;
    out.push(ParamBlock {
        name: LAYER_NAMES[4],
        weight: at..at + w,
        bias: at + w..at + w + N_CLASSES,
        weight_shape: vec![N_CLASSES, FEATURE_CHANNELS],
    });
    out
}

pub fn n_params() -> usize {
    param_blocks().last().map_or(0, |b| b.bias.end)
}

/// Positions after each convolution for an input of `bins` positions.
pub fn stage_lengths(bins: usize) -> [usize; 4] {
    let mut l = bins;
    let mut out = [0; 4];
    for (i, c) in CONV_LAYERS.iter().enumerate() {
        out[i] = l;
        if c.pool {
            l /= 2;
        }
    }
    out
}

/// Facts recorded alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Spectrum length used during training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bins: Option<usize>,
    /// Preprocessing configuration of the training data, as key-value text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preproc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    params: Vec<T>,
    pub meta: ModelMeta,
}

/// Everything a single forward pass exposes.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub logits: Vec<T>,
    pub probabilities: Vec<T>,
    /// Last-conv activations, `FEATURE_CHANNELS x positions`, row-major.
    pub last_conv: Vec<T>,
    pub positions: usize,
    /// Per-channel mean of `last_conv`.
    pub gap: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Activations of feature channel `k`.
    pub fn channel(&self, k: usize) -> &[T] {
        &self.last_conv[k * self.positions..][..self.positions]
    }

    pub fn prediction(&self) -> (usize, T) {
        argmax(&self.probabilities)
    }
}

/// Index and value of the maximum; ties go to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> (usize, T) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Intermediate buffers retained for the backward pass.
struct Tape<T> {
    n: usize,
    lens: [usize; 4],
    inputs: [Vec<T>; 4],
    outputs: [Vec<T>; 4],
    pool_arg: [Vec<u8>; 3],
    gap: Vec<T>,
    logits: Vec<T>,
}

/// Packs per-sample inputs (`2 x bins`, ipsi then contra) into the
/// channel-major batch layout.
pub fn pack_batch<T: Scalar>(inputs: &[&[T]], bins: usize) -> Result<Vec<T>> {
    let n = inputs.len();
    let mut out = vec![T::zero(); INPUT_CHANNELS * n * bins];
    for (s, x) in inputs.iter().enumerate() {
        if x.len() != INPUT_CHANNELS * bins {
            return Err(Error::LengthMismatch {
                what: "model input",
                left: x.len(),
                right: INPUT_CHANNELS * bins,
            });
        }
        for c in 0..INPUT_CHANNELS {
            out[(c * n + s) * bins..][..bins].copy_from_slice(&x[c * bins..][..bins]);
        }
    }
    Ok(out)
}

impl<T: Scalar> CnnModel<T> {
    /// He-uniform weights, zero biases.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); n_params()];
        for (i, b) in param_blocks().iter().enumerate() {
            let fan_in = if i < 4 {
                CONV_LAYERS[i].in_channels * CONV_LAYERS[i].kernel
            } else {
                FEATURE_CHANNELS
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[b.weight.clone()] {
                *p = T::of(rng.random_range(-limit..limit));
            }
        }
        Self {
            params,
            meta: ModelMeta { seed: Some(seed), ..Default::default() },
        }
    }

    pub fn from_params(params: Vec<T>, meta: ModelMeta) -> Result<Self> {
        if params.len() != n_params() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                left: params.len(),
                right: n_params(),
            });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { what: "model parameter", index });
        }
        Ok(Self { params, meta })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Trainable parameters per layer, in layer order.
    pub fn param_counts(&self) -> Vec<usize> {
        param_blocks().iter().map(ParamBlock::len).collect()
    }

    /// Dense weights for class `c` over the feature channels.
    pub fn class_weights(&self, c: usize) -> Result<&[T]> {
        if c >= N_CLASSES {
            return Err(Error::ClassOutOfRange(c));
        }
        let b = &param_blocks()[4];
        Ok(&self.params[b.weight.start + c * FEATURE_CHANNELS..][..FEATURE_CHANNELS])
    }

    pub fn class_bias(&self, c: usize) -> Result<T> {
        if c >= N_CLASSES {
            return Err(Error::ClassOutOfRange(c));
        }
        Ok(self.params[param_blocks()[4].bias.start + c])
    }

    pub fn cast<U: Scalar>(&self) -> CnnModel<U> {
        CnnModel {
            params: self.params.iter().map(|p| U::of(p.f64())).collect(),
            meta: self.meta.clone(),
        }
    }

    fn check_bins(bins: usize) -> Result<()> {
        if bins < MIN_INPUT_BINS {
            return Err(Error::InputTooShort { len: bins, min: MIN_INPUT_BINS });
        }
        Ok(())
    }

    fn run(&self, packed: &[T], n: usize, bins: usize) -> Result<Tape<T>> {
        Self::check_bins(bins)?;
        if packed.len() != INPUT_CHANNELS * n * bins {
            return Err(Error::LengthMismatch {
                what: "packed batch",
                left: packed.len(),
                right: INPUT_CHANNELS * n * bins,
            });
        }
        let blocks = param_blocks();
        let lens = stage_lengths(bins);
        let mut inputs: [Vec<T>; 4] = Default::default();
        let mut outputs: [Vec<T>; 4] = Default::default();
        let mut pool_arg: [Vec<u8>; 3] = Default::default();
        let mut col = Vec::new();
        inputs[0] = packed.to_vec();
        for (i, c) in CONV_LAYERS.iter().enumerate() {
            let b = &blocks[i];
            let mut out = Vec::new();
            conv_relu_forward(
                &inputs[i],
                c.in_channels,
                n,
                lens[i],
                c.kernel,
                &self.params[b.weight.clone()],
                &self.params[b.bias.clone()],
                &mut col,
                &mut out,
            );
            outputs[i] = out;
            if c.pool {
                let mut pooled = Vec::new();
                maxpool2_forward(&outputs[i], c.filters * n, lens[i], &mut pooled, &mut pool_arg[i]);
                inputs[i + 1] = pooled;
            }
        }
        let l = lens[3];
        let inv_l = T::one() / T::of_usize(l);
        let gap: Vec<T> = outputs[3]
            .chunks_exact(l)
            .map(|row| row.iter().copied().sum::<T>() * inv_l)
            .collect();
        let d = &blocks[4];
        let wd = &self.params[d.weight.clone()];
        let bd = &self.params[d.bias.clone()];
        let mut logits = vec![T::zero(); n * N_CLASSES];
        for s in 0..n {
            for c in 0..N_CLASSES {
                let mut z = bd[c];
                for k in 0..FEATURE_CHANNELS {
                    z += wd[c * FEATURE_CHANNELS + k] * gap[k * n + s];
                }
                logits[s * N_CLASSES + c] = z;
            }
        }
        Ok(Tape { n, lens, inputs, outputs, pool_arg, gap, logits })
    }

    /// Forward pass over a batch of `2 x bins` inputs.
    pub fn forward_batch(&self, inputs: &[&[T]], bins: usize) -> Result<Vec<ForwardTrace<T>>> {
        let packed = pack_batch(inputs, bins)?;
        let tape = self.run(&packed, inputs.len(), bins)?;
        let (n, l) = (tape.n, tape.lens[3]);
        Ok((0..n)
            .map(|s| {
                let logits = tape.logits[s * N_CLASSES..][..N_CLASSES].to_vec();
                let mut last_conv = Vec::with_capacity(FEATURE_CHANNELS * l);
                for k in 0..FEATURE_CHANNELS {
                    last_conv.extend_from_slice(&tape.outputs[3][(k * n + s) * l..][..l]);
                }
                ForwardTrace {
                    probabilities: softmax(&logits),
                    logits,
                    last_conv,
                    positions: l,
                    gap: (0..FEATURE_CHANNELS).map(|k| tape.gap[k * n + s]).collect(),
                }
            })
            .collect())
    }

    /// Forward pass for one `2 x bins` input (ipsi then contra).
    pub fn forward(&self, input: &[T]) -> Result<ForwardTrace<T>> {
        let bins = input.len() / INPUT_CHANNELS;
        if input.len() % INPUT_CHANNELS != 0 {
            return Err(Error::Shape(format!("input length {} is odd", input.len())));
        }
        Ok(self.forward_batch(&[input], bins)?.remove(0))
    }

    /// Predicted class and its probability; ties go to the lowest index.
    pub fn predict(&self, input: &[T]) -> Result<(usize, T)> {
        Ok(self.forward(input)?.prediction())
    }

    /// Mean cross-entropy over a packed batch; gradients are written to
    /// `grad` (overwritten, same layout as the parameters).
    pub(crate) fn loss_and_grad(
        &self,
        packed: &[T],
        labels: &[usize],
        bins: usize,
        grad: &mut [T],
    ) -> Result<T> {
        let n = labels.len();
        if let Some(&c) = labels.iter().find(|&&c| c >= N_CLASSES) {
            return Err(Error::ClassOutOfRange(c));
        }
        let tape = self.run(packed, n, bins)?;
        let blocks = param_blocks();
        grad.iter_mut().for_each(|g| *g = T::zero());
        let inv_n = T::one() / T::of_usize(n);

        let mut loss = T::zero();
        let mut dlogits = vec![T::zero(); n * N_CLASSES];
        for s in 0..n {
            let z = &tape.logits[s * N_CLASSES..][..N_CLASSES];
            let p = softmax(z);
            let m = z.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            loss += lse - z[labels[s]];
            for c in 0..N_CLASSES {
                let target = if c == labels[s] { T::one() } else { T::zero() };
                dlogits[s * N_CLASSES + c] = (p[c] - target) * inv_n;
            }
        }

        let d = &blocks[4];
        let wd = &self.params[d.weight.clone()];
        let l = tape.lens[3];
        let mut dgap = vec![T::zero(); FEATURE_CHANNELS * n];
        {
            let (gw, gb) = grad[d.weight.start..d.bias.end].split_at_mut(d.weight.len());
            for s in 0..n {
                for c in 0..N_CLASSES {
                    let g = dlogits[s * N_CLASSES + c];
                    gb[c] += g;
                    for k in 0..FEATURE_CHANNELS {
                        gw[c * FEATURE_CHANNELS + k] += g * tape.gap[k * n + s];
                        dgap[k * n + s] += g * wd[c * FEATURE_CHANNELS + k];
                    }
                }
            }
        }
        let inv_l = T::one() / T::of_usize(l);
        let mut dout: Vec<T> = dgap
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv_l, l))
            .collect();

        let mut col = Vec::new();
        let mut dx = Vec::new();
        for i in (0..4).rev() {
            let c = &CONV_LAYERS[i];
            let b = &blocks[i];
            let (gw, gb) = grad[b.weight.start..b.bias.end].split_at_mut(b.weight.len());
            let need_dx = i > 0;
            if need_dx {
                dx.clear();
                dx.resize(c.in_channels * n * tape.lens[i], T::zero());
            }
            conv_relu_backward(
                &tape.inputs[i],
                &tape.outputs[i],
                &mut dout,
                c.in_channels,
                n,
                tape.lens[i],
                c.kernel,
                &self.params[b.weight.clone()],
                gw,
                gb,
                &mut col,
                if need_dx { Some(&mut dx[..]) } else { None },
            );
            if need_dx {
                let prev = &CONV_LAYERS[i - 1];
                maxpool2_backward(&dx, &tape.pool_arg[i - 1], prev.filters * n, tape.lens[i - 1], &mut dout);
            }
        }
        Ok(loss * inv_n)
    }

    /// Mean cross-entropy and full gradient for the given inputs.
    pub fn gradient(&self, inputs: &[&[T]], labels: &[usize], bins: usize) -> Result<(T, Vec<T>)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::LengthMismatch {
                what: "inputs/labels",
                left: inputs.len(),
                right: labels.len(),
            });
        }
        let packed = pack_batch(inputs, bins)?;
        let mut grad = vec![T::zero(); self.params.len()];
        let loss = self.loss_and_grad(&packed, labels, bins, &mut grad)?;
        Ok((loss, grad))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, inputs: &[&[T]], labels: &[usize], bins: usize) -> Result<T> {
        let traces = self.forward_batch(inputs, bins)?;
        let mut total = T::zero();
        for (t, &y) in traces.iter().zip(labels) {
            if y >= N_CLASSES {
                return Err(Error::ClassOutOfRange(y));
            }
            let m = t.logits.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + t.logits.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            total += lse - t.logits[y];
        }
        Ok(total / T::of_usize(labels.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_input(bins: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2 * bins).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn parameter_counts() {
        let m = CnnModel::<f64>::new(0);
        assert_eq!(m.param_counts(), vec![2112, 32800, 8224, 4112, 153]);
        assert_eq!(n_params(), 47401);
        assert_eq!(m.params().len(), 47401);
    }

    #[test]
    fn stage_lengths_for_common_inputs() {
        assert_eq!(stage_lengths(257), [257, 128, 64, 32]);
        assert_eq!(stage_lengths(255), [255, 127, 63, 31]);
        assert_eq!(stage_lengths(16), [16, 8, 4, 2]);
    }

    #[test]
    fn zero_input_gives_bias_logits() {
        let m = CnnModel::<f64>::new(3);
        let t = m.forward(&vec![0.0; 2 * 257]).unwrap();
        assert!(t.logits.iter().all(|&z| z == 0.0));
        assert!(t.probabilities.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
        assert_eq!(t.positions, 32);
        let t = m.forward(&vec![0.0; 2 * 255]).unwrap();
        assert_eq!(t.positions, 31);
        assert_eq!(t.logits.len(), 9);
    }

    #[test]
    fn too_short_input_rejected() {
        let m = CnnModel::<f64>::new(0);
        assert!(matches!(m.forward(&[0.0; 30]), Err(Error::InputTooShort { len: 15, min: 16 })));
        assert!(m.forward(&[0.0; 32]).is_ok());
    }

    #[test]
    fn batch_matches_single() {
        let m = CnnModel::<f64>::new(5);
        let a = random_input(40, 1);
        let b = random_input(40, 2);
        let batch = m.forward_batch(&[&a, &b], 40).unwrap();
        assert_eq!(batch[0], m.forward(&a).unwrap());
        let single_b = m.forward(&b).unwrap();
        for (x, y) in batch[1].logits.iter().zip(&single_b.logits) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_inference_tracks_f64() {
        let m = CnnModel::<f64>::new(8);
        let x = random_input(64, 4);
        let t64 = m.forward(&x).unwrap();
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let t32 = m.cast::<f32>().forward(&x32).unwrap();
        for (a, b) in t64.probabilities.iter().zip(&t32.probabilities) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]).0, 1);
        assert_eq!(argmax(&[1.0; 9]).0, 0);
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3, -1.2, 2.5, 0.0, 0.7, 1.1, -0.4, 2.5, 0.2];
        let p = softmax(&z);
        let shifted: Vec<f64> = z.iter().map(|v| v + 37.5).collect();
        let q = softmax(&shifted);
        assert_eq!(argmax(&p).0, argmax(&q).0);
        assert!((argmax(&p).1 - argmax(&q).1).abs() < 1e-12);
    }

    #[test]
    fn dense_gradient_matches_closed_form() {
        // d loss / d W[c][k] = (p_c - y_c) * gap_k for one sample.
        let m = CnnModel::<f64>::new(2);
        let x = random_input(32, 6);
        let (_, g) = m.gradient(&[&x], &[4], 32).unwrap();
        let t = m.forward(&x).unwrap();
        let d = &param_blocks()[4];
        for c in 0..N_CLASSES {
            let y = if c == 4 { 1.0 } else { 0.0 };
            for k in 0..FEATURE_CHANNELS {
                let want = (t.probabilities[c] - y) * t.gap[k];
                assert!((g[d.weight.start + c * FEATURE_CHANNELS + k] - want).abs() < 1e-14);
            }
            assert!((g[d.bias.start + c] - (t.probabilities[c] - y)).abs() < 1e-14);
        }
    }

    #[test]
    fn no_signal_means_zero_gradient() {
        let mut m = CnnModel::<f64>::new(1);
        let blocks = param_blocks();
        let x = random_input(32, 2);
        // Saturate the labelled class so p equals the one-hot target exactly.
        m.params_mut()[blocks[4].bias.start + 2] = 800.0;
        let (loss, g) = m.gradient(&[&x], &[2], 32).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_difference_spot_check() {
        let m = CnnModel::<f64>::new(11);
        let bins = 32;
        let xs = [random_input(bins, 1), random_input(bins, 2)];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let labels = [3, 7];
        let (_, g) = m.gradient(&refs, &labels, bins).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for b in param_blocks() {
            for _ in 0..6 {
                let i = rng.random_range(b.weight.start..b.bias.end);
                let h = 1e-4;
                let mut p = m.clone();
                p.params_mut()[i] += h;
                let up = p.loss(&refs, &labels, bins).unwrap();
                p.params_mut()[i] -= 2.0 * h;
                let down = p.loss(&refs, &labels, bins).unwrap();
                let fd = (up - down) / (2.0 * h);
                let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
                assert!(err < 1e-4, "{} param {i}: analytic {} fd {fd}", b.name, g[i]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn softmax_sums_to_one(seed in any::<u64>(), bins in 16usize..80) {
            let m = CnnModel::<f64>::new(seed);
            let t = m.forward(&random_input(bins, seed ^ 1)).unwrap();
            let s: f64 = t.probabilities.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(t.last_conv.iter().all(|&a| a >= 0.0));
            let (_, conf) = t.prediction();
            prop_assert!(conf >= 1.0 / 9.0 - 1e-15 && conf <= 1.0);
        }
    }
}
