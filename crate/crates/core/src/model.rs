//! Implicit target representation: a sinusoidal positional encoding of the
//! target-local sample position and ray direction feeding a four-layer MLP
//! that predicts the normalized return energy.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::diff::{Tape, Tensor, Var};
use crate::geometry::Vec3;
use crate::math;

pub const HIDDEN: usize = 128;
pub const LAYER_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("layer {layer}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { layer: usize, expected: (usize, usize), found: (usize, usize) },
}

/// `x ↦ [sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx)]`, optionally
/// preceded by `x` itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionalEncoding {
    pub depth: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(depth: usize, include_input: bool) -> Result<Self, ModelError> {
        if depth == 0 {
            return Err(ModelError::InvalidArgument("encoding depth must be positive"));
        }
        if depth > 52 {
            return Err(ModelError::InvalidArgument("encoding depth exceeds f64 frequency range"));
        }
        Ok(Self { depth, include_input })
    }

    pub fn width_per_scalar(&self) -> usize {
        2 * self.depth + usize::from(self.include_input)
    }
}

/// Feature map applied to the six network inputs (position, direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Identity features, input dimension 6.
    Raw,
    Sinusoidal(PositionalEncoding),
}

impl Encoding {
    pub fn sinusoidal(depth: usize) -> Result<Self, ModelError> {
        Ok(Encoding::Sinusoidal(PositionalEncoding::new(depth, false)?))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoding::Raw => 6,
            Encoding::Sinusoidal(pe) => 6 * pe.width_per_scalar(),
        }
    }
}

/// A RADAR return expressed in a target's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLocalSample {
    pub position: Vec3,
    pub direction: Vec3,
    pub energy: f64,
}

pub fn encode(x: f64, depth: usize) -> Result<Vec<f64>, ModelError> {
    let pe = PositionalEncoding::new(depth, false)?;
    if !x.is_finite() {
        return Err(ModelError::InvalidArgument("non-finite input"));
    }
    let t = crate::diff::positional_encoding_tensor(&Tensor::scalar(x), pe.depth, pe.include_input);
    Ok(t.into_data())
}

/// Features `[P(x₁), P(x₂), P(x₃), P(d₁), P(d₂), P(d₃)]`.
pub fn encode_sample(s: &TargetLocalSample, encoding: &Encoding) -> Vec<f64> {
    features_of(&[*s], encoding).into_data()
}

/// Feature matrix (one row per sample).
pub fn features_of(samples: &[TargetLocalSample], encoding: &Encoding) -> Tensor {
    let positions = Tensor::from_rows(&samples.iter().map(|s| s.position).collect::<Vec<_>>());
    let directions = Tensor::from_rows(&samples.iter().map(|s| s.direction).collect::<Vec<_>>());
    match encoding {
        Encoding::Raw => hcat2(&positions, &directions),
        Encoding::Sinusoidal(pe) => {
            let p = crate::diff::positional_encoding_tensor(&positions, pe.depth, pe.include_input);
            let d = crate::diff::positional_encoding_tensor(&directions, pe.depth, pe.include_input);
            hcat2(&p, &d)
        }
    }
}

fn hcat2(a: &Tensor, b: &Tensor) -> Tensor {
    let rows = a.rows();
    let mut data = Vec::with_capacity(rows * (a.cols() + b.cols()));
    for r in 0..rows {
        data.extend_from_slice(a.row_slice(r));
        data.extend_from_slice(b.row_slice(r));
    }
    Tensor::new(rows, a.cols() + b.cols(), data)
}

/// `y = x·W + b`, `W` stored in×out.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub encoding: Encoding,
    pub layers: Vec<Linear>,
}

/// Layer shapes `(in, out)` for an encoding.
pub fn layer_shapes(encoding: &Encoding) -> [(usize, usize); LAYER_COUNT] {
    [(encoding.input_dim(), HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, 1)]
}

impl MlpWeights {
    pub fn new(encoding: Encoding, layers: Vec<Linear>) -> Result<Self, ModelError> {
        let w = Self { encoding, layers };
        w.check_shapes()?;
        Ok(w)
    }

    pub fn zeros(encoding: Encoding) -> Self {
        let layers = layer_shapes(&encoding)
            .iter()
            .map(|&(i, o)| Linear { weight: Tensor::zeros(i, o), bias: Tensor::zeros(1, o) })
            .collect();
        Self { encoding, layers }
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let shapes = layer_shapes(&self.encoding);
        if self.layers.len() != LAYER_COUNT {
            return Err(ModelError::InvalidArgument("network must have four layers"));
        }
        for (k, (layer, &(i, o))) in self.layers.iter().zip(shapes.iter()).enumerate() {
            if layer.weight.shape() != (i, o) {
                return Err(ModelError::ShapeMismatch { layer: k, expected: (i, o), found: layer.weight.shape() });
            }
            if layer.bias.shape() != (1, o) {
                return Err(ModelError::ShapeMismatch { layer: k, expected: (1, o), found: layer.bias.shape() });
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Flat list `[W₁, b₁, W₂, b₂, …]`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Predictions for a feature matrix (one row per sample) as an n×1 tensor.
    pub fn forward_features(&self, features: &Tensor) -> Result<Tensor, ModelError> {
        self.check_shapes()?;
        if features.cols() != self.encoding.input_dim() {
            return Err(ModelError::ShapeMismatch {
                layer: 0,
                expected: (features.rows(), self.encoding.input_dim()),
                found: features.shape(),
            });
        }
        // Same primitive sequence as `forward_on_tape`, without recording.
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let vars = self.record(&mut tape, false);
        let out = forward_on_tape(&mut tape, &vars, x);
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, sample: &TargetLocalSample) -> Result<f64, ModelError> {
        self.predict_batch(core::slice::from_ref(sample)).map(|v| v[0])
    }

    pub fn predict_batch(&self, samples: &[TargetLocalSample]) -> Result<Vec<f64>, ModelError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward_features(&features_of(samples, &self.encoding))?.into_data())
    }

    /// Puts every layer on the tape, as leaves when `trainable`.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { encoding: self.encoding, layers }
    }
}

/// Tape handles of an [`MlpWeights`], in the same order as
/// [`MlpWeights::tensors`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub encoding: Encoding,
    pub layers: Vec<(Var, Var)>,
}

impl MlpVars {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Encodes n×3 position and direction tensors into the n×F feature matrix.
pub fn encode_on_tape(tape: &mut Tape, positions: Var, directions: Var, encoding: &Encoding) -> Var {
    match encoding {
        Encoding::Raw => tape.hcat(&[positions, directions]),
        Encoding::Sinusoidal(pe) => {
            let p = tape.positional_encoding(positions, pe.depth, pe.include_input);
            let d = tape.positional_encoding(directions, pe.depth, pe.include_input);
            tape.hcat(&[p, d])
        }
    }
}

/// ReLU between layers, linear output: n×F → n×1.
pub fn forward_on_tape(tape: &mut Tape, vars: &MlpVars, features: Var) -> Var {
    let mut h = features;
    let last = vars.layers.len() - 1;
    for (k, &(w, b)) in vars.layers.iter().enumerate() {
        h = tape.affine(h, w, b, k != last);
    }
    h
}

/// Uniform in `[−1/√fan_in, 1/√fan_in]` for weights and biases, layer by
/// layer, from a seeded ChaCha8 stream.
pub fn init_weights(seed: u64, encoding: Encoding) -> MlpWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_shapes(&encoding)
        .iter()
        .map(|&(fan_in, out)| {
            let bound = 1.0 / math::sqrt(fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weight = Tensor::new(fan_in, out, (0..fan_in * out).map(|_| dist.sample(&mut rng)).collect());
            let bias = Tensor::new(1, out, (0..out).map(|_| dist.sample(&mut rng)).collect());
            Linear { weight, bias }
        })
        .collect();
    MlpWeights { encoding, layers }
}

pub fn predict_energy(weights: &MlpWeights, sample: &TargetLocalSample) -> Result<f64, ModelError> {
    weights.predict(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(0.0, 2).unwrap(), [0.0, 1.0, 0.0, 1.0]);
        assert!(close(&encode(0.5, 1).unwrap(), &[1.0, 0.0], 1e-15));
        assert!(close(&encode(0.25, 2).unwrap(), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 1.0, 0.0], 1e-15));
        assert!(matches!(encode(1.0, 0), Err(ModelError::InvalidArgument(_))));
    }

    #[test]
    fn encode_sample_layout() {
        let enc = Encoding::sinusoidal(4).unwrap();
        let s = TargetLocalSample { position: [0.0; 3], direction: [1.0, 0.0, 0.0], energy: 0.0 };
        let f = encode_sample(&s, &enc);
        assert_eq!(f.len(), 48);
        for block in f[..24].chunks(8) {
            assert_eq!(block, encode(0.0, 4).unwrap().as_slice());
        }
        assert_eq!(&f[24..32], encode(1.0, 4).unwrap().as_slice());
    }

    #[test]
    fn permuting_position_permutes_blocks() {
        let enc = Encoding::sinusoidal(3).unwrap();
        let a = TargetLocalSample { position: [0.1, -0.2, 0.3], direction: [0.0, 0.0, 1.0], energy: 0.0 };
        let b = TargetLocalSample { position: [0.3, 0.1, -0.2], ..a };
        let fa = encode_sample(&a, &enc);
        let fb = encode_sample(&b, &enc);
        let w = 6;
        assert_eq!(&fa[0..w], &fb[w..2 * w]);
        assert_eq!(&fa[w..2 * w], &fb[2 * w..3 * w]);
        assert_eq!(&fa[2 * w..3 * w], &fb[0..w]);
        assert_eq!(&fa[3 * w..], &fb[3 * w..]);
    }

    #[test]
    fn include_input_prepends_value() {
        let pe = PositionalEncoding::new(2, true).unwrap();
        let t = crate::diff::positional_encoding_tensor(&Tensor::scalar(0.25), pe.depth, true);
        assert_eq!(t.len(), 5);
        assert_eq!(t.data()[0], 0.25);
        assert_eq!(Encoding::Sinusoidal(pe).input_dim(), 30);
    }

    #[test]
    fn zero_weights_predict_zero() {
        let w = MlpWeights::zeros(Encoding::sinusoidal(6).unwrap());
        let s = TargetLocalSample { position: [0.1, 0.2, -0.3], direction: [0.0, 1.0, 0.0], energy: 0.7 };
        assert_eq!(predict_energy(&w, &s).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut w = init_weights(1, Encoding::sinusoidal(2).unwrap());
        w.encoding = Encoding::sinusoidal(3).unwrap();
        let s = TargetLocalSample { position: [0.0; 3], direction: [1.0, 0.0, 0.0], energy: 0.0 };
        assert!(matches!(predict_energy(&w, &s), Err(ModelError::ShapeMismatch { layer: 0, .. })));
    }

    #[test]
    fn init_is_seeded() {
        let enc = Encoding::sinusoidal(6).unwrap();
        assert_eq!(init_weights(5, enc), init_weights(5, enc));
        assert_ne!(init_weights(5, enc), init_weights(6, enc));
        let w = init_weights(5, enc);
        assert_eq!(w.parameter_count(), 72 * 128 + 128 + 2 * (128 * 128 + 128) + 128 + 1);
        let bound = 1.0 / (72f64).sqrt();
        assert!(w.layers[0].weight.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_layer_mean_is_centered() {
        let w = init_weights(11, Encoding::sinusoidal(6).unwrap());
        let d = w.layers[1].weight.data();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        // uniform on [−b, b] has σ = b/√3
        let sigma = (1.0 / 128f64.sqrt()) / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn prediction_is_deterministic() {
        let enc = Encoding::sinusoidal(6).unwrap();
        let s = TargetLocalSample { position: [0.05, -0.1, 0.02], direction: [0.6, 0.8, 0.0], energy: 0.0 };
        let a = init_weights(3, enc).predict(&s).unwrap();
        let b = init_weights(3, enc).predict(&s).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn encoding_is_two_periodic() {
        for &x in &[-0.7, 0.0, 0.123, 0.55] {
            let a = encode(x, 6).unwrap();
            let b = encode(x + 2.0, 6).unwrap();
            assert!(close(&a, &b, 1e-12));
            assert!(a.iter().all(|v| v.abs() <= 1.0));
        }
        assert!((encode(1.0 / PI, 1).unwrap()[0] - 1f64.sin()).abs() < 1e-15);
    }
}
