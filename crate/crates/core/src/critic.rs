//! Per-view encoders and the temperature-scaled cosine critic.
//!
//! Each view gets its own MLP ([`Mlp`]) with ReLU between layers; encoding
//! l2-normalizes the last layer so the critic logit
//! `z1·z2 / τ` is a cosine similarity scaled by `1/τ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Default critic temperature.
pub const DEFAULT_TAU: f64 = 0.07;
/// Default embedding width at desk scale.
pub const DEFAULT_EMBED_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(DEFAULT_TAU)
    }
}

/// A fully connected network `sizes[0] → … → sizes[last]` with ReLU between
/// layers and none after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    name: String,
    sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Weights uniform in `±1/√fan_in`, biases likewise.
    pub fn new(name: impl Into<String>, sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!(
                "layer sizes need at least input and output widths > 0, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let wt: Vec<f64> = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect();
            let bt: Vec<f64> = (0..w[1]).map(|_| rng.random_range(-bound..bound)).collect();
            weights.push(Tensor::matrix(w[0], w[1], wt)?);
            biases.push(Tensor::vector(bt)?);
        }
        Ok(Self {
            name: name.into(),
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds from explicit `[in×out]` weights and `[out]` biases.
    pub fn from_parts(name: impl Into<String>, weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Parameter("need one bias per weight matrix".into()));
        }
        let mut sizes = vec![weights[0].shape()[0]];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ndim() != 2 || w.shape()[0] != *sizes.last().expect("non-empty") {
                return Err(shape_err("Mlp::from_parts", format!("weight {:?} after width {sizes:?}", w.shape())));
            }
            if b.len() != w.shape()[1] {
                return Err(shape_err("Mlp::from_parts", format!("bias {:?} for weight {:?}", b.shape(), w.shape())));
            }
            sizes.push(w.shape()[1]);
        }
        Ok(Self {
            name: name.into(),
            sizes,
            weights,
            biases,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Parameters in a fixed order: w0, b0, w1, b1, …
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Puts the parameters on `tape`, tracked when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundMlp<'t> {
        let put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundMlp {
            weights: self.weights.iter().map(put).collect(),
            biases: self.biases.iter().map(put).collect(),
            input_dim: self.sizes[0],
        }
    }

    /// Untracked forward pass (no normalization).
    pub fn forward_value(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let b = self.bind(&tape, false);
        let out = b.forward(tape.constant(x.clone()))?;
        Ok(out.value().as_ref().clone())
    }

    /// Untracked encode: forward pass followed by row l2-normalization.
    pub fn encode_value(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let b = self.bind(&tape, false);
        let out = b.encode(tape.constant(x.clone()))?;
        Ok(out.value().as_ref().clone())
    }

    /// Named tensors for a checkpoint: `{prefix}{name}/w{i}`, `…/b{i}`.
    pub fn checkpoint_entries(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("{prefix}{}/w{i}", self.name), w.clone()));
            out.push((format!("{prefix}{}/b{i}", self.name), b.clone()));
        }
        out
    }

    /// Rebuilds the MLP called `name` from checkpoint entries.
    pub fn from_checkpoint(entries: &[(String, Tensor)], prefix: &str, name: &str) -> Result<Self> {
        let find = |key: String| entries.iter().find(|(k, _)| *k == key).map(|(_, t)| t.clone());
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0.. {
            match (find(format!("{prefix}{name}/w{i}")), find(format!("{prefix}{name}/b{i}"))) {
                (Some(w), Some(b)) => {
                    weights.push(w);
                    biases.push(b);
                }
                (None, None) => break,
                _ => return Err(Error::Format(format!("layer {i} of {name:?} is incomplete"))),
            }
        }
        if weights.is_empty() {
            return Err(Error::Format(format!("checkpoint has no network {prefix}{name}")));
        }
        Self::from_parts(name, weights, biases)
    }
}

/// An [`Mlp`] whose parameters live on a tape.
pub struct BoundMlp<'t> {
    weights: Vec<Var<'t>>,
    biases: Vec<Var<'t>>,
    input_dim: usize,
}

impl<'t> BoundMlp<'t> {
    /// Parameter handles in the same order as [`Mlp::params`].
    pub fn params(&self) -> Vec<Var<'t>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
            .collect()
    }

    /// Output of the last layer, before normalization.
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(shape_err(
                "encode",
                format!("input {shape:?} for an encoder expecting width {}", self.input_dim),
            ));
        }
        let last = self.weights.len() - 1;
        let mut h = x;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(*w)?.add_row_bias(*b)?;
            if i < last {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Unit-norm embedding rows.
    pub fn encode(&self, x: Var<'t>) -> Result<Var<'t>> {
        self.forward(x)?.l2_normalize()
    }
}

/// Logits `z1 · z2ᵀ / τ` for unit-norm rows: `[n×d], [m×d] → [n×m]`.
pub fn score<'t>(z1: Var<'t>, z2: Var<'t>, tau: Temperature) -> Result<Var<'t>> {
    let (a, b) = (z1.shape(), z2.shape());
    if a.len() != 2 || b.len() != 2 || a[1] != b[1] {
        return Err(shape_err("score", format!("{a:?} vs {b:?}")));
    }
    Ok(z1.matmul(z2.transpose()?)?.scale(1.0 / tau.get()))
}

/// Untracked [`score`].
pub fn score_values(z1: &Tensor, z2: &Tensor, tau: Temperature) -> Result<Tensor> {
    let tape = Tape::new();
    let s = score(tape.constant(z1.clone()), tape.constant(z2.clone()), tau)?;
    Ok(s.value().as_ref().clone())
}

/// The critic value `h = exp(logit)` for density-ratio diagnostics.
pub fn critic_value(logit: f64) -> f64 {
    logit.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_check, FD_STEP};

    #[test]
    fn identity_encoder_passes_unit_vectors() {
        let enc = Mlp::from_parts("x", vec![Tensor::identity(3)], vec![Tensor::zeros(&[3])]).unwrap();
        let e = Tensor::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(enc.encode_value(&e).unwrap(), e);
    }

    #[test]
    fn encoded_rows_are_unit_norm() {
        let enc = Mlp::new("x", &[5, 16, 8], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::matrix(20, 5, (0..100).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let z = enc.encode_value(&x).unwrap();
        for i in 0..20 {
            assert!((z.row_norm(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let enc = Mlp::new("x", &[5, 8], 3).unwrap();
        assert!(matches!(enc.encode_value(&Tensor::zeros(&[2, 4])), Err(Error::Shape { .. })));
    }

    #[test]
    fn encode_gradient_wrt_weights() {
        for seed in 0..3 {
            let enc = Mlp::new("x", &[4, 6, 3], seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let probe = Tensor::matrix(5, 3, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            for layer in 0..enc.n_layers() {
                let w = enc.weights[layer].clone();
                let err = finite_diff_check(
                    |tape, wv| {
                        let mut h = tape.constant(x.clone());
                        for i in 0..enc.n_layers() {
                            let wi = if i == layer { wv } else { tape.constant(enc.weights[i].clone()) };
                            h = h.matmul(wi)?.add_row_bias(tape.constant(enc.biases[i].clone()))?;
                            if i + 1 < enc.n_layers() {
                                h = h.relu();
                            }
                        }
                        Ok(h.l2_normalize()?.mul(tape.constant(probe.clone()))?.sum())
                    },
                    &w,
                    FD_STEP,
                )
                .unwrap();
                assert!(err < 1e-4, "seed {seed} layer {layer}: {err}");
            }
        }
    }

    #[test]
    fn score_examples() {
        let tau = Temperature::new(0.07).unwrap();
        let z = Tensor::from_rows(&[[0.6, 0.8]]).unwrap();
        let s = score_values(&z, &z, tau).unwrap();
        assert!((s.data()[0] - 1.0 / 0.07).abs() < 1e-12);
        assert!((s.data()[0] - 14.2857).abs() < 1e-4);

        let a = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[[0.0, 1.0]]).unwrap();
        let s = score_values(&a, &b, tau).unwrap();
        assert_eq!(s.data()[0], 0.0);
        assert_eq!(critic_value(s.data()[0]), 1.0);

        let c = Tensor::from_rows(&[[-1.0, 0.0]]).unwrap();
        let s = score_values(&a, &c, Temperature::new(0.5).unwrap()).unwrap();
        assert_eq!(s.data()[0], -2.0);
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::default().get(), 0.07);
    }

    #[test]
    fn checkpoint_entries_round_trip() {
        let enc = Mlp::new("L", &[3, 4, 2], 9).unwrap();
        let entries = enc.checkpoint_entries("encoder/");
        assert_eq!(entries[0].0, "encoder/L/w0");
        let back = Mlp::from_checkpoint(&entries, "encoder/", "L").unwrap();
        assert_eq!(back, enc);
        assert!(Mlp::from_checkpoint(&entries, "encoder/", "ab").is_err());
    }
}
