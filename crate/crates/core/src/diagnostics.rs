//! Bound and critic diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::critic::Temperature;
use crate::error::{Error, Result};
use crate::train::Model;
use crate::views::{gaussian_log_density_ratio, gen_gaussian_views, SyntheticGaussianSpec};

/// `ln k − loss`: lower bound on the mutual information between the two
/// embeddings given a `(k+1)`-way contrast loss.
pub fn mi_lower_bound(loss: f64, k: usize) -> f64 {
    (k as f64).ln() - loss
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter(format!(
            "pearson needs two equal series of length ≥ 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Parameter("pearson of a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRatioReport {
    pub n_eval: usize,
    /// Correlation over the evaluation pairs: half drawn jointly, half with
    /// `y` shuffled (product of marginals).
    pub pearson: f64,
    /// Correlation over the joint half only.
    pub pearson_joint: f64,
    /// `(log h, analytic log ratio)` per evaluation pair.
    pub pairs: Vec<(f64, f64)>,
}

/// Compares the critic's log score `z_x·z_y/τ` with the closed-form
/// Gaussian log density ratio on `n_eval` fresh pairs drawn from `spec`
/// (its `n_samples` is replaced by `n_eval`).
pub fn density_ratio_diagnostic(
    model: &Model,
    spec: &SyntheticGaussianSpec,
    n_eval: usize,
    tau: Temperature,
) -> Result<DensityRatioReport> {
    if n_eval < 4 {
        return Err(Error::Parameter("need at least 4 evaluation pairs".into()));
    }
    let eval = gen_gaussian_views(&SyntheticGaussianSpec {
        n_samples: n_eval,
        ..spec.clone()
    })?;
    let x = eval.view("x")?;
    let y = eval.view("y")?;
    let half = n_eval / 2;
    let mut partner: Vec<usize> = (0..n_eval).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xd1a6);
    partner[half..].shuffle(&mut rng);
    let y_paired = y.gather_rows(&partner)?;
    let zx = model.embed("x", x)?;
    let zy = model.embed("y", &y_paired)?;
    let mut pairs = Vec::with_capacity(n_eval);
    for i in 0..n_eval {
        let logit = crate::tensor::dot(zx.row(i), zy.row(i)) / tau.get();
        let truth: f64 = x
            .row(i)
            .iter()
            .zip(y_paired.row(i))
            .map(|(a, b)| gaussian_log_density_ratio(*a, *b, spec.rho))
            .sum();
        pairs.push((logit, truth));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let pearson_all = pearson(&a, &b)?;
    let pearson_joint = pearson(&a[..half], &b[..half])?;
    Ok(DensityRatioReport {
        n_eval,
        pearson: pearson_all,
        pearson_joint,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_examples() {
        assert!((mi_lower_bound(64f64.ln(), 63) + 0.015_748).abs() < 1e-5);
        assert!((mi_lower_bound(0.0, 4096) - 8.317_766).abs() < 1e-5);
        assert!((mi_lower_bound(2f64.ln(), 1) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        let ys: Vec<f64> = xs.iter().map(|x| -3.0 * x + 2.0).collect();
        assert!((pearson(&xs, &ys).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&xs, &[1.0; 4]).is_err());
        assert!(pearson(&xs, &xs[..3]).is_err());
    }

    #[test]
    fn untrained_critic_is_uninformative() {
        use crate::train::{Model, TrainConfig};
        let spec = SyntheticGaussianSpec {
            dim: 1,
            rho: 0.9,
            n_samples: 10,
            seed: 8,
        };
        let data = gen_gaussian_views(&spec).unwrap();
        let cfg = TrainConfig {
            embed_dim: 8,
            hidden: vec![32],
            ..TrainConfig::default()
        };
        let model = Model::new(&data, &cfg).unwrap();
        let r = density_ratio_diagnostic(&model, &spec, 2000, Temperature::default()).unwrap();
        // reported baseline only
        assert!(r.pearson.is_finite());
        assert_eq!(r.pairs.len(), 2000);
    }
}
