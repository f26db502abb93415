//! Linear evaluation of frozen features.
//!
//! Multinomial logistic regression on standardized features, trained by
//! deterministic full-batch gradient descent with heavy-ball momentum.

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    pub momentum: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            max_iters: 1500,
            grad_tol: 1e-5,
            l2: 1e-4,
            momentum: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub tag: String,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Test accuracy per class; NaN for a class absent from the test split.
    pub per_class: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    /// Standardized rows with a trailing constant 1 column.
    fn apply(&self, x: &Tensor) -> Vec<Vec<f64>> {
        (0..x.rows())
            .map(|i| {
                let mut r: Vec<f64> = x
                    .row(i)
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) * s)
                    .collect();
                r.push(1.0);
                r
            })
            .collect()
    }
}

fn largest_gram_eigenvalue(x: &[Vec<f64>]) -> f64 {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 1.0;
    for _ in 0..50 {
        let mut w = vec![0.0; d];
        for r in x {
            let s = dot(r, &v);
            w.iter_mut().zip(r).for_each(|(wi, ri)| *wi += s * ri / n);
        }
        lambda = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if lambda <= 0.0 {
            return 1.0;
        }
        v = w.into_iter().map(|a| a / lambda).collect();
    }
    lambda
}

fn predict(w: &[Vec<f64>], r: &[f64]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (c, wc) in w.iter().enumerate() {
        let s = dot(wc, r);
        if s > best_s {
            best_s = s;
            best = c;
        }
    }
    best
}

fn check(x: &Tensor, y: &[usize], what: &str) -> Result<()> {
    if x.ndim() != 2 || x.rows() != y.len() {
        return Err(crate::error::shape_err(
            "linear_probe",
            format!("{what} features {:?} for {} labels", x.shape(), y.len()),
        ));
    }
    Ok(())
}

/// Fits on `(train_x, train_y)` and reports accuracy on both splits.
pub fn linear_probe(
    tag: &str,
    train_x: &Tensor,
    train_y: &[usize],
    test_x: &Tensor,
    test_y: &[usize],
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    check(train_x, train_y, "train")?;
    check(test_x, test_y, "test")?;
    if train_x.cols() != test_x.cols() {
        return Err(crate::error::shape_err("linear_probe", "train and test widths differ".to_string()));
    }
    let n_classes = train_y.iter().chain(test_y).max().map_or(0, |m| m + 1);
    let first = train_y[0];
    if train_y.iter().all(|&c| c == first) {
        return Err(Error::DegenerateLabels(format!(
            "all {} training labels are class {first}",
            train_y.len()
        )));
    }
    let std = Standardizer::fit(train_x);
    let xs = std.apply(train_x);
    let d = xs[0].len();
    let n = xs.len() as f64;
    let lr = 1.0 / (0.5 * largest_gram_eigenvalue(&xs) + cfg.l2);

    let mut w = vec![vec![0.0; d]; n_classes];
    let mut vel = vec![vec![0.0; d]; n_classes];
    let mut grad = vec![vec![0.0; d]; n_classes];
    let mut probs = vec![0.0; n_classes];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for (r, &y) in xs.iter().zip(train_y) {
            let mut max = f64::NEG_INFINITY;
            for (p, wc) in probs.iter_mut().zip(&w) {
                *p = dot(wc, r);
                max = max.max(*p);
            }
            let mut z = 0.0;
            probs.iter_mut().for_each(|p| {
                *p = (*p - max).exp();
                z += *p;
            });
            for (c, g) in grad.iter_mut().enumerate() {
                let coef = (probs[c] / z - f64::from(u8::from(c == y))) / n;
                g.iter_mut().zip(r).for_each(|(gi, ri)| *gi += coef * ri);
            }
        }
        let mut norm2 = 0.0;
        for (g, wc) in grad.iter_mut().zip(&w) {
            for j in 0..d - 1 {
                g[j] += cfg.l2 * wc[j];
            }
            norm2 += g.iter().map(|v| v * v).sum::<f64>();
        }
        if norm2.sqrt() < cfg.grad_tol {
            converged = true;
            break;
        }
        for ((wc, vc), g) in w.iter_mut().zip(&mut vel).zip(&grad) {
            for ((wi, vi), gi) in wc.iter_mut().zip(vc.iter_mut()).zip(g) {
                *vi = cfg.momentum * *vi - lr * gi;
                *wi += *vi;
            }
        }
        iterations += 1;
    }

    let accuracy = |rows: &[Vec<f64>], labels: &[usize]| {
        rows.iter().zip(labels).filter(|(r, &y)| predict(&w, r) == y).count() as f64 / labels.len().max(1) as f64
    };
    let test_rows = std.apply(test_x);
    let mut hits = vec![0usize; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (r, &y) in test_rows.iter().zip(test_y) {
        counts[y] += 1;
        hits[y] += usize::from(predict(&w, r) == y);
    }
    Ok(ProbeResult {
        tag: tag.to_string(),
        train_acc: accuracy(&xs, train_y),
        test_acc: accuracy(&test_rows, test_y),
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| if c == 0 { f64::NAN } else { h as f64 / c as f64 })
            .collect(),
        iterations,
        converged,
    })
}

/// Probe with the first `train_fraction` of rows as the training split.
pub fn linear_probe_split(
    tag: &str,
    features: &Tensor,
    labels: &[usize],
    train_fraction: f64,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    check(features, labels, "all")?;
    let n = labels.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if !(0.0..1.0).contains(&train_fraction) || n_train == 0 || n_train == n {
        return Err(Error::Parameter(format!(
            "train fraction {train_fraction} leaves an empty split of {n} rows"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n).collect();
    linear_probe(
        tag,
        &features.gather_rows(&train)?,
        &labels[..n_train],
        &features.gather_rows(&test)?,
        &labels[n_train..],
        cfg,
    )
}
