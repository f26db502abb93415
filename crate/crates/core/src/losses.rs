//! Contrastive objectives and the predictive baseline.
//!
//! All losses are reduced by the mean over anchors. Logits always come from
//! the cosine critic, `z_a · z_b / τ`.

use crate::autodiff::{Tape, Var};
use crate::critic::{score, BoundMlp, Temperature};
use crate::error::{shape_err, Error, Result};

/// Anchors, their congruent partners and per-anchor negatives.
///
/// `anchor` and `positive` are `[n×d]`; row `i` of `positive` is the other
/// view of the sample behind anchor row `i`. `negatives` is `[n×k×d]` and
/// holds other samples' embeddings for each anchor.
#[derive(Clone, Copy, Debug)]
pub struct ContrastBatch<'t> {
    pub anchor: Var<'t>,
    pub positive: Var<'t>,
    pub negatives: Var<'t>,
    pub tau: Temperature,
}

impl<'t> ContrastBatch<'t> {
    pub fn new(anchor: Var<'t>, positive: Var<'t>, negatives: Var<'t>, tau: Temperature) -> Result<Self> {
        let (a, p, n) = (anchor.shape(), positive.shape(), negatives.shape());
        if a.len() != 2 || a != p {
            return Err(shape_err("ContrastBatch", format!("anchor {a:?} vs positive {p:?}")));
        }
        if n.len() != 3 || n[0] != a[0] || n[2] != a[1] {
            return Err(shape_err("ContrastBatch", format!("anchor {a:?} vs negatives {n:?}")));
        }
        Ok(Self {
            anchor,
            positive,
            negatives,
            tau,
        })
    }

    pub fn k(&self) -> usize {
        self.negatives.shape()[1]
    }
}

/// (k+1)-way classification of the positive among `pos_logits [n×1]` and
/// `neg_logits [n×k]`; the positive sits in column 0.
pub fn contrast_from_logits<'t>(pos_logits: Var<'t>, neg_logits: Var<'t>) -> Result<Var<'t>> {
    let (p, q) = (pos_logits.shape(), neg_logits.shape());
    if q.len() != 2 || q[1] == 0 {
        return Err(Error::Parameter("contrastive loss needs k ≥ 1 negatives".into()));
    }
    if p != [q[0], 1] {
        return Err(shape_err("contrast_from_logits", format!("positives {p:?} vs negatives {q:?}")));
    }
    let logits = Var::concat_cols(&[pos_logits, neg_logits])?;
    logits.log_softmax_nll(&vec![0; q[0]])
}

/// `-mean_i log( e^{s⁺_i} / (e^{s⁺_i} + Σ_j e^{s⁻_ij}) )`.
pub fn contrast_loss<'t>(batch: &ContrastBatch<'t>) -> Result<Var<'t>> {
    let inv = 1.0 / batch.tau.get();
    let pos = batch.anchor.row_dot(batch.positive)?.scale(inv);
    let neg = batch.anchor.batch_row_dot(batch.negatives)?.scale(inv);
    contrast_from_logits(pos, neg)
}

/// Contrast where each anchor's negatives are the other rows of
/// `positive` (k = n − 1). Gradients flow into the negatives too.
pub fn contrast_loss_in_batch<'t>(anchor: Var<'t>, positive: Var<'t>, tau: Temperature) -> Result<Var<'t>> {
    let n = anchor.shape()[0];
    if n < 2 {
        return Err(Error::Parameter("in-batch contrast needs at least two samples (k ≥ 1)".into()));
    }
    if anchor.shape() != positive.shape() {
        return Err(shape_err(
            "contrast_loss_in_batch",
            format!("{:?} vs {:?}", anchor.shape(), positive.shape()),
        ));
    }
    let targets: Vec<usize> = (0..n).collect();
    score(anchor, positive, tau)?.log_softmax_nll(&targets)
}

/// Where a two-view loss gets its negatives.
#[derive(Clone, Copy, Debug)]
pub enum Negatives<'t> {
    /// Other rows of the current batch.
    InBatch,
    /// `[n×k×d]` negatives from view 2 for view-1 anchors, and from view 1
    /// for view-2 anchors.
    Explicit { from_view2: Var<'t>, from_view1: Var<'t> },
}

/// `L(V1, V2) = L^{V1,V2} + L^{V2,V1}`.
pub fn symmetric_two_view_loss<'t>(
    z1: Var<'t>,
    z2: Var<'t>,
    negatives: Negatives<'t>,
    tau: Temperature,
) -> Result<Var<'t>> {
    match negatives {
        Negatives::InBatch => {
            contrast_loss_in_batch(z1, z2, tau)?.add(contrast_loss_in_batch(z2, z1, tau)?)
        }
        Negatives::Explicit {
            from_view2,
            from_view1,
        } => {
            let a = contrast_loss(&ContrastBatch::new(z1, z2, from_view2, tau)?)?;
            let b = contrast_loss(&ContrastBatch::new(z2, z1, from_view1, tau)?)?;
            a.add(b)
        }
    }
}

/// Settings of the NCE approximation with uniform noise over `n_data`
/// stored samples.
#[derive(Clone, Debug, PartialEq)]
pub struct NceConfig {
    /// Noise samples per data sample.
    pub m: usize,
    /// Dataset size N; the noise density is `1/N`.
    pub n_data: usize,
    /// Normalization constant `Z_0`.
    pub z0: Option<f64>,
    /// Estimate `Z_0` from the first batch seen when it is unset.
    pub set_z0_from_first_batch: bool,
}

impl NceConfig {
    pub fn new(m: usize, n_data: usize) -> Result<Self> {
        if m == 0 || n_data == 0 {
            return Err(Error::Parameter("NCE needs m ≥ 1 and N ≥ 1".into()));
        }
        Ok(Self {
            m,
            n_data,
            z0: None,
            set_z0_from_first_batch: true,
        })
    }

    /// `Z_0 = N · mean(h)` over every critic value in the batch.
    pub fn calibrate(&mut self, logits: &[f64]) -> Result<f64> {
        if logits.is_empty() {
            return Err(Error::Parameter("cannot estimate Z_0 from an empty batch".into()));
        }
        let mean_h = logits.iter().map(|s| s.exp()).sum::<f64>() / logits.len() as f64;
        let z0 = self.n_data as f64 * mean_h;
        if !(z0 > 0.0) || !z0.is_finite() {
            return Err(Error::NonFinite(format!("Z_0 estimate {z0}")));
        }
        self.z0 = Some(z0);
        Ok(z0)
    }
}

/// Binary data-vs-noise loss with `P(D=1|v) = (h/Z_0) / (h/Z_0 + m/N)`:
/// `-mean_i [ log P(D=1|data_i) + Σ_j log P(D=0|noise_ij) ]`.
///
/// `anchor`, `data` are `[n×d]`, `noise` is `[n×m×d]`. When `cfg.z0` is
/// unset and first-batch estimation is enabled, this call fixes it.
pub fn nce_loss<'t>(
    anchor: Var<'t>,
    data: Var<'t>,
    noise: Var<'t>,
    cfg: &mut NceConfig,
    tau: Temperature,
) -> Result<Var<'t>> {
    let ns = noise.shape();
    if ns.len() != 3 || ns[1] != cfg.m {
        return Err(shape_err("nce_loss", format!("noise {ns:?} for m = {}", cfg.m)));
    }
    let inv = 1.0 / tau.get();
    let s_data = anchor.row_dot(data)?.scale(inv);
    let s_noise = anchor.batch_row_dot(noise)?.scale(inv);
    let z0 = match cfg.z0 {
        Some(z) => z,
        None if cfg.set_z0_from_first_batch => {
            let mut all = s_data.value().data().to_vec();
            all.extend_from_slice(s_noise.value().data());
            cfg.calibrate(&all)?
        }
        None => {
            return Err(Error::Config(
                "NCE normalization constant Z_0 is unset and first-batch estimation is disabled".into(),
            ))
        }
    };
    // log of (h/Z0) / (m/N)
    let offset = (z0 * cfg.m as f64 / cfg.n_data as f64).ln();
    let a_data = s_data.shift(-offset);
    let a_noise = s_noise.shift(-offset);
    // -log P(D=1) = softplus(-a), -log P(D=0) = softplus(a)
    let n = ns[0] as f64;
    a_data
        .scale(-1.0)
        .softplus()
        .sum()
        .add(a_noise.softplus().sum())
        .map(|t| t.scale(1.0 / n))
}

/// Global-vs-local contrast: for each of the `g` positions, anchor `i`'s
/// global embedding must pick its own local feature among the `n` local
/// features at that position. Averaged over positions.
pub fn subpatch_contrast_loss<'t>(global: Var<'t>, local: Var<'t>, tau: Temperature) -> Result<Var<'t>> {
    let (gs, ls) = (global.shape(), local.shape());
    if ls.len() != 3 || ls[1] == 0 {
        return Err(shape_err("subpatch_contrast_loss", format!("local features {ls:?}")));
    }
    if gs.len() != 2 || gs[0] != ls[0] || gs[1] != ls[2] {
        return Err(shape_err("subpatch_contrast_loss", format!("global {gs:?} vs local {ls:?}")));
    }
    let g = ls[1];
    let mut total: Option<Var<'t>> = None;
    for p in 0..g {
        let lp = local.select_mid(p)?;
        let l = contrast_loss_in_batch(global, lp, tau)?;
        total = Some(match total {
            None => l,
            Some(t) => t.add(l)?,
        });
    }
    Ok(total.expect("g ≥ 1").scale(1.0 / g as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegressionNorm {
    L1,
    L2,
}

/// Mean elementwise `|pred − target|` or `(pred − target)²` where
/// `pred = decoder(features)`.
pub fn predictive_loss<'t>(
    features: Var<'t>,
    target: Var<'t>,
    decoder: &BoundMlp<'t>,
    norm: RegressionNorm,
) -> Result<Var<'t>> {
    let pred = decoder.forward(features)?;
    if pred.shape() != target.shape() {
        return Err(shape_err(
            "predictive_loss",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let diff = pred.sub(target)?;
    Ok(match norm {
        RegressionNorm::L1 => diff.abs().mean(),
        RegressionNorm::L2 => diff.square().mean(),
    })
}

/// Predictive baseline on raw views: `decoder(encoder(v1))` regresses `v2`.
pub fn predictive_loss_from_views<'t>(
    v1: Var<'t>,
    v2: Var<'t>,
    encoder: &BoundMlp<'t>,
    decoder: &BoundMlp<'t>,
    norm: RegressionNorm,
) -> Result<Var<'t>> {
    predictive_loss(encoder.encode(v1)?, v2, decoder, norm)
}

/// Convenience for code that only needs a loss value.
pub fn value_of(f: impl for<'t> FnOnce(&'t Tape) -> Result<Var<'t>>) -> Result<f64> {
    let tape = Tape::new();
    f(&tape)?.item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::Mlp;
    use crate::gradcheck::{finite_diff_check, FD_STEP};
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let mut data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        for row in data.chunks_mut(d) {
            let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= nrm);
        }
        Tensor::matrix(n, d, data).unwrap()
    }

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    /// Independent per-row evaluation of the (k+1)-way loss.
    fn row_loss(pos: f64, negs: &[f64]) -> f64 {
        let denom: f64 = pos.exp() + negs.iter().map(|s| s.exp()).sum::<f64>();
        -(pos.exp() / denom).ln()
    }

    fn dotp(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn uniform_logits_give_ln_k_plus_one() {
        for k in [1usize, 7, 63] {
            let tape = Tape::new();
            let e = Tensor::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
            let a = tape.constant(e.clone());
            let p = tape.constant(e);
            let negs = tape.constant(
                Tensor::new(vec![2, k, 2], [0.6, 0.8].repeat(2 * k)).unwrap(),
            );
            let l = contrast_loss(&ContrastBatch::new(a, p, negs, tau(0.07)).unwrap())
                .unwrap()
                .item()
                .unwrap();
            assert!((l - ((k + 1) as f64).ln()).abs() < 1e-10, "k={k}: {l}");
        }
    }

    #[test]
    fn perfect_match_saturates() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let negs = tape.constant(Tensor::new(vec![1, 1, 2], vec![-1.0, 0.0]).unwrap());
        let l = contrast_loss(&ContrastBatch::new(a, a, negs, tau(0.07)).unwrap())
            .unwrap()
            .item()
            .unwrap();
        assert!(l < 1e-10 && l >= 0.0, "{l}");
    }

    #[test]
    fn random_embeddings_near_uniform_at_init() {
        // With τ = 1 the logits of random 64-d unit vectors are nearly flat.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, k, d) = (16, 4096, 64);
        let tape = Tape::new();
        let a = tape.constant(unit_rows(n, d, &mut rng));
        let p = tape.constant(unit_rows(n, d, &mut rng));
        let negs = tape.constant(unit_rows(n * k, d, &mut rng).reshape(&[n, k, d]).unwrap());
        let l = contrast_loss(&ContrastBatch::new(a, p, negs, tau(1.0)).unwrap())
            .unwrap()
            .item()
            .unwrap();
        assert!((l - 4097f64.ln()).abs() < 0.1, "{l}");
    }

    #[test]
    fn zero_negatives_is_a_parameter_error() {
        let tape = Tape::new();
        let pos = tape.constant(Tensor::zeros(&[2, 1]));
        let neg = tape.constant(Tensor::zeros(&[2, 1]));
        // a [n×1] negatives tensor is fine, an in-batch contrast of one row is not
        assert!(contrast_from_logits(pos, neg).is_ok());
        let one = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        assert!(matches!(contrast_loss_in_batch(one, one, tau(0.1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn loss_decreases_as_positive_logit_rises() {
        let negs = [0.3, -0.2, 0.9];
        let mut prev = f64::INFINITY;
        for step in 0..20 {
            let s = -2.0 + 0.25 * step as f64;
            let l = value_of(|tape| {
                let p = tape.constant(Tensor::from_rows(&[[s]]).unwrap());
                let n = tape.constant(Tensor::from_rows(&[negs]).unwrap());
                contrast_from_logits(p, n)
            })
            .unwrap();
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
    }

    #[test]
    fn symmetric_loss_swap_and_doubling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z1 = unit_rows(6, 4, &mut rng);
        let z2 = unit_rows(6, 4, &mut rng);
        let t = tau(0.2);
        let ab = value_of(|tape| {
            symmetric_two_view_loss(tape.constant(z1.clone()), tape.constant(z2.clone()), Negatives::InBatch, t)
        })
        .unwrap();
        let ba = value_of(|tape| {
            symmetric_two_view_loss(tape.constant(z2.clone()), tape.constant(z1.clone()), Negatives::InBatch, t)
        })
        .unwrap();
        assert!((ab - ba).abs() < 1e-12);

        let same = value_of(|tape| {
            let z = tape.constant(z1.clone());
            symmetric_two_view_loss(z, z, Negatives::InBatch, t)
        })
        .unwrap();
        let one_dir = value_of(|tape| {
            let z = tape.constant(z1.clone());
            contrast_loss_in_batch(z, z, t)
        })
        .unwrap();
        assert!((same - 2.0 * one_dir).abs() < 1e-12);
    }

    #[test]
    fn symmetric_loss_matches_six_row_terms() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z1 = [[1.0, 0.0], [0.0, 1.0], [s, s]];
        let z2 = [[0.6, 0.8], [-0.8, 0.6], [1.0, 0.0]];
        let t = 0.5;
        let mut expected = 0.0;
        for (anchors, cands) in [(&z1, &z2), (&z2, &z1)] {
            let mut dir = 0.0;
            for i in 0..3 {
                let pos = dotp(&anchors[i], &cands[i]) / t;
                let negs: Vec<f64> = (0..3)
                    .filter(|&j| j != i)
                    .map(|j| dotp(&anchors[i], &cands[j]) / t)
                    .collect();
                dir += row_loss(pos, &negs);
            }
            expected += dir / 3.0;
        }
        let got = value_of(|tape| {
            symmetric_two_view_loss(
                tape.constant(Tensor::from_rows(&z1).unwrap()),
                tape.constant(Tensor::from_rows(&z2).unwrap()),
                Negatives::InBatch,
                tau(t),
            )
        })
        .unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    /// Independent evaluation of the NCE posterior and objective.
    fn nce_oracle(h_data: &[f64], h_noise: &[Vec<f64>], z0: f64, m: usize, n_data: usize) -> f64 {
        let pn = 1.0 / n_data as f64;
        let p1 = |h: f64| (h / z0) / (h / z0 + m as f64 * pn);
        let mut total = 0.0;
        for (hd, hn) in h_data.iter().zip(h_noise) {
            total -= p1(*hd).ln();
            for h in hn {
                total -= (1.0 - p1(*h)).ln();
            }
        }
        total / h_data.len() as f64
    }

    /// Builds unit embeddings whose logits with the anchor `[1,0]` are the
    /// requested values (|s|·τ ≤ 1).
    fn rows_with_logits(logits: &[f64], t: f64) -> Vec<f64> {
        logits
            .iter()
            .flat_map(|s| {
                let c = s * t;
                [c, (1.0 - c * c).sqrt()]
            })
            .collect()
    }

    #[test]
    fn nce_matches_hand_evaluation() {
        let t = 0.5;
        let (m, n_data) = (2, 10);
        let data_logits = [1.2, -0.4, 0.3];
        let noise_logits = [vec![0.1, -1.5], vec![1.9, 0.0], vec![-0.7, 0.6]];
        let z0 = 3.7;
        let mut cfg = NceConfig::new(m, n_data).unwrap();
        cfg.z0 = Some(z0);
        let got = value_of(|tape| {
            let anchor = tape.constant(Tensor::matrix(3, 2, [1.0, 0.0].repeat(3)).unwrap());
            let data = tape.constant(Tensor::matrix(3, 2, rows_with_logits(&data_logits, t)).unwrap());
            let flat: Vec<f64> = noise_logits.iter().flatten().copied().collect();
            let noise = tape.constant(Tensor::new(vec![3, 2, 2], rows_with_logits(&flat, t)).unwrap());
            nce_loss(anchor, data, noise, &mut cfg, tau(t))
        })
        .unwrap();
        let hd: Vec<f64> = data_logits.iter().map(|s: &f64| s.exp()).collect();
        let hn: Vec<Vec<f64>> = noise_logits.iter().map(|r| r.iter().map(|s| s.exp()).collect()).collect();
        let expected = nce_oracle(&hd, &hn, z0, m, n_data);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn nce_decision_boundary_and_saturation() {
        // h/Z0 = m/N  =>  P(D=1|data) = 1/2, so the data term is ln 2.
        let (m, n_data) = (4, 100);
        let s: f64 = 0.3;
        let z0 = s.exp() * n_data as f64 / m as f64;
        let mut cfg = NceConfig::new(m, n_data).unwrap();
        cfg.z0 = Some(z0);
        let tape = Tape::new();
        let anchor = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let data = tape.constant(Tensor::matrix(1, 2, rows_with_logits(&[s], 1.0)).unwrap());
        let noise = tape.constant(Tensor::new(vec![1, 4, 2], [-1.0, 0.0].repeat(4)).unwrap());
        let l = nce_loss(anchor, data, noise, &mut cfg, tau(1.0)).unwrap().item().unwrap();
        let p1 = |h: f64| (h / z0) / (h / z0 + m as f64 / n_data as f64);
        let noise_term = -4.0 * (1.0 - p1((-1.0f64).exp())).ln();
        assert!((l - noise_term - 2f64.ln()).abs() < 1e-12);

        // Saturation: data aligned, noise antipodal, tiny τ.
        let mut cfg = NceConfig::new(m, n_data).unwrap();
        cfg.z0 = Some(1.0);
        let sat = nce_loss(anchor, anchor, noise, &mut cfg, tau(0.01)).unwrap().item().unwrap();
        assert!(sat < 1e-10, "{sat}");
    }

    #[test]
    fn nce_requires_z0_or_calibration() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let noise = tape.constant(Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap());
        let mut cfg = NceConfig::new(1, 10).unwrap();
        cfg.set_z0_from_first_batch = false;
        assert!(matches!(nce_loss(a, a, noise, &mut cfg, tau(0.5)), Err(Error::Config(_))));
        cfg.set_z0_from_first_batch = true;
        nce_loss(a, a, noise, &mut cfg, tau(0.5)).unwrap();
        // Z0 = N · mean(e^{2}, e^{0})
        let expected = 10.0 * (2f64.exp() + 1.0) / 2.0;
        assert!((cfg.z0.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn subpatch_single_location_is_in_batch_contrast() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = unit_rows(5, 3, &mut rng);
        let l = unit_rows(5, 3, &mut rng);
        let t = tau(0.3);
        let a = value_of(|tape| {
            subpatch_contrast_loss(
                tape.constant(g.clone()),
                tape.constant(l.clone().reshape(&[5, 1, 3]).unwrap()),
                t,
            )
        })
        .unwrap();
        let b = value_of(|tape| contrast_loss_in_batch(tape.constant(g.clone()), tape.constant(l.clone()), t)).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn subpatch_brute_force_and_uniform() {
        let t = 0.4;
        let global = [[1.0, 0.0], [0.0, 1.0]];
        // local[i][p]
        let local = [[[0.6, 0.8], [1.0, 0.0]], [[0.0, -1.0], [-0.6, 0.8]]];
        let mut expected = 0.0;
        for p in 0..2 {
            for i in 0..2 {
                let logits: Vec<f64> = (0..2).map(|j| dotp(&global[i], &local[j][p]) / t).collect();
                let negs: Vec<f64> = (0..2).filter(|&j| j != i).map(|j| logits[j]).collect();
                expected += row_loss(logits[i], &negs);
            }
        }
        expected /= 4.0;
        let flat: Vec<f64> = local.iter().flatten().flatten().copied().collect();
        let got = value_of(|tape| {
            subpatch_contrast_loss(
                tape.constant(Tensor::from_rows(&global).unwrap()),
                tape.constant(Tensor::new(vec![2, 2, 2], flat.clone()).unwrap()),
                tau(t),
            )
        })
        .unwrap();
        assert!((got - expected).abs() < 1e-12);

        let uni = value_of(|tape| {
            subpatch_contrast_loss(
                tape.constant(Tensor::matrix(4, 2, [1.0, 0.0].repeat(4)).unwrap()),
                tape.constant(Tensor::new(vec![4, 3, 2], [1.0, 0.0].repeat(12)).unwrap()),
                tau(0.07),
            )
        })
        .unwrap();
        assert!((uni - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn subpatch_shape_errors() {
        let tape = Tape::new();
        let g = tape.constant(Tensor::zeros(&[2, 3]));
        let l = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(subpatch_contrast_loss(g, l, tau(0.1)), Err(Error::Shape { .. })));
    }

    #[test]
    fn predictive_examples() {
        let tape = Tape::new();
        let dec = Mlp::from_parts("dec", vec![Tensor::identity(2)], vec![Tensor::zeros(&[2])])
            .unwrap()
            .bind(&tape, false);
        let x = tape.constant(Tensor::from_rows(&[[0.5, -1.0], [2.0, 3.0]]).unwrap());
        for norm in [RegressionNorm::L1, RegressionNorm::L2] {
            assert_eq!(predictive_loss(x, x, &dec, norm).unwrap().item().unwrap(), 0.0);
        }
        let zero = Mlp::from_parts("dec", vec![Tensor::zeros(&[2, 2])], vec![Tensor::zeros(&[2])])
            .unwrap()
            .bind(&tape, false);
        let ones = tape.constant(Tensor::filled(&[2, 2], 1.0));
        for norm in [RegressionNorm::L1, RegressionNorm::L2] {
            assert_eq!(predictive_loss(x, ones, &zero, norm).unwrap().item().unwrap(), 1.0);
        }
        let wrong = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(predictive_loss(x, wrong, &dec, RegressionNorm::L2).is_err());
    }

    #[test]
    fn predictive_ols_residual_variance() {
        use crate::views::{gen_gaussian_views, SyntheticGaussianSpec};
        let rho = 0.8;
        let d = gen_gaussian_views(&SyntheticGaussianSpec {
            dim: 1,
            rho,
            n_samples: 10_000,
            seed: 21,
        })
        .unwrap();
        let x = d.view("x").unwrap().clone();
        let y = d.view("y").unwrap().clone();
        let n = x.len() as f64;
        let (mx, my) = (x.data().iter().sum::<f64>() / n, y.data().iter().sum::<f64>() / n);
        let sxy: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.data().iter().map(|a| (a - mx).powi(2)).sum();
        let w = sxy / sxx;
        let b = my - w * mx;
        let tape = Tape::new();
        let dec = Mlp::from_parts("dec", vec![Tensor::matrix(1, 1, vec![w]).unwrap()], vec![Tensor::vector(vec![b]).unwrap()])
            .unwrap()
            .bind(&tape, false);
        let l = predictive_loss(tape.constant(x), tape.constant(y), &dec, RegressionNorm::L2)
            .unwrap()
            .item()
            .unwrap();
        let target = 1.0 - rho * rho;
        assert!((l - target).abs() / target < 0.05, "{l} vs {target}");
    }

    #[test]
    fn losses_pass_gradient_checks() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, k, d) = (4, 3, 5);
            let raw = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
                (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let a = Tensor::matrix(n, d, raw(&mut rng, n * d)).unwrap();
            let p = Tensor::matrix(n, d, raw(&mut rng, n * d)).unwrap();
            let negs = Tensor::new(vec![n, k, d], raw(&mut rng, n * k * d)).unwrap();
            let t = tau(0.5);

            let err = finite_diff_check(
                |tape, x| {
                    let z = x.l2_normalize()?;
                    let pz = tape.constant(p.clone()).l2_normalize()?;
                    let nz = tape.constant(negs.clone());
                    contrast_loss(&ContrastBatch::new(z, pz, nz, t)?)
                },
                &a,
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-4, "contrast seed {seed}: {err}");

            let err = finite_diff_check(
                |tape, x| {
                    let z1 = tape.constant(a.clone()).l2_normalize()?;
                    symmetric_two_view_loss(z1, x.l2_normalize()?, Negatives::InBatch, t)
                },
                &p,
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-4, "symmetric seed {seed}: {err}");

            let err = finite_diff_check(
                |tape, x| {
                    let mut cfg = NceConfig::new(k, 50).unwrap();
                    cfg.z0 = Some(40.0);
                    nce_loss(tape.constant(a.clone()), tape.constant(p.clone()), x, &mut cfg, t)
                },
                &negs,
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-4, "nce seed {seed}: {err}");

            let err = finite_diff_check(
                |tape, x| subpatch_contrast_loss(x.l2_normalize()?, tape.constant(negs.clone()), t),
                &Tensor::matrix(n, d, raw(&mut rng, n * d)).unwrap(),
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-4, "subpatch seed {seed}: {err}");

            let dec = Mlp::new("dec", &[d, 3], seed).unwrap();
            let target = Tensor::matrix(n, 3, raw(&mut rng, n * 3)).unwrap();
            let err = finite_diff_check(
                |tape, x| {
                    let bd = dec.bind(tape, false);
                    predictive_loss(x, tape.constant(target.clone()), &bd, RegressionNorm::L2)
                },
                &a,
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-4, "predictive seed {seed}: {err}");
        }
    }

    #[test]
    fn negative_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (n, k, d) = (3, 6, 4);
        let a = unit_rows(n, d, &mut rng);
        let p = unit_rows(n, d, &mut rng);
        let negs = unit_rows(n * k, d, &mut rng);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.reverse();
        perm.swap(0, 3);
        let mut shuffled = Vec::with_capacity(negs.len());
        for i in 0..n {
            for &j in &perm {
                shuffled.extend_from_slice(negs.row(i * k + j));
            }
        }
        let eval = |negs: Vec<f64>| {
            value_of(|tape| {
                contrast_loss(&ContrastBatch::new(
                    tape.constant(a.clone()),
                    tape.constant(p.clone()),
                    tape.constant(Tensor::new(vec![n, k, d], negs).unwrap()),
                    tau(0.07),
                )?)
            })
            .unwrap()
        };
        assert!((eval(negs.data().to_vec()) - eval(shuffled.clone())).abs() < 1e-12);
        let nce = |negs: Vec<f64>| {
            value_of(|tape| {
                let mut cfg = NceConfig::new(k, 100).unwrap();
                cfg.z0 = Some(80.0);
                nce_loss(
                    tape.constant(a.clone()),
                    tape.constant(p.clone()),
                    tape.constant(Tensor::new(vec![n, k, d], negs).unwrap()),
                    &mut cfg,
                    tau(0.07),
                )
            })
            .unwrap()
        };
        assert!((nce(negs.data().to_vec()) - nce(shuffled)).abs() < 1e-12);
    }
}
