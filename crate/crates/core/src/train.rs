//! SGD training of per-view encoders.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::critic::{Mlp, Temperature, DEFAULT_EMBED_DIM, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::losses::{nce_loss, predictive_loss, subpatch_contrast_loss, NceConfig, Negatives, RegressionNorm};
use crate::memory_bank::{MemoryBank, DEFAULT_BANK_MOMENTUM};
use crate::multiview::{multiview_loss, ViewGraph};
use crate::tensor::Tensor;
use crate::views::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` at each milestone epoch.
    Step { milestones: Vec<usize>, factor: f64 },
    /// Half-cosine from `lr` at epoch 0 towards 0 at the final epoch.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Step { milestones, factor } => {
                base * factor.powi(milestones.iter().filter(|&&m| epoch >= m).count() as i32)
            }
            Self::Cosine => {
                base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxK1,
    Nce,
    Subpatch,
    /// Regress the second view of each pair from the first view's embedding.
    Predictive(RegressionNorm),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSource {
    /// The other `batch_size − 1` rows of the batch.
    InBatch,
    /// `k` rows drawn from a memory bank.
    Bank(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub negatives: NegativeSource,
    pub loss_kind: LossKind,
    pub bank_momentum: f64,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    /// Input chunks seen by the local head of the sub-patch objective.
    pub local_chunks: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            lr: 0.03,
            lr_schedule: LrSchedule::Cosine,
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            tau: DEFAULT_TAU,
            negatives: NegativeSource::InBatch,
            loss_kind: LossKind::SoftmaxK1,
            bank_momentum: DEFAULT_BANK_MOMENTUM,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden: vec![64],
            local_chunks: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size < 2 {
            return bad(format!(
                "epochs must be ≥ 1 and batch_size ≥ 2 (got {} and {})",
                self.epochs, self.batch_size
            ));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be a finite value ≥ 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) || !(self.weight_decay >= 0.0) {
            return bad("sgd_momentum must be in [0,1) and weight_decay ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&self.bank_momentum) {
            return bad(format!("bank_momentum {} outside [0,1]", self.bank_momentum));
        }
        Temperature::new(self.tau).map_err(|e| Error::Config(e.to_string()))?;
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if let LrSchedule::Step { milestones, factor } = &self.lr_schedule {
            if milestones.windows(2).any(|w| w[0] >= w[1]) || !(*factor > 0.0) {
                return bad("step milestones must increase and factor be positive".into());
            }
        }
        match (self.loss_kind, self.negatives) {
            (_, NegativeSource::Bank(0)) => bad("bank negatives need k ≥ 1".into()),
            (LossKind::Nce, NegativeSource::InBatch) => bad("the NCE loss draws noise from a memory bank; set negatives to a count".into()),
            (LossKind::Subpatch, NegativeSource::Bank(_)) => bad("the sub-patch loss uses in-batch negatives".into()),
            (LossKind::Predictive(_), NegativeSource::Bank(_)) => bad("the predictive loss takes no negatives".into()),
            (LossKind::Subpatch, _) if self.local_chunks < 1 => bad("local_chunks must be ≥ 1".into()),
            _ => Ok(()),
        }
    }

    /// Negatives per anchor.
    pub fn k(&self) -> usize {
        match self.negatives {
            NegativeSource::InBatch => self.batch_size - 1,
            NegativeSource::Bank(k) => k,
        }
    }
}

/// One encoder per view, plus auxiliary heads keyed by network name:
/// `<view>.local` for the sub-patch loss, `<view>.decoder` for the
/// predictive loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoders: BTreeMap<String, Mlp>,
    pub heads: BTreeMap<String, Mlp>,
}

fn layer_sizes(input: usize, cfg: &TrainConfig) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(&cfg.hidden);
    s.push(cfg.embed_dim);
    s
}

impl Model {
    /// Fresh encoders for every view of `data`. View `i` (in name order)
    /// is seeded with `seed + 1000·i`.
    pub fn new(data: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        let mut encoders = BTreeMap::new();
        let mut heads = BTreeMap::new();
        let mut names: Vec<&String> = data.view_names().iter().collect();
        names.sort();
        for (i, name) in names.into_iter().enumerate() {
            let dim = data.view_dim(name).expect("listed view");
            let seed = cfg.seed.wrapping_add(1000 * i as u64);
            encoders.insert(name.clone(), Mlp::new(name.clone(), &layer_sizes(dim, cfg), seed)?);
            match cfg.loss_kind {
                LossKind::Subpatch => {
                    if dim % cfg.local_chunks != 0 {
                        return Err(Error::Config(format!(
                            "view {name} of width {dim} does not split into {} chunks",
                            cfg.local_chunks
                        )));
                    }
                    let head = format!("{name}.local");
                    let sizes = layer_sizes(dim / cfg.local_chunks, cfg);
                    heads.insert(head.clone(), Mlp::new(head, &sizes, seed + 500)?);
                }
                LossKind::Predictive(_) => {
                    let head = format!("{name}.decoder");
                    let mut sizes = vec![cfg.embed_dim];
                    sizes.extend(&cfg.hidden);
                    sizes.push(dim);
                    heads.insert(head.clone(), Mlp::new(head, &sizes, seed + 500)?);
                }
                _ => {}
            }
        }
        Ok(Self { encoders, heads })
    }

    pub fn encoder(&self, view: &str) -> Result<&Mlp> {
        self.encoders
            .get(view)
            .ok_or_else(|| Error::GraphMismatch(format!("model has no encoder for view {view:?}")))
    }

    /// Unit-norm embeddings of `x` (`[n×input_dim]`) for `view`.
    pub fn embed(&self, view: &str, x: &Tensor) -> Result<Tensor> {
        self.encoder(view)?.encode_value(x)
    }

    /// Column-concatenated embeddings of several views.
    pub fn embed_concat(&self, data: &Dataset, views: &[&str]) -> Result<Tensor> {
        let parts: Vec<Tensor> = views
            .iter()
            .map(|v| self.embed(v, data.view(v)?))
            .collect::<Result<_>>()?;
        let n = data.len();
        let width: usize = parts.iter().map(|p| p.cols()).sum();
        let mut out = Vec::with_capacity(n * width);
        for i in 0..n {
            for p in &parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Tensor::matrix(n, width, out)
    }

    fn networks(&self) -> impl Iterator<Item = &Mlp> {
        self.encoders.values().chain(self.heads.values())
    }

    fn networks_mut(&mut self) -> impl Iterator<Item = &mut Mlp> {
        self.encoders.values_mut().chain(self.heads.values_mut())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.networks().flat_map(|m| m.params()).collect()
    }

    pub fn param_norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor)> {
        self.networks().flat_map(|m| m.checkpoint_entries("net/")).collect()
    }

    pub fn from_checkpoint(entries: &[(String, Tensor)]) -> Result<Self> {
        let mut encoders = BTreeMap::new();
        let mut heads = BTreeMap::new();
        let mut names: Vec<&str> = entries
            .iter()
            .filter_map(|(k, _)| k.strip_prefix("net/")?.rsplit_once('/').map(|(n, _)| n))
            .collect();
        names.dedup();
        for name in names {
            if encoders.contains_key(name) || heads.contains_key(name) {
                continue;
            }
            let mlp = Mlp::from_checkpoint(entries, "net/", name)?;
            if name.contains('.') {
                heads.insert(name.to_string(), mlp);
            } else {
                encoders.insert(name.to_string(), mlp);
            }
        }
        if encoders.is_empty() {
            return Err(Error::Format("checkpoint holds no encoders".into()));
        }
        Ok(Self { encoders, heads })
    }
}

/// `v ← μ·v + g + λ·p; p ← p − lr·v` for each parameter.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    velocity: &mut [Tensor],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Contract("sgd_step needs one gradient and velocity per parameter".into()));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(crate::error::shape_err("sgd_step", format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
        for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = momentum * *vi + gi + weight_decay * *pi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub label: String,
    /// Mean over batches of the pair's loss (both directions summed for
    /// two-view objectives).
    pub loss: f64,
    pub loss_se: f64,
    /// `ln k − (per-direction loss)`; NaN for the NCE and predictive
    /// objectives.
    pub mi_lb: f64,
    pub mi_lb_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub pairs: Vec<PairRecord>,
    pub param_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub k: usize,
    pub epochs: Vec<EpochRecord>,
}

pub const METRICS_HEADER: &str = "epoch,pair,loss,mi_lb,lr";

impl TrainLog {
    /// Long-format CSV, one row per epoch and pair.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for e in &self.epochs {
            for p in &e.pairs {
                let _ = writeln!(s, "{},{},{},{},{}", e.epoch, p.label, p.loss, p.mi_lb, e.lr);
            }
        }
        s
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn pair_labels(&self) -> Vec<String> {
        self.epochs
            .first()
            .map(|e| e.pairs.iter().map(|p| p.label.clone()).collect())
            .unwrap_or_default()
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Chunks `[n×w]` into `[n·g × w/g]`, runs `head`, and returns unit rows
/// shaped `[n×g×d]`.
fn local_features<'t>(head: &crate::critic::BoundMlp<'t>, x: Var<'t>, g: usize) -> Result<Var<'t>> {
    let s = x.shape();
    let z = head.forward(x.reshape(&[s[0] * g, s[1] / g])?)?.l2_normalize()?;
    let d = z.shape()[1];
    z.reshape(&[s[0], g, d])
}

struct Objective {
    labels: Vec<String>,
    /// Divisor turning a pair loss into a per-direction loss.
    directions: f64,
}

/// Trains `model` in place and returns the per-epoch log.
///
/// The graph is required for the two-view objectives and ignored by the
/// sub-patch objective, which contrasts each encoder with its local head.
/// A bank is required for bank negatives; it is updated after every step
/// with the embeddings computed in that step. Batches are a fresh
/// permutation each epoch; a final partial batch is dropped.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    graph: Option<&ViewGraph>,
    mut bank: Option<&mut MemoryBank>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let tau = Temperature::new(cfg.tau)?;
    let n = data.len();
    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {n} samples",
            cfg.batch_size
        )));
    }
    let views: Vec<String> = match (cfg.loss_kind, graph) {
        (LossKind::Subpatch, _) => model.encoders.keys().cloned().collect(),
        (_, Some(g)) => g.view_names().to_vec(),
        (_, None) => return Err(Error::Config("two-view objectives need a view graph".into())),
    };
    for v in &views {
        model.encoder(v)?;
        if data.view_dim(v) != Some(model.encoder(v)?.input_dim()) {
            return Err(Error::GraphMismatch(format!(
                "dataset view {v:?} is missing or does not match its encoder width"
            )));
        }
    }
    if let NegativeSource::Bank(k) = cfg.negatives {
        let b = bank
            .as_deref()
            .ok_or_else(|| Error::Config("bank negatives need a memory bank".into()))?;
        if b.len() != n || b.dim() != cfg.embed_dim {
            return Err(Error::Config(format!(
                "bank is {}×{}, data/model need {n}×{}",
                b.len(),
                b.dim(),
                cfg.embed_dim
            )));
        }
        if k > n - 1 {
            return Err(Error::Config(format!("k = {k} negatives exceed N − 1 = {}", n - 1)));
        }
        for v in &views {
            b.view(v)?;
        }
    }
    let objective = match cfg.loss_kind {
        LossKind::Subpatch => Objective {
            labels: views.iter().map(|v| format!("{v}-local")).collect(),
            directions: 1.0,
        },
        LossKind::Predictive(_) => Objective {
            labels: graph.expect("checked").pair_labels(),
            directions: 1.0,
        },
        _ => Objective {
            labels: graph.expect("checked").pair_labels(),
            directions: 2.0,
        },
    };
    let k = match cfg.loss_kind {
        LossKind::Subpatch => cfg.batch_size - 1,
        _ => cfg.k(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut velocity: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut nce_cfgs: Vec<NceConfig> = Vec::new();
    if cfg.loss_kind == LossKind::Nce {
        for _ in 0..2 * objective.labels.len() {
            nce_cfgs.push(NceConfig::new(k, n)?);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog { k, epochs: Vec::new() };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.lr_at(cfg.lr, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut batch_pair_losses: Vec<Vec<f64>> = vec![Vec::new(); objective.labels.len()];
        let mut batch_totals = Vec::new();
        for ids in order.chunks_exact(cfg.batch_size) {
            let tape = Tape::new();
            let bound: BTreeMap<&str, _> = model
                .encoders
                .iter()
                .map(|(k, m)| (k.as_str(), m.bind(&tape, true)))
                .collect();
            let heads: BTreeMap<&str, _> = model
                .heads
                .iter()
                .map(|(k, m)| (k.as_str(), m.bind(&tape, true)))
                .collect();
            let mut embeds: Vec<(String, Var)> = Vec::new();
            let mut inputs: BTreeMap<&str, Var> = BTreeMap::new();
            for v in &views {
                let x = tape.constant(data.view(v)?.gather_rows(ids)?);
                inputs.insert(v, x);
                embeds.push((v.clone(), bound[v.as_str()].encode(x)?));
            }
            let embed_of = |name: &str| embeds.iter().find(|(v, _)| v == name).map(|(_, z)| *z).expect("embedded");

            let (total, pair_losses): (Var, Vec<Var>) = match cfg.loss_kind {
                LossKind::Subpatch => {
                    let mut parts = Vec::new();
                    for v in &views {
                        let local = local_features(&heads[format!("{v}.local").as_str()], inputs[v.as_str()], cfg.local_chunks)?;
                        parts.push(subpatch_contrast_loss(embed_of(v), local, tau)?);
                    }
                    let mut total = parts[0];
                    for p in &parts[1..] {
                        total = total.add(*p)?;
                    }
                    (total, parts)
                }
                LossKind::SoftmaxK1 => {
                    let g = graph.expect("checked");
                    let names: Vec<(String, String)> = g
                        .pair_names()
                        .into_iter()
                        .map(|(a, b)| (a.to_string(), b.to_string()))
                        .collect();
                    let bank_ref = bank.as_deref();
                    let out = multiview_loss(
                        g,
                        &embeds,
                        |idx, rows| match (cfg.negatives, bank_ref) {
                            (NegativeSource::Bank(k), Some(b)) => {
                                let sel: Vec<usize> = rows.iter().map(|&r| ids[r]).collect();
                                let (a, bv) = &names[idx];
                                Ok(Negatives::Explicit {
                                    from_view2: tape.constant(b.batch_negatives(bv, &sel, k, &mut rng)?),
                                    from_view1: tape.constant(b.batch_negatives(a, &sel, k, &mut rng)?),
                                })
                            }
                            _ => Ok(Negatives::InBatch),
                        },
                        None,
                        tau,
                    )?;
                    let per: Vec<Var> = out.per_pair.into_iter().map(|p| p.expect("unmasked")).collect();
                    (out.total, per)
                }
                LossKind::Predictive(norm) => {
                    let g = graph.expect("checked");
                    let mut parts = Vec::new();
                    for (a, b) in g.pair_names() {
                        let decoder = &heads[format!("{b}.decoder").as_str()];
                        parts.push(predictive_loss(embed_of(a), inputs[b], decoder, norm)?);
                    }
                    let mut total = parts[0];
                    for p in &parts[1..] {
                        total = total.add(*p)?;
                    }
                    (total, parts)
                }
                LossKind::Nce => {
                    let g = graph.expect("checked");
                    let b = bank.as_deref().expect("checked");
                    let mut parts = Vec::new();
                    for (idx, (a, bv)) in g.pair_names().into_iter().enumerate() {
                        let (za, zb) = (embed_of(a), embed_of(bv));
                        let noise_b = tape.constant(b.batch_negatives(bv, ids, k, &mut rng)?);
                        let noise_a = tape.constant(b.batch_negatives(a, ids, k, &mut rng)?);
                        let l1 = nce_loss(za, zb, noise_b, &mut nce_cfgs[2 * idx], tau)?;
                        let l2 = nce_loss(zb, za, noise_a, &mut nce_cfgs[2 * idx + 1], tau)?;
                        parts.push(l1.add(l2)?);
                    }
                    let mut total = parts[0];
                    for p in &parts[1..] {
                        total = total.add(*p)?;
                    }
                    (total, parts)
                }
            };

            let total_value = total.item()?;
            if !total_value.is_finite() {
                let per: Vec<String> = pair_losses
                    .iter()
                    .zip(&objective.labels)
                    .map(|(p, l)| format!("{l}={}", p.item().unwrap_or(f64::NAN)))
                    .collect();
                return Err(Error::NonFinite(format!(
                    "loss {total_value} at epoch {epoch}; batch ids {:?}; pair losses [{}]; parameter norm {}",
                    ids,
                    per.join(", "),
                    model.param_norm()
                )));
            }
            batch_totals.push(total_value);
            for (acc, p) in batch_pair_losses.iter_mut().zip(&pair_losses) {
                acc.push(p.item()?);
            }

            let grads = tape.backward(total)?;
            let param_vars: Vec<Var> = bound
                .values()
                .chain(heads.values())
                .flat_map(|b| b.params())
                .collect();
            let zero: Vec<Tensor>;
            let grad_refs: Vec<&Tensor> = {
                zero = param_vars.iter().map(|p| Tensor::zeros(&p.shape())).collect();
                param_vars
                    .iter()
                    .zip(&zero)
                    .map(|(p, z)| grads.wrt(*p).unwrap_or(z))
                    .collect()
            };
            let fresh: Vec<(String, Tensor)> = embeds
                .iter()
                .map(|(v, z)| (v.clone(), z.value().as_ref().clone()))
                .collect();
            drop(heads);
            drop(bound);
            let mut params: Vec<&mut Tensor> = model.networks_mut().flat_map(|m| m.params_mut()).collect();
            sgd_step(&mut params, &grad_refs, &mut velocity, lr, cfg.sgd_momentum, cfg.weight_decay)?;
            if let Some(b) = bank.as_deref_mut() {
                for (v, z) in &fresh {
                    b.update(v, ids, z, cfg.bank_momentum)?;
                }
            }
        }

        let pairs = objective
            .labels
            .iter()
            .zip(&batch_pair_losses)
            .map(|(label, losses)| {
                let (loss, loss_se) = mean_se(losses);
                let (mi_lb, mi_lb_se) = if matches!(cfg.loss_kind, LossKind::Nce | LossKind::Predictive(_)) {
                    (f64::NAN, f64::NAN)
                } else {
                    (
                        crate::diagnostics::mi_lower_bound(loss / objective.directions, k),
                        loss_se / objective.directions,
                    )
                };
                PairRecord {
                    label: label.clone(),
                    loss,
                    loss_se,
                    mi_lb,
                    mi_lb_se,
                }
            })
            .collect();
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            loss: mean_se(&batch_totals).0,
            pairs,
            param_norm: model.param_norm(),
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiview::{build_graph, GraphMode};
    use crate::views::{gen_gaussian_views, gen_shared_factor, SharedFactorSpec, SyntheticGaussianSpec};

    #[test]
    fn sgd_matches_closed_form() {
        // f(p) = ½ a p², two steps with momentum and weight decay
        let (a, p0, lr, mu, wd) = (3.0, 1.5, 0.1, 0.9, 0.01);
        let mut p = Tensor::scalar(p0);
        let mut v = vec![Tensor::scalar(0.0)];
        let g0 = Tensor::scalar(a * p0);
        sgd_step(&mut [&mut p], &[&g0], &mut v, lr, mu, wd).unwrap();
        let v1 = a * p0 + wd * p0;
        let p1 = p0 - lr * v1;
        assert!((p.item().unwrap() - p1).abs() < 1e-12);
        let g1 = Tensor::scalar(a * p1);
        sgd_step(&mut [&mut p], &[&g1], &mut v, lr, mu, wd).unwrap();
        let v2 = mu * v1 + a * p1 + wd * p1;
        assert!((p.item().unwrap() - (p1 - lr * v2)).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        let s = LrSchedule::Step {
            milestones: vec![2, 4],
            factor: 0.1,
        };
        assert_eq!(s.lr_at(1.0, 1, 10), 1.0);
        assert!((s.lr_at(1.0, 3, 10) - 0.1).abs() < 1e-15);
        assert!((s.lr_at(1.0, 4, 10) - 0.01).abs() < 1e-15);
        assert_eq!(LrSchedule::Cosine.lr_at(0.5, 0, 10), 0.5);
        assert!((LrSchedule::Cosine.lr_at(0.5, 5, 10) - 0.25).abs() < 1e-15);
    }

    fn gaussian() -> Dataset {
        gen_gaussian_views(&SyntheticGaussianSpec {
            dim: 1,
            rho: 0.9,
            n_samples: 512,
            seed: 1,
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 64,
            lr: 0.05,
            embed_dim: 8,
            hidden: vec![16],
            tau: 0.2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let data = gaussian();
        let cfg = TrainConfig {
            lr: 0.0,
            ..small_cfg()
        };
        let mut model = Model::new(&data, &cfg).unwrap();
        let before = model.clone();
        let g = build_graph(&["x", "y"], GraphMode::FullGraph).unwrap();
        train(&mut model, &data, Some(&g), None, &cfg).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn runs_are_deterministic() {
        let data = gaussian();
        let g = build_graph(&["x", "y"], GraphMode::FullGraph).unwrap();
        for (kind, neg) in [
            (LossKind::SoftmaxK1, NegativeSource::InBatch),
            (LossKind::SoftmaxK1, NegativeSource::Bank(32)),
            (LossKind::Nce, NegativeSource::Bank(32)),
        ] {
            let cfg = TrainConfig {
                loss_kind: kind,
                negatives: neg,
                ..small_cfg()
            };
            let run = || {
                let mut model = Model::new(&data, &cfg).unwrap();
                let mut bank = crate::memory_bank::init_bank(data.len(), cfg.embed_dim, &["x", "y"], 3).unwrap();
                let log = train(&mut model, &data, Some(&g), Some(&mut bank), &cfg).unwrap();
                (log.to_csv(), model, bank)
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn gaussian_loss_halves() {
        let data = gen_gaussian_views(&SyntheticGaussianSpec {
            dim: 1,
            rho: 0.9,
            n_samples: 2048,
            seed: 2,
        })
        .unwrap();
        let g = build_graph(&["x", "y"], GraphMode::FullGraph).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 65,
            lr: 0.05,
            embed_dim: 8,
            hidden: vec![32],
            ..TrainConfig::default()
        };
        let mut model = Model::new(&data, &cfg).unwrap();
        let log = train(&mut model, &data, Some(&g), None, &cfg).unwrap();
        let first = log.epochs[0].loss;
        let last = log.final_epoch().unwrap().loss;
        // loss measured relative to its uniform value 2·ln(k+1) floor of 0
        assert!(last < first, "{first} → {last}");
        assert_eq!(log.k, 64);
    }

    #[test]
    fn subpatch_and_csv_shape() {
        let data = gen_shared_factor(&SharedFactorSpec::uniform_noise(2, 3, 8, 0.5, 4, 256, 5)).unwrap();
        let cfg = TrainConfig {
            loss_kind: LossKind::Subpatch,
            ..small_cfg()
        };
        let mut model = Model::new(&data, &cfg).unwrap();
        let log = train(&mut model, &data, None, None, &cfg).unwrap();
        assert_eq!(log.pair_labels(), vec!["v1-local", "v2-local", "v3-local"]);
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * cfg.epochs);

        let cfg = small_cfg();
        let g = build_graph(&["v1", "v2", "v3"], GraphMode::FullGraph).unwrap();
        let mut model = Model::new(&data, &cfg).unwrap();
        let log = train(&mut model, &data, Some(&g), None, &cfg).unwrap();
        assert_eq!(log.pair_labels(), vec!["v1-v2", "v1-v3", "v2-v3"]);
    }

    #[test]
    fn config_errors() {
        let data = gaussian();
        let g = build_graph(&["x", "y"], GraphMode::FullGraph).unwrap();
        let bad = [
            TrainConfig { batch_size: 1, ..small_cfg() },
            TrainConfig { batch_size: 10_000, ..small_cfg() },
            TrainConfig { loss_kind: LossKind::Nce, ..small_cfg() },
            TrainConfig { negatives: NegativeSource::Bank(512), ..small_cfg() },
            TrainConfig { tau: 0.0, ..small_cfg() },
        ];
        for cfg in bad {
            let mut model = Model::new(&data, &TrainConfig { loss_kind: LossKind::SoftmaxK1, ..cfg.clone() }).unwrap();
            let mut bank = crate::memory_bank::init_bank(data.len(), cfg.embed_dim, &["x", "y"], 3).unwrap();
            assert!(train(&mut model, &data, Some(&g), Some(&mut bank), &cfg).is_err(), "{cfg:?}");
        }
        let other = build_graph(&["x", "z"], GraphMode::FullGraph).unwrap();
        let mut model = Model::new(&data, &small_cfg()).unwrap();
        assert!(matches!(
            train(&mut model, &data, Some(&other), None, &small_cfg()),
            Err(Error::GraphMismatch(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let data = gen_shared_factor(&SharedFactorSpec::uniform_noise(2, 2, 8, 0.5, 4, 64, 5)).unwrap();
        let cfg = TrainConfig {
            loss_kind: LossKind::Subpatch,
            ..small_cfg()
        };
        let model = Model::new(&data, &cfg).unwrap();
        let back = Model::from_checkpoint(&model.checkpoint_entries()).unwrap();
        assert_eq!(model, back);
    }
}
