//! Experiment drivers: train encoders on a synthetic family, then probe.
//!
//! Every driver generates its data from the spec's seed, trains on the
//! first half and probes with the first half as the probe's training split
//! and the second half as its test split.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::memory_bank::init_bank;
use crate::multiview::{build_graph, GraphMode};
use crate::probe::{linear_probe, ProbeConfig, ProbeResult};
use crate::tensor::Tensor;
use crate::train::{train, LossKind, Model, NegativeSource, TrainConfig};
use crate::views::{
    extract_patch_pair, gen_partial_sharing, gen_shared_factor, procedural_images, Dataset, PartialSharingSpec,
    SharedFactorSpec,
};

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn halves(data: &Dataset) -> Result<(Dataset, Dataset)> {
    data.split(0.5)
}

fn labels(data: &Dataset) -> Result<&[usize]> {
    data.labels()
        .ok_or_else(|| Error::DegenerateLabels("dataset has no labels to probe".into()))
}

/// Probes the embedding of `view` learned by `model`.
pub fn probe_view(
    tag: &str,
    model: &Model,
    view: &str,
    train_half: &Dataset,
    test_half: &Dataset,
    probe: &ProbeConfig,
) -> Result<ProbeResult> {
    linear_probe(
        tag,
        &model.embed(view, train_half.view(view)?)?,
        labels(train_half)?,
        &model.embed(view, test_half.view(view)?)?,
        labels(test_half)?,
        probe,
    )
}

/// Probes a raw view.
pub fn probe_raw(tag: &str, view: &str, train_half: &Dataset, test_half: &Dataset, probe: &ProbeConfig) -> Result<ProbeResult> {
    linear_probe(
        tag,
        train_half.view(view)?,
        labels(train_half)?,
        test_half.view(view)?,
        labels(test_half)?,
        probe,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub n_views: usize,
    pub probe: ProbeResult,
}

/// Trains with the first `m` views for each `m` in `counts` and probes the
/// core view `v1`. One view uses the sub-patch objective against its own
/// input chunks; more views use the contrastive graph given by `full`.
pub fn view_ablation(
    spec: &SharedFactorSpec,
    full: bool,
    counts: &[usize],
    cfg: &TrainConfig,
    probe: &ProbeConfig,
) -> Result<Vec<AblationRow>> {
    let data = gen_shared_factor(spec)?;
    let (train_half, test_half) = halves(&data)?;
    let mut rows = Vec::new();
    for &m in counts {
        if m == 0 || m > spec.n_views {
            return Err(Error::Parameter(format!("view count {m} outside 1..={}", spec.n_views)));
        }
        let names: Vec<String> = (1..=m).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let sub = train_half.select_views(&refs)?;
        let model = if m == 1 {
            let cfg = TrainConfig {
                loss_kind: LossKind::Subpatch,
                negatives: NegativeSource::InBatch,
                ..cfg.clone()
            };
            let mut model = Model::new(&sub, &cfg)?;
            train(&mut model, &sub, None, None, &cfg)?;
            model
        } else {
            let mode = if full {
                GraphMode::FullGraph
            } else {
                GraphMode::CoreView("v1".into())
            };
            let graph = build_graph(&names, mode)?;
            let mut model = Model::new(&sub, cfg)?;
            let mut bank = match cfg.negatives {
                NegativeSource::Bank(_) => Some(init_bank(sub.len(), cfg.embed_dim, &names, cfg.seed)?),
                NegativeSource::InBatch => None,
            };
            train(&mut model, &sub, Some(&graph), bank.as_mut(), cfg)?;
            model
        };
        rows.push(AblationRow {
            n_views: m,
            probe: probe_view(&format!("{m} views"), &model, "v1", &train_half, &test_half, probe)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredVsContrast {
    pub contrastive: ProbeResult,
    pub predictive: ProbeResult,
    /// Same encoder architecture, untrained.
    pub random: ProbeResult,
}

/// The same encoder on `v1`, trained once to predict `v2` and once to
/// contrast against `v2`; both probed on `v1`.
pub fn pred_vs_contrast(
    spec: &SharedFactorSpec,
    contrastive: &TrainConfig,
    predictive: &TrainConfig,
    probe: &ProbeConfig,
) -> Result<PredVsContrast> {
    if !matches!(predictive.loss_kind, LossKind::Predictive(_)) {
        return Err(Error::Config("the predictive run needs a predictive loss kind".into()));
    }
    let data = gen_shared_factor(spec)?;
    let (train_half, test_half) = halves(&data)?;
    let pair = train_half.select_views(&["v1", "v2"])?;
    let graph = build_graph(&["v1", "v2"], GraphMode::CoreView("v1".into()))?;

    let mut c_model = Model::new(&pair, contrastive)?;
    let random = probe_view("random", &c_model, "v1", &train_half, &test_half, probe)?;
    train(&mut c_model, &pair, Some(&graph), None, contrastive)?;
    let mut p_model = Model::new(&pair, predictive)?;
    train(&mut p_model, &pair, Some(&graph), None, predictive)?;
    Ok(PredVsContrast {
        contrastive: probe_view("contrastive", &c_model, "v1", &train_half, &test_half, probe)?,
        predictive: probe_view("predictive", &p_model, "v1", &train_half, &test_half, probe)?,
        random,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Grid value (negatives count, sharing knob or patch distance).
    pub knob: f64,
    /// Analytic mutual information when known, otherwise the final
    /// `ln k − loss` estimate.
    pub mi_nats: f64,
    pub test_acc: f64,
}

pub const SWEEP_HEADER: &str = "knob,mi_nats,test_acc";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.knob + 0.0, r.mi_nats + 0.0, r.test_acc);
    }
    s
}

/// Two-view training with `k` memory-bank negatives for each `k`; `v1` is
/// probed.
pub fn negatives_sweep(spec: &SharedFactorSpec, ks: &[usize], cfg: &TrainConfig, probe: &ProbeConfig) -> Result<Vec<SweepRow>> {
    let data = gen_shared_factor(spec)?;
    let (train_half, test_half) = halves(&data)?;
    let pair = train_half.select_views(&["v1", "v2"])?;
    let graph = build_graph(&["v1", "v2"], GraphMode::CoreView("v1".into()))?;
    let mut rows = Vec::new();
    for &k in ks {
        if k + 1 > pair.len() {
            return Err(Error::Config(format!(
                "k = {k} negatives need at least {} training samples, have {}",
                k + 1,
                pair.len()
            )));
        }
        let cfg = TrainConfig {
            negatives: NegativeSource::Bank(k),
            ..cfg.clone()
        };
        let mut model = Model::new(&pair, &cfg)?;
        let mut bank = init_bank(pair.len(), cfg.embed_dim, &["v1", "v2"], cfg.seed)?;
        let log = train(&mut model, &pair, Some(&graph), Some(&mut bank), &cfg)?;
        let r = probe_view(&format!("k={k}"), &model, "v1", &train_half, &test_half, probe)?;
        rows.push(SweepRow {
            knob: k as f64,
            mi_nats: log.final_epoch().map_or(f64::NAN, |e| e.pairs[0].mi_lb),
            test_acc: r.test_acc,
        });
    }
    Ok(rows)
}

/// Sharing correlations for knob `t ∈ [0, 1]`: the signal becomes shared
/// over the first half of the range, the nuisance over the second.
pub fn sharing_at(t: f64, max_rho: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    (max_rho * (2.0 * t).min(1.0), max_rho * (2.0 * t - 1.0).max(0.0))
}

/// Sweeps the amount of information the two views share; `v1` is probed.
pub fn mi_sweep(
    base: &PartialSharingSpec,
    knobs: &[f64],
    max_rho: f64,
    cfg: &TrainConfig,
    probe: &ProbeConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &t in knobs {
        let (signal_rho, nuisance_rho) = sharing_at(t, max_rho);
        let spec = PartialSharingSpec {
            signal_rho,
            nuisance_rho,
            ..base.clone()
        };
        let data = gen_partial_sharing(&spec)?;
        let (train_half, test_half) = halves(&data)?;
        let graph = build_graph(&["v1", "v2"], GraphMode::CoreView("v1".into()))?;
        let mut model = Model::new(&train_half, cfg)?;
        train(&mut model, &train_half, Some(&graph), None, cfg)?;
        let r = probe_view(&format!("t={t}"), &model, "v1", &train_half, &test_half, probe)?;
        rows.push(SweepRow {
            knob: t,
            mi_nats: spec.analytic_mi()?,
            test_acc: r.test_acc,
        });
    }
    Ok(rows)
}

/// One patch pair per procedural image, as views `a` and `b`, labelled by
/// image class.
pub fn patch_pair_dataset(
    images: &[(Tensor, usize)],
    patch: usize,
    distance: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = images.len();
    let width = patch * patch * 3;
    let (mut a, mut b) = (Vec::with_capacity(n * width), Vec::with_capacity(n * width));
    for (img, _) in images {
        let (pa, pb) = extract_patch_pair(img, patch, distance, &mut rng)?;
        a.extend(pa.into_data());
        b.extend(pb.into_data());
    }
    Dataset::new(
        vec!["a".into(), "b".into()],
        vec![vec![width]; 2],
        vec![Tensor::matrix(n, width, a)?, Tensor::matrix(n, width, b)?],
        Some(images.iter().map(|(_, l)| *l).collect()),
    )
}

/// Patch pairs at each distance `d`; `mi_nats` is the final bound estimate.
#[allow(clippy::too_many_arguments)]
pub fn patch_distance_sweep(
    n_images: usize,
    size: usize,
    n_classes: usize,
    patch: usize,
    distances: &[usize],
    cfg: &TrainConfig,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let images = procedural_images(n_images, size, n_classes, seed)?;
    let graph = build_graph(&["a", "b"], GraphMode::CoreView("a".into()))?;
    let mut rows = Vec::new();
    for &d in distances {
        let data = patch_pair_dataset(&images, patch, d, seed ^ d as u64)?;
        let (train_half, test_half) = halves(&data)?;
        let mut model = Model::new(&train_half, cfg)?;
        let log = train(&mut model, &train_half, Some(&graph), None, cfg)?;
        let r = probe_view(&format!("d={d}"), &model, "a", &train_half, &test_half, probe)?;
        rows.push(SweepRow {
            knob: d as f64,
            mi_nats: log.final_epoch().map_or(f64::NAN, |e| e.pairs[0].mi_lb),
            test_acc: r.test_acc,
        });
    }
    Ok(rows)
}
