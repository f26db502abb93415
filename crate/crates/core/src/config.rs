//! INI experiment manifests.
//!
//! ```ini
//! [data]
//! ; gaussian | shared | partial | file
//! kind = gaussian
//! rho = 0.9
//! dim = 1
//! n = 10000
//! seed = 7
//!
//! [graph]
//! ; full | core:<view>
//! mode = full
//!
//! [train]
//! epochs = 20
//! ; in_batch | <k> negatives from a memory bank
//! negatives = in_batch
//! ; softmax_k1 | nce | subpatch | predictive_l1 | predictive_l2
//! loss = softmax_k1
//! ; cosine | constant | step:<m1>,<m2>:<factor>
//! lr_schedule = cosine
//! ; comma-separated hidden widths, empty for none
//! hidden = 64
//!
//! [output]
//! dir = runs/gaussian
//! ```
//!
//! Every key has a default except `data.kind` and the keys its kind needs.
//! Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::losses::RegressionNorm;
use crate::multiview::GraphMode;
use crate::train::{LossKind, LrSchedule, NegativeSource, TrainConfig};
use crate::views::{PartialSharingSpec, SharedFactorSpec, SyntheticGaussianSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    File(PathBuf),
    Gaussian(SyntheticGaussianSpec),
    Shared(SharedFactorSpec),
    Partial(PartialSharingSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub graph: GraphMode,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

type Entries = BTreeMap<(String, String), String>;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str, default: Option<T>) -> Result<T> {
        match self.take(section, key) {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| cfg_err(format!("{section}.{key}: cannot parse {v:?}"))),
            None => default.ok_or_else(|| cfg_err(format!("{section}.{key} is required"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            Some((s, k)) => Err(cfg_err(format!("unknown key {s}.{k}"))),
            None => Ok(()),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| cfg_err(format!("bad list entry {t:?}"))))
        .collect()
}

fn join_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_schedule(s: &str) -> Result<LrSchedule> {
    match s.trim() {
        "cosine" => Ok(LrSchedule::Cosine),
        "constant" => Ok(LrSchedule::Constant),
        other => {
            let rest = other
                .strip_prefix("step:")
                .ok_or_else(|| cfg_err(format!("unknown lr_schedule {other:?}")))?;
            let (ms, f) = rest
                .rsplit_once(':')
                .ok_or_else(|| cfg_err("step schedule is step:<m1>,<m2>,…:<factor>"))?;
            Ok(LrSchedule::Step {
                milestones: parse_list(ms)?,
                factor: f.parse().map_err(|_| cfg_err(format!("bad step factor {f:?}")))?,
            })
        }
    }
}

fn schedule_str(s: &LrSchedule) -> String {
    match s {
        LrSchedule::Cosine => "cosine".into(),
        LrSchedule::Constant => "constant".into(),
        LrSchedule::Step { milestones, factor } => format!("step:{}:{factor}", join_list(milestones)),
    }
}

fn parse_loss(s: &str) -> Result<LossKind> {
    Ok(match s.trim() {
        "softmax_k1" => LossKind::SoftmaxK1,
        "nce" => LossKind::Nce,
        "subpatch" => LossKind::Subpatch,
        "predictive_l1" => LossKind::Predictive(RegressionNorm::L1),
        "predictive_l2" => LossKind::Predictive(RegressionNorm::L2),
        other => return Err(cfg_err(format!("unknown loss {other:?}"))),
    })
}

fn loss_str(k: LossKind) -> &'static str {
    match k {
        LossKind::SoftmaxK1 => "softmax_k1",
        LossKind::Nce => "nce",
        LossKind::Subpatch => "subpatch",
        LossKind::Predictive(RegressionNorm::L1) => "predictive_l1",
        LossKind::Predictive(RegressionNorm::L2) => "predictive_l2",
    }
}

fn parse_negatives(s: &str) -> Result<NegativeSource> {
    match s.trim() {
        "in_batch" => Ok(NegativeSource::InBatch),
        k => k
            .parse()
            .map(NegativeSource::Bank)
            .map_err(|_| cfg_err(format!("negatives must be in_batch or a count, got {k:?}"))),
    }
}

fn negatives_str(n: NegativeSource) -> String {
    match n {
        NegativeSource::InBatch => "in_batch".into(),
        NegativeSource::Bank(k) => k.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        Self::from_ini_str_with(text, &[])
    }

    /// Parses `text`, then applies `section.key=value` overrides.
    pub fn from_ini_str_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| cfg_err(format!("malformed config: {e}")))?;
        let mut entries = Entries::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            if !["data", "graph", "train", "output"].contains(&section) {
                if props.is_empty() && section.is_empty() {
                    continue;
                }
                return Err(cfg_err(format!("unknown section [{section}]")));
            }
            for (k, v) in props.iter() {
                entries.insert((section.to_string(), k.to_string()), v.to_string());
            }
        }
        for (path, value) in overrides {
            let (s, k) = path
                .split_once('.')
                .ok_or_else(|| cfg_err(format!("override {path:?} is not section.key")))?;
            entries.insert((s.to_string(), k.to_string()), value.clone());
        }
        Self::from_entries(entries)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_ini_str_with(&text, overrides)
    }

    fn from_entries(entries: Entries) -> Result<Self> {
        let mut r = Reader { entries };
        let kind: String = r.parse("data", "kind", None)?;
        let seed: u64 = r.parse("data", "seed", Some(0))?;
        let data = match kind.as_str() {
            "file" => DataSpec::File(PathBuf::from(r.parse::<String>("data", "path", None)?)),
            "gaussian" => DataSpec::Gaussian(SyntheticGaussianSpec {
                dim: r.parse("data", "dim", Some(1))?,
                rho: r.parse("data", "rho", None)?,
                n_samples: r.parse("data", "n", None)?,
                seed,
            }),
            "shared" => {
                let n_views = r.parse("data", "views", None)?;
                let noise: f64 = r.parse("data", "noise", Some(1.0))?;
                DataSpec::Shared(SharedFactorSpec::uniform_noise(
                    r.parse("data", "latent_dim", Some(2))?,
                    n_views,
                    r.parse("data", "view_dim", Some(16))?,
                    noise,
                    r.parse("data", "classes", Some(4))?,
                    r.parse("data", "n", None)?,
                    seed,
                ))
            }
            "partial" => DataSpec::Partial(PartialSharingSpec {
                signal_dim: r.parse("data", "signal_dim", Some(2))?,
                nuisance_dim: r.parse("data", "nuisance_dim", Some(8))?,
                signal_rho: r.parse("data", "signal_rho", None)?,
                nuisance_rho: r.parse("data", "nuisance_rho", Some(0.0))?,
                nuisance_scale: r.parse("data", "nuisance_scale", Some(1.0))?,
                n_classes: r.parse("data", "classes", Some(4))?,
                n_samples: r.parse("data", "n", None)?,
                seed,
            }),
            other => return Err(cfg_err(format!("unknown data.kind {other:?}"))),
        };
        let graph: GraphMode = r.parse("graph", "mode", Some(GraphMode::FullGraph))?;
        let d = TrainConfig::default();
        let train = TrainConfig {
            epochs: r.parse("train", "epochs", Some(d.epochs))?,
            batch_size: r.parse("train", "batch_size", Some(d.batch_size))?,
            lr: r.parse("train", "lr", Some(d.lr))?,
            lr_schedule: match r.take("train", "lr_schedule") {
                Some(s) => parse_schedule(&s)?,
                None => d.lr_schedule,
            },
            sgd_momentum: r.parse("train", "sgd_momentum", Some(d.sgd_momentum))?,
            weight_decay: r.parse("train", "weight_decay", Some(d.weight_decay))?,
            tau: r.parse("train", "tau", Some(d.tau))?,
            negatives: match r.take("train", "negatives") {
                Some(s) => parse_negatives(&s)?,
                None => d.negatives,
            },
            loss_kind: match r.take("train", "loss") {
                Some(s) => parse_loss(&s)?,
                None => d.loss_kind,
            },
            bank_momentum: r.parse("train", "bank_momentum", Some(d.bank_momentum))?,
            embed_dim: r.parse("train", "embed_dim", Some(d.embed_dim))?,
            hidden: match r.take("train", "hidden") {
                Some(s) => parse_list(&s)?,
                None => d.hidden,
            },
            local_chunks: r.parse("train", "local_chunks", Some(d.local_chunks))?,
            seed: r.parse("train", "seed", Some(d.seed))?,
        };
        let output_dir = PathBuf::from(r.parse::<String>("output", "dir", Some("runs/out".into()))?);
        r.finish()?;
        train.validate()?;
        Ok(Self {
            data,
            graph,
            train,
            output_dir,
        })
    }

    /// Canonical INI text; parsing it yields an equal config.
    pub fn to_ini_string(&self) -> String {
        let mut s = String::from("[data]\n");
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSpec::File(p) => {
                kv(&mut s, "kind", "file".into());
                kv(&mut s, "path", p.display().to_string());
            }
            DataSpec::Gaussian(g) => {
                kv(&mut s, "kind", "gaussian".into());
                kv(&mut s, "dim", g.dim.to_string());
                kv(&mut s, "rho", g.rho.to_string());
                kv(&mut s, "n", g.n_samples.to_string());
                kv(&mut s, "seed", g.seed.to_string());
            }
            DataSpec::Shared(f) => {
                kv(&mut s, "kind", "shared".into());
                kv(&mut s, "latent_dim", f.latent_dim.to_string());
                kv(&mut s, "views", f.n_views.to_string());
                kv(&mut s, "view_dim", f.view_dim.to_string());
                kv(&mut s, "noise", f.noise_sigma.first().copied().unwrap_or(0.0).to_string());
                kv(&mut s, "classes", f.n_classes.to_string());
                kv(&mut s, "n", f.n_samples.to_string());
                kv(&mut s, "seed", f.seed.to_string());
            }
            DataSpec::Partial(p) => {
                kv(&mut s, "kind", "partial".into());
                kv(&mut s, "signal_dim", p.signal_dim.to_string());
                kv(&mut s, "nuisance_dim", p.nuisance_dim.to_string());
                kv(&mut s, "signal_rho", p.signal_rho.to_string());
                kv(&mut s, "nuisance_rho", p.nuisance_rho.to_string());
                kv(&mut s, "nuisance_scale", p.nuisance_scale.to_string());
                kv(&mut s, "classes", p.n_classes.to_string());
                kv(&mut s, "n", p.n_samples.to_string());
                kv(&mut s, "seed", p.seed.to_string());
            }
        }
        s.push_str("\n[graph]\n");
        kv(&mut s, "mode", self.graph.to_string());
        let t = &self.train;
        s.push_str("\n[train]\n");
        kv(&mut s, "epochs", t.epochs.to_string());
        kv(&mut s, "batch_size", t.batch_size.to_string());
        kv(&mut s, "lr", t.lr.to_string());
        kv(&mut s, "lr_schedule", schedule_str(&t.lr_schedule));
        kv(&mut s, "sgd_momentum", t.sgd_momentum.to_string());
        kv(&mut s, "weight_decay", t.weight_decay.to_string());
        kv(&mut s, "tau", t.tau.to_string());
        kv(&mut s, "negatives", negatives_str(t.negatives));
        kv(&mut s, "loss", loss_str(t.loss_kind).into());
        kv(&mut s, "bank_momentum", t.bank_momentum.to_string());
        kv(&mut s, "embed_dim", t.embed_dim.to_string());
        kv(&mut s, "hidden", join_list(&t.hidden));
        kv(&mut s, "local_chunks", t.local_chunks.to_string());
        kv(&mut s, "seed", t.seed.to_string());
        s.push_str("\n[output]\n");
        kv(&mut s, "dir", self.output_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[data]\nkind = gaussian\nrho = 0.9\nn = 1000\n";

    #[test]
    fn module_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```ini"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| format!("{}\n", l.trim_start_matches("//!").trim_start()))
            .collect();
        let c = ExperimentConfig::from_ini_str(&doc).unwrap();
        assert_eq!(c.train.epochs, 20);
        assert_eq!(c.output_dir, PathBuf::from("runs/gaussian"));
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_ini_str(MINIMAL).unwrap();
        assert_eq!(c.graph, GraphMode::FullGraph);
        assert_eq!(c.train, TrainConfig::default());
        match c.data {
            DataSpec::Gaussian(g) => assert_eq!((g.dim, g.rho, g.n_samples), (1, 0.9, 1000)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        for bad in [
            format!("{MINIMAL}colour = red\n"),
            format!("{MINIMAL}[train]\nepoch = 3\n"),
            format!("{MINIMAL}[extra]\na = 1\n"),
            "[data]\nkind = nope\n".to_string(),
            "[data]\nkind = gaussian\nn = 10\n".to_string(),
            format!("{MINIMAL}[train]\nepochs = many\n"),
            format!("{MINIMAL}[train]\nbatch_size = 1\n"),
            format!("{MINIMAL}[graph]\nmode = star\n"),
        ] {
            assert!(matches!(ExperimentConfig::from_ini_str(&bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn overrides_win() {
        let c = ExperimentConfig::from_ini_str_with(
            &format!("{MINIMAL}[train]\nepochs = 3\n"),
            &[("train.epochs".into(), "9".into()), ("graph.mode".into(), "core:x".into())],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 9);
        assert_eq!(c.graph, GraphMode::CoreView("x".into()));
    }

    #[test]
    fn schedule_and_loss_spellings() {
        let text = format!(
            "{MINIMAL}[train]\nlr_schedule = step:10,20:0.1\nloss = nce\nnegatives = 64\nhidden = 32,16\n"
        );
        let c = ExperimentConfig::from_ini_str(&text).unwrap();
        assert_eq!(
            c.train.lr_schedule,
            LrSchedule::Step {
                milestones: vec![10, 20],
                factor: 0.1
            }
        );
        assert_eq!(c.train.loss_kind, LossKind::Nce);
        assert_eq!(c.train.negatives, NegativeSource::Bank(64));
        assert_eq!(c.train.hidden, vec![32, 16]);
        let c2 = ExperimentConfig::from_ini_str(&c.to_ini_string()).unwrap();
        assert_eq!(c, c2);
    }

    proptest! {
        #[test]
        fn round_trip(
            rho in -0.99f64..0.99,
            lr in 0.0f64..1.0,
            tau in 0.01f64..2.0,
            epochs in 1usize..100,
            batch in 2usize..512,
            hidden in proptest::collection::vec(1usize..128, 0..3),
            kind in 0usize..4,
            loss in 0usize..5,
            seed in 0u64..u64::MAX,
        ) {
            let data = match kind {
                0 => DataSpec::Gaussian(SyntheticGaussianSpec { dim: 2, rho, n_samples: 100, seed }),
                1 => DataSpec::Shared(SharedFactorSpec::uniform_noise(2, 4, 8, lr * 3.0, 4, 50, seed)),
                2 => DataSpec::Partial(PartialSharingSpec {
                    signal_dim: 2, nuisance_dim: 3, signal_rho: rho.abs(), nuisance_rho: 0.5,
                    nuisance_scale: tau, n_classes: 4, n_samples: 10, seed,
                }),
                _ => DataSpec::File(PathBuf::from("data/set.cmcv")),
            };
            let loss_kind = [
                LossKind::SoftmaxK1, LossKind::Nce, LossKind::Subpatch,
                LossKind::Predictive(RegressionNorm::L1), LossKind::Predictive(RegressionNorm::L2),
            ][loss];
            let negatives = if loss_kind == LossKind::Nce { NegativeSource::Bank(batch) } else { NegativeSource::InBatch };
            let c = ExperimentConfig {
                data,
                graph: if seed % 2 == 0 { GraphMode::FullGraph } else { GraphMode::CoreView("v2".into()) },
                train: TrainConfig { epochs, batch_size: batch, lr, tau, hidden, loss_kind, negatives, seed, ..TrainConfig::default() },
                output_dir: PathBuf::from("runs/x y"),
            };
            let back = ExperimentConfig::from_ini_str(&c.to_ini_string()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
