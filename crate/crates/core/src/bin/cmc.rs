use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cmc::config::{DataSpec, ExperimentConfig};
use cmc::critic::Temperature;
use cmc::diagnostics::density_ratio_diagnostic;
use cmc::experiments::{
    mi_sweep, negatives_sweep, patch_distance_sweep, sweep_csv, view_ablation, SweepRow,
};
use cmc::io::{decode_checkpoint, encode_checkpoint, read_dataset, write_dataset};
use cmc::memory_bank::{init_bank, MemoryBank};
use cmc::multiview::{build_graph, GraphMode};
use cmc::probe::{linear_probe_split, ProbeConfig};
use cmc::train::{train, LossKind, Model, NegativeSource, TrainConfig};
use cmc::views::{
    analytic_gaussian_mi, gen_gaussian_views, gen_partial_sharing, gen_shared_factor, Dataset, PartialSharingSpec,
    SharedFactorSpec, SyntheticGaussianSpec,
};
use cmc::{Error, Result};

#[derive(Parser)]
#[command(name = "cmc", version, about = "Contrastive multiview coding at desk scale")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic multiview dataset file.
    Gen(GenArgs),
    /// Train encoders from an INI config.
    Train(TrainArgs),
    /// Linear probe on a trained encoder (or the raw view).
    Probe(ProbeArgs),
    /// Run an experiment grid and write one CSV row per grid point.
    Sweep(SweepArgs),
    /// Density-ratio diagnostic for a model trained on Gaussian views.
    Diag(DiagArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, conflicts_with_all = ["shared", "partial"])]
    gaussian: bool,
    #[arg(long, conflicts_with = "partial")]
    shared: bool,
    #[arg(long)]
    partial: bool,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    views: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    #[arg(long, default_value_t = 16)]
    view_dim: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    signal_dim: usize,
    #[arg(long, default_value_t = 8)]
    nuisance_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    nuisance_rho: f64,
    #[arg(long, default_value_t = 1.0)]
    nuisance_scale: f64,
    #[arg(long, short, default_value = "data.cmcv")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// `full` or `core:<view>`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `section.key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `train`; omit with --raw.
    #[arg(long, required_unless_present = "raw")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value = "v1")]
    view: String,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Negatives,
    Sharing,
    Views,
    Patch,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 5000)]
    n_eval: usize,
    #[arg(long, default_value_t = 99)]
    seed: u64,
    #[arg(long, default_value_t = cmc::critic::DEFAULT_TAU)]
    tau: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Probe(a) => cmd_probe(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Diag(a) => cmd_diag(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::GraphMismatch(_) | Error::Parameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn summary_of(data: &Dataset) -> String {
    let mut s = format!("n={}\nviews={}\n", data.len(), data.view_names().len());
    for (name, shape) in data.view_names().iter().zip(data.view_shapes()) {
        let dims: Vec<String> = shape.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "shape_{name}={}", dims.join("x"));
    }
    s
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let (data, mi) = if a.shared {
        let spec = SharedFactorSpec::uniform_noise(a.latent_dim, a.views, a.view_dim, a.noise, a.classes, a.n, a.seed);
        (gen_shared_factor(&spec)?, None)
    } else if a.partial {
        let spec = PartialSharingSpec {
            signal_dim: a.signal_dim,
            nuisance_dim: a.nuisance_dim,
            signal_rho: a.rho,
            nuisance_rho: a.nuisance_rho,
            nuisance_scale: a.nuisance_scale,
            n_classes: a.classes,
            n_samples: a.n,
            seed: a.seed,
        };
        (gen_partial_sharing(&spec)?, Some(spec.analytic_mi()?))
    } else {
        let spec = SyntheticGaussianSpec {
            dim: a.dim,
            rho: a.rho,
            n_samples: a.n,
            seed: a.seed,
        };
        (gen_gaussian_views(&spec)?, Some(analytic_gaussian_mi(&spec)?))
    };
    write_dataset(&a.out, &data)?;
    print!("{}", summary_of(&data));
    if let Some(mi) = mi {
        println!("analytic_mi_nats={mi:.4}");
    }
    println!("file={}", a.out.display());
    Ok(())
}

fn load_data(spec: &DataSpec) -> Result<Dataset> {
    match spec {
        DataSpec::File(p) => read_dataset(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read dataset {}: {io}", p.display())),
            other => other,
        }),
        DataSpec::Gaussian(g) => gen_gaussian_views(g),
        DataSpec::Shared(s) => gen_shared_factor(s),
        DataSpec::Partial(p) => gen_partial_sharing(p),
    }
}

/// Resolves a core view name case-insensitively against the dataset.
fn resolve_mode(mode: &GraphMode, names: &[String]) -> Result<GraphMode> {
    match mode {
        GraphMode::FullGraph => Ok(GraphMode::FullGraph),
        GraphMode::CoreView(c) => names
            .iter()
            .find(|n| n.eq_ignore_ascii_case(c))
            .map(|n| GraphMode::CoreView(n.clone()))
            .ok_or_else(|| Error::GraphMismatch(format!("core view {c:?} is not one of {names:?}"))),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(Error::from)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut overrides = Vec::new();
    for s in &a.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(m) = &a.mode {
        overrides.push(("graph.mode".into(), m.clone()));
    }
    if let Some(e) = a.epochs {
        overrides.push(("train.epochs".into(), e.to_string()));
    }
    if let Some(s) = a.seed {
        overrides.push(("train.seed".into(), s.to_string()));
    }
    if let Some(o) = &a.out {
        overrides.push(("output.dir".into(), o.display().to_string()));
    }
    let cfg = ExperimentConfig::from_file(&a.config, &overrides)?;
    let data = load_data(&cfg.data)?;
    let mut names = data.view_names().to_vec();
    names.sort();
    let graph = match cfg.train.loss_kind {
        LossKind::Subpatch => None,
        _ => Some(build_graph(&names, resolve_mode(&cfg.graph, &names)?)?),
    };
    let tc: &TrainConfig = &cfg.train;
    let mut model = Model::new(&data, tc)?;
    let mut bank: Option<MemoryBank> = match tc.negatives {
        NegativeSource::Bank(_) => Some(init_bank(data.len(), tc.embed_dim, &names, tc.seed)?.with_momentum(tc.bank_momentum)?),
        NegativeSource::InBatch => None,
    };
    let log = train(&mut model, &data, graph.as_ref(), bank.as_mut(), tc)?;

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    write(&dir.join("metrics.csv"), log.to_csv())?;
    let mut entries = model.checkpoint_entries();
    if let Some(b) = &bank {
        entries.extend(b.checkpoint_entries());
    }
    write(&dir.join("checkpoint.cmck"), encode_checkpoint(&entries)?)?;
    write(&dir.join("config.ini"), cfg.to_ini_string())?;
    let last = log.final_epoch().expect("at least one epoch");
    let mut summary = format!("epochs={}\nk={}\nfinal_loss={}\n", log.epochs.len(), log.k, last.loss);
    for p in &last.pairs {
        let _ = writeln!(summary, "mi_lb[{}]={}", p.label, p.mi_lb);
    }
    let _ = writeln!(summary, "pairs={}", last.pairs.len());
    let _ = writeln!(summary, "param_norm={}", last.param_norm);
    write(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!("out={}", dir.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Model::from_checkpoint(&decode_checkpoint(&bytes)?)
}

fn cmd_probe(a: ProbeArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let labels = data
        .labels()
        .ok_or_else(|| Error::Config(format!("{} has no labels", a.data.display())))?;
    let (features, tag) = match (&a.checkpoint, a.raw) {
        (_, true) => (data.view(&a.view)?.clone(), format!("raw:{}", a.view)),
        (Some(ck), false) => (load_model(ck)?.embed(&a.view, data.view(&a.view)?)?, format!("embed:{}", a.view)),
        (None, false) => unreachable!("clap requires one of them"),
    };
    let r = linear_probe_split(&tag, &features, labels, a.train_fraction, &ProbeConfig::default())?;
    println!("tag={}\ntrain_acc={:.4}\ntest_acc={:.4}", r.tag, r.train_acc, r.test_acc);
    for (c, acc) in r.per_class.iter().enumerate() {
        println!("class_acc[{c}]={acc:.4}");
    }
    println!("converged={}", r.converged);
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let probe = ProbeConfig::default();
    let base = TrainConfig {
        epochs: a.epochs,
        batch_size: 128,
        embed_dim: 16,
        hidden: vec![64],
        seed: a.seed,
        ..TrainConfig::default()
    };
    let rows: Vec<SweepRow> = match a.kind {
        SweepKind::Negatives => {
            let spec = SharedFactorSpec::uniform_noise(2, 2, 16, 0.5, 16, a.n, a.seed);
            let ks: Vec<usize> = [16, 64, 256, 1024].into_iter().filter(|&k| k < a.n / 2).collect();
            negatives_sweep(&spec, &ks, &base, &probe)?
        }
        SweepKind::Sharing => {
            let spec = PartialSharingSpec {
                signal_dim: 2,
                nuisance_dim: 8,
                signal_rho: 0.0,
                nuisance_rho: 0.0,
                nuisance_scale: 1.0,
                n_classes: 4,
                n_samples: a.n,
                seed: a.seed,
            };
            let cfg = TrainConfig { embed_dim: 4, ..base };
            mi_sweep(&spec, &[0.0, 0.25, 0.5, 0.75, 1.0], 0.99, &cfg, &probe)?
        }
        SweepKind::Views => {
            let spec = SharedFactorSpec::uniform_noise(2, 4, 16, 2.0, 4, a.n, a.seed);
            view_ablation(&spec, false, &[1, 2, 3, 4], &base, &probe)?
                .into_iter()
                .map(|r| SweepRow {
                    knob: r.n_views as f64,
                    mi_nats: f64::NAN,
                    test_acc: r.probe.test_acc,
                })
                .collect()
        }
        SweepKind::Patch => patch_distance_sweep(
            a.n,
            64,
            4,
            8,
            &[8, 12, 16, 20, 24],
            &TrainConfig { embed_dim: 16, ..base },
            &probe,
            a.seed,
        )?,
    };
    let csv = sweep_csv(&rows);
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_diag(a: DiagArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let spec = SyntheticGaussianSpec {
        dim: a.dim,
        rho: a.rho,
        n_samples: a.n_eval,
        seed: a.seed,
    };
    let r = density_ratio_diagnostic(&model, &spec, a.n_eval, Temperature::new(a.tau)?)?;
    println!("n_eval={}\npearson_r={:.4}\npearson_r_joint={:.4}", r.n_eval, r.pearson, r.pearson_joint);
    Ok(())
}
