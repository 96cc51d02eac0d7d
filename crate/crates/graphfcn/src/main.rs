//! Command-line surface: dataset generation, training, evaluation,
//! prediction, graph inspection, and gradient checking.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use graphfcn::backbone::BackboneConfig;
use graphfcn::data::{self, LabelMap, Sample};
use graphfcn::error::Error;
use graphfcn::gradcheck;
use graphfcn::graph;
use graphfcn::params::ModelParams;
use graphfcn::tensor::Tensor;
use graphfcn::training::{self, ModelSpec, TrainConfig};

#[derive(Parser)]
#[command(name = "graphfcn", about = "Desk-scale Graph-FCN segmentation pipeline")]
struct Cli {
    /// Restrict stdout to machine-parseable JSON/CSV.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shapes dataset (images/, labels/, split.json).
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        /// HxW, e.g. 64x64.
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overwrite an existing non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Two-phase training; writes checkpoint, report.csv and metrics.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Detach the GCN head (lambda = 0, no warmup phase).
        #[arg(long)]
        no_gcn: bool,
    },
    /// Test-set metrics for a checkpoint, as JSON on stdout.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Argmax label raster for one image.
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump grid adjacency triples; with --node, the receptive field.
    InspectGraph {
        /// HxW grid extents.
        #[arg(long)]
        size: String,
        #[arg(long, default_value_t = 4)]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        node: Option<usize>,
        #[arg(long, default_value_t = 1)]
        hops: usize,
    },
    /// Finite-difference check of the full-model gradients.
    CheckGrads {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// JSON config schema; unknown keys are rejected.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    num_classes: usize,
    c1: usize,
    c2: usize,
    node_stride: usize,
    hidden_dim: usize,
    l: usize,
    sigma: f64,
    epochs: usize,
    seed: u64,
    phase1_iters: usize,
    phase1_lr: f64,
    phase2_lr: f64,
    weight_decay: f64,
    lambda_node: f64,
}

impl Default for FileConfig {
    fn default() -> Self {
        let spec = ModelSpec::default();
        let t = TrainConfig::default();
        FileConfig {
            num_classes: spec.backbone.num_classes,
            c1: spec.backbone.c1,
            c2: spec.backbone.c2,
            node_stride: spec.backbone.node_stride,
            hidden_dim: spec.hidden_dim,
            l: spec.l,
            sigma: spec.sigma,
            epochs: t.epochs,
            seed: t.seed,
            phase1_iters: t.phase1_iters,
            phase1_lr: t.phase1_lr,
            phase2_lr: t.phase2_lr,
            weight_decay: t.weight_decay,
            lambda_node: t.lambda_node,
        }
    }
}

impl FileConfig {
    fn split(&self) -> (ModelSpec, TrainConfig) {
        let spec = ModelSpec {
            backbone: BackboneConfig {
                in_channels: 3,
                c1: self.c1,
                c2: self.c2,
                node_stride: self.node_stride,
                num_classes: self.num_classes,
            },
            hidden_dim: self.hidden_dim,
            l: self.l,
            sigma: self.sigma,
        };
        let cfg = TrainConfig {
            phase1_iters: self.phase1_iters,
            phase1_lr: self.phase1_lr,
            phase2_lr: self.phase2_lr,
            weight_decay: self.weight_decay,
            lambda_node: self.lambda_node,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        };
        (spec, cfg)
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), Error> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("size {s:?} is not HxW")))?;
    let parse = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| Error::Config(format!("size component {v:?} is not an integer")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("GRAPHFCN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for usage/config mistakes, 1 for runtime failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenerateData {
            out,
            count,
            size,
            classes,
            seed,
            force,
        } => {
            let (h, w) = parse_size(&size)?;
            if out.exists() && out.read_dir()?.next().is_some() && !force {
                return Err(Error::Config(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    out.display()
                )));
            }
            let samples = data::generate_shapes(count, h, w, classes, seed)?;
            let n_train = (count * 4).div_ceil(5);
            let (train, test) = samples.split_at(n_train.min(samples.len()));
            data::save_dataset(train, test, &out)?;
            if !cli.quiet {
                println!(
                    "wrote {} train / {} test samples to {}",
                    train.len(),
                    test.len(),
                    out.display()
                );
            } else {
                println!(
                    "{}",
                    serde_json::json!({"train": train.len(), "test": test.len()})
                );
            }
            Ok(())
        }
        Command::Train {
            data: data_dir,
            config,
            out,
            no_gcn,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let file_cfg: FileConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let (spec, mut cfg) = file_cfg.split();
            if no_gcn {
                cfg.lambda_node = 0.0;
                cfg.phase1_iters = 0;
            }
            let (train_set, test_set) =
                data::load_dataset(&data_dir, spec.backbone.num_classes)?;
            let out_dir = out.parent().map(PathBuf::from).unwrap_or_default();
            let mut epoch_metrics = Vec::new();
            let (params, report) =
                training::train_with(&train_set, &spec, &cfg, !no_gcn, |epoch, params, rec| {
                    let m = if test_set.is_empty() {
                        None
                    } else {
                        Some(training::evaluate(params, &spec, &test_set)?.1)
                    };
                    eprintln!(
                        "epoch {epoch}: L1 {:.4} L2 {:.4} total {:.4}{}",
                        rec.mean_l1,
                        rec.mean_l2,
                        rec.mean_total,
                        m.as_ref()
                            .map(|m| format!(" | test mIOU {:.4}", m.miou))
                            .unwrap_or_default()
                    );
                    epoch_metrics.push(serde_json::json!({
                        "epoch": epoch,
                        "mean_l1": rec.mean_l1,
                        "mean_l2": rec.mean_l2,
                        "mean_total": rec.mean_total,
                        "test": m,
                    }));
                    Ok(())
                })?;
            params.save(&out)?;
            std::fs::write(out_dir.join("report.csv"), report.to_csv())?;
            std::fs::write(
                out_dir.join("metrics.json"),
                serde_json::to_string_pretty(&epoch_metrics)
                    .map_err(|e| Error::Config(e.to_string()))?,
            )?;
            if cli.quiet {
                print!("{}", report.to_csv());
            } else {
                println!("checkpoint written to {}", out.display());
            }
            Ok(())
        }
        Command::Eval { data: data_dir, ckpt } => {
            let params = ModelParams::load(&ckpt)?;
            let spec = ModelSpec::from_params(&params)?;
            let (_, test_set) = data::load_dataset(&data_dir, spec.backbone.num_classes)?;
            if test_set.is_empty() {
                return Err(Error::Parameter("dataset has no test split".into()));
            }
            let (_, metrics) = training::evaluate(&params, &spec, &test_set)?;
            println!(
                "{}",
                serde_json::to_string(&metrics).map_err(|e| Error::Config(e.to_string()))?
            );
            Ok(())
        }
        Command::Predict { image, ckpt, out } => {
            let params = ModelParams::load(&ckpt)?;
            let spec = ModelSpec::from_params(&params)?;
            let img = data::read_ppm(&image)?;
            let labels = training::predict_labels(&params, &spec, &img)?;
            data::write_prediction(&labels, &out)?;
            if !cli.quiet {
                println!("prediction written to {}", out.display());
            }
            Ok(())
        }
        Command::InspectGraph {
            size,
            l,
            sigma,
            node,
            hops,
        } => {
            let (h, w) = parse_size(&size)?;
            let adj = graph::build_adjacency(h, w, l, sigma)?;
            match node {
                Some(node) => {
                    let rf = graph::receptive_field(&adj, node, hops)?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "node": node,
                            "hops": hops,
                            "size": rf.len(),
                            "nodes": rf.iter().collect::<Vec<_>>(),
                        })
                    );
                }
                None => {
                    for &(r, c, wgt) in adj.entries() {
                        println!("{r} {c} {wgt}");
                    }
                }
            }
            Ok(())
        }
        Command::CheckGrads { seed } => {
            let (worst, checked) = check_grads(seed)?;
            println!(
                "{}",
                serde_json::json!({"max_rel_err": worst, "checked": checked, "tolerance": 1e-4})
            );
            if worst >= 1e-4 {
                return Err(Error::Parameter(format!(
                    "gradient check failed: max relative error {worst:e}"
                )));
            }
            Ok(())
        }
    }
}

/// Full-model gradient check on a small random sample.
fn check_grads(seed: u64) -> Result<(f64, usize), Error> {
    let spec = ModelSpec {
        backbone: BackboneConfig {
            in_channels: 3,
            c1: 3,
            c2: 4,
            node_stride: 8,
            num_classes: 2,
        },
        hidden_dim: 5,
        l: 2,
        sigma: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = Tensor::new(
        vec![3, 16, 16],
        (0..3 * 256).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let labels = LabelMap::new(
        16,
        16,
        (0..256).map(|_| rng.random_range(0..2u8)).collect(),
    )?;
    let sample = Sample {
        image,
        labels,
        id: "gradcheck".into(),
    };
    let params = spec.init_params(seed)?;
    let (_, analytic) = training::loss_and_gradients(&params, &spec, &sample, 1.0)?;
    let flat = params.flatten();
    let f = |p: &[f64]| training::loss_at(p, &params, &spec, &sample, 1.0);
    let mut indices: Vec<usize> = Vec::new();
    for _ in 0..30 {
        indices.push(rng.random_range(0..flat.len()));
    }
    let (worst, _) = gradcheck::check_indices(&f, &flat, &analytic, &indices, 1e-5);
    Ok((worst, indices.len()))
}
