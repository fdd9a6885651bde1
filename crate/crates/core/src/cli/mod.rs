//! Command-line front end. `main.rs` only parses arguments and reports errors.

mod config;

pub use config::{BenchConfig, BenchDecoder, RunConfig};

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::archive::{save_lookup, Dtype, ModelArchive};
use crate::decode::{beam_decode, bench_decoders, convert_to_lookup, greedy_decode, EncoderFrames, DEFAULT_LOOKUP_BUDGET};
use crate::decoder::{param_count, DecoderConfig, DecoderModel, TensorCount, PRESET_NAMES};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::training::{embr_train, init_transducer, make_toy_dataset, train_model, Transducer};

#[derive(Debug, Parser)]
#[command(name = "reduced-rnnt", version, about = "Tied and reduced transducer decoders")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Override the seed of the section the subcommand uses.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-tensor parameter counts of the reference decoders.
    Params {
        /// Also count the decoder section of this run config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on the synthetic task and write a model archive.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines epoch log; defaults to `<out>.metrics.jsonl`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Fine-tune a trained model with minimum Bayes risk.
    Embr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Beam width (and n-best size).
        #[arg(long)]
        beam: Option<usize>,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Decode one utterance given as JSON `{"features": [[..]]}` or `{"frames": [[..]]}`.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Beam search with this width instead of greedy search.
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Tabulate a finite-context prediction network.
    ConvertLookup {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest number of contexts allowed.
        #[arg(long, default_value_t = DEFAULT_LOOKUP_BUDGET)]
        budget: usize,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Time single decoder steps of the configured decoders.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DtypeChoice {
    F64,
    F32,
}

#[derive(Debug, Args)]
pub struct DtypeArg {
    /// Float width of the written archive.
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeChoice,
}

impl DtypeArg {
    fn get(&self) -> Dtype {
        match self.dtype {
            DtypeChoice::F64 => Dtype::F64,
            DtypeChoice::F32 => Dtype::F32,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let text = match &cli.command {
        Command::Params { config } => cmd_params(config.as_deref(), cli.json)?,
        Command::Train { config, out: path, metrics, dtype } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            let metrics = metrics.clone().unwrap_or_else(|| {
                let mut p = path.clone().into_os_string();
                p.push(".metrics.jsonl");
                PathBuf::from(p)
            });
            cmd_train(&cfg, path, &metrics, dtype.get(), cli.json)?
        }
        Command::Embr { config, model, out: path, beam, dtype } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.embr.seed = s;
            }
            if let Some(b) = beam {
                cfg.embr.beam_width = *b;
            }
            cmd_embr(&cfg, model, path, dtype.get(), cli.json)?
        }
        Command::Decode { model, input, beam } => cmd_decode(model, input, *beam, cli.json)?,
        Command::ConvertLookup { model, out: path, budget, dtype } => {
            cmd_convert_lookup(model, path, *budget, dtype.get(), cli.json)?
        }
        Command::Bench { config } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.bench.seed = s;
            }
            cmd_bench(&cfg.bench, cli.json)?
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

#[derive(Serialize)]
struct DecoderParams {
    name: String,
    variant: &'static str,
    tied: bool,
    tensors: Vec<TensorCount>,
    total: usize,
    joint_dim: usize,
    vocab_size: usize,
    /// `d_h · |V|` for tied decoders.
    tied_savings: Option<usize>,
}

fn decoder_params(name: &str, cfg: &DecoderConfig) -> DecoderParams {
    let count = param_count(cfg);
    DecoderParams {
        name: name.into(),
        variant: cfg.variant.name(),
        tied: cfg.tied,
        tensors: count.tensors,
        total: count.total,
        joint_dim: cfg.joint_dim,
        vocab_size: cfg.vocab_size,
        tied_savings: cfg.tied.then_some(cfg.joint_dim * cfg.vocab_size),
    }
}

pub fn cmd_params(config: Option<&Path>, json: bool) -> Result<String> {
    let mut rows = PRESET_NAMES
        .iter()
        .map(|n| Ok(decoder_params(n, &DecoderConfig::preset(n)?)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = config {
        let cfg = RunConfig::load(path)?;
        rows.push(decoder_params("config", &cfg.decoder));
    }
    if json {
        return Ok(to_json(&serde_json::json!({ "decoders": rows })) + "\n");
    }
    let mut s = String::new();
    for d in &rows {
        s.push_str(&format!("{} ({}, {})\n", d.name, d.variant, if d.tied { "tied" } else { "untied" }));
        for t in &d.tensors {
            let frozen = if t.trainable { "" } else { "  frozen" };
            s.push_str(&format!(
                "  {:<22} {:>12} {:>12}{frozen}\n",
                t.name,
                format!("{}x{}", t.shape[0], t.shape[1]),
                thousands(t.params)
            ));
        }
        s.push_str(&format!("  {:<22} {:>12} {:>12}\n", "total", "", thousands(d.total)));
        if let Some(saved) = d.tied_savings {
            s.push_str(&format!("  tied savings: d_h*|V| = {}*{} = {}\n", d.joint_dim, d.vocab_size, thousands(saved)));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path, metrics_path: &Path, dtype: Dtype, json: bool) -> Result<String> {
    let data = make_toy_dataset(&cfg.task, cfg.train.seed)?;
    let mut model = init_transducer(&cfg.decoder, &cfg.task, cfg.train.seed)?;
    let mut log = File::create(metrics_path).map_err(|e| Error::io(metrics_path, e))?;
    let metrics = train_model(&mut model, &data, &cfg.train, |m| {
        writeln!(log, "{}", serde_json::to_string(m).expect("metrics serialize")).map_err(|e| Error::io(metrics_path, e))
    })?;
    let archive = ModelArchive {
        seed: Some(cfg.train.seed),
        encoder: Some(model.encoder.clone()),
        ..ModelArchive::new(model.decoder.config.clone(), model.decoder.weights.clone())?
    };
    archive.save(out, dtype)?;
    let last = metrics.last();
    if json {
        return Ok(to_json(&serde_json::json!({
            "model": out.display().to_string(),
            "metrics": metrics_path.display().to_string(),
            "final": last,
        })) + "\n");
    }
    Ok(match last {
        Some(m) => format!(
            "trained {} epochs: loss {:.4}, dev token error {:.4}, {:.1}s\nwrote {}\n",
            m.epoch,
            m.loss,
            m.dev_token_error_rate,
            m.wall_s,
            out.display()
        ),
        None => format!("no epochs run\nwrote {}\n", out.display()),
    })
}

fn load_transducer(path: &Path) -> Result<(Transducer, ModelArchive)> {
    let archive = ModelArchive::load(path)?;
    let encoder = archive
        .encoder
        .clone()
        .ok_or_else(|| Error::Validation(format!("{} has no toy encoder", path.display())))?;
    let decoder = DecoderModel::new(archive.config.clone(), archive.weights.clone())?;
    Ok((Transducer::new(encoder, decoder)?, archive))
}

pub fn cmd_embr(cfg: &RunConfig, model_path: &Path, out: &Path, dtype: Dtype, json: bool) -> Result<String> {
    let (mut model, archive) = load_transducer(model_path)?;
    if model.encoder.feature_dim() != cfg.task.feature_dim || model.decoder.config.vocab_size != cfg.task.vocab_size {
        return Err(Error::Config("model does not match the task section".into()));
    }
    let data = make_toy_dataset(&cfg.task, cfg.train.seed)?;
    let steps = cfg.embr.steps.unwrap_or_else(|| cfg.train.total_steps(data.train.len()) / 10);
    let outcome = embr_train(&mut model, &data, &cfg.embr, steps)?;
    let saved = ModelArchive {
        encoder: Some(model.encoder.clone()),
        weights: model.decoder.weights.clone(),
        ..archive
    };
    saved.save(out, dtype)?;
    if json {
        return Ok(to_json(&outcome) + "\n");
    }
    Ok(format!(
        "EMBR {} steps (beam {}): dev risk {:.4} -> {:.4}, skipped {}\nwrote {}\n",
        outcome.steps,
        cfg.embr.beam_width,
        outcome.dev_risk_before,
        outcome.dev_risk_after,
        outcome.skipped,
        out.display()
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeInput {
    features: Option<Vec<Vec<f64>>>,
    frames: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<Matrix> {
    if rows.is_empty() {
        Ok(Matrix::zeros(0, dim))
    } else {
        Matrix::from_rows(rows)
    }
}

pub fn cmd_decode(model_path: &Path, input: &Path, beam: Option<usize>, json: bool) -> Result<String> {
    let archive = ModelArchive::load(model_path)?;
    let model = DecoderModel::new(archive.config.clone(), archive.weights.clone())?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let parsed: DecodeInput = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Schema { path: e.path().to_string(), message: e.into_inner().to_string() })?;
    let enc = match (parsed.features, parsed.frames, &archive.encoder) {
        (Some(f), None, Some(encoder)) => encoder.encode(&rows_to_matrix(&f, encoder.feature_dim())?)?,
        (Some(_), None, None) => {
            return Err(Error::Validation("model has no toy encoder; pass `frames` instead of `features`".into()))
        }
        (None, Some(f), _) => EncoderFrames::new(rows_to_matrix(&f, model.config.encoder_dim)?)?,
        _ => {
            return Err(Error::Schema {
                path: ".".into(),
                message: "input needs exactly one of `features` or `frames`".into(),
            })
        }
    };
    let join = |l: &[usize]| l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    match beam {
        None => {
            let g = greedy_decode(&model, &enc)?;
            if json {
                return Ok(to_json(&serde_json::json!({ "labels": g.labels, "log_prob": g.log_prob })) + "\n");
            }
            Ok(format!("labels: {}\nlog_prob: {:.6}\n", join(&g.labels), g.log_prob))
        }
        Some(b) => {
            let nbest = beam_decode(&model, &enc, b)?;
            if json {
                return Ok(to_json(&serde_json::json!({ "nbest": nbest })) + "\n");
            }
            let mut s = String::new();
            for (i, e) in nbest.iter().enumerate() {
                s.push_str(&format!("{}\t{:.6}\t{}\n", i + 1, e.log_prob, join(&e.labels)));
            }
            Ok(s)
        }
    }
}

pub fn cmd_convert_lookup(model_path: &Path, out: &Path, budget: usize, dtype: Dtype, json: bool) -> Result<String> {
    let archive = ModelArchive::load(model_path)?;
    let model = DecoderModel::new(archive.config.clone(), archive.weights)?;
    let table = convert_to_lookup(&model, budget)?;
    save_lookup(&table, &model.config, out, dtype)?;
    if json {
        return Ok(to_json(&serde_json::json!({
            "contexts": table.len(),
            "dim": table.dim(),
            "out": out.display().to_string(),
        })) + "\n");
    }
    Ok(format!("wrote {} contexts of dim {} to {}\n", table.len(), table.dim(), out.display()))
}

#[derive(Serialize)]
struct Comparison {
    decoder: String,
    speedup: f64,
    flop_ratio: f64,
}

pub fn cmd_bench(cfg: &BenchConfig, json: bool) -> Result<String> {
    let decoders = cfg.decoders.iter().map(BenchDecoder::resolve).collect::<Result<Vec<_>>>()?;
    if !decoders.iter().any(|(n, _)| *n == cfg.baseline) {
        return Err(Error::Config(format!("baseline `{}` is not among the benchmarked decoders", cfg.baseline)));
    }
    let warmup = cfg.warmup.unwrap_or(cfg.runs / 10);
    let report = bench_decoders(&decoders, cfg.runs, warmup, cfg.seed, &cfg.core_label)?;
    let comparisons: Vec<Comparison> = decoders
        .iter()
        .filter(|(n, _)| *n != cfg.baseline)
        .map(|(n, _)| Comparison {
            decoder: n.clone(),
            speedup: report.speedup(&cfg.baseline, n).unwrap_or(f64::NAN),
            flop_ratio: report.flop_ratio(&cfg.baseline, n).unwrap_or(f64::NAN),
        })
        .collect();
    if json {
        return Ok(to_json(&serde_json::json!({
            "baseline": cfg.baseline,
            "records": report.records,
            "step_flops": report.step_flops,
            "comparisons": comparisons,
        })) + "\n");
    }
    let mut s = report.to_table();
    for c in &comparisons {
        s.push_str(&format!(
            "{} vs {}: speedup {:.2}x, FLOP ratio {:.1}x\n",
            c.decoder, cfg.baseline, c.speedup, c.flop_ratio
        ));
    }
    Ok(s)
}
