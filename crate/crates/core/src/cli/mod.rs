//! `posdistill` command line: generate | train | sweep | evaluate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, LoadedModel};
use crate::config::RunConfig;
use crate::data::{ctr_csv, ctr_table, empirical_ctr_by_position, generate, load_jsonl, load_split, write_split};
use crate::distill::{fit, sweep_lambda, DistillVariant, SweepResult};
use crate::error::{Error, Result};
use crate::eval::{compare_models, position_spearman, report_from_scores, score, MetricsReport, ScoreRule};
use crate::method::ModelName;

#[derive(Debug, Parser)]
#[command(name = "posdistill", version, about = "Position-debiased CTR training with teacher-student distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic click log (train / validation / test).
    Generate(GenerateArgs),
    /// Train one model and write its checkpoint and history.
    Train(TrainArgs),
    /// Sweep λ for logit and feature distillation.
    Sweep(SweepArgs),
    /// Score checkpoints and print the comparison table.
    Evaluate(EvaluateArgs),
}

/// Settings shared by every command. Flags override the config file.
#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `$POSDISTILL_OUT`, then `./runs`).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_validation: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Position-decay exponent of the generator.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Logit,
    Feature,
    None,
}

impl From<ModeArg> for DistillVariant {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Logit => DistillVariant::Logit,
            ModeArg::Feature => DistillVariant::Feature,
            ModeArg::None => DistillVariant::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// ours | backbone | fixed_pos | pos_dropout | pal
    #[arg(long, short)]
    pub model: ModelName,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated λ grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint files; runs sharing a model label are aggregated.
    #[arg(required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Score with the logged positions on the training path. Diagnostic
    /// only; this is never how a model is served.
    #[arg(long)]
    pub with_positions: bool,
}

impl Common {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            c.paths.out = Some(o.clone());
        }
        if let Some(d) = &self.data {
            c.paths.data = Some(d.clone());
        }
        if let Some(s) = self.seed {
            c.train.seed = s;
            c.gen.seed = s;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.train.adam.lr = v;
        }
        if let Some(v) = self.n_train {
            c.gen.n_train = v;
        }
        if let Some(v) = self.n_validation {
            c.gen.n_validation = v;
        }
        if let Some(v) = self.n_test {
            c.gen.n_test = v;
        }
        if let Some(v) = self.eta {
            c.gen.eta = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn echo_hash(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "config hash: {}", cfg.hash()).map_err(out_err)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve()?;
    echo_hash(&cfg, out)?;
    let dir = args.common.out.clone().unwrap_or_else(|| cfg.data_dir());
    let split = generate(&cfg.schema, &cfg.gen)?;
    write_split(&dir, &split)?;
    let rows = empirical_ctr_by_position(&split.train, cfg.schema.num_positions);
    write_file(&dir.join("ctr_by_position.csv"), ctr_csv(&rows).as_bytes())?;
    write!(
        out,
        "wrote {} train / {} validation / {} test examples to {}\n{}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        dir.display(),
        ctr_table(&rows)
    )
    .map_err(out_err)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(m) = args.mode {
        cfg.distill.mode = m.into();
    }
    if let Some(l) = args.lambda {
        cfg.distill.lambda = l;
    }
    cfg.validate()?;
    echo_hash(&cfg, out)?;
    let method = cfg.method(args.model);
    let data = load_split(&cfg.data_dir(), &cfg.schema)?;
    let trained = fit(&method, &data.train, &data.validation, &cfg.schema, &cfg.tower, &cfg.train)?;

    let dir = cfg.out_root();
    write_file(&dir.join("checkpoint.json"), Checkpoint::from_trained(&trained).to_json()?.as_bytes())?;
    write_file(&dir.join("history.csv"), trained.history.to_csv().as_bytes())?;
    write_file(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;

    let last = trained.history.last().expect("at least one epoch");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    writeln!(
        out,
        "{} seed {}: {} epochs, val AUC {} LogLoss {}; checkpoint in {}",
        args.model,
        cfg.train.seed,
        last.epoch,
        fmt(last.val_s.and_then(|m| m.auc)),
        fmt(last.val_s.map(|m| m.logloss)),
        dir.display()
    )
    .map_err(out_err)
}

pub const SWEEP_HEADER: &str = "mode,lambda,val_logloss,val_auc,selected,error";

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in results {
        for row in &r.rows {
            let (ll, auc, err) = match &row.outcome {
                Ok((ll, auc)) => (ll.to_string(), auc.map(|a| a.to_string()).unwrap_or_default(), String::new()),
                Err(e) => (String::new(), String::new(), format!("\"{}\"", e.replace('"', "'"))),
            };
            s.push_str(&format!(
                "{},{},{ll},{auc},{},{err}\n",
                r.mode.as_str(),
                row.lambda,
                r.selected == Some(row.lambda)
            ));
        }
    }
    s
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(g) = &args.grid {
        cfg.sweep.grid = g.clone();
    }
    cfg.validate()?;
    echo_hash(&cfg, out)?;
    let data = load_split(&cfg.data_dir(), &cfg.schema)?;
    let mut results = Vec::new();
    for mode in [DistillVariant::Logit, DistillVariant::Feature] {
        let r = sweep_lambda(
            &data.train,
            &data.validation,
            &cfg.schema,
            &cfg.tower,
            &cfg.train,
            &cfg.distill,
            mode,
            &cfg.sweep.grid,
        )?;
        for row in &r.rows {
            match &row.outcome {
                Ok((ll, auc)) => writeln!(
                    out,
                    "{:<8} λ={:<5} val LogLoss {ll:.6}  AUC {}",
                    mode.as_str(),
                    row.lambda,
                    auc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "-".into())
                ),
                Err(e) => writeln!(out, "{:<8} λ={:<5} failed: {e}", mode.as_str(), row.lambda),
            }
            .map_err(out_err)?;
        }
        results.push(r);
    }
    for r in &results {
        match r.selected {
            Some(l) => writeln!(out, "winner {}: λ={l}", r.mode.as_str()),
            None => writeln!(out, "winner {}: none (every cell failed)", r.mode.as_str()),
        }
        .map_err(out_err)?;
    }
    write_file(&cfg.out_root().join("sweep.csv"), sweep_csv(&results).as_bytes())
}

fn model_order(label: &str) -> usize {
    label
        .parse::<ModelName>()
        .ok()
        .and_then(|m| ModelName::ALL.iter().position(|&x| x == m))
        .unwrap_or(ModelName::ALL.len())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve()?;
    echo_hash(&cfg, out)?;
    let file = match args.split {
        SplitArg::Validation => "validation.jsonl",
        SplitArg::Test => "test.jsonl",
    };
    let data = load_jsonl(&cfg.data_dir().join(file), &cfg.schema)?;
    let rule = if args.with_positions {
        ScoreRule::WithPositions
    } else {
        ScoreRule::Serving
    };

    let models: Vec<LoadedModel> = args
        .checkpoints
        .iter()
        .map(|p| {
            let ck = Checkpoint::load(p)?;
            ck.check_schema(&cfg.schema)?;
            ck.into_model()
        })
        .collect::<Result<_>>()?;
    let k = cfg.schema.num_positions;
    let reports: Vec<MetricsReport> = models
        .par_iter()
        .map(|m| {
            let s = score(&m.method, &m.network, &m.params, &data, rule)?;
            report_from_scores(&s, &data, k)
        })
        .collect::<Result<_>>()?;

    let mut grouped: BTreeMap<(usize, String), Vec<MetricsReport>> = BTreeMap::new();
    for (m, r) in models.iter().zip(reports) {
        grouped
            .entry((model_order(&m.label), m.label.clone()))
            .or_default()
            .push(r);
    }
    let entries: Vec<(String, Vec<MetricsReport>)> = grouped.into_iter().map(|((_, l), r)| (l, r)).collect();
    let table = compare_models(&entries)?;

    let dir = cfg.out_root();
    let suffix = if args.with_positions { "_with_positions" } else { "" };
    write_file(&dir.join(format!("comparison{suffix}.txt")), table.to_text().as_bytes())?;
    write_file(&dir.join(format!("comparison{suffix}.csv")), table.to_csv().as_bytes())?;
    write!(out, "{}", table.to_text()).map_err(out_err)?;
    for (label, runs) in &entries {
        let curve: Vec<Option<f64>> = (0..k)
            .map(|p| {
                let v: Vec<f64> = runs.iter().filter_map(|r| r.pctr_by_pos[p]).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        write_file(
            &dir.join(format!("pctr_by_position_{label}{suffix}.csv")),
            crate::eval::pctr_csv(&curve).as_bytes(),
        )?;
        let rho = position_spearman(&curve)
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "-".into());
        writeln!(out, "{label}: Spearman(pCTR, position) = {rho}").map_err(out_err)?;
    }
    Ok(())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
    }
}

/// Entry point for the binary: runs and maps errors to exit codes.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    let res = match &cli.command {
        Command::Generate(a) => cmd_generate(a, &mut stdout),
        Command::Train(a) => cmd_train(a, &mut stdout),
        Command::Sweep(a) => cmd_sweep(a, &mut stdout),
        Command::Evaluate(a) => cmd_evaluate(a, &mut stdout),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
