//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 internal failure, 2 config or flag error, 3 IO or data file
//! failure, 4 checkpoint missing or mismatched, 5 degenerate data.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::blocknet::BlockNet;
use crate::checkpoint::{decode, infer_spec, save_checkpoint};
use crate::config::RunConfig;
use crate::dataforge::{generate_domain, Dataset, DomainRecipe, SampleManifest};
use crate::error::Error;
use crate::report;
use crate::trainer::{evaluate, pretrain, run_transfer};

pub const PRETRAIN_BEST: &str = "pretrain_best.xtck";
pub const PRETRAIN_LAST: &str = "pretrain_last.xtck";
pub const PRETRAIN_LOG: &str = "pretrain_log.csv";
pub const TRANSFER_MASTER: &str = "transfer_master.xtck";
pub const TRANSFER_AUX: &str = "transfer_aux.xtck";
pub const TRANSFER_LOG: &str = "transfer_log.csv";

const EVAL_BATCH: usize = 64;

#[derive(Parser, Debug)]
#[command(name = "xtransfer", version, about = "Sibling-network transfer learning for generated-image detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic domain: XIMG files plus manifest.csv.
    GenData {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count_real: usize,
        #[arg(long)]
        count_fake: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = crate::dataforge::synth::DEFAULT_IMAGE_SIZE)]
        image_size: usize,
    },
    /// Train a network on the source domain.
    Pretrain { config: PathBuf },
    /// Route-crossing transfer of a pretrained network to the target domain.
    Transfer {
        config: PathBuf,
        #[arg(long)]
        source_ckpt: PathBuf,
    },
    /// Score a manifest with a checkpoint and report ranking metrics as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Takes the network spec from this config instead of inferring it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a training log, or every log under a directory.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Default classification; callers override it where the stage decides
/// (anything while loading a checkpoint is a checkpoint failure).
fn code_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Io { .. } | Error::Csv(_) | Error::Format(_) => 3,
        Error::CheckpointMismatch(_) => 4,
        Error::DegenerateBatch(_) | Error::EmptyBatch | Error::InvalidLabel(_) => 5,
        _ => 1,
    }
}

fn fail(error: Error) -> Failure {
    Failure {
        code: code_of(&error),
        error,
    }
}

fn fail_with(code: i32) -> impl FnOnce(Error) -> Failure {
    move |error| Failure { code, error }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| fail(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::GenData {
            domain,
            out: dir,
            count_real,
            count_fake,
            seed,
            image_size,
        } => gen_data(&domain, &dir, count_real, count_fake, seed, image_size, out),
        Command::Pretrain { config } => cmd_pretrain(&config, out),
        Command::Transfer { config, source_ckpt } => cmd_transfer(&config, &source_ckpt, out),
        Command::Eval {
            ckpt,
            data,
            config,
            out: dest,
        } => cmd_eval(&ckpt, &data, config.as_deref(), dest.as_deref(), out),
        Command::Report { log, format } => cmd_report(&log, format, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(io_fail(Path::new("<stdout>")))
}

fn gen_data(domain: &str, dir: &Path, nr: usize, nf: usize, seed: u64, size: usize, out: &mut dyn Write) -> CliResult<()> {
    let recipe = DomainRecipe::by_name(domain, size).map_err(fail_with(2))?;
    if nr + nf == 0 {
        return Err(fail(Error::InvalidArgument("--count-real and --count-fake are both 0".into())));
    }
    let manifest = generate_domain(&recipe, nr, nf, seed, dir).map_err(|e| match e {
        Error::Config(_) | Error::InvalidArgument(_) => fail(e),
        other => fail_with(3)(other),
    })?;
    emit(
        out,
        &format!(
            "domain {domain}: {} entries ({} real, {} fake) in {}\n",
            manifest.len(),
            manifest.count_real(),
            manifest.count_fake(),
            dir.display()
        ),
    )
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    // A missing or unreadable config is a config error, not a data one.
    RunConfig::load(path).map_err(fail_with(2))
}

fn load_data(cfg: &RunConfig, which: &'static str) -> CliResult<Dataset> {
    let path = cfg.require(which).map_err(fail)?;
    if !path.exists() {
        return Err(fail(Error::Config(format!("{which}: {} does not exist", path.display()))));
    }
    let manifest = SampleManifest::read(path).map_err(fail_with(3))?;
    let data = Dataset::from_manifest(&manifest).map_err(|e| match e {
        Error::EmptyBatch | Error::InvalidLabel(_) | Error::DegenerateBatch(_) => fail(e),
        other => fail_with(3)(other),
    })?;
    let expect = (cfg.input_channels, cfg.image_size, cfg.image_size);
    if data.dims() != expect {
        return Err(fail(Error::Config(format!(
            "{which}: images are {:?} (C, H, W) but the config expects {expect:?}",
            data.dims()
        ))));
    }
    Ok(data)
}

fn prepare_output(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_fail(&cfg.output_dir))?;
    cfg.write_effective(&cfg.output_dir).map_err(fail)?;
    Ok(())
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "n/a".into(), |a| format!("{a:.4}"))
}

fn cmd_pretrain(config: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let train = load_data(&cfg, "source_train")?;
    let val = load_data(&cfg, "source_eval")?;
    prepare_output(&cfg)?;
    let optim = cfg.pretrain_optim();
    let net = BlockNet::build(&cfg.net_spec(), optim.seed).map_err(fail_with(2))?;
    let best_path = cfg.output_dir.join(PRETRAIN_BEST);
    let outcome = pretrain(net, &train, &val, &optim, Some(&best_path)).map_err(fail)?;
    save_checkpoint(&outcome.last, cfg.output_dir.join(PRETRAIN_LAST)).map_err(fail)?;
    outcome.log.save(&cfg.output_dir.join(PRETRAIN_LOG)).map_err(fail)?;
    emit(
        out,
        &format!(
            "pretrain {}: best epoch {} val auc {}; wrote {}\n",
            cfg.name,
            outcome.best_epoch,
            fmt_auc(outcome.best_auc),
            cfg.output_dir.display()
        ),
    )
}

fn load_ckpt(path: &Path, spec: Option<&crate::blocknet::NetSpec>) -> CliResult<BlockNet> {
    let bytes = std::fs::read(path).map_err(|e| fail_with(4)(Error::io(path, e)))?;
    let spec = match spec {
        Some(s) => s.clone(),
        None => infer_spec(&bytes).map_err(fail_with(4))?,
    };
    decode(&bytes, &spec).map_err(fail_with(4))
}

fn cmd_transfer(config: &Path, ckpt: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let pretrained = load_ckpt(ckpt, Some(&cfg.net_spec()))?;
    let target_train = load_data(&cfg, "target_train")?;
    let source_eval = load_data(&cfg, "source_eval")?;
    let target_eval = load_data(&cfg, "target_eval")?;
    prepare_output(&cfg)?;
    let outcome = run_transfer(&pretrained, &target_train, &source_eval, &target_eval, &cfg.transfer_optim()).map_err(fail)?;
    save_checkpoint(&outcome.master, cfg.output_dir.join(TRANSFER_MASTER)).map_err(fail)?;
    save_checkpoint(&outcome.aux, cfg.output_dir.join(TRANSFER_AUX)).map_err(fail)?;
    outcome.log.save(&cfg.output_dir.join(TRANSFER_LOG)).map_err(fail)?;
    emit(
        out,
        &format!(
            "transfer {}: best epoch {} source auc {} target auc {}; wrote {}\n",
            cfg.name,
            outcome.best_epoch,
            fmt_auc(outcome.source.map(|r| r.auc)),
            fmt_auc(outcome.target.map(|r| r.auc)),
            cfg.output_dir.display()
        ),
    )
}

fn cmd_eval(ckpt: &Path, data: &Path, config: Option<&Path>, dest: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let spec = match config {
        Some(p) => Some(load_config(p)?.net_spec()),
        None => None,
    };
    let net = load_ckpt(ckpt, spec.as_ref())?;
    let manifest = SampleManifest::read(data).map_err(fail_with(3))?;
    let dataset = Dataset::from_manifest(&manifest).map_err(fail)?;
    let report = evaluate(&net, &dataset, EVAL_BATCH).map_err(|e| match e {
        Error::Shape { .. } => fail_with(4)(e),
        other => fail(other),
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(dest) = dest {
        std::fs::write(dest, &json).map_err(io_fail(dest))?;
    }
    emit(out, &json)
}

fn cmd_report(log: &Path, format: Format, out: &mut dyn Write) -> CliResult<()> {
    let summaries = report::summarize_path(log).map_err(|e| match e {
        Error::Io { .. } => fail(e),
        other => fail_with(2)(other),
    })?;
    let text = match format {
        Format::Csv => report::to_csv(&summaries).map_err(fail)?,
        Format::Json => report::to_json(&summaries),
    };
    emit(out, &text)
}
