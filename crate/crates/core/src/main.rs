use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use candlenet::decomposer::subcharts;
use candlenet::experiment::{
    build_dataset, evaluate_arm, read_report, render_report, run_experiment, train_arm, write_report,
    ExperimentManifest,
};
use candlenet::market_data::{parse_csv, synth_series, window, BadRowPolicy, ColumnMap, Series, SynthParams};
use candlenet::pattern::{detect_all, to_json_lines, PatternRuleParams};
use candlenet::raster::{read_ppm, render_pattern, render_window, write_ppm, RenderSpec};

#[derive(Parser)]
#[command(name = "candlenet", version, about = "Candlestick pattern datasets, chart images and CNN experiments")]
struct Cli {
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest's master seed; seeds synthetic input elsewhere.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect, label and render the manifest's datasets.
    BuildDataset {
        /// Only this dataset.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print pattern matches as JSON lines.
    Detect(SeriesInput),
    /// Render one history window (and optionally its pattern crop) as PPM.
    Render {
        #[command(flatten)]
        input: SeriesInput,
        /// Last candle of the window; defaults to the series' last candle.
        #[arg(long)]
        end_index: Option<usize>,
        #[arg(long, default_value_t = 30)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also render the last `span` candles on the annotation tint.
        #[arg(long)]
        pattern_span: Option<usize>,
        #[arg(long, requires = "pattern_span")]
        pattern_out: Option<PathBuf>,
    },
    /// Cut a rendered chart into sliding sub-charts `{stem}.sub{index}.ppm`.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Defaults to the input's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train one arm on one dataset and print its run record as JSON.
    Train(ArmSelect),
    /// Evaluate a trained arm's checkpoint on the test partition.
    Eval(ArmSelect),
    /// Run every arm on every dataset and write report.json / report.md.
    Experiment {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Re-render report.md from report.json and print it.
    Report {
        /// Defaults to `<output_dir>/report.json` from the manifest.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SeriesInput {
    /// OHLC CSV with a `Date,Open,High,Low,Close` header.
    #[arg(long, conflicts_with = "synth")]
    csv: Option<PathBuf>,
    /// Generate a synthetic series of this many candles instead.
    #[arg(long)]
    synth: Option<usize>,
    #[arg(long, default_value = "SERIES")]
    symbol: String,
}

#[derive(Args)]
struct ArmSelect {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    arm: String,
}

fn load_manifest(cli: &Cli) -> Result<ExperimentManifest> {
    let path = cli.manifest.as_ref().ok_or_else(|| anyhow!("--manifest is required"))?;
    let mut m = ExperimentManifest::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        m.master_seed = seed;
    }
    Ok(m)
}

fn optional_manifest(cli: &Cli) -> Result<Option<ExperimentManifest>> {
    cli.manifest.as_ref().map(|_| load_manifest(cli)).transpose()
}

fn load_series(input: &SeriesInput, seed: Option<u64>) -> Result<Series> {
    match (&input.csv, input.synth) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let import = parse_csv(&text, &input.symbol, &ColumnMap::default(), BadRowPolicy::SkipWithWarning)?;
            for s in &import.skipped {
                eprintln!("warning: skipped line {}: {}", s.line, s.reason);
            }
            Ok(import.series)
        }
        (None, Some(n)) => {
            let s = synth_series(seed.unwrap_or(0), n, &SynthParams::default())?;
            Ok(Series::new(&input.symbol, s.candles().to_vec())?)
        }
        (None, None) => bail!("give --csv <path> or --synth <candles>"),
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit_raw(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(line: &str) -> Result<()> {
    emit_raw(&format!("{line}\n"))
}

fn ensure_dataset(m: &ExperimentManifest, name: &str) -> Result<()> {
    let dir = m.dataset_dir(name);
    if !dir.join("manifest.jsonl").exists() {
        let series = m.member_series(name)?;
        build_dataset(name, &series, &dir, &m.pattern, &m.labeler, &m.render)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::BuildDataset { dataset, output_dir } => {
            let mut m = load_manifest(&cli)?;
            if let Some(d) = output_dir {
                m.output_dir = d.clone();
            }
            for entry in &m.datasets {
                if dataset.as_ref().is_some_and(|d| *d != entry.name) {
                    continue;
                }
                let dir = m.dataset_dir(&entry.name);
                let summary =
                    build_dataset(&entry.name, &m.member_series(&entry.name)?, &dir, &m.pattern, &m.labeler, &m.render)?;
                emit(&format!(
                    "{}: {} samples ({} strong, {} weak) in {}",
                    entry.name,
                    summary.samples,
                    summary.class_balance.strong,
                    summary.class_balance.weak,
                    dir.display()
                ))?;
            }
            Ok(true)
        }
        Command::Detect(input) => {
            let params = optional_manifest(&cli)?.map_or_else(PatternRuleParams::default, |m| m.pattern);
            let series = load_series(input, cli.seed)?;
            emit_raw(&to_json_lines(&detect_all(&series, &params)))?;
            Ok(true)
        }
        Command::Render { input, end_index, window: w, out, pattern_span, pattern_out } => {
            let spec = optional_manifest(&cli)?.map_or_else(RenderSpec::default, |m| m.render);
            let series = load_series(input, cli.seed)?;
            let end = end_index.unwrap_or(series.len().saturating_sub(1));
            let win = window(&series, end, *w)?;
            fs::write(out, write_ppm(&render_window(&win, &spec)?))?;
            if let (Some(span), Some(path)) = (pattern_span, pattern_out) {
                let m = candlenet::pattern::PatternMatch {
                    kind: candlenet::pattern::PatternKind::Doji,
                    end_index: end,
                    span: *span,
                    direction: candlenet::pattern::Direction::Neutral,
                };
                fs::write(path, write_ppm(&render_pattern(&win, &m, &spec)?))?;
            }
            Ok(true)
        }
        Command::Decompose { input, k, stride, out_dir } => {
            let spec = optional_manifest(&cli)?.map_or_else(RenderSpec::default, |m| m.render);
            let image = read_ppm(&fs::read(input).with_context(|| format!("reading {}", input.display()))?)?;
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("input has no file name"))?;
            let dir = out_dir.clone().unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
            fs::create_dir_all(&dir)?;
            let crops = subcharts(&image, &spec, *k, *stride)?;
            for (i, crop) in crops.iter().enumerate() {
                fs::write(dir.join(format!("{stem}.sub{i}.ppm")), write_ppm(crop))?;
            }
            emit(&format!("{} sub-charts written to {}", crops.len(), dir.display()))?;
            Ok(true)
        }
        Command::Train(sel) => {
            let m = load_manifest(&cli)?;
            let arm = m.arm(&sel.arm).ok_or_else(|| anyhow!("unknown arm {:?}", sel.arm))?;
            ensure_dataset(&m, &sel.dataset)?;
            let run = train_arm(&m, &sel.dataset, arm)?;
            emit(&serde_json::to_string_pretty(&run)?)?;
            Ok(true)
        }
        Command::Eval(sel) => {
            let m = load_manifest(&cli)?;
            let arm = m.arm(&sel.arm).ok_or_else(|| anyhow!("unknown arm {:?}", sel.arm))?;
            let report = evaluate_arm(&m, &sel.dataset, arm)?;
            emit(&serde_json::to_string_pretty(&report)?)?;
            Ok(true)
        }
        Command::Experiment { output_dir } => {
            let mut m = load_manifest(&cli)?;
            if let Some(d) = output_dir {
                m.output_dir = d.clone();
            }
            let report = run_experiment(&m)?;
            emit_raw(&render_report(&report).0)?;
            Ok(report.all_succeeded())
        }
        Command::Report { report } => {
            let path = match report {
                Some(p) => p.clone(),
                None => load_manifest(&cli)?.output_dir.join("report.json"),
            };
            let r = read_report(&path)?;
            write_report(&r, path.parent().unwrap_or(Path::new(".")))?;
            emit_raw(&render_report(&r).0)?;
            Ok(r.all_succeeded())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
