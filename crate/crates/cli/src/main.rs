use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use forcejs_core::cluster::{dbscan, read_features, write_assignments, DbscanParams, Metric};
use forcejs_core::harness::{
    generate_corpus, ingest, load_corpus, render_report, run_pipeline, write_run, GeneratorSpec, PipelineConfig,
    SampleKind,
};
use forcejs_core::{ApiCatalog, Mode, ResourceResolver};

#[derive(Parser)]
#[command(name = "forcejs", version, about = "Forced-execution analysis of JavaScript samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Script,
    Extension,
    Npm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Browser,
    Npm,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Jaccard,
    Hamming,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a script, extension directory, npm package directory or generated corpus.
    Analyze {
        path: PathBuf,
        /// Sample kind; guessed from the path when omitted.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// JSON API catalog replacing the built-in one.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// JSON fixtures standing in for the network and the shell.
        #[arg(long)]
        resources: Option<PathBuf>,
        /// Node budget of the per-condition block scan.
        #[arg(long, default_value_t = forcejs_core::scanner::DEFAULT_NODE_LIMIT)]
        limit: usize,
        /// Forced executions needed before a sample can be flagged.
        #[arg(long, default_value_t = forcejs_core::post::DEFAULT_FLAG_THRESHOLD)]
        threshold: usize,
        /// Also run without forcing and report the coverage difference.
        #[arg(long)]
        baseline: bool,
        /// Run directories are created under this directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        step_budget: u64,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Write a seeded synthetic corpus.
    GenCorpus {
        /// JSON generator spec; defaults cover every category and transform.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// DBSCAN over JSONL feature vectors on stdin; assignments go to stdout.
    Cluster {
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        #[arg(long, default_value_t = 2)]
        min_pts: usize,
        #[arg(long, value_enum, default_value = "jaccard")]
        metric: MetricArg,
    },
    /// Print the summary table of a run directory.
    Report { run_dir: PathBuf },
}

fn guess_kind(path: &Path) -> Result<SampleKind> {
    if path.is_file() {
        Ok(SampleKind::Script)
    } else if path.join("manifest.json").is_file() {
        Ok(SampleKind::Extension)
    } else if path.join("package.json").is_file() {
        Ok(SampleKind::Npm)
    } else {
        bail!("{}: cannot tell the sample kind; pass --kind", path.display())
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            path,
            kind,
            mode,
            catalog,
            resources,
            limit,
            threshold,
            baseline,
            out,
            step_budget,
            jobs,
        } => {
            if !path.exists() {
                bail!("{}: no such file or directory", path.display());
            }
            let (samples, mut resolver, synthetic) = if path.join("corpus.json").is_file() {
                let (samples, _, resolver) = load_corpus(&path)?;
                (samples, resolver, true)
            } else {
                let kind = match kind {
                    Some(KindArg::Script) => SampleKind::Script,
                    Some(KindArg::Extension) => SampleKind::Extension,
                    Some(KindArg::Npm) => SampleKind::Npm,
                    None => guess_kind(&path)?,
                };
                (vec![ingest(&path, kind)?], ResourceResolver::default(), false)
            };
            if let Some(r) = resources {
                resolver.extend(ResourceResolver::load(&r)?);
            }
            let catalog = catalog.map(|c| ApiCatalog::load(&c)).transpose()?.map(Arc::new);
            let cfg = PipelineConfig {
                mode: mode.map(|m| match m {
                    ModeArg::Browser => Mode::Browser,
                    ModeArg::Npm => Mode::Npm,
                }),
                catalog,
                resolver: Arc::new(resolver),
                node_limit: limit,
                step_budget,
                threshold,
                baseline,
                jobs,
                synthetic,
                ..PipelineConfig::default()
            };
            let result = run_pipeline(&samples, &cfg);
            let dir = write_run(&result, &out).with_context(|| format!("writing run under {}", out.display()))?;
            print!("{}", render_report(&result.summary));
            eprintln!("run written to {}", dir.display());
            Ok(if result.has_failures() { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::GenCorpus { spec, seed, out } => {
            let mut spec: GeneratorSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => GeneratorSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let corpus = generate_corpus(&spec);
            corpus.write(&out)?;
            eprintln!("{} samples written to {}", corpus.samples.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Cluster { eps, min_pts, metric } => {
            let metric = match metric {
                MetricArg::Jaccard => Metric::Jaccard,
                MetricArg::Hamming => Metric::Hamming,
            };
            let points = read_features(BufReader::new(std::io::stdin().lock()))?;
            let assignments = dbscan(&points, DbscanParams { eps, min_pts, metric });
            let mut stdout = std::io::stdout().lock();
            write_assignments(&assignments, &mut stdout)?;
            stdout.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir } => {
            let p = run_dir.join("summary.json");
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let summary: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            print!("{}", render_report(&summary));
            let failures = summary["failures"].as_u64().unwrap_or(0);
            Ok(if failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
