use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pfg_core::{ExecPolicy, RngHandle};
use pfg_harness::acceptance::{run_acceptance, AcceptanceOptions};
use pfg_harness::config::{ScenarioConfig, ScenarioKind};
use pfg_harness::presets::{load_preset, preset_names};
use pfg_harness::scenario::{run_scenario, timing_ratio, RunOptions, RunSummary};
use pfg_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "pfg", version, about = "Preconditioned functional gradient flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run independent scenarios concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario config files (or preset names).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance criteria and write a JSON report.
    Acceptance {
        /// Criterion numbers to run; all when omitted.
        #[arg(long = "only", value_delimiter = ',')]
        only: Vec<u8>,
        /// Exit with status 2 when a criterion fails.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run an analytic Gaussian preset (fig2, fig4).
    Analytic {
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a timing scenario and report the per-iteration scaling.
    BenchTiming {
        config: String,
        #[command(flatten)]
        common: Common,
    },
    /// List the built-in presets.
    Presets,
}

fn load(spec: &str) -> Result<(String, ScenarioConfig)> {
    let path = Path::new(spec);
    if path.exists() {
        let stem = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
        return Ok((stem, ScenarioConfig::parse_file(path)?));
    }
    if preset_names().any(|n| n == spec) {
        return Ok((spec.to_string(), load_preset(spec)?));
    }
    Err(HarnessError::Parse(format!("{spec}: no such file or preset")))
}

fn report(summary: &RunSummary) {
    println!("wrote {}", summary.out.display());
    for s in &summary.samplers {
        let vals: Vec<String> = s.final_values.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        println!("  {}: {}", s.name, vals.join(" "));
    }
    for (name, rows) in &summary.timing {
        for r in rows {
            println!("  {name} n={} median {:.3} ms", r.n, r.median_ms);
        }
        if let Some(ratio) = timing_ratio(rows) {
            println!("  {name} t(n_max)/t(n_min) = {ratio:.2}");
        }
    }
}

/// Runs several scenarios. With more than one, each gets its own output
/// subdirectory and, when `--seed` is given, a seed derived from it.
fn run_many(cfgs: Vec<(String, ScenarioConfig)>, common: &Common) -> Result<()> {
    let multi = cfgs.len() > 1;
    let jobs: Vec<(ScenarioConfig, RunOptions)> = cfgs
        .into_iter()
        .enumerate()
        .map(|(i, (stem, cfg))| {
            let seed = match (common.seed, multi) {
                (Some(s), true) => Some(RngHandle::from_stream(s, i as u64).fork_seed()),
                (s, _) => s,
            };
            let out = match (&common.out, multi) {
                (Some(o), true) => Some(o.join(&stem)),
                (Some(o), false) => Some(o.clone()),
                (None, _) => None,
            };
            (cfg, RunOptions { seed, out, policy: ExecPolicy::default() })
        })
        .collect();
    let results: Vec<Result<RunSummary>> = if common.parallel && multi {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs.iter().map(|(c, o)| scope.spawn(move || run_scenario(c, o))).collect();
            handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
        })
    } else {
        jobs.iter().map(|(c, o)| run_scenario(c, o)).collect()
    };
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => report(&s),
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn acceptance(only: &[u8], strict: bool, common: &Common) -> Result<bool> {
    let mut opts = common.seed.map_or_else(AcceptanceOptions::default, AcceptanceOptions::with_base_seed);
    opts.policy = ExecPolicy::default();
    let rep = run_acceptance(&opts, only, |r| println!("{}", r.line()));
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("acceptance"));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("report.json"), rep.to_json() + "\n")?;
    let passed = rep.results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed; report in {}", rep.results.len(), out.join("report.json").display());
    Ok(!strict || rep.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { configs, common } => {
            configs.iter().map(|c| load(c)).collect::<Result<Vec<_>>>().and_then(|cfgs| run_many(cfgs, &common))
        }
        Command::Analytic { preset, common } => load_preset(&preset).and_then(|cfg| {
            if !matches!(cfg.scenario, ScenarioKind::AnalyticGaussian | ScenarioKind::IllConditioned) {
                return Err(HarnessError::validation("preset", format!("{preset} is not an analytic Gaussian scenario")));
            }
            run_many(vec![(preset.clone(), cfg)], &common)
        }),
        Command::BenchTiming { config, common } => load(&config).and_then(|(stem, cfg)| {
            if cfg.scenario != ScenarioKind::Timing {
                return Err(HarnessError::validation("scenario", "bench-timing needs a timing scenario"));
            }
            run_many(vec![(stem, cfg)], &common)
        }),
        Command::Acceptance { only, strict, common } => match acceptance(&only, strict, &common) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::Presets => {
            for n in preset_names() {
                println!("{n}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
