use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chipletdse::catalog::Catalog;
use chipletdse::report::render_summary;
use chipletdse::run::{
    calibrate, evaluate_design_file, run_scenario, topology_csv, DesignFile, RunOptions,
};
use chipletdse::scenario::Scenario;
use chipletdse::thermal::ThermalConfig;
use chipletdse::topology::TopologyKind;
use chipletdse::{DseError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "chipletdse",
    version,
    about = "Design-space exploration for 2.5D chiplet PIM accelerators"
)]
struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Co-optimise composition, placement and mapping for a scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dump_mapping: bool,
        #[arg(long)]
        dump_warpage: bool,
        #[arg(long)]
        dump_thermal: bool,
    },
    /// Evaluate one explicit design and print the result as JSON.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        design: PathBuf,
    },
    /// Print node, link and port statistics of a topology as CSV.
    Topology {
        #[arg(long)]
        kind: TopologyKind,
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
    },
    /// Fit the thermal utilization and print reference peaks and warpage.
    Calibrate {
        /// Silicon Floret reference peak to hit, °C.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Pretty-print a summary.json.
    Report { summary: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| DseError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            dump_mapping,
            dump_warpage,
            dump_thermal,
        } => {
            let scn = Scenario::load(&scenario)?;
            let dir = out
                .or_else(|| scn.output_dir.as_ref().map(|d| scn.resolve_path(d)))
                .ok_or_else(|| {
                    DseError::Config("no output directory: pass --out or set output_dir".into())
                })?;
            let opts = RunOptions {
                seed,
                dump_mapping,
                dump_warpage,
                dump_thermal,
            };
            let outcome = run_scenario(&scn, &opts)?;
            for w in &outcome.summary.warnings {
                log::warn!("{w}");
            }
            for p in outcome.outputs.write_to(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate { scenario, design } => {
            let scn = Scenario::load(&scenario)?;
            let d = DesignFile::load(&design)?;
            let eval = evaluate_design_file(&scn, &d)?;
            let text = serde_json::to_string_pretty(&eval)
                .map_err(|e| DseError::Internal(e.to_string()))?;
            println!("{text}");
        }
        Command::Topology { kind, rows, cols } => print!("{}", topology_csv(kind, rows, cols)?),
        Command::Calibrate { target, catalog } => {
            let cat = match catalog {
                Some(p) => Catalog::load(p)?,
                None => Catalog::builtin(),
            };
            let r = calibrate(&cat, &ThermalConfig::default(), target)?;
            println!(
                "utilization {:.9} (silicon floret reference at {} °C)",
                r.utilization, r.target_c
            );
            for (m, k, t) in &r.peaks_c {
                println!("peak  {m:<8} {k:<9} {t:8.2} °C");
            }
            for (m, a, w, ok) in &r.warpage {
                println!(
                    "warp  {m:<8} {a:>5} mm² {w:8.2} μm {}",
                    if *ok { "feasible" } else { "infeasible" }
                );
            }
        }
        Command::Report { summary } => {
            let text = std::fs::read_to_string(&summary).map_err(|source| DseError::Io {
                path: summary.clone(),
                source,
            })?;
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|source| DseError::Parse {
                    path: summary,
                    source,
                })?;
            print!("{}", render_summary(&v));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHIPLETDSE_LOG", "warn"))
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
