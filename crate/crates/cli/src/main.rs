use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ridepool_core::config::ScenarioFile;
use ridepool_core::costshare::{goalprog_split, shapley_split};
use ridepool_core::harness::{pareto_dominance, run_grid, BRACKET_THRESHOLDS};
use ridepool_core::io as csvio;
use ridepool_core::simengine::{split_rows, synthetic_trips, TripSpec};
use ridepool_core::units::fmt4;
use ridepool_core::verify::run_fixture_suite;
use ridepool_core::{Ppm, RoadNetwork};

#[derive(Parser)]
#[command(name = "ridepool", version, about = "Ride-hailing simulator with solitary and pooled matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario grid and write its CSV outputs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trip CSV, or `synthetic:count=500,horizon=3600,seed=7`.
        #[arg(long)]
        trips: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Savings brackets and Pareto relations from a simulate output directory.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        brackets: bool,
        #[arg(long)]
        pareto: bool,
    },
    /// Run the theorem fixtures and print one verdict per check.
    Verify {
        #[arg(long, default_value = "all")]
        fixtures: String,
        /// Write the verdicts here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split run fares ex post.
    Split {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum)]
        scheme: Scheme,
        /// Saving thresholds in percent, for goal programming.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        thresholds: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Shapley,
    Goalprog,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn parse_synthetic(spec: &str, horizon: i64, net: &RoadNetwork) -> Result<Vec<TripSpec>> {
    let (mut count, mut horizon, mut seed) = (500usize, horizon, 1u64);
    for part in spec.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .with_context(|| format!("expected key=value in synthetic spec, got {part:?}"))?;
        match k.trim() {
            "count" => count = v.trim().parse().context("count")?,
            "horizon" => horizon = v.trim().parse().context("horizon")?,
            "seed" => seed = v.trim().parse().context("seed")?,
            other => bail!("unknown synthetic trip key {other:?}"),
        }
    }
    Ok(synthetic_trips(net, count, horizon, seed))
}

fn simulate(config: &Path, trips: &str, out: &Path) -> Result<()> {
    let scenario = ScenarioFile::load(config)?;
    let grid = scenario.to_grid()?;
    let base = config.parent().unwrap_or(Path::new("."));
    let net = scenario.network.build(base)?;
    let trips = match trips.strip_prefix("synthetic:") {
        Some(spec) => parse_synthetic(spec, grid.horizon, &net)?,
        None => csvio::read_trips(File::open(trips).with_context(|| format!("opening {trips}"))?)?,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    eprintln!(
        "running {} cells on {} nodes with {} trips",
        grid.cells().len(),
        net.node_count(),
        trips.len()
    );
    let res = run_grid(&grid, &trips, &net)?;
    let tagged = csvio::tag_cells(&res.cells);
    csvio::write_trips(create(out, "trips.csv")?, &trips)?;
    csvio::write_cells(create(out, "cells.csv")?, &res.cells)?;
    csvio::write_summary(create(out, "summary.csv")?, &res.summaries)?;
    csvio::write_decisions(create(out, "decisions.csv")?, &tagged)?;
    csvio::write_customers(create(out, "customers.csv")?, &tagged)?;
    csvio::write_splits(create(out, "splits.csv")?, &tagged)?;
    csvio::write_runs(create(out, "runs.csv")?, &tagged)?;
    csvio::write_pool_events(create(out, "pool_events.csv")?, &tagged)?;
    csvio::write_sim_run_accounts(create(out, "run_accounts.csv")?, &tagged)?;
    for s in &res.summaries {
        if let Some(r) = s.rows.last() {
            eprintln!(
                "{}: MAR {} unserved {}% distance saving {}%",
                s.label,
                fmt4(r.mar),
                fmt4(r.unserved_pct),
                fmt4(r.distance_saving_pct)
            );
        }
    }
    Ok(())
}

fn analyze(input: &Path, brackets: bool, pareto: bool) -> Result<()> {
    let path = input.join("summary.csv");
    let summaries = csvio::read_summary(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
    let (brackets, pareto) = if brackets || pareto { (brackets, pareto) } else { (true, true) };
    let mut w = std::io::stdout().lock();
    if brackets {
        write!(w, "label,mar")?;
        for t in BRACKET_THRESHOLDS {
            write!(w, ",saving_ge_{}pct", (t * 100.0).round())?;
        }
        writeln!(w)?;
        for s in &summaries {
            for r in &s.rows {
                write!(w, "{},{}", s.label, fmt4(r.mar))?;
                for b in r.brackets {
                    write!(w, ",{}", b.map(fmt4).unwrap_or_else(|| "n/a".into()))?;
                }
                writeln!(w)?;
            }
        }
    }
    if pareto {
        if brackets {
            writeln!(w)?;
        }
        writeln!(w, "a,b,relation")?;
        for a in &summaries {
            for b in &summaries {
                if a.label != b.label {
                    writeln!(w, "{},{},{}", a.label, b.label, pareto_dominance(a, b)?)?;
                }
            }
        }
    }
    Ok(())
}

fn verify(fixtures: &str, out: Option<&Path>) -> Result<bool> {
    if fixtures != "all" {
        bail!("only `--fixtures all` is supported");
    }
    let verdicts = run_fixture_suite()?;
    csvio::write_verdicts(output(out)?, &verdicts)?;
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    eprintln!("{} checks, {failed} failed", verdicts.len());
    Ok(failed == 0)
}

fn split(runs: &Path, scheme: Scheme, thresholds: &[f64], out: Option<&Path>) -> Result<()> {
    let accounts =
        csvio::read_run_accounts(File::open(runs).with_context(|| format!("opening {}", runs.display()))?)?;
    let th: Vec<Ppm> = thresholds.iter().map(|&t| Ppm::from_f64(t / 100.0)).collect();
    let mut rows = Vec::new();
    for (cell, acct) in &accounts {
        let result = match scheme {
            Scheme::Shapley => shapley_split(acct),
            Scheme::Goalprog => goalprog_split(acct, &th),
        }
        .with_context(|| format!("run {} of cell {cell}", acct.run_id))?;
        rows.extend(split_rows(acct, &result).into_iter().map(|r| (*cell, r)));
    }
    csvio::write_split_rows(output(out)?, &rows)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, trips, out } => simulate(&config, &trips, &out),
        Command::Analyze { input, brackets, pareto } => analyze(&input, brackets, pareto),
        Command::Verify { fixtures, out } => {
            if !verify(&fixtures, out.as_deref())? {
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Split {
            runs,
            scheme,
            thresholds,
            out,
        } => split(&runs, scheme, &thresholds, out.as_deref()),
    }
}
