use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nne_core::ar1::simulate_ar1;
use nne_core::search::{generate_covariates, simulate_search};
use nne_core::RngStream;
use nne_harness::config::{ConfigFile, ExperimentConfig, Scale, Scenario};
use nne_harness::data::{ingest_search_csv, search_csv_string};
use nne_harness::scenarios::{real_data, run_and_write, search::truth_vector};
use nne_harness::table::write_artifacts;

#[derive(Parser)]
#[command(name = "nne", version, about = "Neural net estimation of structural models")]
struct Cli {
    /// TOML config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    scale: Option<Scale>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Search,
    Ar1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Nne,
    Smle,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset at given parameters.
    Simulate {
        #[arg(long, value_enum, default_value = "search")]
        model: Model,
        /// Consumers (search) or periods (ar1).
        #[arg(long)]
        n: Option<usize>,
        /// Options per consumer.
        #[arg(long, short = 'J')]
        j: Option<usize>,
        /// AR(1) coefficient.
        #[arg(long, default_value_t = 0.6)]
        beta: f64,
        /// Search parameters, comma separated, in the order
        /// beta_stars,...,beta_price,eta,delta0,delta1.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Estimate the search model on a session CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "nne")]
        method: Method,
        /// Moment specification for the net (m16 ... m81).
        #[arg(long)]
        spec: Option<String>,
        #[arg(long = "l-star")]
        l_star: Option<usize>,
        /// SMLE smoothing factors, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// SMLE draws per consumer.
        #[arg(long)]
        r: Option<usize>,
    },
    /// Run one experiment scenario.
    Experiment {
        /// One of the scenario names; see `nne experiment --help`.
        scenario: Option<String>,
    },
    /// Check a session CSV against the schema and model invariants.
    ValidateData { path: PathBuf },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let threads = cli.threads.or(file.as_ref().and_then(|f| f.threads));
    if let Some(t) = threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.command {
        Command::Experiment { scenario } => {
            let cfg = ExperimentConfig::resolve(file.as_ref(), scenario.as_deref(), cli.seed, cli.scale, cli.out.as_deref())?;
            let (art, paths) = run_and_write(&cfg)?;
            report(&art.notes, &paths);
        }
        Command::Simulate { model, n, j, beta, theta } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let seed = cli.seed.or(file.as_ref().and_then(|f| f.seed)).unwrap_or(nne_harness::config::DEFAULT_SEED);
            simulate(*model, *n, *j, *beta, theta.as_deref(), seed, &out)?;
        }
        Command::Estimate { data, method, spec, l_star, lambda, r } => {
            let mut cfg = ExperimentConfig::resolve(
                file.as_ref(),
                Some(Scenario::RealData.name()),
                cli.seed,
                cli.scale,
                cli.out.as_deref(),
            )?;
            let k = &mut cfg.knobs;
            k.data = Some(data.clone());
            k.bootstrap = 0;
            if let Some(s) = spec {
                k.spec_id = s.clone();
            }
            if let Some(l) = l_star {
                k.l_star = *l;
            }
            if let Some(l) = lambda {
                k.lambda = l.clone();
            }
            if let Some(r) = r {
                k.r = *r;
            }
            let keep_nne = !matches!(method, Method::Smle);
            if matches!(method, Method::Nne) {
                k.lambda.clear();
            }
            k.validate()?;
            let mut art = real_data(&cfg)?;
            if !keep_nne {
                art.table.rows.retain(|r| r.method != "nne");
                art.files.retain(|f| f.name != "summary");
            }
            std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
            let paths = write_artifacts(&cfg.out, &cfg, &art, &[])?;
            report(&art.notes, &paths);
        }
        Command::ValidateData { path } => {
            let d = ingest_search_csv(path)?;
            let n = d.grid.n_consumers();
            let js: Vec<usize> = (0..n).map(|i| d.grid.n_options(i)).collect();
            let searches: usize = d.outcomes.iter().map(|o| o.search_order.len()).sum();
            let buys = d.outcomes.iter().filter(|o| o.bought.is_some()).count();
            println!(
                "{}: {n} sessions, {}-{} options each, {:.3} searches per session, buy rate {:.3}",
                path.display(),
                js.iter().min().unwrap_or(&0),
                js.iter().max().unwrap_or(&0),
                searches as f64 / n as f64,
                buys as f64 / n as f64
            );
        }
    }
    Ok(())
}

fn report(notes: &[String], paths: &[PathBuf]) {
    for n in notes {
        eprintln!("note: {n}");
    }
    for p in paths {
        println!("{}", p.display());
    }
}

fn simulate(model: Model, n: Option<usize>, j: Option<usize>, beta: f64, theta: Option<&[f64]>, seed: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let root = RngStream::new(seed);
    let (name, text, meta) = match model {
        Model::Search => {
            let (n, j) = (n.unwrap_or(1000), j.unwrap_or(30));
            let truth = truth_vector(theta)?;
            let grid = generate_covariates(n, j, &root.substream(0))?;
            let outcomes = simulate_search(&truth, &grid, &root.substream(1))?;
            let meta = serde_json::json!({
                "model": "search", "n": n, "J": j, "seed": seed,
                "theta": truth.to_vector().values(),
            });
            ("search_data.csv", search_csv_string(&grid, &outcomes)?, meta)
        }
        Model::Ar1 => {
            let n = n.unwrap_or(100);
            let series = simulate_ar1(beta, n, &root.substream(0))?;
            let mut s = String::from("t,y\n");
            for (t, y) in series.values().iter().enumerate() {
                s += &format!("{t},{y}\n");
            }
            let meta = serde_json::json!({ "model": "ar1", "n": n, "beta": beta, "seed": seed });
            ("ar1_data.csv", s, meta)
        }
    };
    let path = out.join(name);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    let side = path.with_extension("json");
    std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n")?;
    println!("{}\n{}", path.display(), side.display());
    Ok(())
}
