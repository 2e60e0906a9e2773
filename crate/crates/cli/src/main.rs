mod checks;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manin_core::enumerate::{count_run, integer_grid};
use manin_core::euler::{leading_constant, tauberian_fit, PredictBudget};
use manin_core::locarch::McBudget;
use manin_core::picard::manin_invariants;
use manin_core::rootsys::build_pgl;
use serde_json::json;

use config::{Command, RunConfig};
use report::Provenance;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("usage: {0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Verification(_) | Failure::Io(_) => 1,
        }
    }
}

fn core(e: manin_core::Error) -> Failure {
    use manin_core::Error as E;
    match e {
        E::InvalidArgument(_) | E::Unsupported(_) | E::BudgetExceeded { .. } | E::Divergent(_) => {
            Failure::Usage(e.to_string())
        }
        other => Failure::Verification(other.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "manin", version, about = "Predicted and counted rational points of bounded height on PGL_n")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asymptotic constants a(L), b(L) and the leading constant.
    Predict(Opts),
    /// Count points of bounded height on PGL_2 at geometric checkpoints.
    Count(Opts),
    /// Run one invariant suite: qcounts, volumes, localint, schwartz, abscissa.
    Check {
        suite: Option<String>,
        #[command(flatten)]
        opts: Opts,
    },
}

/// Flags override values from `--config`; anything unset falls back to defaults.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective config to this path.
    #[arg(long)]
    write_config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Line bundle class in root coordinates, e.g. `3,3` or `3,3/2`.
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    b_min: Option<u64>,
    #[arg(long)]
    b_max: Option<u64>,
    #[arg(long)]
    checkpoints: Option<usize>,
    #[arg(long)]
    p_max: Option<u64>,
    /// Primes for the local suites, comma-separated.
    #[arg(long = "p", value_delimiter = ',')]
    primes: Option<Vec<u64>>,
    #[arg(long)]
    emax: Option<u32>,
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    mc_shards: Option<usize>,
    #[arg(long)]
    gauge_multiple: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shards: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    /// Fill the elapsed_s column (makes output time-dependent).
    #[arg(long)]
    timings: bool,
}

fn resolve(command: Command, suite: Option<String>, o: Opts) -> Result<RunConfig, Failure> {
    let mut c = match &o.config {
        Some(path) => {
            let c = RunConfig::load(path)?;
            if c.command != command {
                return Err(Failure::Usage(format!(
                    "config {} is for `{:?}`, not `{command:?}`",
                    path.display(),
                    c.command
                )));
            }
            c
        }
        None => RunConfig::defaults(command, o.n.unwrap_or(2)),
    };
    macro_rules! set {
        ($($field:ident <- $opt:expr),* $(,)?) => {
            $(if let Some(v) = $opt { c.$field = v; })*
        };
    }
    set!(
        n <- o.n, l <- o.l, metric <- o.metric, b_min <- o.b_min, b_max <- o.b_max,
        checkpoints <- o.checkpoints, p_max <- o.p_max, primes <- o.primes, emax <- o.emax,
        mc_samples <- o.mc_samples, mc_shards <- o.mc_shards, gauge_multiple <- o.gauge_multiple,
        seed <- o.seed, shards <- o.shards, output_dir <- o.out,
    );
    if suite.is_some() {
        c.suite = suite;
    }
    c.timings |= o.timings;
    if !(2..=6).contains(&c.n) {
        return Err(Failure::Usage(format!("n must be in 2..=6, got {}", c.n)));
    }
    c.metric = c.arch_metric()?.label().to_string();
    c.class()?;
    if let Some(path) = &o.write_config {
        report::write(path, &c.to_toml())?;
    }
    Ok(c)
}

fn predict(c: &RunConfig) -> Result<(), Failure> {
    let datum = build_pgl(c.n).map_err(core)?;
    let l = c.class()?;
    let metric = c.arch_metric()?;
    let provenance = Provenance::new(c);
    let budget = PredictBudget {
        p_max: c.p_max,
        mc: McBudget {
            samples: c.mc_samples,
            shards: c.mc_shards,
            seed: c.seed,
            ..McBudget::default()
        },
        gauge_multiple: c.gauge_multiple,
    };
    let (value, markdown) = match leading_constant(&datum, &l, metric, &budget) {
        Ok(r) => {
            let md = format!("{}\n{}", r.to_markdown(), provenance.comment_lines("- "));
            (json!({"provenance": provenance, "config": c, "status": "predicted", "report": r}), md)
        }
        Err(manin_core::Error::CharacterObstruction { d }) => {
            let pole = manin_invariants(&datum, &l).map_err(core)?;
            let explanation = format!(
                "d(L) = {d}: the {d} characters with chi^{d} = 1 all contribute to the leading pole, \
                 and their twisted contributions are not implemented, so the leading constant is not computed"
            );
            let md = format!(
                "# Prediction for {} with L = ({l})\n\n- a(L) = {}\n- b(L) = {}\n- Theta: refused. {explanation}\n\n{}",
                datum.label,
                pole.sigma,
                pole.multiplicity,
                provenance.comment_lines("- ")
            );
            let value = json!({
                "provenance": provenance,
                "config": c,
                "status": "refused",
                "a": pole.sigma.to_string(),
                "b": pole.multiplicity,
                "pole": pole,
                "refusal": {"reason": "character obstruction", "d": d, "explanation": explanation},
            });
            (value, md)
        }
        Err(e) => return Err(core(e)),
    };
    report::write(&c.output_path("predict.json"), &report::to_json(&value))?;
    report::write(&c.output_path("predict.md"), &markdown)?;
    print!("{markdown}");
    Ok(())
}

fn count(c: &RunConfig) -> Result<(), Failure> {
    if c.n != 2 {
        return Err(Failure::Usage("counting runs are implemented for n = 2 only".into()));
    }
    if c.b_min < 1 || c.b_min >= c.b_max || c.checkpoints < 2 {
        return Err(Failure::Usage("need 1 <= b_min < b_max and at least 2 checkpoints".into()));
    }
    let datum = build_pgl(2).map_err(core)?;
    let l = c.class()?;
    let pole = manin_invariants(&datum, &l).map_err(core)?;
    let grid = integer_grid(c.b_min as f64, c.b_max as f64, c.checkpoints);
    let mut run = count_run(&l, c.arch_metric()?, &grid, c.shards).map_err(core)?;
    if run.counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Failure::Verification("counts are not monotone in B".into()));
    }
    if !c.timings {
        run.elapsed_s = None;
    }
    let a = *pole.sigma.numer() as f64 / *pole.sigma.denom() as f64;
    let fit = tauberian_fit(&run.pairs(), a, pole.multiplicity).ok();
    let provenance = Provenance::new(c);
    let csv = format!("{}{}", provenance.comment_lines("# "), run.to_csv());
    let value = json!({"provenance": provenance, "config": c, "run": run, "elapsed_s": run.elapsed_s, "fit": fit});
    report::write(&c.output_path("counts.csv"), &csv)?;
    report::write(&c.output_path("counts.json"), &report::to_json(&value))?;
    println!(
        "N({}) = {} (box T = {}, {} checkpoints)",
        run.b_max,
        run.counts.last().copied().unwrap_or(0),
        run.box_bound,
        run.checkpoints.len()
    );
    if let Some(f) = fit {
        println!("fitted Theta = {:.6}, c1 = {:.4}", f.c_hat, f.c1);
    }
    Ok(())
}

fn check(c: &RunConfig) -> Result<(), Failure> {
    let r = checks::run_suite(c)?;
    let value = json!({"provenance": Provenance::new(c), "config": c, "result": r});
    let text = report::to_json(&value);
    report::write(&c.output_path(&format!("check-{}.json", r.suite)), &text)?;
    print!("{text}");
    if r.passed {
        Ok(())
    } else {
        Err(Failure::Verification(format!("suite {} failed {} of {} cases", r.suite, r.failures.len(), r.cases)))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Predict(o) => predict(&resolve(Command::Predict, None, o)?),
        Cmd::Count(o) => count(&resolve(Command::Count, None, o)?),
        Cmd::Check { suite, opts } => check(&resolve(Command::Check, suite, opts)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
