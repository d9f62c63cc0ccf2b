use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::json;

use dnest::harness::assumptions::{verify_assumptions, AssumptionOptions};
use dnest::harness::balls_bins::balls_bins_sim;
use dnest::harness::config::ExperimentConfig;
use dnest::harness::plot::plot_csv;
use dnest::harness::rate::rate_fit;
use dnest::harness::sweep::{auto_truth_k, run_sweep};
use dnest::harness::mean_se;
use dnest::inner::{self, ProtocolVariant};
use dnest::models::{default_c0, eps_max, ModelKind};
use dnest::protocol::{self, OuterConfig, Overrides};
use dnest::regimes::{self, PlanOptions, RegimeParams};
use dnest::rng::{derive_seed, stream, TAG_TRIAL};

#[derive(Parser)]
#[command(name = "dnest", version, about = "Distributed nonparametric estimation under a bit budget")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the protocol at one (m, n, l) point.
    Simulate(SimulateArgs),
    /// Run the sweep described by a TOML config, appending to its CSV.
    Sweep {
        config: PathBuf,
        /// Also fit the MSE slope against N_ess.
        #[arg(long)]
        fit: bool,
    },
    /// Print the regime plan for one tuple as JSON.
    Regimes(RegimeArgs),
    /// Monte-Carlo checks of the model assumptions.
    VerifyAssumptions {
        /// Model name, or `all`.
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value_t = 0.75)]
        r: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32])]
        k_grid: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Maximum-load simulation for n balls in k bins.
    BallsBins {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0])]
        c: Vec<f64>,
    },
    /// Standalone MSE of an inner distribution-estimation protocol.
    InnerBench {
        #[arg(long, default_value = "count_frames")]
        variant: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// `uniform` or `random` (a Dirichlet(1) draw).
        #[arg(long, default_value = "random")]
        dist: String,
    },
    /// Render SVG charts from a sweep CSV.
    Plot { csv: PathBuf },
}

#[derive(Args)]
struct RegimeArgs {
    #[arg(long)]
    m: u64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    l: u32,
    #[arg(long, default_value_t = 0.75)]
    r: f64,
    #[arg(long)]
    theory_constants: bool,
    #[arg(long, default_value_t = 1.0)]
    c_inner: f64,
    #[arg(long, default_value_t = regimes::DEFAULT_C3)]
    c3: f64,
}

impl RegimeArgs {
    fn plan_options(&self) -> PlanOptions<f64> {
        PlanOptions { theory_constants: self.theory_constants, c_inner: self.c_inner, c3: self.c3, ..Default::default() }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    point: RegimeArgs,
    #[arg(long, default_value = "density")]
    model: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Inner protocol, or `auto` to follow the regime.
    #[arg(long, default_value = "auto")]
    inner: String,
    /// Truth sieve size; defaults to the bias/variance balance point.
    #[arg(long)]
    truth_k: Option<usize>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    h: Option<u32>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    project_simplex: bool,
    /// Write the first trial's transcript in binary form.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Regimes(a) => {
            let p = RegimeParams::new(a.m, a.n, a.l, a.r)?;
            let plan = regimes::plan(&p, &a.plan_options());
            emit(
                &json!({
                    "m": a.m, "n": a.n, "l": a.l, "r": a.r,
                    "case": plan.case_id.to_string(),
                    "n_ess": plan.n_ess,
                    "H": plan.h,
                    "K": plan.k,
                    "K0": plan.k0,
                }),
                out,
            )?;
            Ok(true)
        }
        Cmd::Simulate(a) => simulate(a, seed, out),
        Cmd::Sweep { config, fit } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let path = out
                .map(Path::to_path_buf)
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| config.with_extension("csv"));
            let outcome = run_sweep(&cfg, &path)?;
            let mut report = json!({
                "csv": path.display().to_string(),
                "rows": outcome.rows.len(),
                "skipped": outcome.skipped,
                "cross_case": outcome.cross_case,
            });
            if *fit {
                let points = outcome.rows.iter().map(|r| r.rate_point()).collect::<dnest::Result<Vec<_>>>()?;
                let f = rate_fit(&points, true)?;
                report["fit"] = json!({ "slope": f.slope, "slope_se": f.slope_se, "intercept": f.intercept, "r2": f.r2 });
            }
            emit(&report, None)?;
            Ok(true)
        }
        Cmd::VerifyAssumptions { model, r, k_grid, samples } => {
            let models: Vec<ModelKind> =
                if model == "all" { ModelKind::ALL.to_vec() } else { vec![model.parse()?] };
            let mut reports = Vec::new();
            let mut ok = true;
            for mk in models {
                let rep = verify_assumptions(mk, *r, k_grid, *samples, seed, &AssumptionOptions::default())?;
                ok &= rep.pass();
                reports.push(json!({ "pass": rep.pass(), "report": rep }));
            }
            emit(&json!({ "pass": ok, "models": reports }), out)?;
            Ok(ok)
        }
        Cmd::BallsBins { n, k, trials, c } => {
            let rep = balls_bins_sim(*n, *k, *trials, c, &mut stream(seed, &[]))?;
            let ok = rep.pass();
            emit(&json!({ "pass": ok, "report": rep }), out)?;
            Ok(ok)
        }
        Cmd::InnerBench { variant, k, m, n, l, trials, dist } => inner_bench(variant, *k, *m, *n, *l, *trials, dist, seed, out),
        Cmd::Plot { csv } => {
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| csv.parent().unwrap_or(Path::new(".")).to_path_buf());
            let written = plot_csv(csv, &dir)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn simulate(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> Result<bool> {
    let p = &a.point;
    let params = RegimeParams::new(p.m, p.n, p.l, p.r)?;
    let model: ModelKind = a.model.parse()?;
    let ov = Overrides {
        plan: p.plan_options(),
        inner: if a.inner == "auto" { None } else { Some(a.inner.parse()?) },
        h: a.h,
        k0: a.k0,
        project_simplex: a.project_simplex,
    };
    let outer = OuterConfig::prepare(&params, model, &ov)?;
    let truth_k = a.truth_k.unwrap_or_else(|| auto_truth_k(outer.plan.n_ess, p.r));
    let c0 = a.c0.unwrap_or_else(|| default_c0(model));
    let eps = match a.eps {
        Some(e) => e,
        None => eps_max(model, truth_k, c0, p.r)?,
    };
    let truth = protocol::truth_for(model, truth_k, c0, eps, p.r, seed, 0)?;
    if let Some(path) = &a.transcript {
        let first = protocol::run_with_config(&params, &outer, &truth, a.project_simplex, derive_seed(seed, &[TAG_TRIAL, 0]))?;
        let Some(t) = first.transcript else { bail!("the idealized inner layer has no transcript") };
        std::fs::write(path, t.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = protocol::mse_trials_with(&params, &outer, &truth, a.project_simplex, 0..a.trials, seed)?;
    let budget_ok = outer.inner == ProtocolVariant::Idealized || summary.trials == a.trials;
    emit(
        &json!({
            "model": model.name(),
            "m": p.m, "n": p.n, "l": p.l, "r": p.r,
            "case": outer.plan.case_id.to_string(),
            "n_ess": outer.plan.n_ess,
            "K": outer.plan.k,
            "K0": outer.k0,
            "inner_variant": outer.inner.name(),
            "truth_k": truth_k,
            "eps": eps,
            "trials": summary.trials,
            "mean_mse": summary.mean,
            "stderr": summary.stderr,
            "truncation_rate": summary.truncation_rate,
            "transcript_bits": if outer.inner == ProtocolVariant::Idealized { None } else { Some(p.m * p.l as u64) },
            "seed": seed,
        }),
        out,
    )?;
    Ok(budget_ok)
}

#[allow(clippy::too_many_arguments)]
fn inner_bench(
    variant: &str,
    k: usize,
    m: usize,
    n: usize,
    l: u32,
    trials: usize,
    dist: &str,
    seed: u64,
    out: Option<&Path>,
) -> Result<bool> {
    let variant: ProtocolVariant = variant.parse()?;
    let mut rng = stream(seed, &[]);
    let p: Vec<f64> = match dist {
        "uniform" => vec![1.0 / k as f64; k],
        "random" => {
            let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        }
        other => bail!("unknown distribution `{other}`"),
    };
    let cdf: Vec<f64> = p.iter().scan(0.0, |acc, x| {
        *acc += x;
        Some(*acc)
    }).collect();
    let mut errors = Vec::with_capacity(trials);
    let mut budget_ok = true;
    for j in 0..trials {
        let trial_seed = derive_seed(seed, &[TAG_TRIAL, j as u64]);
        let mut trng = stream(trial_seed, &[]);
        let samples: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let u: f64 = trng.random();
                        cdf.iter().position(|&c| u < c).unwrap_or(k - 1)
                    })
                    .collect()
            })
            .collect();
        let round = inner::run_round(variant, k, l, &samples, trial_seed)?;
        if let Some(t) = &round.transcript {
            budget_ok &= t.total_bits() == (m as u64) * l as u64 && t.messages().iter().all(|msg| msg.len() == l);
        }
        errors.push(round.estimate.sq_error(&p));
    }
    let (mean, se) = mean_se(&errors);
    emit(
        &json!({
            "variant": variant.name(),
            "k": k, "m": m, "n": n, "l": l,
            "trials": trials,
            "mean_mse": mean,
            "stderr": se,
            "budget_ok": budget_ok,
            "p": p,
        }),
        out,
    )?;
    Ok(budget_ok)
}
