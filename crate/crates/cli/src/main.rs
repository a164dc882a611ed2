use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use stochmatch::benchmarks::{opt_fractional, sopt_bruteforce, sopt_dp_with_actions};
use stochmatch::dualaudit::Family;
use stochmatch::engine::{monte_carlo, run_online, trial_rng, McConfig, OutcomeOracle};
use stochmatch::experiments::{
    cmd_compare, cmd_convergence, epsilon_report, formula_chebyshev, formula_convergence,
    formula_greedy, formula_greedy_ratio, formula_round_dist, formula_sbal_bound, formula_tail,
    instance_id, slack_report, stats_row, CompareConfig, ConvergenceConfig, TieBreak,
    STATS_COLUMNS,
};
use stochmatch::model::{
    gen_gnb, gen_hetero, gen_random, load, to_json, vertex_split, HeteroSpec, Instance, RandomSpec,
};
use stochmatch::policies::PolicyKind;
use stochmatch::report::{num, Report};
use stochmatch::Error;

#[derive(Parser)]
#[command(
    name = "stochmatch",
    version,
    about = "Online b-matching with stochastic rewards"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials.
    #[arg(long, global = true, default_value_t = 100_000)]
    trials: u64,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file (JSON).
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Monte Carlo estimate of a policy's expected matched weight.
    #[command(
        after_help = "Columns: policy, instance (fingerprint), trials, mean, var, ci95 (1.96 standard errors)."
    )]
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// sbal | greedy
        #[arg(long, default_value = "sbal")]
        policy: PolicyKind,
        /// Also write the trace of trial 0 to this CSV file
        /// (request_id, server_id or -1, success, load_before).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exact offline benchmark values.
    #[command(after_help = "Columns: benchmark, method, value.\n\
        Sidecar for opt: JSON with value, flows (request, server, probability, m) and duals.\n\
        Sidecar for sopt: CSV request, successes (per server, ';'-joined), action (server or -1 for skip).")]
    Benchmark {
        which: BenchmarkKind,
        #[arg(long)]
        instance: PathBuf,
        /// For sopt: dp (backward induction) or brute (history enumeration).
        #[arg(long, default_value = "dp")]
        method: SoptMethod,
        /// Write the LP solution or action table here.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Closed forms, recurrences and bounds as CSV tables.
    Formulas {
        #[command(subcommand)]
        name: Formula,
    },
    /// Dual-variable audit of StochasticBalance.
    #[command(
        after_help = "Per-edge columns: request, server, probability, estimate (mean of p x(s) + y(r)), \
        ci95, target (p w_s), ratio (estimate / target). Header lines carry min_ratio and c_effective.\n\
        With --b-sweep: b, min_ratio, ci95, c_effective."
    )]
    DualAudit {
        #[arg(long, required_unless_present = "b_sweep")]
        instance: Option<PathBuf>,
        /// Comma-separated capacities for an epsilon(b) sweep over --family.
        #[arg(long, value_delimiter = ',')]
        b_sweep: Vec<u32>,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Convergence of the implied competitive ratio on G_n^b.
    #[command(
        after_help = "Columns: n, b, p, sbal_mean, sbal_ci95, sim_ratio (sbal_mean / (n b)), \
        bound_ratio (min(k, n) / n), greedy_ratio (Greedy on G_{nb}^1 per unit), \
        implied_ratio (sbal_mean / (n b greedy_ratio)), implied_ci95."
    )]
    Convergence {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        b: u32,
        #[arg(long, default_value_t = 0.01)]
        p: f64,
        /// random | lowest
        #[arg(long, default_value = "random")]
        tie_break: TieBreak,
    },
    /// Policies against both benchmarks on one instance.
    #[command(
        after_help = "Columns: policy, mean, ci95, opt, sopt (NA when over the solver limit), \
        ratio_opt, ratio_sopt, zero_over_zero (1 when a 0/0 ratio was reported as 1)."
    )]
    Compare {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "sbal,greedy")]
        policies: Vec<PolicyKind>,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    /// n servers of capacity b; round i has b/p requests adjacent to servers i..n.
    Gnb {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b: u32,
        #[arg(long)]
        p: f64,
    },
    /// Random bipartite graph.
    Random {
        #[arg(long)]
        servers: usize,
        #[arg(long)]
        requests: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0.1)]
        p_min: f64,
        #[arg(long, default_value_t = 0.9)]
        p_max: f64,
        #[arg(long, default_value_t = 1)]
        cap_min: u32,
        #[arg(long, default_value_t = 3)]
        cap_max: u32,
        #[arg(long, default_value_t = 1.0)]
        w_min: f64,
        #[arg(long, default_value_t = 1.0)]
        w_max: f64,
    },
    /// Weighted G_n^b analogue with capacities in b_min..=spread*b_min.
    Hetero {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b_min: u32,
        #[arg(long, default_value_t = 10)]
        spread: u32,
        #[arg(long, default_value_t = 0.05)]
        p_min: f64,
        #[arg(long, default_value_t = 0.15)]
        p_max: f64,
        #[arg(long, default_value_t = 0.5)]
        w_min: f64,
        #[arg(long, default_value_t = 2.0)]
        w_max: f64,
    },
    /// Replace every server by capacity-many unit servers.
    Split {
        #[arg(long)]
        instance: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BenchmarkKind {
    Opt,
    Sopt,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SoptMethod {
    Dp,
    Brute,
}

#[derive(Subcommand)]
enum Formula {
    /// E[T_{n,m}] by recurrence and closed form. Columns: n, m, recurrence, closed, abs_diff.
    Greedy {
        #[arg(long, default_value_t = 30)]
        n_max: usize,
    },
    /// Greedy's expected matches per server on G_n^1. Columns: n, greedy_ratio.
    GreedyRatio {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// min(Pois(b), m). Columns: k, probability.
    RoundDist {
        #[arg(long)]
        b: u32,
        #[arg(long)]
        m: usize,
    },
    /// Per-server StochasticBalance bounds on G_n^b. Columns: server, bound.
    SbalBound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b: u32,
    },
    /// Analytic convergence series. Columns: n, b, k, bound_ratio, greedy_ratio, implied_ratio.
    Convergence {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        b: u32,
    },
    /// Chebyshev bound l / (b - l)^2. Columns: load, capacity, bound.
    Chebyshev {
        #[arg(long)]
        b: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        loads: Vec<f64>,
    },
    /// Exact Poisson-binomial tail P[X >= t] with the Chebyshev bound at the mean.
    /// Columns: threshold, load, exact, chebyshev (NA when load >= threshold).
    Tail {
        #[arg(long, value_delimiter = ',', required = true)]
        probs: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<usize>,
    },
}

#[derive(Args)]
struct FamilyArgs {
    /// Family for --b-sweep: gnb | hetero.
    #[arg(long, default_value = "gnb")]
    family: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Edge probability of the gnb family.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 10)]
    spread: u32,
    #[arg(long, default_value_t = 0.05)]
    p_min: f64,
    #[arg(long, default_value_t = 0.15)]
    p_max: f64,
    #[arg(long, default_value_t = 0.5)]
    w_min: f64,
    #[arg(long, default_value_t = 2.0)]
    w_max: f64,
}

impl FamilyArgs {
    fn family(&self, seed: u64) -> Result<Family, Error> {
        match self.family.as_str() {
            "gnb" => Ok(Family::Gnb {
                n: self.n,
                p: self.p,
            }),
            "hetero" => Ok(Family::Hetero {
                n: self.n,
                spread: self.spread,
                p_range: (self.p_min, self.p_max),
                weight_range: (self.w_min, self.w_max),
                seed,
            }),
            other => Err(Error::InvalidParameter(format!(
                "unknown family '{other}' (expected gnb or hetero)"
            ))),
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn emit(report: &Report, g: &Global) -> Result<()> {
    let mut w = output(&g.out)?;
    report.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn generate(family: &GenFamily, seed: u64) -> Result<Instance, Error> {
    match *family {
        GenFamily::Gnb { n, b, p } => gen_gnb(n, b, p),
        GenFamily::Random {
            servers,
            requests,
            density,
            p_min,
            p_max,
            cap_min,
            cap_max,
            w_min,
            w_max,
        } => gen_random(&RandomSpec {
            n_servers: servers,
            n_requests: requests,
            edge_density: density,
            p_range: (p_min, p_max),
            cap_range: (cap_min, cap_max),
            weight_range: (w_min, w_max),
            seed,
        }),
        GenFamily::Hetero {
            n,
            b_min,
            spread,
            p_min,
            p_max,
            w_min,
            w_max,
        } => gen_hetero(&HeteroSpec {
            n,
            b_min,
            spread,
            p_range: (p_min, p_max),
            weight_range: (w_min, w_max),
            seed,
        }),
        GenFamily::Split { ref instance } => Ok(vertex_split(&load(instance)?)),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Gen { family } => {
            let inst = generate(&family, g.seed)?;
            let mut w = output(&g.out)?;
            writeln!(w, "{}", to_json(&inst))?;
            w.flush()?;
        }
        Command::Simulate {
            instance,
            policy,
            trace,
        } => {
            let inst = load(&instance)?;
            let cfg = McConfig::new(g.trials, g.seed).with_workers(g.workers);
            let stats = monte_carlo(&inst, &policy, &cfg)?;
            let mut report = Report::new(
                "simulate",
                g.seed,
                &(policy, g.trials, instance_id(&inst)),
                STATS_COLUMNS,
            );
            report.note("trials", g.trials);
            report.push_row(stats_row(&policy.to_string(), &instance_id(&inst), &stats))?;
            if let Some(path) = trace {
                let t = run_online(
                    &inst,
                    &policy,
                    &mut OutcomeOracle::Lazy(trial_rng(g.seed, 0)),
                )?;
                t.write_csv(create(&path)?)?;
            }
            emit(&report, g)?;
        }
        Command::Benchmark {
            which,
            instance,
            method,
            sidecar,
        } => {
            let inst = load(&instance)?;
            let (name, method_name, value) = match (which, method) {
                (BenchmarkKind::Opt, _) => {
                    let sol = opt_fractional(&inst)?;
                    if let Some(path) = &sidecar {
                        let mut w = create(path)?;
                        serde_json::to_writer_pretty(&mut w, &sol)?;
                        w.flush()?;
                    }
                    ("opt", "simplex", sol.value)
                }
                (BenchmarkKind::Sopt, SoptMethod::Dp) => {
                    let dp = sopt_dp_with_actions(&inst)?;
                    if let (Some(path), Some(table)) = (&sidecar, &dp.actions) {
                        table.write_csv(create(path)?)?;
                    }
                    ("sopt", "dp", dp.value)
                }
                (BenchmarkKind::Sopt, SoptMethod::Brute) => {
                    ("sopt", "brute", sopt_bruteforce(&inst)?)
                }
            };
            let mut report = Report::new(
                "benchmark",
                g.seed,
                &(name, method_name, instance_id(&inst)),
                &["benchmark", "method", "value"],
            );
            report.note("instance", instance_id(&inst));
            report.push_row([name.to_string(), method_name.to_string(), num(value)])?;
            emit(&report, g)?;
        }
        Command::Formulas { name } => {
            let report = match name {
                Formula::Greedy { n_max } => formula_greedy(n_max)?,
                Formula::GreedyRatio { n_list } => formula_greedy_ratio(&n_list)?,
                Formula::RoundDist { b, m } => formula_round_dist(b, m)?,
                Formula::SbalBound { n, b } => formula_sbal_bound(n, b)?,
                Formula::Convergence { n_list, b } => formula_convergence(&n_list, b)?,
                Formula::Chebyshev { b, loads } => formula_chebyshev(b, &loads)?,
                Formula::Tail { probs, thresholds } => formula_tail(&probs, &thresholds)?,
            };
            emit(&report, g)?;
        }
        Command::DualAudit {
            instance,
            b_sweep,
            family,
        } => {
            let report = if b_sweep.is_empty() {
                let path = instance.expect("clap requires --instance without --b-sweep");
                slack_report(&load(&path)?, g.trials, g.seed, g.workers)?.1
            } else {
                epsilon_report(
                    &family.family(g.seed)?,
                    &b_sweep,
                    g.trials,
                    g.seed,
                    g.workers,
                )?
            };
            emit(&report, g)?;
        }
        Command::Convergence {
            n_list,
            b,
            p,
            tie_break,
        } => {
            let cfg = ConvergenceConfig {
                n_list,
                b,
                p,
                trials: g.trials,
                seed: g.seed,
                tie_break,
                workers: g.workers,
            };
            emit(&cmd_convergence(&cfg)?, g)?;
        }
        Command::Compare { instance, policies } => {
            let inst = load(&instance)?;
            let cfg = CompareConfig {
                policies,
                trials: g.trials,
                seed: g.seed,
                workers: g.workers,
            };
            emit(&cmd_compare(&inst, &cfg)?, g)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InvalidParameter(_)) => 2,
        Some(Error::Capacity(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
