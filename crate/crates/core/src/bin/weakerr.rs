use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use weakerr::analysis::{convergence_sweep, expansion_check, fit_rate, DEFAULT_LEVELS, DEFAULT_QUAD_NODES};
use weakerr::config::load_problem;
use weakerr::expansion::{leading_constant, psi_grid, PsiKind};
use weakerr::moments::{expected_payoff, weak_error_exact};
use weakerr::montecarlo::{estimate_weak_error, richardson, McConfig, WeakErrorReport};
use weakerr::report::{emit_report, render, Format, PsiTable, RichardsonTable, Tabular};
use weakerr::{builtin_problem, Error, Problem, Result, SchemeConfig, SchemeKind, Solver};

#[derive(Parser)]
#[command(name = "weakerr", version, about = "Weak-error experiments for Euler schemes on scalar SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact weak error from the moment oracle (affine problems).
    Oracle {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 64)]
        n_steps: usize,
    },
    /// Monte Carlo weak errors on coupled grids.
    Mc {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// ψ values on a space-time grid as CSV.
    Psi {
        #[command(flatten)]
        problem: ProblemArgs,
        /// psi_i, psi_e or psi_ih:<h>
        #[arg(long, default_value = "psi_i")]
        kind: String,
        /// Grid size as <nt>x<nx>.
        #[arg(long, default_value = "20x20")]
        grid: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Leading constant C1 = ∫ E ψ(t, X_t) dt.
    C1 {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = "psi_i")]
        kind: String,
        #[arg(long, default_value_t = DEFAULT_QUAD_NODES)]
        quad_nodes: usize,
    },
    /// Log-log slope of oracle weak errors.
    Converge {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Weak error against h·C1 for the implicit scheme.
    Expand {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = "psi_i")]
        kind: String,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Richardson extrapolation 2·err(2N) − err(N).
    Richardson {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Use Monte Carlo even when the moment oracle is available.
        #[arg(long)]
        force_mc: bool,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ProblemArgs {
    /// Built-in benchmark.
    #[arg(long, value_enum, default_value = "ou")]
    problem: ProblemName,
    /// Custom affine problem file; overrides --problem.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemName {
    Bm,
    Ou,
    Gbm,
    Tanh,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value = "implicit")]
    scheme: KindArg,
    #[arg(long, value_enum, default_value = "fp")]
    solver: SolverArg,
    #[arg(long, default_value_t = SchemeConfig::DEFAULT_FP_TOL)]
    fp_tol: f64,
    #[arg(long, default_value_t = SchemeConfig::DEFAULT_FP_MAX_ITER)]
    fp_max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Explicit,
    Implicit,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Fp,
    Newton,
    Affine,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    levels: Vec<usize>,
    #[arg(long, default_value_t = McConfig::DEFAULT_PATHS)]
    paths: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Finest grid; defaults to the largest level (8x for surrogate references).
    #[arg(long)]
    finest: Option<usize>,
    #[arg(long)]
    no_antithetic: bool,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// json, csv or svg; inferred from --out when omitted.
    #[arg(long)]
    format: Option<String>,
}

impl ProblemArgs {
    fn resolve(&self) -> Result<Problem> {
        match &self.config {
            Some(path) => load_problem(path),
            None => builtin_problem(match self.problem {
                ProblemName::Bm => "bm",
                ProblemName::Ou => "ou",
                ProblemName::Gbm => "gbm",
                ProblemName::Tanh => "tanh",
            }),
        }
    }
}

impl SchemeArgs {
    fn kind(&self) -> SchemeKind {
        match self.scheme {
            KindArg::Explicit => SchemeKind::Explicit,
            KindArg::Implicit => SchemeKind::Implicit,
        }
    }

    fn config(&self, p: &Problem, n_steps: usize) -> Result<SchemeConfig> {
        let solver = match self.solver {
            SolverArg::Fp => Solver::FixedPoint,
            SolverArg::Newton => Solver::Newton,
            SolverArg::Affine => Solver::ClosedFormAffine,
        };
        let cfg = SchemeConfig::new(p, n_steps, self.kind())?
            .with_solver(solver)
            .with_fp_tol(self.fp_tol)
            .with_fp_max_iter(self.fp_max_iter);
        cfg.validate(p)?;
        Ok(cfg)
    }
}

impl McArgs {
    fn config(&self, p: &Problem) -> McConfig {
        let largest = self.levels.iter().copied().max().unwrap_or(1);
        let default_finest = if p.exact_terminal().is_some() {
            largest.next_power_of_two()
        } else {
            (8 * largest).next_power_of_two()
        };
        McConfig::new(self.levels.clone(), self.paths, self.seed)
            .with_finest(self.finest.unwrap_or(default_finest))
            .with_antithetic(!self.no_antithetic)
    }
}

impl OutArgs {
    fn write<R: Tabular + Serialize>(&self, report: &R, default: Format) -> Result<()> {
        let format = match &self.format {
            Some(f) => f.parse()?,
            None => self.out.as_deref().map(Format::from_path).unwrap_or(default),
        };
        match &self.out {
            Some(path) => emit_report(report, format, path),
            None => {
                print!("{}", render(report, format)?);
                Ok(())
            }
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidConfig(format!("grid '{text}' is not of the form <nt>x<nx>"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle { problem, scheme, n_steps } => {
            let p = problem.resolve()?;
            let cfg = scheme.config(&p, n_steps)?;
            #[derive(Serialize)]
            struct OracleOut {
                problem: String,
                scheme: SchemeKind,
                n_steps: usize,
                h: f64,
                expected_payoff: f64,
                reference: Option<f64>,
                weak_error: Option<f64>,
            }
            print_json(&OracleOut {
                problem: p.name.clone(),
                scheme: cfg.kind,
                n_steps,
                h: cfg.step_size(&p),
                expected_payoff: expected_payoff(&p, &cfg)?,
                reference: p.exact_terminal(),
                weak_error: weak_error_exact(&p, &cfg).ok(),
            })
        }
        Command::Mc { problem, scheme, mc, out } => {
            let p = problem.resolve()?;
            let cfg = scheme.config(&p, *mc.levels.iter().max().unwrap_or(&1))?;
            let report = estimate_weak_error(&p, &mc.config(&p), &cfg)?;
            out.write(&report, Format::Json)
        }
        Command::Psi { problem, kind, grid, out } => {
            let p = problem.resolve()?;
            let (nt, nx) = parse_grid(&grid)?;
            let table = PsiTable {
                problem: p.name.clone(),
                samples: psi_grid(&p, kind.parse()?, nt, nx)?,
            };
            out.write(&table, Format::Csv)
        }
        Command::C1 { problem, kind, quad_nodes } => {
            let p = problem.resolve()?;
            let c1 = leading_constant(&p, kind.parse()?, quad_nodes)?;
            #[derive(Serialize)]
            struct C1Out {
                value: f64,
                abs_err_est: f64,
            }
            print_json(&C1Out {
                value: c1.value,
                abs_err_est: c1.abs_err_est,
            })
        }
        Command::Converge { problem, scheme, levels, out } => {
            let p = problem.resolve()?;
            let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let report = convergence_sweep(&p, scheme.kind(), &levels)?;
            out.write(&report, Format::Json)
        }
        Command::Expand { problem, kind, levels, out } => {
            let p = problem.resolve()?;
            let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let density: PsiKind = kind.parse()?;
            let table = expansion_check(&p, &levels, density)?;
            out.write(&table, Format::Json)
        }
        Command::Richardson { problem, scheme, force_mc, mc, out } => {
            let p = problem.resolve()?;
            let report = if !force_mc && p.exact_terminal().is_some() && p.is_affine() {
                WeakErrorReport::from_oracle(&p, scheme.kind(), &mc.levels)?
            } else {
                let cfg = scheme.config(&p, *mc.levels.iter().max().unwrap_or(&1))?;
                estimate_weak_error(&p, &mc.config(&p), &cfg)?
            };
            let points = richardson(&report)?;
            let fit = fit_rate(&points.iter().map(|q| (q.h, q.extrapolated_error)).collect::<Vec<_>>()).ok();
            let table = RichardsonTable {
                problem: p.name.clone(),
                points,
                fit,
            };
            out.write(&table, Format::Json)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("WEAKERR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Ignored if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("weakerr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
