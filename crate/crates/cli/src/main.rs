use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nnsplit::heston_bench::{
    convergence_study, price, to_csv, HestonParams, PriceSpec, SplittingChoice, StudyConfig, REFERENCE_PRICE,
};
use nnsplit::moment_match::{moment_table, solution_params, Branch, ParamField, SchemeParams};
use nnsplit::rk_trees::{check_order, ButcherTableau};
use nnsplit::sampling::Mode;
use nnsplit::scalar::{parse_rational, BigRational, Scalar};
use nnsplit::schemes::SchemeKind;

/// Weak approximation of SDEs by Gaussian splitting: moment and Runge-Kutta
/// certificates, and the Heston Asian-option benchmark.
#[derive(Parser, Debug)]
#[command(name = "nnsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare the splitting's expected signature with the target exponential, word by word.
    VerifyMoments(VerifyMomentsArgs),
    /// Check a Butcher tableau against every rooted-tree order condition.
    VerifyRkOrder(VerifyRkArgs),
    /// Price the Heston Asian call with one scheme.
    Price(PriceArgs),
    /// Run the discretization and integration sweeps of a study config.
    Converge(ConvergeArgs),
}

#[derive(Args, Debug)]
struct VerifyMomentsArgs {
    /// Family parameter, at least 1/2 (decimal or `p/q`).
    #[arg(long, allow_hyphen_values = true)]
    u: String,
    #[arg(long, default_value = "lower")]
    branch: Branch,
    /// Largest scaling degree checked.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Brownian dimension.
    #[arg(long, default_value_t = 2)]
    d: u8,
    /// Shift one parameter off the family, e.g. `R12=+0.1`; repeatable.
    #[arg(long, value_name = "FIELD=DELTA")]
    perturb: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyRkArgs {
    /// Built-in name (rk5-butcher, rk7-butcher) or JSON file.
    #[arg(long)]
    tableau: String,
    #[arg(long)]
    order: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PriceArgs {
    #[arg(long)]
    scheme: SchemeKind,
    /// Number of steps; with --romberg the fine partition, combined with n/2.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "qmc")]
    mode: Mode,
    #[arg(long, default_value_t = 200_000)]
    samples: u64,
    /// Pseudo-random seed (MC).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sobol points skipped after the origin (QMC).
    #[arg(long, default_value_t = 0)]
    skip: u64,
    #[arg(long)]
    romberg: bool,
    #[arg(long, default_value_t = 0.75)]
    u: f64,
    #[arg(long, default_value = "lower")]
    branch: Branch,
    /// Built-in name or JSON file; rk5-butcher by default.
    #[arg(long)]
    tableau: Option<String>,
    /// JSON file with Heston parameters; missing keys take the defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Reference price for the QMC error column.
    #[arg(long)]
    reference: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Worker threads; all available cores by default.
    #[arg(long)]
    workers: Option<usize>,
    /// Append a `seconds` column.
    #[arg(long)]
    with_timings: bool,
    /// CSV destination; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Verification,
}

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: Option<&PathBuf>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_perturbation(text: &str) -> Result<(ParamField, String), Failure> {
    let (field, delta) =
        text.split_once('=').ok_or_else(|| Failure::Usage(format!("perturbation `{text}` is not FIELD=DELTA")))?;
    Ok((field.trim().parse()?, delta.trim().to_string()))
}

fn residual_csv<S: Scalar>(
    params: &SchemeParams<S>,
    perturb: &[(ParamField, S)],
    m: usize,
    d: u8,
    nonzero: impl Fn(&S) -> bool,
) -> (String, usize, usize) {
    let mut p = params.clone();
    for (field, delta) in perturb {
        let slot = match field {
            ParamField::C1 => &mut p.c1,
            ParamField::C2 => &mut p.c2,
            ParamField::R11 => &mut p.r11,
            ParamField::R12 => &mut p.r12,
            ParamField::R22 => &mut p.r22,
        };
        *slot = slot.clone() + delta.clone();
    }
    let rows = moment_table(&p.splitting(), m, d);
    let mut csv = String::from("word,scheme,target,residual\n");
    let mut failed = 0;
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.word, r.scheme, r.target, r.residual));
        failed += nonzero(&r.residual) as usize;
    }
    (csv, rows.len(), failed)
}

fn verify_moments(args: &VerifyMomentsArgs) -> Outcome {
    let u_float: f64 = args.u.parse().or_else(|_| {
        parse_rational(&args.u).map(|q| q.to_f64()).ok_or_else(|| Failure::Usage(format!("cannot parse u = `{}`", args.u)))
    })?;
    if !(u_float >= 0.5) {
        return Err(Failure::Usage(format!("u must be at least 1/2, got {}", args.u)));
    }
    let perturb: Vec<(ParamField, String)> = args.perturb.iter().map(|p| parse_perturbation(p)).collect::<Result<_, _>>()?;
    let exact = parse_rational(&args.u).and_then(|q| solution_params::<BigRational>(q, args.branch).ok());
    let exact_deltas: Option<Vec<(ParamField, BigRational)>> =
        perturb.iter().map(|(f, t)| parse_rational(t).map(|q| (*f, q))).collect();
    let (csv, total, failed, arithmetic) = match (exact, exact_deltas) {
        (Some(params), Some(deltas)) => {
            let (csv, total, failed) = residual_csv(&params, &deltas, args.m, args.d, |r| !num_is_zero(r));
            (csv, total, failed, "exact")
        }
        _ => {
            let params = solution_params(u_float, args.branch)?;
            let deltas: Vec<(ParamField, f64)> = perturb
                .iter()
                .map(|(f, t)| t.parse::<f64>().map(|x| (*f, x)).map_err(|_| Failure::Usage(format!("bad delta `{t}`"))))
                .collect::<Result<_, _>>()?;
            let (csv, total, failed) = residual_csv(&params, &deltas, args.m, args.d, |r| r.abs() > 1e-12);
            (csv, total, failed, "float, tolerance 1e-12")
        }
    };
    emit(args.out.as_ref(), &csv)?;
    eprintln!(
        "u = {}, {} branch, m = {}, d = {} ({arithmetic}): {failed} of {total} residuals nonzero",
        args.u, args.branch, args.m, args.d
    );
    if failed > 0 {
        Err(Failure::Verification)
    } else {
        Ok(())
    }
}

fn num_is_zero(q: &BigRational) -> bool {
    *q == BigRational::from_int(0)
}

fn verify_rk(args: &VerifyRkArgs) -> Outcome {
    let tableau = ButcherTableau::load(&args.tableau)?;
    let report = check_order(&tableau, args.order);
    let mut csv = String::from("tree,order,lhs,rhs,pass\n");
    for c in &report.conditions {
        csv.push_str(&format!("{},{},{},{},{}\n", c.tree, c.tree.order(), c.lhs, c.rhs, c.pass));
    }
    emit(args.out.as_ref(), &csv)?;
    let failed = report.failures().count();
    eprintln!(
        "{} ({} stages), order {}: {} of {} conditions hold",
        tableau.name(),
        tableau.stages(),
        args.order,
        report.conditions.len() - failed,
        report.conditions.len()
    );
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match workers {
        Some(0) => Err(Failure::Usage("--workers must be positive".into())),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(job)),
        None => Ok(job()),
    }
}

fn cmd_price(args: &PriceArgs) -> Outcome {
    let params: HestonParams = match &args.params {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => HestonParams::default(),
    };
    let reference = args.reference.or((params == HestonParams::default()).then_some(REFERENCE_PRICE));
    let spec = PriceSpec {
        scheme: args.scheme,
        n: args.n,
        mode: args.mode,
        samples: args.samples,
        seed: args.seed,
        skip: args.skip,
        romberg: args.romberg,
        splitting: SplittingChoice { u: args.u, branch: args.branch },
        tableau: args.tableau.clone(),
    };
    let result = with_workers(args.run.workers, || price(&params, &spec, reference))??;
    emit(args.run.out.as_ref(), &to_csv(&[("price", &result)], args.run.with_timings))?;
    eprintln!(
        "{} n = {} {} M = {}: {:.10e} in {:.2} s",
        spec.label(),
        spec.n,
        spec.mode,
        spec.samples,
        result.report.estimate,
        result.report.seconds
    );
    Ok(())
}

fn cmd_converge(args: &ConvergeArgs) -> Outcome {
    let config = StudyConfig::from_json(&fs::read_to_string(&args.config)?)?;
    let result = with_workers(args.run.workers, || convergence_study(&config))??;
    emit(args.run.out.as_ref(), &result.to_csv(args.run.with_timings))?;
    eprintln!("{} cells, reference {:?}", result.rows.len(), result.reference);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::VerifyMoments(a) => verify_moments(a),
        Command::VerifyRkOrder(a) => verify_rk(a),
        Command::Price(a) => cmd_price(a),
        Command::Converge(a) => cmd_converge(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
