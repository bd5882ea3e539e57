use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use eiv_core::estimators::{estimate, DesignSource, EstimatorSpec};
use eiv_core::io::{read_dataset, read_table, write_coefficients};
use eiv_core::model::{EstimatorKind, EstimatorTag, SolveStatus, ThetaSet};
use eiv_core::solver::SolverOptions;
use nalgebra::DVector;

use crate::manifest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    Z,
    X,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV: header row, then y followed by the columns of Z.
    #[arg(long)]
    pub data: PathBuf,
    /// True design X as CSV with a header row (same p columns).
    #[arg(long = "x-data")]
    pub x_data: Option<PathBuf>,
    /// dantzig, mu, compensated_mu, conic, l1l2linf_mu or l1l2linf_cmu.
    #[arg(long)]
    pub estimator: EstimatorTag,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long = "delta-bar", default_value_t = 0.0)]
    pub delta_bar: f64,
    /// Diagonal of D̂: one number for all entries, or a CSV file of p values.
    #[arg(long)]
    pub dhat: Option<String>,
    /// Add the constraints t ≤ w and u ≤ w.
    #[arg(long)]
    pub safeguards: bool,
    /// Lower bounds on θ: one number or a comma-separated list.
    #[arg(long = "theta-lower", allow_hyphen_values = true)]
    pub theta_lower: Option<String>,
    /// Upper bounds on θ: one number or a comma-separated list.
    #[arg(long = "theta-upper", allow_hyphen_values = true)]
    pub theta_upper: Option<String>,
    /// Which design the Dantzig benchmark uses.
    #[arg(long, value_enum, default_value_t = Design::Z)]
    pub design: Design,
    /// Report path; the coefficients go to `<out>.coef.csv`. Without it the report goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "eps-feas", default_value_t = 1e-7)]
    pub eps_feas: f64,
    #[arg(long = "eps-opt", default_value_t = 1e-7)]
    pub eps_opt: f64,
    #[arg(long = "max-iterations", default_value_t = 50_000)]
    pub max_iterations: usize,
}

fn parse_list(field: &str, text: &str, p: usize) -> Result<DVector<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--{field}: `{text}` is not a number or a list of numbers"))?;
    match vals.len() {
        1 => Ok(DVector::from_element(p, vals[0])),
        k if k == p => Ok(DVector::from_vec(vals)),
        k => bail!("--{field} has {k} values but p = {p}"),
    }
}

fn parse_dhat(text: &str, p: usize) -> Result<DVector<f64>> {
    if let Ok(v) = text.trim().parse::<f64>() {
        return Ok(DVector::from_element(p, v));
    }
    let path = Path::new(text);
    let m = match read_table(path, false) {
        Ok((_, m)) => m,
        Err(_) => read_table(path, true)
            .with_context(|| format!("--dhat: cannot read {text}"))?
            .1,
    };
    if m.len() != p {
        bail!("--dhat file has {} values but p = {p}", m.len());
    }
    Ok(DVector::from_iterator(p, m.transpose().iter().copied()))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("cannot read {}", path.display()))?))
}

pub fn run(args: &FitArgs) -> Result<u8> {
    let d = read_dataset(&args.data, args.x_data.as_deref())
        .with_context(|| format!("cannot load dataset {}", args.data.display()))?;
    let p = d.p();

    let kind = EstimatorKind::new(args.estimator, args.safeguards)?;
    let mut spec = EstimatorSpec::new(kind);
    spec.lambda = args.lambda;
    spec.nu = args.nu;
    spec.mu = args.mu;
    spec.tau = args.tau;
    spec.beta = args.beta;
    spec.delta_bar = args.delta_bar;
    spec.design_source = match args.design {
        Design::Z => DesignSource::UseZ,
        Design::X => DesignSource::UseX,
    };
    if let Some(text) = &args.dhat {
        spec.d_hat = Some(parse_dhat(text, p)?);
    }
    if args.theta_lower.is_some() || args.theta_upper.is_some() {
        let lower = match &args.theta_lower {
            Some(t) => parse_list("theta-lower", t, p)?,
            None => DVector::from_element(p, f64::NEG_INFINITY),
        };
        let upper = match &args.theta_upper {
            Some(t) => parse_list("theta-upper", t, p)?,
            None => DVector::from_element(p, f64::INFINITY),
        };
        spec.theta_set = ThetaSet::boxed(lower, upper)?;
    }
    let opts = SolverOptions {
        eps_feas: args.eps_feas,
        eps_opt: args.eps_opt,
        max_iterations: args.max_iterations,
        verbose: false,
    };

    let mut canon = format!(
        "estimator={} safeguards={} lambda={:e} nu={:e} mu={:e} tau={:e} beta={:e} delta_bar={:e} design={:?} data={}",
        args.estimator,
        args.safeguards,
        args.lambda,
        args.nu,
        args.mu,
        args.tau,
        args.beta,
        args.delta_bar,
        args.design,
        file_digest(&args.data)?
    );
    if let Some(x) = &args.x_data {
        write!(canon, " x={}", file_digest(x)?)?;
    }
    if let Some(dh) = &spec.d_hat {
        write!(canon, " dhat={:?}", dh.as_slice())?;
    }
    write!(canon, " theta_set={:?} opts={:?}", spec.theta_set, opts)?;
    let config_hash = sha256_hex(canon.as_bytes());

    let sol = estimate(&spec, &d, &opts)?;

    let mut report = String::new();
    writeln!(report, "estimator = {}", args.estimator)?;
    writeln!(report, "safeguards = {}", args.safeguards)?;
    writeln!(report, "n = {}", d.n())?;
    writeln!(report, "p = {p}")?;
    writeln!(report, "status = {}", sol.status)?;
    writeln!(report, "objective = {:e}", sol.objective)?;
    writeln!(report, "t_hat = {:e}", sol.t_hat)?;
    writeln!(report, "u_hat = {:e}", sol.u_hat)?;
    writeln!(report, "w_hat = {:e}", sol.w_hat)?;
    writeln!(report, "feasibility_residual = {:e}", sol.feasibility_residual)?;
    writeln!(report, "optimality_gap = {:e}", sol.optimality_gap)?;
    writeln!(report, "iterations = {}", sol.iterations)?;
    writeln!(report, "config_hash = {config_hash}")?;
    for (j, v) in sol.theta_hat.iter().enumerate() {
        writeln!(report, "theta_hat[{}] = {v:e}", j + 1)?;
    }

    match &args.out {
        Some(path) => {
            fs::write(path, &report).with_context(|| format!("cannot write {}", path.display()))?;
            let coef = crate::manifest::sibling(path, ".coef.csv");
            let f = File::create(&coef).with_context(|| format!("cannot create {}", coef.display()))?;
            write_coefficients(BufWriter::new(f), &sol.theta_hat, &config_hash)?;
            println!("status = {}", sol.status);
            println!("wrote {} and {}", path.display(), coef.display());
        }
        None => print!("{report}"),
    }

    Ok(match sol.status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        _ => 1,
    })
}
