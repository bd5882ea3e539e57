use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use eiv_core::io::read_table;
use eiv_core::sensitivity::{check_kappa_condition, kappa_bruteforce, QNorm, SensitivityQuery};

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// Gram matrix as CSV, with or without a header row.
    #[arg(long)]
    pub gram: PathBuf,
    /// Sparsity level.
    #[arg(long)]
    pub s: usize,
    /// Cone opening.
    #[arg(long)]
    pub u: f64,
    /// Normalization: 1 or inf.
    #[arg(long, default_value = "1")]
    pub q: QNorm,
    /// Also check `κ ≥ c s^{-1/q}` for this constant.
    #[arg(long = "check-c")]
    pub check_c: Option<f64>,
}

pub fn run(args: &SensitivityArgs) -> Result<u8> {
    let psi = match read_table(&args.gram, false) {
        Ok((_, m)) => m,
        Err(_) => read_table(&args.gram, true)
            .with_context(|| format!("cannot read Gram matrix {}", args.gram.display()))?
            .1,
    };
    let qry = SensitivityQuery::new(psi, args.s, args.u, args.q);
    let res = kappa_bruteforce(&qry)?;
    let support: Vec<String> = res.witness_j.iter().map(|j| (j + 1).to_string()).collect();
    let delta: Vec<String> = res.witness_delta.iter().map(|v| format!("{v:.10}")).collect();
    println!("kappa = {:.10}", res.kappa);
    println!("witness_J = {{{}}}", support.join(","));
    println!("witness_delta = [{}]", delta.join(", "));
    if let Some(c) = args.check_c {
        let holds = check_kappa_condition(&qry, c)?;
        let bound = match args.q {
            QNorm::One => c / args.s as f64,
            QNorm::Infinity => c,
        };
        println!("condition = {} (kappa >= {bound:.10})", if holds { "holds" } else { "fails" });
    }
    Ok(0)
}
