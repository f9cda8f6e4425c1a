//! `graze gradcheck` — run the finite-difference oracle over every
//! differentiable operator and the fully composed model.

use crate::sidecar;
use clap::Args;
use graze_core::oracle::{run_suite, suite_passes, OracleCase, ORACLE_TOLERANCE};
use graze_core::{Error, Result};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct GradcheckArgs {
    /// Independent seeds to run; each case reports its worst seed
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,

    /// Maximum allowed relative error against central differences
    #[arg(long, default_value_t = ORACLE_TOLERANCE)]
    pub tolerance: f64,

    /// Optional JSON report of per-case worst errors
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GradcheckReport {
    seeds: u64,
    tolerance: f64,
    cases: Vec<OracleCase>,
}

pub fn run(args: GradcheckArgs) -> Result<()> {
    let cases = run_suite(args.seeds)?;
    for case in &cases {
        let verdict = if case.max_rel_err < args.tolerance { "ok" } else { "FAIL" };
        println!("{:<28} {:>12.3e}  {}", case.name, case.max_rel_err, verdict);
    }
    let worst = cases
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .expect("suite produced at least one case");
    println!(
        "gradcheck: {} cases over {} seeds, worst {:.3e} ({}), tolerance {:.0e}",
        cases.len(),
        args.seeds,
        worst.max_rel_err,
        worst.name,
        args.tolerance
    );

    if let Some(path) = &args.out {
        let report = GradcheckReport { seeds: args.seeds, tolerance: args.tolerance, cases: cases.clone() };
        sidecar::write_json(path, &report)?;
    }

    if !suite_passes(&cases, args.tolerance) {
        let failing = cases.iter().filter(|c| c.max_rel_err >= args.tolerance).count();
        return Err(Error::Evaluation(format!(
            "gradient oracle failed: {failing} case(s) at or above {:.0e}",
            args.tolerance
        )));
    }
    Ok(())
}
