//! `graze plan` — inspection-planning outputs: the discovered-sites-vs-
//! visitation curve for both policies, a closed-form summary block, and an
//! optional Monte Carlo check of the closed forms.

use crate::sidecar;
use clap::Args;
use graze_core::planner::{emit_curve, monte_carlo, InspectionScenario, Policy};
use graze_core::Result;
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

#[derive(Args)]
pub struct PlanArgs {
    /// Total sites under monitoring
    #[arg(long, default_value_t = 10_000)]
    pub n_sites: u64,

    /// Fraction of sites with no grazing activity
    #[arg(long, default_value_t = 0.05)]
    pub nongrazed_frac: f64,

    /// Classifier precision on the no-activity class
    #[arg(long, default_value_t = 0.86)]
    pub precision_no: f64,

    /// Classifier recall on the no-activity class
    #[arg(long, default_value_t = 0.69)]
    pub recall_no: f64,

    /// Curve CSV output path
    #[arg(long, default_value = "policy_curve.csv")]
    pub out: PathBuf,

    /// Number of visitation fractions on the curve grid
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,

    /// Visit counts for the summary block (comma-separated)
    #[arg(long, value_delimiter = ',', default_values_t = [100u64, 401])]
    pub visits: Vec<u64>,

    /// Monte Carlo trials per visit count (0 disables the check)
    #[arg(long, default_value_t = 0)]
    pub montecarlo: u64,

    /// Seed for the Monte Carlo check
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct PlanSidecar {
    command: String,
    scenario: InspectionScenario,
    grid_points: usize,
    visits: Vec<u64>,
    montecarlo: u64,
    seed: u64,
}

pub fn run(args: PlanArgs) -> Result<()> {
    let scenario = InspectionScenario {
        n_sites: args.n_sites,
        nongrazed_fraction: args.nongrazed_frac,
        precision_no: args.precision_no,
        recall_no: args.recall_no,
    };
    scenario.validate()?;

    let grid: Vec<f64> = (1..=args.grid_points).map(|i| i as f64 / args.grid_points as f64).collect();
    let curve = emit_curve(&scenario, &grid)?;
    fs::write(&args.out, curve.to_csv())?;
    sidecar::write_sidecar(
        &args.out,
        &PlanSidecar {
            command: "plan".into(),
            scenario,
            grid_points: args.grid_points,
            visits: args.visits.clone(),
            montecarlo: args.montecarlo,
            seed: args.seed,
        },
    )?;

    let n = scenario.n_sites as f64;
    let nongrazed = scenario.nongrazed_fraction * n;
    let flagged = scenario.expected_flagged();
    println!(
        "sites {}, non-grazed {:.1} ({:.1}%), expected flagged F = {:.2}",
        scenario.n_sites,
        nongrazed,
        100.0 * scenario.nongrazed_fraction,
        flagged
    );
    println!(
        "advantage ratio while flags remain (p <= F/N): {:.4}",
        scenario.precision_no / scenario.nongrazed_fraction
    );
    for &v in &args.visits {
        let targeted = scenario.expected_found(Policy::Targeted, v as f64)?;
        let random = scenario.expected_found(Policy::Random, v as f64)?;
        println!("V={v}: targeted {targeted:.2}, random {random:.2}");
    }
    if args.montecarlo > 0 {
        for &v in &args.visits {
            let est = monte_carlo(&scenario, v, args.montecarlo, args.seed.wrapping_add(v))?;
            println!(
                "V={v}: simulated targeted {:.2} (stderr {:.3}, {} trials)",
                est.mean, est.stderr, est.trials
            );
        }
    }
    println!("curve {}", args.out.display());
    Ok(())
}
