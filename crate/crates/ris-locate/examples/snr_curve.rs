//! Print a position/angle/delay RMSE table over an SNR sweep for a pair of
//! solvers on the reference scene.
//!
//! ```text
//! cargo run --example snr_curve
//! ```

use ris_locate::experiments::{run_sweep, Scenario, SweepSpec, SweepVariable};
use ris_locate::solvers::SolverKind;

fn main() -> ris_locate::Result<()> {
    let spec = SweepSpec {
        variable: SweepVariable::SnrDb,
        values: vec![-20.0, -15.0, -10.0, -5.0, 0.0, 5.0],
        solvers: vec![SolverKind::Tmsbl, SolverKind::Omp],
        n_trials: 50,
        base: Scenario::baseline(),
        seed: 7,
    };
    let result = run_sweep(&spec)?;

    println!("{:>8}  {:<8} {:<16} {:>13}  failed", "snr_db", "solver", "metric", "rmse");
    for row in &result.rows {
        println!(
            "{:>8}  {:<8} {:<16} {:>13.6e}  {}/{}",
            row.sweep_value,
            row.solver.name(),
            row.metric.name(),
            row.value,
            row.n_failed,
            row.n_trials
        );
    }
    Ok(())
}
