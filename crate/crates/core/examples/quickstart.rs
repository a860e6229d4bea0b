//! Solves one operating condition with the FD oracle, trains a base PINN on it
//! and compares the two fields.
//!
//! `cargo run --release -p hyperpinn --example quickstart`

use hyperpinn::bench::mae_max_error;
use hyperpinn::fd::{self, outlet_means, FieldSelection, Grid, SolverSettings};
use hyperpinn::model::{ModelConfig, OperatingCondition};
use hyperpinn::pinn::{evaluate_field_with, train_base_pinn, TrainConfig};

fn main() -> hyperpinn::Result<()> {
    let cfg = ModelConfig::default();
    let c = OperatingCondition::new(300.0, 21.59, 16.69, 790.06);
    let p = cfg.nondim::<f64>(&c)?;
    let g = Grid::square(60)?;

    let oracle = fd::solve(&p, g, &SolverSettings::default())?;
    let outlets = outlet_means(&oracle).map(|t| cfg.scale.from_nondim_temperature(t));
    println!("FD outlet means (°C): {outlets:.2?} after {} sweeps", oracle.outer_iterations);

    let train = TrainConfig {
        max_steps: 3000,
        ..TrainConfig::default()
    };
    let (pinn, report) = train_base_pinn(&p, c, &train, 0, None).map_err(hyperpinn::Error::from)?;
    println!("PINN: {} steps, final loss {:.3e}, {:.1} s", report.steps, report.final_losses.total, report.seconds);

    let field = evaluate_field_with(&pinn, g, p)?;
    let (mae, max) = mae_max_error(&field, &oracle, &cfg.scale, FieldSelection::FluidAndMetal)?;
    println!("PINN vs FD: MAE {mae:.2} °C, max {max:.2} °C");
    Ok(())
}
