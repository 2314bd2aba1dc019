//! Trains the real, quaternion and dual-quaternion predictors on a Lorenz
//! trajectory and evaluates them on rigidly moved test sets.
//!
//! Usage: `cargo run --release --example lorenz_equivariance [seed]`

use dqmotion::cli::{run_lorenz_study, ExperimentConfig, Seeds};
use dqmotion::lorenz::VariantKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ExperimentConfig { seeds: Seeds { data: seed, init: seed, transform: seed }, ..Default::default() };
    println!("{} points, dt {}, {} epochs, seed {seed}", cfg.n_points, cfg.dt, cfg.epochs);

    let study = run_lorenz_study(&cfg)?;
    print!("{:<6}", "model");
    for v in VariantKind::ALL {
        print!("{:>24}", v.name());
    }
    println!();
    for (algebra, reports) in &study {
        print!("{:<6}", algebra.name());
        for r in reports {
            print!("{:>13.4} {:>7.2} dB", r.mse, r.prediction_gain_db);
        }
        println!();
    }
    Ok(())
}
