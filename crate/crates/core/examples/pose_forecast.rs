//! Synthetic pose forecasting with real, quaternion and dual-quaternion
//! LSTM autoencoders of equal real width.
//!
//! `cargo run --release --example pose_forecast -- [epochs] [seed]`

use dqmotion::cli::pose_summary;
use dqmotion::seqmodels::{run_pose_study, PoseStudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = PoseStudyConfig { epochs, ..Default::default() };
    println!(
        "{} training / {} held-out sequences, {} observed + {} forecast frames, {epochs} epochs",
        cfg.n_train, cfg.n_val, cfg.t_obs, cfg.t_fut
    );
    let report = run_pose_study(&cfg, seed, seed)?;
    println!("{}", pose_summary(&report));
    println!("(grid: weight-grid size relative to the real model; center: forecast center travel relative to truth)");
    Ok(())
}
