//! The command-line pipeline driven from code: generate, train, evaluate and
//! tabulate, writing every artifact into a directory.
//!
//! `cargo run --release --example pipeline -- out_dir [epochs]`

use std::path::PathBuf;

use dqmotion::cli::{cmd_eval, cmd_gen, cmd_report, cmd_train, ExperimentConfig};
use dqmotion::lorenz::VariantKind;
use dqmotion::AlgebraTag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "dqmotion-run".into()));
    std::fs::create_dir_all(&dir)?;
    let mut cfg = ExperimentConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse()?;
    }

    let traj = dir.join("lorenz.csv");
    println!("{}", cmd_gen(&cfg, &traj)?.summary);
    let mut reports = Vec::new();
    for algebra in AlgebraTag::ALL {
        let ckpt = dir.join(format!("{}.json", algebra.name()));
        println!("{}", cmd_train(&cfg, &traj, algebra, &ckpt)?.summary);
        let eval = dir.join(format!("{}_eval.json", algebra.name()));
        cmd_eval(&cfg, &traj, &ckpt, Some(algebra), &VariantKind::ALL, &eval)?;
        reports.push(eval);
    }
    let table = cmd_report(&reports, Some(&dir.join("table.csv")))?;
    println!("\n{}", table.summary);
    Ok(())
}
