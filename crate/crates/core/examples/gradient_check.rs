//! Central finite differences against hand-written backpropagation for a
//! small dual-quaternion MLP and a tiny LSTM autoencoder.

use dqmotion::lorenz::{encode_input, encode_target, Sample, WindowDataset};
use dqmotion::nn::{batch_loss, Activation, AlgebraTag, Mlp, Parameters};
use dqmotion::seqmodels::{DqVae, EncodedSequence, VaeConfig};
use dqmotion::Point3;

const H: f64 = 1e-6;

fn worst_relative(analytic: &[f64], mut loss_at: impl FnMut(&[f64]) -> f64, params: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for i in 0..p.len() {
        p[i] = params[i] + H;
        let up = loss_at(&p);
        p[i] = params[i] - H;
        let down = loss_at(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-4));
    }
    worst
}

fn main() {
    let alg = AlgebraTag::DualQuaternion;
    let mlp = Mlp::new(alg, &[1, 4, 1], Activation::SplitTanh, Activation::Identity, 11).unwrap();
    let pt = |k: f64| Point3::new(k.sin(), (2.0 * k).cos(), 0.5 * k);
    let samples = (0..5)
        .map(|k| {
            let k = k as f64;
            Sample { input: encode_input(pt(k), pt(k + 1.0), alg), target: encode_target(pt(k + 2.0), alg) }
        })
        .collect();
    let data = WindowDataset { algebra: alg, samples };
    let grad = batch_loss(&mlp, &data, true).unwrap().1.unwrap().to_flat();
    let mut probe = mlp.clone();
    let e = worst_relative(
        &grad,
        |p| {
            probe.load_flat(p).unwrap();
            batch_loss(&probe, &data, false).unwrap().0
        },
        &mlp.to_flat(),
    );
    println!("dq MLP, {} parameters: worst relative error {e:.2e}", mlp.num_params());

    let vae = DqVae::new(VaeConfig::scaled(alg, 2, 2, 2, 0.1), 4).unwrap();
    let w = vae.config.frame_width();
    let frame = |s: f64| (0..w).map(|i| (s + i as f64 * 0.3).sin()).collect::<Vec<_>>();
    let batch = vec![EncodedSequence { observed: vec![frame(0.0), frame(0.5)], future: vec![frame(1.0), frame(1.5)] }];
    let grad = vae.batch_loss(&batch, Some(1), true).unwrap().1.unwrap().to_flat();
    let mut probe = vae.clone();
    let e = worst_relative(
        &grad,
        |p| {
            probe.load_flat(p).unwrap();
            probe.batch_loss(&batch, Some(1), false).unwrap().0.total
        },
        &vae.to_flat(),
    );
    println!("dq LSTM autoencoder, {} parameters: worst relative error {e:.2e}", vae.num_params());
}
