//! A dual-quaternion dense layer is a structured real layer.
//!
//! Prints the 8x8 real block of one dual-quaternion weight and checks that a
//! layer's output equals its real-matrix expansion applied to the input.

use dqmotion::nn::{block_matrix_of, Activation, AlgebraTag, DenseLayer, Parameters};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let w = [0.5, 1.0, 0.0, 0.0, 0.25, 0.0, 0.0, 2.0];
    println!("left-multiplication block of {w:?}:");
    for row in block_matrix_of(&w, AlgebraTag::DualQuaternion) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>5.2}")).collect();
        println!("  [{}]", cells.join(" "));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layer = DenseLayer::new(AlgebraTag::DualQuaternion, 2, 3, Activation::Identity, &mut rng);
    let x: Vec<f64> = (0..layer.input_width()).map(|i| (i as f64 * 0.37).sin()).collect();
    let y = layer.affine(&x).expect("input width matches");
    let m = layer.to_real_matrix();
    let worst = m
        .iter()
        .zip(&y)
        .map(|(row, yi)| (row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - yi).abs())
        .fold(0.0, f64::max);
    println!(
        "\nlayer 2 -> 3 units: {} parameters, {} real weights when expanded, max mismatch {worst:.1e}",
        layer.num_params(),
        m.len() * m[0].len()
    );
}
