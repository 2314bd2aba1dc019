//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the process exits nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dqmotion::algebra::{DualQuaternion, Point3, Quaternion, RigidTransform};
use dqmotion::cli::{self, ExperimentConfig};
use dqmotion::lorenz::{encode_input, encode_target, Sample, VariantKind, WindowDataset};
use dqmotion::metrics::{gain_from_variances, EvalReport};
use dqmotion::nn::{batch_loss, Activation, AlgebraTag, Mlp, Parameters};
use dqmotion::seqmodels::{
    kl_divergence, run_pose_study, vae_loss, DqVae, EncodedSequence, PoseStudyConfig, VaeConfig, NUM_JOINTS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rand_point(rng: &mut ChaCha8Rng, r: f64) -> Point3 {
    Point3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn rand_rigid(rng: &mut ChaCha8Rng) -> RigidTransform {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    RigidTransform {
        rotation: Quaternion::from_axis_angle(Point3::from_array(axis), theta).unwrap(),
        translation: rand_point(rng, 10.0),
    }
}

/// Rotation matrix of a unit quaternion, written out entry by entry.
fn rotation_matrix(q: Quaternion) -> [[f64; 3]; 3] {
    let Quaternion { w, x, y, z } = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn homogeneous(t: &RigidTransform) -> [[f64; 4]; 4] {
    let r = rotation_matrix(t.rotation);
    let d = t.translation.to_array();
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
        m[i][3] = d[i];
    }
    m[3][3] = 1.0;
    m
}

fn apply_h(m: &[[f64; 4]; 4], p: Point3) -> Point3 {
    let v = [p.x, p.y, p.z, 1.0];
    let r: Vec<f64> = (0..3).map(|i| (0..4).map(|k| m[i][k] * v[k]).sum()).collect();
    Point3::new(r[0], r[1], r[2])
}

/// Left-multiplication matrix of the Hamilton product.
fn left_matrix(a: Quaternion) -> [[f64; 4]; 4] {
    let Quaternion { w, x, y, z } = a;
    [[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]]
}

/// Largest component difference between `a` and `b` or `-b`, whichever is closer.
fn dq_distance_up_to_sign(a: DualQuaternion, b: DualQuaternion) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    let plus = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let minus = a.iter().zip(&b).map(|(u, v)| (u + v).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut tp, mut qm, mut sc) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let g = rand_rigid(&mut rng);
        let dq = DualQuaternion::from_rigid(&g).unwrap();
        let p = rand_point(&mut rng, 10.0);
        tp = tp.max(dq.transform_point(p).unwrap().distance(apply_h(&homogeneous(&g), p)));

        let a = Quaternion::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let b = Quaternion::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let l = left_matrix(a);
        let bv = b.to_array();
        let prod = (a * b).to_array();
        for i in 0..4 {
            let want: f64 = (0..4).map(|k| l[i][k] * bv[k]).sum();
            qm = qm.max((prod[i] - want).abs());
        }

        let screw = dq.to_screw().unwrap();
        let back = DualQuaternion::from_screw(&screw).unwrap();
        let err = dq_distance_up_to_sign(back, dq);
        sc = sc.max(err);
    }
    let elapsed = start.elapsed();
    let pass = tp <= 1e-9 && qm <= 1e-12 && sc <= 1e-9 && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "transform_point err {tp:.2e} (<=1e-9), quat_mul err {qm:.2e} (<=1e-12), screw round trip err {sc:.2e} (<=1e-9), {:.3}s (<1s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = DualQuaternion::from_rigid(&rand_rigid(&mut rng)).unwrap();
        let f = DualQuaternion::from_rigid(&rand_rigid(&mut rng)).unwrap();
        let p = rand_point(&mut rng, 10.0);
        let lhs = (g * f).transform_point(p).unwrap();
        let rhs = g.transform_point(f.transform_point(p).unwrap()).unwrap();
        worst = worst.max(lhs.distance(rhs));
    }
    outcome(worst <= 1e-9, format!("max composition error {worst:.2e} over 1000 cases (<=1e-9)"))
}

fn rel_err(a: f64, f: f64, floor: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(floor)
}

const H: f64 = 1e-6;
/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-4;

fn mlp_gradient_error(algebra: AlgebraTag, seed: u64) -> f64 {
    let widths: Vec<usize> = match algebra {
        AlgebraTag::Real => vec![6, 7, 5, 3],
        AlgebraTag::Quaternion => vec![2, 3, 2, 1],
        AlgebraTag::DualQuaternion => vec![1, 3, 2, 1],
    };
    let mut m = Mlp::new(algebra, &widths, Activation::SplitTanh, Activation::Identity, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let mut p = m.to_flat();
    p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    m.load_flat(&p).unwrap();
    let samples = (0..6)
        .map(|_| {
            let (a, b, c) = (rand_point(&mut rng, 1.0), rand_point(&mut rng, 1.0), rand_point(&mut rng, 1.0));
            Sample { input: encode_input(a, b, algebra), target: encode_target(c, algebra) }
        })
        .collect();
    let data = WindowDataset { algebra, samples };
    let (_, g) = batch_loss(&m, &data, true).unwrap();
    let g = g.unwrap().to_flat();
    let mut probe = m.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] += H;
        probe.load_flat(&q).unwrap();
        let up = batch_loss(&probe, &data, false).unwrap().0;
        q[i] -= 2.0 * H;
        probe.load_flat(&q).unwrap();
        let down = batch_loss(&probe, &data, false).unwrap().0;
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * H), REL_FLOOR));
    }
    worst
}

fn vae_gradient_error() -> f64 {
    let vae = DqVae::new(VaeConfig::scaled(AlgebraTag::DualQuaternion, 2, 2, 2, 0.5), 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let width = vae.config.frame_width();
    let mut frames = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    };
    let batch = vec![
        EncodedSequence { observed: frames(3), future: frames(2) },
        EncodedSequence { observed: frames(3), future: frames(2) },
    ];
    let (_, g) = vae.batch_loss(&batch, Some(9), true).unwrap();
    let g = g.unwrap().to_flat();
    let p = vae.to_flat();
    let mut probe = vae.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] += H;
        probe.load_flat(&q).unwrap();
        let up = probe.batch_loss(&batch, Some(9), false).unwrap().0.total;
        q[i] -= 2.0 * H;
        probe.load_flat(&q).unwrap();
        let down = probe.batch_loss(&batch, Some(9), false).unwrap().0.total;
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * H), REL_FLOOR));
    }
    worst
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mlp: Vec<(AlgebraTag, f64)> = AlgebraTag::ALL.iter().map(|&a| (a, mlp_gradient_error(a, 5))).collect();
    let vae = vae_gradient_error();
    let elapsed = start.elapsed();
    let mlp_ok = mlp.iter().all(|(_, e)| *e < 1e-5);
    let text: Vec<String> = mlp.iter().map(|(a, e)| format!("{a} {e:.2e}")).collect();
    outcome(
        mlp_ok && vae < 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "MLP max rel err [{}] (<1e-5), VAE max rel err {vae:.2e} (<1e-4), {:.1}s (<30s)",
            text.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let count = |a, w: &[usize]| Mlp::new(a, w, Activation::SplitRelu, Activation::Identity, 0).unwrap();
    let dq = count(AlgebraTag::DualQuaternion, &[1, 53, 1]);
    let real = count(AlgebraTag::Real, &[6, 128, 3]);
    let quat = count(AlgebraTag::Quaternion, &[2, 80, 1]);
    let counts = [dq.param_count(), real.param_count(), quat.param_count()];
    let within = counts.iter().all(|&c| (c as f64 - 1280.0).abs() / 1280.0 <= 0.005);

    let r = count(AlgebraTag::Real, &[16, 32, 8]).weight_grid_count();
    let q = count(AlgebraTag::Quaternion, &[4, 8, 2]).weight_grid_count();
    let d = count(AlgebraTag::DualQuaternion, &[2, 4, 1]).weight_grid_count();
    let vae = |a| DqVae::new(VaeConfig::scaled(a, NUM_JOINTS, 8, 4, 1e-3), 0).unwrap().weight_grid_count();
    let (vr, vq, vd) = (vae(AlgebraTag::Real), vae(AlgebraTag::Quaternion), vae(AlgebraTag::DualQuaternion));
    let ratios_ok = 4 * q == r && 8 * d == r && 4 * vq == vr && 8 * vd == vr;
    outcome(
        counts == [1280, 1283, 1284] && within && ratios_ok,
        format!(
            "param counts dq {} real {} quat {} (want 1280/1283/1284); weight grids MLP {r}:{q}:{d}, VAE {vr}:{vq}:{vd} (want 1 : 1/4 : 1/8)",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn mse_of(reports: &[EvalReport], v: VariantKind) -> f64 {
    reports.iter().find(|r| r.variant == v).map(|r| r.mse).unwrap()
}

fn gain_of(reports: &[EvalReport], v: VariantKind) -> f64 {
    reports.iter().find(|r| r.variant == v).map(|r| r.prediction_gain_db).unwrap()
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for s in 0..3u64 {
        let cfg = ExperimentConfig { seeds: cli::Seeds { data: s, init: s, transform: s }, ..Default::default() };
        let start = Instant::now();
        let study = cli::run_lorenz_study(&cfg).unwrap();
        let elapsed = start.elapsed();
        let get = |a| &study.iter().find(|(t, _)| *t == a).unwrap().1;
        let (real, quat, dq) = (get(AlgebraTag::Real), get(AlgebraTag::Quaternion), get(AlgebraTag::DualQuaternion));
        let a = VariantKind::ALL
            .iter()
            .all(|&v| mse_of(dq, v) < mse_of(real, v) && mse_of(dq, v) < mse_of(quat, v));
        let tr = VariantKind::TranslatedRotated;
        let (rr, qr) = (mse_of(real, tr) / mse_of(dq, tr), mse_of(quat, tr) / mse_of(dq, tr));
        let b = rr >= 10.0 && qr >= 10.0;
        let (gt, go) = (gain_of(dq, VariantKind::Translated), gain_of(dq, VariantKind::Original));
        let c = gt > go - 15.0;
        let t = elapsed < Duration::from_secs(300);
        pass &= a && b && c && t;
        let row = |r: &[EvalReport]| {
            VariantKind::ALL.iter().map(|&v| format!("{:.3}", mse_of(r, v))).collect::<Vec<_>>().join("/")
        };
        lines.push(format!(
            "seed {s}: (a) {} (b) {} real/dq {rr:.2} quat/dq {qr:.2} (c) {} dq gain T {gt:.1} vs O {go:.1} dB; MSE O/T/R/TR real {} quat {} dq {}; {:.1}s",
            if a { "ok" } else { "no" },
            if b { "ok" } else { "no" },
            if c { "ok" } else { "no" },
            row(real),
            row(quat),
            row(dq),
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, lines.join("\n    "))
}

fn criterion_6() -> Outcome {
    let g20 = gain_from_variances(100.0, 1.0).unwrap();
    let g0 = gain_from_variances(3.5, 3.5).unwrap();
    outcome(g20 == 20.0 && g0 == 0.0, format!("gain(100, 1) = {g20} dB, gain(3.5, 3.5) = {g0} dB"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pred: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let truth: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let sse: f64 = pred.iter().flatten().zip(truth.iter().flatten()).map(|(a, b)| (a - b) * (a - b)).sum();
    let l = vae_loss(&pred, &truth, &[0.4, -0.2], &[0.3, 0.1], 0.0).unwrap();
    let k0 = kl_divergence(&[0.0], &[0.0]);
    let k1 = kl_divergence(&[1.0], &[0.0]);
    let pass = (l.total - sse).abs() <= 1e-12 * sse && k0 == 0.0 && k1 == 0.5;
    outcome(pass, format!("beta=0 total {:.12} vs SSE {sse:.12}; KL(0,0) = {k0}, KL(1,0) = {k1}", l.total))
}

fn criterion_8() -> Outcome {
    let cfg = PoseStudyConfig::default();
    let start = Instant::now();
    let mut wins = 0;
    let mut moving = true;
    let mut lines = Vec::new();
    for s in 0..3u64 {
        let r = run_pose_study(&cfg, s, s).unwrap();
        let real = r.variant(AlgebraTag::Real).unwrap();
        let dq = r.variant(AlgebraTag::DualQuaternion).unwrap();
        let quat = r.variant(AlgebraTag::Quaternion).unwrap();
        if dq.vim < real.vim {
            wins += 1;
        }
        moving &= dq.center_displacement_ratio > 0.25;
        lines.push(format!(
            "seed {s}: VIM real {:.4} quat {:.4} dq {:.4}; dq center displacement {:.2} of truth",
            real.vim, quat.vim, dq.vim, dq.center_displacement_ratio
        ));
    }
    let elapsed = start.elapsed();
    let pass = wins >= 2 && moving && elapsed < Duration::from_secs(600);
    lines.insert(0, format!("dq beats real on VIM in {wins}/3 seeds (need 2), {:.0}s (<600s)", elapsed.as_secs_f64()));
    outcome(pass, lines.join("\n    "))
}

fn run_pipeline(dir: &Path) -> Vec<PathBuf> {
    let cfg = ExperimentConfig {
        seeds: cli::Seeds { data: 4, init: 5, transform: 6 },
        pose: PoseStudyConfig { n_train: 4, n_val: 2, epochs: 10, ..PoseStudyConfig::default() },
        ..Default::default()
    };
    let mut files = Vec::new();
    let traj = dir.join("lorenz.csv");
    files.extend(cli::cmd_gen(&cfg, &traj).unwrap().files);
    let mut evals = Vec::new();
    for a in AlgebraTag::ALL {
        let ck = dir.join(format!("{}.json", a.name()));
        files.extend(cli::cmd_train(&cfg, &traj, a, &ck).unwrap().files);
        let ev = dir.join(format!("{}_eval.json", a.name()));
        files.extend(cli::cmd_eval(&cfg, &traj, &ck, Some(a), &VariantKind::ALL, &ev).unwrap().files);
        evals.push(ev);
    }
    files.extend(cli::cmd_report(&evals, Some(&dir.join("table.csv"))).unwrap().files);
    files.extend(cli::cmd_pose(&cfg, None, None, &dir.join("pose.json")).unwrap().files);
    files
}

fn criterion_9() -> Outcome {
    let a = tempfile::TempDir::new().unwrap();
    let b = tempfile::TempDir::new().unwrap();
    let fa = run_pipeline(a.path());
    let fb = run_pipeline(b.path());
    let mut differing = Vec::new();
    for (x, y) in fa.iter().zip(&fb) {
        if fs::read(x).unwrap() != fs::read(y).unwrap() {
            differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    outcome(
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} files compared, differing: {:?}", fa.len(), differing),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("1 algebra oracles", criterion_1),
        ("2 analytic equivariance", criterion_2),
        ("3 gradient checks", criterion_3),
        ("4 parameter budgets", criterion_4),
        ("5 Lorenz equivariance study", criterion_5),
        ("6 prediction gain units", criterion_6),
        ("7 VAE loss identities", criterion_7),
        ("8 synthetic pose study", criterion_8),
        ("9 pipeline determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
