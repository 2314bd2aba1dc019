//! Quaternions, dual quaternions and the point sandwich.
//!
//! Run with `cargo run --example rigid_motion`.

use std::f64::consts::FRAC_PI_2;

use dqmotion::{DualQuaternion, Point3, Quaternion, RigidTransform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let i = Quaternion::I;
    let j = Quaternion::J;
    println!("i * j = {}", i * j);
    println!("j * i = {}", j * i);

    // A quarter turn about z followed by a shift along x.
    let turn = Quaternion::from_axis_angle(Point3::new(0.0, 0.0, 1.0), FRAC_PI_2)?;
    let motion = RigidTransform { rotation: turn, translation: Point3::new(2.0, 0.0, 0.0) };
    let dq = DualQuaternion::from_rigid(&motion)?;
    println!("\nmotion as a dual quaternion: {:?}", dq.to_array());

    let p = Point3::new(1.0, 0.0, 0.0);
    let moved = dq.transform_point(p)?;
    println!("({}, {}, {}) -> ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z, moved.x, moved.y, moved.z);

    let back = dq.conj().transform_point(moved)?;
    println!("inverse brings it back to ({:.3}, {:.3}, {:.3})", back.x, back.y, back.z);

    // Composition is multiplication: apply `dq` twice.
    let twice = (dq * dq).transform_point(p)?;
    let stepwise = dq.transform_point(dq.transform_point(p)?)?;
    println!("\ncomposed ({:.3}, {:.3}, {:.3})", twice.x, twice.y, twice.z);
    println!("stepwise ({:.3}, {:.3}, {:.3})", stepwise.x, stepwise.y, stepwise.z);
    let d = dq.translation();
    println!("recovered translation ({:.3}, {:.3}, {:.3})", d.x, d.y, d.z);
    Ok(())
}
