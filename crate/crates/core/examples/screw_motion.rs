//! Every rigid motion is a rotation about a line plus a slide along it.
//!
//! ```text
//! cargo run --example screw_motion
//! ```

use dqmotion::{DualQuaternion, Point3, Quaternion, RigidTransform, ScrewParams};

fn show(label: &str, s: &ScrewParams) {
    let c = s.axis_offset();
    println!(
        "{label:<12} theta {:>7.4}  slide {:>7.4}  direction ({:.3}, {:.3}, {:.3})  closest axis point ({:.3}, {:.3}, {:.3})",
        s.theta, s.slide, s.direction.x, s.direction.y, s.direction.z, c.x, c.y, c.z
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Half a turn about the vertical line through (1, 0, 0), rising by 0.5.
    let line = ScrewParams::about_line(std::f64::consts::PI, 0.5, Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 0.0));
    let dq = DualQuaternion::from_screw(&line)?;
    show("built", &line);
    show("recovered", &dq.to_screw()?);

    let p = Point3::ZERO;
    let q = dq.transform_point(p)?;
    println!("origin goes to ({:.3}, {:.3}, {:.3})", q.x, q.y, q.z);

    // A generic motion and its screw decomposition.
    let axis = Point3::new(1.0, 2.0, 2.0).scale(1.0 / 3.0);
    let motion = RigidTransform {
        rotation: Quaternion::from_axis_angle(axis, 1.1)?,
        translation: Point3::new(0.3, -1.0, 2.0),
    };
    let g = DualQuaternion::from_rigid(&motion)?;
    let s = g.to_screw()?;
    show("generic", &s);
    let rebuilt = DualQuaternion::from_screw(&s)?;
    let err = g.to_array().iter().zip(rebuilt.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("rebuild error {err:.2e}");

    show("translation", &DualQuaternion::from_translation(Point3::new(0.0, 3.0, 4.0)).to_screw()?);
    Ok(())
}
