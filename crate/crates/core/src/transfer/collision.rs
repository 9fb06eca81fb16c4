//! Capsule-versus-obstacle clearance.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::arm::{ArmModel, Capsule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Obstacle {
    Box {
        name: String,
        min: [f64; 3],
        max: [f64; 3],
    },
    Sphere {
        name: String,
        center: [f64; 3],
        radius: f64,
        /// The fork may enter this sphere (the user's head).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        tool_contact: bool,
    },
}

impl Obstacle {
    pub fn name(&self) -> &str {
        match self {
            Obstacle::Box { name, .. } | Obstacle::Sphere { name, .. } => name,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Obstacle::Box { min, max, .. } => {
                (0..3).all(|i| min[i] <= max[i] && min[i].is_finite() && max[i].is_finite())
            }
            Obstacle::Sphere { center, radius, .. } => *radius >= 0.0 && center.iter().all(|c| c.is_finite()),
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.distance_to_point(p) <= 0.0
    }

    /// Euclidean distance from `p` to the solid; 0 inside.
    pub fn distance_to_point(&self, p: &Point3<f64>) -> f64 {
        match self {
            Obstacle::Box { min, max, .. } => point_box_distance(p, min, max),
            Obstacle::Sphere { center, radius, .. } => ((p - Point3::from(*center)).norm() - radius).max(0.0),
        }
    }

    /// Distance from segment `ab` to the solid; 0 when they intersect.
    pub fn distance_to_segment(&self, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
        self.distance_to_segment_above(a, b, f64::INFINITY)
    }

    /// Like [`Obstacle::distance_to_segment`], but may return any lower bound
    /// of at least `threshold` once the true distance is known to exceed it.
    pub fn distance_to_segment_above(&self, a: &Point3<f64>, b: &Point3<f64>, threshold: f64) -> f64 {
        if let Obstacle::Box { min, max, .. } = self {
            let mid = Point3::from((a.coords + b.coords) * 0.5);
            let bound = point_box_distance(&mid, min, max) - 0.5 * (b - a).norm();
            if bound >= threshold {
                return bound;
            }
        }
        match self {
            Obstacle::Box { min, max, .. } => segment_box_distance(a, b, min, max),
            Obstacle::Sphere { center, radius, .. } => {
                let c = Point3::from(*center);
                (point_segment_distance(&c, a, b) - radius).max(0.0)
            }
        }
    }

    fn ignores(&self, capsule: &Capsule) -> bool {
        capsule.is_fork && matches!(self, Obstacle::Sphere { tool_contact: true, .. })
    }
}

fn point_box_distance(p: &Point3<f64>, min: &[f64; 3], max: &[f64; 3]) -> f64 {
    let d = Vector3::from_fn(|i, _| (min[i] - p[i]).max(p[i] - max[i]).max(0.0));
    d.norm()
}

fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// The distance along the segment is convex in the segment parameter, so a
/// golden-section search converges to the minimum.
fn segment_box_distance(a: &Point3<f64>, b: &Point3<f64>, min: &[f64; 3], max: &[f64; 3]) -> f64 {
    let ab = b - a;
    let f = |t: f64| point_box_distance(&(a + ab * t), min, max);
    let (fa, fb) = (f(0.0), f(1.0));
    if fa == 0.0 || fb == 0.0 {
        return 0.0;
    }
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let tol = 1e-4 / ab.norm().max(1e-9);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if f1 == 0.0 || f2 == 0.0 {
            return 0.0;
        }
    }
    // The final bracket spans 1e-4 m of segment; stay on the safe side of it.
    (fa.min(fb).min(f1).min(f2) - 1e-4).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneObstacles(pub Vec<Obstacle>);

impl SceneObstacles {
    pub fn iter(&self) -> impl Iterator<Item = &Obstacle> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Smallest capsule-surface to obstacle distance; negative when a capsule
    /// overlaps an obstacle.
    pub fn clearance(&self, arm: &ArmModel, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for capsule in arm.capsules(q) {
            for obstacle in &self.0 {
                if obstacle.ignores(&capsule) {
                    continue;
                }
                best = best.min(obstacle.distance_to_segment(&capsule.a, &capsule.b) - capsule.radius);
            }
        }
        best
    }

    /// True when every capsule keeps at least `margin` from every obstacle.
    pub fn is_clear(&self, arm: &ArmModel, q: &[f64], margin: f64) -> bool {
        for capsule in arm.capsules(q) {
            for obstacle in &self.0 {
                if obstacle.ignores(&capsule) {
                    continue;
                }
                let needed = capsule.radius + margin;
                if obstacle.distance_to_segment_above(&capsule.a, &capsule.b, needed) < needed {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Obstacle {
        Obstacle::Box { name: "b".into(), min: [0.0; 3], max: [1.0; 3] }
    }

    #[test]
    fn segment_box_distance_matches_dense_sampling() {
        let b = unit_box();
        let cases = [
            (Point3::new(-1.0, 2.0, 0.5), Point3::new(2.0, 3.0, 0.5)),
            (Point3::new(-0.5, -0.5, -0.5), Point3::new(-0.5, 2.0, 3.0)),
            (Point3::new(2.0, 2.0, 2.0), Point3::new(3.0, 2.5, 2.2)),
            (Point3::new(-1.0, 0.5, 0.5), Point3::new(2.0, 0.5, 0.5)),
        ];
        for (a, c) in cases {
            let dense = (0..=100_000)
                .map(|k| b.distance_to_point(&(a + (c - a) * (k as f64 / 100_000.0))))
                .fold(f64::INFINITY, f64::min);
            let d = b.distance_to_segment(&a, &c);
            assert!(d <= dense + 1e-9 && dense - d < 3e-4, "{d} vs {dense}");
        }
    }

    #[test]
    fn sphere_distance() {
        let s = Obstacle::Sphere { name: "s".into(), center: [0.0, 0.0, 0.0], radius: 1.0, tool_contact: false };
        let d = s.distance_to_segment(&Point3::new(-3.0, 2.0, 0.0), &Point3::new(3.0, 2.0, 0.0));
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(s.distance_to_point(&Point3::origin()), 0.0);
    }
}
