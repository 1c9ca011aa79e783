//! Collision-circle and road-boundary constraints between unicycle players.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView, Matrix2, Vector2};

use super::unicycle::STATE_DIM;
use crate::model::StageConstraint;

pub type Point = Vector2<f64>;

/// Open polyline road boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Option<Self> {
        (points.len() >= 2 && points.iter().all(|p| p.iter().all(|v| v.is_finite()))).then_some(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Closest point on the polyline; ties go to the lowest segment index.
    pub fn closest_point(&self, p: &Point) -> Point {
        self.closest(p).0
    }

    /// Closest point plus the unit tangent of its segment when the point
    /// lies strictly inside that segment.
    fn closest(&self, p: &Point) -> (Point, Option<Point>) {
        let mut best = (self.points[0], None);
        let mut best_d = f64::INFINITY;
        for seg in self.points.windows(2) {
            let q = closest_on_segment(p, &seg[0], &seg[1]);
            let d = (p - q.0).norm_squared();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }
}

fn closest_on_segment(p: &Point, a: &Point, b: &Point) -> (Point, Option<Point>) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, None);
    }
    let t = (p - a).dot(&ab) / len2;
    if t <= 0.0 {
        (*a, None)
    } else if t >= 1.0 {
        (*b, None)
    } else {
        (a + ab * t, Some(ab / len2.sqrt()))
    }
}

/// `r² − ‖p1 − p2‖²`; nonpositive means the circles do not overlap.
pub fn collision_constraint(p1: &Point, p2: &Point, r: f64) -> f64 {
    r * r - (p1 - p2).norm_squared()
}

/// `r² − ‖p − q‖²` with `q` the closest boundary point.
pub fn boundary_constraint(p: &Point, boundary: &Polyline, r: f64) -> f64 {
    let q = boundary.closest_point(p);
    r * r - (p - q).norm_squared()
}

fn position(x: &DVectorView<'_, f64>, player: usize) -> Point {
    Point::new(x[STATE_DIM * player], x[STATE_DIM * player + 1])
}

/// Pairwise collision avoidance between two players at one step.
#[derive(Debug, Clone)]
pub struct CollisionConstraint {
    pub first: usize,
    pub second: usize,
    pub radius: f64,
}

impl StageConstraint for CollisionConstraint {
    fn value(&self, x: DVectorView<'_, f64>, _u: DVectorView<'_, f64>) -> f64 {
        collision_constraint(&position(&x, self.first), &position(&x, self.second), self.radius)
    }

    fn gradient(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>) -> (DVector<f64>, DVector<f64>) {
        let d = position(&x, self.first) - position(&x, self.second);
        let mut gx = DVector::zeros(x.len());
        let (i, j) = (STATE_DIM * self.first, STATE_DIM * self.second);
        gx[i] = -2.0 * d.x;
        gx[i + 1] = -2.0 * d.y;
        gx[j] = 2.0 * d.x;
        gx[j + 1] = 2.0 * d.y;
        (gx, DVector::zeros(u.len()))
    }

    fn state_only(&self) -> bool {
        true
    }

    fn add_hessian(&self, _x: DVectorView<'_, f64>, u: DVectorView<'_, f64>, scale: f64, out: &mut DMatrix<f64>) {
        let (i, j) = (u.len() + STATE_DIM * self.first, u.len() + STATE_DIM * self.second);
        for d in 0..2 {
            out[(i + d, i + d)] -= 2.0 * scale;
            out[(j + d, j + d)] -= 2.0 * scale;
            out[(i + d, j + d)] += 2.0 * scale;
            out[(j + d, i + d)] += 2.0 * scale;
        }
    }
}

/// Keeps one player at least `radius` away from a road boundary.
#[derive(Debug, Clone)]
pub struct BoundaryConstraint {
    pub player: usize,
    pub boundary: Arc<Polyline>,
    pub radius: f64,
}

impl StageConstraint for BoundaryConstraint {
    fn value(&self, x: DVectorView<'_, f64>, _u: DVectorView<'_, f64>) -> f64 {
        boundary_constraint(&position(&x, self.player), &self.boundary, self.radius)
    }

    fn gradient(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>) -> (DVector<f64>, DVector<f64>) {
        let p = position(&x, self.player);
        let d = p - self.boundary.closest_point(&p);
        let mut gx = DVector::zeros(x.len());
        let i = STATE_DIM * self.player;
        gx[i] = -2.0 * d.x;
        gx[i + 1] = -2.0 * d.y;
        (gx, DVector::zeros(u.len()))
    }

    fn state_only(&self) -> bool {
        true
    }

    /// `−2 (I − t tᵀ)` along a segment interior, `−2 I` at a vertex.
    fn add_hessian(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>, scale: f64, out: &mut DMatrix<f64>) {
        let (_, tangent) = self.boundary.closest(&position(&x, self.player));
        let mut h = Matrix2::identity();
        if let Some(t) = tangent {
            h -= t * t.transpose();
        }
        let i = u.len() + STATE_DIM * self.player;
        let mut blk = out.view_mut((i, i), (2, 2));
        blk -= h * (2.0 * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis() -> Polyline {
        Polyline::new(vec![Point::new(-10.0, 0.0), Point::new(10.0, 0.0)]).unwrap()
    }

    #[test]
    fn collision_examples() {
        assert_eq!(collision_constraint(&Point::new(0.0, 0.0), &Point::new(2.0, 0.0), 1.0), -3.0);
        assert_eq!(collision_constraint(&Point::new(1.0, 1.0), &Point::new(1.0, 1.0), 1.0), 1.0);
        assert_eq!(collision_constraint(&Point::new(0.0, 0.0), &Point::new(0.0, 1.0), 1.0), 0.0);
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_constraint(&Point::new(0.0, 2.0), &axis(), 1.0), -3.0);
        assert_eq!(boundary_constraint(&Point::new(3.0, 0.0), &axis(), 1.5), 2.25);
        assert_eq!(boundary_constraint(&Point::new(0.0, 1.0), &axis(), 1.0), 0.0);
    }

    #[test]
    fn degenerate_polyline_rejected() {
        assert!(Polyline::new(vec![Point::new(0.0, 0.0)]).is_none());
    }

    #[test]
    fn closest_point_tie_goes_to_first_segment() {
        // p is equidistant from both arms of a V
        let v = Polyline::new(vec![Point::new(-1.0, 1.0), Point::new(0.0, 0.0), Point::new(1.0, 1.0)]).unwrap();
        let q = v.closest_point(&Point::new(0.0, 2.0));
        assert!(q.x < 0.0);
    }

    #[test]
    fn boundary_continuous_across_segment_switches() {
        let bend = Polyline::new(vec![
            Point::new(-5.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(3.0, 2.0),
            Point::new(8.0, 2.0),
        ])
        .unwrap();
        let mut p = Point::new(-4.0, 1.5);
        let dir = Point::new(1.0, 0.05);
        let mut prev = boundary_constraint(&p, &bend, 1.0);
        for _ in 0..120_000 {
            p += dir * 1e-4;
            let cur = boundary_constraint(&p, &bend, 1.0);
            let nudged = boundary_constraint(&(p + Point::new(1e-7, 1e-7)), &bend, 1.0);
            assert!((nudged - cur).abs() < 1e-6);
            assert!((cur - prev).abs() < 1e-2);
            prev = cur;
        }
    }

    proptest! {
        #[test]
        fn collision_symmetric(ax in -50.0f64..50.0, ay in -50.0f64..50.0, bx in -50.0f64..50.0, by in -50.0f64..50.0, r in 0.1f64..5.0) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            prop_assert_eq!(collision_constraint(&a, &b, r), collision_constraint(&b, &a, r));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = DVector::from_vec(vec![0.3, 1.2, 0.1, 2.0, 1.4, -0.7, 0.0, 1.0]);
        let u = DVector::zeros(4);
        let bend = Arc::new(
            Polyline::new(vec![Point::new(-5.0, -2.0), Point::new(0.0, -2.0), Point::new(4.0, -1.0)]).unwrap(),
        );
        let cons: Vec<Box<dyn StageConstraint>> = vec![
            Box::new(CollisionConstraint {
                first: 0,
                second: 1,
                radius: 1.0,
            }),
            Box::new(BoundaryConstraint {
                player: 1,
                boundary: bend,
                radius: 1.0,
            }),
        ];
        for c in &cons {
            let (gx, gu) = c.gradient(x.rows(0, 8), u.rows(0, 4));
            assert_eq!(gu.amax(), 0.0);
            for i in 0..8 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += 1e-6;
                xm[i] -= 1e-6;
                let fd = (c.value(xp.rows(0, 8), u.rows(0, 4)) - c.value(xm.rows(0, 8), u.rows(0, 4))) / 2e-6;
                assert!((fd - gx[i]).abs() < 1e-6, "{i}: {fd} vs {}", gx[i]);
            }
        }
    }

    #[test]
    fn hessians_match_finite_differences() {
        let bend = Arc::new(
            Polyline::new(vec![Point::new(-5.0, -2.0), Point::new(0.0, -2.0), Point::new(4.0, -1.0)]).unwrap(),
        );
        let cons: Vec<Box<dyn StageConstraint>> = vec![
            Box::new(CollisionConstraint {
                first: 0,
                second: 1,
                radius: 1.0,
            }),
            Box::new(BoundaryConstraint {
                player: 1,
                boundary: bend,
                radius: 1.0,
            }),
        ];
        let u = DVector::zeros(4);
        // second player inside a segment, then beyond the outer corner at (0, -2)
        for p1 in [[1.4, -0.7], [-0.1, -2.8]] {
            let x = DVector::from_vec(vec![0.3, 1.2, 0.1, 2.0, p1[0], p1[1], 0.0, 1.0]);
            for c in &cons {
                let mut h = DMatrix::zeros(12, 12);
                c.add_hessian(x.rows(0, 8), u.rows(0, 4), 2.0, &mut h);
                assert_eq!(h.view((0, 0), (4, 12)).amax(), 0.0);
                for i in 0..8 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += 1e-6;
                    xm[i] -= 1e-6;
                    let fd = (c.gradient(xp.rows(0, 8), u.rows(0, 4)).0 - c.gradient(xm.rows(0, 8), u.rows(0, 4)).0) / 1e-6;
                    for j in 0..8 {
                        assert!((fd[j] - h[(4 + j, 4 + i)]).abs() < 1e-5, "({j},{i}): {} vs {}", fd[j], h[(4 + j, 4 + i)]);
                    }
                }
            }
        }
    }
}
