use serde::{Deserialize, Serialize};

use super::{GeometryError, Point2, Polygon};

/// Corner-rounding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingParams {
    /// Upper bound on the fillet radius (m).
    pub fillet_radius: f64,
    /// Corners whose interior angle deviates from π by more than this (rad)
    /// are rounded.
    pub angle_threshold: f64,
    /// Points sampled on each fillet arc, endpoints included.
    pub arc_samples: usize,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            fillet_radius: 5e-4,
            angle_threshold: 0.35,
            arc_samples: 4,
        }
    }
}

/// Replaces every sharp corner of `raw` with a circular fillet tangent to
/// both adjacent edges.
///
/// The fillet radius is `min(fillet_radius, shorter adjacent edge / 2)`. For
/// acute corners the radius is reduced further so the tangent points stay
/// within the first half of each adjacent edge, which keeps neighbouring
/// fillets from overlapping. Convex corners lose material, reflex corners
/// gain it; either way the arc bulges towards the inside of the bend.
pub fn smooth_polygon(raw: &Polygon, params: &SmoothingParams) -> Result<Polygon, GeometryError> {
    if !(params.fillet_radius > 0.0) || !params.fillet_radius.is_finite() {
        return Err(GeometryError::InvalidParameter("fillet_radius must be positive"));
    }
    if !(params.angle_threshold >= 0.0) {
        return Err(GeometryError::InvalidParameter("angle_threshold must be non-negative"));
    }
    if params.arc_samples < 2 {
        return Err(GeometryError::InvalidParameter("arc_samples must be at least 2"));
    }
    raw.validate()?;

    let verts = &raw.vertices;
    let n = verts.len();
    let mut out = Vec::with_capacity(n * params.arc_samples);
    for i in 0..n {
        let prev = verts[(i + n - 1) % n];
        let v = verts[i];
        let next = verts[(i + 1) % n];
        let len_in = v.distance(prev);
        let len_out = next.distance(v);
        let dir_in = (v - prev) * (1.0 / len_in);
        let dir_out = (next - v) * (1.0 / len_out);
        // Signed turning angle: positive for a left (convex) turn on a CCW ring.
        let turn = dir_in.cross(dir_out).atan2(dir_in.dot(dir_out));
        if turn.abs() <= params.angle_threshold {
            out.push(v);
            continue;
        }

        let half_edge = 0.5 * len_in.min(len_out);
        let half_turn_tan = (0.5 * turn.abs()).tan();
        let mut radius = params.fillet_radius.min(half_edge);
        let mut tangent = radius * half_turn_tan;
        if tangent > half_edge {
            tangent = half_edge;
            radius = tangent / half_turn_tan;
        }

        let start = v - dir_in * tangent;
        let end = v + dir_out * tangent;
        let normal = if turn > 0.0 { dir_in.perp() } else { -dir_in.perp() };
        let center = start + normal * radius;
        let start_angle = (start.y - center.y).atan2(start.x - center.x);
        let last = params.arc_samples - 1;
        out.push(start);
        for k in 1..last {
            let a = start_angle + turn * (k as f64) / (last as f64);
            out.push(center + Point2::new(a.cos(), a.sin()) * radius);
        }
        out.push(end);
    }

    let scale = verts
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let polygon = Polygon::new(dedup_ring(out, 1e-12 * scale));
    polygon.validate()?;
    Ok(polygon)
}

/// Drops consecutive vertices closer than `tol`, including across the seam.
fn dedup_ring(points: Vec<Point2>, tol: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_some_and(|q| q.distance(p) <= tol) {
            continue;
        }
        out.push(p);
    }
    while out.len() > 1 && out[0].distance(*out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
    }

    fn l_shape() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
    }

    fn distance_to_boundary(poly: &Polygon, p: Point2) -> f64 {
        poly.edges()
            .map(|(a, b)| super::super::closest_point_on_segment(p, a, b).1)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unit_square_gets_twelve_vertices_near_boundary() {
        let params = SmoothingParams {
            fillet_radius: 0.1,
            angle_threshold: 0.35,
            arc_samples: 3,
        };
        let smoothed = smooth_polygon(&unit_square(), &params).unwrap();
        assert_eq!(smoothed.len(), 12);
        let band = 0.1 * 2f64.sqrt();
        for v in &smoothed.vertices {
            assert!(distance_to_boundary(&unit_square(), *v) <= band + 1e-15);
        }
        // Middle arc point of the (0,0) corner sits on the fillet circle.
        let center = Point2::new(0.1, 0.1);
        for v in &smoothed.vertices[..3] {
            assert!((v.distance(center) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn shallow_polygon_is_unchanged() {
        let ring = Polygon::new(
            (0..64)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                    Point2::new(a.cos(), a.sin())
                })
                .collect(),
        );
        let params = SmoothingParams {
            angle_threshold: 0.2,
            ..SmoothingParams::default()
        };
        let smoothed = smooth_polygon(&ring, &params).unwrap();
        assert_eq!(smoothed, ring);
    }

    #[test]
    fn l_shape_vertex_count_and_reflex_fillet() {
        let params = SmoothingParams {
            fillet_radius: 0.2,
            angle_threshold: 0.35,
            arc_samples: 5,
        };
        let raw = l_shape();
        // All six corners turn by ±π/2.
        let k = 6;
        let smoothed = smooth_polygon(&raw, &params).unwrap();
        assert_eq!(smoothed.len(), 6 - k + k * params.arc_samples);
        // Reflex corner (1,1) is rounded into the notch: the arc midpoint lies
        // outside the raw polygon and the smoothed area grows there.
        let mid = smoothed.vertices[3 * params.arc_samples + 2];
        assert!(!super::super::point_in_polygon(mid, &raw));
        assert!(mid.x > 1.0 && mid.y > 1.0);
    }

    #[test]
    fn acute_corner_stays_simple() {
        let spike = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 0.05),
        ]);
        let params = SmoothingParams {
            fillet_radius: 0.5,
            angle_threshold: 0.1,
            arc_samples: 4,
        };
        let smoothed = smooth_polygon(&spike, &params).unwrap();
        assert!(smoothed.validate().is_ok());
    }

    #[test]
    fn rejects_bad_parameters_and_degenerate_input() {
        let p = SmoothingParams {
            arc_samples: 1,
            ..SmoothingParams::default()
        };
        assert!(smooth_polygon(&unit_square(), &p).is_err());
        let p = SmoothingParams {
            fillet_radius: 0.0,
            ..SmoothingParams::default()
        };
        assert!(smooth_polygon(&unit_square(), &p).is_err());
        let degenerate = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ]);
        assert!(matches!(
            smooth_polygon(&degenerate, &SmoothingParams::default()),
            Err(GeometryError::ZeroLengthEdge(_))
        ));
    }
}
