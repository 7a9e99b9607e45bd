use super::triangulate::triangulate_indices;
use super::{smooth_polygon, GeometryError, Point2, Polygon, SmoothingParams, Triangle};

/// Nearest obstacle boundary point to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    pub point: Point2,
    pub distance: f64,
    /// Triangle owning the winning edge.
    pub triangle_index: usize,
}

/// Closest point to `p` on the segment `[a, b]` and its distance. A
/// zero-length segment is treated as the point `a`.
#[inline]
pub fn closest_point_on_segment(p: Point2, a: Point2, b: Point2) -> (Point2, f64) {
    let e = b - a;
    let len2 = e.dot(e);
    let q = project(p, a, e, len2);
    (q, (p - q).norm())
}

#[inline]
fn project(p: Point2, a: Point2, e: Point2, len2: f64) -> Point2 {
    let t = if len2 > 0.0 {
        ((p - a).dot(e) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    a + e * t
}

/// Precomputed boundary edges of an obstacle's triangles, stored
/// column-wise so a query streams over contiguous arrays.
#[derive(Debug, Clone, Default, PartialEq)]
struct EdgeTable {
    origin: Vec<Point2>,
    dir: Vec<Point2>,
    len2: Vec<f64>,
    triangle: Vec<usize>,
}

impl EdgeTable {
    /// Keeps the triangle edges that lie on the polygon boundary, ordered by
    /// triangle index then local edge index (`a->b`, `b->c`, `c->a`).
    fn build(triangles: &[Triangle], boundary: &[[bool; 3]]) -> Self {
        let mut table = EdgeTable::default();
        for (t, (tri, flags)) in triangles.iter().zip(boundary).enumerate() {
            for (e, &(a, b)) in tri.edges().iter().enumerate() {
                if !flags[e] {
                    continue;
                }
                let d = b - a;
                table.origin.push(a);
                table.dir.push(d);
                table.len2.push(d.dot(d));
                table.triangle.push(t);
            }
        }
        table
    }

    fn len(&self) -> usize {
        self.origin.len()
    }

    /// Strict `<` keeps the lowest edge on ties.
    #[inline]
    fn query(&self, p: Point2) -> ClosestPointResult {
        let mut best = ClosestPointResult {
            point: p,
            distance: f64::INFINITY,
            triangle_index: usize::MAX,
        };
        let mut best_d = f64::INFINITY;
        for k in 0..self.len() {
            let q = project(p, self.origin[k], self.dir[k], self.len2[k]);
            let d = (p - q).norm();
            if d < best_d {
                best_d = d;
                best.point = q;
                best.triangle_index = self.triangle[k];
            }
        }
        best.distance = best_d;
        best
    }
}

/// A preprocessed obstacle: raw outline, smoothed outline and its
/// constrained Delaunay triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: usize,
    pub raw: Polygon,
    pub smoothed: Polygon,
    pub triangles: Vec<Triangle>,
    boundary: Vec<[bool; 3]>,
    edges: EdgeTable,
}

impl Obstacle {
    /// Smooths and triangulates `raw`.
    pub fn new(id: usize, raw: Polygon, smoothing: &SmoothingParams) -> Result<Self, GeometryError> {
        let smoothed = smooth_polygon(&raw, smoothing)?;
        Self::from_smoothed(id, raw, smoothed)
    }

    /// Triangulates an already-smoothed outline.
    pub fn from_smoothed(id: usize, raw: Polygon, smoothed: Polygon) -> Result<Self, GeometryError> {
        smoothed.validate()?;
        let idx = triangulate_indices(&smoothed)?;
        let nv = smoothed.len();
        let pts = &smoothed.vertices;
        let triangles: Vec<Triangle> = idx
            .iter()
            .map(|t| Triangle::new(pts[t[0]], pts[t[1]], pts[t[2]]))
            .collect();
        let boundary: Vec<[bool; 3]> = idx
            .iter()
            .map(|t| {
                let on = |i: usize, j: usize| (i + 1) % nv == j;
                [on(t[0], t[1]), on(t[1], t[2]), on(t[2], t[0])]
            })
            .collect();
        let total: f64 = triangles.iter().map(Triangle::area).sum();
        let area = smoothed.area();
        if (total - area).abs() > 1e-9 * area {
            return Err(GeometryError::Triangulation(format!(
                "triangle areas sum to {total:e}, polygon area is {area:e}"
            )));
        }
        let edges = EdgeTable::build(&triangles, &boundary);
        Ok(Obstacle {
            id,
            raw,
            smoothed,
            triangles,
            boundary,
            edges,
        })
    }

    /// Applies an affine map `p -> (p - origin) * factor` to every stored
    /// point without re-triangulating.
    pub fn rescaled(&self, origin: Point2, factor: f64) -> Obstacle {
        let map = |p: Point2| (p - origin) * factor;
        let map_poly = |poly: &Polygon| Polygon::new(poly.vertices.iter().map(|&p| map(p)).collect());
        let triangles: Vec<Triangle> = self
            .triangles
            .iter()
            .map(|t| Triangle::new(map(t.a), map(t.b), map(t.c)))
            .collect();
        let edges = EdgeTable::build(&triangles, &self.boundary);
        Obstacle {
            id: self.id,
            raw: map_poly(&self.raw),
            smoothed: map_poly(&self.smoothed),
            triangles,
            boundary: self.boundary.clone(),
            edges,
        }
    }

    /// Number of boundary edges scanned per query.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Boundary flags per triangle edge (`a->b`, `b->c`, `c->a`).
    pub fn boundary_flags(&self) -> &[[bool; 3]] {
        &self.boundary
    }
}

/// Nearest point on the obstacle boundary. Only triangle edges on the
/// smoothed outline are candidates, so a query inside the obstacle still
/// reports its distance to the outline.
pub fn closest_point_on_obstacle(p: Point2, obstacle: &Obstacle) -> ClosestPointResult {
    obstacle.edges.query(p)
}

/// Closest points for every `(point, obstacle)` pair; `result[i][o]`
/// belongs to `points[i]` and `obstacles[o]`.
pub fn batch_closest_points(points: &[Point2], obstacles: &[Obstacle]) -> Vec<Vec<ClosestPointResult>> {
    let mut out = vec![Vec::with_capacity(obstacles.len()); points.len()];
    for obstacle in obstacles {
        let table = &obstacle.edges;
        for (row, &p) in out.iter_mut().zip(points) {
            row.push(table.query(p));
        }
    }
    out
}
