use std::collections::HashMap;

use super::{orient, GeometryError, Point2, Polygon, Triangle, DEGENERATE_AREA};

/// Constrained Delaunay triangulation of a simple counter-clockwise polygon.
///
/// Ear clipping produces an initial triangulation of the interior; Lawson
/// flips then restore the Delaunay property across every diagonal while the
/// polygon edges stay fixed. Only interior triangles are ever created.
pub fn triangulate(polygon: &Polygon) -> Result<Vec<Triangle>, GeometryError> {
    polygon.validate()?;
    let tris = triangulate_indices(polygon)?;
    let pts = &polygon.vertices;
    let triangles: Vec<Triangle> = tris
        .iter()
        .map(|t| Triangle::new(pts[t[0]], pts[t[1]], pts[t[2]]))
        .collect();

    let total: f64 = triangles.iter().map(Triangle::area).sum();
    let area = polygon.area();
    if (total - area).abs() > 1e-9 * area {
        return Err(GeometryError::Triangulation(format!(
            "triangle areas sum to {total:e}, polygon area is {area:e}"
        )));
    }
    Ok(triangles)
}

/// Triangles as CCW vertex-index triples into `polygon.vertices`.
pub(crate) fn triangulate_indices(polygon: &Polygon) -> Result<Vec<[usize; 3]>, GeometryError> {
    let pts = &polygon.vertices;
    let mut tris = ear_clip(pts)?;
    legalize(pts, &mut tris);
    for (k, t) in tris.iter().enumerate() {
        let area = 0.5 * orient(pts[t[0]], pts[t[1]], pts[t[2]]);
        if area <= DEGENERATE_AREA.min(1e-12 * polygon.area()) {
            return Err(GeometryError::Triangulation(format!(
                "triangle {k} is degenerate (area {area:e})"
            )));
        }
    }
    Ok(tris)
}

fn extent(pts: &[Point2]) -> f64 {
    pts.iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE)
}

fn ear_clip(pts: &[Point2]) -> Result<Vec<[usize; 3]>, GeometryError> {
    let n = pts.len();
    let eps = 1e-14 * extent(pts).powi(2);
    let mut ring: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n - 2);

    while ring.len() > 3 {
        let m = ring.len();
        let mut clipped = false;
        for k in 0..m {
            let (ip, ic, inx) = (ring[(k + m - 1) % m], ring[k], ring[(k + 1) % m]);
            let (a, b, c) = (pts[ip], pts[ic], pts[inx]);
            if orient(a, b, c) <= eps {
                continue;
            }
            let blocked = ring.iter().any(|&j| {
                if j == ip || j == ic || j == inx {
                    return false;
                }
                let p = pts[j];
                if p == a || p == b || p == c {
                    return false;
                }
                orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
            });
            if blocked {
                continue;
            }
            out.push([ip, ic, inx]);
            ring.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(GeometryError::Triangulation(format!(
                "no ear found with {} vertices remaining",
                ring.len()
            )));
        }
    }
    out.push([ring[0], ring[1], ring[2]]);
    Ok(out)
}

/// Positive when `d` is strictly inside the circumcircle of CCW `(a, b, c)`.
fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

fn edge_key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Lawson flipping restricted to diagonals; polygon edges are constraints.
fn legalize(pts: &[Point2], tris: &mut [[usize; 3]]) {
    let n = pts.len();
    let eps = 1e-12 * extent(pts).powi(4);
    let is_boundary = |i: usize, j: usize| (i + 1) % n == j || (j + 1) % n == i;

    // Bounded by the number of diagonal pairs; Lawson's algorithm terminates
    // well before this.
    let max_passes = 4 * tris.len() + 8;
    for _ in 0..max_passes {
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for e in 0..3 {
                edges
                    .entry(edge_key(tri[e], tri[(e + 1) % 3]))
                    .or_default()
                    .push((t, e));
            }
        }
        let mut keys: Vec<_> = edges.keys().copied().collect();
        keys.sort_unstable();

        let mut flipped = false;
        for key in keys {
            if is_boundary(key.0, key.1) {
                continue;
            }
            let owners = &edges[&key];
            if owners.len() != 2 {
                continue;
            }
            let (t1, e1) = owners[0];
            let (t2, e2) = owners[1];
            let (p, q, r) = (tris[t1][e1], tris[t1][(e1 + 1) % 3], tris[t1][(e1 + 2) % 3]);
            let s = tris[t2][(e2 + 2) % 3];
            if incircle(pts[p], pts[q], pts[r], pts[s]) <= eps {
                continue;
            }
            // Quad p, s, q, r in CCW order; the new diagonal is r-s.
            if orient(pts[p], pts[s], pts[r]) <= 0.0 || orient(pts[s], pts[q], pts[r]) <= 0.0 {
                continue;
            }
            tris[t1] = [p, s, r];
            tris[t2] = [s, q, r];
            flipped = true;
            break;
        }
        if !flipped {
            return;
        }
    }
    log::warn!("edge legalization hit its pass limit");
}

/// Even-odd point-in-polygon test. Points on the boundary may go either way.
pub fn point_in_polygon(p: Point2, polygon: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in polygon.edges() {
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}
