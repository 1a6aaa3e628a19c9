//! Incremental 3-D convex hull returning outward-oriented triangles.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(pts: &[Vector3<f64>], v: [usize; 3]) -> Self {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let normal = n / n.norm();
        Self { v, normal, offset: normal.dot(&pts[v[0]]), alive: true }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

fn initial_simplex(pts: &[Vector3<f64>], eps: f64) -> Result<[usize; 4]> {
    let a = 0;
    let b = (1..pts.len())
        .max_by(|&i, &j| (pts[i] - pts[a]).norm().total_cmp(&(pts[j] - pts[a]).norm()))
        .ok_or(Error::Degenerate("too few points for a hull"))?;
    let ab = pts[b] - pts[a];
    let c = (0..pts.len())
        .max_by(|&i, &j| ab.cross(&(pts[i] - pts[a])).norm().total_cmp(&ab.cross(&(pts[j] - pts[a])).norm()))
        .unwrap();
    let n = ab.cross(&(pts[c] - pts[a]));
    if n.norm() <= eps {
        return Err(Error::Degenerate("points are collinear"));
    }
    let d = (0..pts.len())
        .max_by(|&i, &j| n.dot(&(pts[i] - pts[a])).abs().total_cmp(&n.dot(&(pts[j] - pts[a])).abs()))
        .unwrap();
    if n.dot(&(pts[d] - pts[a])).abs() <= eps * n.norm() {
        return Err(Error::Degenerate("points are coplanar"));
    }
    Ok([a, b, c, d])
}

/// Triangles of the convex hull of `pts`, counter-clockwise seen from outside.
/// Points strictly inside the hull are left unreferenced.
pub fn convex_hull(pts: &[Vector3<f64>]) -> Result<Vec<[usize; 3]>> {
    if pts.len() < 4 {
        return Err(Error::Degenerate("a hull needs at least four points"));
    }
    let scale = pts.iter().map(|p| p.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;
    let [a, b, c, d] = initial_simplex(pts, eps)?;
    let inner = (pts[a] + pts[b] + pts[c] + pts[d]) / 4.0;

    let mut faces: Vec<Face> = Vec::new();
    // directed edge -> face on its left
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let add = |faces: &mut Vec<Face>, edges: &mut HashMap<(usize, usize), usize>, v: [usize; 3]| {
        let id = faces.len();
        faces.push(Face::new(pts, v));
        for k in 0..3 {
            edges.insert((v[k], v[(k + 1) % 3]), id);
        }
    };
    for tri in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        let f = Face::new(pts, tri);
        let v = if f.distance(&inner) > 0.0 { [tri[0], tri[2], tri[1]] } else { tri };
        add(&mut faces, &mut edges, v);
    }

    let mut visible = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for p in 0..pts.len() {
        if p == a || p == b || p == c || p == d {
            continue;
        }
        visible.clear();
        visible.extend(faces.iter().enumerate().filter(|(_, f)| f.alive && f.distance(&pts[p]) > eps).map(|(i, _)| i));
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &fi in &visible {
            faces[fi].alive = false;
        }
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let (s, t) = (v[k], v[(k + 1) % 3]);
                if faces[edges[&(t, s)]].alive {
                    horizon.push((s, t));
                }
            }
        }
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                edges.remove(&(v[k], v[(k + 1) % 3]));
            }
        }
        for (s, t) in horizon {
            add(&mut faces, &mut edges, [s, t, p]);
        }
    }
    Ok(faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
}
