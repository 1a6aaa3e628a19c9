//! Planar occupancy footprints stored as run-length rows of grid cells.
//!
//! Cell `(i, j)` covers `[i r, (i + 1) r) x [j r, (j + 1) r)`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::se2::Pose;

use super::RegionMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    resolution: f64,
    /// Row index -> sorted, disjoint, non-adjacent inclusive column runs.
    rows: BTreeMap<i64, Vec<(i64, i64)>>,
}

fn merge(runs: &mut Vec<(i64, i64)>) {
    runs.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(runs.len());
    for &(a, b) in runs.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *runs = out;
}

fn overlap(a: &[(i64, i64)], b: &[(i64, i64)]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            n += (hi - lo + 1) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

impl Footprint {
    pub fn empty(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!("resolution must be positive, got {resolution}")));
        }
        Ok(Self { resolution, rows: BTreeMap::new() })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cell_of(&self, p: &Vector2<f64>) -> (i64, i64) {
        ((p.x / self.resolution).floor() as i64, (p.y / self.resolution).floor() as i64)
    }

    fn push_run(&mut self, row: i64, a: i64, b: i64) {
        if a <= b {
            self.rows.entry(row).or_default().push((a, b));
        }
    }

    fn normalize(&mut self) {
        for runs in self.rows.values_mut() {
            merge(runs);
        }
        self.rows.retain(|_, r| !r.is_empty());
    }

    /// Cells containing at least one particle.
    pub fn from_points(points: &[Pose], resolution: f64) -> Result<Self> {
        let mut f = Self::empty(resolution)?;
        for p in points {
            let (i, j) = f.cell_of(&p.translation());
            f.push_run(j, i, i);
        }
        f.normalize();
        Ok(f)
    }

    /// Cells whose centres fall inside a projected triangle, plus the cells of
    /// its corners so slivers are not lost.
    fn add_triangle(&mut self, t: [Vector2<f64>; 3]) {
        let r = self.resolution;
        for v in &t {
            let (i, j) = self.cell_of(v);
            self.push_run(j, i, i);
        }
        let ymin = t.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        let ymax = t.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
        let j0 = (ymin / r - 0.5).ceil() as i64;
        let j1 = (ymax / r - 0.5).floor() as i64;
        for j in j0..=j1 {
            let yc = (j as f64 + 0.5) * r;
            let (mut xl, mut xr) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                if (p.y - yc) * (q.y - yc) > 0.0 {
                    continue;
                }
                if p.y == q.y {
                    xl = xl.min(p.x.min(q.x));
                    xr = xr.max(p.x.max(q.x));
                } else {
                    let x = p.x + (yc - p.y) / (q.y - p.y) * (q.x - p.x);
                    xl = xl.min(x);
                    xr = xr.max(x);
                }
            }
            if xl <= xr {
                let i0 = (xl / r - 0.5).ceil() as i64;
                let i1 = (xr / r - 0.5).floor() as i64;
                self.push_run(j, i0, i1);
            }
        }
    }

    /// Projection of a closed mesh onto the plane, heading marginalized.
    pub fn from_mesh(mesh: &RegionMesh, resolution: f64) -> Result<Self> {
        let mut f = Self::empty(resolution)?;
        let xy: Vec<Vector2<f64>> = mesh.vertices.iter().map(|q| Vector2::new(q.x, q.y)).collect();
        for t in &mesh.triangles {
            f.add_triangle([xy[t[0]], xy[t[1]], xy[t[2]]]);
        }
        f.normalize();
        Ok(f)
    }

    pub fn cell_count(&self) -> u64 {
        self.rows.values().flatten().map(|(a, b)| (b - a + 1) as u64).sum()
    }

    pub fn area(&self) -> f64 {
        self.cell_count() as f64 * self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains_cell(&self, i: i64, j: i64) -> bool {
        self.rows.get(&j).is_some_and(|runs| runs.iter().any(|&(a, b)| a <= i && i <= b))
    }

    pub fn intersection_count(&self, other: &Footprint) -> u64 {
        self.rows
            .iter()
            .filter_map(|(j, runs)| other.rows.get(j).map(|o| overlap(runs, o)))
            .sum()
    }

    /// Occupied cell centres, row by row.
    pub fn cell_centres(&self) -> impl Iterator<Item = Vector2<f64>> + '_ {
        let r = self.resolution;
        self.rows.iter().flat_map(move |(j, runs)| {
            runs.iter()
                .flat_map(|&(a, b)| a..=b)
                .map(move |i| Vector2::new((i as f64 + 0.5) * r, (*j as f64 + 0.5) * r))
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y")?;
        for c in self.cell_centres() {
            writeln!(out, "{},{}", c.x, c.y)?;
        }
        Ok(())
    }
}

/// Intersection over union of two footprints on the same grid.
pub fn iou(a: &Footprint, b: &Footprint) -> Result<f64> {
    if a.resolution != b.resolution {
        return Err(Error::InvalidArgument("footprints use different resolutions".into()));
    }
    let inter = a.intersection_count(b);
    let union = a.cell_count() + b.cell_count() - inter;
    if union == 0 {
        return Err(Error::Empty("both footprints are empty"));
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64, res: f64) -> Footprint {
        let mut f = Footprint::empty(res).unwrap();
        let a = Vector2::new(x0, y0);
        let b = Vector2::new(x0 + side, y0);
        let c = Vector2::new(x0 + side, y0 + side);
        let d = Vector2::new(x0, y0 + side);
        f.add_triangle([a, b, c]);
        f.add_triangle([a, c, d]);
        f.normalize();
        f
    }

    #[test]
    fn identical_and_disjoint() {
        let a = square(0.0, 0.0, 0.1, 0.01);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = square(1.0, 1.0, 0.1, 0.01);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let e = Footprint::empty(0.01).unwrap();
        assert!(iou(&e, &e).is_err());
        assert!(iou(&a, &square(0.0, 0.0, 0.1, 0.02)).is_err());
    }

    #[test]
    fn rasterized_area_converges() {
        let f = square(0.0123, -0.0411, 0.5, 0.005);
        assert!((f.area() - 0.25).abs() / 0.25 < 0.03);
    }

    #[test]
    fn half_overlap() {
        let a = square(0.0, 0.0, 0.2, 0.01);
        let b = square(0.1, 0.0, 0.2, 0.01);
        let v = iou(&a, &b).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn particles_mark_their_cells() {
        let ps = [Pose::new(0.001, 0.001, 0.0), Pose::new(0.004, 0.002, 1.0), Pose::new(-0.001, 0.0, 0.0)];
        let f = Footprint::from_points(&ps, 0.005).unwrap();
        assert_eq!(f.cell_count(), 2);
        assert!(f.contains_cell(0, 0) && f.contains_cell(-1, 0));
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn run_merging() {
        let mut r = vec![(5, 7), (0, 2), (3, 3), (9, 9)];
        merge(&mut r);
        assert_eq!(r, vec![(0, 3), (5, 7), (9, 9)]);
        assert_eq!(overlap(&[(0, 10)], &[(2, 3), (8, 12)]), 5);
    }
}
