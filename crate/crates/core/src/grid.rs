use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` evenly spaced values from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linspace {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Linspace {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.n <= 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    /// Uniform draw over `[lo, hi]` from a unit-interval sample.
    pub fn lerp(&self, t: f64) -> f64 {
        self.lo + (self.hi - self.lo) * t
    }
}

/// One grid point: initial forward speed, initial yaw rate and the commanded
/// body accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub vx0: f64,
    pub wz0: f64,
    pub ddx: f64,
    pub ddtheta: f64,
}

/// Grid over `(vx0, wz0, ddx, ddtheta)` with a repetition count per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub vx0: Linspace,
    pub wz0: Linspace,
    pub ddx: Linspace,
    pub ddtheta: Linspace,
    pub reps: usize,
}

impl GridSpec {
    /// The experiment grid with `n` points per interval.
    pub fn standard(n: usize, reps: usize) -> Self {
        Self {
            vx0: Linspace::new(0.1, 0.5, n),
            wz0: Linspace::new(0.0, 0.5, n),
            ddx: Linspace::new(0.0, 0.5, n),
            ddtheta: Linspace::new(0.0, 2.0, n),
            reps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.vx0, self.wz0, self.ddx, self.ddtheta];
        if dims.iter().any(|d| d.n == 0) || self.reps == 0 {
            return Err(Error::InvalidArgument("grid counts and repetitions must be >= 1".into()));
        }
        if dims.iter().any(|d| !d.lo.is_finite() || !d.hi.is_finite()) {
            return Err(Error::InvalidArgument("grid ranges must be finite".into()));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.vx0.n * self.wz0.n * self.ddx.n * self.ddtheta.n
    }

    /// Grid points in row-major order (`ddtheta` fastest).
    pub fn cases(&self) -> Vec<GridCase> {
        let mut out = Vec::with_capacity(self.n_points());
        for a in self.vx0.values() {
            for b in self.wz0.values() {
                for c in self.ddx.values() {
                    for d in self.ddtheta.values() {
                        out.push(GridCase { vx0: a, wz0: b, ddx: c, ddtheta: d });
                    }
                }
            }
        }
        out
    }

    /// Continuous uniform draw from the bounding box of the grid.
    pub fn sample_box(&self, t: [f64; 4]) -> GridCase {
        GridCase {
            vx0: self.vx0.lerp(t[0]),
            wz0: self.wz0.lerp(t[1]),
            ddx: self.ddx.lerp(t[2]),
            ddtheta: self.ddtheta.lerp(t[3]),
        }
    }
}
