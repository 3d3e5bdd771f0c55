use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular grid, uniform in `(log x, log y)`.
///
/// Nodes are indexed by `(i, j)` with `i` along `x`; the flat index is
/// `i + nx * j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
    lx0: f64,
    ly0: f64,
    hx: f64,
    hy: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RawGrid {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(r: RawGrid) -> Result<Self> {
        Grid::new(r.x_min, r.x_max, r.y_min, r.y_max, r.nx, r.ny)
    }
}

impl From<Grid> for RawGrid {
    fn from(g: Grid) -> Self {
        RawGrid {
            x_min: g.x_min,
            x_max: g.x_max,
            y_min: g.y_min,
            y_max: g.y_max,
            nx: g.nx,
            ny: g.ny,
        }
    }
}

pub const MIN_NODES: usize = 16;

impl Grid {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x_min > 0.0 && y_min > 0.0 && x_max.is_finite() && y_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "bounds must be positive and finite, got x_min = {x_min}, y_min = {y_min}"
            )));
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidGrid("upper bounds must exceed lower bounds".into()));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {nx} x {ny}"
            )));
        }
        let (lx0, ly0) = (x_min.ln(), y_min.ln());
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
            lx0,
            ly0,
            hx: (x_max.ln() - lx0) / (nx - 1) as f64,
            hy: (y_max.ln() - ly0) / (ny - 1) as f64,
        })
    }

    /// Same box with twice as many nodes per axis.
    pub fn refined(&self) -> Self {
        Self::new(self.x_min, self.x_max, self.y_min, self.y_max, 2 * self.nx, 2 * self.ny)
            .expect("refining a valid grid")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.x_min, self.x_max, self.y_min, self.y_max)
    }

    /// Log-coordinate spacings `(h1, h2)`.
    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn log_x(&self, i: usize) -> f64 {
        self.lx0 + i as f64 * self.hx
    }

    #[inline]
    pub fn log_y(&self, j: usize) -> f64 {
        self.ly0 + j as f64 * self.hy
    }

    pub fn x(&self, i: usize) -> f64 {
        self.log_x(i).exp()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.log_y(j).exp()
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }

    /// Cell coordinates and bilinear weights of a log-space point, clamped
    /// to the grid: returns `(i, j, tx, ty)` with `tx, ty` in `[0, 1]`.
    #[inline]
    pub fn locate(&self, log_x: f64, log_y: f64) -> (usize, usize, f64, f64) {
        let (i, tx) = locate_axis((log_x - self.lx0) / self.hx, self.nx);
        let (j, ty) = locate_axis((log_y - self.ly0) / self.hy, self.ny);
        (i, j, tx, ty)
    }

    /// Node closest (in log coordinates) to a point.
    pub fn nearest(&self, x: f64, y: f64) -> (usize, usize) {
        let (i, j, tx, ty) = self.locate(x.ln(), y.ln());
        (i + usize::from(tx > 0.5), j + usize::from(ty > 0.5))
    }
}

#[inline]
fn locate_axis(s: f64, n: usize) -> (usize, f64) {
    if !(s > 0.0) {
        // also catches NaN
        return (0, 0.0);
    }
    let last = (n - 2) as f64;
    if s >= last + 1.0 {
        return (n - 2, 1.0);
    }
    let i = s.floor().min(last);
    (i as usize, s - i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Grid::new(0.0, 1.0, 0.1, 1.0, 16, 16).is_err());
        assert!(Grid::new(1.0, 0.5, 0.1, 1.0, 16, 16).is_err());
        assert!(Grid::new(0.1, 1.0, 0.1, 1.0, 15, 16).is_err());
        assert!(Grid::new(0.1, 1.0, 0.1, 1.0, 16, 16).is_ok());
    }

    #[test]
    fn nodes_span_the_box() {
        let g = Grid::new(0.01, 100.0, 0.1, 10.0, 17, 21).unwrap();
        assert!((g.x(0) - 0.01).abs() < 1e-15);
        assert!((g.x(16) - 100.0).abs() < 1e-12);
        assert!((g.y(20) - 10.0).abs() < 1e-12);
        assert!((g.x(8) - 1.0).abs() < 1e-14);
        let k = g.index(3, 5);
        assert_eq!(g.coords(k), (3, 5));
    }

    #[test]
    fn locate_clamps() {
        let g = Grid::new(0.1, 10.0, 0.1, 10.0, 16, 16).unwrap();
        assert_eq!(g.locate(-100.0, 100.0), (0, 14, 0.0, 1.0));
        let (dx, dy) = g.spacing();
        let (i, j, tx, ty) = g.locate(g.log_x(4) + 0.25 * dx, g.log_y(7) + 0.5 * dy);
        assert_eq!((i, j), (4, 7));
        assert!((tx - 0.25).abs() < 1e-12 && (ty - 0.5).abs() < 1e-12);
        assert_eq!(g.nearest(g.x(9), g.y(2)), (9, 2));
    }

    #[test]
    fn json_round_trip() {
        let g = Grid::new(0.05, 8.0, 0.01, 5.0, 32, 40).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(
            text,
            r#"{"x_min":0.05,"x_max":8.0,"y_min":0.01,"y_max":5.0,"nx":32,"ny":40}"#
        );
        assert_eq!(serde_json::from_str::<Grid>(&text).unwrap(), g);
    }
}
