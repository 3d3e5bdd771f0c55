use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};
use crate::sim::FeedbackPolicy;

/// Gridded feedback policy `u = v(x, y)`.
///
/// Between nodes the effort is interpolated bilinearly in `(log x, log y)`;
/// outside the grid it is clamped to the boundary value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct PolicyTable {
    grid: Grid,
    max_effort: f64,
    lipschitz_radius: usize,
    efforts: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawPolicy {
    grid: Grid,
    max_effort: f64,
    lipschitz_radius: usize,
    efforts: Vec<f64>,
}

impl TryFrom<RawPolicy> for PolicyTable {
    type Error = Error;

    fn try_from(r: RawPolicy) -> Result<Self> {
        PolicyTable::new(r.grid, r.max_effort, r.efforts, r.lipschitz_radius)
    }
}

impl From<PolicyTable> for RawPolicy {
    fn from(p: PolicyTable) -> Self {
        RawPolicy {
            grid: p.grid,
            max_effort: p.max_effort,
            lipschitz_radius: p.lipschitz_radius,
            efforts: p.efforts,
        }
    }
}

impl PolicyTable {
    pub fn new(grid: Grid, max_effort: f64, efforts: Vec<f64>, lipschitz_radius: usize) -> Result<Self> {
        if efforts.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "policy has {} efforts for {} nodes",
                efforts.len(),
                grid.len()
            )));
        }
        if let Some(&bad) = efforts.iter().find(|u| !(0.0..=max_effort).contains(*u)) {
            return Err(Error::EffortOutOfRange {
                effort: bad,
                max: max_effort,
            });
        }
        Ok(Self {
            grid,
            max_effort,
            lipschitz_radius,
            efforts,
        })
    }

    /// The same effort at every node.
    pub fn constant(grid: Grid, max_effort: f64, u: f64) -> Result<Self> {
        Self::new(grid, max_effort, vec![u; grid.len()], 0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn efforts(&self) -> &[f64] {
        &self.efforts
    }

    pub fn lipschitz_radius(&self) -> usize {
        self.lipschitz_radius
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.efforts[self.grid.index(i, j)]
    }

    /// Effort at a point given in natural coordinates.
    pub fn effort_at(&self, x: f64, y: f64) -> f64 {
        self.effort(x.ln(), y.ln())
    }

    /// Writes the columns `x,y,effort`, one row per node.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "effort"])?;
        for (k, u) in self.efforts.iter().enumerate() {
            let (i, j) = self.grid.coords(k);
            w.write_record(&[self.grid.x(i).to_string(), self.grid.y(j).to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl FeedbackPolicy for PolicyTable {
    #[inline]
    fn effort(&self, log_x: f64, log_y: f64) -> f64 {
        let (i, j, tx, ty) = self.grid.locate(log_x, log_y);
        let k = self.grid.index(i, j);
        let nx = self.grid.nx();
        let e = &self.efforts;
        let lower = e[k] + tx * (e[k + 1] - e[k]);
        let upper = e[k + nx] + tx * (e[k + nx + 1] - e[k + nx]);
        (lower + ty * (upper - lower)).clamp(0.0, self.max_effort)
    }

    fn max_effort(&self) -> f64 {
        self.max_effort
    }
}

/// Smooths a policy with a normalized triangular kernel over the
/// `(2 radius + 1)^2` neighborhood of each node, then clamps to `[0, M]`.
///
/// The kernel weight of offset `(di, dj)` is
/// `(1 - |di| / (radius + 1)) (1 - |dj| / (radius + 1))`; near the grid edge
/// it is renormalized over the nodes that exist. Radius 0 is the identity.
pub fn lipschitz_regularize(policy: &PolicyTable, radius: usize) -> PolicyTable {
    if radius == 0 {
        return policy.clone();
    }
    let g = policy.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let r = radius as isize;
    let w = |d: isize| 1.0 - d.unsigned_abs() as f64 / (radius + 1) as f64;
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            let (mut num, mut den) = (0.0, 0.0);
            for dj in -r..=r {
                let jj = j as isize + dj;
                if jj < 0 || jj >= ny as isize {
                    continue;
                }
                for di in -r..=r {
                    let ii = i as isize + di;
                    if ii < 0 || ii >= nx as isize {
                        continue;
                    }
                    let wt = w(di) * w(dj);
                    num += wt * policy.efforts[g.index(ii as usize, jj as usize)];
                    den += wt;
                }
            }
            out[g.index(i, j)] = (num / den).clamp(0.0, policy.max_effort);
        }
    }
    PolicyTable {
        grid: g,
        max_effort: policy.max_effort,
        lipschitz_radius: radius,
        efforts: out,
    }
}
