use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned grid splitting behavior space into niches.
///
/// Cells are numbered row-major over the per-dimension coordinates, with the
/// last dimension varying fastest. Points outside the bounds fall into the
/// nearest boundary cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct NicheGrid {
    bounds: Vec<(f64, f64)>,
    cells_per_dim: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    bounds: Vec<[f64; 2]>,
    cells: Vec<usize>,
}

impl TryFrom<GridSpec> for NicheGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        NicheGrid::new(
            spec.bounds.into_iter().map(|[lo, hi]| (lo, hi)).collect(),
            spec.cells,
        )
    }
}

impl From<NicheGrid> for GridSpec {
    fn from(g: NicheGrid) -> Self {
        GridSpec {
            bounds: g.bounds.into_iter().map(|(lo, hi)| [lo, hi]).collect(),
            cells: g.cells_per_dim,
        }
    }
}

impl NicheGrid {
    pub fn new(bounds: Vec<(f64, f64)>, cells_per_dim: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != cells_per_dim.len() {
            return Err(Error::Config(
                "grid needs one cell count per bounded dimension".into(),
            ));
        }
        if bounds
            .iter()
            .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::Config("grid bounds must be finite with lo < hi".into()));
        }
        if cells_per_dim.contains(&0) {
            return Err(Error::Config("every dimension needs at least one cell".into()));
        }
        let grid = Self {
            bounds,
            cells_per_dim,
        };
        if grid.cell_count() < 2 {
            return Err(Error::Config("a grid needs at least two niches".into()));
        }
        Ok(grid)
    }

    /// `cells × cells` over the unit square.
    pub fn unit_square(cells: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); 2], vec![cells; 2])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn coords_of(&self, b: &[f64]) -> Vec<usize> {
        assert_eq!(b.len(), self.dim(), "behavior dimension does not match grid");
        b.iter()
            .zip(&self.bounds)
            .zip(&self.cells_per_dim)
            .map(|((&v, &(lo, hi)), &cells)| {
                let t = ((v - lo) / (hi - lo) * cells as f64).floor();
                if t.is_nan() || t < 0.0 {
                    0
                } else {
                    (t as usize).min(cells - 1)
                }
            })
            .collect()
    }

    pub fn index_of_coords(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.cells_per_dim)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn coords_of_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (slot, &n) in out.iter_mut().zip(&self.cells_per_dim).rev() {
            *slot = index % n;
            index /= n;
        }
        out
    }

    pub fn niche(&self, b: &[f64]) -> usize {
        self.index_of_coords(&self.coords_of(b))
    }
}
