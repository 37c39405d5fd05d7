use crate::error::{EntroflowError, Result};
use serde::{Deserialize, Serialize};

/// Uniform 1-D finite-volume grid on `[x_min, x_max]` with `n_cells` cells.
///
/// Cell centers sit at `x_min + (i + 1/2) h`; cell edges at `x_min + i h`.
/// Densities are stored per cell center, cumulative distribution values per
/// edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(EntroflowError::InvalidGrid(format!(
                "bad interval [{x_min}, {x_max}]"
            )));
        }
        if n_cells < 16 {
            return Err(EntroflowError::InvalidGrid(format!(
                "n_cells = {n_cells} < 16"
            )));
        }
        Ok(Grid {
            x_min,
            x_max,
            n_cells,
        })
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h()
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.edge(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn cell_index(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.h()).floor() as isize;
        i.clamp(0, self.n_cells as isize - 1) as usize
    }
}
