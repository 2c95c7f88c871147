//! Pixel grids and 2D images.

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// A `width × height` pixel grid centered on the scanner axis.
///
/// Pixel `(p, q)` has flat index `q·width + p`; `p` runs along x and `q` along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in mm.
    pub spacing: f64,
}

impl Grid {
    pub fn new(width: usize, height: usize, spacing: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!("empty grid {width}x{height}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pixel spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            width,
            height,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, p: usize, q: usize) -> usize {
        q * self.width + p
    }

    pub fn pixel_center(&self, p: usize, q: usize) -> Point2 {
        Point2::new(
            (p as f64 - (self.width as f64 - 1.0) / 2.0) * self.spacing,
            (q as f64 - (self.height as f64 - 1.0) / 2.0) * self.spacing,
        )
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.spacing * (self.width as f64).hypot(self.height as f64)
    }

    /// Radius of the largest centered disk inside the grid.
    pub fn inscribed_radius(&self) -> f64 {
        0.5 * self.spacing * self.width.min(self.height) as f64
    }

    /// Pixels whose centers lie inside the inscribed disk.
    pub fn fov_mask(&self) -> Vec<bool> {
        let r = self.inscribed_radius();
        let mut mask = Vec::with_capacity(self.len());
        for q in 0..self.height {
            for p in 0..self.width {
                mask.push(self.pixel_center(p, q).norm() <= r);
            }
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    grid: Grid,
    values: Vec<f64>,
}

impl Image2D {
    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.width,
                grid.height
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[self.grid.index(p, q)]
    }

    pub fn set(&mut self, p: usize, q: usize, v: f64) {
        let j = self.grid.index(p, q);
        self.values[j] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Image2D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Image2D {
        self.map(|v| v * s)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Image2D) -> bool {
        self.grid.width == other.grid.width && self.grid.height == other.grid.height
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.width != grid.width || self.grid.height != grid.height {
            return Err(Error::Dimension(format!(
                "image is {}x{}, expected {}x{}",
                self.grid.width, self.grid.height, grid.width, grid.height
            )));
        }
        Ok(())
    }
}
