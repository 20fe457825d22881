//! Fixed Cartesian grid over the cooking domain.

use crate::field::Field;
use serde::{Deserialize, Serialize};

/// Cell-centered Cartesian grid. The z axis points up; the hot plate sits
/// one cell above the bottom domain face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Domain extents in meters.
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl Grid {
    /// Paper-scale domain: 0.20 x 0.20 x 0.06 m.
    pub const LX: f64 = 0.20;
    pub const LY: f64 = 0.20;
    pub const LZ: f64 = 0.06;

    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz, lx: Self::LX, ly: Self::LY, lz: Self::LZ }
    }

    /// Custom extents, used by unit tests that work in synthetic units.
    pub fn with_extents(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Self {
        Self { nx, ny, nz, lx, ly, lz }
    }

    /// Paper-scale resolution (50^3).
    pub fn paper() -> Self {
        Self::new(50, 50, 50)
    }

    /// Desk-scale resolution for optimization smoke runs.
    pub fn desk() -> Self {
        Self::new(32, 32, 24)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    #[inline]
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    #[inline]
    pub fn dz(&self) -> f64 {
        self.lz / self.nz as f64
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn dims_2d(&self) -> [usize; 3] {
        [self.nx, self.ny, 1]
    }

    /// Height of the hot-plate plane: one cell above the bottom face.
    #[inline]
    pub fn z_plate(&self) -> f64 {
        self.dz()
    }

    /// Cell-center coordinate along an axis.
    #[inline]
    pub fn center(&self, axis: usize, idx: usize) -> f64 {
        let (d, _n) = match axis {
            0 => (self.dx(), self.nx),
            1 => (self.dy(), self.ny),
            _ => (self.dz(), self.nz),
        };
        (idx as f64 + 0.5) * d
    }

    /// 3D field of cell-center coordinates along `axis` (0 = x, 1 = y, 2 = z).
    pub fn coord_field(&self, axis: usize) -> Field {
        let mut f = Field::zeros(self.dims());
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let c = match axis {
                        0 => self.center(0, i),
                        1 => self.center(1, j),
                        _ => self.center(2, k),
                    };
                    f.data[(i * ny + j) * nz + k] = c;
                }
            }
        }
        f
    }

    /// 2D field (dims `[nx, ny, 1]`) of cell-center coordinates.
    pub fn coord_field_2d(&self, axis: usize) -> Field {
        let mut f = Field::zeros(self.dims_2d());
        for i in 0..self.nx {
            for j in 0..self.ny {
                let c = if axis == 0 { self.center(0, i) } else { self.center(1, j) };
                f.data[i * self.ny + j] = c;
            }
        }
        f
    }

    /// Vertical distance above the plate plane, clamped at zero below it.
    pub fn d_plate_field(&self) -> Field {
        let zp = self.z_plate();
        let mut f = Field::zeros(self.dims());
        for i in 0..self.nx {
            for j in 0..self.ny {
                for k in 0..self.nz {
                    let z = self.center(2, k);
                    f.data[(i * self.ny + j) * self.nz + k] = (z - zp).max(0.0);
                }
            }
        }
        f
    }

    /// Hard indicator of cells within `cells` layers of the plate plane.
    pub fn near_plate_mask(&self, cells: usize) -> Field {
        let zp = self.z_plate();
        let cutoff = zp + cells as f64 * self.dz();
        let mut f = Field::zeros(self.dims());
        for i in 0..self.nx {
            for j in 0..self.ny {
                for k in 0..self.nz {
                    let z = self.center(2, k);
                    if z < cutoff {
                        f.data[(i * self.ny + j) * self.nz + k] = 1.0;
                    }
                }
            }
        }
        f
    }

    /// Footprint coordinates normalized to [-1, 1] over the plate.
    pub fn normalized_xy(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(self.nx * self.ny);
        let mut ys = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                xs.push(2.0 * (self.center(0, i) - 0.5 * self.lx) / self.lx);
                ys.push(2.0 * (self.center(1, j) - 0.5 * self.ly) / self.ly);
            }
        }
        (xs, ys)
    }
}
