//! Occupancy rasters of the scene in the ego frame; the anomaly monitor's input.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CageError, Result};
use crate::geometry::{ConvexPolygon, Point2};
use crate::scene::SceneState;

/// Axis-aligned window in the ego frame, split into `size × size` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterWindow {
    /// Lower-left corner (ego frame).
    pub origin: Point2,
    pub width: f64,
    pub height: f64,
    pub size: usize,
}

impl Default for RasterWindow {
    /// 40 m ahead of the rear axle, 20 m to either side, 16 × 16 cells.
    fn default() -> Self {
        RasterWindow {
            origin: Point2::new(0.0, -20.0),
            width: 40.0,
            height: 40.0,
            size: 16,
        }
    }
}

impl RasterWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.size > 0) {
            return Err(CageError::invalid("raster window", "dimensions must be > 0"));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.width / self.size as f64, self.height / self.size as f64)
    }

    /// Bounds of cell (`row`, `col`); columns run along x, rows along y.
    pub fn cell_bounds(&self, row: usize, col: usize) -> (Point2, Point2) {
        let (cw, ch) = self.cell_size();
        let lo = Point2::new(self.origin.x + col as f64 * cw, self.origin.y + row as f64 * ch);
        (lo, Point2::new(lo.x + cw, lo.y + ch))
    }

    pub fn translated(&self, offset: Point2) -> RasterWindow {
        RasterWindow {
            origin: self.origin + offset,
            ..*self
        }
    }
}

/// Row-major `size × size` grid of coverage values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRaster {
    pub size: usize,
    pub cells: Vec<f64>,
}

impl SceneRaster {
    pub fn zeros(size: usize) -> Self {
        SceneRaster {
            size,
            cells: vec![0.0; size * size],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.size + col]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Content digest over the exact bit patterns of the cells.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.size as u64).to_le_bytes());
        for c in &self.cells {
            h.update(c.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Rasterizes every truth footprint into the ego-frame window.
pub fn rasterize_scene(truth: &SceneState, window: &RasterWindow) -> SceneRaster {
    let footprints: Vec<ConvexPolygon> = truth.objects.iter().map(|o| o.footprint_in_ego(&truth.ego)).collect();
    rasterize_polygons(&footprints, window)
}

/// Cell value = covered area / cell area, summed over polygons and clamped
/// to 1. Overlapping footprints therefore saturate rather than union exactly.
pub fn rasterize_polygons(polygons: &[ConvexPolygon], window: &RasterWindow) -> SceneRaster {
    let g = window.size;
    let mut raster = SceneRaster::zeros(g);
    let (cw, ch) = window.cell_size();
    let cell_area = cw * ch;
    for poly in polygons {
        let (lo, hi) = poly.to_polygon().bounds();
        let col_range = cell_span(lo.x, hi.x, window.origin.x, cw, g);
        let row_range = cell_span(lo.y, hi.y, window.origin.y, ch, g);
        let (Some((c0, c1)), Some((r0, r1))) = (col_range, row_range) else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                // Clip in cell-local coordinates so that translating the
                // polygon and window together gives the same arithmetic.
                let (clo, _) = window.cell_bounds(row, col);
                let local = poly.map(|p| p - clo);
                let a = local.clipped_area(Point2::ORIGIN, Point2::new(cw, ch));
                if a > 0.0 {
                    raster.cells[row * g + col] += a / cell_area;
                }
            }
        }
    }
    for c in &mut raster.cells {
        *c = c.clamp(0.0, 1.0);
    }
    raster
}

fn cell_span(lo: f64, hi: f64, origin: f64, step: f64, g: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / step).floor();
    let b = ((hi - origin) / step).floor();
    if b < 0.0 || a >= g as f64 {
        return None;
    }
    let a = a.max(0.0) as usize;
    let b = (b as usize).min(g - 1);
    Some((a, b))
}
