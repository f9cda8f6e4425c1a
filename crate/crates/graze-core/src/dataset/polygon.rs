//! Field polygons and their rasterization onto the 45×45 chip grid.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A pasture boundary in pixel coordinates of the image chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPolygon {
    /// Ordered ring; implicitly closed (last vertex connects to first).
    pub vertices: Vec<(f64, f64)>,
    pub site_id: u32,
    /// Optional (lat, lon) metadata.
    pub location: Option<(f64, f64)>,
}

impl FieldPolygon {
    pub fn new(vertices: Vec<(f64, f64)>, site_id: u32) -> Result<Self> {
        let poly = Self { vertices, site_id, location: None };
        poly.validate()?;
        Ok(poly)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "site {}: need at least 3 vertices, got {}",
                self.site_id,
                self.vertices.len()
            )));
        }
        if self.vertices.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidPolygon(format!("site {}: non-finite vertex", self.site_id)));
        }
        if self.signed_area().abs() < 1e-9 {
            return Err(Error::InvalidPolygon(format!("site {}: degenerate ring (zero area)", self.site_id)));
        }
        if self.self_intersects() {
            return Err(Error::InvalidPolygon(format!("site {}: self-intersecting ring", self.site_id)));
        }
        Ok(())
    }

    /// Shoelace formula; sign encodes winding direction.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (x1, y1) = self.vertices[i];
            let (x2, y2) = self.vertices[(i + 1) % n];
            acc += x1 * y2 - x2 * y1;
        }
        acc / 2.0
    }

    /// Pairwise proper-crossing test over non-adjacent edges; O(n²) is fine
    /// for the ring sizes in play.
    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        let edge = |i: usize| (self.vertices[i], self.vertices[(i + 1) % n]);
        for i in 0..n {
            for j in (i + 1)..n {
                // Skip edges sharing a vertex (adjacent in the ring).
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (a, b) = edge(i);
                let (c, d) = edge(j);
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (x1, y1) = self.vertices[i];
            let (x2, y2) = self.vertices[(i + 1) % n];
            if (y1 > py) != (y2 > py) {
                let x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                if px < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Rasterizes the ring onto an H×W grid: a pixel is set iff its center
/// (x+0.5, y+0.5) lies inside under the even-odd rule. Row-major 0/1 bytes.
pub fn rasterize_polygon(polygon: &FieldPolygon, height: usize, width: usize) -> Result<Vec<u8>> {
    polygon.validate()?;
    let mut mask = vec![0u8; height * width];
    for y in 0..height {
        let py = y as f64 + 0.5;
        for x in 0..width {
            if polygon.contains(x as f64 + 0.5, py) {
                mask[y * width + x] = 1;
            }
        }
    }
    Ok(mask)
}

/// Number of set pixels in a 0/1 mask.
pub fn mask_area(mask: &[u8]) -> usize {
    mask.iter().filter(|&&m| m != 0).count()
}
