//! Axis-aligned bounding-box arithmetic.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner,
//! x growing right and y growing down. Pixel `(i, j)` covers the unit square
//! `[i, i + 1) × [j, j + 1)`, so an integer box `(0, 0, 10, 10)` covers
//! exactly one hundred pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Checked constructor: coordinates must be finite and ordered.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        }
    }

    /// Builds a box from a top-left corner plus width and height.
    pub fn from_xywh(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(x, y, x + width, y + height)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersection of two boxes, `None` when they do not overlap (touching
    /// edges yield a zero-area box).
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Intersection over union; zero when the union has no area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    /// Restricts the box to `[0, width] × [0, height]`. Returns `None` when
    /// nothing with positive area remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        let frame = BBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: width,
            y_max: height,
        };
        self.intersection(&frame).filter(|b| b.area() > 0.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Axis-aligned hull of the four corners mapped through `m`.
    pub fn transform(&self, m: &AffineMap) -> BBox {
        let corners = [
            m.apply(self.x_min, self.y_min),
            m.apply(self.x_max, self.y_min),
            m.apply(self.x_min, self.y_max),
            m.apply(self.x_max, self.y_max),
        ];
        let mut out = BBox {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in corners {
            out.x_min = out.x_min.min(x);
            out.y_min = out.y_min.min(y);
            out.x_max = out.x_max.max(x);
            out.y_max = out.y_max.max(y);
        }
        out
    }

    /// Longer side length in pixels.
    pub fn longer_side(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn shorter_side(&self) -> f64 {
        self.width().min(self.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

/// Area thresholds separating small, medium and large objects.
///
/// Areas strictly below `small_max_area` are small, areas strictly above
/// `large_min_area` are large, and everything in between, including both
/// boundaries, is medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBuckets {
    pub small_max_area: f64,
    pub large_min_area: f64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        SizeBuckets {
            small_max_area: 32.0 * 32.0,
            large_min_area: 64.0 * 64.0,
        }
    }
}

impl SizeBuckets {
    pub fn new(small_max_area: f64, large_min_area: f64) -> Result<Self> {
        if !(small_max_area.is_finite() && large_min_area.is_finite())
            || small_max_area <= 0.0
            || small_max_area >= large_min_area
        {
            return Err(Error::InvalidConfig(format!(
                "size buckets need 0 < small ({small_max_area}) < large ({large_min_area})"
            )));
        }
        Ok(SizeBuckets {
            small_max_area,
            large_min_area,
        })
    }

    pub fn classify_area(&self, area: f64) -> SizeClass {
        if area < self.small_max_area {
            SizeClass::Small
        } else if area > self.large_min_area {
            SizeClass::Large
        } else {
            SizeClass::Medium
        }
    }

    pub fn classify(&self, b: &BBox) -> SizeClass {
        self.classify_area(b.area())
    }
}

/// A 2-D affine map `p' = A·p + t`, stored row-major as
/// `[[a, b, tx], [c, d, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub m: [[f64; 3]; 2],
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineMap {
    pub fn new(m: [[f64; 3]; 2]) -> Self {
        AffineMap { m }
    }

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self::new([[1.0, 0.0, dx], [0.0, 1.0, dy]])
    }

    /// Scale about the origin.
    pub fn scale(sx: f64, sy: f64) -> Self {
        Self::new([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    }

    /// Scale about `(cx, cy)`, the point left fixed by the map.
    pub fn scale_about(sx: f64, sy: f64, cx: f64, cy: f64) -> Self {
        Self::new([[sx, 0.0, cx - sx * cx], [0.0, sy, cy - sy * cy]])
    }

    /// Horizontal mirror of a frame of the given width: `x' = width - x`.
    pub fn mirror_x(width: f64) -> Self {
        Self::new([[-1.0, 0.0, width], [0.0, 1.0, 0.0]])
    }

    /// Vertical mirror of a frame of the given height: `y' = height - y`.
    pub fn mirror_y(height: f64) -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, -1.0, height]])
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &AffineMap) -> AffineMap {
        let a = &self.m;
        let b = &first.m;
        let mut out = [[0.0; 3]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            row[0] = a[r][0] * b[0][0] + a[r][1] * b[1][0];
            row[1] = a[r][0] * b[0][1] + a[r][1] * b[1][1];
            row[2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineMap { m: out }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let det = self.determinant();
        if !self.is_finite() || det == 0.0 || !det.is_finite() {
            return Err(Error::SingularMap);
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(AffineMap::new([
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, id, -(ic * tx + id * ty)],
        ]))
    }

    /// True when the linear part has no shear or rotation component.
    pub fn is_axis_aligned(&self) -> bool {
        self.m[0][1] == 0.0 && self.m[1][0] == 0.0
    }
}
