//! Planar geometry used by the scenario: points, axis-aligned rectangles,
//! lane-aligned footprints and segment intersection tests.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x_min >= self.x_min
            && other.x_max <= self.x_max
            && other.y_min >= self.y_min
            && other.y_max <= self.y_max
    }

    /// Liang-Barsky clip of the segment `a -> b` against the rectangle.
    /// Touching an edge or corner counts as an intersection.
    pub fn intersects_segment(&self, a: &Point, b: &Point) -> bool {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-dx, a.x - self.x_min),
            (dx, self.x_max - a.x),
            (-dy, a.y - self.y_min),
            (dy, self.y_max - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    if r > t1 {
                        return false;
                    }
                    t0 = t0.max(r);
                } else {
                    if r < t0 {
                        return false;
                    }
                    t1 = t1.min(r);
                }
            }
        }
        t0 <= t1
    }
}

/// Rectangle aligned with a unit heading; used for truck footprints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub center: Point,
    /// Unit vector along the long side.
    pub heading: Point,
    pub length_m: f64,
    pub width_m: f64,
}

impl Footprint {
    fn local_point(&self, p: &Point) -> Point {
        let rx = p.x - self.center.x;
        let ry = p.y - self.center.y;
        Point::new(
            rx * self.heading.x + ry * self.heading.y,
            -rx * self.heading.y + ry * self.heading.x,
        )
    }

    fn local_rect(&self) -> Rect {
        let hl = self.length_m / 2.0;
        let hw = self.width_m / 2.0;
        Rect::new(-hl, -hw, hl, hw)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.local_rect().contains(&self.local_point(p))
    }

    pub fn intersects_segment(&self, a: &Point, b: &Point) -> bool {
        self.local_rect()
            .intersects_segment(&self.local_point(a), &self.local_point(b))
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> Rect {
        let hl = self.length_m / 2.0;
        let hw = self.width_m / 2.0;
        let ex = (self.heading.x * hl).abs() + (self.heading.y * hw).abs();
        let ey = (self.heading.y * hl).abs() + (self.heading.x * hw).abs();
        Rect::new(
            self.center.x - ex,
            self.center.y - ey,
            self.center.x + ex,
            self.center.y + ey,
        )
    }
}
