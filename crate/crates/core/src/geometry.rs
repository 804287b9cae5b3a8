//! Rotated-rectangle geometry in image pixel space.
//!
//! Coordinates follow image conventions: origin at the top-left corner, x to
//! the right, y downward. An [`OrientedBox`] stores its four vertices in
//! annotation order. In the canonical form the vertices run clockwise on
//! screen, the first vertex is the front-left corner of objects with a heading
//! (top-left otherwise), and `theta` is the direction of the first edge
//! (vertex 1 to vertex 2), measured from +x in `[0, 2π)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boxes whose width or height fall at or below this are rejected.
pub const MIN_EXTENT: f64 = 1e-9;

/// Clip vertices closer than this are merged before the shoelace sum.
const SNAP_TOLERANCE: f64 = 1e-9;

/// Relative tolerance for the rectangle shape check in [`OrientedBox::from_vertices`].
const RECTANGLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in box")]
    NonFinite,
    #[error("degenerate box: width {w} and height {h} must both exceed {MIN_EXTENT}")]
    Degenerate { w: f64, h: f64 },
    #[error("vertices do not form a rectangle (corner residual {residual:.3e})")]
    NotRectangle { residual: f64 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    ImageDimensions { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

/// Center-size-angle parameterisation of an oriented box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

/// Axis-aligned box, `xmin <= xmax` and `ymin <= ymax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl AxisBox {
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Re-expresses the box as a `theta = 0` oriented box, top-left vertex first.
    pub fn to_oriented(&self) -> Result<OrientedBox, GeometryError> {
        OrientedBox::from_vertices([
            Point::new(self.xmin, self.ymin),
            Point::new(self.xmax, self.ymin),
            Point::new(self.xmax, self.ymax),
            Point::new(self.xmin, self.ymax),
        ])
    }

    fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> AxisBox {
        let mut b = AxisBox {
            xmin: f64::INFINITY,
            ymin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymax: f64::NEG_INFINITY,
        };
        for p in points {
            b.xmin = b.xmin.min(p.x);
            b.ymin = b.ymin.min(p.y);
            b.xmax = b.xmax.max(p.x);
            b.ymax = b.ymax.max(p.y);
        }
        b
    }
}

/// A rotated rectangle given by four ordered vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 4]", into = "[[f64; 2]; 4]")]
pub struct OrientedBox {
    vertices: [Point; 4],
}

impl OrientedBox {
    /// Builds the canonical clockwise box from center, size and first-edge angle.
    pub fn from_params(p: BoxParams) -> Result<Self, GeometryError> {
        if ![p.cx, p.cy, p.w, p.h, p.theta].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if p.w <= MIN_EXTENT || p.h <= MIN_EXTENT {
            return Err(GeometryError::Degenerate { w: p.w, h: p.h });
        }
        let (sin, cos) = p.theta.sin_cos();
        // edge direction and its clockwise (on-screen) normal
        let (ex, ey) = (cos * p.w / 2.0, sin * p.w / 2.0);
        let (nx, ny) = (-sin * p.h / 2.0, cos * p.h / 2.0);
        Ok(Self {
            vertices: [
                Point::new(p.cx - ex - nx, p.cy - ey - ny),
                Point::new(p.cx + ex - nx, p.cy + ey - ny),
                Point::new(p.cx + ex + nx, p.cy + ey + ny),
                Point::new(p.cx - ex + nx, p.cy - ey + ny),
            ],
        })
    }

    /// Accepts four vertices in either winding as long as they form a
    /// non-degenerate rectangle. Winding is checked by validation, not here.
    pub fn from_vertices(vertices: [Point; 4]) -> Result<Self, GeometryError> {
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let e1 = vertices[1].sub(vertices[0]);
        let e2 = vertices[2].sub(vertices[1]);
        let (w, h) = (e1.norm(), e2.norm());
        if w <= MIN_EXTENT || h <= MIN_EXTENT {
            return Err(GeometryError::Degenerate { w, h });
        }
        let scale = w + h;
        // opposite corners must sum to the same point, adjacent edges must be perpendicular
        let diag = Point::new(
            vertices[0].x + vertices[2].x - vertices[1].x - vertices[3].x,
            vertices[0].y + vertices[2].y - vertices[1].y - vertices[3].y,
        );
        let residual = (diag.norm() / scale).max(e1.dot(e2).abs() / (w * h));
        if residual > RECTANGLE_TOLERANCE {
            return Err(GeometryError::NotRectangle { residual });
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn center(&self) -> Point {
        let v = &self.vertices;
        Point::new(
            (v[0].x + v[1].x + v[2].x + v[3].x) / 4.0,
            (v[0].y + v[1].y + v[2].y + v[3].y) / 4.0,
        )
    }

    /// Length of the first edge.
    pub fn width(&self) -> f64 {
        self.vertices[1].sub(self.vertices[0]).norm()
    }

    /// Length of the second edge.
    pub fn height(&self) -> f64 {
        self.vertices[2].sub(self.vertices[1]).norm()
    }

    pub fn theta(&self) -> f64 {
        let e = self.vertices[1].sub(self.vertices[0]);
        let t = e.y.atan2(e.x).rem_euclid(TAU);
        if t >= TAU {
            0.0
        } else {
            t
        }
    }

    pub fn params(&self) -> BoxParams {
        let c = self.center();
        BoxParams {
            cx: c.x,
            cy: c.y,
            w: self.width(),
            h: self.height(),
            theta: self.theta(),
        }
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Shoelace cross sum over the vertices. Positive means clockwise on
    /// screen (y pointing down); this equals the negated trapezoid-form sum.
    pub fn signed_area(&self) -> f64 {
        signed_polygon_area(&self.vertices)
    }

    pub fn is_clockwise(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn translate(&self, dx: f64, dy: f64) -> OrientedBox {
        OrientedBox {
            vertices: self.vertices.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let sign = self.signed_area().signum();
        (0..4).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            sign * b.sub(a).cross(p.sub(a)) >= 0.0
        })
    }
}

impl TryFrom<[[f64; 2]; 4]> for OrientedBox {
    type Error = GeometryError;

    fn try_from(raw: [[f64; 2]; 4]) -> Result<Self, Self::Error> {
        OrientedBox::from_vertices(raw.map(|[x, y]| Point::new(x, y)))
    }
}

impl From<OrientedBox> for [[f64; 2]; 4] {
    fn from(b: OrientedBox) -> Self {
        b.vertices.map(|p| [p.x, p.y])
    }
}

pub fn area(b: &OrientedBox) -> f64 {
    b.area()
}

/// Tightest axis-aligned box containing the four vertices.
pub fn to_hbb(b: &OrientedBox) -> AxisBox {
    AxisBox::from_points(b.vertices())
}

/// Tightest axis-aligned box containing both boxes.
pub fn enclosing_axis_box(a: &OrientedBox, b: &OrientedBox) -> AxisBox {
    AxisBox::from_points(a.vertices().iter().chain(b.vertices()))
}

fn signed_polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut sum = 0.0;
    for i in 0..n {
        sum += poly[i].cross(poly[(i + 1) % n]);
    }
    sum / 2.0
}

/// Keeps the part of `poly` on the inner side of the directed edge `a -> b`.
/// `sign` is +1 when the clip polygon winds clockwise on screen, -1 otherwise.
fn clip_half_plane(poly: &[Point], a: Point, b: Point, sign: f64) -> Vec<Point> {
    let edge = b.sub(a);
    let side = |p: Point| sign * edge.cross(p.sub(a));
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let s = poly[i];
        let e = poly[(i + 1) % poly.len()];
        let (ds, de) = (side(s), side(e));
        let (s_in, e_in) = (ds >= 0.0, de >= 0.0);
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

fn dedup_snapped(poly: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q| p.sub(*q).norm() > SNAP_TOLERANCE) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].sub(out[out.len() - 1]).norm() <= SNAP_TOLERANCE {
        out.pop();
    }
    out
}

/// Polygon of `a ∩ b` obtained by clipping `a` against the four half-planes of `b`.
pub fn intersection_polygon(a: &OrientedBox, b: &OrientedBox) -> Vec<Point> {
    let sign = b.signed_area().signum();
    let mut poly = a.vertices().to_vec();
    for i in 0..4 {
        if poly.len() < 3 {
            return Vec::new();
        }
        poly = clip_half_plane(&poly, b.vertices[i], b.vertices[(i + 1) % 4], sign);
    }
    let poly = dedup_snapped(poly);
    if poly.len() < 3 {
        Vec::new()
    } else {
        poly
    }
}

pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let poly = intersection_polygon(a, b);
    let clipped = signed_polygon_area(&poly).abs();
    clipped.min(a.area()).min(b.area())
}

pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Pairwise geometric-topological features of an ordered (subject, object) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub center_distance: f64,
    pub area_ratio: f64,
    pub aspect_subject: f64,
    pub aspect_object: f64,
    pub pair_iou: f64,
    /// `cx/W, cy/H, w/W, h/H, theta/2π` for the subject, then the object.
    pub normalized_coords: [f64; 10],
}

pub fn pair_geometry(
    subject: &OrientedBox,
    object: &OrientedBox,
    image_w: f64,
    image_h: f64,
) -> Result<PairGeometry, GeometryError> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(GeometryError::ImageDimensions {
            width: image_w,
            height: image_h,
        });
    }
    let (s, o) = (subject.params(), object.params());
    let norm = |p: &BoxParams| [p.cx / image_w, p.cy / image_h, p.w / image_w, p.h / image_h, p.theta / TAU];
    let (ns, no) = (norm(&s), norm(&o));
    let mut normalized_coords = [0.0; 10];
    normalized_coords[..5].copy_from_slice(&ns);
    normalized_coords[5..].copy_from_slice(&no);
    Ok(PairGeometry {
        center_distance: (s.cx - o.cx).hypot(s.cy - o.cy),
        area_ratio: subject.area() / object.area(),
        aspect_subject: s.w / s.h,
        aspect_object: o.w / o.h,
        pair_iou: rotated_iou(subject, object),
        normalized_coords,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, PI};

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> OrientedBox {
        OrientedBox::from_params(BoxParams { cx, cy, w, h, theta }).unwrap()
    }

    fn random_box(rng: &mut impl Rng) -> OrientedBox {
        bx(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(0.5..40.0),
            rng.random_range(0.5..40.0),
            rng.random_range(0.0..TAU),
        )
    }

    // shoelace over raw vertices, independent of the w*h path
    fn shoelace(v: &[Point; 4]) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            let j = (i + 1) % 4;
            s += v[i].x * v[j].y - v[j].x * v[i].y;
        }
        s.abs() / 2.0
    }

    #[test]
    fn area_cases() {
        assert_eq!(bx(0.5, 0.5, 1.0, 1.0, 0.0).area(), 1.0);
        for theta in [0.0, 0.3, 1.2, PI, 5.0] {
            assert!((bx(3.0, 7.0, 3.0, 2.0, theta).area() - 6.0).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let b = random_box(&mut rng);
            assert!((b.area() - shoelace(b.vertices())).abs() < 1e-9);
        }
    }

    #[test]
    fn canonical_vertex_order_is_clockwise_top_left_first() {
        let b = bx(5.0, 5.0, 4.0, 2.0, 0.0);
        let v = b.vertices();
        assert_eq!(v[0], Point::new(3.0, 4.0));
        assert_eq!(v[1], Point::new(7.0, 4.0));
        assert_eq!(v[2], Point::new(7.0, 6.0));
        assert_eq!(v[3], Point::new(3.0, 6.0));
        assert!(b.is_clockwise());
        let ccw = OrientedBox::from_vertices([v[0], v[3], v[2], v[1]]).unwrap();
        assert!(!ccw.is_clockwise());
    }

    #[test]
    fn rejects_degenerate_and_skewed() {
        assert!(matches!(
            OrientedBox::from_params(BoxParams { cx: 0.0, cy: 0.0, w: 0.0, h: 1.0, theta: 0.0 }),
            Err(GeometryError::Degenerate { .. })
        ));
        let skew = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        assert!(matches!(
            OrientedBox::from_vertices(skew),
            Err(GeometryError::NotRectangle { .. })
        ));
        assert!(OrientedBox::try_from([[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn hbb_cases() {
        let b = bx(2.0, 3.0, 4.0, 2.0, 0.0);
        assert_eq!(to_hbb(&b), AxisBox { xmin: 0.0, ymin: 2.0, xmax: 4.0, ymax: 4.0 });
        let r = to_hbb(&bx(0.0, 0.0, 1.0, 1.0, FRAC_PI_4));
        assert!((r.width() - 2f64.sqrt()).abs() < 1e-12);
        assert!((r.height() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hbb_is_tight_and_containing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let b = random_box(&mut rng);
            let h = to_hbb(&b);
            assert!(b.vertices().iter().all(|&p| h.contains(p)));
            let shrunk = [
                AxisBox { xmin: h.xmin + 1e-6, ..h },
                AxisBox { ymin: h.ymin + 1e-6, ..h },
                AxisBox { xmax: h.xmax - 1e-6, ..h },
                AxisBox { ymax: h.ymax - 1e-6, ..h },
            ];
            for s in shrunk {
                assert!(b.vertices().iter().any(|&p| !s.contains(p)));
            }
        }
    }

    #[test]
    fn intersection_identity_and_disjoint() {
        let a = bx(0.0, 0.0, 3.0, 2.0, 0.7);
        assert!((intersection_area(&a, &a) - 6.0).abs() < 1e-9);
        assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-9);
        let far = bx(100.0, 0.0, 3.0, 2.0, 0.7);
        assert_eq!(intersection_area(&a, &far), 0.0);
        assert_eq!(rotated_iou(&a, &far), 0.0);
    }

    #[test]
    fn identical_up_to_vertex_rotation() {
        let a = bx(4.0, 4.0, 3.0, 2.0, 0.4);
        let v = *a.vertices();
        let rolled = OrientedBox::from_vertices([v[2], v[3], v[0], v[1]]).unwrap();
        assert!((rotated_iou(&a, &rolled) - 1.0).abs() < 1e-9);
        let ccw = OrientedBox::from_vertices([v[0], v[3], v[2], v[1]]).unwrap();
        assert!((rotated_iou(&a, &ccw) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn octagon_overlap_matches_monte_carlo() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| {
                let p = Point::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                b.contains(p)
            })
            .count();
        // sampling a's square, which has unit area
        let p_hat = hits as f64 / n as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        assert!((intersection_area(&a, &b) - p_hat).abs() < 3.0 * sigma);
        assert!((rotated_iou(&a, &b) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn enclosing_cases() {
        let a = AxisBox { xmin: 0.0, ymin: 0.0, xmax: 1.0, ymax: 1.0 }.to_oriented().unwrap();
        let b = AxisBox { xmin: 2.0, ymin: 2.0, xmax: 3.0, ymax: 3.0 }.to_oriented().unwrap();
        assert_eq!(enclosing_axis_box(&a, &b), AxisBox { xmin: 0.0, ymin: 0.0, xmax: 3.0, ymax: 3.0 });
        let big = bx(0.0, 0.0, 10.0, 8.0, 0.3);
        let small = bx(0.5, 0.2, 1.0, 1.0, 1.1);
        assert_eq!(enclosing_axis_box(&big, &small), to_hbb(&big));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (a, b) = (random_box(&mut rng), random_box(&mut rng));
            let e = enclosing_axis_box(&a, &b);
            let all: Vec<Point> = a.vertices().iter().chain(b.vertices()).copied().collect();
            assert!(all.iter().all(|&p| e.contains(p)));
            assert!(all.iter().any(|p| p.x == e.xmin));
            assert!(all.iter().any(|p| p.x == e.xmax));
            assert!(all.iter().any(|p| p.y == e.ymin));
            assert!(all.iter().any(|p| p.y == e.ymax));
        }
    }

    #[test]
    fn pair_geometry_cases() {
        let a = bx(10.0, 10.0, 4.0, 2.0, 0.2);
        let g = pair_geometry(&a, &a, 100.0, 50.0).unwrap();
        assert_eq!(g.center_distance, 0.0);
        assert!((g.area_ratio - 1.0).abs() < 1e-12);
        assert!((g.pair_iou - 1.0).abs() < 1e-9);

        let s = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let o = bx(3.0, 4.0, 2.0, 1.0, 0.0);
        let g = pair_geometry(&s, &o, 10.0, 10.0).unwrap();
        assert!((g.center_distance - 5.0).abs() < 1e-12);
        assert!((g.area_ratio - 0.5).abs() < 1e-12);
        assert!((g.aspect_object - 2.0).abs() < 1e-12);
        assert!((g.normalized_coords[5] - 0.3).abs() < 1e-12);
        assert!((g.normalized_coords[6] - 0.4).abs() < 1e-12);

        assert!(pair_geometry(&s, &o, 0.0, 10.0).is_err());
        assert!(pair_geometry(&s, &o, 10.0, -1.0).is_err());
    }

    #[test]
    fn pair_geometry_matches_raw_vertex_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (s, o) = (random_box(&mut rng), random_box(&mut rng));
            let g = pair_geometry(&s, &o, 200.0, 150.0).unwrap();
            let vs = s.vertices();
            let vo = o.vertices();
            let c = |v: &[Point; 4]| {
                (v.iter().map(|p| p.x).sum::<f64>() / 4.0, v.iter().map(|p| p.y).sum::<f64>() / 4.0)
            };
            let (cs, co) = (c(vs), c(vo));
            let d = ((cs.0 - co.0).powi(2) + (cs.1 - co.1).powi(2)).sqrt();
            assert!((g.center_distance - d).abs() < 1e-9);
            assert!((g.area_ratio - shoelace(vs) / shoelace(vo)).abs() < 1e-9 * g.area_ratio.max(1.0));
            let side = |a: Point, b: Point| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            let aspect = side(vs[0], vs[1]) / side(vs[1], vs[2]);
            assert!((g.aspect_subject - aspect).abs() < 1e-9 * aspect.max(1.0));
            assert!((g.normalized_coords[0] - cs.0 / 200.0).abs() < 1e-12);
            assert!((g.normalized_coords[6] - co.1 / 150.0).abs() < 1e-12);
        }
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64, 0.0..TAU)
            .prop_map(|(cx, cy, w, h, theta)| bx(cx, cy, w, h, theta))
    }

    proptest! {
        #[test]
        fn params_round_trip(cx in -1e3..1e3f64, cy in -1e3..1e3f64, w in 0.01..500.0f64, h in 0.01..500.0f64, theta in 0.0..TAU) {
            let b = bx(cx, cy, w, h, theta);
            let again = OrientedBox::from_params(b.params()).unwrap();
            for (p, q) in b.vertices().iter().zip(again.vertices()) {
                prop_assert!((p.x - q.x).abs() < 1e-6 && (p.y - q.y).abs() < 1e-6);
            }
            prop_assert!(b.is_clockwise());
            prop_assert!((b.params().theta - theta).abs() < 1e-9 || (b.params().theta - theta).abs() > TAU - 1e-9);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let (ab, ba) = (rotated_iou(&a, &b), rotated_iou(&b, &a));
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            let inter = intersection_area(&a, &b);
            prop_assert!((inter - intersection_area(&b, &a)).abs() < 1e-9);
            prop_assert!(inter >= 0.0 && inter <= a.area().min(b.area()) + 1e-9);
            prop_assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn area_invariant_under_rotation(w in 0.1..100.0f64, h in 0.1..100.0f64, t1 in 0.0..TAU, t2 in 0.0..TAU) {
            prop_assert!((bx(0.0, 0.0, w, h, t1).area() - bx(5.0, 2.0, w, h, t2).area()).abs() < 1e-9);
        }

        #[test]
        fn area_ratio_swap_law(a in arb_box(), b in arb_box()) {
            let ab = pair_geometry(&a, &b, 100.0, 100.0).unwrap();
            let ba = pair_geometry(&b, &a, 100.0, 100.0).unwrap();
            prop_assert!((ab.area_ratio * ba.area_ratio - 1.0).abs() < 1e-9);
            prop_assert!((ab.center_distance - ba.center_distance).abs() < 1e-12);
            prop_assert!((ab.pair_iou - ba.pair_iou).abs() < 1e-9);
        }
    }
}
