use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

use super::{BinaryMask, GrayImage, ImagingError};

/// 2-D affine map `(x, y) -> (a x + b y + tx, c x + d y + ty)` acting on
/// continuous pixel coordinates (pixel `(i, j)` covers `[i, i+1) x [j, j+1)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub c: f64,
    pub d: f64,
    pub ty: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        c: 0.0,
        d: 1.0,
        ty: 0.0,
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            tx: dx,
            ty: dy,
            ..Self::IDENTITY
        }
    }

    /// Rotation by `angle_deg` about `(cx, cy)`. With y pointing down,
    /// positive angles turn clockwise on screen.
    pub fn rotation_about(angle_deg: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        Self {
            a: c,
            b: -s,
            tx: cx - c * cx + s * cy,
            c: s,
            d: c,
            ty: cy - s * cx - c * cy,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.tx,
            self.c * x + self.d * y + self.ty,
        )
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineTransform) -> AffineTransform {
        AffineTransform {
            a: next.a * self.a + next.b * self.c,
            b: next.a * self.b + next.b * self.d,
            tx: next.a * self.tx + next.b * self.ty + next.tx,
            c: next.c * self.a + next.d * self.c,
            d: next.c * self.b + next.d * self.d,
            ty: next.c * self.tx + next.d * self.ty + next.ty,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Result<AffineTransform, ImagingError> {
        let det = self.determinant();
        if !(det.abs() > 1e-12) {
            return Err(ImagingError::Singular);
        }
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Ok(AffineTransform {
            a,
            b,
            tx: -(a * self.tx + b * self.ty),
            c,
            d,
            ty: -(c * self.tx + d * self.ty),
        })
    }
}

/// Axis-aligned hull of the four transformed corners.
pub fn transform_bbox(bbox: &BBox, t: &AffineTransform) -> Result<BBox, ImagingError> {
    if !(t.determinant().abs() > 1e-12) {
        return Err(ImagingError::Singular);
    }
    let corners = [
        t.apply(bbox.x(), bbox.y()),
        t.apply(bbox.right(), bbox.y()),
        t.apply(bbox.x(), bbox.bottom()),
        t.apply(bbox.right(), bbox.bottom()),
    ];
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in corners {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    BBox::from_corners(x0, y0, x1, y1).map_err(|_| ImagingError::Singular)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone)]
pub struct RotatedPatch {
    pub image: GrayImage,
    /// Output pixels whose source sample fell inside the input patch.
    pub coverage: BinaryMask,
    /// Maps input coordinates to output coordinates.
    pub transform: AffineTransform,
}

/// Median of the patch's outermost ring of pixels.
pub fn border_median(patch: &GrayImage) -> u8 {
    let (w, h) = patch.dimensions();
    if w == 0 || h == 0 {
        return 0;
    }
    let mut ring = Vec::with_capacity(2 * (w + h) as usize);
    for x in 0..w {
        ring.push(patch.get(x, 0));
        if h > 1 {
            ring.push(patch.get(x, h - 1));
        }
    }
    for y in 1..h.saturating_sub(1) {
        ring.push(patch.get(0, y));
        if w > 1 {
            ring.push(patch.get(w - 1, y));
        }
    }
    ring.sort_unstable();
    ring[ring.len() / 2]
}

// Guards against 90-degree turns producing `h + 6e-17` and rounding up.
const HULL_EPS: f64 = 1e-9;

fn hull_side(extent: f64) -> u32 {
    ((extent - HULL_EPS).ceil() as u32).max(1)
}

/// Size of the raster holding a `width x height` patch rotated by
/// `angle_deg`.
pub fn rotated_extent(width: u32, height: u32, angle_deg: f64) -> (u32, u32) {
    let (w, h) = (width as f64, height as f64);
    let (s, c) = angle_deg.to_radians().sin_cos();
    (
        hull_side(w * c.abs() + h * s.abs()),
        hull_side(w * s.abs() + h * c.abs()),
    )
}

/// Rotates a patch about its center into the raster that holds the rotated
/// rectangle's axis-aligned hull. Uncovered pixels get `fill`.
pub fn rotate_patch_with_coverage(
    patch: &GrayImage,
    angle_deg: f64,
    fill: u8,
    interpolation: Interpolation,
) -> Result<RotatedPatch, ImagingError> {
    patch.ensure_nonempty()?;
    if !(angle_deg > -180.0 && angle_deg < 180.0) {
        return Err(ImagingError::InvalidParameter(format!(
            "rotation angle must lie in (-180, 180), got {angle_deg}"
        )));
    }
    let (w, h) = (patch.width() as f64, patch.height() as f64);
    let (out_w, out_h) = rotated_extent(patch.width(), patch.height(), angle_deg);

    let transform = AffineTransform::rotation_about(angle_deg, w / 2.0, h / 2.0).then(
        &AffineTransform::translation((out_w as f64 - w) / 2.0, (out_h as f64 - h) / 2.0),
    );
    let inv = transform.inverse()?;

    let mut image = GrayImage::new(out_w, out_h, fill);
    let mut coverage = BinaryMask::new(out_w, out_h, false);
    let (iw, ih) = (patch.width() as i64, patch.height() as i64);
    let px = |x: i64, y: i64| patch.get(x.clamp(0, iw - 1) as u32, y.clamp(0, ih - 1) as u32) as f64;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (sx, sy) = inv.apply(ox as f64 + 0.5, oy as f64 + 0.5);
            if sx < -HULL_EPS || sy < -HULL_EPS || sx > w + HULL_EPS || sy > h + HULL_EPS {
                continue;
            }
            // index space: pixel centers at integer positions
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            let v = match interpolation {
                Interpolation::Nearest => px(fx.round() as i64, fy.round() as i64),
                Interpolation::Bilinear => {
                    let (x0, y0) = (fx.floor(), fy.floor());
                    let (ax, ay) = (fx - x0, fy - y0);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let top = px(x0, y0) * (1.0 - ax) + px(x0 + 1, y0) * ax;
                    let bottom = px(x0, y0 + 1) * (1.0 - ax) + px(x0 + 1, y0 + 1) * ax;
                    top * (1.0 - ay) + bottom * ay
                }
            };
            image.set(ox, oy, v.round().clamp(0.0, 255.0) as u8);
            coverage.set(ox, oy, true);
        }
    }
    Ok(RotatedPatch {
        image,
        coverage,
        transform,
    })
}

/// Bilinear rotation about the patch center; see
/// [`rotate_patch_with_coverage`].
pub fn rotate_patch(
    patch: &GrayImage,
    angle_deg: f64,
    fill: u8,
) -> Result<(GrayImage, AffineTransform), ImagingError> {
    let r = rotate_patch_with_coverage(patch, angle_deg, fill, Interpolation::Bilinear)?;
    Ok((r.image, r.transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_patch(w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 251) as u8)
    }

    /// Smooth content so bilinear resampling error stays small.
    fn smooth_patch(w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let v = 128.0
                + 60.0 * (x as f64 / 9.0).sin()
                + 50.0 * (y as f64 / 7.0).cos();
            v.round() as u8
        })
    }

    #[test]
    fn zero_angle_is_identity() {
        let p = sample_patch(40, 13);
        let (out, t) = rotate_patch(&p, 0.0, 9).unwrap();
        assert_eq!(out, p);
        assert_eq!(t, AffineTransform::IDENTITY);
    }

    #[test]
    fn quarter_turn_transposes() {
        let p = sample_patch(7, 4);
        let (out, _) = rotate_patch(&p, 90.0, 0).unwrap();
        assert_eq!(out.dimensions(), (4, 7));
        for b in 0..4 {
            for a in 0..7 {
                assert_eq!(out.get(3 - b, a), p.get(a, b));
            }
        }
    }

    #[test]
    fn small_rotation_hull_size() {
        let p = GrayImage::new(200, 50, 255);
        let (out, _) = rotate_patch(&p, 3.0, 255).unwrap();
        assert_eq!(out.dimensions(), (203, 61));
        let (out, _) = rotate_patch(&p, -3.0, 255).unwrap();
        assert_eq!(out.dimensions(), (203, 61));
    }

    #[test]
    fn bbox_hull_matches_raster_hull() {
        let b = BBox::new(0.0, 0.0, 200.0, 50.0).unwrap();
        let t = AffineTransform::rotation_about(3.0, 100.0, 25.0);
        let r = transform_bbox(&b, &t).unwrap();
        assert_eq!((r.w().ceil(), r.h().ceil()), (203.0, 61.0));
        let (cx, cy) = r.center();
        assert!((cx - 100.0).abs() < 1e-9 && (cy - 25.0).abs() < 1e-9);
    }

    #[test]
    fn bbox_identity_and_translation() {
        let b = BBox::new(3.0, 4.0, 10.0, 20.0).unwrap();
        assert_eq!(transform_bbox(&b, &AffineTransform::IDENTITY).unwrap(), b);
        assert_eq!(
            transform_bbox(&b, &AffineTransform::translation(5.0, -2.0)).unwrap(),
            BBox::new(8.0, 2.0, 10.0, 20.0).unwrap()
        );
        let singular = AffineTransform {
            a: 1.0,
            b: 2.0,
            tx: 0.0,
            c: 2.0,
            d: 4.0,
            ty: 0.0,
        };
        assert!(matches!(
            transform_bbox(&b, &singular),
            Err(ImagingError::Singular)
        ));
    }

    #[test]
    fn rotation_round_trip_is_close() {
        let p = smooth_patch(120, 60);
        for angle in [-3.0, 1.5, 3.0, 10.0] {
            let fill = border_median(&p);
            let (fwd, t1) = rotate_patch(&p, angle, fill).unwrap();
            let (back, t2) = rotate_patch(&fwd, -angle, fill).unwrap();
            let t = t1.then(&t2);
            // the composite is a translation; locate the original inside
            let (ox, oy) = t.apply(0.0, 0.0);
            let (ox, oy) = (ox.round() as i64, oy.round() as i64);
            let margin = 12;
            let mut total = 0.0;
            let mut n = 0.0;
            for y in margin..60 - margin {
                for x in margin..120 - margin {
                    let a = p.get(x as u32, y as u32) as f64;
                    let b = back.get((x + ox) as u32, (y + oy) as u32) as f64;
                    total += (a - b).abs();
                    n += 1.0;
                }
            }
            assert!(total / n < 3.0, "angle {angle}: mean diff {}", total / n);
        }
    }

    #[test]
    fn coverage_excludes_corners() {
        let p = GrayImage::new(100, 20, 200);
        let r = rotate_patch_with_coverage(&p, 3.0, 0, Interpolation::Bilinear).unwrap();
        assert!(!r.coverage.get(0, 0));
        assert_eq!(r.image.get(0, 0), 0);
        let (cw, ch) = r.image.dimensions();
        assert!(r.coverage.get(cw / 2, ch / 2));
        assert!(r.coverage.count() as f64 >= 0.9 * 2000.0);
    }

    #[test]
    fn border_median_of_ring() {
        let mut p = GrayImage::new(5, 5, 10);
        p.set(2, 2, 0);
        assert_eq!(border_median(&p), 10);
        assert_eq!(border_median(&GrayImage::new(1, 1, 7)), 7);
    }

    proptest! {
        #[test]
        fn composition_matches_sequential_application(
            a1 in -30.0f64..30.0, a2 in -30.0f64..30.0,
            dx in -50.0f64..50.0, dy in -50.0f64..50.0,
            x in 0.0f64..100.0, y in 0.0f64..100.0,
            w in 1.0f64..80.0, h in 1.0f64..80.0,
        ) {
            let t1 = AffineTransform::rotation_about(a1, 10.0, 20.0).then(&AffineTransform::translation(dx, dy));
            let t2 = AffineTransform::rotation_about(a2, -5.0, 7.0);
            let b = BBox::new(x, y, w, h).unwrap();
            let once = transform_bbox(&b, &t1.then(&t2)).unwrap();
            let b1 = transform_bbox(&b, &t1).unwrap();
            // transforming twice hulls the hull, so it can only grow
            let twice = transform_bbox(&b1, &t2).unwrap();
            prop_assert!(twice.x() <= once.x() + 1e-9 && twice.y() <= once.y() + 1e-9);
            prop_assert!(twice.right() >= once.right() - 1e-9 && twice.bottom() >= once.bottom() - 1e-9);
            // the point maps agree exactly up to rounding
            let (px, py) = t1.then(&t2).apply(x, y);
            let (qx, qy) = t1.apply(x, y);
            let (qx, qy) = t2.apply(qx, qy);
            prop_assert!((px - qx).abs() < 1e-9 && (py - qy).abs() < 1e-9);
            // pure translations compose exactly on boxes
            let tr = AffineTransform::translation(dx, dy);
            let via = transform_bbox(&transform_bbox(&b, &tr).unwrap(), &tr).unwrap();
            let direct = transform_bbox(&b, &tr.then(&tr)).unwrap();
            prop_assert!((via.x() - direct.x()).abs() < 1e-9 && (via.w() - direct.w()).abs() < 1e-9);
            let inv = t1.inverse().unwrap();
            let (rx, ry) = inv.apply(t1.apply(x, y).0, t1.apply(x, y).1);
            prop_assert!((rx - x).abs() < 1e-9 && (ry - y).abs() < 1e-9);
        }
    }
}
