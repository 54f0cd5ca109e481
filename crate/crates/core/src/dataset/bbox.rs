use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned box in normalized center format, as YOLO labels store it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub class_id: u32,
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BoundingBox<T> {
    /// Strict constructor: every coordinate must already satisfy the invariants.
    pub fn new(class_id: u32, cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let b = BoundingBox { class_id, cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::contract(format!(
                "box ({cx}, {cy}, {w}, {h}) is outside the unit square or degenerate"
            )))
        }
    }

    /// Clips the box extent to the unit square.
    ///
    /// Returns the clipped box and whether clipping changed it, or `None`
    /// when nothing of the box is left inside the image.
    pub fn clamped(class_id: u32, cx: T, cy: T, w: T, h: T) -> Option<(Self, bool)> {
        let (zero, one, two) = (T::zero(), T::one(), T::one() + T::one());
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return None;
        }
        let clip = |v: T| v.max(zero).min(one);
        let x0 = clip(cx - w / two);
        let x1 = clip(cx + w / two);
        let y0 = clip(cy - h / two);
        let y1 = clip(cy + h / two);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        let inside = cx - w / two >= zero && cx + w / two <= one && cy - h / two >= zero && cy + h / two <= one;
        if inside {
            return Some((BoundingBox { class_id, cx, cy, w, h }, false));
        }
        let b = BoundingBox {
            class_id,
            cx: (x0 + x1) / two,
            cy: (y0 + y1) / two,
            w: x1 - x0,
            h: y1 - y0,
        };
        Some((b, true))
    }

    pub fn is_valid(&self) -> bool {
        let (zero, one) = (T::zero(), T::one());
        let in_unit = |v: T| v >= zero && v <= one;
        in_unit(self.cx) && in_unit(self.cy) && self.w > zero && self.w <= one && self.h > zero && self.h <= one
    }

    /// `[x0, y0, x1, y1]` in normalized coordinates.
    pub fn to_xyxy(&self) -> [T; 4] {
        let two = T::one() + T::one();
        [
            self.cx - self.w / two,
            self.cy - self.h / two,
            self.cx + self.w / two,
            self.cy + self.h / two,
        ]
    }

    /// `[x0, y0, x1, y1]` in pixels of a `width` x `height` image.
    pub fn to_pixels(&self, width: u32, height: u32) -> [T; 4] {
        let (w, h) = (T::of_u64(width as u64), T::of_u64(height as u64));
        let [x0, y0, x1, y1] = self.to_xyxy();
        [x0 * w, y0 * h, x1 * w, y1 * h]
    }

    pub fn from_pixels(class_id: u32, xyxy: [T; 4], width: u32, height: u32) -> Result<Self> {
        let (w, h) = (T::of_u64(width as u64), T::of_u64(height as u64));
        let two = T::one() + T::one();
        let [x0, y0, x1, y1] = xyxy;
        Self::new(
            class_id,
            (x0 + x1) / two / w,
            (y0 + y1) / two / h,
            (x1 - x0) / w,
            (y1 - y0) / h,
        )
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn cast<U: Real>(&self) -> BoundingBox<U> {
        let c = |v: T| U::of_f64(v.as_f64());
        BoundingBox {
            class_id: self.class_id,
            cx: c(self.cx),
            cy: c(self.cy),
            w: c(self.w),
            h: c(self.h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn denormalizes_quarter_box_on_100px_image() {
        let b = BoundingBox::new(0, 0.5, 0.5, 0.25, 0.25).unwrap();
        let [x0, y0, x1, y1] = b.to_pixels(100, 100);
        assert_eq!((x1 - x0, y1 - y0), (25.0, 25.0));
        assert_eq!(((x0 + x1) / 2.0, (y0 + y1) / 2.0), (50.0, 50.0));
    }

    #[test]
    fn strict_constructor_rejects_out_of_range() {
        assert!(BoundingBox::new(0, 1.2, 0.5, 0.1, 0.1).is_err());
        assert!(BoundingBox::new(0, 0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BoundingBox::new(0, 0.5, 0.5, 1.5, 0.1).is_err());
    }

    #[test]
    fn clamping_clips_overshoot() {
        let (b, changed) = BoundingBox::<f64>::clamped(1, 0.95, 0.5, 0.2, 0.2).unwrap();
        assert!(changed);
        let [x0, _, x1, _] = b.to_xyxy();
        assert!((x0 - 0.85).abs() < 1e-12 && (x1 - 1.0).abs() < 1e-12);
        assert!(b.is_valid());

        let (same, changed) = BoundingBox::clamped(1, 0.5, 0.5, 0.2, 0.2).unwrap();
        assert!(!changed);
        assert_eq!(same, BoundingBox::new(1, 0.5, 0.5, 0.2, 0.2).unwrap());

        assert!(BoundingBox::clamped(0, 1.5, 0.5, 0.2, 0.2).is_none());
    }

    #[test]
    fn pixel_round_trip_f32() {
        let b = BoundingBox::<f32>::from_pixels(2, [10.0, 20.0, 30.0, 60.0], 100, 80).unwrap();
        let px = b.to_pixels(100, 80);
        for (a, e) in px.iter().zip([10.0, 20.0, 30.0, 60.0]) {
            assert!((a - e).abs() < 1e-4);
        }
    }
}
