//! Grayscale morphology with disk structuring elements and multiscale
//! top-hat vessel enhancement.
//!
//! Borders are handled by replication. Erosion and dilation decompose the
//! disk into horizontal spans: one running min/max per distinct half-width,
//! then a per-row reduction, which gives results identical to a direct scan
//! of the footprint.

use crate::error::{Error, Result};
use crate::image_core::GrayImage;
use crate::scalar::Scalar;

/// Euclidean disk footprint, `x² + y² <= r²`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    /// Half-width of the disk's row at each vertical offset `-r..=r`.
    spans: Vec<usize>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        let r = radius as isize;
        let spans = (-r..=r)
            .map(|dy| {
                let rem = r * r - dy * dy;
                let mut w = (rem as f64).sqrt() as isize;
                while (w + 1) * (w + 1) <= rem {
                    w += 1;
                }
                while w * w > rem {
                    w -= 1;
                }
                w as usize
            })
            .collect();
        Self { radius, spans }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Whether the offset `(dx, dy)` lies inside the footprint.
    pub fn contains(&self, dx: isize, dy: isize) -> bool {
        let r = self.radius as isize;
        if dy.abs() > r {
            return false;
        }
        dx.unsigned_abs() <= self.spans[(dy + r) as usize]
    }

    /// Square boolean mask of side `2r + 1`, row-major.
    pub fn mask(&self) -> Vec<bool> {
        let r = self.radius as isize;
        (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).map(|(dx, dy)| self.contains(dx, dy)).collect()
    }

    /// Footprint offsets `(dx, dy)`.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).filter(|&(dx, dy)| self.contains(dx, dy)).collect()
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    /// Element-wise extremum of `dst` and `src`, stored in `dst`. Plain
    /// comparisons suffice because samples are always finite.
    #[inline(always)]
    fn fold_into<T: Scalar>(self, dst: &mut [T], src: &[T]) {
        match self {
            Extremum::Min => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = if s < *d { s } else { *d }),
            Extremum::Max => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = if s > *d { s } else { *d }),
        }
    }
}

fn rank_filter<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement, op: Extremum) -> GrayImage<T> {
    let (w, h) = (img.width(), img.height());
    let r = se.radius;
    let levels = r + 1;
    let ring_len = (2 * r + 1).min(h);

    // For each buffered input row, level k holds the extremum over [x-k, x+k]
    // clamped to the row. Rows live in a ring so the working set stays small.
    let mut ring = vec![T::zero(); ring_len * levels * w];
    let fill = |ring: &mut [T], row: usize| {
        let slot = &mut ring[(row % ring_len) * levels * w..][..levels * w];
        slot[..w].copy_from_slice(&img.data()[row * w..][..w]);
        for k in 1..levels {
            let (done, rest) = slot.split_at_mut(k * w);
            let prev = &done[(k - 1) * w..];
            let dst = &mut rest[..w];
            dst.copy_from_slice(prev);
            if w > 1 {
                op.fold_into(&mut dst[..w - 1], &prev[1..]);
                op.fold_into(&mut dst[1..], &prev[..w - 1]);
            }
        }
    };

    let mut out = vec![T::zero(); w * h];
    let mut next_row = 0;
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        while next_row <= (y + r).min(h - 1) {
            fill(&mut ring, next_row);
            next_row += 1;
        }
        for (i, &span) in se.spans.iter().enumerate() {
            let sy = (y as isize + i as isize - r as isize).clamp(0, h as isize - 1) as usize;
            let src = &ring[((sy % ring_len) * levels + span) * w..][..w];
            if i == 0 {
                dst.copy_from_slice(src);
            } else {
                op.fold_into(dst, src);
            }
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Per-pixel minimum over the footprint.
pub fn erode<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    rank_filter(img, se, Extremum::Min)
}

/// Per-pixel maximum over the footprint.
pub fn dilate<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    rank_filter(img, se, Extremum::Max)
}

pub fn open<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    dilate(&erode(img, se), se)
}

pub fn close<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    erode(&dilate(img, se), se)
}

/// White top-hat: `img - open(img)`. Extracts bright detail smaller than the disk.
pub fn top_hat<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    img.zip_map(&open(img, se), |a, b| a - b)
}

/// Black top-hat: `close(img) - img`. Extracts dark detail smaller than the disk.
pub fn black_hat<T: Scalar>(img: &GrayImage<T>, se: &StructuringElement) -> GrayImage<T> {
    close(img, se).zip_map(img, |a, b| a - b)
}

/// Odd radii 3, 5, ..., 19.
pub fn default_radii() -> Vec<usize> {
    (3..=19).step_by(2).collect()
}

/// Max projection over scales plus max projection over consecutive-scale
/// differences, for one hat family.
fn multiscale_projection<T: Scalar>(hats: &[GrayImage<T>]) -> GrayImage<T> {
    let mut over_scales = hats[0].clone();
    for hat in &hats[1..] {
        over_scales = over_scales.zip_map(hat, |a, b| a.max(b));
    }
    let over_differences = if hats.len() < 2 {
        over_scales.map(|_| T::zero())
    } else {
        let mut acc = hats[1].zip_map(&hats[0], |a, b| a - b);
        for pair in hats.windows(2).skip(1) {
            let diff = pair[1].zip_map(&pair[0], |a, b| a - b);
            acc = acc.zip_map(&diff, |a, b| a.max(b));
        }
        acc
    };
    over_scales.zip_map(&over_differences, |a, b| a + b)
}

/// Bright and dark multiscale responses `(I_w, I_b)`.
pub fn multiscale_hats<T: Scalar>(img: &GrayImage<T>, radii: &[usize]) -> Result<(GrayImage<T>, GrayImage<T>)> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("radius list is empty".into()));
    }
    if radii.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidParameter(format!("radii must be strictly increasing: {radii:?}")));
    }
    let mut whites = Vec::with_capacity(radii.len());
    let mut blacks = Vec::with_capacity(radii.len());
    for &r in radii {
        let se = StructuringElement::disk(r);
        whites.push(top_hat(img, &se));
        blacks.push(black_hat(img, &se));
    }
    Ok((multiscale_projection(&whites), multiscale_projection(&blacks)))
}

/// Multiscale top-hat enhancement `I + I_w - I_b`, clamped to `[0, 255]`.
///
/// Bright structures are reinforced by the white hats and dark ones (contrast
/// filled vessels on an X-ray) are deepened by the black hats.
pub fn multiscale_tophat_enhance<T: Scalar>(img: &GrayImage<T>, radii: &[usize]) -> Result<GrayImage<T>> {
    let (white, black) = multiscale_hats(img, radii)?;
    let sum = img.zip_map(&white, |a, b| a + b).zip_map(&black, |a, b| a - b);
    Ok(sum.clamp_to_byte_range())
}

#[cfg(test)]
mod tests {
    use super::*;

    type Img = GrayImage<f64>;

    fn fixture(w: usize, h: usize, seed: u64) -> Img {
        let mut s = seed;
        Img::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % 256) as f64
        })
        .unwrap()
    }

    fn naive(img: &Img, r: usize, max: bool) -> Img {
        let ri = r as isize;
        let (w, h) = (img.width() as isize, img.height() as isize);
        Img::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = if max { f64::NEG_INFINITY } else { f64::INFINITY };
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if dx * dx + dy * dy > ri * ri {
                        continue;
                    }
                    let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                    let v = img.get(sx, sy);
                    acc = if max { acc.max(v) } else { acc.min(v) };
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn disk_footprint_is_symmetric_and_centred() {
        for r in 0..=9 {
            let se = StructuringElement::disk(r);
            let n = 2 * r + 1;
            let m = se.mask();
            assert!(m[r * n + r]);
            for y in 0..n {
                for x in 0..n {
                    assert_eq!(m[y * n + x], m[x * n + (n - 1 - y)], "rot90 r={r}");
                    assert_eq!(m[y * n + x], m[y * n + (n - 1 - x)], "mirror r={r}");
                }
            }
        }
        assert_eq!(StructuringElement::disk(1).offsets().len(), 5);
    }

    #[test]
    fn erode_dilate_match_naive_scan() {
        for seed in 0..5 {
            let img = fixture(16, 16, seed);
            for r in [1, 3, 5, 7] {
                let se = StructuringElement::disk(r);
                assert_eq!(erode(&img, &se), naive(&img, r, false));
                assert_eq!(dilate(&img, &se), naive(&img, r, true));
            }
        }
    }

    #[test]
    fn constant_is_fixed_by_everything() {
        let img = Img::constant(12, 12, 33.0).unwrap();
        let se = StructuringElement::disk(3);
        assert_eq!(erode(&img, &se), img);
        assert_eq!(dilate(&img, &se), img);
        assert!(top_hat(&img, &se).data().iter().all(|&v| v == 0.0));
        assert!(black_hat(&img, &se).data().iter().all(|&v| v == 0.0));
        assert_eq!(multiscale_tophat_enhance(&img, &default_radii()).unwrap(), img);
    }

    #[test]
    fn dilating_an_impulse_draws_the_disk() {
        let mut img = Img::constant(15, 15, 0.0).unwrap();
        img.set(7, 7, 9.0);
        let se = StructuringElement::disk(3);
        let out = dilate(&img, &se);
        for y in 0..15 {
            for x in 0..15 {
                let inside = se.contains(x as isize - 7, y as isize - 7);
                assert_eq!(out.get(x, y), if inside { 9.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn duality() {
        let img = fixture(16, 16, 42);
        let se = StructuringElement::disk(4);
        let neg = img.map(|v| -v);
        assert_eq!(dilate(&img, &se), erode(&neg, &se).map(|v| -v));
    }

    #[test]
    fn hats_pick_up_thin_ridges() {
        let bright = Img::from_fn(24, 24, |x, _| if (11..14).contains(&x) { 200.0 } else { 50.0 }).unwrap();
        let dark = bright.map(|v| 250.0 - v);
        let se = StructuringElement::disk(5);
        let th = top_hat(&bright, &se);
        let bh = black_hat(&dark, &se);
        for y in 0..24 {
            assert_eq!(th.get(12, y), 150.0);
            assert_eq!(bh.get(12, y), 150.0);
            assert_eq!(th.get(3, y), 0.0);
            assert_eq!(bh.get(3, y), 0.0);
        }
    }

    #[test]
    fn single_scale_has_no_difference_term() {
        let img = fixture(20, 20, 3);
        let se = StructuringElement::disk(5);
        let out = multiscale_tophat_enhance(&img, &[5]).unwrap();
        let expect = img
            .zip_map(&top_hat(&img, &se), |a, b| a + b)
            .zip_map(&black_hat(&img, &se), |a, b| a - b)
            .clamp_to_byte_range();
        assert_eq!(out, expect);
    }

    #[test]
    fn rejects_bad_radius_lists() {
        let img = fixture(8, 8, 1);
        assert!(multiscale_tophat_enhance(&img, &[]).is_err());
        assert!(multiscale_tophat_enhance(&img, &[5, 3]).is_err());
        assert!(multiscale_tophat_enhance(&img, &[3, 3]).is_err());
    }
}
