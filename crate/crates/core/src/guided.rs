//! Fast guided filter for edge-preserving smoothing.
//!
//! The output is locally a linear function of the guide, `q = a·I + b`, with
//! `a = cov(I, p) / (var(I) + ε)` and `b = mean(p) - a·mean(I)` fitted per
//! window. The fast variant fits the coefficients on an `α`-times subsampled
//! grid and upsamples them bilinearly before applying them to the full
//! resolution guide.
//!
//! `ε` is expressed on the `[0, 1]` intensity scale. Rather than rescaling
//! the images, the regulariser is scaled by `255²`, which yields the same
//! coefficients up to the intensity scale and keeps `ε = 0, p = I` an exact
//! identity.

use crate::error::{Error, Result};
use crate::image_core::GrayImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedFilterParams<T> {
    /// Window radius in full-resolution pixels.
    pub radius: usize,
    /// Regulariser on the `[0, 1]` intensity scale.
    pub epsilon: T,
    /// Subsampling factor for coefficient estimation.
    pub subsample: usize,
}

impl<T: Scalar> Default for GuidedFilterParams<T> {
    fn default() -> Self {
        Self { radius: 8, epsilon: T::lit(0.2), subsample: 2 }
    }
}

impl<T: Scalar> GuidedFilterParams<T> {
    fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::InvalidParameter("guided filter radius must be >= 1".into()));
        }
        if !(self.epsilon >= T::zero()) {
            return Err(Error::InvalidParameter("guided filter epsilon must be >= 0".into()));
        }
        if self.subsample == 0 {
            return Err(Error::InvalidParameter("guided filter subsample must be >= 1".into()));
        }
        Ok(())
    }
}

/// Plane of `f64` samples used for the windowed statistics.
#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_image<T: Scalar>(img: &GrayImage<T>) -> Self {
        Self { w: img.width(), h: img.height(), v: img.data().iter().map(|x| x.as_f64()).collect() }
    }

    fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane { w: self.w, h: self.h, v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// Mean over the `(2r+1)²` window clipped to the image.
    fn box_mean(&self, r: usize) -> Plane {
        let (w, h) = (self.w, self.h);
        let stride = w + 1;
        let mut sat = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += self.v[y * w + x];
                sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
            }
        }
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r + 1).min(w);
                let sum = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0];
                v.push(sum / ((x1 - x0) * (y1 - y0)) as f64);
            }
        }
        Plane { w, h, v }
    }

    /// Block-average decimation by `factor`; trailing partial blocks average what they cover.
    fn downsample(&self, factor: usize) -> Plane {
        let w = self.w.div_ceil(factor);
        let h = self.h.div_ceil(factor);
        let mut v = Vec::with_capacity(w * h);
        for by in 0..h {
            for bx in 0..w {
                let (mut sum, mut n) = (0.0, 0usize);
                for y in by * factor..((by + 1) * factor).min(self.h) {
                    for x in bx * factor..((bx + 1) * factor).min(self.w) {
                        sum += self.v[y * self.w + x];
                        n += 1;
                    }
                }
                v.push(sum / n as f64);
            }
        }
        Plane { w, h, v }
    }

    /// Bilinear upsampling back to `w`×`h`, aligning block centres.
    fn upsample(&self, factor: usize, w: usize, h: usize) -> Plane {
        let offset = (factor as f64 - 1.0) / 2.0;
        let coord = |p: usize, n: usize| -> (usize, usize, f64) {
            let c = ((p as f64 - offset) / factor as f64).clamp(0.0, (n - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, c - i0 as f64)
        };
        let cols: Vec<_> = (0..w).map(|x| coord(x, self.w)).collect();
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            let (y0, y1, fy) = coord(y, self.h);
            for &(x0, x1, fx) in &cols {
                let s = |xx: usize, yy: usize| self.v[yy * self.w + xx];
                let top = s(x0, y0) + (s(x1, y0) - s(x0, y0)) * fx;
                let bottom = s(x0, y1) + (s(x1, y1) - s(x0, y1)) * fx;
                v.push(top + (bottom - top) * fy);
            }
        }
        Plane { w, h, v }
    }
}

/// Guided filter of `input` steered by `guide`.
pub fn fast_guided_filter<T: Scalar>(
    input: &GrayImage<T>,
    guide: &GrayImage<T>,
    params: GuidedFilterParams<T>,
) -> Result<GrayImage<T>> {
    params.validate()?;
    if !input.same_shape(guide) {
        return Err(Error::SizeMismatch(format!(
            "input {}x{} vs guide {}x{}",
            input.width(),
            input.height(),
            guide.width(),
            guide.height()
        )));
    }
    let eps = params.epsilon.as_f64() * 255.0 * 255.0;
    let alpha = params.subsample;

    // First and second moments are formed at full resolution and only then
    // decimated, so the windowed variance and covariance stay unbiased.
    let guide_full = Plane::from_image(guide);
    let input_full = Plane::from_image(input);
    let moments = [
        guide_full.clone(),
        input_full.clone(),
        guide_full.zip(&guide_full, |a, b| a * b),
        guide_full.zip(&input_full, |a, b| a * b),
    ];
    let r = if alpha == 1 { params.radius } else { ((params.radius as f64 / alpha as f64).round() as usize).max(1) };
    let [mean_i, mean_p, corr_ii, corr_ip] = moments.map(|m| {
        let m = if alpha == 1 { m } else { m.downsample(alpha) };
        m.box_mean(r)
    });
    let var_i = corr_ii.zip(&mean_i.zip(&mean_i, |a, b| a * b), |c, m| c - m);
    let cov_ip = corr_ip.zip(&mean_i.zip(&mean_p, |mi, mp| mi * mp), |c, m| c - m);

    let a = cov_ip.zip(&var_i, |c, v| {
        let denom = v + eps;
        if denom > 0.0 {
            c / denom
        } else {
            0.0
        }
    });
    let b = mean_p.zip(&a.zip(&mean_i, |a, m| a * m), |mp, am| mp - am);
    let mut mean_a = a.box_mean(r);
    let mut mean_b = b.box_mean(r);
    if alpha > 1 {
        mean_a = mean_a.upsample(alpha, guide.width(), guide.height());
        mean_b = mean_b.upsample(alpha, guide.width(), guide.height());
    }

    let data = guide_full
        .v
        .iter()
        .zip(mean_a.v.iter().zip(&mean_b.v))
        .map(|(&g, (&ma, &mb))| T::lit(ma * g + mb))
        .collect();
    Ok(GrayImage::from_raw(guide.width(), guide.height(), data))
}

/// Self-guided edge-preserving smoothing.
pub fn guided_smooth<T: Scalar>(img: &GrayImage<T>, params: GuidedFilterParams<T>) -> Result<GrayImage<T>> {
    fast_guided_filter(img, img, params)
}

/// Windowed mean with edge windows shrunk to the image.
pub fn box_mean<T: Scalar>(img: &GrayImage<T>, radius: usize) -> GrayImage<T> {
    let plane = Plane::from_image(img).box_mean(radius);
    GrayImage::from_raw(img.width(), img.height(), plane.v.into_iter().map(T::lit).collect())
}
