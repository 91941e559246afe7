//! Frequency-domain processing: 2D DFT, Butterworth transfer masks,
//! homomorphic enhancement and a decimation-free directional filter bank.
//!
//! Transforms use the unnormalized-forward / `1/N`-inverse convention with
//! the DC coefficient at index `(0, 0)`. Frequency coordinates are the signed
//! bin offsets `k` for `k <= n/2` and `k - n` above that.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image_core::GrayImage;
use crate::scalar::Scalar;

/// Complex 2D spectrum of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    width: usize,
    height: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(width: usize, height: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        self.data[v * self.width + u]
    }

    /// Bin-wise product with a real transfer mask.
    pub fn apply_mask(&self, mask: &FilterMask<T>) -> Result<Self> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::SizeMismatch(format!(
                "mask {}x{} vs spectrum {}x{}",
                mask.width, mask.height, self.width, self.height
            )));
        }
        let data = self.data.iter().zip(&mask.gains).map(|(c, &g)| c * g).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    /// Full complex inverse transform, scaled by `1/N`.
    pub fn inverse_complex(&self) -> Vec<Complex<T>> {
        let mut buf = self.data.clone();
        fft2_in_place(&mut buf, self.width, self.height, Direction::Inverse);
        let scale = T::one() / T::from_count(buf.len());
        for c in buf.iter_mut() {
            *c = *c * scale;
        }
        buf
    }

    /// Sum of squared coefficient magnitudes.
    pub fn energy(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

fn transpose<T: Copy>(src: &[T], width: usize, height: usize, dst: &mut [T]) {
    const BLOCK: usize = 32;
    for by in (0..height).step_by(BLOCK) {
        for bx in (0..width).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(height) {
                for x in bx..(bx + BLOCK).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}

fn fft2_in_place<T: Scalar>(buf: &mut [Complex<T>], width: usize, height: usize, dir: Direction) {
    let mut planner = FftPlanner::<T>::new();
    let plan = |planner: &mut FftPlanner<T>, n: usize| match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let row_fft = plan(&mut planner, width);
    row_fft.process(buf);

    let mut t = vec![Complex::new(T::zero(), T::zero()); buf.len()];
    transpose(buf, width, height, &mut t);
    let col_fft = plan(&mut planner, height);
    col_fft.process(&mut t);
    transpose(&t, height, width, buf);
}

/// Forward 2D DFT (unnormalized).
pub fn dft2<T: Scalar>(img: &GrayImage<T>) -> Spectrum<T> {
    let mut buf: Vec<Complex<T>> = img.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_in_place(&mut buf, img.width(), img.height(), Direction::Forward);
    Spectrum { width: img.width(), height: img.height(), data: buf }
}

/// Inverse 2D DFT keeping the real part.
pub fn idft2<T: Scalar>(spec: &Spectrum<T>) -> GrayImage<T> {
    let data = spec.inverse_complex().into_iter().map(|c| c.re).collect();
    GrayImage::from_raw(spec.width, spec.height, data)
}

/// Signed frequency of bin `k` in an `n`-point transform.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

/// Real per-bin gains over a spectrum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask<T> {
    width: usize,
    height: usize,
    gains: Vec<T>,
}

impl<T: Scalar> FilterMask<T> {
    /// Evaluates `f(u, v)` on signed frequency coordinates.
    pub fn from_frequency_fn(width: usize, height: usize, f: impl Fn(isize, isize) -> T) -> Self {
        let mut gains = Vec::with_capacity(width * height);
        for v in 0..height {
            let fv = signed_frequency(v, height);
            for u in 0..width {
                gains.push(f(signed_frequency(u, width), fv));
            }
        }
        Self { width, height, gains }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gains(&self) -> &[T] {
        &self.gains
    }

    /// Gain at signed frequency `(u, v)`.
    pub fn gain_at(&self, u: isize, v: isize) -> T {
        let iu = u.rem_euclid(self.width as isize) as usize;
        let iv = v.rem_euclid(self.height as isize) as usize;
        self.gains[iv * self.width + iu]
    }

    /// `1 - g` for every bin.
    pub fn complement(&self) -> Self {
        Self { width: self.width, height: self.height, gains: self.gains.iter().map(|&g| T::one() - g).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    #[default]
    Highpass,
}

/// Butterworth low-pass response `1 / (1 + (d/d0)^(2n))`.
#[inline]
pub fn butterworth_gain<T: Scalar>(d: T, d0: T, order: u32) -> T {
    T::one() / (T::one() + (d / d0).powi(2 * order as i32))
}

/// Butterworth transfer mask; the high-pass kind is the complement `1 - H`.
pub fn butterworth_mask<T: Scalar>(width: usize, height: usize, d0: T, order: u32, kind: FilterKind) -> Result<FilterMask<T>> {
    if !(d0 > T::zero()) {
        return Err(Error::InvalidParameter(format!("cutoff d0 must be positive, got {d0:?}")));
    }
    if order == 0 {
        return Err(Error::InvalidParameter("Butterworth order must be >= 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Dimensions { width, height, len: 0 });
    }
    let low = FilterMask::from_frequency_fn(width, height, |u, v| {
        let d = T::lit(((u * u + v * v) as f64).sqrt());
        butterworth_gain(d, d0, order)
    });
    Ok(match kind {
        FilterKind::Lowpass => low,
        FilterKind::Highpass => low.complement(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomomorphicParams<T> {
    /// Cutoff radius in frequency bins.
    pub d0: T,
    pub order: u32,
    pub kind: FilterKind,
}

impl<T: Scalar> Default for HomomorphicParams<T> {
    fn default() -> Self {
        Self { d0: T::lit(12.0), order: 2, kind: FilterKind::Highpass }
    }
}

/// Log-domain Butterworth filtering followed by a min-max rescale.
///
/// Uses `ln(1 + I)` so zero pixels stay finite, and `exp(.) - 1` on the way
/// back. Negative samples are treated as zero.
pub fn homomorphic_enhance<T: Scalar>(img: &GrayImage<T>, params: HomomorphicParams<T>) -> Result<GrayImage<T>> {
    let mask = butterworth_mask(img.width(), img.height(), params.d0, params.order, params.kind)?;
    let log_img = img.map(|v| v.max(T::zero()).ln_1p());
    let filtered = idft2(&dft2(&log_img).apply_mask(&mask)?);
    Ok(filtered.map(|v| v.exp_m1()).rescale_to_byte_range())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalParams<T> {
    /// Number of angular wedge pairs covering `[0, π)`.
    pub directions: usize,
    /// Pass-band edge of the separable high-pass, radians per sample.
    pub cutoff: T,
    /// Stop-band attenuation of the high-pass in dB.
    pub stopband_db: T,
}

impl<T: Scalar> Default for DirectionalParams<T> {
    fn default() -> Self {
        Self { directions: 8, cutoff: T::PI() / T::lit(16.0), stopband_db: T::lit(40.0) }
    }
}

impl<T: Scalar> DirectionalParams<T> {
    fn validate(&self) -> Result<()> {
        if self.directions < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 directions, got {}", self.directions)));
        }
        if !(self.cutoff > T::zero() && self.cutoff < T::PI()) {
            return Err(Error::InvalidParameter(format!("cutoff must lie in (0, π), got {:?}", self.cutoff)));
        }
        if !(self.stopband_db >= T::zero()) {
            return Err(Error::InvalidParameter("stop-band attenuation must be >= 0 dB".into()));
        }
        Ok(())
    }
}

/// Index of the angular wedge containing frequency `(u, v)`, or `None` for DC.
///
/// Wedge `i` spans orientations `iπ/d .. (i+1)π/d` of the frequency vector,
/// folded modulo π so a wedge always includes its antipode. A bin lying
/// exactly on a boundary belongs to the lower-index wedge; the `0 ≡ π`
/// boundary belongs to wedge 0.
pub fn wedge_index(u: isize, v: isize, directions: usize) -> Option<usize> {
    if u == 0 && v == 0 {
        return None;
    }
    let mut theta = (v as f64).atan2(u as f64);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    if theta >= std::f64::consts::PI {
        theta -= std::f64::consts::PI;
    }
    let t = theta / (std::f64::consts::PI / directions as f64);
    let k = t.round();
    let idx = if (t - k).abs() < 1e-9 {
        (k as usize).saturating_sub(1)
    } else {
        t.floor() as usize
    };
    Some(idx.min(directions - 1))
}

/// Rectangularly separable high-pass: `1 - (1 - g_s) * l(ωx) * l(ωy)`.
///
/// `l` is 1 below half the cutoff, 0 above the cutoff and a raised cosine in
/// between; `g_s` is the stop-band gain implied by the attenuation in dB.
pub fn separable_highpass<T: Scalar>(width: usize, height: usize, cutoff: T, stopband_db: T) -> FilterMask<T> {
    let stop_gain = T::lit(10.0).powf(-stopband_db / T::lit(20.0));
    let two_pi = T::lit(2.0) * T::PI();
    let edge = cutoff / T::lit(2.0);
    let low = |f: isize, n: usize| -> T {
        let w = (two_pi * T::lit(f as f64) / T::from_count(n)).abs();
        if w <= edge {
            T::one()
        } else if w >= cutoff {
            T::zero()
        } else {
            T::lit(0.5) * (T::one() + (T::PI() * (w - edge) / (cutoff - edge)).cos())
        }
    };
    FilterMask::from_frequency_fn(width, height, |u, v| {
        T::one() - (T::one() - stop_gain) * low(u, width) * low(v, height)
    })
}

/// Binary mask selecting one wedge pair.
pub fn wedge_mask<T: Scalar>(width: usize, height: usize, wedge: usize, directions: usize) -> FilterMask<T> {
    FilterMask::from_frequency_fn(width, height, |u, v| {
        if wedge_index(u, v, directions) == Some(wedge) {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// High-passed directional images, one per wedge pair.
pub fn directional_images<T: Scalar>(img: &GrayImage<T>, params: DirectionalParams<T>) -> Result<Vec<GrayImage<T>>> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let hp = separable_highpass(w, h, params.cutoff, params.stopband_db);
    let spec = dft2(img).apply_mask(&hp)?;

    let wedge_of: Vec<Option<usize>> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| wedge_index(signed_frequency(u, w), signed_frequency(v, h), params.directions))
        .collect();

    let zero = Complex::new(T::zero(), T::zero());
    let mut out = Vec::with_capacity(params.directions);
    for wedge in 0..params.directions {
        let data: Vec<Complex<T>> =
            spec.data.iter().zip(&wedge_of).map(|(&c, &wi)| if wi == Some(wedge) { c } else { zero }).collect();
        out.push(idft2(&Spectrum { width: w, height: h, data }));
    }
    Ok(out)
}

/// Energy (sum of squares) of each directional image.
pub fn directional_energies<T: Scalar>(img: &GrayImage<T>, params: DirectionalParams<T>) -> Result<Vec<T>> {
    Ok(directional_images(img, params)?.iter().map(|d| d.data().iter().map(|&v| v * v).sum()).collect())
}

/// Wedge with the largest directional energy.
pub fn dominant_direction<T: Scalar>(img: &GrayImage<T>, params: DirectionalParams<T>) -> Result<usize> {
    let energies = directional_energies(img, params)?;
    Ok(energies
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &e)| if e > best.1 { (i, e) } else { best })
        .0)
}

/// Per-pixel maximum over the directional images.
pub fn directional_max<T: Scalar>(img: &GrayImage<T>, params: DirectionalParams<T>) -> Result<GrayImage<T>> {
    let images = directional_images(img, params)?;
    let mut acc = images[0].clone();
    for d in &images[1..] {
        acc = acc.zip_map(d, |a, b| a.max(b));
    }
    Ok(acc)
}

/// Directional enhancement: the per-pixel directional maximum is added to
/// the input and the sum is min-max rescaled to `[0, 255]`.
pub fn directional_filter_bank<T: Scalar>(img: &GrayImage<T>, params: DirectionalParams<T>) -> Result<GrayImage<T>> {
    let max = directional_max(img, params)?;
    Ok(img.zip_map(&max, |a, b| a + b).rescale_to_byte_range())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type Img = GrayImage<f64>;

    fn fixture(w: usize, h: usize, seed: u64) -> Img {
        let mut s = seed;
        Img::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % 256) as f64
        })
        .unwrap()
    }

    fn naive_dft(img: &Img) -> Vec<Complex<f64>> {
        let (w, h) = (img.width(), img.height());
        let mut out = vec![Complex::new(0.0, 0.0); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += Complex::from_polar(img.get(x, y), ang);
                    }
                }
                out[v * w + u] = acc;
            }
        }
        out
    }

    #[test]
    fn dft_of_constant_and_impulse() {
        let s = dft2(&Img::constant(4, 3, 2.5).unwrap());
        assert!((s.get(0, 0).re - 30.0).abs() < 1e-12);
        assert!(s.data()[1..].iter().all(|c| c.norm() < 1e-12));

        let mut imp = Img::constant(5, 4, 0.0).unwrap();
        imp.set(0, 0, 1.0);
        assert!(dft2(&imp).data().iter().all(|c| (c - Complex::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn dft_matches_naive_oracle() {
        let img = fixture(8, 8, 9);
        let fast = dft2(&img);
        for (a, b) in fast.data().iter().zip(naive_dft(&img)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn round_trip_and_zero_spectrum() {
        let img = fixture(12, 7, 4);
        let back = idft2(&dft2(&img));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        let zero = Spectrum::new(3, 3, vec![Complex::new(0.0, 0.0); 9]).unwrap();
        assert!(idft2(&zero).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_holds() {
        let img = fixture(16, 16, 2);
        let spatial: f64 = img.data().iter().map(|v| v * v).sum();
        let spectral = dft2(&img).energy() / 256.0;
        assert!(((spatial - spectral) / spatial).abs() < 1e-6);
    }

    #[test]
    fn butterworth_reference_points() {
        assert_eq!(butterworth_gain(0.0, 12.0, 2), 1.0);
        for n in [1, 2, 4] {
            assert!((butterworth_gain(12.0_f64, 12.0, n) - 0.5).abs() < 1e-12);
        }
        assert!((butterworth_gain(24.0_f64, 12.0, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn butterworth_mask_validation_and_symmetry() {
        assert!(butterworth_mask::<f64>(8, 8, 0.0, 1, FilterKind::Lowpass).is_err());
        assert!(butterworth_mask::<f64>(8, 8, 3.0, 0, FilterKind::Lowpass).is_err());
        let m = butterworth_mask::<f64>(16, 16, 3.0, 2, FilterKind::Lowpass).unwrap();
        for u in -7..=7 {
            for v in -7..=7 {
                let g = m.gain_at(u, v);
                assert!((0.0..=1.0).contains(&g));
                assert_eq!(g, m.gain_at(v, u));
                assert_eq!(g, m.gain_at(-u, v));
            }
        }
        let hp = butterworth_mask::<f64>(16, 16, 3.0, 2, FilterKind::Highpass).unwrap();
        assert_eq!(hp.gain_at(0, 0), 0.0);
        assert!((hp.gain_at(3, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn homomorphic_constant_lowpass_is_identity() {
        let img = Img::constant(16, 16, 90.0).unwrap();
        let p = HomomorphicParams { d0: 12.0, order: 2, kind: FilterKind::Lowpass };
        let out = homomorphic_enhance(&img, p).unwrap();
        assert!(out.data().iter().all(|v| (v - 90.0).abs() < 1e-9));
    }

    #[test]
    fn homomorphic_matches_composed_oracle() {
        let img = fixture(16, 16, 21);
        let p = HomomorphicParams { d0: 12.0, order: 2, kind: FilterKind::Highpass };
        let out = homomorphic_enhance(&img, p).unwrap();

        let (w, h) = (16usize, 16usize);
        let log_img = Img::from_fn(w, h, |x, y| (1.0 + img.get(x, y)).ln()).unwrap();
        let spec = naive_dft(&log_img);
        let mut filtered = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for v in 0..h {
                    for u in 0..w {
                        let fu = if u <= w / 2 { u as f64 } else { u as f64 - w as f64 };
                        let fv = if v <= h / 2 { v as f64 } else { v as f64 - h as f64 };
                        let d = (fu * fu + fv * fv).sqrt();
                        let gain = 1.0 - 1.0 / (1.0 + (d / 12.0).powi(4));
                        let ang = 2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += spec[v * w + u] * gain * Complex::from_polar(1.0, ang);
                    }
                }
                filtered[y * w + x] = (acc.re / (w * h) as f64).exp() - 1.0;
            }
        }
        let lo = filtered.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = filtered.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in out.data().iter().zip(&filtered) {
            assert!((a - (b - lo) * 255.0 / (hi - lo)).abs() < 1e-6);
        }
    }

    #[test]
    fn homomorphic_highpass_is_nearly_gain_invariant() {
        let img = Img::from_fn(32, 32, |x, y| 80.0 + 40.0 * ((x as f64) / 3.0).sin() + 2.0 * y as f64).unwrap();
        let p = HomomorphicParams::default();
        let a = homomorphic_enhance(&img, p).unwrap();
        let b = homomorphic_enhance(&img.map(|v| 1.5 * v), p).unwrap();
        let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 3.0, "max deviation {worst}");
    }

    #[test]
    fn homomorphic_highpass_lifts_stripes_over_glare() {
        let n = 64;
        let img = Img::from_fn(n, n, |x, y| {
            let glare = 60.0 + 150.0 * (x + y) as f64 / (2 * n) as f64;
            let stripe = 10.0 * (2.0 * PI * 16.0 * x as f64 / n as f64).cos();
            glare + stripe
        })
        .unwrap();
        let band_ratio = |im: &Img| {
            let s = dft2(im);
            let stripe = s.get(16, 0).norm_sqr() + s.get(n - 16, 0).norm_sqr();
            let total: f64 = s.data().iter().skip(1).map(|c| c.norm_sqr()).sum();
            stripe / total
        };
        let out = homomorphic_enhance(&img, HomomorphicParams::default()).unwrap();
        assert!(band_ratio(&out) > band_ratio(&img), "{} vs {}", band_ratio(&out), band_ratio(&img));
    }

    #[test]
    fn wedge_boundaries_go_to_lower_index() {
        assert_eq!(wedge_index(0, 0, 8), None);
        assert_eq!(wedge_index(1, 0, 8), Some(0));
        assert_eq!(wedge_index(-1, 0, 8), Some(0));
        // π/4 is the boundary between wedges 1 and 2
        assert_eq!(wedge_index(1, 1, 8), Some(1));
        assert_eq!(wedge_index(-1, -1, 8), Some(1));
        // π/2 sits between wedges 3 and 4
        assert_eq!(wedge_index(0, 1, 8), Some(3));
        assert_eq!(wedge_index(-1, 1, 8), Some(5));
        assert_eq!(wedge_index(10, -1, 8), Some(7));
    }

    #[test]
    fn separable_highpass_reaches_stopband() {
        let m = separable_highpass::<f64>(64, 64, PI / 16.0, 40.0);
        assert!((m.gain_at(0, 0) - 0.01).abs() < 1e-12);
        assert_eq!(m.gain_at(32, 0), 1.0);
        assert!(m.gains().iter().all(|&g| (0.01 - 1e-12..=1.0).contains(&g)));
    }

    #[test]
    fn dfb_constant_is_fixed_point() {
        let img = Img::constant(32, 32, 77.0).unwrap();
        let out = directional_filter_bank(&img, DirectionalParams::default()).unwrap();
        assert!(out.data().iter().all(|v| (v - 77.0).abs() < 1e-9));
    }

    #[test]
    fn dfb_max_dominates_each_direction() {
        let img = fixture(32, 32, 8);
        let p = DirectionalParams::default();
        let dirs = directional_images(&img, p).unwrap();
        let max = directional_max(&img, p).unwrap();
        for d in &dirs {
            assert!(max.data().iter().zip(d.data()).all(|(m, v)| m >= v));
        }
    }

    #[test]
    fn dfb_rejects_too_few_directions() {
        let img = fixture(8, 8, 1);
        let p = DirectionalParams { directions: 1, ..DirectionalParams::default() };
        assert!(directional_filter_bank(&img, p).is_err());
    }
}
