//! Grayscale image container and spatial-domain point operations:
//! statistics, mean/variance normalization, contrast-limited adaptive
//! histogram equalization and Gaussian smoothing.
//!
//! Intensities are floating-point with a nominal range of `[0, 255]`;
//! quantization to 8 bits happens only when an image is written to disk.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major 2D scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimensions { width, height, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("image contains non-finite samples".into()));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single value.
    pub fn constant(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Internal constructor for buffers whose shape is already known to be valid.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape<U>(&self, other: &GrayImage<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::from_raw(self.width, self.height, data)
    }

    /// Smallest and largest sample.
    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Clamps every sample into `[0, 255]`.
    pub fn clamp_to_byte_range(&self) -> Self {
        let hi = T::lit(255.0);
        self.map(|v| v.max(T::zero()).min(hi))
    }

    /// Min-max stretch to `[0, 255]`.
    ///
    /// A flat image carries no range to stretch and is only clamped, so a
    /// constant input stays a fixed point of every stage that ends here.
    pub fn rescale_to_byte_range(&self) -> Self {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if !(span > T::lit(1e-9) * (T::one() + hi.abs())) {
            return self.clamp_to_byte_range();
        }
        let scale = T::lit(255.0) / span;
        self.map(|v| (v - lo) * scale)
    }

    /// Converts to 8-bit samples by rounding and clamping.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.as_f64().round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| T::from_count(b as usize)).collect())
    }

    /// Changes the sample precision.
    pub fn cast<U: Scalar>(&self) -> GrayImage<U> {
        GrayImage::from_raw(self.width, self.height, self.data.iter().map(|v| U::lit(v.as_f64())).collect())
    }
}

/// First and second moments of an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageStats<T> {
    pub mean: T,
    /// Population variance.
    pub variance: T,
}

pub fn image_stats<T: Scalar>(img: &GrayImage<T>) -> Result<ImageStats<T>> {
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    let n = T::from_count(img.len());
    let mean = img.data().iter().copied().sum::<T>() / n;
    let variance = img
        .data()
        .iter()
        .map(|&v| {
            let d = v - mean;
            d * d
        })
        .sum::<T>()
        / n;
    Ok(ImageStats { mean, variance })
}

/// Target statistics for [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeParams<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> Default for NormalizeParams<T> {
    fn default() -> Self {
        Self { mean: T::lit(128.0), variance: T::lit(100.0) }
    }
}

/// Maps the image to a prescribed mean and variance.
///
/// Each pixel becomes `m0 ± sqrt(var0 * (p - M)^2 / VAR)`, taking the upper
/// branch when the pixel lies strictly above the image mean `M`. A
/// zero-variance image has no defined deviation and maps to the constant `m0`.
pub fn normalize<T: Scalar>(img: &GrayImage<T>, params: NormalizeParams<T>) -> Result<GrayImage<T>> {
    if !(params.variance >= T::zero()) {
        return Err(Error::InvalidParameter(format!("target variance must be >= 0, got {:?}", params.variance)));
    }
    let ImageStats { mean, variance } = image_stats(img)?;
    if variance <= T::zero() {
        return Ok(img.map(|_| params.mean));
    }
    let m0 = params.mean;
    let var0 = params.variance;
    Ok(img.map(|p| {
        let d = p - mean;
        let dev = (var0 * d * d / variance).sqrt();
        if p > mean {
            m0 + dev
        } else {
            m0 - dev
        }
    }))
}

/// Parameters of contrast-limited adaptive histogram equalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    /// Tile edge length in pixels.
    pub tile: usize,
    /// Per-bin clip limit as a fraction of the tile's pixel count.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self { tile: 64, clip_limit: 0.01 }
    }
}

const LEVELS: usize = 256;

/// Grey-level lookup table of one tile.
struct TileMap {
    lut: [f64; LEVELS],
}

impl TileMap {
    fn build(levels: &[u8], width: usize, x0: usize, x1: usize, y0: usize, y1: usize, clip_limit: f64) -> Self {
        let mut hist = [0f64; LEVELS];
        for y in y0..y1 {
            for &l in &levels[y * width + x0..y * width + x1] {
                hist[l as usize] += 1.0;
            }
        }
        let total: f64 = hist.iter().sum();
        let lo = hist.iter().position(|&h| h > 0.0).unwrap_or(0);
        let hi = hist.iter().rposition(|&h| h > 0.0).unwrap_or(0);

        let mut lut = [0f64; LEVELS];
        if lo == hi {
            // single occupied level: nothing to equalize
            for (l, v) in lut.iter_mut().enumerate() {
                *v = l as f64;
            }
            return Self { lut };
        }

        let limit = (clip_limit * total).max(1.0);
        let mut excess = 0.0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let share = excess / LEVELS as f64;
        for h in hist.iter_mut() {
            *h += share;
        }

        let mut cdf = [0f64; LEVELS];
        let mut acc = 0.0;
        for (c, h) in cdf.iter_mut().zip(hist.iter()) {
            acc += h;
            *c = acc;
        }
        let cdf_min = cdf[lo];
        let denom = cdf[LEVELS - 1] - cdf_min;
        for (v, c) in lut.iter_mut().zip(cdf.iter()) {
            *v = ((c - cdf_min) / denom * 255.0).clamp(0.0, 255.0);
        }
        Self { lut }
    }
}

/// Contrast-limited adaptive histogram equalization.
///
/// Samples are quantized to 256 grey levels. The image is split into
/// `tile`×`tile` regions (partial tiles at the right and bottom edges), a
/// clipped-histogram mapping is built per tile, and each pixel blends the
/// mappings of its four nearest tile centres bilinearly. When the tile is
/// larger than the image, a single global mapping is used.
///
/// Constant images are returned unchanged.
pub fn adaptive_equalize<T: Scalar>(img: &GrayImage<T>, params: ClaheParams) -> Result<GrayImage<T>> {
    if params.tile == 0 {
        return Err(Error::InvalidParameter("tile size must be positive".into()));
    }
    if !(params.clip_limit > 0.0) {
        return Err(Error::InvalidParameter("clip limit must be positive".into()));
    }
    let (lo, hi) = img.min_max();
    if lo == hi {
        return Ok(img.clone());
    }

    let (w, h) = (img.width(), img.height());
    let levels: Vec<u8> = img.to_u8();

    let global = params.tile > w || params.tile > h;
    let tile = if global { w.max(h) } else { params.tile };
    let tiles_x = if global { 1 } else { w.div_ceil(tile) };
    let tiles_y = if global { 1 } else { h.div_ceil(tile) };

    let maps: Vec<TileMap> = (0..tiles_y)
        .flat_map(|ty| (0..tiles_x).map(move |tx| (tx, ty)))
        .map(|(tx, ty)| {
            let x0 = tx * tile;
            let y0 = ty * tile;
            let x1 = if global { w } else { (x0 + tile).min(w) };
            let y1 = if global { h } else { (y0 + tile).min(h) };
            TileMap::build(&levels, w, x0, x1, y0, y1, params.clip_limit)
        })
        .collect();

    if tiles_x == 1 && tiles_y == 1 {
        let lut = &maps[0].lut;
        let data = levels.iter().map(|&l| T::lit(lut[l as usize])).collect();
        return Ok(GrayImage::from_raw(w, h, data));
    }

    // tile-centre coordinates for bilinear blending
    let axis = |pos: usize, n_tiles: usize, extent: usize| -> (usize, usize, f64) {
        let centre = |t: usize| {
            let start = t * tile;
            let end = (start + tile).min(extent);
            (start + end) as f64 / 2.0 - 0.5
        };
        let p = pos as f64;
        if p <= centre(0) {
            return (0, 0, 0.0);
        }
        if p >= centre(n_tiles - 1) {
            return (n_tiles - 1, n_tiles - 1, 0.0);
        }
        let mut t = 0;
        while t + 1 < n_tiles && centre(t + 1) <= p {
            t += 1;
        }
        let (c0, c1) = (centre(t), centre(t + 1));
        (t, t + 1, (p - c0) / (c1 - c0))
    };

    let cols: Vec<(usize, usize, f64)> = (0..w).map(|x| axis(x, tiles_x, w)).collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (ty0, ty1, fy) = axis(y, tiles_y, h);
        for (x, &(tx0, tx1, fx)) in cols.iter().enumerate() {
            let l = levels[y * w + x] as usize;
            let m = |tx: usize, ty: usize| maps[ty * tiles_x + tx].lut[l];
            let top = m(tx0, ty0) * (1.0 - fx) + m(tx1, ty0) * fx;
            let bottom = m(tx0, ty1) * (1.0 - fx) + m(tx1, ty1) * fx;
            data.push(T::lit((top * (1.0 - fy) + bottom * fy).clamp(0.0, 255.0)));
        }
    }
    Ok(GrayImage::from_raw(w, h, data))
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Normalized 1-D Gaussian weights on `[-radius, radius]`, `radius = ceil(3σ)`.
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Vec<T> {
    let radius = (T::lit(3.0) * sigma).ceil().to_usize().unwrap_or(0);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (-(radius as isize)..=radius as isize)
        .map(|i| {
            let d = T::lit(i as f64);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let sum: T = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Isotropic Gaussian smoothing with reflective borders.
///
/// Implemented as two separable 1-D passes of the normalized kernel from
/// [`gaussian_kernel`].
pub fn gaussian_smooth<T: Scalar>(img: &GrayImage<T>, sigma: T) -> Result<GrayImage<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma:?}")));
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let src = img.data();

    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (k, &wk) in kernel.iter().enumerate() {
                acc = acc + wk * row[reflect_index(x as isize + k as isize - r, w)];
            }
            *o = acc;
        }
    }

    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &wk) in kernel.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - r, h);
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (d, &s) in dst.iter_mut().zip(srow) {
                *d = *d + wk * s;
            }
        }
    }
    Ok(GrayImage::from_raw(w, h, out))
}
