use crate::error::{Error, Result};

/// Binary pixel set over an image grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimensions { width, height, len: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    /// Axis-aligned filled rectangle `[x0, x1) × [y0, y1)`, clipped to the grid.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self::from_fn(width, height, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_grid(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    pub fn union_area(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a || b).count()
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        BinaryMask { width: self.width, height: self.height, bits }
    }

    pub fn union_in_place(&mut self, other: &BinaryMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// Intersection over union; two empty masks give 0.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let union = self.union_area(other);
        if union == 0 {
            0.0
        } else {
            self.intersection_area(other) as f64 / union as f64
        }
    }

    /// Mean pixel coordinate `(x, y)`, or `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// One binary erosion with the 3×3 cross; pixels outside the grid count as unset.
    pub fn erode_cross(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        BinaryMask::from_fn(w, h, |x, y| {
            self.get(x, y)
                && x > 0
                && y > 0
                && x + 1 < w
                && y + 1 < h
                && self.get(x - 1, y)
                && self.get(x + 1, y)
                && self.get(x, y - 1)
                && self.get(x, y + 1)
        })
    }

    /// Fills one polygon with the even-odd rule, setting every pixel whose
    /// centre lies inside. `vertices` is a flat `[x0, y0, x1, y1, ...]` list.
    pub fn fill_polygon(&mut self, vertices: &[f64]) {
        let n = vertices.len() / 2;
        if n < 3 {
            return;
        }
        let pt = |i: usize| (vertices[2 * i], vertices[2 * i + 1]);
        let mut crossings: Vec<f64> = Vec::new();
        for y in 0..self.height {
            let yc = y as f64 + 0.5;
            crossings.clear();
            for i in 0..n {
                let (x0, y0) = pt(i);
                let (x1, y1) = pt((i + 1) % n);
                if (y0 <= yc) != (y1 <= yc) {
                    crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            crossings.sort_by(|a, b| a.total_cmp(b));
            for pair in crossings.chunks_exact(2) {
                // pixel x is inside when its centre x + 0.5 lies in [a, b)
                let start = (pair[0] - 0.5).ceil().max(0.0);
                let end = (pair[1] - 0.5).ceil().min(self.width as f64);
                let mut x = start as usize;
                while (x as f64) < end {
                    self.bits[y * self.width + x] = true;
                    x += 1;
                }
            }
        }
    }

    /// Union of even-odd filled polygons.
    pub fn from_polygons(width: usize, height: usize, polygons: &[Vec<f64>]) -> Self {
        let mut m = Self::empty(width, height);
        for poly in polygons {
            m.fill_polygon(poly);
        }
        m
    }

    /// Rectangle polygons whose union rasterizes back to exactly this mask.
    ///
    /// Horizontal runs are merged downwards while consecutive rows repeat the
    /// same run.
    pub fn to_polygons(&self) -> Vec<Vec<f64>> {
        let mut open: Vec<(usize, usize, usize)> = Vec::new(); // (x0, x1, y0)
        let mut done: Vec<(usize, usize, usize, usize)> = Vec::new();
        for y in 0..=self.height {
            let runs = if y < self.height { self.row_runs(y) } else { Vec::new() };
            let mut still_open = Vec::with_capacity(runs.len());
            for &(x0, x1, y0) in &open {
                if runs.contains(&(x0, x1)) {
                    still_open.push((x0, x1, y0));
                } else {
                    done.push((x0, x1, y0, y));
                }
            }
            for &(x0, x1) in &runs {
                if !still_open.iter().any(|&(a, b, _)| a == x0 && b == x1) {
                    still_open.push((x0, x1, y));
                }
            }
            open = still_open;
        }
        done.sort_by_key(|&(x0, _, y0, _)| (y0, x0));
        done.into_iter()
            .map(|(x0, x1, y0, y1)| {
                let (x0, x1, y0, y1) = (x0 as f64, x1 as f64, y0 as f64, y1 as f64);
                vec![x0, y0, x1, y0, x1, y1, x0, y1]
            })
            .collect()
    }

    fn row_runs(&self, y: usize) -> Vec<(usize, usize)> {
        let row = &self.bits[y * self.width..(y + 1) * self.width];
        let mut runs = Vec::new();
        let mut x = 0;
        while x < row.len() {
            if row[x] {
                let start = x;
                while x < row.len() && row[x] {
                    x += 1;
                }
                runs.push((start, x));
            } else {
                x += 1;
            }
        }
        runs
    }

    /// Squared Euclidean distance from every pixel to the nearest set pixel.
    pub fn squared_distance_transform(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let inf = 1e20;
        let mut grid: Vec<f64> = self.bits.iter().map(|&b| if b { 0.0 } else { inf }).collect();
        let mut buf = Vec::new();
        for x in 0..w {
            let col: Vec<f64> = (0..h).map(|y| grid[y * w + x]).collect();
            distance_1d(&col, &mut buf);
            for y in 0..h {
                grid[y * w + x] = buf[y];
            }
        }
        for y in 0..h {
            let row = grid[y * w..(y + 1) * w].to_vec();
            distance_1d(&row, &mut buf);
            grid[y * w..(y + 1) * w].copy_from_slice(&buf);
        }
        grid
    }

    /// Smallest Euclidean distance between a pixel of `self` and one of `other`.
    pub fn distance_to(&self, other: &BinaryMask) -> Option<f64> {
        if self.is_empty() || other.is_empty() {
            return None;
        }
        let dt = other.squared_distance_transform();
        self.bits
            .iter()
            .zip(&dt)
            .filter(|(&b, _)| b)
            .map(|(_, &d)| d)
            .min_by(|a, b| a.total_cmp(b))
            .map(f64::sqrt)
    }
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn distance_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let parabola = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        let mut s = parabola(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Per-pixel crossing-number test, independent of the scanline fill.
    fn point_in_polygon(px: f64, py: f64, v: &[f64]) -> bool {
        let n = v.len() / 2;
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi, xj, yj) = (v[2 * i], v[2 * i + 1], v[2 * j], v[2 * j + 1]);
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn oracle_area(w: usize, h: usize, v: &[f64]) -> usize {
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                if point_in_polygon(x as f64 + 0.5, y as f64 + 0.5, v) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn square_rasterizes_to_its_area() {
        let m = BinaryMask::from_polygons(32, 32, &[vec![2.0, 3.0, 12.0, 3.0, 12.0, 13.0, 2.0, 13.0]]);
        assert_eq!(m.area(), 100);
        assert!(m.get(2, 3) && m.get(11, 12) && !m.get(12, 12));
    }

    #[test]
    fn bow_tie_matches_crossing_oracle() {
        let bow = vec![1.0, 1.0, 21.0, 17.0, 21.0, 1.0, 1.0, 17.0];
        let m = BinaryMask::from_polygons(24, 20, std::slice::from_ref(&bow));
        assert_eq!(m.area(), oracle_area(24, 20, &bow));
        assert!(m.area() > 0);
    }

    #[test]
    fn erosion_of_square_and_line() {
        let sq = BinaryMask::rect(9, 9, 2, 2, 7, 7);
        assert_eq!(sq.erode_cross(), BinaryMask::rect(9, 9, 3, 3, 6, 6));
        let line = BinaryMask::rect(9, 9, 1, 4, 8, 5);
        assert!(line.erode_cross().is_empty());
    }

    #[test]
    fn distance_between_masks() {
        let a = BinaryMask::rect(40, 40, 0, 0, 5, 5);
        let b = BinaryMask::rect(40, 40, 10, 0, 12, 3);
        assert_eq!(a.distance_to(&b), Some(6.0));
        let c = BinaryMask::rect(40, 40, 8, 8, 9, 9);
        assert!((a.distance_to(&c).unwrap() - (32.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(a.distance_to(&a), Some(0.0));
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let m = BinaryMask::from_fn(17, 13, |x, y| (x * 7 + y * 3) % 19 == 0);
        let dt = m.squared_distance_transform();
        for y in 0..13 {
            for x in 0..17 {
                let mut best = f64::INFINITY;
                for yy in 0..13 {
                    for xx in 0..17 {
                        if m.get(xx, yy) {
                            let d = (x as f64 - xx as f64).powi(2) + (y as f64 - yy as f64).powi(2);
                            best = best.min(d);
                        }
                    }
                }
                assert_eq!(dt[y * 17 + x], best);
            }
        }
    }

    proptest! {
        #[test]
        fn polygon_export_round_trips(bits in proptest::collection::vec(any::<bool>(), 12 * 10)) {
            let m = BinaryMask::from_bits(12, 10, bits).unwrap();
            let back = BinaryMask::from_polygons(12, 10, &m.to_polygons());
            prop_assert_eq!(back, m);
        }

        #[test]
        fn rasterization_matches_oracle(pts in proptest::collection::vec((0.0f64..30.0, 0.0f64..30.0), 3..7)) {
            let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
            let m = BinaryMask::from_polygons(30, 30, std::slice::from_ref(&flat));
            prop_assert_eq!(m.area(), oracle_area(30, 30, &flat));
        }
    }
}
