//! Deterministic supersampled coverage: every pixel holds a fixed 4x4 grid of
//! sample points at `(i + 0.5) / 4`. Shapes mark samples; coverage is the
//! count of marked samples (0..=16).

/// Samples per pixel along each axis.
pub const SUBSAMPLES: usize = 4;

pub type Contour = Vec<(f64, f64)>;

/// Sample bitmap over the pixel box `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone)]
pub struct CoverageMask {
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl CoverageMask {
    pub fn new(x0: i64, y0: i64, width: usize, height: usize) -> Self {
        CoverageMask { x0, y0, width, height, bits: vec![false; width * height * SUBSAMPLES * SUBSAMPLES] }
    }

    fn cols(&self) -> usize {
        self.width * SUBSAMPLES
    }

    fn rows(&self) -> usize {
        self.height * SUBSAMPLES
    }

    #[inline]
    fn sample_x(&self, i: usize) -> f64 {
        self.x0 as f64 + (i as f64 + 0.5) / SUBSAMPLES as f64
    }

    #[inline]
    fn sample_y(&self, j: usize) -> f64 {
        self.y0 as f64 + (j as f64 + 0.5) / SUBSAMPLES as f64
    }

    /// Index range of samples whose coordinate lies in `[lo, hi)` along one axis.
    fn span(origin: i64, lo: f64, hi: f64, n: usize) -> (usize, usize) {
        let s = SUBSAMPLES as f64;
        let first = ((lo - origin as f64) * s - 0.5).ceil().max(0.0);
        let last = ((hi - origin as f64) * s - 0.5).ceil().max(0.0);
        (first.min(n as f64) as usize, last.min(n as f64) as usize)
    }

    /// Inclusive-range variant for distance tests: samples with coordinate in `[lo, hi]`.
    fn span_inclusive(origin: i64, lo: f64, hi: f64, n: usize) -> (usize, usize) {
        let s = SUBSAMPLES as f64;
        let first = ((lo - origin as f64) * s - 0.5).ceil().max(0.0);
        let last = ((hi - origin as f64) * s - 0.5).floor() + 1.0;
        (first.min(n as f64) as usize, last.clamp(0.0, n as f64) as usize)
    }

    /// Marks samples inside the polygon under the nonzero winding rule.
    pub fn fill(&mut self, contours: &[Contour]) {
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for p in contours.iter().flatten() {
            ymin = ymin.min(p.1);
            ymax = ymax.max(p.1);
        }
        if !(ymin < ymax) {
            return;
        }
        let (j0, j1) = Self::span(self.y0, ymin, ymax, self.rows());
        let cols = self.cols();
        let mut crossings: Vec<(f64, i32)> = Vec::new();
        for j in j0..j1 {
            let ys = self.sample_y(j);
            crossings.clear();
            for c in contours {
                let n = c.len();
                for k in 0..n {
                    let (p, q) = (c[k], c[(k + 1) % n]);
                    let dir = if p.1 <= ys && q.1 > ys {
                        1
                    } else if q.1 <= ys && p.1 > ys {
                        -1
                    } else {
                        continue;
                    };
                    let x = p.0 + (ys - p.1) * (q.0 - p.0) / (q.1 - p.1);
                    crossings.push((x, dir));
                }
            }
            crossings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut winding = 0;
            let mut start = 0.0;
            for &(x, dir) in &crossings {
                let before = winding;
                winding += dir;
                if before == 0 && winding != 0 {
                    start = x;
                } else if before != 0 && winding == 0 {
                    let (i0, i1) = Self::span(self.x0, start, x, cols);
                    let row = j * cols;
                    self.bits[row + i0..row + i1].fill(true);
                }
            }
        }
    }

    /// Marks samples within `radius` of any edge of the closed contours.
    pub fn stroke(&mut self, contours: &[Contour], radius: f64) {
        if !(radius > 0.0) {
            return;
        }
        for c in contours {
            let n = c.len();
            if n == 0 {
                continue;
            }
            for k in 0..n {
                self.mark_segment(c[k], c[(k + 1) % n], radius);
            }
        }
    }

    fn mark_segment(&mut self, a: (f64, f64), b: (f64, f64), r: f64) {
        let (cols, rows) = (self.cols(), self.rows());
        let (i0, i1) = Self::span_inclusive(self.x0, a.0.min(b.0) - r, a.0.max(b.0) + r, cols);
        let (j0, j1) = Self::span_inclusive(self.y0, a.1.min(b.1) - r, a.1.max(b.1) + r, rows);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let r2 = r * r;
        for j in j0..j1 {
            let y = self.sample_y(j);
            for i in i0..i1 {
                let x = self.sample_x(i);
                let t = if len2 > 0.0 { (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (ex, ey) = (a.0 + t * dx - x, a.1 + t * dy - y);
                if ex * ex + ey * ey <= r2 {
                    self.bits[j * cols + i] = true;
                }
            }
        }
    }

    /// Marked sample count of pixel `(px, py)`, relative to the mask origin.
    pub fn coverage(&self, px: usize, py: usize) -> u32 {
        let cols = self.cols();
        let mut n = 0;
        for sj in 0..SUBSAMPLES {
            let row = (py * SUBSAMPLES + sj) * cols + px * SUBSAMPLES;
            n += self.bits[row..row + SUBSAMPLES].iter().filter(|b| **b).count() as u32;
        }
        n
    }

    pub fn union_with(&mut self, other: &CoverageMask) {
        assert_eq!((self.x0, self.y0, self.width, self.height), (other.x0, other.y0, other.width, other.height));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }
}

/// Flattens quadratic and cubic curves into polylines within a fixed pixel
/// tolerance. `scale` converts input units to pixels.
pub struct Flattener {
    scale: f64,
    tolerance: f64,
}

impl Flattener {
    pub fn new(scale: f64) -> Self {
        Flattener { scale: scale.abs(), tolerance: 0.1 }
    }

    fn steps(&self, second_diff: f64) -> usize {
        // chord error of a uniform split is bounded by |B''| / (8 n^2)
        let n = (second_diff * self.scale / (8.0 * self.tolerance)).sqrt().ceil();
        (n as usize).clamp(1, 100)
    }

    pub fn quad(&self, out: &mut Contour, p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) {
        let dd = 2.0 * ((p0.0 - 2.0 * p1.0 + p2.0).hypot(p0.1 - 2.0 * p1.1 + p2.1));
        let n = self.steps(dd);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let mt = 1.0 - t;
            out.push((
                mt * mt * p0.0 + 2.0 * mt * t * p1.0 + t * t * p2.0,
                mt * mt * p0.1 + 2.0 * mt * t * p1.1 + t * t * p2.1,
            ));
        }
    }

    pub fn cubic(&self, out: &mut Contour, p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) {
        let d1 = (p0.0 - 2.0 * p1.0 + p2.0).hypot(p0.1 - 2.0 * p1.1 + p2.1);
        let d2 = (p1.0 - 2.0 * p2.0 + p3.0).hypot(p1.1 - 2.0 * p2.1 + p3.1);
        let n = self.steps(6.0 * d1.max(d2));
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let mt = 1.0 - t;
            let (a, b, c, d) = (mt * mt * mt, 3.0 * mt * mt * t, 3.0 * mt * t * t, t * t * t);
            out.push((
                a * p0.0 + b * p1.0 + c * p2.0 + d * p3.0,
                a * p0.1 + b * p1.1 + c * p2.1 + d * p3.1,
            ));
        }
    }
}
