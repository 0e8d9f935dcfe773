//! Bit-exact single-channel image kernels.
//!
//! Windowed operations use odd square windows and replicate edge pixels at
//! the borders, so output dimensions always equal input dimensions.

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("window size {0} must be odd and at least 3")]
    InvalidWindow(usize),
    #[error("window size {k} exceeds raster size {width}x{height}")]
    WindowTooLarge { k: usize, width: usize, height: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Single-channel 8-bit working buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayRaster {
    /// Panics if `data.len() != width * height`.
    pub fn from_parts(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "gray raster data length");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::from_parts(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    fn map(&self, f: impl Fn(u8) -> u8) -> GrayRaster {
        GrayRaster::from_parts(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, other: &GrayRaster, f: impl Fn(u8, u8) -> u8) -> Result<GrayRaster, KernelError> {
        check_same_dims(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(GrayRaster::from_parts(self.width, self.height, data))
    }

    /// 256-bin histogram of sample values.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }
}

fn check_same_dims(a: &GrayRaster, b: &GrayRaster) -> Result<(), KernelError> {
    if a.width != b.width || a.height != b.height {
        return Err(KernelError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

fn check_window(img: &GrayRaster, k: usize) -> Result<(), KernelError> {
    if k < 3 || k % 2 == 0 {
        return Err(KernelError::InvalidWindow(k));
    }
    if k > img.width.min(img.height) {
        return Err(KernelError::WindowTooLarge {
            k,
            width: img.width,
            height: img.height,
        });
    }
    Ok(())
}

/// Median over each `k`×`k` neighborhood.
///
/// Uses a sliding 256-bin histogram along each row, so the cost per pixel is
/// O(k) window updates plus a bounded bin scan.
pub fn median_blur(img: &GrayRaster, k: usize) -> Result<GrayRaster, KernelError> {
    check_window(img, k)?;
    let (w, h) = (img.width, img.height);
    let r = (k / 2) as isize;
    // 1-based rank of the median among k*k samples.
    let rank = (k * k / 2 + 1) as u32;
    let mut out = vec![0u8; w * h];

    // Column indices are clamped once per row sweep.
    let rows_of = |y: usize| -> Vec<usize> {
        (-r..=r)
            .map(|dy| (y as isize + dy).clamp(0, h as isize - 1) as usize)
            .collect()
    };

    for y in 0..h {
        let rows = rows_of(y);
        let mut hist = [0u32; 256];
        for &yy in &rows {
            let row = &img.data[yy * w..(yy + 1) * w];
            for dx in -r..=r {
                let xx = dx.clamp(0, w as isize - 1) as usize;
                hist[row[xx] as usize] += 1;
            }
        }
        out[y * w] = select_rank(&hist, rank);
        for x in 1..w {
            let x_out = (x as isize - r - 1).clamp(0, w as isize - 1) as usize;
            let x_in = (x as isize + r).clamp(0, w as isize - 1) as usize;
            if x_out != x_in {
                for &yy in &rows {
                    let row = &img.data[yy * w..(yy + 1) * w];
                    hist[row[x_out] as usize] -= 1;
                    hist[row[x_in] as usize] += 1;
                }
            }
            out[y * w + x] = select_rank(&hist, rank);
        }
    }
    Ok(GrayRaster::from_parts(w, h, out))
}

/// Median over each `k`×`k` neighborhood counting only pixels where
/// `exclude` is zero. Windows with no eligible pixel fall back to the plain
/// median of the window.
pub fn median_blur_masked(img: &GrayRaster, exclude: &GrayRaster, k: usize) -> Result<GrayRaster, KernelError> {
    check_window(img, k)?;
    check_same_dims(img, exclude)?;
    let (w, h) = (img.width, img.height);
    let r = (k / 2) as isize;
    let full_rank = (k * k / 2 + 1) as u32;
    let mut out = vec![0u8; w * h];
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;

    for y in 0..h {
        let rows: Vec<usize> = (-r..=r)
            .map(|dy| (y as isize + dy).clamp(0, h as isize - 1) as usize)
            .collect();
        let mut all = [0u32; 256];
        let mut kept = [0u32; 256];
        let mut n_kept = 0u32;
        let add = |x: usize, sign: i32, all: &mut [u32; 256], kept: &mut [u32; 256], n_kept: &mut u32| {
            for &yy in &rows {
                let i = yy * w + x;
                let v = img.data[i] as usize;
                let keep = exclude.data[i] == 0;
                if sign > 0 {
                    all[v] += 1;
                    if keep {
                        kept[v] += 1;
                        *n_kept += 1;
                    }
                } else {
                    all[v] -= 1;
                    if keep {
                        kept[v] -= 1;
                        *n_kept -= 1;
                    }
                }
            }
        };
        for dx in -r..=r {
            add(clamp_x(dx), 1, &mut all, &mut kept, &mut n_kept);
        }
        let pick = |all: &[u32; 256], kept: &[u32; 256], n_kept: u32| {
            if n_kept == 0 {
                select_rank(all, full_rank)
            } else {
                select_rank(kept, n_kept / 2 + 1)
            }
        };
        out[y * w] = pick(&all, &kept, n_kept);
        for x in 1..w {
            let x_out = clamp_x(x as isize - r - 1);
            let x_in = clamp_x(x as isize + r);
            if x_out != x_in {
                add(x_out, -1, &mut all, &mut kept, &mut n_kept);
                add(x_in, 1, &mut all, &mut kept, &mut n_kept);
            }
            out[y * w + x] = pick(&all, &kept, n_kept);
        }
    }
    Ok(GrayRaster::from_parts(w, h, out))
}

#[inline]
fn select_rank(hist: &[u32; 256], rank: u32) -> u8 {
    let mut acc = 0u32;
    for (v, &n) in hist.iter().enumerate() {
        acc += n;
        if acc >= rank {
            return v as u8;
        }
    }
    255
}

/// Maximum over each `k`×`k` neighborhood, computed as a row pass followed
/// by a column pass (the square max is separable).
pub fn dilate(img: &GrayRaster, k: usize) -> Result<GrayRaster, KernelError> {
    check_window(img, k)?;
    let (w, h) = (img.width, img.height);
    let r = (k / 2) as isize;
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut m = 0u8;
            for dx in -r..=r {
                m = m.max(img.get_clamped(x as isize + dx, y as isize));
            }
            rows[y * w + x] = m;
        }
    }
    let rows = GrayRaster::from_parts(w, h, rows);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut m = 0u8;
            for dy in -r..=r {
                m = m.max(rows.get_clamped(x as isize, y as isize + dy));
            }
            out[y * w + x] = m;
        }
    }
    Ok(GrayRaster::from_parts(w, h, out))
}

pub fn absdiff(a: &GrayRaster, b: &GrayRaster) -> Result<GrayRaster, KernelError> {
    a.zip(b, |x, y| x.abs_diff(y))
}

/// Stretches values to the full `0..=255` range.
///
/// `out = round(255 * (x - min) / (max - min))`, rounding halves up; a
/// constant raster maps to all zeros.
pub fn minmax_normalize(img: &GrayRaster) -> GrayRaster {
    let min = img.data.iter().copied().min().unwrap_or(0) as u32;
    let max = img.data.iter().copied().max().unwrap_or(0) as u32;
    if max == min {
        return GrayRaster::filled(img.width, img.height, 0);
    }
    let span = max - min;
    img.map(|v| ((2 * 255 * (v as u32 - min) + span) / (2 * span)) as u8)
}

/// Between-class variance of the split `≤ t` / `> t` for each threshold,
/// computed from the histogram. Entries where one class is empty are zero.
pub fn otsu_variance_curve(hist: &[u64; 256]) -> [f64; 256] {
    let total: u64 = hist.iter().sum();
    let sum_all: u64 = hist.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();
    let mut curve = [0f64; 256];
    if total == 0 {
        return curve;
    }
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..256 {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let w0 = n0 as f64 / total as f64;
        let w1 = n1 as f64 / total as f64;
        let mu0 = s0 as f64 / n0 as f64;
        let mu1 = (sum_all - s0) as f64 / n1 as f64;
        curve[t] = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    curve
}

/// Otsu's threshold: the smallest `t` maximizing between-class variance,
/// where pixels `≤ t` form class 0. Constant images return 0.
pub fn otsu_threshold(img: &GrayRaster) -> u8 {
    let curve = otsu_variance_curve(&img.histogram());
    let mut best = 0usize;
    for t in 1..256 {
        if curve[t] > curve[best] {
            best = t;
        }
    }
    best as u8
}

/// Pixels above `t` become 255, the rest 0.
pub fn threshold_binary(img: &GrayRaster, t: u8) -> GrayRaster {
    img.map(|v| if v > t { 255 } else { 0 })
}

/// Pixels above `t` are clamped to `t`.
pub fn threshold_truncate(img: &GrayRaster, t: u8) -> GrayRaster {
    img.map(|v| v.min(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitOp {
    And,
    Or,
    Xor,
    /// Unary; the second operand is ignored.
    Not,
}

pub fn bitwise(a: &GrayRaster, b: &GrayRaster, op: BitOp) -> Result<GrayRaster, KernelError> {
    match op {
        BitOp::Not => Ok(bitwise_not(a)),
        BitOp::And => a.zip(b, |x, y| x & y),
        BitOp::Or => a.zip(b, |x, y| x | y),
        BitOp::Xor => a.zip(b, |x, y| x ^ y),
    }
}

pub fn bitwise_not(a: &GrayRaster) -> GrayRaster {
    a.map(|v| !v)
}

/// Min over the k x k neighborhood, the dual of [`dilate`].
pub fn erode(img: &GrayRaster, k: usize) -> Result<GrayRaster, KernelError> {
    Ok(bitwise_not(&dilate(&bitwise_not(img), k)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(w: usize, h: usize, x: usize, y: usize) -> GrayRaster {
        let mut g = GrayRaster::filled(w, h, 0);
        g.data_mut()[y * w + x] = 255;
        g
    }

    #[test]
    fn median_removes_salt() {
        let g = impulse(7, 7, 3, 3);
        assert_eq!(median_blur(&g, 3).unwrap(), GrayRaster::filled(7, 7, 0));
    }

    #[test]
    fn constant_is_fixed_point() {
        let g = GrayRaster::filled(9, 6, 77);
        assert_eq!(median_blur(&g, 5).unwrap(), g);
        assert_eq!(dilate(&g, 5).unwrap(), g);
    }

    #[test]
    fn dilate_grows_impulse_to_block() {
        let d = dilate(&impulse(7, 7, 3, 3), 3).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&x) && (2..=4).contains(&y);
                assert_eq!(d.get(x, y), if inside { 255 } else { 0 }, "({x},{y})");
            }
        }
    }

    #[test]
    fn window_validation() {
        let g = GrayRaster::filled(8, 8, 0);
        assert_eq!(median_blur(&g, 4), Err(KernelError::InvalidWindow(4)));
        assert_eq!(dilate(&g, 1), Err(KernelError::InvalidWindow(1)));
        assert!(matches!(median_blur(&g, 9), Err(KernelError::WindowTooLarge { k: 9, .. })));
    }

    #[test]
    fn absdiff_cases() {
        let a = GrayRaster::filled(3, 3, 255);
        let b = GrayRaster::filled(3, 3, 0);
        assert_eq!(absdiff(&a, &b).unwrap(), a);
        assert_eq!(absdiff(&a, &a).unwrap(), b);
        let c = GrayRaster::filled(3, 4, 0);
        assert!(matches!(absdiff(&a, &c), Err(KernelError::DimensionMismatch(..))));
    }

    #[test]
    fn normalize_cases() {
        let g = GrayRaster::from_parts(2, 1, vec![0, 255]);
        assert_eq!(minmax_normalize(&g), g);
        assert_eq!(minmax_normalize(&GrayRaster::filled(4, 4, 9)), GrayRaster::filled(4, 4, 0));
        let g = GrayRaster::from_parts(3, 1, vec![50, 100, 150]);
        assert_eq!(minmax_normalize(&g).data(), &[0, 128, 255]);
    }

    #[test]
    fn otsu_degenerate_and_two_level() {
        assert_eq!(otsu_threshold(&GrayRaster::filled(4, 4, 200)), 0);
        let mut data = vec![0u8; 32];
        data[16..].fill(255);
        assert_eq!(otsu_threshold(&GrayRaster::from_parts(8, 4, data)), 0);
    }

    #[test]
    fn thresholds() {
        let g = GrayRaster::from_parts(2, 1, vec![10, 200]);
        assert_eq!(threshold_truncate(&g, 100).data(), &[10, 100]);
        assert_eq!(threshold_truncate(&g, 255), g);
        assert_eq!(threshold_truncate(&g, 0).data(), &[0, 0]);
        assert_eq!(threshold_binary(&g, 255).data(), &[0, 0]);
        let white = GrayRaster::filled(2, 2, 255);
        assert_eq!(threshold_binary(&white, 0), white);
    }

    #[test]
    fn bitwise_identities() {
        let x = GrayRaster::from_parts(4, 1, vec![0, 17, 128, 255]);
        let ones = GrayRaster::filled(4, 1, 255);
        assert_eq!(bitwise(&x, &ones, BitOp::And).unwrap(), x);
        assert_eq!(bitwise_not(&bitwise_not(&x)), x);
        assert_eq!(bitwise(&x, &x, BitOp::Xor).unwrap(), GrayRaster::filled(4, 1, 0));
        assert_eq!(bitwise(&x, &ones, BitOp::Or).unwrap(), ones);
        // NOT ignores the second operand entirely.
        let other = GrayRaster::filled(1, 1, 0);
        assert_eq!(bitwise(&x, &other, BitOp::Not).unwrap().data(), &[255, 238, 127, 0]);
    }
}
