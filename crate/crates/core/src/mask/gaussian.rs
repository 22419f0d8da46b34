/// Normalized 7×7 Gaussian kernel, `kernel[dy + 3][dx + 3]`.
pub fn gaussian_kernel_7x7(sigma: f64) -> [[f64; 7]; 7] {
    let taps = taps(sigma);
    let mut k = [[0.0; 7]; 7];
    for (row, &gy) in k.iter_mut().zip(&taps) {
        for (v, &gx) in row.iter_mut().zip(&taps) {
            *v = gy * gx;
        }
    }
    k
}

/// 1-D factor of the 7×7 kernel; its outer product with itself is the 2-D
/// kernel normalized to unit sum.
fn taps(sigma: f64) -> [f64; 7] {
    assert!(sigma > 0.0, "gaussian sigma must be positive");
    let mut t = [0.0; 7];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - 3.0;
        *v = (-(d * d) / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= sum);
    t
}

/// Convolves a `width × height` row-major field with the 7×7 Gaussian,
/// treating everything outside the grid as zero.
pub fn gaussian_filter_7x7(field: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(field.len(), width * height, "field size");
    let t = taps(sigma);

    let mut horiz = vec![0.0; field.len()];
    for y in 0..height {
        let row = &field[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &w) in t.iter().enumerate() {
                let sx = x as isize + i as isize - 3;
                if sx >= 0 && (sx as usize) < width {
                    acc += w * row[sx as usize];
                }
            }
            horiz[y * width + x] = acc;
        }
    }

    let mut out = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &w) in t.iter().enumerate() {
                let sy = y as isize + i as isize - 3;
                if sy >= 0 && (sy as usize) < height {
                    acc += w * horiz[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}
