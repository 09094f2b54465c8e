use super::palette::Rgb;

/// Pixels above a tenth of the image maximum.
pub fn foreground_mask(gray: &[f32]) -> Vec<bool> {
    let max = gray.iter().copied().fold(0.0f32, f32::max);
    gray.iter().map(|&p| max > 0.0 && p > 0.1 * max).collect()
}

/// Planar RGB `(3, H, W)` in `[0, 1]`: foreground pixels get `fg`, the rest `bg`.
pub fn colorize(gray: &[f32], fg: Rgb, bg: Rgb) -> Vec<f32> {
    let mask = foreground_mask(gray);
    let n = gray.len();
    let mut out = vec![0f32; 3 * n];
    for (i, &m) in mask.iter().enumerate() {
        let c = if m { fg } else { bg };
        for ch in 0..3 {
            out[ch * n + i] = c[ch] as f32 / 255.0;
        }
    }
    out
}

/// Rotate a square grayscale image counter-clockwise by `degrees` about its
/// center with bilinear interpolation; samples outside are zero.
pub fn rotate(gray: &[f32], side: usize, degrees: f64) -> Vec<f32> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (side as f64 - 1.0) / 2.0;
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= side as i64 || y >= side as i64 {
            0.0
        } else {
            gray[y as usize * side + x as usize] as f64
        }
    };
    let mut out = vec![0f32; side * side];
    for y in 0..side {
        for x in 0..side {
            // image y grows downwards, so a counter-clockwise turn on screen
            // maps output (dx, dy) back through the inverse rotation
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            let sx = cos * dx - sin * dy + c;
            let sy = sin * dx + cos * dy + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + at(x0 + 1, y0) * fx * (1.0 - fy)
                + at(x0, y0 + 1) * (1.0 - fx) * fy
                + at(x0 + 1, y0 + 1) * fx * fy;
            out[y * side + x] = v as f32;
        }
    }
    out
}

/// Bilinear resample of planar `(channels, h, w)` data to `side × side`.
pub fn resize(data: &[f32], channels: usize, h: usize, w: usize, side: usize) -> Vec<f32> {
    if h == side && w == side {
        return data.to_vec();
    }
    let mut out = vec![0f32; channels * side * side];
    let sy = h as f64 / side as f64;
    let sx = w as f64 / side as f64;
    for ch in 0..channels {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..side {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let ty = fy - y0 as f64;
            for x in 0..side {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let tx = fx - x0 as f64;
                let p = |yy: usize, xx: usize| plane[yy * w + xx] as f64;
                let v = p(y0, x0) * (1.0 - tx) * (1.0 - ty)
                    + p(y0, x1) * tx * (1.0 - ty)
                    + p(y1, x0) * (1.0 - tx) * ty
                    + p(y1, x1) * tx * ty;
                out[ch * side * side + y * side + x] = v as f32;
            }
        }
    }
    out
}

/// Round to 8-bit levels, the precision stored on disk.
pub fn quantize(data: &[f32]) -> Vec<u8> {
    data.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn dequantize(data: &[u8]) -> Vec<f32> {
    data.iter().map(|&p| p as f32 / 255.0).collect()
}
