//! RGB images with binary PPM (P6) serialization, bilinear resampling and a
//! 3×3 median filter.

use crate::fault::Fault;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    /// Row-major RGB triples.
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, Fault> {
        if width == 0 || height == 0 {
            return Err(Fault::validation("image dimensions must be positive"));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Fault::validation("image dimensions overflow"))?;
        if pixels.len() != expected {
            return Err(Fault::validation(format!(
                "{width}x{height} image needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, Fault> {
        let pixels = rgb.repeat(width.saturating_mul(height));
        Image::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses binary PPM with a maxval of 255. Comments are allowed in the
    /// header.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, Fault> {
        let bad = |why: &str| Fault::validation(format!("malformed PPM: {why}"));
        if !bytes.starts_with(b"P6") {
            return Err(bad("missing P6 magic"));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in &mut fields {
            // whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos || pos - start > 9 {
                return Err(bad("bad header number"));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .expect("ascii digits")
                .parse()
                .map_err(|_| bad("bad header number"))?;
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(bad("header must end with one whitespace byte"));
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        Image::new(width, height, bytes[pos..].to_vec()).map_err(|e| bad(&e.detail))
    }

    /// Bilinear resampling to `new_width`×`new_height`. Source coordinates
    /// are `(d + 0.5)·src/dst − 0.5`, clamped to `[0, src−1]`; each channel is
    /// rounded half-up.
    pub fn magnify(&self, new_width: usize, new_height: usize) -> Result<Image, Fault> {
        if new_width == 0 || new_height == 0 {
            return Err(Fault::validation("target dimensions must be positive"));
        }
        let xs: Vec<_> = (0..new_width).map(|d| sample_coord(d, self.width, new_width)).collect();
        let ys: Vec<_> = (0..new_height).map(|d| sample_coord(d, self.height, new_height)).collect();
        let mut out = Vec::with_capacity(new_width * new_height * 3);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p00 = self.pixel(x0, y0);
                let p10 = self.pixel(x1, y0);
                let p01 = self.pixel(x0, y1);
                let p11 = self.pixel(x1, y1);
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                    let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image::new(new_width, new_height, out)
    }

    /// 3×3 per-channel median with replicated borders.
    pub fn median3(&self) -> Image {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Vec::with_capacity(self.pixels.len());
        let mut window = [0u8; 9];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut k = 0;
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let sx = (x + dx).clamp(0, w - 1) as usize;
                            let sy = (y + dy).clamp(0, h - 1) as usize;
                            window[k] = self.pixel(sx, sy)[c];
                            k += 1;
                        }
                    }
                    window.sort_unstable();
                    out.push(window[4]);
                }
            }
        }
        Image {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }
}

/// Returns the two source indices to blend and the weight of the second.
fn sample_coord(d: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, s - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_row(values: &[u8]) -> Image {
        let pixels = values.iter().flat_map(|&v| [v, v, v]).collect();
        Image::new(values.len(), 1, pixels).unwrap()
    }

    #[test]
    fn one_pixel_magnifies_to_a_constant_field() {
        let img = Image::filled(1, 1, [12, 34, 56]).unwrap();
        let big = img.magnify(3, 3).unwrap();
        assert_eq!(big, Image::filled(3, 3, [12, 34, 56]).unwrap());
    }

    #[test]
    fn same_size_is_identity() {
        let img = Image::new(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        assert_eq!(img.magnify(2, 2).unwrap(), img);
    }

    #[test]
    fn two_to_four_gray_row() {
        // Hand evaluation: s = (d+0.5)/2 - 0.5 -> -0.25, 0.25, 0.75, 1.25;
        // clamped blends give 0, 63.75, 191.25, 255.
        let out = gray_row(&[0, 255]).magnify(4, 1).unwrap();
        let got: Vec<u8> = (0..4).map(|x| out.pixel(x, 0)[0]).collect();
        assert_eq!(got, vec![0, 64, 191, 255]);
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let img = Image::filled(1, 1, [0, 0, 0]).unwrap();
        assert!(img.magnify(0, 3).is_err());
        assert!(Image::new(0, 1, vec![]).is_err());
        assert!(Image::new(1, 1, vec![0, 0]).is_err());
    }

    #[test]
    fn median_of_constant_is_unchanged() {
        let img = Image::filled(4, 3, [9, 8, 7]).unwrap();
        assert_eq!(img.median3(), img);
    }

    #[test]
    fn median_removes_a_lone_spike() {
        let mut pixels = vec![0u8; 27];
        pixels[12..15].copy_from_slice(&[255, 255, 255]);
        let img = Image::new(3, 3, pixels).unwrap();
        assert_eq!(img.median3().pixel(1, 1), [0, 0, 0]);
    }

    #[test]
    fn ppm_round_trip_and_errors() {
        let img = Image::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let ppm = img.to_ppm();
        assert_eq!(&ppm[..11], b"P6\n2 1\n255\n");
        assert_eq!(Image::from_ppm(&ppm).unwrap(), img);
        let commented = b"P6 # made by hand\n2 1\n255\n\x01\x02\x03\x04\x05\x06";
        assert_eq!(Image::from_ppm(commented).unwrap(), img);
        assert!(Image::from_ppm(b"").is_err());
        assert!(Image::from_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(Image::from_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(Image::from_ppm(&ppm[..ppm.len() - 1]).is_err());
    }
}
