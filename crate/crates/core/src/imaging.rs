//! 8-bit raster images, binary PPM/PGM IO, and bilinear resizing.
//!
//! The on-disk format is deliberately minimal: binary P6 (RGB) and P5
//! (grayscale) with maxval 255. Writing is canonical so golden files can be
//! compared byte-for-byte; reading accepts the usual netpbm liberties
//! (comments, runs of whitespace between header tokens).

use crate::error::{ConfigError, FormatError};

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    /// Validated constructor. `data` is row-major, channel-interleaved.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, ConfigError> {
        if height == 0 || width == 0 {
            return Err(ConfigError(format!("image dimensions {height}x{width} must be >= 1")));
        }
        if channels != 1 && channels != 3 {
            return Err(ConfigError(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(ConfigError(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    /// Constant-color image.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Image::new(height, width, channels, vec![value; height * width * channels])
            .expect("filled image dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn sample(&self, y: usize, x: usize, c: usize) -> u8 {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extract a rectangular crop.
    ///
    /// # Panics
    /// Panics if the region exceeds the image bounds.
    pub fn crop(&self, top: usize, left: usize, crop_h: usize, crop_w: usize) -> Image {
        assert!(
            top + crop_h <= self.height && left + crop_w <= self.width,
            "crop ({top},{left},{crop_h},{crop_w}) exceeds {}x{}",
            self.height,
            self.width
        );
        let mut data = Vec::with_capacity(crop_h * crop_w * self.channels);
        for y in top..top + crop_h {
            let start = (y * self.width + left) * self.channels;
            data.extend_from_slice(&self.data[start..start + crop_w * self.channels]);
        }
        Image {
            height: crop_h,
            width: crop_w,
            channels: self.channels,
            data,
        }
    }

    /// Sum of all samples in a rectangular region, across channels.
    /// Used by the pseudo encoder to key features on patch content.
    pub fn region_sum(&self, top: usize, left: usize, region_h: usize, region_w: usize) -> u64 {
        assert!(top + region_h <= self.height && left + region_w <= self.width);
        let mut sum = 0u64;
        for y in top..top + region_h {
            for x in left..left + region_w {
                for c in 0..self.channels {
                    sum += self.sample(y, x, c) as u64;
                }
            }
        }
        sum
    }
}

fn is_ppm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Skip whitespace and `#` comments, advancing `pos`.
fn skip_separators(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if is_ppm_whitespace(bytes[*pos]) {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn read_header_uint(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64, FormatError> {
    skip_separators(bytes, pos);
    let start = *pos;
    let mut value: u64 = 0;
    let mut digits = 0;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((bytes[*pos] - b'0') as u64))
            .ok_or_else(|| FormatError::Header {
                offset: start,
                reason: format!("{what} overflows"),
            })?;
        *pos += 1;
        digits += 1;
    }
    if digits == 0 {
        return Err(FormatError::Header {
            offset: start,
            reason: format!("expected {what}"),
        });
    }
    Ok(value)
}

/// Parse a binary PPM (P6) or PGM (P5) file with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<Image, FormatError> {
    if bytes.len() < 2 {
        return Err(FormatError::BadMagic { offset: 0, expected: "P5 or P6" });
    }
    let channels = match &bytes[..2] {
        b"P6" => 3,
        b"P5" => 1,
        _ => return Err(FormatError::BadMagic { offset: 0, expected: "P5 or P6" }),
    };
    let mut pos = 2;
    let width = read_header_uint(bytes, &mut pos, "width")? as usize;
    let height = read_header_uint(bytes, &mut pos, "height")? as usize;
    if width == 0 || height == 0 {
        return Err(FormatError::Dimensions {
            offset: 2,
            reason: format!("dimensions {width}x{height} must be >= 1"),
        });
    }
    let maxval_at = {
        skip_separators(bytes, &mut pos);
        pos
    };
    let maxval = read_header_uint(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(FormatError::Maxval { offset: maxval_at, maxval });
    }
    // Exactly one whitespace byte between maxval and the raster.
    if pos >= bytes.len() || !is_ppm_whitespace(bytes[pos]) {
        return Err(FormatError::Header {
            offset: pos,
            reason: "expected single whitespace before raster".into(),
        });
    }
    pos += 1;
    let needed = height * width * channels;
    let available = bytes.len() - pos;
    if available < needed {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: needed - available,
        });
    }
    let data = bytes[pos..pos + needed].to_vec();
    Ok(Image { height, width, channels, data })
}

/// Serialize to canonical binary PPM/PGM: `P6\n{w} {h}\n255\n` then samples.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let header = format!("{magic}\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

/// Anisotropic bilinear resize with half-pixel-centered sampling.
///
/// Output values are rounded half-away-from-zero and clamped to [0, 255].
/// Resizing to the source dimensions reproduces the input bit-exactly.
///
/// # Panics
/// Panics if `out_h` or `out_w` is zero.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "resize target must be >= 1");
    let (in_h, in_w, ch) = (img.height, img.width, img.channels);
    let scale_y = in_h as f64 / out_h as f64;
    let scale_x = in_w as f64 / out_w as f64;

    // Precompute per-axis source coordinates.
    let mut ys = Vec::with_capacity(out_h);
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        ys.push((y0, y1, sy - y0 as f64));
    }
    let mut xs = Vec::with_capacity(out_w);
    for ox in 0..out_w {
        let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
        let x0 = sx.floor() as usize;
        let x1 = (x0 + 1).min(in_w - 1);
        xs.push((x0, x1, sx - x0 as f64));
    }

    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let p00 = img.sample(y0, x0, c) as f64;
                let p10 = img.sample(y0, x1, c) as f64;
                let p01 = img.sample(y1, x0, c) as f64;
                let p11 = img.sample(y1, x1, c) as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                let value = top + (bottom - top) * fy;
                data.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image {
        height: out_h,
        width: out_w,
        channels: ch,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn read_p6_header_echo() {
        let mut bytes = b"P6\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[7u8; 18]);
        let img = read_ppm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 3, 3));
    }

    #[test]
    fn read_p5_single_pixel() {
        let bytes = b"P5\n1 1\n255\n\xff".to_vec();
        let img = read_ppm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (1, 1, 1));
        assert_eq!(img.data(), &[255]);
    }

    #[test]
    fn read_accepts_comments_and_extra_whitespace() {
        let mut bytes = b"P5 # a comment\n # another\n  2\t1 \n255 ".to_vec();
        bytes.extend_from_slice(&[1, 2]);
        let img = read_ppm(&bytes).unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert_eq!(img.data(), &[1, 2]);
    }

    #[test]
    fn write_canonical_gray() {
        let img = Image::new(1, 1, 1, vec![0]).unwrap();
        assert_eq!(write_ppm(&img), b"P5\n1 1\n255\n\x00");
    }

    #[test]
    fn write_declares_width_then_height() {
        let img = Image::filled(2, 3, 3, 9);
        let bytes = write_ppm(&img);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let err = read_ppm(b"P4\n1 1\n255\n\x00").unwrap_err();
        assert_eq!(err, FormatError::BadMagic { offset: 0, expected: "P5 or P6" });
    }

    #[test]
    fn unsupported_maxval_is_rejected() {
        let err = read_ppm(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        match err {
            FormatError::Maxval { maxval, .. } => assert_eq!(maxval, 65535),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_missing_bytes() {
        let err = read_ppm(b"P6\n2 2\n255\n\x00\x00\x00").unwrap_err();
        match err {
            FormatError::Truncated { expected, .. } => assert_eq!(expected, 9),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let data: Vec<u8> = (0..36).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::new(3, 4, 3, data).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 4), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(5, 7, 3, 123);
        for (h, w) in [(1, 1), (2, 9), (13, 4), (10, 14)] {
            let out = resize_bilinear(&img, h, w);
            assert!(out.data().iter().all(|&v| v == 123), "{h}x{w}");
        }
    }

    #[test]
    fn checkerboard_upscale_matches_scalar_reference() {
        let img = Image::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let got = resize_bilinear(&img, 4, 4);

        // Independent scalar reference: loop over output pixels, recompute
        // half-pixel sampling from first principles.
        for oy in 0..4usize {
            for ox in 0..4usize {
                let sy = ((oy as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let sx = ((ox as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(1), (x0 + 1).min(1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let px = |y: usize, x: usize| -> f64 { img.sample(y, x, 0) as f64 };
                let want = px(y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + px(y0, x1) * fx * (1.0 - fy)
                    + px(y1, x0) * (1.0 - fx) * fy
                    + px(y1, x1) * fx * fy;
                let want = want.round().clamp(0.0, 255.0) as u8;
                assert_eq!(got.sample(oy, ox, 0), want, "({oy},{ox})");
            }
        }
    }

    #[test]
    fn invalid_channel_count_rejected() {
        assert!(Image::new(1, 1, 2, vec![0, 0]).is_err());
        assert!(Image::new(1, 1, 4, vec![0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn ppm_round_trip_is_bit_exact(
            h in 1usize..9,
            w in 1usize..9,
            rgb in proptest::bool::ANY,
            seed in proptest::num::u64::ANY,
        ) {
            let ch = if rgb { 3 } else { 1 };
            let mut s = seed;
            let data: Vec<u8> = (0..h * w * ch).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) as u8
            }).collect();
            let img = Image::new(h, w, ch, data).unwrap();
            let bytes = write_ppm(&img);
            prop_assert_eq!(read_ppm(&bytes).unwrap(), img.clone());
            // And write(read(x)) == x for canonical files.
            prop_assert_eq!(write_ppm(&read_ppm(&bytes).unwrap()), bytes);
        }

        #[test]
        fn resize_constant_any_target(v in 0u8..=255, h in 1usize..6, w in 1usize..6, oh in 1usize..12, ow in 1usize..12) {
            let img = Image::filled(h, w, 1, v);
            let out = resize_bilinear(&img, oh, ow);
            prop_assert!(out.data().iter().all(|&s| s == v));
        }
    }
}
