//! RGB byte images, bilinear resize and PNG/PPM I/O.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Side length of the network input.
pub const NET_INPUT: usize = 32;

/// Provenance carried alongside the pixels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageMeta {
    pub source: String,
    /// `(height, width)` before resizing to the network input.
    pub pre_resize: (usize, usize),
}

/// Row-major interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpmfImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub meta: ImageMeta,
}

impl SpmfImage {
    pub fn new(height: usize, width: usize) -> Self {
        SpmfImage {
            height,
            width,
            pixels: vec![0; height * width * 3],
            meta: ImageMeta {
                source: String::new(),
                pre_resize: (height, width),
            },
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{} bytes for a {height}x{width} RGB image",
                pixels.len()
            )));
        }
        Ok(SpmfImage {
            height,
            width,
            pixels,
            meta: ImageMeta {
                source: String::new(),
                pre_resize: (height, width),
            },
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// One color plane as a row-major byte matrix.
    pub fn channel(&self, c: usize) -> Vec<u8> {
        self.pixels.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn set_channel(&mut self, c: usize, plane: &[u8]) {
        for (dst, &v) in self.pixels.iter_mut().skip(c).step_by(3).zip(plane) {
            *dst = v;
        }
    }

    pub fn is_network_input(&self) -> bool {
        self.height == NET_INPUT && self.width == NET_INPUT
    }

    /// Bilinear resize with half-pixel centres, computed in float and
    /// rounded half-up.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> SpmfImage {
        let src_coord = |dst: usize, in_len: usize, out_len: usize| -> (usize, usize, f64) {
            let s = ((dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5)
                .clamp(0.0, (in_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, s - i0 as f64)
        };
        let mut out = SpmfImage::new(out_h, out_w);
        for y in 0..out_h {
            let (y0, y1, fy) = src_coord(y, self.height, out_h);
            for x in 0..out_w {
                let (x0, x1, fx) = src_coord(x, self.width, out_w);
                let (p00, p01, p10, p11) = (self.get(y0, x0), self.get(y0, x1), self.get(y1, x0), self.get(y1, x1));
                let mut rgb = [0u8; 3];
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                    let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    rgb[c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
                }
                out.set(y, x, rgb);
            }
        }
        out.meta = ImageMeta {
            source: self.meta.source.clone(),
            pre_resize: self.meta.pre_resize,
        };
        out
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| Error::Shape("pixel buffer does not match dimensions".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let mut out = SpmfImage::from_pixels(h as usize, w as usize, img.into_raw())?;
        out.meta.source = path.to_string_lossy().into_owned();
        Ok(out)
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Malformed {
            path: "<ppm>".into(),
            msg: msg.into(),
        };
        // header: magic, width, height, maxval separated by whitespace
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("only 8-bit P6 is supported"));
        }
        let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
        let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
        if data.len() != w * h * 3 {
            return Err(bad("pixel data length does not match header"));
        }
        SpmfImage::from_pixels(h, w, data.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_and_constant() {
        let mut img = SpmfImage::new(4, 5);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = (i * 7 % 256) as u8;
        }
        assert_eq!(img.resize_bilinear(4, 5).pixels, img.pixels);
        let c = SpmfImage::from_pixels(380, 19, vec![77; 380 * 19 * 3]).unwrap();
        let r = c.resize_bilinear(32, 32);
        assert!(r.pixels.iter().all(|&v| v == 77));
        assert_eq!(r.meta.pre_resize, (380, 19));
    }

    #[test]
    fn resize_upsamples_with_half_up_rounding() {
        // 1x2 -> 1x4: source coords -0.25, 0.25, 0.75, 1.25 -> clamped 0, 0.25, 0.75, 1
        let img = SpmfImage::from_pixels(1, 2, vec![0, 0, 0, 10, 10, 10]).unwrap();
        let r = img.resize_bilinear(1, 4);
        assert_eq!(r.channel(0), vec![0, 3, 8, 10]);
    }

    #[test]
    fn ppm_round_trip() {
        let img = SpmfImage::from_pixels(2, 3, (0..18).collect()).unwrap();
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(SpmfImage::from_ppm(&ppm).unwrap().pixels, img.pixels);
        assert!(SpmfImage::from_ppm(b"P6\n3 2\n255\n\x00").is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = SpmfImage::from_pixels(3, 2, (0..18).map(|v| v * 13).collect()).unwrap();
        img.write_png(&p).unwrap();
        assert_eq!(SpmfImage::read_png(&p).unwrap().pixels, img.pixels);
    }
}
