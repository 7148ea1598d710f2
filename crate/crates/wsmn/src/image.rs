//! Image storage, color handling, and block partitioning.
//!
//! Pixels are stored as 8-bit samples and promoted to `f64` planes for all
//! frequency-domain work. The final save path rounds half away from zero and
//! clamps to `[0, 255]`.

use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster, grayscale (`channels == 1`) or RGB (`channels == 3`),
/// interleaved row-major samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadDimensions("zero-dimension image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::BadDimensions(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::CorruptInput(format!(
                "sample count {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// Sample at (row, col, channel).
    pub fn at(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Grayscale view as a float plane. Errors on color input.
    pub fn to_plane(&self) -> Result<Plane> {
        if !self.is_gray() {
            return Err(Error::BadDimensions(
                "to_plane requires a grayscale image".into(),
            ));
        }
        Ok(Plane {
            rows: self.height,
            cols: self.width,
            data: self.data.iter().map(|&v| v as f64).collect(),
        })
    }

    /// Builds a grayscale image from a float plane, rounding half away from
    /// zero and clamping to [0, 255].
    pub fn from_plane(plane: &Plane) -> Self {
        Self {
            width: plane.cols,
            height: plane.rows,
            channels: 1,
            data: plane.data.iter().map(|&v| quantize_u8(v)).collect(),
        }
    }
}

/// Rounds half away from zero and clamps to the 8-bit range.
pub fn quantize_u8(v: f64) -> u8 {
    let r = round_half_away(v);
    r.clamp(0.0, 255.0) as u8
}

/// `round()` in Rust already rounds half away from zero; named wrapper so the
/// convention is explicit at call sites that depend on it.
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Row-major `f64` working plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn same_shape(&self, other: &Plane) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean of an m-by-m block with top-left corner at (r0, c0).
    pub fn block_mean(&self, r0: usize, c0: usize, side: usize) -> f64 {
        let mut s = 0.0;
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                s += self.at(r, c);
            }
        }
        s / (side * side) as f64
    }

    /// Population standard deviation of an m-by-m block.
    pub fn block_std(&self, r0: usize, c0: usize, side: usize) -> f64 {
        let mean = self.block_mean(r0, c0, side);
        let mut s = 0.0;
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                let d = self.at(r, c) - mean;
                s += d * d;
            }
        }
        (s / (side * side) as f64).sqrt()
    }
}

/// Luminance/chrominance planes from the reversible YCoCg-R lifting.
///
/// The lifting is integer-exact, so a round trip with untouched planes
/// reproduces the RGB input bit for bit. Watermarking modifies Y only.
#[derive(Debug, Clone)]
pub struct ColorPlanes {
    pub y: Plane,
    pub co: Plane,
    pub cg: Plane,
}

/// Forward YCoCg-R lifting. Errors on grayscale input.
pub fn to_ycocg(img: &Image) -> Result<ColorPlanes> {
    if img.channels != 3 {
        return Err(Error::BadDimensions(
            "to_ycocg requires a 3-channel image".into(),
        ));
    }
    let n = img.width * img.height;
    let mut y = Vec::with_capacity(n);
    let mut co = Vec::with_capacity(n);
    let mut cg = Vec::with_capacity(n);
    for px in img.data.chunks_exact(3) {
        let (r, g, b) = (px[0] as i32, px[1] as i32, px[2] as i32);
        let vco = r - b;
        let t = b + (vco >> 1);
        let vcg = g - t;
        let vy = t + (vcg >> 1);
        y.push(vy as f64);
        co.push(vco as f64);
        cg.push(vcg as f64);
    }
    let shape = |data| Plane {
        rows: img.height,
        cols: img.width,
        data,
    };
    Ok(ColorPlanes {
        y: shape(y),
        co: shape(co),
        cg: shape(cg),
    })
}

/// Inverse YCoCg-R lifting; channels are clamped to [0, 255] on output.
pub fn from_ycocg(planes: &ColorPlanes) -> Result<Image> {
    if !planes.y.same_shape(&planes.co) || !planes.y.same_shape(&planes.cg) {
        return Err(Error::ShapeMismatch("YCoCg planes differ in size".into()));
    }
    let mut data = Vec::with_capacity(planes.y.data.len() * 3);
    for i in 0..planes.y.data.len() {
        let vy = round_half_away(planes.y.data[i]) as i32;
        let vco = round_half_away(planes.co.data[i]) as i32;
        let vcg = round_half_away(planes.cg.data[i]) as i32;
        let t = vy - (vcg >> 1);
        let g = vcg + t;
        let b = t - (vco >> 1);
        let r = b + vco;
        data.push(r.clamp(0, 255) as u8);
        data.push(g.clamp(0, 255) as u8);
        data.push(b.clamp(0, 255) as u8);
    }
    Image::new(planes.y.cols, planes.y.rows, 3, data)
}

/// Luminance plane of any image: Y of YCoCg-R for color, the single channel
/// for grayscale.
pub fn luminance(img: &Image) -> Result<Plane> {
    if img.is_gray() {
        img.to_plane()
    } else {
        Ok(to_ycocg(img)?.y)
    }
}

/// Non-overlapping m-by-m block layout over a plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub side: usize,
    pub block_rows: usize,
    pub block_cols: usize,
}

impl BlockGrid {
    pub fn total(&self) -> usize {
        self.block_rows * self.block_cols
    }

    /// Top-left pixel of block (i, j).
    pub fn origin(&self, i: usize, j: usize) -> (usize, usize) {
        (i * self.side, j * self.side)
    }
}

/// Splits an image of `rows x cols` into m-by-m blocks; errors when m does
/// not divide both dimensions.
pub fn partition(rows: usize, cols: usize, side: usize) -> Result<BlockGrid> {
    if side == 0 || rows % side != 0 || cols % side != 0 {
        return Err(Error::BadDimensions(format!(
            "block side {side} does not divide {rows}x{cols}"
        )));
    }
    Ok(BlockGrid {
        side,
        block_rows: rows / side,
        block_cols: cols / side,
    })
}

// ---------------------------------------------------------------------------
// File I/O: PGM (P5), PPM (P6), PNG 8-bit.
// ---------------------------------------------------------------------------

/// Loads PGM/PPM/PNG by extension sniffing on the magic bytes.
pub fn load_image(path: &Path) -> Result<Image> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if bytes.len() >= 2 && (&bytes[..2] == b"P5" || &bytes[..2] == b"P6") {
        return decode_pnm(&bytes);
    }
    if bytes.len() >= 8 && bytes[..8] == [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a] {
        return decode_png(&bytes);
    }
    Err(Error::UnsupportedFormat(format!(
        "{} is not PGM (P5), PPM (P6), or PNG",
        path.display()
    )))
}

/// Saves by extension: `.pgm`/`.ppm` binary PNM, `.png` otherwise.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let bytes = match ext.as_str() {
        "pgm" | "ppm" => encode_pnm(img)?,
        _ => encode_png(img)?,
    };
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = if &bytes[..2] == b"P5" { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments between header fields
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptInput("truncated PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptInput("bad PNM header field".into()))?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PNM maxval {maxval}, only 255 supported"
        )));
    }
    // exactly one whitespace byte separates header from samples
    pos += 1;
    let need = width * height * channels;
    if pos + need > bytes.len() {
        return Err(Error::CorruptInput("truncated PNM sample data".into()));
    }
    Image::new(width, height, channels, bytes[pos..pos + need].to_vec())
}

fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = Vec::with_capacity(img.data.len() + 32);
    out.write_all(format!("{magic}\n{} {}\n255\n", img.width, img.height).as_bytes())
        .expect("vec write");
    out.extend_from_slice(&img.data);
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptInput(format!("PNG decode failed: {e}")))?;
    dynamic_to_image(decoded)
}

pub(crate) fn dynamic_to_image(decoded: image::DynamicImage) -> Result<Image> {
    match decoded {
        image::DynamicImage::ImageLuma8(g) => {
            Image::new(g.width() as usize, g.height() as usize, 1, g.into_raw())
        }
        image::DynamicImage::ImageRgb8(c) => {
            Image::new(c.width() as usize, c.height() as usize, 3, c.into_raw())
        }
        other => {
            // normalize palettes / alpha variants to RGB8
            let c = other.to_rgb8();
            Image::new(c.width() as usize, c.height() as usize, 3, c.into_raw())
        }
    }
}

pub(crate) fn image_to_dynamic(img: &Image) -> image::DynamicImage {
    if img.channels == 1 {
        let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("buffer sized by construction");
        image::DynamicImage::ImageLuma8(buf)
    } else {
        let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("buffer sized by construction");
        image::DynamicImage::ImageRgb8(buf)
    }
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    image_to_dynamic(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptInput(format!("PNG encode failed: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gray_pixel_maps_to_zero_chroma() {
        let img = Image::new(1, 1, 3, vec![97, 97, 97]).unwrap();
        let planes = to_ycocg(&img).unwrap();
        assert_eq!(planes.y.data[0], 97.0);
        assert_eq!(planes.co.data[0], 0.0);
        assert_eq!(planes.cg.data[0], 0.0);
    }

    #[test]
    fn to_ycocg_rejects_grayscale() {
        let img = Image::new(2, 2, 1, vec![0; 4]).unwrap();
        assert!(to_ycocg(&img).is_err());
    }

    #[test]
    fn partition_counts_blocks() {
        let g = partition(512, 512, 8).unwrap();
        assert_eq!((g.block_rows, g.block_cols), (64, 64));
        assert_eq!(g.total(), 4096);
        assert_eq!(partition(16, 16, 8).unwrap().total(), 4);
        assert!(partition(510, 512, 8).is_err());
    }

    #[test]
    fn pnm_round_trip_and_truncation() {
        let img = Image::new(3, 2, 1, vec![0, 50, 100, 150, 200, 255]).unwrap();
        let bytes = encode_pnm(&img).unwrap();
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(img, back);
        let err = decode_pnm(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(err.to_string().contains("corrupt input"), "{err}");
    }

    #[test]
    fn png_round_trip_rgb() {
        let img = Image::new(4, 3, 3, (0..36).map(|v| (v * 7) as u8).collect()).unwrap();
        let bytes = encode_png(&img).unwrap();
        let back = decode_png(&bytes).unwrap();
        assert_eq!(img, back);
    }

    proptest! {
        #[test]
        fn ycocg_round_trip_is_exact(pixels in proptest::collection::vec(0u8..=255, 48)) {
            let img = Image::new(4, 4, 3, pixels).unwrap();
            let back = from_ycocg(&to_ycocg(&img).unwrap()).unwrap();
            prop_assert_eq!(img, back);
        }

        #[test]
        fn quantize_u8_rounds_half_away(v in -300.0f64..600.0) {
            let q = quantize_u8(v);
            let expect = v.round().clamp(0.0, 255.0) as u8;
            prop_assert_eq!(q, expect);
        }
    }
}
