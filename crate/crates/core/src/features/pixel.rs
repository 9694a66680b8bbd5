//! Raw-pixel feature vectors: center crop to a square, bilinear resize,
//! row-major channel-last flatten.

use std::path::Path;

use crate::error::{Error, Result};

/// Edge length of the square images fed to the featurizer.
pub const DEFAULT_SIDE: u32 = 227;

/// 8-bit RGB image, row-major with the channel as the last axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTensor {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageTensor {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidData(format!("zero-sized image {width}x{height}")));
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidData(format!(
                "{} bytes do not form a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(ImageTensor { width, height, data })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Largest centered square. An axis with excess `E` loses `⌊E/2⌋` leading
    /// and `⌈E/2⌉` trailing lines.
    pub fn center_crop(&self) -> ImageTensor {
        let side = self.width.min(self.height);
        let x0 = (self.width - side) / 2;
        let y0 = (self.height - side) / 2;
        let mut data = Vec::with_capacity(side as usize * side as usize * 3);
        let stride = self.width as usize * 3;
        for y in y0..y0 + side {
            let start = y as usize * stride + x0 as usize * 3;
            data.extend_from_slice(&self.data[start..start + side as usize * 3]);
        }
        ImageTensor {
            width: side,
            height: side,
            data,
        }
    }
}

/// Source coordinate and weight for each destination index (half-pixel centers).
fn sample_grid(src: u32, dst: u32) -> Vec<(usize, usize, f64)> {
    let scale = f64::from(src) / f64::from(dst);
    let last = src as usize - 1;
    (0..dst)
        .map(|i| {
            let pos = ((f64::from(i) + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(last);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resize to `width × height`, returning real-valued samples in `[0, 255]`.
pub fn resize_bilinear(img: &ImageTensor, width: u32, height: u32) -> Vec<f64> {
    let xs = sample_grid(img.width, width);
    let ys = sample_grid(img.height, height);
    let src = |x: usize, y: usize, c: usize| f64::from(img.data[(y * img.width as usize + x) * 3 + c]);
    let mut out = Vec::with_capacity(width as usize * height as usize * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = src(x0, y0, c) * (1.0 - fx) + src(x1, y0, c) * fx;
                let bottom = src(x0, y1, c) * (1.0 - fx) + src(x1, y1, c) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// Center crop, resize to `side × side`, flatten to `side²·3` values.
pub fn pixel_features(img: &ImageTensor, side: u32) -> Result<Vec<f64>> {
    if side == 0 {
        return Err(Error::InvalidArgument("output side must be positive".into()));
    }
    Ok(resize_bilinear(&img.center_crop(), side, side))
}
