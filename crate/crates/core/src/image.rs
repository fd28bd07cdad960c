//! Images with intensities in `[0, 1]`, and luma conversion.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// A gray (1 channel) or RGB (3 channel) image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Tensor<f64>,
}

impl Image {
    /// Planar `(c, h, w)` data; every value must lie in `[0, 1]`.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(Shape::new(1, channels, height, width), data)?)
    }

    pub fn from_tensor(pixels: Tensor<f64>) -> Result<Self> {
        let s = pixels.shape();
        if s.n != 1 {
            return Err(Error::Shape(format!("an image is a single sample, got batch of {}", s.n)));
        }
        if s.c != 1 && s.c != 3 {
            return Err(Error::InvalidArgument(format!("images have 1 or 3 channels, got {}", s.c)));
        }
        if s.h == 0 || s.w == 0 {
            return Err(Error::Shape("image has no pixels".into()));
        }
        if let Some(v) = pixels.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Image { pixels })
    }

    /// Clamps each value of a single-sample tensor into `[0, 1]`.
    pub fn from_tensor_clamped<T: Real>(t: &Tensor<T>) -> Result<Self> {
        t.check_finite("Image::from_tensor_clamped")?;
        Self::from_tensor(t.map(|v| v.max(T::zero()).min(T::one())).cast())
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape().c
    }

    pub fn height(&self) -> usize {
        self.pixels.shape().h
    }

    pub fn width(&self) -> usize {
        self.pixels.shape().w
    }

    pub fn tensor(&self) -> &Tensor<f64> {
        &self.pixels
    }

    pub fn into_tensor(self) -> Tensor<f64> {
        self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.pixels.get(0, c, y, x)
    }

    /// Rounds every value to the nearest of the 256 8-bit levels.
    pub fn quantized(&self) -> Image {
        Image { pixels: self.pixels.map(|v| (v * 255.0).round() / 255.0) }
    }

    /// Copy of the `size × size` window with top-left corner `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, height: usize, width: usize) -> Result<Image> {
        if y + height > self.height() || x + width > self.width() {
            return Err(Error::Shape(format!(
                "window {height}x{width} at ({y}, {x}) exceeds {}x{} image",
                self.height(),
                self.width()
            )));
        }
        let pixels = Tensor::from_fn(Shape::new(1, self.channels(), height, width), |_, c, i, j| {
            self.get(c, y + i, x + j)
        });
        Ok(Image { pixels })
    }
}

/// Luma weights for RGB to gray conversion.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Converts an RGB image to one gray channel.
pub fn to_gray(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(format!("to_gray expects 3 channels, got {}", img.channels())));
    }
    let (h, w) = (img.height(), img.width());
    let t = img.tensor();
    let data = (0..h * w)
        .map(|i| {
            let v: f64 = (0..3).map(|c| LUMA[c] * t.plane(0, c)[i]).sum();
            v.clamp(0.0, 1.0)
        })
        .collect();
    Image::new(1, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_conversion() {
        let white = Image::constant(3, 2, 2, 1.0).unwrap();
        assert!(to_gray(&white).unwrap().tensor().as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let green = Image::new(3, 1, 1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(to_gray(&green).unwrap().get(0, 0, 0), 0.587);
        let gray = Image::constant(1, 2, 2, 0.5).unwrap();
        assert!(matches!(to_gray(&gray), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn range_is_enforced() {
        assert!(Image::new(1, 1, 2, vec![0.0, 1.01]).is_err());
        assert!(Image::new(2, 1, 1, vec![0.0, 1.0]).is_err());
        let t = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(Image::from_tensor_clamped(&t).unwrap().tensor().as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn crop_copies_window() {
        let img = Image::new(1, 3, 3, (0..9).map(|v| v as f64 / 10.0).collect()).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.tensor().as_slice(), &[0.4, 0.5, 0.7, 0.8]);
        assert!(img.crop(2, 2, 2, 2).is_err());
    }
}
