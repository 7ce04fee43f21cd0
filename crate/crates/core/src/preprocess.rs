//! Image decoding, bilinear resizing, rescaling and training-time augmentation.
//!
//! Images are `[H, W, 3]` tensors in RGB order. Decoded pixels are in
//! `[0, 255]`; after [`rescale`] they lie in `[0, 1]`.

use std::path::Path;

use image::ImageReader;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// An `[H, W, 3]` image tensor.
pub type ImageTensor = Tensor<f32>;

fn dims(img: &ImageTensor) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Argument(format!(
            "image must be HxWxC, got {:?}",
            img.shape()
        ))),
    }
}

/// Decode a JPEG, PNG or binary PPM file into an RGB tensor with values in `[0, 255]`.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Data(format!("cannot decode {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f32::from).collect();
    Tensor::from_vec(&[h as usize, w as usize, 3], data)
}

/// Read only the header of an image file; `Ok` means the format is recognized.
pub fn probe_image(path: &Path) -> Result<(u32, u32)> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .into_dimensions()
        .map_err(|e| Error::Data(format!("cannot decode {}: {e}", path.display())))
}

/// Write an `[H, W, 3]` tensor with values in `[0, 255]` as binary PPM (P6).
pub fn write_ppm(path: &Path, img: &ImageTensor) -> Result<()> {
    let (h, w, c) = dims(img)?;
    if c != 3 {
        return Err(Error::Argument(format!("PPM needs 3 channels, got {c}")));
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend(
        img.data()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Bilinear resampling with half-pixel centers: output pixel `i` samples
/// source coordinate `(i + 0.5) · in/out − 0.5`, clamped to the image.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    let (h, w, c) = dims(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Argument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[out_h, out_w, c], out)
}

/// Map `[0, 255]` intensities to `[0, 1]`.
pub fn rescale(img: &ImageTensor) -> ImageTensor {
    img.map(|v| v / 255.0)
}

/// Decode, resize and rescale in one step.
pub fn load_preprocessed(path: &Path, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    let img = load_image(path)?;
    let img = if img.shape()[..2] == [out_h, out_w] {
        img
    } else {
        resize_bilinear(&img, out_h, out_w)?
    };
    Ok(rescale(&img))
}

/// Reverse column order.
pub fn flip_horizontal(img: &ImageTensor) -> ImageTensor {
    let (h, w, c) = dims(img).expect("image tensor");
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            out.extend_from_slice(&src[(y * w + x) * c..][..c]);
        }
    }
    Tensor::from_vec(img.shape(), out).expect("same shape")
}

/// Reverse row order.
pub fn flip_vertical(img: &ImageTensor) -> ImageTensor {
    let (h, w, c) = dims(img).expect("image tensor");
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in (0..h).rev() {
        out.extend_from_slice(&src[y * w * c..][..w * c]);
    }
    Tensor::from_vec(img.shape(), out).expect("same shape")
}

/// Rotate by `turns` of a full revolution about the image center.
///
/// Positive angles turn the content counter-clockwise as displayed (rows
/// grow downward). Each output pixel is bilinearly sampled from the inverse
/// rotated position; neighbors outside the source contribute zero.
pub fn rotate(img: &ImageTensor, turns: f64) -> ImageTensor {
    let (h, w, c) = dims(img).expect("image tensor");
    let theta = turns * std::f64::consts::TAU;
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = img.data();
    let sample = |y: isize, x: isize, ch: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            src[(y as usize * w + x as usize) * c + ch] as f64
        }
    };
    let mut out = vec![0f32; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // Inverse of the display-CCW rotation (y axis points down).
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let v = (sample(y0, x0, ch) * (1.0 - fx) + sample(y0, x0 + 1, ch) * fx)
                    * (1.0 - fy)
                    + (sample(y0 + 1, x0, ch) * (1.0 - fx) + sample(y0 + 1, x0 + 1, ch) * fx) * fy;
                out[(y * w + x) * c + ch] = v as f32;
            }
        }
    }
    Tensor::from_vec(img.shape(), out).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub flip_horizontal_prob: f64,
    pub flip_vertical_prob: f64,
    /// Rotation angles are drawn uniformly from `±rotation_max_turns` turns.
    pub rotation_max_turns: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_horizontal_prob: 0.5,
            flip_vertical_prob: 0.5,
            rotation_max_turns: 0.1,
        }
    }
}

impl AugmentPolicy {
    pub fn none() -> Self {
        Self {
            flip_horizontal_prob: 0.0,
            flip_vertical_prob: 0.0,
            rotation_max_turns: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if prob(self.flip_horizontal_prob)
            && prob(self.flip_vertical_prob)
            && (0.0..=0.5).contains(&self.rotation_max_turns)
        {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "invalid augmentation policy {self:?}"
            )))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.flip_horizontal_prob == 0.0
            && self.flip_vertical_prob == 0.0
            && self.rotation_max_turns == 0.0
    }
}

/// Random horizontal flip, vertical flip, then rotation.
///
/// Three draws are consumed per call regardless of the policy, so the stream
/// position after augmenting a sample does not depend on the outcome.
pub fn augment(img: &ImageTensor, policy: &AugmentPolicy, rng: &mut Rng) -> ImageTensor {
    let flip_h = rng.bernoulli(policy.flip_horizontal_prob);
    let flip_v = rng.bernoulli(policy.flip_vertical_prob);
    let turns = rng.uniform_range(-policy.rotation_max_turns, policy.rotation_max_turns);
    let mut out = if flip_h {
        flip_horizontal(img)
    } else {
        img.clone()
    };
    if flip_v {
        out = flip_vertical(&out);
    }
    if policy.rotation_max_turns > 0.0 {
        out = rotate(&out, turns);
        for v in out.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    out
}
