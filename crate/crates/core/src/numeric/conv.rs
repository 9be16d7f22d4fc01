use rand::Rng;

use super::matrix::Matrix;
use crate::error::{shape_err, Result};

/// Height × width × channels grid, channel-minor.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return shape_err(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Fixed-weight 2-D convolution (valid cross-correlation). Forward only.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    kernel_h: usize,
    kernel_w: usize,
    in_channels: usize,
    stride: usize,
    /// out_channels × (kernel_h · kernel_w · in_channels), patch order (ky, kx, c).
    weights: Matrix,
    bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(kernel_h: usize, kernel_w: usize, in_channels: usize, stride: usize, weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if stride == 0 || kernel_h == 0 || kernel_w == 0 {
            return shape_err("kernel dims and stride must be positive");
        }
        if weights.cols() != kernel_h * kernel_w * in_channels || bias.len() != weights.rows() {
            return shape_err(format!(
                "kernel weights {}x{} do not match {kernel_h}x{kernel_w}x{in_channels} with {} biases",
                weights.rows(),
                weights.cols(),
                bias.len()
            ));
        }
        Ok(Self {
            kernel_h,
            kernel_w,
            in_channels,
            stride,
            weights,
            bias,
        })
    }

    /// Uniform weights in ±sqrt(6 / fan_in) (He-uniform for ReLU), zero biases.
    pub fn init_random<R: Rng + ?Sized>(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * in_channels;
        let limit = (6.0 / fan_in as f64).sqrt();
        let data = (0..out_channels * fan_in)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            stride,
            weights: Matrix::from_vec(out_channels, fan_in, data).expect("sized above"),
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        if height < self.kernel_h || width < self.kernel_w {
            return None;
        }
        Some((
            (height - self.kernel_h) / self.stride + 1,
            (width - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn forward(&self, image: &Grid3) -> Result<Grid3> {
        if image.channels != self.in_channels {
            return shape_err(format!(
                "kernel expects {} channels, image has {}",
                self.in_channels, image.channels
            ));
        }
        let Some((oh, ow)) = self.output_dims(image.height, image.width) else {
            return shape_err(format!(
                "kernel {}x{} larger than image {}x{}",
                self.kernel_h, self.kernel_w, image.height, image.width
            ));
        };
        // im2col: one row per output position.
        let patch = self.kernel_h * self.kernel_w * self.in_channels;
        let row_len = self.kernel_w * self.in_channels;
        let mut cols = vec![0.0; oh * ow * patch];
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = &mut cols[(oy * ow + ox) * patch..][..patch];
                for ky in 0..self.kernel_h {
                    let y = oy * self.stride + ky;
                    let start = (y * image.width + ox * self.stride) * image.channels;
                    dst[ky * row_len..(ky + 1) * row_len].copy_from_slice(&image.data[start..start + row_len]);
                }
            }
        }
        let patches = Matrix::from_vec(oh * ow, patch, cols)?;
        let mut out = patches.matmul_transposed(&self.weights)?;
        let oc = self.out_channels();
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Grid3::new(oh, ow, oc, out.into_vec())
    }
}

/// Valid cross-correlation of `image` with the layer's kernels.
pub fn conv2d_forward(image: &Grid3, conv: &Conv2d) -> Result<Grid3> {
    conv.forward(image)
}
