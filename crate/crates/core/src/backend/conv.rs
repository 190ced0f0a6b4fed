//! im2col lowering shared by convolution and transpose convolution.
//!
//! A geometry relates a "large" map `channels × height × width` to the "small"
//! map produced by sliding a `kernel × kernel` window over it. Convolution runs
//! large → small; transpose convolution is its adjoint, small → large.

use super::scalar::{gemm, Mat};
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let out = |n: usize| (n + 2 * padding - kernel) / stride + 1;
        ConvGeometry {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_height: out(height),
            out_width: out(width),
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..self.out_height {
                        let y = (oy * s + ky) as isize - p;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        for ox in 0..self.out_width {
                            let x = (ox * s + kx) as isize - p;
                            if x < 0 || x >= self.width as isize {
                                continue;
                            }
                            let image = (c * self.height + y as usize) * self.width + x as usize;
                            f(row * self.col_cols() + oy * self.out_width + ox, image);
                        }
                    }
                }
            }
        }
    }

    /// Unfolds `image` into `cols` (`col_rows × col_cols`), writing zeros for padding.
    pub fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        cols.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_tap(|col, img| cols[col] = image[img]);
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates `cols` back into `image`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        self.for_each_tap(|col, img| image[img] += cols[col]);
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_bias<T: Scalar>(grad_out: &[T], grad_bias: &mut [T], plane: usize) {
    for (chunk, gb) in grad_out.chunks(plane).zip(grad_bias.iter_mut()) {
        *gb += chunk.iter().copied().sum::<T>();
    }
}

/// Convolution of one sample. `weights` is `out_channels × (channels·k·k)`.
pub fn conv_forward<T: Scalar>(
    geom: &ConvGeometry,
    out_channels: usize,
    weights: &[T],
    bias: &[T],
    input: &[T],
    output: &mut [T],
    cols: &mut Vec<T>,
) {
    cols.resize(geom.col_rows() * geom.col_cols(), T::zero());
    geom.im2col(input, cols);
    gemm(
        Mat::row_major(weights, out_channels, geom.col_rows()),
        Mat::row_major(cols, geom.col_rows(), geom.col_cols()),
        T::zero(),
        output,
    );
    add_channel_bias(output, bias, geom.col_cols());
}

#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    geom: &ConvGeometry,
    out_channels: usize,
    weights: &[T],
    input: &[T],
    grad_out: &[T],
    params: Option<(&mut [T], &mut [T])>,
    grad_in: &mut [T],
    cols: &mut Vec<T>,
) {
    let (rows, width) = (geom.col_rows(), geom.col_cols());
    let dy = Mat::row_major(grad_out, out_channels, width);
    if let Some((grad_w, grad_b)) = params {
        cols.resize(rows * width, T::zero());
        geom.im2col(input, cols);
        gemm(dy, Mat::row_major(cols, rows, width).t(), T::one(), grad_w);
        accumulate_channel_bias(grad_out, grad_b, width);
    }
    cols.resize(rows * width, T::zero());
    gemm(
        Mat::row_major(weights, out_channels, rows).t(),
        dy,
        T::zero(),
        cols,
    );
    geom.col2im(cols, grad_in);
}

/// Transpose convolution of one sample. `geom` describes the *output* map;
/// `weights` is `in_channels × (out_channels·k·k)`.
pub fn deconv_forward<T: Scalar>(
    geom: &ConvGeometry,
    in_channels: usize,
    weights: &[T],
    bias: &[T],
    input: &[T],
    output: &mut [T],
    cols: &mut Vec<T>,
) {
    let (rows, width) = (geom.col_rows(), geom.col_cols());
    cols.resize(rows * width, T::zero());
    gemm(
        Mat::row_major(weights, in_channels, rows).t(),
        Mat::row_major(input, in_channels, width),
        T::zero(),
        cols,
    );
    output.iter_mut().for_each(|v| *v = T::zero());
    geom.col2im(cols, output);
    add_channel_bias(output, bias, geom.height * geom.width);
}

#[allow(clippy::too_many_arguments)]
pub fn deconv_backward<T: Scalar>(
    geom: &ConvGeometry,
    in_channels: usize,
    weights: &[T],
    input: &[T],
    grad_out: &[T],
    params: Option<(&mut [T], &mut [T])>,
    grad_in: &mut [T],
    cols: &mut Vec<T>,
) {
    let (rows, width) = (geom.col_rows(), geom.col_cols());
    cols.resize(rows * width, T::zero());
    geom.im2col(grad_out, cols);
    let dcols = Mat::row_major(cols.as_slice(), rows, width);
    gemm(
        Mat::row_major(weights, in_channels, rows),
        dcols,
        T::zero(),
        grad_in,
    );
    if let Some((grad_w, grad_b)) = params {
        gemm(
            Mat::row_major(input, in_channels, width),
            dcols.t(),
            T::one(),
            grad_w,
        );
        accumulate_channel_bias(grad_out, grad_b, geom.height * geom.width);
    }
}
