//! 1D convolution primitives over `[position, channel]` arrays.
//!
//! All variants use same-length zero padding, so output length equals input
//! length.

use ndarray::{Array2, ArrayView2, ArrayView3};

use super::SnnError;

/// Dilated 1D convolution.
///
/// `input` is `[t, c_in]`, `kernel` is `[c_out, c_in, w]` with odd `w`;
/// output position `i` reads taps at `i + (m - (w-1)/2) * dilation`, zero
/// outside bounds.
pub fn dilated_conv1d(
    input: ArrayView2<f64>,
    kernel: ArrayView3<f64>,
    dilation: usize,
) -> Result<Array2<f64>, SnnError> {
    let (t, c_in) = input.dim();
    let (c_out, kc_in, width) = kernel.dim();
    if width % 2 == 0 {
        return Err(SnnError::EvenKernel(width));
    }
    if dilation == 0 {
        return Err(SnnError::BadDilation);
    }
    if kc_in != c_in {
        return Err(SnnError::ShapeMismatch(format!(
            "kernel expects {kc_in} input channels, input has {c_in}"
        )));
    }
    let half = (width as isize - 1) / 2;
    let mut out = Array2::<f64>::zeros((t, c_out));
    for i in 0..t as isize {
        for m in 0..width as isize {
            let src = i + (m - half) * dilation as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            for p in 0..c_out {
                let mut acc = 0.0;
                for d in 0..c_in {
                    acc += kernel[[p, d, m as usize]] * input[[src as usize, d]];
                }
                out[[i as usize, p]] += acc;
            }
        }
    }
    Ok(out)
}

/// Per-position linear map: `[t, d_in] x [d_out, d_in] -> [t, d_out]`.
/// Equals [`dilated_conv1d`] with a width-1 kernel.
pub fn pointwise_conv(
    input: ArrayView2<f64>,
    weight: ArrayView2<f64>,
) -> Result<Array2<f64>, SnnError> {
    let (t, d_in) = input.dim();
    let (d_out, wd_in) = weight.dim();
    if wd_in != d_in {
        return Err(SnnError::ShapeMismatch(format!(
            "weight expects {wd_in} input channels, input has {d_in}"
        )));
    }
    let mut out = Array2::<f64>::zeros((t, d_out));
    for i in 0..t {
        for o in 0..d_out {
            let mut acc = 0.0;
            for d in 0..d_in {
                acc += weight[[o, d]] * input[[i, d]];
            }
            out[[i, o]] = acc;
        }
    }
    Ok(out)
}

/// Depthwise 1D convolution: each channel convolved with its own width-`w`
/// taps, same padding, dilation 1. `input` is `[t, d]`, `kernel` is `[d, w]`.
pub fn depthwise_conv1d(
    input: ArrayView2<f64>,
    kernel: ArrayView2<f64>,
) -> Result<Array2<f64>, SnnError> {
    let (t, d) = input.dim();
    let (kd, width) = kernel.dim();
    if width % 2 == 0 {
        return Err(SnnError::EvenKernel(width));
    }
    if kd != d {
        return Err(SnnError::ShapeMismatch(format!(
            "kernel has {kd} channels, input has {d}"
        )));
    }
    let half = (width as isize - 1) / 2;
    let mut out = Array2::<f64>::zeros((t, d));
    for i in 0..t as isize {
        for m in 0..width as isize {
            let src = i + m - half;
            if src < 0 || src >= t as isize {
                continue;
            }
            for c in 0..d {
                out[[i as usize, c]] += kernel[[c, m as usize]] * input[[src as usize, c]];
            }
        }
    }
    Ok(out)
}
