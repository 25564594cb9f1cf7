use crate::error::{Error, Result};

/// Output length of a 1-D convolution.
pub fn conv1d_out_len(l_in: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::shape("conv1d", "kernel", "kernel and stride must be positive"));
    }
    let padded = l_in + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(
            "conv1d",
            "length",
            format!("padded input length {padded} shorter than kernel {kernel}"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output length of a 1-D transposed convolution.
pub fn conv_transpose1d_out_len(
    l_in: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::shape(
            "conv_transpose1d",
            "kernel",
            "kernel and stride must be positive",
        ));
    }
    if l_in == 0 {
        return Err(Error::shape("conv_transpose1d", "length", "empty input"));
    }
    let full = (l_in - 1) * stride + kernel;
    if full <= 2 * padding {
        return Err(Error::shape(
            "conv_transpose1d",
            "length",
            format!("output length {full} - 2*{padding} is not positive"),
        ));
    }
    Ok(full - 2 * padding)
}

/// Window geometry shared by the convolution kernels. `long` is the length of
/// the sequence the kernel slides over and `short` the number of window
/// positions, so a conv1d maps long -> short and its transpose short -> long.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub long: usize,
    pub short: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    /// Unfolds `x` (`channels x long`) into `cols` (`channels*kernel x short`).
    pub fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let Window { channels, long, short, kernel, stride, padding } = *self;
        debug_assert_eq!(x.len(), channels * long);
        debug_assert_eq!(cols.len(), channels * kernel * short);
        for c in 0..channels {
            let row_in = &x[c * long..(c + 1) * long];
            for k in 0..kernel {
                let row = &mut cols[(c * kernel + k) * short..(c * kernel + k + 1) * short];
                for (o, slot) in row.iter_mut().enumerate() {
                    let pos = (o * stride + k) as isize - padding as isize;
                    *slot = if pos >= 0 && (pos as usize) < long {
                        row_in[pos as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: folds `cols` back and adds into `x`.
    pub fn col2im_add(&self, cols: &[f64], x: &mut [f64]) {
        let Window { channels, long, short, kernel, stride, padding } = *self;
        debug_assert_eq!(x.len(), channels * long);
        debug_assert_eq!(cols.len(), channels * kernel * short);
        for c in 0..channels {
            for k in 0..kernel {
                let row = &cols[(c * kernel + k) * short..(c * kernel + k + 1) * short];
                for (o, &v) in row.iter().enumerate() {
                    let pos = (o * stride + k) as isize - padding as isize;
                    if pos >= 0 && (pos as usize) < long {
                        x[c * long + pos as usize] += v;
                    }
                }
            }
        }
    }
}
