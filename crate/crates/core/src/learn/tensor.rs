//! Dense CHW tensors and the im2col/GEMM kernels behind the conv layers.

/// Row-major CHW tensor of `f64` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Tensor {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), channels * height * width);
        Tensor {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `c[m x n] = a[m x k] * b[k x n] + beta * c`, with explicit row/column
/// strides so transposed operands never need materializing.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unrolls conv patches into a `[in_ch*k*k, out_h*out_w]` row-major matrix.
/// Out-of-bounds taps (zero padding) stay zero.
pub fn im2col(
    x: &Tensor,
    k: usize,
    stride: usize,
    dilation: usize,
    pad: usize,
    cols: &mut Vec<f64>,
) -> (usize, usize) {
    let (out_h, out_w) = conv_out_hw(x.height, x.width, k, stride, dilation, pad);
    let n_sp = out_h * out_w;
    cols.clear();
    cols.resize(x.channels * k * k * n_sp, 0.0);
    for c in 0..x.channels {
        let plane = &x.data[c * x.plane()..(c + 1) * x.plane()];
        for kr in 0..k {
            for kc in 0..k {
                let row = ((c * k + kr) * k + kc) * n_sp;
                for oh in 0..out_h {
                    let ih = (oh * stride + kr * dilation) as isize - pad as isize;
                    if ih < 0 || ih >= x.height as isize {
                        continue;
                    }
                    let src = ih as usize * x.width;
                    let dst = row + oh * out_w;
                    for ow in 0..out_w {
                        let iw = (ow * stride + kc * dilation) as isize - pad as isize;
                        if iw >= 0 && iw < x.width as isize {
                            cols[dst + ow] = plane[src + iw as usize];
                        }
                    }
                }
            }
        }
    }
    (out_h, out_w)
}

/// Scatter-adds a column matrix back onto the input layout; exact adjoint of
/// [`im2col`].
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    cols: &[f64],
    channels: usize,
    in_h: usize,
    in_w: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    pad: usize,
) -> Tensor {
    let (out_h, out_w) = conv_out_hw(in_h, in_w, k, stride, dilation, pad);
    let n_sp = out_h * out_w;
    let mut x = Tensor::zeros(channels, in_h, in_w);
    let plane = in_h * in_w;
    for c in 0..channels {
        let dst = &mut x.data[c * plane..(c + 1) * plane];
        for kr in 0..k {
            for kc in 0..k {
                let row = ((c * k + kr) * k + kc) * n_sp;
                for oh in 0..out_h {
                    let ih = (oh * stride + kr * dilation) as isize - pad as isize;
                    if ih < 0 || ih >= in_h as isize {
                        continue;
                    }
                    let base = ih as usize * in_w;
                    let src = row + oh * out_w;
                    for ow in 0..out_w {
                        let iw = (ow * stride + kc * dilation) as isize - pad as isize;
                        if iw >= 0 && iw < in_w as isize {
                            dst[base + iw as usize] += cols[src + ow];
                        }
                    }
                }
            }
        }
    }
    x
}

pub fn conv_out_hw(
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    pad: usize,
) -> (usize, usize) {
    let span = dilation * (k - 1) + 1;
    let oh = (h + 2 * pad - span) / stride + 1;
    let ow = (w + 2 * pad - span) / stride + 1;
    (oh, ow)
}
