//! 2-D convolution with same-padding and stride 1.
//!
//! Layouts are channel-last and row-major: input `[H, W, Cin]`, kernels
//! `[K, K, Cin, Cout]`, output `[H, W, Cout]`. The forward and the kernel
//! gradient iterate over input pixels and skip pixels whose channels are all
//! exactly zero; masked chips are mostly zeros, so this is the difference
//! between usable and unusable training times on a CPU. Skipped terms
//! contribute exactly 0.0 to every accumulator, so the result is bit-identical
//! to the dense loop.

use super::kernels::{gemv_acc, ger_acc};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn check_shapes(input: &Tensor, kernels: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize, usize)> {
    let (h, w, cin) = match input.shape() {
        [h, w, c] => (*h, *w, *c),
        other => {
            return Err(Error::shape("conv2d", "[H, W, Cin]", format!("{other:?}")));
        }
    };
    let (k, cin_k, cout) = match kernels.shape() {
        [k1, k2, ci, co] if k1 == k2 => (*k1, *ci, *co),
        other => {
            return Err(Error::shape("conv2d", "[K, K, Cin, Cout]", format!("{other:?}")));
        }
    };
    if k % 2 == 0 {
        return Err(Error::shape("conv2d", "odd kernel size", format!("{k}")));
    }
    if cin_k != cin {
        return Err(Error::shape(
            "conv2d",
            format!("kernel Cin == input Cin ({cin})"),
            format!("{cin_k}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv2d", format!("[{cout}] bias"), format!("{:?}", b.shape())));
        }
    }
    Ok((h, w, cin, k, cout))
}

/// Clipped tap range so every (input pixel, tap) pair lands inside the
/// output grid: tap t reaches output `i + pad - t`, which needs
/// `i + pad + 1 - extent <= t <= min(k - 1, i + pad)`.
#[inline(always)]
fn tap_range(i: usize, pad: usize, k: usize, extent: usize) -> (usize, usize) {
    ((i + pad + 1).saturating_sub(extent), (k - 1).min(i + pad))
}

/// Scatters one input pixel's contribution into every output position it
/// reaches.
fn scatter_pixel(
    out: &mut [f64],
    kd: &[f64],
    pixel: &[f64],
    (iy, ix): (usize, usize),
    (h, w): (usize, usize),
    k: usize,
    cout: usize,
) {
    let pad = k / 2;
    let cin = pixel.len();
    let (ky_lo, ky_hi) = tap_range(iy, pad, k, h);
    let (kx_lo, kx_hi) = tap_range(ix, pad, k, w);
    for ky in ky_lo..=ky_hi {
        let oy = iy + pad - ky;
        for kx in kx_lo..=kx_hi {
            let ox = ix + pad - kx;
            let out_base = (oy * w + ox) * cout;
            let k_base = (ky * k + kx) * cin * cout;
            gemv_acc(
                &mut out[out_base..out_base + cout],
                pixel,
                &kd[k_base..k_base + cin * cout],
            );
        }
    }
}

/// Same-padded stride-1 convolution: output `[H, W, Cout]`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (h, w, cin, k, cout) = check_shapes(input, kernels, Some(bias))?;
    let mut out = vec![0.0f64; h * w * cout];

    // Initialize with bias.
    for px in 0..h * w {
        out[px * cout..(px + 1) * cout].copy_from_slice(bias.data());
    }

    let x = input.data();
    let kd = kernels.data();

    for iy in 0..h {
        for ix in 0..w {
            let in_base = (iy * w + ix) * cin;
            let pixel = &x[in_base..in_base + cin];
            if pixel.iter().all(|&v| v == 0.0) {
                continue;
            }
            // This input pixel feeds output (oy, ox) through tap
            // (ky, kx) = (iy - oy + pad, ix - ox + pad).
            scatter_pixel(&mut out, kd, pixel, (iy, ix), (h, w), k, cout);
        }
    }
    Tensor::new(vec![h, w, cout], out)
}

/// Gradients w.r.t. kernels and bias only (the conv sits first in the model,
/// so the input gradient is not needed during training).
pub fn conv2d_param_grads(input: &Tensor, kernels: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w, cin, k, cout) = check_shapes(input, kernels, None)?;
    if upstream.shape() != [h, w, cout] {
        return Err(Error::shape(
            "conv2d_backward",
            format!("[{h}, {w}, {cout}] upstream"),
            format!("{:?}", upstream.shape()),
        ));
    }
    let x = input.data();
    let up = upstream.data();

    let mut d_kernels = vec![0.0f64; k * k * cin * cout];
    let mut d_bias = vec![0.0f64; cout];

    for px in 0..h * w {
        for co in 0..cout {
            d_bias[co] += up[px * cout + co];
        }
    }

    for iy in 0..h {
        for ix in 0..w {
            let in_base = (iy * w + ix) * cin;
            let pixel = &x[in_base..in_base + cin];
            if pixel.iter().all(|&v| v == 0.0) {
                continue;
            }
            gather_pixel_grads(&mut d_kernels, up, pixel, (iy, ix), (h, w), k, cout);
        }
    }

    Ok((
        Tensor::new(vec![k, k, cin, cout], d_kernels)?,
        Tensor::new(vec![cout], d_bias)?,
    ))
}

/// Kernel-gradient contribution of one input pixel. Taps whose upstream row
/// is all zero are skipped; the loss gradient entering the conv stage is
/// sparse (it flows only through pool argmax positions), so most taps vanish.
/// Skipped terms add exactly 0.0, so results are unchanged.
fn gather_pixel_grads(
    d_kernels: &mut [f64],
    up: &[f64],
    pixel: &[f64],
    (iy, ix): (usize, usize),
    (h, w): (usize, usize),
    k: usize,
    cout: usize,
) {
    let pad = k / 2;
    let cin = pixel.len();
    let (ky_lo, ky_hi) = tap_range(iy, pad, k, h);
    let (kx_lo, kx_hi) = tap_range(ix, pad, k, w);
    for ky in ky_lo..=ky_hi {
        let oy = iy + pad - ky;
        for kx in kx_lo..=kx_hi {
            let ox = ix + pad - kx;
            let up_base = (oy * w + ox) * cout;
            let urow = &up[up_base..up_base + cout];
            if urow.iter().all(|&u| u == 0.0) {
                continue;
            }
            let k_base = (ky * k + kx) * cin * cout;
            ger_acc(&mut d_kernels[k_base..k_base + cin * cout], pixel, urow);
        }
    }
}

/// Full backward pass: gradients w.r.t. input, kernels and bias.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, upstream: &Tensor) -> Result<Conv2dGrads> {
    let (d_kernels, d_bias) = conv2d_param_grads(input, kernels, upstream)?;
    let (h, w, cin, k, cout) = check_shapes(input, kernels, None)?;
    let pad = k / 2;
    let kd = kernels.data();
    let up = upstream.data();

    let mut d_input = vec![0.0f64; h * w * cin];
    for iy in 0..h {
        for ix in 0..w {
            let d_base = (iy * w + ix) * cin;
            for ky in 0..k {
                let oy = iy + pad;
                if oy < ky || oy - ky >= h {
                    continue;
                }
                let oy = oy - ky;
                for kx in 0..k {
                    let ox = ix + pad;
                    if ox < kx || ox - kx >= w {
                        continue;
                    }
                    let ox = ox - kx;
                    let up_base = (oy * w + ox) * cout;
                    let k_base = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let mut acc = d_input[d_base + ci];
                        let krow = &kd[k_base + ci * cout..k_base + (ci + 1) * cout];
                        for co in 0..cout {
                            acc = krow[co].mul_add(up[up_base + co], acc);
                        }
                        d_input[d_base + ci] = acc;
                    }
                }
            }
        }
    }

    Ok(Conv2dGrads {
        input: Tensor::new(vec![h, w, cin], d_input)?,
        kernels: d_kernels,
        bias: d_bias,
    })
}
