//! Direct 2D convolution kernels and their gradients.
//!
//! All variants use zero "same" padding and stride 1; dilation expands the
//! receptive field. Work is parallelized across channels with each task
//! accumulating sequentially, so results are bit-reproducible regardless of
//! thread count.

use rayon::prelude::*;

use super::planar::Planar;
use super::{ConvLayerSpec, LayerParams};
use crate::scalar::Scalar;

/// Row range such that `row + offset` stays inside `[0, size)`.
#[inline]
fn clipped_range(size: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (size as isize - offset).clamp(0, size as isize) as usize;
    (lo, hi.max(lo))
}

/// out[co] = bias[co] + sum_ci w[co][ci] (*) in[ci]
pub(crate) fn conv2d<S: Scalar>(
    input: &Planar<S>,
    spec: &ConvLayerSpec,
    params: &LayerParams<S>,
    out: &mut Planar<S>,
) {
    let (h, w) = (input.height, input.width);
    let k = spec.kernel;
    let ctr = (k / 2) as isize;
    let dil = spec.dilation as isize;
    let cin = spec.in_channels;
    let plane = h * w;

    out.data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(co, out_plane)| {
            out_plane.fill(params.bias[co]);
            for ci in 0..cin {
                let in_plane = input.plane(ci);
                for ki in 0..k {
                    let di = (ki as isize - ctr) * dil;
                    let (i0, i1) = clipped_range(h, di);
                    for kj in 0..k {
                        let wgt = params.weights[((co * cin + ci) * k + ki) * k + kj];
                        let dj = (kj as isize - ctr) * dil;
                        let (j0, j1) = clipped_range(w, dj);
                        if j0 >= j1 {
                            continue;
                        }
                        for i in i0..i1 {
                            let src = (i as isize + di) as usize;
                            let orow = &mut out_plane[i * w + j0..i * w + j1];
                            let irow = &in_plane[src * w + ((j0 as isize + dj) as usize)
                                ..src * w + ((j1 as isize + dj) as usize)];
                            for (o, &x) in orow.iter_mut().zip(irow) {
                                *o = *o + wgt * x;
                            }
                        }
                    }
                }
            }
        });
}

/// Gradient with respect to the layer input (transposed convolution).
pub(crate) fn conv2d_input_grad<S: Scalar>(
    grad_out: &Planar<S>,
    spec: &ConvLayerSpec,
    params: &LayerParams<S>,
    grad_in: &mut Planar<S>,
) {
    let (h, w) = (grad_out.height, grad_out.width);
    let k = spec.kernel;
    let ctr = (k / 2) as isize;
    let dil = spec.dilation as isize;
    let cin = spec.in_channels;
    let cout = spec.out_channels;
    let plane = h * w;

    grad_in
        .data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ci, gin_plane)| {
            gin_plane.fill(S::zero());
            for co in 0..cout {
                let gout_plane = grad_out.plane(co);
                for ki in 0..k {
                    let di = (ki as isize - ctr) * dil;
                    // input pixel i receives from output pixel i - di
                    let (i0, i1) = clipped_range(h, -di);
                    for kj in 0..k {
                        let wgt = params.weights[((co * cin + ci) * k + ki) * k + kj];
                        let dj = (kj as isize - ctr) * dil;
                        let (j0, j1) = clipped_range(w, -dj);
                        if j0 >= j1 {
                            continue;
                        }
                        for i in i0..i1 {
                            let src = (i as isize - di) as usize;
                            let grow = &mut gin_plane[i * w + j0..i * w + j1];
                            let orow = &gout_plane[src * w + ((j0 as isize - dj) as usize)
                                ..src * w + ((j1 as isize - dj) as usize)];
                            for (g, &x) in grow.iter_mut().zip(orow) {
                                *g = *g + wgt * x;
                            }
                        }
                    }
                }
            }
        });
}

/// Gradients with respect to weights and biases, accumulated into `grads`.
pub(crate) fn conv2d_param_grad<S: Scalar>(
    input: &Planar<S>,
    grad_out: &Planar<S>,
    spec: &ConvLayerSpec,
    grads: &mut LayerParams<S>,
) {
    let (h, w) = (input.height, input.width);
    let k = spec.kernel;
    let ctr = (k / 2) as isize;
    let dil = spec.dilation as isize;
    let cin = spec.in_channels;

    grads
        .weights
        .par_chunks_mut(cin * k * k)
        .enumerate()
        .for_each(|(co, wgrads)| {
            let gout_plane = grad_out.plane(co);
            for ci in 0..cin {
                let in_plane = input.plane(ci);
                for ki in 0..k {
                    let di = (ki as isize - ctr) * dil;
                    let (i0, i1) = clipped_range(h, di);
                    for kj in 0..k {
                        let dj = (kj as isize - ctr) * dil;
                        let (j0, j1) = clipped_range(w, dj);
                        let mut acc = S::zero();
                        for i in i0..i1 {
                            let src = (i as isize + di) as usize;
                            let orow = &gout_plane[i * w + j0..i * w + j1];
                            let irow = &in_plane[src * w + ((j0 as isize + dj) as usize)
                                ..src * w + ((j1 as isize + dj) as usize)];
                            for (&g, &x) in orow.iter().zip(irow) {
                                acc += g * x;
                            }
                        }
                        wgrads[(ci * k + ki) * k + kj] += acc;
                    }
                }
            }
        });

    for co in 0..spec.out_channels {
        let mut acc = S::zero();
        for &g in grad_out.plane(co) {
            acc += g;
        }
        grads.bias[co] += acc;
    }
}
