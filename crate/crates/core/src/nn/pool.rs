//! Max pooling, 2D and 3D.
//!
//! No implicit padding in the public contract: windows that would run past
//! the border are dropped (`floor` output arithmetic), and a window larger
//! than the input is a configuration error. The inception pool branch needs
//! same-size pooling, so the 2D layer additionally accepts an explicit
//! padding that fills with `-inf`; argmax indices always refer to real input
//! positions. Ties break toward the lowest flat index, which makes the
//! backward routing deterministic.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn pooled_extent(input: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    if window > input + 2 * padding {
        return Err(Error::config(format!(
            "pool window {window} larger than input {input} (padding {padding})"
        )));
    }
    Ok((input + 2 * padding - window) / stride + 1)
}

/// 2D max pool over `B×C×H×W`. Returns the pooled tensor and the flat
/// argmax index (into the `H×W` plane) per output cell.
pub fn maxpool2d(
    input: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    padding: usize,
) -> Result<(Tensor, Vec<u32>)> {
    let [b, c, h, w]: [usize; 4] = input
        .shape()
        .try_into()
        .map_err(|_| Error::config("maxpool2d expects 4-d input"))?;
    let oh = pooled_extent(h, window.0, stride.0, padding)?;
    let ow = pooled_extent(w, window.1, stride.1, padding)?;

    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0u32; b * c * oh * ow];
    let xd = input.data();
    let od = out.data_mut();
    for p in 0..b * c {
        let plane = &xd[p * h * w..(p + 1) * h * w];
        let out_plane = &mut od[p * oh * ow..(p + 1) * oh * ow];
        let arg_plane = &mut argmax[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0u32;
                for wy in 0..window.0 {
                    let iy = oy * stride.0 + wy;
                    if iy < padding || iy - padding >= h {
                        continue;
                    }
                    let iy = iy - padding;
                    for wx in 0..window.1 {
                        let ix = ox * stride.1 + wx;
                        if ix < padding || ix - padding >= w {
                            continue;
                        }
                        let ix = ix - padding;
                        let v = plane[iy * w + ix];
                        if v > best {
                            best = v;
                            best_idx = (iy * w + ix) as u32;
                        }
                    }
                }
                out_plane[oy * ow + ox] = best;
                arg_plane[oy * ow + ox] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes the output gradient back to each window's argmax position.
pub fn maxpool2d_backward(
    input_shape: &[usize],
    grad_out: &Tensor,
    argmax: &[u32],
) -> Result<Tensor> {
    let [b, c, h, w]: [usize; 4] = input_shape
        .try_into()
        .map_err(|_| Error::config("maxpool2d expects 4-d input"))?;
    let os = grad_out.shape();
    let plane_out = os[2] * os[3];
    let mut d_input = Tensor::zeros(&[b, c, h, w]);
    let dx = d_input.data_mut();
    let gd = grad_out.data();
    for p in 0..b * c {
        let dx_plane = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..plane_out {
            dx_plane[argmax[p * plane_out + i] as usize] += gd[p * plane_out + i];
        }
    }
    Ok(d_input)
}

/// 3D max pool over `B×C×D×H×W`; argmax is flat into the `D×H×W` volume.
pub fn maxpool3d(
    input: &Tensor,
    window: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<(Tensor, Vec<u32>)> {
    let [b, c, d, h, w]: [usize; 5] = input
        .shape()
        .try_into()
        .map_err(|_| Error::config("maxpool3d expects 5-d input"))?;
    let od = pooled_extent(d, window.0, stride.0, 0)?;
    let oh = pooled_extent(h, window.1, stride.1, 0)?;
    let ow = pooled_extent(w, window.2, stride.2, 0)?;

    let mut out = Tensor::zeros(&[b, c, od, oh, ow]);
    let mut argmax = vec![0u32; b * c * od * oh * ow];
    let xd = input.data();
    let outd = out.data_mut();
    for p in 0..b * c {
        let vol = &xd[p * d * h * w..(p + 1) * d * h * w];
        let out_vol = &mut outd[p * od * oh * ow..(p + 1) * od * oh * ow];
        let arg_vol = &mut argmax[p * od * oh * ow..(p + 1) * od * oh * ow];
        for oz in 0..od {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for wz in 0..window.0 {
                        let iz = oz * stride.0 + wz;
                        for wy in 0..window.1 {
                            let iy = oy * stride.1 + wy;
                            for wx in 0..window.2 {
                                let ix = ox * stride.2 + wx;
                                let idx = (iz * h + iy) * w + ix;
                                let v = vol[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx as u32;
                                }
                            }
                        }
                    }
                    out_vol[(oz * oh + oy) * ow + ox] = best;
                    arg_vol[(oz * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool3d_backward(
    input_shape: &[usize],
    grad_out: &Tensor,
    argmax: &[u32],
) -> Result<Tensor> {
    let [b, c, d, h, w]: [usize; 5] = input_shape
        .try_into()
        .map_err(|_| Error::config("maxpool3d expects 5-d input"))?;
    let os = grad_out.shape();
    let vol_out = os[2] * os[3] * os[4];
    let mut d_input = Tensor::zeros(&[b, c, d, h, w]);
    let dx = d_input.data_mut();
    let gd = grad_out.data();
    for p in 0..b * c {
        let dx_vol = &mut dx[p * d * h * w..(p + 1) * d * h * w];
        for i in 0..vol_out {
            dx_vol[argmax[p * vol_out + i] as usize] += gd[p * vol_out + i];
        }
    }
    Ok(d_input)
}

/// Stateful 2D max-pool layer.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub padding: usize,
    cache: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool2d {
    pub fn new(window: (usize, usize), stride: (usize, usize)) -> MaxPool2d {
        MaxPool2d {
            window,
            stride,
            padding: 0,
            cache: None,
        }
    }

    pub fn with_padding(mut self, padding: usize) -> MaxPool2d {
        self.padding = padding;
        self
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        let (out, argmax) = maxpool2d(input, self.window, self.stride, self.padding)?;
        if cache {
            self.cache = Some((input.shape().to_vec(), argmax));
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = self.cache.as_ref().expect("backward before forward");
        maxpool2d_backward(shape, grad_out, argmax)
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [b, c, h, w]: [usize; 4] = input
            .try_into()
            .map_err(|_| Error::config("maxpool2d expects 4-d input"))?;
        Ok(vec![
            b,
            c,
            pooled_extent(h, self.window.0, self.stride.0, self.padding)?,
            pooled_extent(w, self.window.1, self.stride.1, self.padding)?,
        ])
    }
}

/// Stateful 3D max-pool layer.
#[derive(Clone, Debug)]
pub struct MaxPool3d {
    pub window: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    cache: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool3d {
    pub fn new(window: (usize, usize, usize), stride: (usize, usize, usize)) -> MaxPool3d {
        MaxPool3d {
            window,
            stride,
            cache: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        let (out, argmax) = maxpool3d(input, self.window, self.stride)?;
        if cache {
            self.cache = Some((input.shape().to_vec(), argmax));
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = self.cache.as_ref().expect("backward before forward");
        maxpool3d_backward(shape, grad_out, argmax)
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [b, c, d, h, w]: [usize; 5] = input
            .try_into()
            .map_err(|_| Error::config("maxpool3d expects 5-d input"))?;
        Ok(vec![
            b,
            c,
            pooled_extent(d, self.window.0, self.stride.0, 0)?,
            pooled_extent(h, self.window.1, self.stride.1, 0)?,
            pooled_extent(w, self.window.2, self.stride.2, 0)?,
        ])
    }
}
