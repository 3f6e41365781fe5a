//! 2D and 3D convolution (cross-correlation convention, no kernel flip).

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::tensor::Tensor;
use rand::Rng;

fn out_extent(input: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::config(format!(
            "kernel {kernel} exceeds padded input {padded}"
        )));
    }
    let out = (padded - kernel) / stride + 1;
    if out == 0 {
        return Err(Error::config("zero-sized convolution output"));
    }
    Ok(out)
}

/// Valid output range `[o0, o1)` such that `o*stride + k - padding` stays
/// inside `[0, input)` for a fixed kernel offset `k`.
fn valid_out_range(
    out: usize,
    input: usize,
    k: usize,
    padding: usize,
    stride: usize,
) -> (usize, usize) {
    let o0 = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    let o1 = if input + padding > k {
        (((input + padding - k - 1) / stride) + 1).min(out)
    } else {
        0
    };
    (o0.min(o1), o1)
}

/// `input B×C×H×W`, `weight O×C×kh×kw`, `bias O` → `B×O×H'×W'`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    padding: usize,
    stride: usize,
) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::config("convolution stride must be >= 1"));
    }
    let [b, c, h, w]: [usize; 4] = dims4(input, "conv2d input")?;
    let [o, wc, kh, kw]: [usize; 4] = dims4(weight, "conv2d weight")?;
    if wc != c {
        return Err(Error::config(format!(
            "conv2d channel mismatch: input has {c}, weight expects {wc}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::config("conv2d bias shape must be [out_channels]"));
    }
    let oh = out_extent(h, kh, padding, stride)?;
    let ow = out_extent(w, kw, padding, stride)?;

    let mut out = Tensor::zeros(&[b, o, oh, ow]);
    let (xd, wd, bd) = (input.data(), weight.data(), bias.data());
    let od = out.data_mut();
    let geo = PlaneGeom {
        h,
        w,
        oh,
        ow,
        kh,
        kw,
        ph: padding,
        pw: padding,
        sh: stride,
        sw: stride,
    };
    for bi in 0..b {
        for oi in 0..o {
            let out_plane = &mut od[(bi * o + oi) * oh * ow..(bi * o + oi + 1) * oh * ow];
            out_plane.iter_mut().for_each(|v| *v = bd[oi]);
            for ci in 0..c {
                let in_plane = &xd[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                let w_plane = &wd[(oi * c + ci) * kh * kw..(oi * c + ci + 1) * kh * kw];
                forward_plane(out_plane, in_plane, w_plane, &geo);
            }
        }
    }
    Ok(out)
}

/// Per-plane geometry shared by the 2D kernels and the 3D inner slices.
struct PlaneGeom {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    sh: usize,
    sw: usize,
}

fn forward_plane(out_plane: &mut [f32], in_plane: &[f32], w_plane: &[f32], g: &PlaneGeom) {
    for ky in 0..g.kh {
        let (oy0, oy1) = valid_out_range(g.oh, g.h, ky, g.ph, g.sh);
        for kx in 0..g.kw {
            let wv = w_plane[ky * g.kw + kx];
            if wv == 0.0 {
                continue;
            }
            let (ox0, ox1) = valid_out_range(g.ow, g.w, kx, g.pw, g.sw);
            for oy in oy0..oy1 {
                let iy = oy * g.sh + ky - g.ph;
                let in_row = &in_plane[iy * g.w..(iy + 1) * g.w];
                let out_row = &mut out_plane[oy * g.ow..(oy + 1) * g.ow];
                if g.sw == 1 {
                    let ix0 = ox0 + kx - g.pw;
                    let n = ox1 - ox0;
                    for (ov, &iv) in out_row[ox0..ox1].iter_mut().zip(&in_row[ix0..ix0 + n]) {
                        *ov += wv * iv;
                    }
                } else {
                    for ox in ox0..ox1 {
                        out_row[ox] += wv * in_row[ox * g.sw + kx - g.pw];
                    }
                }
            }
        }
    }
}

fn backward_plane(
    g_plane: &[f32],
    in_plane: &[f32],
    dx_plane: &mut [f32],
    w_plane: &[f32],
    dw_plane: &mut [f32],
    g: &PlaneGeom,
) {
    for ky in 0..g.kh {
        let (oy0, oy1) = valid_out_range(g.oh, g.h, ky, g.ph, g.sh);
        for kx in 0..g.kw {
            let (ox0, ox1) = valid_out_range(g.ow, g.w, kx, g.pw, g.sw);
            if ox0 >= ox1 {
                continue;
            }
            let wv = w_plane[ky * g.kw + kx];
            let mut dw_acc = 0.0f32;
            for oy in oy0..oy1 {
                let iy = oy * g.sh + ky - g.ph;
                let g_row = &g_plane[oy * g.ow..(oy + 1) * g.ow];
                let in_row = &in_plane[iy * g.w..(iy + 1) * g.w];
                let dx_row = &mut dx_plane[iy * g.w..(iy + 1) * g.w];
                if g.sw == 1 {
                    let ix0 = ox0 + kx - g.pw;
                    let n = ox1 - ox0;
                    dw_acc += crate::linalg::dot(&g_row[ox0..ox1], &in_row[ix0..ix0 + n]);
                    crate::linalg::axpy(&mut dx_row[ix0..ix0 + n], wv, &g_row[ox0..ox1]);
                } else {
                    for ox in ox0..ox1 {
                        let ix = ox * g.sw + kx - g.pw;
                        dw_acc += g_row[ox] * in_row[ix];
                        dx_row[ix] += wv * g_row[ox];
                    }
                }
            }
            dw_plane[ky * g.kw + kx] += dw_acc;
        }
    }
}

/// Gradients wrt input, weight and bias given the output gradient.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    padding: usize,
    stride: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, c, h, w]: [usize; 4] = dims4(input, "conv2d input")?;
    let [o, _, kh, kw]: [usize; 4] = dims4(weight, "conv2d weight")?;
    let [gb, go, oh, ow]: [usize; 4] = dims4(grad_out, "conv2d grad_out")?;
    if gb != b || go != o {
        return Err(Error::config("conv2d grad_out shape mismatch"));
    }

    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[o]);
    let (xd, wd, gd) = (input.data(), weight.data(), grad_out.data());
    let (dx, dw, db) = (d_input.data_mut(), d_weight.data_mut(), d_bias.data_mut());
    let geo = PlaneGeom {
        h,
        w,
        oh,
        ow,
        kh,
        kw,
        ph: padding,
        pw: padding,
        sh: stride,
        sw: stride,
    };

    for bi in 0..b {
        for oi in 0..o {
            let g_plane = &gd[(bi * o + oi) * oh * ow..(bi * o + oi + 1) * oh * ow];
            db[oi] += g_plane.iter().sum::<f32>();
            for ci in 0..c {
                let in_plane = &xd[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                let dx_plane = &mut dx[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                let w_plane = &wd[(oi * c + ci) * kh * kw..(oi * c + ci + 1) * kh * kw];
                let dw_plane = &mut dw[(oi * c + ci) * kh * kw..(oi * c + ci + 1) * kh * kw];
                backward_plane(g_plane, in_plane, dx_plane, w_plane, dw_plane, &geo);
            }
        }
    }
    Ok((d_input, d_weight, d_bias))
}

/// `input B×C×D×H×W`, `weight O×C×kd×kh×kw`, `bias O` → `B×O×D'×H'×W'`.
pub fn conv3d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    padding: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<Tensor> {
    let (pd, ph, pw) = padding;
    let (sd, sh, sw) = stride;
    if sd == 0 || sh == 0 || sw == 0 {
        return Err(Error::config("convolution stride must be >= 1"));
    }
    let [b, c, d, h, w]: [usize; 5] = dims5(input, "conv3d input")?;
    let [o, wc, kd, kh, kw]: [usize; 5] = dims5(weight, "conv3d weight")?;
    if wc != c {
        return Err(Error::config(format!(
            "conv3d channel mismatch: input has {c}, weight expects {wc}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::config("conv3d bias shape must be [out_channels]"));
    }
    let od = out_extent(d, kd, pd, sd)?;
    let oh = out_extent(h, kh, ph, sh)?;
    let ow = out_extent(w, kw, pw, sw)?;

    let mut out = Tensor::zeros(&[b, o, od, oh, ow]);
    let (xd, wd, bd) = (input.data(), weight.data(), bias.data());
    let outd = out.data_mut();
    let geo = PlaneGeom {
        h,
        w,
        oh,
        ow,
        kh,
        kw,
        ph,
        pw,
        sh,
        sw,
    };
    for bi in 0..b {
        for oi in 0..o {
            let out_vol =
                &mut outd[(bi * o + oi) * od * oh * ow..(bi * o + oi + 1) * od * oh * ow];
            out_vol.iter_mut().for_each(|v| *v = bd[oi]);
            for ci in 0..c {
                let in_vol = &xd[(bi * c + ci) * d * h * w..(bi * c + ci + 1) * d * h * w];
                let w_vol = &wd[(oi * c + ci) * kd * kh * kw..(oi * c + ci + 1) * kd * kh * kw];
                for kz in 0..kd {
                    let (oz0, oz1) = valid_out_range(od, d, kz, pd, sd);
                    for oz in oz0..oz1 {
                        let iz = oz * sd + kz - pd;
                        let in_plane = &in_vol[iz * h * w..(iz + 1) * h * w];
                        let out_plane = &mut out_vol[oz * oh * ow..(oz + 1) * oh * ow];
                        let w_plane = &w_vol[kz * kh * kw..(kz + 1) * kh * kw];
                        forward_plane(out_plane, in_plane, w_plane, &geo);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients wrt input, weight and bias for [`conv3d`].
pub fn conv3d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    padding: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, c, d, h, w]: [usize; 5] = dims5(input, "conv3d input")?;
    let [o, _, kd, kh, kw]: [usize; 5] = dims5(weight, "conv3d weight")?;
    let [gb, go, od, oh, ow]: [usize; 5] = dims5(grad_out, "conv3d grad_out")?;
    if gb != b || go != o {
        return Err(Error::config("conv3d grad_out shape mismatch"));
    }
    let (pd, ph, pw) = padding;
    let (sd, sh, sw) = stride;

    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[o]);
    let (xd, wd, gd) = (input.data(), weight.data(), grad_out.data());
    let (dx, dw, db) = (d_input.data_mut(), d_weight.data_mut(), d_bias.data_mut());
    let geo = PlaneGeom {
        h,
        w,
        oh,
        ow,
        kh,
        kw,
        ph,
        pw,
        sh,
        sw,
    };

    for bi in 0..b {
        for oi in 0..o {
            let g_vol = &gd[(bi * o + oi) * od * oh * ow..(bi * o + oi + 1) * od * oh * ow];
            db[oi] += g_vol.iter().sum::<f32>();
            for ci in 0..c {
                let in_vol = &xd[(bi * c + ci) * d * h * w..(bi * c + ci + 1) * d * h * w];
                let dx_vol = &mut dx[(bi * c + ci) * d * h * w..(bi * c + ci + 1) * d * h * w];
                let w_vol = &wd[(oi * c + ci) * kd * kh * kw..(oi * c + ci + 1) * kd * kh * kw];
                let dw_vol =
                    &mut dw[(oi * c + ci) * kd * kh * kw..(oi * c + ci + 1) * kd * kh * kw];
                for kz in 0..kd {
                    let (oz0, oz1) = valid_out_range(od, d, kz, pd, sd);
                    for oz in oz0..oz1 {
                        let iz = oz * sd + kz - pd;
                        let g_plane = &g_vol[oz * oh * ow..(oz + 1) * oh * ow];
                        let in_plane = &in_vol[iz * h * w..(iz + 1) * h * w];
                        let dx_plane = &mut dx_vol[iz * h * w..(iz + 1) * h * w];
                        let w_plane = &w_vol[kz * kh * kw..(kz + 1) * kh * kw];
                        let dw_plane = &mut dw_vol[kz * kh * kw..(kz + 1) * kh * kw];
                        backward_plane(g_plane, in_plane, dx_plane, w_plane, dw_plane, &geo);
                    }
                }
            }
        }
    }
    Ok((d_input, d_weight, d_bias))
}

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    t.shape()
        .try_into()
        .map_err(|_| Error::config(format!("{what} must be 4-dimensional, got {:?}", t.shape())))
}

fn dims5(t: &Tensor, what: &str) -> Result<[usize; 5]> {
    t.shape()
        .try_into()
        .map_err(|_| Error::config(format!("{what} must be 5-dimensional, got {:?}", t.shape())))
}

/// Trainable 2D convolution layer.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub padding: usize,
    pub stride: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        padding: usize,
        rng: &mut R,
    ) -> Conv2d {
        let fan_in = in_ch * kernel.0 * kernel.1;
        Conv2d {
            weight: Param::uniform(
                format!("{name}.weight"),
                &[out_ch, in_ch, kernel.0, kernel.1],
                fan_in,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            padding,
            stride: 1,
            input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        if cache {
            self.input = Some(input.clone());
        }
        conv2d(
            input,
            &self.weight.value,
            &self.bias.value,
            self.padding,
            self.stride,
        )
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().expect("backward before forward");
        let (dx, dw, db) =
            conv2d_backward(input, &self.weight.value, grad_out, self.padding, self.stride)?;
        crate::linalg::axpy(self.weight.grad.data_mut(), 1.0, dw.data());
        crate::linalg::axpy(self.bias.grad.data_mut(), 1.0, db.data());
        Ok(dx)
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [b, _, h, w]: [usize; 4] = input
            .try_into()
            .map_err(|_| Error::config("conv2d expects 4-d input"))?;
        let ws = self.weight.value.shape();
        Ok(vec![
            b,
            ws[0],
            out_extent(h, ws[2], self.padding, self.stride)?,
            out_extent(w, ws[3], self.padding, self.stride)?,
        ])
    }
}

/// Trainable 3D convolution layer.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub weight: Param,
    pub bias: Param,
    pub padding: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    input: Option<Tensor>,
}

impl Conv3d {
    pub fn new<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize, usize),
        padding: (usize, usize, usize),
        rng: &mut R,
    ) -> Conv3d {
        let fan_in = in_ch * kernel.0 * kernel.1 * kernel.2;
        Conv3d {
            weight: Param::uniform(
                format!("{name}.weight"),
                &[out_ch, in_ch, kernel.0, kernel.1, kernel.2],
                fan_in,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            padding,
            stride: (1, 1, 1),
            input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        if cache {
            self.input = Some(input.clone());
        }
        conv3d(
            input,
            &self.weight.value,
            &self.bias.value,
            self.padding,
            self.stride,
        )
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().expect("backward before forward");
        let (dx, dw, db) =
            conv3d_backward(input, &self.weight.value, grad_out, self.padding, self.stride)?;
        crate::linalg::axpy(self.weight.grad.data_mut(), 1.0, dw.data());
        crate::linalg::axpy(self.bias.grad.data_mut(), 1.0, db.data());
        Ok(dx)
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [b, _, d, h, w]: [usize; 5] = input
            .try_into()
            .map_err(|_| Error::config("conv3d expects 5-d input"))?;
        let ws = self.weight.value.shape();
        Ok(vec![
            b,
            ws[0],
            out_extent(d, ws[2], self.padding.0, self.stride.0)?,
            out_extent(h, ws[3], self.padding.1, self.stride.1)?,
            out_extent(w, ws[4], self.padding.2, self.stride.2)?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, OpFragment};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Independent sliding-window oracle for 2D cross-correlation.
    fn conv2d_oracle(
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        padding: usize,
        stride: usize,
    ) -> Tensor {
        let (b, c, h, w) = {
            let s = input.shape();
            (s[0], s[1], s[2], s[3])
        };
        let (o, kh, kw) = {
            let s = weight.shape();
            (s[0], s[2], s[3])
        };
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let mut out = Tensor::zeros(&[b, o, oh, ow]);
        for bi in 0..b {
            for oi in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias.data()[oi];
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let iv = input.data()
                                        [((bi * c + ci) * h + iy as usize) * w + ix as usize];
                                    let wv =
                                        weight.data()[((oi * c + ci) * kh + ky) * kw + kx];
                                    acc += iv * wv;
                                }
                            }
                        }
                        out.data_mut()[((bi * o + oi) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn all_ones_padded_window_counts() {
        let input = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let weight = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &weight, &bias, 1, 1).unwrap();
        // corners see 4 cells, edge-centers 6, the center all 9
        let expect = [4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0];
        assert_eq!(out.data(), &expect);
        let oracle = conv2d_oracle(&input, &weight, &bias, 1, 1);
        assert_eq!(out.data(), oracle.data());
    }

    #[test]
    fn identity_kernel_selects_channel_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let input = Tensor::rand_uniform(&[2, 3, 4, 5], -1.0, 1.0, &mut rng);
        let mut wdata = vec![0.0f32; 3];
        wdata[0] = 1.0;
        let weight = Tensor::from_vec(&[1, 3, 1, 1], wdata).unwrap();
        let out = conv2d(&input, &weight, &Tensor::zeros(&[1]), 0, 1).unwrap();
        for bi in 0..2 {
            let ch0 = &input.data()[bi * 3 * 20..bi * 3 * 20 + 20];
            let got = &out.data()[bi * 20..(bi + 1) * 20];
            assert_eq!(got, ch0);
        }
    }

    #[test]
    fn agrees_with_oracle_on_random_strided_case() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let input = Tensor::rand_uniform(&[2, 3, 7, 6], -1.0, 1.0, &mut rng);
        let weight = Tensor::rand_uniform(&[4, 3, 3, 3], -0.5, 0.5, &mut rng);
        let bias = Tensor::rand_uniform(&[4], -0.2, 0.2, &mut rng);
        for (padding, stride) in [(0, 1), (1, 1), (2, 2), (0, 3)] {
            let out = conv2d(&input, &weight, &bias, padding, stride).unwrap();
            let oracle = conv2d_oracle(&input, &weight, &bias, padding, stride);
            assert_eq!(out.shape(), oracle.shape());
            for (a, b) in out.data().iter().zip(oracle.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn channel_mismatch_and_zero_output_are_config_errors() {
        let input = Tensor::zeros(&[1, 2, 4, 4]);
        let weight = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&input, &weight, &Tensor::zeros(&[1]), 0, 1).is_err());
        let big_kernel = Tensor::zeros(&[1, 2, 7, 7]);
        assert!(conv2d(&input, &big_kernel, &Tensor::zeros(&[1]), 0, 1).is_err());
    }

    fn conv2d_fragment(
        seed: u64,
    ) -> OpFragment<
        impl FnMut(&[Param]) -> Result<Tensor>,
        impl FnMut(&[Param], &Tensor) -> Result<Vec<Tensor>>,
    > {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let input = Param::new("input", Tensor::rand_uniform(&[2, 2, 5, 5], -1.0, 1.0, &mut rng));
        let weight = Param::new(
            "weight",
            Tensor::rand_uniform(&[3, 2, 3, 3], -0.5, 0.5, &mut rng),
        );
        let bias = Param::new("bias", Tensor::rand_uniform(&[3], -0.2, 0.2, &mut rng));
        let n_out = 2 * 3 * 5 * 5;
        let proj = (0..n_out).map(|i| ((i as f32) * 0.61).sin()).collect();
        OpFragment {
            params: vec![input, weight, bias],
            forward: |p: &[Param]| conv2d(&p[0].value, &p[1].value, &p[2].value, 1, 1),
            backward: |p: &[Param], g: &Tensor| {
                let (dx, dw, db) = conv2d_backward(&p[0].value, &p[1].value, g, 1, 1)?;
                Ok(vec![dx, dw, db])
            },
            proj,
        }
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut frag = conv2d_fragment(3);
        let report = grad_check(&mut frag, 1e-3).unwrap();
        assert!(
            report.passes(1e-3),
            "max rel err {}: {:?}",
            report.max_rel_err,
            report.params
        );
    }

    #[test]
    fn conv3d_depth_one_matches_conv2d() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let input2 = Tensor::rand_uniform(&[2, 3, 6, 5], -1.0, 1.0, &mut rng);
        let weight2 = Tensor::rand_uniform(&[4, 3, 3, 3], -0.5, 0.5, &mut rng);
        let bias = Tensor::rand_uniform(&[4], -0.1, 0.1, &mut rng);
        let input3 = input2.clone().reshape(&[2, 3, 1, 6, 5]).unwrap();
        let weight3 = weight2.clone().reshape(&[4, 3, 1, 3, 3]).unwrap();
        let out2 = conv2d(&input2, &weight2, &bias, 1, 1).unwrap();
        let out3 = conv3d(&input3, &weight3, &bias, (0, 1, 1), (1, 1, 1)).unwrap();
        assert_eq!(out3.shape(), &[2, 4, 1, 6, 5]);
        for (a, b) in out2.data().iter().zip(out3.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn all_ones_volume_sums_to_kernel_size() {
        let input = Tensor::filled(&[1, 1, 5, 3, 3], 1.0);
        let weight = Tensor::filled(&[1, 1, 5, 3, 3], 1.0);
        let out = conv3d(&input, &weight, &Tensor::zeros(&[1]), (0, 0, 0), (1, 1, 1)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(out.data(), &[45.0]);
    }

    #[test]
    fn conv3d_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let input = Param::new(
            "input",
            Tensor::rand_uniform(&[1, 1, 6, 4, 4], -1.0, 1.0, &mut rng),
        );
        let weight = Param::new(
            "weight",
            Tensor::rand_uniform(&[2, 1, 3, 3, 3], -0.5, 0.5, &mut rng),
        );
        let bias = Param::new("bias", Tensor::rand_uniform(&[2], -0.2, 0.2, &mut rng));
        let n_out = 2 * 6 * 4 * 4; // padding (1,1,1) keeps extents
        let proj = (0..n_out).map(|i| ((i as f32) * 0.47).cos()).collect();
        let mut frag = OpFragment {
            params: vec![input, weight, bias],
            forward: |p: &[Param]| {
                conv3d(&p[0].value, &p[1].value, &p[2].value, (1, 1, 1), (1, 1, 1))
            },
            backward: |p: &[Param], g: &Tensor| {
                let (dx, dw, db) =
                    conv3d_backward(&p[0].value, &p[1].value, g, (1, 1, 1), (1, 1, 1))?;
                Ok(vec![dx, dw, db])
            },
            proj,
        };
        let report = grad_check(&mut frag, 1e-3).unwrap();
        assert!(
            report.passes(1e-3),
            "max rel err {}: {:?}",
            report.max_rel_err,
            report.params
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let input = Tensor::rand_uniform(&[1, 2, 6, 6], -1.0, 1.0, &mut rng);
        let weight = Tensor::rand_uniform(&[3, 2, 3, 3], -0.5, 0.5, &mut rng);
        let bias = Tensor::rand_uniform(&[3], -0.1, 0.1, &mut rng);
        let a = conv2d(&input, &weight, &bias, 1, 1).unwrap();
        let b = conv2d(&input, &weight, &bias, 1, 1).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
