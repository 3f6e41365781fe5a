//! Dark-frame correction and clip normalization.

use super::LsciSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Takes frames `[offset, offset+t)`, subtracts the dark average per pixel,
/// clamps at zero and rescales the whole clip linearly to `[0,1]` by its own
/// min/max (a constant clip maps to all-zero). Returns `t×H×W`.
pub fn preprocess_from(sample: &LsciSample, offset: usize, t: usize) -> Result<Tensor> {
    let total = sample.frames as usize;
    if offset + t > total {
        return Err(Error::data(format!(
            "requested frames [{offset}, {}) but sample has {total}",
            offset + t
        )));
    }
    if t == 0 {
        return Err(Error::data("clip length must be >= 1"));
    }
    let (h, w) = (sample.height as usize, sample.width as usize);
    let hw = h * w;
    let mut data = vec![0.0f32; t * hw];
    for ti in 0..t {
        let frame = &sample.cube[(offset + ti) * hw..(offset + ti + 1) * hw];
        let out = &mut data[ti * hw..(ti + 1) * hw];
        for i in 0..hw {
            out[i] = (f32::from(frame[i]) - sample.dark_avg[i]).max(0.0);
        }
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span > 0.0 {
        for v in &mut data {
            *v = (*v - lo) / span;
        }
    } else {
        data.iter_mut().for_each(|v| *v = 0.0);
    }
    Tensor::from_vec(&[t, h, w], data)
}

/// Leading-window clip: frames `[0, t)`.
pub fn preprocess(sample: &LsciSample, t: usize) -> Result<Tensor> {
    preprocess_from(sample, 0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Finger, Label, SampleMeta};

    fn sample_with(cube: Vec<u16>, dark: Vec<f32>, h: u32, w: u32, t: u32) -> LsciSample {
        LsciSample {
            height: h,
            width: w,
            frames: t,
            cube,
            dark_avg: dark,
            meta: SampleMeta {
                sample_id: "s".into(),
                subject_id: "subj".into(),
                finger: Finger::LeftMiddle,
                label: Label::BonaFide,
                species: None,
                capture_index: 0,
            },
        }
    }

    #[test]
    fn cube_equal_to_dark_maps_to_zero() {
        let dark = vec![100.0f32; 4];
        let cube = vec![100u16; 4 * 3];
        let s = sample_with(cube, dark, 2, 2, 3);
        let out = preprocess(&s, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_rescale_maps_midpoint() {
        // after subtraction the clip holds {10, 110, 60}: 60 -> 0.5
        let dark = vec![0.0f32; 1];
        let cube = vec![10u16, 110, 60];
        let s = sample_with(cube, dark, 1, 1, 3);
        let out = preprocess(&s, 3).unwrap();
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[1], 1.0);
        assert!((out.data()[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn output_shape_and_range() {
        let hw = 64 * 64;
        let cube: Vec<u16> = (0..hw * 10).map(|i| (i % 4096) as u16).collect();
        let s = sample_with(cube, vec![5.0; hw], 64, 64, 10);
        let out = preprocess(&s, 7).unwrap();
        assert_eq!(out.shape(), &[7, 64, 64]);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn too_many_frames_is_data_error() {
        let s = sample_with(vec![0; 4], vec![0.0; 4], 2, 2, 1);
        assert!(matches!(preprocess(&s, 2), Err(Error::Data(_))));
    }

    #[test]
    fn offset_window() {
        let dark = vec![0.0f32; 1];
        let cube = vec![0u16, 50, 100];
        let s = sample_with(cube, dark, 1, 1, 3);
        let out = preprocess_from(&s, 1, 2).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0]);
    }
}
