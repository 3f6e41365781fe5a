//! ROI cropping, sliding-window patch extraction, per-architecture input
//! views and patch-score aggregation.
//!
//! A preprocessed clip is `t×H×W`. Patches are cut from the central ROI
//! (default 32×32) by a sliding window; `h=w=64` is full-frame mode, which
//! bypasses the ROI crop entirely. The native patch layout is `N×t×h×w`
//! with time leading, so the 2D-network view is the identity, the 3D view
//! inserts a singleton channel axis and the sequence view flattens each
//! frame row-major to an `h·w` vector.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ROI: usize = 32;
pub const FULL_FRAME: usize = 64;

/// Spatial/temporal patch geometry plus extraction stride and ROI size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub h: usize,
    pub w: usize,
    pub t: usize,
    /// Spatial stride; `None` means non-overlapping (stride = patch size).
    pub stride: Option<usize>,
    pub roi: usize,
}

impl PatchSpec {
    pub fn new(h: usize, w: usize, t: usize) -> PatchSpec {
        PatchSpec {
            h,
            w,
            t,
            stride: None,
            roi: DEFAULT_ROI,
        }
    }

    pub fn is_full_frame(&self) -> bool {
        self.h == FULL_FRAME && self.w == FULL_FRAME
    }

    pub fn stride_y(&self) -> usize {
        self.stride.unwrap_or(self.h).max(1)
    }

    pub fn stride_x(&self) -> usize {
        self.stride.unwrap_or(self.w).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.t == 0 {
            return Err(Error::config("patch dimensions must be positive"));
        }
        if self.stride == Some(0) {
            return Err(Error::config("patch stride must be >= 1"));
        }
        if !self.is_full_frame() && (self.h > self.roi || self.w > self.roi) {
            return Err(Error::config(format!(
                "patch {}x{} exceeds ROI {} (only 64x64 full-frame mode may)",
                self.h, self.w, self.roi
            )));
        }
        Ok(())
    }
}

/// Extracted patches plus where each one came from.
#[derive(Clone, Debug)]
pub struct PatchBatch {
    /// `N×t×h×w`
    pub patches: Tensor,
    /// `(sample_id, y_offset, x_offset)` per patch, raster order.
    pub provenance: Vec<(String, usize, usize)>,
}

impl PatchBatch {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.patches.shape();
        (s[1], s[2], s[3])
    }

    /// Concatenates batches that share one patch geometry.
    pub fn concat(batches: &[PatchBatch]) -> Result<PatchBatch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::data("cannot concatenate zero patch batches"))?;
        let (t, h, w) = first.dims();
        let total: usize = batches.iter().map(|b| b.len()).sum();
        let mut data = Vec::with_capacity(total * t * h * w);
        let mut provenance = Vec::with_capacity(total);
        for b in batches {
            if b.dims() != (t, h, w) {
                return Err(Error::config("patch geometry mismatch in concat"));
            }
            data.extend_from_slice(b.patches.data());
            provenance.extend(b.provenance.iter().cloned());
        }
        Ok(PatchBatch {
            patches: Tensor::from_vec(&[total, t, h, w], data)?,
            provenance,
        })
    }
}

/// Centered crop `t×roi×roi`; odd margins put the extra pixel bottom/right.
pub fn extract_roi(clip: &Tensor, roi: usize) -> Result<Tensor> {
    let [t, h, w]: [usize; 3] = clip
        .shape()
        .try_into()
        .map_err(|_| Error::config("clip must be t×H×W"))?;
    if roi > h || roi > w {
        return Err(Error::config(format!(
            "ROI {roi} larger than frame {h}x{w}"
        )));
    }
    let y0 = (h - roi) / 2;
    let x0 = (w - roi) / 2;
    let mut out = Tensor::zeros(&[t, roi, roi]);
    let (src, dst) = (clip.data(), out.data_mut());
    for ti in 0..t {
        for y in 0..roi {
            let src_row = &src[(ti * h + y0 + y) * w + x0..(ti * h + y0 + y) * w + x0 + roi];
            dst[(ti * roi + y) * roi..(ti * roi + y) * roi + roi].copy_from_slice(src_row);
        }
    }
    Ok(out)
}

/// All window positions fully inside the clip at the spec's stride, raster
/// order.
pub fn extract_patches(clip: &Tensor, spec: &PatchSpec, sample_id: &str) -> Result<PatchBatch> {
    spec.validate()?;
    let [t, h, w]: [usize; 3] = clip
        .shape()
        .try_into()
        .map_err(|_| Error::config("clip must be t×H×W"))?;
    if t != spec.t {
        return Err(Error::config(format!(
            "clip has {t} frames, patch spec expects {}",
            spec.t
        )));
    }
    if spec.h > h || spec.w > w {
        return Err(Error::config(format!(
            "patch {}x{} larger than clip {h}x{w}",
            spec.h, spec.w
        )));
    }
    let (sy, sx) = (spec.stride_y(), spec.stride_x());
    let ny = (h - spec.h) / sy + 1;
    let nx = (w - spec.w) / sx + 1;
    let n = ny * nx;

    let mut data = Vec::with_capacity(n * spec.t * spec.h * spec.w);
    let mut provenance = Vec::with_capacity(n);
    let src = clip.data();
    for py in 0..ny {
        for px in 0..nx {
            let (y0, x0) = (py * sy, px * sx);
            for ti in 0..spec.t {
                for y in 0..spec.h {
                    let row0 = (ti * h + y0 + y) * w + x0;
                    data.extend_from_slice(&src[row0..row0 + spec.w]);
                }
            }
            provenance.push((sample_id.to_string(), y0, x0));
        }
    }
    Ok(PatchBatch {
        patches: Tensor::from_vec(&[n, spec.t, spec.h, spec.w], data)?,
        provenance,
    })
}

/// Preprocessed clip → patch batch, applying the ROI crop unless the spec
/// asks for full-frame mode.
pub fn clip_to_patches(clip: &Tensor, spec: &PatchSpec, sample_id: &str) -> Result<PatchBatch> {
    if spec.is_full_frame() {
        extract_patches(clip, spec, sample_id)
    } else {
        let roi = extract_roi(clip, spec.roi)?;
        extract_patches(&roi, spec, sample_id)
    }
}

/// Time-as-channels view for the 2D networks: the native layout, `N×t×h×w`.
pub fn to_2d_view(batch: &PatchBatch) -> Tensor {
    batch.patches.clone()
}

/// Singleton-channel volume view for the 3D network: `N×1×t×h×w`.
pub fn to_3d_view(batch: &PatchBatch) -> Tensor {
    let s = batch.patches.shape();
    batch
        .patches
        .clone()
        .reshape(&[s[0], 1, s[1], s[2], s[3]])
        .expect("same element count")
}

/// Sequence view for the LSTM: `t` tensors of shape `N×(h·w)`, each frame
/// flattened row-major.
pub fn to_sequence(batch: &PatchBatch) -> Vec<Tensor> {
    let (t, h, w) = batch.dims();
    let n = batch.len();
    let src = batch.patches.data();
    let mut seq = Vec::with_capacity(t);
    for ti in 0..t {
        let mut frame = Tensor::zeros(&[n, h * w]);
        let dst = frame.data_mut();
        for pi in 0..n {
            let start = (pi * t + ti) * h * w;
            dst[pi * h * w..(pi + 1) * h * w].copy_from_slice(&src[start..start + h * w]);
        }
        seq.push(frame);
    }
    seq
}

/// Mean patch score and the sample decision: `Attack` iff mean >= threshold.
///
/// Summation runs over value-sorted scores so the result does not depend on
/// patch order.
pub fn aggregate(scores: &[f32], threshold: f32) -> Result<(f32, Label)> {
    if scores.is_empty() {
        return Err(Error::data("cannot aggregate an empty score list"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let sum: f64 = sorted.iter().map(|&s| f64::from(s)).sum();
    let mean = (sum / scores.len() as f64) as f32;
    let label = if mean >= threshold {
        Label::Attack
    } else {
        Label::BonaFide
    };
    Ok((mean, label))
}

pub const DECISION_THRESHOLD: f32 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_clip(t: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(&[t, h, w], (0..t * h * w).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn roi_centering() {
        let clip = ramp_clip(2, 64, 64);
        let roi = extract_roi(&clip, 32).unwrap();
        assert_eq!(roi.shape(), &[2, 32, 32]);
        // pixel (16,16) of the input lands at (0,0)
        assert_eq!(roi.data()[0], clip.data()[16 * 64 + 16]);
    }

    #[test]
    fn roi_identity_when_full() {
        let clip = ramp_clip(1, 8, 8);
        let roi = extract_roi(&clip, 8).unwrap();
        assert_eq!(roi.data(), clip.data());
    }

    #[test]
    fn roi_too_large_is_config_error() {
        assert!(extract_roi(&ramp_clip(1, 8, 8), 9).is_err());
    }

    #[test]
    fn patch_counts() {
        let clip = ramp_clip(2, 32, 32);
        let n8 = extract_patches(&clip, &PatchSpec::new(8, 8, 2), "s").unwrap();
        assert_eq!(n8.len(), 16);
        let one = extract_patches(&clip, &PatchSpec::new(32, 32, 2), "s").unwrap();
        assert_eq!(one.len(), 1);
        let mut overlapping = PatchSpec::new(16, 16, 2);
        overlapping.stride = Some(8);
        let n9 = extract_patches(&clip, &overlapping, "s").unwrap();
        assert_eq!(n9.len(), 9);
    }

    #[test]
    fn provenance_is_raster_order() {
        let clip = ramp_clip(1, 32, 32);
        let batch = extract_patches(&clip, &PatchSpec::new(16, 16, 1), "sid").unwrap();
        let offs: Vec<(usize, usize)> = batch.provenance.iter().map(|p| (p.1, p.2)).collect();
        assert_eq!(offs, vec![(0, 0), (0, 16), (16, 0), (16, 16)]);
        assert!(batch.provenance.iter().all(|p| p.0 == "sid"));
    }

    #[test]
    fn views_are_rearrangements() {
        let clip = ramp_clip(3, 32, 32);
        let batch = extract_patches(&clip, &PatchSpec::new(8, 8, 3), "s").unwrap();
        let v2 = to_2d_view(&batch);
        assert_eq!(v2.shape(), &[16, 3, 8, 8]);
        assert_eq!(v2.data(), batch.patches.data());

        let v3 = to_3d_view(&batch);
        assert_eq!(v3.shape(), &[16, 1, 3, 8, 8]);
        assert_eq!(v3.data(), batch.patches.data());

        let seq = to_sequence(&batch);
        assert_eq!(seq.len(), 3);
        assert_eq!(seq[0].shape(), &[16, 64]);
        // frame k of patch n equals channel k of the 2D view
        for ti in 0..3 {
            for pi in 0..16 {
                let from_seq = &seq[ti].data()[pi * 64..(pi + 1) * 64];
                let from_2d = &v2.data()[(pi * 3 + ti) * 64..(pi * 3 + ti + 1) * 64];
                assert_eq!(from_seq, from_2d);
            }
        }
    }

    #[test]
    fn sequence_flattens_row_major() {
        let clip = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = PatchSpec {
            h: 2,
            w: 2,
            t: 1,
            stride: None,
            roi: 2,
        };
        let batch = extract_patches(&clip, &spec, "s").unwrap();
        let seq = to_sequence(&batch);
        assert_eq!(seq[0].data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn full_frame_mode_yields_one_patch() {
        let clip = ramp_clip(2, 64, 64);
        let spec = PatchSpec::new(64, 64, 2);
        assert!(spec.is_full_frame());
        let batch = clip_to_patches(&clip, &spec, "s").unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.patches.data(), clip.data());
    }

    #[test]
    fn aggregate_examples() {
        let (score, label) = aggregate(&[0.2, 0.8], DECISION_THRESHOLD).unwrap();
        assert_eq!(score, 0.5);
        assert_eq!(label, Label::Attack); // boundary goes to Attack

        let (score, label) = aggregate(&[0.0; 5], DECISION_THRESHOLD).unwrap();
        assert_eq!(score, 0.0);
        assert_eq!(label, Label::BonaFide);

        let (score, label) = aggregate(&[0.9; 16], DECISION_THRESHOLD).unwrap();
        assert!((score - 0.9).abs() < 1e-6);
        assert_eq!(label, Label::Attack);

        assert!(aggregate(&[], DECISION_THRESHOLD).is_err());
    }

    #[test]
    fn patch_spec_validation() {
        assert!(PatchSpec::new(8, 8, 5).validate().is_ok());
        assert!(PatchSpec::new(64, 64, 5).validate().is_ok()); // full frame
        assert!(PatchSpec::new(33, 33, 5).validate().is_err()); // > roi, not full frame
    }
}
