//! Synthetic dynamic-speckle generator.
//!
//! The generator reproduces the one property the classifiers exploit:
//! temporal decorrelation of the speckle field. Each frame is the squared
//! magnitude of a spatially low-pass-filtered complex Gaussian field; the
//! field evolves as a stationary AR(1) process with per-frame correlation
//! `rho`. Live fingers decorrelate fast (small `rho`), overlay attacks are
//! nearly frozen (`rho` close to 1). On top of the signal sit a smooth
//! static offset field (stored as the dark average) and per-frame Gaussian
//! read noise.

use super::{Finger, Label, LsciSample, Manifest, ManifestEntry, SampleMeta, Species};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f32::consts::PI;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeckleParams {
    /// Spatial correlation length of the speckle field, in pixels.
    pub correlation_length: f32,
    /// Per-frame field correlation for bona fide captures.
    pub rho_bona_fide: f32,
    /// Per-frame field correlation for attack captures.
    pub rho_attack: f32,
    /// Target mean intensity of the speckle signal, in sensor counts.
    pub mean_intensity: f32,
    /// Std of the additive per-frame read noise, in counts.
    pub read_noise: f32,
    /// Base level of the static offset field, in counts.
    pub dark_base: f32,
    /// Amplitude of the smooth variation of the offset field, in counts.
    pub dark_amplitude: f32,
}

impl Default for SpeckleParams {
    fn default() -> SpeckleParams {
        SpeckleParams {
            correlation_length: 2.0,
            rho_bona_fide: 0.85,
            rho_attack: 0.999,
            mean_intensity: 2000.0,
            read_noise: 20.0,
            dark_base: 100.0,
            dark_amplitude: 30.0,
        }
    }
}

impl SpeckleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [
            ("rho_bona_fide", self.rho_bona_fide),
            ("rho_attack", self.rho_attack),
        ] {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::config(format!("{name} must be in (0,1], got {rho}")));
            }
        }
        if self.correlation_length <= 0.0
            || self.mean_intensity <= 0.0
            || self.read_noise < 0.0
            || self.dark_base < 0.0
            || self.dark_amplitude < 0.0
        {
            return Err(Error::config("speckle parameters must be positive"));
        }
        Ok(())
    }

    fn rho_for(&self, label: Label) -> f32 {
        match label {
            Label::BonaFide => self.rho_bona_fide,
            Label::Attack => self.rho_attack,
        }
    }
}

/// Standard normal draws via Box-Muller; two per call.
fn fill_normal<R: Rng>(buf: &mut [f32], rng: &mut R) {
    let mut i = 0;
    while i < buf.len() {
        let u1: f32 = rng.random_range(f32::MIN_POSITIVE..1.0);
        let u2: f32 = rng.random_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        buf[i] = r * (2.0 * PI * u2).cos();
        if i + 1 < buf.len() {
            buf[i + 1] = r * (2.0 * PI * u2).sin();
        }
        i += 2;
    }
}

/// Separable Gaussian blur with periodic boundaries.
struct Blur {
    taps: Vec<f32>,
    radius: usize,
}

impl Blur {
    fn new(sigma: f32) -> Blur {
        let radius = (3.0 * sigma).ceil() as usize;
        let mut taps: Vec<f32> = (0..=2 * radius)
            .map(|i| {
                let x = i as f32 - radius as f32;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f32 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Blur { taps, radius }
    }

    fn apply(&self, field: &mut [f32], h: usize, w: usize, scratch: &mut [f32]) {
        let r = self.radius as isize;
        // rows
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (ti, &tap) in self.taps.iter().enumerate() {
                    let xx = (x as isize + ti as isize - r).rem_euclid(w as isize) as usize;
                    acc += tap * field[y * w + xx];
                }
                scratch[y * w + x] = acc;
            }
        }
        // columns
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (ti, &tap) in self.taps.iter().enumerate() {
                    let yy = (y as isize + ti as isize - r).rem_euclid(h as isize) as usize;
                    acc += tap * scratch[yy * w + x];
                }
                field[y * w + x] = acc;
            }
        }
    }
}

/// Generates one capture for the class carried by `meta`.
pub fn synth_sample(
    meta: SampleMeta,
    geometry: (u32, u32, u32),
    params: &SpeckleParams,
    seed: u64,
) -> Result<LsciSample> {
    params.validate()?;
    meta.validate()?;
    let (height, width, frames) = geometry;
    if height == 0 || width == 0 || frames == 0 {
        return Err(Error::config("sample geometry must be positive"));
    }
    let (h, w, t) = (height as usize, width as usize, frames as usize);
    let hw = h * w;
    let rho = params.rho_for(meta.label);
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();

    let mut rng = seeded_rng(seed, "speckle", 0);
    let blur = Blur::new(params.correlation_length);
    let mut scratch = vec![0.0f32; hw];

    // Static offset field: smooth positive bump pattern around dark_base.
    let mut offset = vec![0.0f32; hw];
    fill_normal(&mut offset, &mut rng);
    blur.apply(&mut offset, h, w, &mut scratch);
    let o_std = {
        let mean = offset.iter().sum::<f32>() / hw as f32;
        let var = offset.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / hw as f32;
        offset.iter_mut().for_each(|v| *v -= mean);
        var.sqrt().max(1e-6)
    };
    let dark_avg: Vec<f32> = offset
        .iter()
        .map(|&v| (params.dark_base + params.dark_amplitude * v / o_std).max(0.0))
        .collect();

    // Initial filtered complex Gaussian field.
    let mut re = vec![0.0f32; hw];
    let mut im = vec![0.0f32; hw];
    fill_normal(&mut re, &mut rng);
    fill_normal(&mut im, &mut rng);
    blur.apply(&mut re, h, w, &mut scratch);
    blur.apply(&mut im, h, w, &mut scratch);

    let mean_sq = re
        .iter()
        .zip(&im)
        .map(|(&a, &b)| a * a + b * b)
        .sum::<f32>()
        / hw as f32;
    let scale = params.mean_intensity / mean_sq.max(1e-12);

    let mut cube = Vec::with_capacity(hw * t);
    let mut noise = vec![0.0f32; hw];
    let mut fresh_re = vec![0.0f32; hw];
    let mut fresh_im = vec![0.0f32; hw];
    for step in 0..t {
        if step > 0 {
            fill_normal(&mut fresh_re, &mut rng);
            fill_normal(&mut fresh_im, &mut rng);
            blur.apply(&mut fresh_re, h, w, &mut scratch);
            blur.apply(&mut fresh_im, h, w, &mut scratch);
            for i in 0..hw {
                re[i] = rho * re[i] + innovation * fresh_re[i];
                im[i] = rho * im[i] + innovation * fresh_im[i];
            }
        }
        fill_normal(&mut noise, &mut rng);
        for i in 0..hw {
            let intensity = (re[i] * re[i] + im[i] * im[i]) * scale;
            let counts = intensity + dark_avg[i] + params.read_noise * noise[i];
            cube.push(counts.round().clamp(0.0, 65535.0) as u16);
        }
    }

    let sample = LsciSample {
        height,
        width,
        frames,
        cube,
        dark_avg,
        meta,
    };
    sample.validate()?;
    Ok(sample)
}

/// Mean over pixels of the per-pixel temporal standard deviation of the raw
/// cube; the statistic that separates live captures from frozen overlays.
pub fn mean_temporal_std(sample: &LsciSample) -> f64 {
    let hw = (sample.height * sample.width) as usize;
    let t = sample.frames as usize;
    let mut acc = 0.0f64;
    for px in 0..hw {
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for ti in 0..t {
            let v = f64::from(sample.cube[ti * hw + px]);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / t as f64;
        let var = (sum_sq / t as f64 - mean * mean).max(0.0);
        acc += var.sqrt();
    }
    acc / hw as f64
}

/// Per-class sample counts plus the geometry and physics for one generated
/// dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub bona_fide: usize,
    pub species_counts: Vec<(Species, usize)>,
    pub subjects: usize,
    pub height: u32,
    pub width: u32,
    pub frames: u32,
    pub params: SpeckleParams,
    pub seed: u64,
}

impl DatasetSpec {
    /// Desk-scale default: benchmark species split (218 attacks), 400 bona
    /// fide, 64×64×100 cubes.
    pub fn desk_default(seed: u64) -> DatasetSpec {
        DatasetSpec {
            bona_fide: 400,
            species_counts: Species::BENCHMARK_COUNTS.to_vec(),
            subjects: 40,
            height: 64,
            width: 64,
            frames: 100,
            params: SpeckleParams::default(),
            seed,
        }
    }

    pub fn total_samples(&self) -> usize {
        self.bona_fide + self.species_counts.iter().map(|(_, n)| n).sum::<usize>()
    }
}

/// Up to 3 captures on each of 6 fingers per subject.
pub const MAX_SAMPLES_PER_SUBJECT: usize = 18;

/// Generates every sample of `spec` into `out_dir` and writes
/// `manifest.json` next to them. Samples are dealt to subjects round-robin,
/// filling finger/capture slots in order.
pub fn make_synth_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    spec.params.validate()?;
    if spec.subjects == 0 {
        return Err(Error::config("dataset needs at least one subject"));
    }
    let total = spec.total_samples();
    let capacity = spec.subjects * MAX_SAMPLES_PER_SUBJECT;
    if total > capacity {
        return Err(Error::config(format!(
            "{total} samples exceed capacity {capacity} ({} subjects x {MAX_SAMPLES_PER_SUBJECT})",
            spec.subjects
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    // Class list in deterministic order: bona fide first, then species.
    let mut classes: Vec<(Label, Option<Species>)> = Vec::with_capacity(total);
    classes.extend(std::iter::repeat_n((Label::BonaFide, None), spec.bona_fide));
    for &(species, count) in &spec.species_counts {
        classes.extend(std::iter::repeat_n((Label::Attack, Some(species)), count));
    }

    let mut slots_used = vec![0usize; spec.subjects];
    let mut entries = Vec::with_capacity(total);
    for (idx, (label, species)) in classes.into_iter().enumerate() {
        let subject = idx % spec.subjects;
        let slot = slots_used[subject];
        slots_used[subject] += 1;
        let meta = SampleMeta {
            sample_id: format!("sample_{idx:05}"),
            subject_id: format!("subject_{subject:03}"),
            finger: Finger::ALL[slot % 6],
            label,
            species,
            capture_index: (slot / 6) as u32,
        };
        let sample = synth_sample(
            meta.clone(),
            (spec.height, spec.width, spec.frames),
            &spec.params,
            crate::rng::derive_seed(spec.seed, "sample", idx as u64),
        )?;
        let file_name = format!("{}.lsc", meta.sample_id);
        super::format::save_sample(&sample, &out_dir.join(&file_name))?;
        entries.push(ManifestEntry {
            path: file_name,
            meta,
        });
    }

    let manifest = Manifest::new(entries)?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attack_meta(id: &str) -> SampleMeta {
        SampleMeta {
            sample_id: id.into(),
            subject_id: "subject_000".into(),
            finger: Finger::LeftIndex,
            label: Label::Attack,
            species: Some(Species::SiliconeII),
            capture_index: 0,
        }
    }

    fn bona_meta(id: &str) -> SampleMeta {
        SampleMeta {
            sample_id: id.into(),
            subject_id: "subject_000".into(),
            finger: Finger::LeftIndex,
            label: Label::BonaFide,
            species: None,
            capture_index: 0,
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let p = SpeckleParams::default();
        let a = synth_sample(bona_meta("a"), (16, 16, 8), &p, 42).unwrap();
        let b = synth_sample(bona_meta("a"), (16, 16, 8), &p, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_sample(bona_meta("a"), (16, 16, 8), &p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_field_without_noise_repeats_frames() {
        let p = SpeckleParams {
            rho_attack: 1.0,
            read_noise: 0.0,
            ..SpeckleParams::default()
        };
        let s = synth_sample(attack_meta("a"), (12, 12, 5), &p, 7).unwrap();
        let hw = 144;
        for t in 1..5 {
            assert_eq!(&s.cube[t * hw..(t + 1) * hw], &s.cube[..hw]);
        }
    }

    #[test]
    fn invalid_rho_is_config_error() {
        let p = SpeckleParams {
            rho_attack: 1.5,
            ..SpeckleParams::default()
        };
        assert!(synth_sample(attack_meta("a"), (8, 8, 2), &p, 0).is_err());
        let p = SpeckleParams {
            rho_bona_fide: 0.0,
            ..SpeckleParams::default()
        };
        assert!(synth_sample(bona_meta("a"), (8, 8, 2), &p, 0).is_err());
    }

    #[test]
    fn capacity_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            bona_fide: 19,
            species_counts: vec![],
            subjects: 1,
            height: 8,
            width: 8,
            frames: 2,
            params: SpeckleParams::default(),
            seed: 0,
        };
        let err = make_synth_dataset(&spec, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let spec = DatasetSpec {
            bona_fide: 18,
            ..spec
        };
        assert_eq!(make_synth_dataset(&spec, dir.path()).unwrap().len(), 18);
    }

    #[test]
    fn manifest_structure_constraints() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            bona_fide: 20,
            species_counts: vec![(Species::DragonSkin, 6), (Species::Transparency, 4)],
            subjects: 5,
            height: 8,
            width: 8,
            frames: 3,
            params: SpeckleParams::default(),
            seed: 9,
        };
        let manifest = make_synth_dataset(&spec, dir.path()).unwrap();
        assert_eq!(manifest.len(), 30);
        // species distribution matches the request
        let dragon = manifest
            .entries
            .iter()
            .filter(|e| e.meta.species == Some(Species::DragonSkin))
            .count();
        assert_eq!(dragon, 6);
        // <= 3 captures per (subject, finger)
        use std::collections::BTreeMap;
        let mut per_finger: BTreeMap<(String, Finger), Vec<u32>> = BTreeMap::new();
        for e in &manifest.entries {
            per_finger
                .entry((e.meta.subject_id.clone(), e.meta.finger))
                .or_default()
                .push(e.meta.capture_index);
        }
        for caps in per_finger.values() {
            assert!(caps.len() <= 3);
        }
        // every path resolves
        for e in &manifest.entries {
            assert!(dir.path().join(&e.path).exists());
        }
    }
}
