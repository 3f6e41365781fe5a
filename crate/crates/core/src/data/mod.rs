//! LSCI capture data model: samples, metadata, manifests.

pub mod format;
pub mod preprocess;
pub mod store;
pub mod synth;

pub use format::{load_sample, sample_file_size, save_sample};
pub use preprocess::{preprocess, preprocess_from};
pub use store::{DiskStore, MemStore, SampleStore};
pub use synth::{make_synth_dataset, synth_sample, DatasetSpec, SpeckleParams};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One capture: an illuminated `H×W×T` u16 cube plus the averaged dark
/// frame used for dead-pixel/ambient correction.
#[derive(Clone, Debug, PartialEq)]
pub struct LsciSample {
    pub height: u32,
    pub width: u32,
    pub frames: u32,
    /// Frame-major, row-major within each frame: `cube[(t*H + y)*W + x]`.
    pub cube: Vec<u16>,
    /// `H×W` mean of the no-illumination frames.
    pub dark_avg: Vec<f32>,
    pub meta: SampleMeta,
}

impl LsciSample {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return Err(Error::data("sample dimensions must be >= 1"));
        }
        let hw = (self.height * self.width) as usize;
        if self.dark_avg.len() != hw {
            return Err(Error::data("dark_avg shape must be H×W"));
        }
        if self.cube.len() != hw * self.frames as usize {
            return Err(Error::data("cube length must be H·W·T"));
        }
        self.meta.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    BonaFide,
    Attack,
}

/// The three middle fingers of each hand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finger {
    LeftIndex,
    LeftMiddle,
    LeftRing,
    RightIndex,
    RightMiddle,
    RightRing,
}

impl Finger {
    pub const ALL: [Finger; 6] = [
        Finger::LeftIndex,
        Finger::LeftMiddle,
        Finger::LeftRing,
        Finger::RightIndex,
        Finger::RightMiddle,
        Finger::RightRing,
    ];
}

/// The six overlay attack species of the benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    ConductivePaper,
    ConductiveSilicone,
    Transparency,
    SiliconeI,
    SiliconeII,
    DragonSkin,
}

impl Species {
    pub const ALL: [Species; 6] = [
        Species::ConductivePaper,
        Species::ConductiveSilicone,
        Species::Transparency,
        Species::SiliconeI,
        Species::SiliconeII,
        Species::DragonSkin,
    ];

    /// Collected sample counts per species in the benchmark dataset.
    pub const BENCHMARK_COUNTS: [(Species, usize); 6] = [
        (Species::ConductivePaper, 11),
        (Species::ConductiveSilicone, 62),
        (Species::Transparency, 26),
        (Species::SiliconeI, 13),
        (Species::SiliconeII, 79),
        (Species::DragonSkin, 27),
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub subject_id: String,
    pub finger: Finger,
    pub label: Label,
    /// Present iff `label == Attack`.
    pub species: Option<Species>,
    pub capture_index: u32,
}

impl SampleMeta {
    pub fn validate(&self) -> Result<()> {
        match (self.label, self.species) {
            (Label::Attack, None) => Err(Error::data(format!(
                "attack sample '{}' missing species",
                self.sample_id
            ))),
            (Label::BonaFide, Some(_)) => Err(Error::data(format!(
                "bona fide sample '{}' carries a species",
                self.sample_id
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(flatten)]
    pub meta: SampleMeta,
}

/// Index of a dataset on disk: one entry per sample file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Manifest> {
        let m = Manifest { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            e.meta.validate()?;
            if !seen.insert(&e.meta.sample_id) {
                return Err(Error::data(format!(
                    "duplicate sample_id '{}' in manifest",
                    e.meta.sample_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn entry(&self, sample_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.meta.sample_id == sample_id)
    }

    /// Species present, in enum order.
    pub fn species_present(&self) -> Vec<Species> {
        Species::ALL
            .iter()
            .copied()
            .filter(|s| self.entries.iter().any(|e| e.meta.species == Some(*s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, label: Label, species: Option<Species>) -> SampleMeta {
        SampleMeta {
            sample_id: id.to_string(),
            subject_id: "subject_000".to_string(),
            finger: Finger::LeftIndex,
            label,
            species,
            capture_index: 0,
        }
    }

    #[test]
    fn species_present_iff_attack() {
        assert!(meta("a", Label::Attack, Some(Species::DragonSkin))
            .validate()
            .is_ok());
        assert!(meta("b", Label::BonaFide, None).validate().is_ok());
        assert!(meta("c", Label::Attack, None).validate().is_err());
        assert!(meta("d", Label::BonaFide, Some(Species::Transparency))
            .validate()
            .is_err());
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let e = ManifestEntry {
            path: "x.lsc".into(),
            meta: meta("dup", Label::BonaFide, None),
        };
        assert!(Manifest::new(vec![e.clone(), e]).is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let m = Manifest::new(vec![ManifestEntry {
            path: "a.lsc".into(),
            meta: meta("s0", Label::Attack, Some(Species::ConductivePaper)),
        }])
        .unwrap();
        let json = serde_json::to_value(&m).unwrap();
        let obj = &json.as_array().unwrap()[0];
        assert_eq!(obj["path"], "a.lsc");
        assert_eq!(obj["sample_id"], "s0");
        assert_eq!(obj["species"], "conductive_paper");
        let bona = serde_json::to_value(&ManifestEntry {
            path: "b.lsc".into(),
            meta: meta("s1", Label::BonaFide, None),
        })
        .unwrap();
        assert!(bona["species"].is_null());
    }
}
