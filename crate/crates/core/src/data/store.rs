//! Uniform access to sample data for the trainer and scorer.

use super::{load_sample, LsciSample, Manifest, SampleMeta};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub trait SampleStore: Sync {
    /// Sample ids in sorted order.
    fn ids(&self) -> Vec<String>;
    fn meta(&self, sample_id: &str) -> Result<&SampleMeta>;
    fn load(&self, sample_id: &str) -> Result<LsciSample>;
}

/// Manifest-backed store; relative paths resolve against the manifest's
/// directory.
pub struct DiskStore {
    manifest: Manifest,
    base_dir: PathBuf,
}

impl DiskStore {
    pub fn new(manifest: Manifest, base_dir: impl Into<PathBuf>) -> DiskStore {
        DiskStore {
            manifest,
            base_dir: base_dir.into(),
        }
    }

    pub fn open(manifest_path: &std::path::Path) -> Result<DiskStore> {
        let manifest = Manifest::load(manifest_path)?;
        let base_dir = manifest_path
            .parent()
            .map(PathBuf::from)
            .unwrap_or_default();
        Ok(DiskStore { manifest, base_dir })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

impl SampleStore for DiskStore {
    fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .manifest
            .entries
            .iter()
            .map(|e| e.meta.sample_id.clone())
            .collect();
        ids.sort();
        ids
    }

    fn meta(&self, sample_id: &str) -> Result<&SampleMeta> {
        self.manifest
            .entry(sample_id)
            .map(|e| &e.meta)
            .ok_or_else(|| Error::data(format!("unknown sample_id '{sample_id}'")))
    }

    fn load(&self, sample_id: &str) -> Result<LsciSample> {
        let entry = self
            .manifest
            .entry(sample_id)
            .ok_or_else(|| Error::data(format!("unknown sample_id '{sample_id}'")))?;
        load_sample(&self.base_dir.join(&entry.path), entry.meta.clone())
    }
}

/// In-memory store for tests and toy experiments.
#[derive(Default)]
pub struct MemStore {
    samples: BTreeMap<String, LsciSample>,
}

impl MemStore {
    pub fn new() -> MemStore {
        MemStore::default()
    }

    pub fn insert(&mut self, sample: LsciSample) {
        self.samples
            .insert(sample.meta.sample_id.clone(), sample);
    }
}

impl SampleStore for MemStore {
    fn ids(&self) -> Vec<String> {
        self.samples.keys().cloned().collect()
    }

    fn meta(&self, sample_id: &str) -> Result<&SampleMeta> {
        self.samples
            .get(sample_id)
            .map(|s| &s.meta)
            .ok_or_else(|| Error::data(format!("unknown sample_id '{sample_id}'")))
    }

    fn load(&self, sample_id: &str) -> Result<LsciSample> {
        self.samples
            .get(sample_id)
            .cloned()
            .ok_or_else(|| Error::data(format!("unknown sample_id '{sample_id}'")))
    }
}
