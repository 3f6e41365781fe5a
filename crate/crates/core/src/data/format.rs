//! Bit-exact binary sample format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LSC1"
//! 4       2     format version (u16) = 1
//! 6       4     H (u32)
//! 10      4     W (u32)
//! 14      4     T (u32)
//! 18      26    reserved (zero) — pads the header to 44 bytes
//! 44      H·W·4 dark_avg, f32, row-major
//! ...     H·W·T·2 cube, u16, frame-major (frame 0 first, row-major within)
//! ```
//!
//! Metadata travels in the manifest, not the sample file, so the payload
//! stays a pure sensor dump.

use super::{LsciSample, SampleMeta};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"LSC1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 44;

/// Exact on-disk size for a given geometry.
pub fn sample_file_size(h: u32, w: u32, t: u32) -> u64 {
    let hw = u64::from(h) * u64::from(w);
    HEADER_LEN as u64 + hw * 4 + hw * u64::from(t) * 2
}

pub fn save_sample(sample: &LsciSample, path: &Path) -> Result<()> {
    sample.validate()?;
    let mut buf =
        Vec::with_capacity(sample_file_size(sample.height, sample.width, sample.frames) as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&sample.height.to_le_bytes());
    buf.extend_from_slice(&sample.width.to_le_bytes());
    buf.extend_from_slice(&sample.frames.to_le_bytes());
    buf.resize(HEADER_LEN, 0);
    for v in &sample.dark_avg {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &sample.cube {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Loads a sample; `meta` comes from the manifest and is attached verbatim.
pub fn load_sample(path: &Path, meta: SampleMeta) -> Result<LsciSample> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; HEADER_LEN];
    file.read_exact(&mut header)
        .map_err(|_| Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("truncated header in {}", path.display()),
        )))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(format!(
            "bad magic in {}: expected LSC1",
            path.display()
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format version {version} in {}",
            path.display()
        )));
    }
    let h = u32::from_le_bytes(header[6..10].try_into().unwrap());
    let w = u32::from_le_bytes(header[10..14].try_into().unwrap());
    let t = u32::from_le_bytes(header[14..18].try_into().unwrap());
    if h == 0 || w == 0 || t == 0 {
        return Err(Error::format(format!(
            "degenerate shape {h}x{w}x{t} in {}",
            path.display()
        )));
    }
    let hw = (h as usize) * (w as usize);

    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let want = hw * 4 + hw * t as usize * 2;
    if payload.len() != want {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "truncated payload in {}: expected {want} bytes, found {}",
                path.display(),
                payload.len()
            ),
        )));
    }

    let mut dark_avg = Vec::with_capacity(hw);
    for chunk in payload[..hw * 4].chunks_exact(4) {
        dark_avg.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut cube = Vec::with_capacity(hw * t as usize);
    for chunk in payload[hw * 4..].chunks_exact(2) {
        cube.push(u16::from_le_bytes(chunk.try_into().unwrap()));
    }

    let sample = LsciSample {
        height: h,
        width: w,
        frames: t,
        cube,
        dark_avg,
        meta,
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Finger, Label};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_sample(seed: u64, h: u32, w: u32, t: u32) -> LsciSample {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let hw = (h * w) as usize;
        LsciSample {
            height: h,
            width: w,
            frames: t,
            cube: (0..hw * t as usize).map(|_| rng.random()).collect(),
            dark_avg: (0..hw).map(|_| rng.random_range(0.0..200.0)).collect(),
            meta: SampleMeta {
                sample_id: format!("sample_{seed}"),
                subject_id: "subject_000".into(),
                finger: Finger::RightMiddle,
                label: Label::BonaFide,
                species: None,
                capture_index: 0,
            },
        }
    }

    #[test]
    fn round_trip_is_bytewise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let sample = random_sample(3, 16, 12, 7);
        let p1 = dir.path().join("a.lsc");
        let p2 = dir.path().join("b.lsc");
        save_sample(&sample, &p1).unwrap();
        let loaded = load_sample(&p1, sample.meta.clone()).unwrap();
        assert_eq!(loaded, sample);
        save_sample(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let sample = random_sample(4, 8, 8, 3);
        let path = dir.path().join("a.lsc");
        save_sample(&sample, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        let err = load_sample(&path, sample.meta).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let sample = random_sample(5, 8, 8, 3);
        let path = dir.path().join("a.lsc");
        save_sample(&sample, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let err = load_sample(&path, sample.meta).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn device_geometry_file_size() {
        assert_eq!(sample_file_size(64, 64, 1000), 8_208_428);
    }
}
