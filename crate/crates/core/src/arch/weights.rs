//! Versioned flat-binary weight files: a shape table followed by the raw
//! float32 payload. Loading rebuilds the network from the stored kind and
//! geometry, so evaluation never depends on the build seed.

use super::{build, ArchKind, Network};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"LSPW";
const VERSION: u16 = 1;

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    let params = net.params();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(net.kind as u8);
    for d in [net.geometry.h, net.geometry.w, net.geometry.t] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for p in &params {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(Error::format(format!("bad magic in {}", path.display())));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!("unsupported weights version {version}")));
    }
    let kind = match cur.take(1)?[0] {
        0 => ArchKind::BaseN,
        1 => ArchKind::ResN,
        2 => ArchKind::IncpN,
        3 => ArchKind::Conv3,
        4 => ArchKind::Lstm,
        k => return Err(Error::format(format!("unknown architecture tag {k}"))),
    };
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let t = cur.u32()? as usize;
    let n_params = cur.u32()? as usize;

    let mut table = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::format("non-utf8 parameter name"))?;
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        table.push((name, shape));
    }

    let mut net = build(kind, h, w, t, 0)?;
    {
        let mut params = net.params_mut();
        if params.len() != n_params {
            return Err(Error::format(format!(
                "weight file lists {n_params} parameters, network has {}",
                params.len()
            )));
        }
        for (p, (name, shape)) in params.iter_mut().zip(&table) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(Error::format(format!(
                    "parameter mismatch: file has '{name}' {shape:?}, network expects '{}' {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            let n = p.value.len();
            let raw = cur.take(n * 4)?;
            let dst = p.value.data_mut();
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                dst[i] = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::format("trailing bytes in weight file"));
    }
    Ok(net)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("truncated weight file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_restores_every_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let net = build(ArchKind::BaseN, 8, 8, 5, 77).unwrap();
        let path = dir.path().join("w.weights");
        save_weights(&net, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(loaded.kind, net.kind);
        assert_eq!(loaded.geometry, net.geometry);
        for (a, b) in loaded.params().iter().zip(net.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = build(ArchKind::Lstm, 8, 8, 5, 1).unwrap();
        let path = dir.path().join("w.weights");
        save_weights(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[1] = b'?';
        std::fs::write(&path, bytes).unwrap();
        assert!(load_weights(&path).is_err());
    }
}
