use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Where per-interval vectors are kept.
#[derive(Debug, Clone, PartialEq)]
pub enum StorageMode {
    Memory,
    /// one file per interval in the given directory (a temporary directory
    /// if `None`)
    Disk(Option<PathBuf>),
    /// memory unless the trajectory would exceed the byte budget
    Auto { max_bytes: usize },
    /// keep nothing (goal evaluation only)
    Discard,
}

impl Default for StorageMode {
    fn default() -> Self {
        StorageMode::Auto {
            max_bytes: 384 << 20,
        }
    }
}

impl StorageMode {
    /// Resolves `Auto` for a trajectory of `m` vectors of length `len`.
    pub(crate) fn resolve(&self, m: usize, len: usize) -> StorageMode {
        match self {
            StorageMode::Auto { max_bytes } => {
                if m.saturating_mul(len).saturating_mul(8) > *max_bytes {
                    StorageMode::Disk(None)
                } else {
                    StorageMode::Memory
                }
            }
            other => other.clone(),
        }
    }
}

/// 64-bit FNV-1a hash of the little-endian bytes of a vector.
pub fn checksum(v: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for x in v {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct IndexEntry {
    mesh_id: u64,
    len: usize,
    checksum: u64,
}

#[derive(Debug)]
enum Backend {
    Memory(Vec<Option<Vec<f64>>>),
    Disk {
        dir: PathBuf,
        _tmp: Option<tempfile::TempDir>,
        index: Vec<Option<IndexEntry>>,
    },
    Discard,
}

/// Per-interval coefficient vectors, in memory or spilled to disk. The disk
/// layout is one little-endian `f64` blob per interval plus a text index
/// `index.txt` with lines `interval mesh_id len checksum`.
#[derive(Debug)]
pub struct VectorStore {
    backend: Backend,
    mesh_ids: Vec<u64>,
}

impl VectorStore {
    pub fn new(mode: &StorageMode, m: usize) -> Result<VectorStore> {
        let backend = match mode {
            StorageMode::Memory | StorageMode::Auto { .. } => Backend::Memory(vec![None; m]),
            StorageMode::Discard => Backend::Discard,
            StorageMode::Disk(dir) => {
                let (dir, tmp) = match dir {
                    Some(d) => {
                        fs::create_dir_all(d)?;
                        (d.clone(), None)
                    }
                    None => {
                        let t = tempfile::Builder::new().prefix("trajectory").tempdir()?;
                        (t.path().to_path_buf(), Some(t))
                    }
                };
                Backend::Disk {
                    dir,
                    _tmp: tmp,
                    index: vec![None; m],
                }
            }
        };
        Ok(VectorStore {
            backend,
            mesh_ids: vec![0; m],
        })
    }

    pub fn len(&self) -> usize {
        self.mesh_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh_ids.is_empty()
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self.backend, Backend::Disk { .. })
    }

    fn blob(dir: &Path, n: usize) -> PathBuf {
        dir.join(format!("interval_{n:06}.bin"))
    }

    pub fn put(&mut self, n: usize, mesh_id: u64, v: &[f64]) -> Result<()> {
        self.mesh_ids[n] = mesh_id;
        match &mut self.backend {
            Backend::Memory(slots) => slots[n] = Some(v.to_vec()),
            Backend::Discard => {}
            Backend::Disk { dir, index, .. } => {
                let mut w = BufWriter::new(fs::File::create(Self::blob(dir, n))?);
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
                w.flush()?;
                index[n] = Some(IndexEntry {
                    mesh_id,
                    len: v.len(),
                    checksum: checksum(v),
                });
                let dir = dir.clone();
                self.write_index(&dir)?;
            }
        }
        Ok(())
    }

    fn write_index(&self, dir: &Path) -> Result<()> {
        if let Backend::Disk { index, .. } = &self.backend {
            let mut w = BufWriter::new(fs::File::create(dir.join("index.txt"))?);
            for (n, e) in index.iter().enumerate() {
                if let Some(e) = e {
                    writeln!(w, "{} {} {} {:016x}", n, e.mesh_id, e.len, e.checksum)?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn get(&self, n: usize) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Memory(slots) => slots[n]
                .clone()
                .ok_or_else(|| Error::Store(format!("interval {n} has not been stored"))),
            Backend::Discard => Err(Error::Store("trajectory was not kept".into())),
            Backend::Disk { dir, index, .. } => {
                let e = index[n].ok_or_else(|| Error::Store(format!("interval {n} has not been stored")))?;
                let mut bytes = Vec::with_capacity(8 * e.len);
                fs::File::open(Self::blob(dir, n))?.read_to_end(&mut bytes)?;
                if bytes.len() != 8 * e.len {
                    return Err(Error::Store(format!(
                        "interval {n}: expected {} values, file has {} bytes",
                        e.len,
                        bytes.len()
                    )));
                }
                let v: Vec<f64> = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                if checksum(&v) != e.checksum {
                    return Err(Error::Store(format!("interval {n}: checksum mismatch")));
                }
                Ok(v)
            }
        }
    }

    pub fn mesh_id(&self, n: usize) -> u64 {
        self.mesh_ids[n]
    }

    /// Directory of the spill files, if any.
    pub fn dir(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Disk { dir, .. } => Some(dir),
            _ => None,
        }
    }
}

/// Parses an index file written by a disk store.
pub fn read_index(path: &Path) -> Result<Vec<(usize, u64, usize, u64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Store(format!("index line {}: '{line}'", i + 1));
        if parts.len() != 4 {
            return Err(bad());
        }
        out.push((
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
            u64::from_str_radix(parts[3], 16).map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_round_trip_is_bitwise() {
        let mut s = VectorStore::new(&StorageMode::Disk(None), 3).unwrap();
        let vs: Vec<Vec<f64>> = (0..3)
            .map(|n| (0..17).map(|i| (i as f64 * 0.37 + n as f64).sin() / 3.0).collect())
            .collect();
        for (n, v) in vs.iter().enumerate().rev() {
            s.put(n, 40 + n as u64, v).unwrap();
        }
        for (n, v) in vs.iter().enumerate() {
            let back = s.get(n).unwrap();
            assert!(back.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let index = read_index(&s.dir().unwrap().join("index.txt")).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index[1], (1, 41, 17, checksum(&vs[1])));
    }

    #[test]
    fn corrupted_blob_is_detected() {
        let mut s = VectorStore::new(&StorageMode::Disk(None), 1).unwrap();
        s.put(0, 1, &[1.0, 2.0]).unwrap();
        let path = s.dir().unwrap().join("interval_000000.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(s.get(0), Err(Error::Store(_))));
    }

    #[test]
    fn auto_mode_spills_large_trajectories() {
        let mode = StorageMode::Auto { max_bytes: 1000 };
        assert_eq!(mode.resolve(10, 10), StorageMode::Memory);
        assert_eq!(mode.resolve(100, 10), StorageMode::Disk(None));
    }
}
