//! Content-addressed image storage: `<digest>.png` holds the exact container
//! bytes and `<digest>.json` the lineage needed to rebuild the image object
//! after a restart.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use diffx_core::backend::{GeneratedImage, Provenance};
use diffx_core::embedding::EmbeddingVector;
use diffx_core::{Error, Result, Strength};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Sidecar {
    Mock {
        width: u32,
        height: u32,
        provenance: Provenance,
        seed: u64,
        semantic_vec: Vec<f64>,
        strength_used: Option<Strength>,
        payload_target: usize,
    },
    Remote {
        seed: u64,
        body_len: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ImageStore {
    dir: PathBuf,
}

fn valid_digest(digest: &str) -> bool {
    digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Write to a temporary name, then rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl ImageStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ImageStore { dir })
    }

    fn path(&self, digest: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{digest}.{ext}"))
    }

    pub fn put(&self, image: &GeneratedImage) -> Result<String> {
        let digest = image.digest().0;
        let meta = self.path(&digest, "json");
        if meta.exists() {
            return Ok(digest);
        }
        let sidecar = match image.provenance() {
            Provenance::Remote => Sidecar::Remote {
                seed: image.seed(),
                body_len: image.payload_bytes(),
            },
            provenance => Sidecar::Mock {
                width: image.width(),
                height: image.height(),
                provenance,
                seed: image.seed(),
                semantic_vec: image
                    .semantic_vec()
                    .map(|v| v.as_slice().to_vec())
                    .unwrap_or_default(),
                strength_used: image.strength_used(),
                payload_target: image.payload_target(),
            },
        };
        write_atomic(&self.path(&digest, "png"), image.encoded())?;
        // The sidecar goes last: its presence marks a complete entry.
        write_atomic(&meta, &serde_json::to_vec(&sidecar)?)?;
        Ok(digest)
    }

    /// Container bytes, or `None` for unknown or malformed digests.
    pub fn bytes(&self, digest: &str) -> Result<Option<Vec<u8>>> {
        if !valid_digest(digest) || !self.path(digest, "json").exists() {
            return Ok(None);
        }
        Ok(Some(fs::read(self.path(digest, "png"))?))
    }

    pub fn load(&self, digest: &str) -> Result<GeneratedImage> {
        if !valid_digest(digest) {
            return Err(Error::InvalidConfig(format!("bad image digest '{digest}'")));
        }
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(self.path(digest, "json"))?)?;
        let image = match sidecar {
            Sidecar::Mock {
                width,
                height,
                provenance,
                seed,
                semantic_vec,
                strength_used,
                payload_target,
            } => GeneratedImage::restore_mock(
                width,
                height,
                provenance,
                seed,
                EmbeddingVector::new(semantic_vec)?,
                strength_used,
                payload_target,
            ),
            Sidecar::Remote { seed, body_len } => {
                GeneratedImage::restore_remote(fs::read(self.path(digest, "png"))?, body_len, seed)?
            }
        };
        if image.digest().0 != digest {
            return Err(Error::ChecksumMismatch);
        }
        Ok(image)
    }
}
