use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::fault::Fault;
use crate::services::image::Image;

/// Content-addressed PPM store: each payload lives at `{dir}/{sha256}.ppm`.
#[derive(Debug, Clone)]
pub struct ImageStore {
    dir: PathBuf,
}

pub fn content_id(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

fn is_content_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl ImageStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ImageStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.ppm"))
    }

    /// Stores a PPM payload and returns its id. Storing the same bytes again
    /// is a no-op.
    pub fn store(&self, payload: &[u8]) -> Result<String, Fault> {
        if payload.is_empty() {
            return Err(Fault::validation("empty image payload"));
        }
        Image::from_ppm(payload)?;
        let id = content_id(payload);
        let path = self.path_of(&id);
        if path.exists() {
            return Ok(id);
        }
        let tmp = self.dir.join(format!(".{id}.{}.tmp", uuid::Uuid::new_v4()));
        std::fs::write(&tmp, payload)
            .and_then(|()| std::fs::rename(&tmp, &path))
            .map_err(|e| {
                let _ = std::fs::remove_file(&tmp);
                Fault::internal(format!("image store: {e}"))
            })?;
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<Vec<u8>> {
        if !is_content_id(id) {
            return None;
        }
        std::fs::read(self.path_of(id)).ok()
    }

    /// Number of stored images.
    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| {
                        let name = e.file_name();
                        let name = name.to_string_lossy();
                        name.strip_suffix(".ppm").is_some_and(is_content_id)
                    })
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
