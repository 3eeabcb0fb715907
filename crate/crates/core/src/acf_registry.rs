//! Append-only store of ACF image metadata and their descriptors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::to_canonical_string;
use crate::descriptors::{parse_document_value, AcfDescriptor, DescriptorError, ImageCatalog};

/// Size assumed for images loaded from a directory without an explicit size.
pub const DEFAULT_IMAGE_SIZE_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageRecord {
    pub image_ref: String,
    pub acfd: AcfDescriptor,
    pub size_bytes: u64,
    pub digest: String,
}

impl ImageRecord {
    /// Builds a record with its digest filled in.
    pub fn new(image_ref: impl Into<String>, acfd: AcfDescriptor, size_bytes: u64) -> Self {
        let image_ref = image_ref.into();
        let digest = content_digest(&image_ref, &acfd, size_bytes);
        Self {
            image_ref,
            acfd,
            size_bytes,
            digest,
        }
    }
}

/// `sha256:<hex>` over the canonical JSON of the record contents.
pub fn content_digest(image_ref: &str, acfd: &AcfDescriptor, size_bytes: u64) -> String {
    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct Content<'a> {
        image_ref: &'a str,
        size_bytes: u64,
        acfd: &'a AcfDescriptor,
    }
    let doc = to_canonical_string(&Content {
        image_ref,
        size_bytes,
        acfd,
    });
    format!("sha256:{}", hex::encode(Sha256::digest(doc.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("image {0} already published")]
    Conflict(String),
    #[error("image {0} not found")]
    NotFound(String),
    #[error("invalid image record: {0}")]
    Validation(String),
    #[error("cannot load {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct AcfRegistry {
    images: BTreeMap<String, ImageRecord>,
}

impl AcfRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `record`; the digest is recomputed from its contents.
    pub fn publish(&mut self, record: ImageRecord) -> Result<String, RegistryError> {
        if self.images.contains_key(&record.image_ref) {
            return Err(RegistryError::Conflict(record.image_ref));
        }
        if record.image_ref.is_empty() {
            return Err(RegistryError::Validation("empty imageRef".into()));
        }
        if record.size_bytes == 0 {
            return Err(RegistryError::Validation(format!(
                "{}: sizeBytes must be positive",
                record.image_ref
            )));
        }
        record
            .acfd
            .check()
            .map_err(|e| RegistryError::Validation(format!("{}: {e}", record.image_ref)))?;
        let record = ImageRecord::new(record.image_ref, record.acfd, record.size_bytes);
        let digest = record.digest.clone();
        log::debug!("published image {} ({digest})", record.image_ref);
        self.images.insert(record.image_ref.clone(), record);
        Ok(digest)
    }

    pub fn lookup(&self, image_ref: &str) -> Result<&ImageRecord, RegistryError> {
        self.images
            .get(image_ref)
            .ok_or_else(|| RegistryError::NotFound(image_ref.to_string()))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_refs(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    /// Publishes one ACFD document. The document may carry a top-level
    /// `sizeBytes` next to the descriptor fields; the image is published under
    /// the descriptor's `imageRef`.
    pub fn publish_document(&mut self, document: &[u8]) -> Result<String, RegistryError> {
        let value: serde_json::Value = serde_json::from_slice(document)
            .map_err(|e| RegistryError::Validation(e.to_string()))?;
        let size_bytes = match value.get("sizeBytes") {
            None => DEFAULT_IMAGE_SIZE_BYTES,
            Some(v) => v.as_u64().ok_or_else(|| {
                RegistryError::Validation("sizeBytes must be a non-negative integer".into())
            })?,
        };
        let mut value = value;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("sizeBytes");
        }
        let acfd: AcfDescriptor = parse_document_value(value)
            .and_then(|a: AcfDescriptor| a.check().map(|_| a))
            .map_err(|e: DescriptorError| RegistryError::Validation(e.to_string()))?;
        let image_ref = acfd.image_ref.clone();
        self.publish(ImageRecord::new(image_ref, acfd, size_bytes))
    }

    /// Publishes every `*.json` file of `dir`, in file-name order.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, RegistryError> {
        let load_err = |path: &Path, message: String| RegistryError::Load {
            path: path.display().to_string(),
            message,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| load_err(dir, e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in &paths {
            let bytes = std::fs::read(path).map_err(|e| load_err(path, e.to_string()))?;
            self.publish_document(&bytes)
                .map_err(|e| load_err(path, e.to_string()))?;
        }
        Ok(paths.len())
    }
}

impl ImageCatalog for AcfRegistry {
    fn has_image(&self, image_ref: &str) -> bool {
        self.images.contains_key(image_ref)
    }
}
