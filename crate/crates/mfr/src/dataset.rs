//! Synthetic face datasets on disk: `identity_NNNN/var_MM.ppm` plus a
//! `manifest.json` describing what was generated.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mfr_core::calibrate::{calibrate_threshold, distance_profile};
use mfr_core::image::encode_pnm;
use mfr_core::{
    generate_synthetic_identity, train_eigenmodel, DetectorParams, EigenModel, Embedding,
    VisionError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{decode_photo, embed_photo, extract_face, PipelineError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Recognition(#[from] mfr_core::RecognitionError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityEntry {
    pub name: String,
    pub seed: u64,
    /// Paths relative to the dataset root, in variation order.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub variations: usize,
    pub identities: Vec<IdentityEntry>,
}

/// Generator seed of identity `index` in a dataset seeded with `seed`
/// (splitmix64 finalizer over the pair).
pub fn identity_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_dataset(
    out: &Path,
    identities: usize,
    variations: usize,
    seed: u64,
) -> Result<Manifest, DatasetError> {
    if identities == 0 {
        return Err(DatasetError::Invalid("need at least one identity".into()));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut entries = Vec::with_capacity(identities);
    for i in 0..identities {
        let name = format!("identity_{i:04}");
        let id_seed = identity_seed(seed, i);
        let images = generate_synthetic_identity(id_seed, variations)?;
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut files = Vec::with_capacity(variations);
        for (j, img) in images.iter().enumerate() {
            let rel = format!("{name}/var_{j:02}.ppm");
            let path = out.join(&rel);
            fs::write(&path, encode_pnm(img)).map_err(io_err(&path))?;
            files.push(rel);
        }
        entries.push(IdentityEntry {
            name,
            seed: id_seed,
            files,
        });
    }
    let manifest = Manifest {
        seed,
        variations,
        identities: entries,
    };
    let path = out.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let path = root.join(MANIFEST);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn read_file(root: &Path, rel: &str) -> Result<Vec<u8>, DatasetError> {
    let path = root.join(rel);
    fs::read(&path).map_err(io_err(&path))
}

/// Face chips of the first `variations` images of every identity.
pub fn training_chips(
    root: &Path,
    manifest: &Manifest,
    variations: usize,
    params: &DetectorParams,
) -> Result<Vec<Vec<f64>>, DatasetError> {
    let mut chips = Vec::new();
    for id in &manifest.identities {
        for rel in id.files.iter().take(variations) {
            let bytes = read_file(root, rel)?;
            let image = decode_photo(&bytes)?;
            let found = extract_face(&image, params).map_err(|source| DatasetError::Image {
                path: root.join(rel),
                source,
            })?;
            chips.push(found.chip.pixels().to_vec());
        }
    }
    Ok(chips)
}

pub fn train_from_dataset(
    root: &Path,
    variations: usize,
    k: usize,
    version: u64,
    params: &DetectorParams,
) -> Result<EigenModel, DatasetError> {
    let manifest = load_manifest(root)?;
    let chips = training_chips(root, &manifest, variations, params)?;
    Ok(train_eigenmodel(&chips, k)?.with_version(version))
}

/// Embeddings of the first `variations` images of every identity, grouped
/// per identity.
pub fn embed_identities(
    root: &Path,
    manifest: &Manifest,
    variations: usize,
    model: &EigenModel,
    params: &DetectorParams,
) -> Result<Vec<Vec<Embedding>>, DatasetError> {
    manifest
        .identities
        .iter()
        .map(|id| {
            id.files
                .iter()
                .take(variations)
                .map(|rel| {
                    let bytes = read_file(root, rel)?;
                    embed_photo(&bytes, model, params)
                        .map(|(e, _)| e)
                        .map_err(|source| DatasetError::Image {
                            path: root.join(rel),
                            source,
                        })
                })
                .collect()
        })
        .collect()
}

/// Midpoint threshold from genuine and impostor distances of the dataset.
pub fn calibrate_from_dataset(
    root: &Path,
    variations: usize,
    model: &EigenModel,
    params: &DetectorParams,
) -> Result<f64, DatasetError> {
    let manifest = load_manifest(root)?;
    let groups = embed_identities(root, &manifest, variations, model, params)?;
    let profile = distance_profile(&groups)?;
    calibrate_threshold(&profile)
        .ok_or_else(|| DatasetError::Invalid("need genuine and impostor pairs to calibrate".into()))
}
