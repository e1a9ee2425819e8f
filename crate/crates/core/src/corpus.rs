//! Corpus manifests, ingestion and index persistence.
//!
//! A manifest is a JSON array of `{"id", "image", "layout"}` entries whose
//! paths are relative to the manifest's directory. A persisted index is an
//! embedding file plus a `<index>.corpus.json` sidecar holding each entry's
//! image path and layout.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::parse_hex_color;
use crate::layout::Layout;
use crate::raster::RasterImage;
use crate::retrieval::{
    build_index, parse_embedding_lines, CorpusEntry, EmbeddingProvider, EmbeddingTable, Index,
    RetrievalError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {0}")]
    ManifestNotFound(String),
    #[error("parse error in {path}: {message}")]
    ParseError { path: String, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// A manifest entry that could not be loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, CorpusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| CorpusError::ManifestNotFound(path.display().to_string()))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| CorpusError::ParseError {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Manifest {
            dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }
}

/// Loads and validates a layout file; asset paths are rebased onto the
/// manifest directory.
pub fn load_layout_entry(manifest: &Manifest, rel: &str) -> Result<Layout, String> {
    let mut layout = Layout::load(&manifest.resolve(rel)).map_err(|e| e.to_string())?;
    let hard: Vec<String> = layout
        .validate()
        .into_iter()
        .filter(|v| !v.is_warning())
        .map(|v| v.to_string())
        .collect();
    if !hard.is_empty() {
        return Err(hard.join("; "));
    }
    for e in &mut layout.elements {
        if let Some(a) = &e.asset {
            if parse_hex_color(a).is_none() && Path::new(a).is_relative() {
                e.asset = Some(manifest.resolve(a).display().to_string());
            }
        }
    }
    Ok(layout)
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub entries: Vec<CorpusEntry>,
    pub failures: Vec<EntryFailure>,
}

fn ingest_one(
    manifest: &Manifest,
    entry: &ManifestEntry,
    embedder: &dyn EmbeddingProvider,
    precomputed: Option<&EmbeddingTable>,
) -> Result<CorpusEntry, String> {
    let image_rel = entry.image.as_deref().ok_or("entry has no image")?;
    let layout_rel = entry.layout.as_deref().ok_or("entry has no layout")?;
    let layout = load_layout_entry(manifest, layout_rel)?;
    let image = manifest.resolve(image_rel);
    if !image.exists() {
        return Err(format!("image {} not found", image.display()));
    }
    let embedding = match precomputed.and_then(|t| t.get(&entry.id)) {
        Some(e) => e,
        None => {
            let raster = RasterImage::load_png(&image).map_err(|e| e.to_string())?;
            embedder.embed(&entry.id, &raster).map_err(|e| e.to_string())?
        }
    };
    Ok(CorpusEntry {
        id: entry.id.clone(),
        image,
        layout,
        embedding,
    })
}

/// Loads every manifest entry it can. Entries that fail (bad layout,
/// missing image, duplicate id) are reported and skipped.
pub fn ingest_corpus(
    manifest_path: &Path,
    embedder: &dyn EmbeddingProvider,
    precomputed: Option<&EmbeddingTable>,
) -> Result<IngestReport, CorpusError> {
    let manifest = Manifest::load(manifest_path)?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut seen = HashSet::new();
    for entry in &manifest.entries {
        if !seen.insert(entry.id.clone()) {
            failures.push(EntryFailure {
                id: entry.id.clone(),
                message: "duplicate corpus id".into(),
            });
            continue;
        }
        match ingest_one(&manifest, entry, embedder, precomputed) {
            Ok(e) => entries.push(e),
            Err(message) => failures.push(EntryFailure {
                id: entry.id.clone(),
                message,
            }),
        }
    }
    Ok(IngestReport { entries, failures })
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarEntry {
    id: String,
    image: PathBuf,
    layout: Layout,
}

pub fn sidecar_path(index_path: &Path) -> PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".corpus.json");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: impl ToString) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_index(index: &Index, path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, index.embedding_lines()).map_err(|e| io_err(path, e))?;
    let side: Vec<SidecarEntry> = index
        .entries()
        .iter()
        .map(|e| SidecarEntry {
            id: e.id.clone(),
            image: e.image.clone(),
            layout: e.layout.clone(),
        })
        .collect();
    let sp = sidecar_path(path);
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    std::fs::write(&sp, json).map_err(|e| io_err(&sp, e))
}

pub fn load_index(path: &Path) -> Result<Index, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let embeddings = parse_embedding_lines(&text)?;
    let sp = sidecar_path(path);
    let side_text = std::fs::read_to_string(&sp).map_err(|e| io_err(&sp, e))?;
    let side: Vec<SidecarEntry> =
        serde_json::from_str(&side_text).map_err(|e| CorpusError::ParseError {
            path: sp.display().to_string(),
            message: e.to_string(),
        })?;
    let mut by_id: std::collections::HashMap<String, SidecarEntry> =
        side.into_iter().map(|s| (s.id.clone(), s)).collect();
    let entries = embeddings
        .into_iter()
        .map(|embedding| {
            let s = by_id
                .remove(&embedding.id)
                .ok_or_else(|| RetrievalError::MissingEmbedding(embedding.id.clone()))?;
            Ok(CorpusEntry {
                id: s.id,
                image: s.image,
                layout: s.layout,
                embedding,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    Ok(build_index(entries)?)
}
