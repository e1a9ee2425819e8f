//! Canvas embeddings and exact top-k retrieval by cosine similarity.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::Layout;
use crate::raster::RasterImage;

/// Default retrieval depth.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("embedding dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("embedding {0:?} has a non-finite entry")]
    NonFinite(String),
    #[error("duplicate corpus id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("embedding {0:?} not found")]
    MissingEmbedding(String),
    #[error("embedding file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file {path}: {message}")]
    Io { path: String, message: String },
}

impl Embedding {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        Embedding {
            id: id.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check(&self) -> Result<(), RetrievalError> {
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite(self.id.clone()));
        }
        if self.norm() == 0.0 {
            return Err(RetrievalError::ZeroNorm(self.id.clone()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 {
        return Err(RetrievalError::ZeroNorm(a.id.clone()));
    }
    if nb == 0.0 {
        return Err(RetrievalError::ZeroNorm(b.id.clone()));
    }
    Ok((dot(&a.vector, &b.vector) / (na * nb)).clamp(-1.0, 1.0))
}

/// Maps a canvas image to an embedding.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, id: &str, image: &RasterImage) -> Result<Embedding, RetrievalError>;
}

/// Image-statistics embedder: an 8x8 mean-pooled grayscale thumbnail
/// (64 dims) followed by 8-bin R, G and B histograms (24 dims), L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineEmbedder;

impl BaselineEmbedder {
    pub const DIM: usize = 88;
    const GRID: u32 = 8;
    const BINS: usize = 8;
}

fn cell_bounds(i: u32, n: u32, size: u32) -> (u32, u32) {
    let lo = (i as u64 * size as u64 / n as u64) as u32;
    let hi = ((i as u64 + 1) * size as u64 / n as u64) as u32;
    let lo = lo.min(size - 1);
    (lo, hi.max(lo + 1).min(size))
}

impl EmbeddingProvider for BaselineEmbedder {
    fn embed(&self, id: &str, image: &RasterImage) -> Result<Embedding, RetrievalError> {
        let (w, h) = (image.width(), image.height());
        if w == 0 || h == 0 {
            return Err(RetrievalError::EmptyImage);
        }
        let mut v = Vec::with_capacity(Self::DIM);
        for gy in 0..Self::GRID {
            let (y0, y1) = cell_bounds(gy, Self::GRID, h);
            for gx in 0..Self::GRID {
                let (x0, x1) = cell_bounds(gx, Self::GRID, w);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let [r, g, b, _] = image.pixel(x, y);
                        sum += (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0;
                    }
                }
                v.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        let mut hist = [[0u64; Self::BINS]; 3];
        for px in image.data().chunks_exact(4) {
            for c in 0..3 {
                hist[c][(px[c] >> 5) as usize] += 1;
            }
        }
        let pixels = (w as u64 * h as u64) as f64;
        for channel in &hist {
            v.extend(channel.iter().map(|&n| n as f64 / pixels));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RetrievalError::ZeroNorm(id.to_string()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Embedding::new(id, v))
    }
}

/// Precomputed vectors keyed by id, e.g. from an external image encoder.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn get(&self, id: &str) -> Option<Embedding> {
        self.vectors.get(id).map(|v| Embedding::new(id, v.clone()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn parse(text: &str) -> Result<EmbeddingTable, RetrievalError> {
        let mut table = EmbeddingTable::default();
        for emb in parse_embedding_lines(text)? {
            table.vectors.insert(emb.id, emb.vector);
        }
        table.dim = table.vectors.values().next().map(Vec::len);
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable, RetrievalError> {
        EmbeddingTable::parse(&read_to_string(path)?)
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn embed(&self, id: &str, _image: &RasterImage) -> Result<Embedding, RetrievalError> {
        self.get(id)
            .ok_or_else(|| RetrievalError::MissingEmbedding(id.to_string()))
    }
}

fn read_to_string(path: &Path) -> Result<String, RetrievalError> {
    std::fs::read_to_string(path).map_err(|e| RetrievalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses `<id>\t<float>,<float>,...` lines. The first line fixes the
/// dimension; blank lines are skipped.
pub fn parse_embedding_lines(text: &str) -> Result<Vec<Embedding>, RetrievalError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (id, values) = raw.split_once('\t').ok_or_else(|| RetrievalError::Parse {
            line,
            message: "missing tab separator".into(),
        })?;
        let vector = values
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RetrievalError::Parse {
                line,
                message: e.to_string(),
            })?;
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(RetrievalError::DimensionMismatch {
                    expected: d,
                    got: vector.len(),
                })
            }
            _ => {}
        }
        if !seen.insert(id.to_string()) {
            return Err(RetrievalError::DuplicateId(id.to_string()));
        }
        let emb = Embedding::new(id, vector);
        emb.check()?;
        out.push(emb);
    }
    Ok(out)
}

/// Formats embeddings one per line with 17 significant digits.
pub fn format_embedding_lines<'a>(embeddings: impl IntoIterator<Item = &'a Embedding>) -> String {
    let mut s = String::new();
    for e in embeddings {
        s.push_str(&e.id);
        s.push('\t');
        for (i, v) in e.vector.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v:.16e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// A ground-truth exemplar: canvas image, its layout and its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: String,
    pub image: PathBuf,
    pub layout: Layout,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Hits in descending score order, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

/// Immutable exact-search index over corpus entries.
#[derive(Debug, Clone)]
pub struct Index {
    entries: Vec<CorpusEntry>,
    norms: Vec<f64>,
    by_id: HashMap<String, usize>,
    dim: usize,
}

pub fn build_index(entries: Vec<CorpusEntry>) -> Result<Index, RetrievalError> {
    let dim = entries
        .first()
        .ok_or(RetrievalError::EmptyCorpus)?
        .embedding
        .dim();
    let mut by_id = HashMap::with_capacity(entries.len());
    let mut norms = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if by_id.insert(e.id.clone(), i).is_some() {
            return Err(RetrievalError::DuplicateId(e.id.clone()));
        }
        if e.embedding.dim() != dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                got: e.embedding.dim(),
            });
        }
        e.embedding.check()?;
        norms.push(e.embedding.norm());
    }
    Ok(Index {
        entries,
        norms,
        by_id,
        dim,
    })
}

fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl Index {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn query_topk(&self, q: &Embedding, k: usize) -> Result<RetrievalResult, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if q.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        q.check()?;
        let qn = q.norm();
        let mut hits: Vec<Hit> = self
            .entries
            .iter()
            .zip(&self.norms)
            .map(|(e, &n)| Hit {
                id: e.id.clone(),
                score: (dot(&q.vector, &e.embedding.vector) / (qn * n)).clamp(-1.0, 1.0),
            })
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(RetrievalResult { hits })
    }

    /// The retrieved entries themselves, in rank order.
    pub fn retrieve(&self, q: &Embedding, k: usize) -> Result<Vec<&CorpusEntry>, RetrievalError> {
        let result = self.query_topk(q, k)?;
        Ok(result
            .hits
            .iter()
            .map(|h| self.get(&h.id).expect("hit ids come from the index"))
            .collect())
    }

    pub fn embedding_lines(&self) -> String {
        format_embedding_lines(self.entries.iter().map(|e| &e.embedding))
    }
}
