//! Dense (semantic) retrieval: embeddings, exact cosine KNN, and an HNSW
//! approximate index over chunk vectors.
//!
//! Vectors are stored as f32 and must be unit-norm or all-zeros; cosine is
//! the plain dot product accumulated in f64. The default embedder is a
//! seeded feature-hashing bag-of-tokens model — a deterministic,
//! dependency-free stand-in for a transformer embedding service, pluggable
//! via [`Embedder`].

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::hnsw::{HnswGraph, HnswParams};
use crate::text;

const MAGIC: &[u8; 6] = b"FNDR1D";
const VERSION: u32 = 1;
const FILE: &str = "dense.idx";

/// Text to unit vector (or all-zeros for token-free text).
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Feature-hashing embedder: each token is hashed (seeded FNV-1a 64) to a
/// bucket with a ±1 sign; bucket sums are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::RangeError(format!("embedder dim {dim} < 8")));
        }
        Ok(HashingEmbedder { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hash_token(&self, token: &str) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        for byte in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(PRIME);
        }
        h
    }
}

impl Embedder for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for token in text::tokenize(text) {
            let h = self.hash_token(&token);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 1 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter().map(|v| (v / norm) as f32).collect()
        } else {
            vec![0.0f32; self.dim]
        }
    }
}

/// Chunk vectors plus an optional HNSW graph for approximate search.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    /// Row-major `len * dim`.
    vectors: Vec<f32>,
    /// Parallel to rows; callers push rows in ascending chunk-id order.
    chunk_ids: Vec<u32>,
    params: HnswParams,
    graph: Option<HnswGraph>,
}

impl DenseIndex {
    pub fn new(dim: usize, params: HnswParams) -> Self {
        DenseIndex { dim, vectors: Vec::new(), chunk_ids: Vec::new(), params, graph: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn has_graph(&self) -> bool {
        self.graph.is_some()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Append a vector. It must be unit-norm (±1e-4) or all zeros.
    pub fn push(&mut self, chunk_id: u32, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: vector.len() });
        }
        let norm = vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-4 {
            return Err(Error::RangeError(format!(
                "vector for chunk {chunk_id} has norm {norm:.6}, expected 1 or 0"
            )));
        }
        self.vectors.extend_from_slice(vector);
        self.chunk_ids.push(chunk_id);
        self.graph = None;
        Ok(())
    }

    fn cosine(&self, i: usize, query: &[f32]) -> f64 {
        self.row(i)
            .iter()
            .zip(query)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }

    /// Exact top-k by cosine, descending, ties by ascending chunk id.
    /// `filter` restricts results by chunk id. A zero query returns `[]`.
    pub fn knn_exact(
        &self,
        query: &[f32],
        filter: Option<&dyn Fn(u32) -> bool>,
        top_k: usize,
    ) -> Result<Vec<(u32, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: query.len() });
        }
        if top_k == 0 || query.iter().all(|&v| v == 0.0) {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(u32, f64)> = (0..self.len())
            .filter(|&i| filter.map_or(true, |f| f(self.chunk_ids[i])))
            .map(|i| (self.chunk_ids[i], self.cosine(i, query)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(top_k);
        Ok(scored)
    }

    /// Build the HNSW graph over the stored vectors (distance `1 - cosine`).
    pub fn build_graph(&mut self, seed: u64) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let graph = {
            let dist = |a: u32, b: u32| 1.0 - self.cosine(a as usize, self.row(b as usize));
            HnswGraph::build(self.len(), &self.params, seed, dist)
        };
        self.graph = Some(graph);
        Ok(())
    }

    /// Approximate top-k via the HNSW graph with beam width
    /// `max(ef_search, top_k)`. Reported scores are true cosines; only
    /// membership is approximate.
    pub fn ann_search(&self, query: &[f32], top_k: usize) -> Result<Vec<(u32, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: query.len() });
        }
        let graph = self.graph.as_ref().ok_or(Error::GraphNotBuilt)?;
        if top_k == 0 || query.iter().all(|&v| v == 0.0) {
            return Ok(Vec::new());
        }
        let found = graph.search(self.params.ef_search, top_k, |i| {
            1.0 - self.cosine(i as usize, query)
        });
        let mut out: Vec<(u32, f64)> = found
            .into_iter()
            .map(|(_, i)| (self.chunk_ids[i as usize], self.cosine(i as usize, query)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.vectors {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in &self.chunk_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        w.write_all(&(self.params.m as u32).to_le_bytes())?;
        w.write_all(&(self.params.ef_construction as u32).to_le_bytes())?;
        w.write_all(&(self.params.ef_search as u32).to_le_bytes())?;
        match &self.graph {
            None => w.write_all(&[0u8])?,
            Some(graph) => {
                w.write_all(&[1u8])?;
                w.write_all(&graph.entry.to_le_bytes())?;
                w.write_all(&(graph.layers.len() as u32).to_le_bytes())?;
                for layer in &graph.layers {
                    for neighbors in layer {
                        w.write_all(&(neighbors.len() as u32).to_le_bytes())?;
                        for &nb in neighbors {
                            w.write_all(&nb.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::VersionMismatch { expected: VERSION, got: version });
        }
        let dim = read_u32(r)? as usize;
        let count = read_u64(r)? as usize;
        let mut vectors = vec![0.0f32; count * dim];
        let mut buf = [0u8; 4];
        for v in vectors.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        let mut chunk_ids = Vec::with_capacity(count);
        for _ in 0..count {
            chunk_ids.push(read_u32(r)?);
        }
        let params = HnswParams {
            m: read_u32(r)? as usize,
            ef_construction: read_u32(r)? as usize,
            ef_search: read_u32(r)? as usize,
        };
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let graph = match flag[0] {
            0 => None,
            1 => {
                let entry = read_u32(r)?;
                let n_layers = read_u32(r)? as usize;
                if entry as usize >= count || n_layers == 0 || n_layers > 64 {
                    return Err(corrupt("graph header out of range"));
                }
                let mut layers = Vec::with_capacity(n_layers);
                for _ in 0..n_layers {
                    let mut layer = Vec::with_capacity(count);
                    for _ in 0..count {
                        let deg = read_u32(r)? as usize;
                        if deg > count {
                            return Err(corrupt("neighbor list longer than index"));
                        }
                        let mut neighbors = Vec::with_capacity(deg);
                        for _ in 0..deg {
                            let nb = read_u32(r)?;
                            if nb as usize >= count {
                                return Err(corrupt("neighbor id out of range"));
                            }
                            neighbors.push(nb);
                        }
                        layer.push(neighbors);
                    }
                    layers.push(layer);
                }
                Some(HnswGraph { entry, layers })
            }
            _ => return Err(corrupt("bad graph flag")),
        };
        Ok(DenseIndex { dim, vectors, chunk_ids, params, graph })
    }
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::CorruptIndex { file: FILE.to_string(), message: message.into() }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
