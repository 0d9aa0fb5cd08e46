use std::cmp::Ordering;
use std::io::{Read, Write};

use crate::scalar::{dot, l2_norm, Scalar};

use super::{Encoder, IndexFormatError, Lexicon, NormalizeError};

pub const INDEX_MAGIC: &[u8; 5] = b"BIDX1";
const NORM_TOLERANCE: f64 = 1e-6;

/// Dictionary embedding matrix: one L2-normalized row per (name, cui) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex<S> {
    names: Vec<String>,
    cuis: Vec<String>,
    dim: usize,
    matrix: Vec<S>,
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<S> {
    pub row: usize,
    pub cui: String,
    pub name: String,
    pub score: S,
}

impl<S: Scalar> EmbeddingIndex<S> {
    /// Builds an index from explicit rows; `matrix` is row-major `n × dim`.
    pub fn from_rows(
        names: Vec<String>,
        cuis: Vec<String>,
        dim: usize,
        matrix: Vec<S>,
    ) -> Result<Self, NormalizeError> {
        if names.len() != cuis.len() || matrix.len() != names.len() * dim {
            return Err(NormalizeError::DimensionMismatch(format!(
                "{} names, {} cuis, {} values for dimension {dim}",
                names.len(),
                cuis.len(),
                matrix.len()
            )));
        }
        let idx = Self {
            names,
            cuis,
            dim,
            matrix,
        };
        if let Some(bad) = (0..idx.len()).find(|&i| {
            (l2_norm(idx.row(i)).to_f64_lossy() - 1.0).abs() > NORM_TOLERANCE
        }) {
            return Err(NormalizeError::DimensionMismatch(format!(
                "row {bad} is not unit length"
            )));
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cuis(&self) -> &[String] {
        &self.cuis
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Inner product of `query` with every row.
    pub fn scores(&self, query: &[S]) -> Vec<S> {
        (0..self.len()).map(|i| dot(self.row(i), query)).collect()
    }

    /// Exact top-k by inner product; ties go to the lower row index.
    pub fn top_k(&self, query: &[S], k: usize) -> Result<Vec<Retrieved<S>>, NormalizeError> {
        if self.is_empty() {
            return Err(NormalizeError::EmptyIndex);
        }
        if k == 0 {
            return Err(NormalizeError::InvalidK);
        }
        if query.len() != self.dim {
            return Err(NormalizeError::DimensionMismatch(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        let scores = self.scores(query);
        let by_rank = |a: &usize, b: &usize| {
            scores[*b]
                .partial_cmp(&scores[*a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(b))
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, by_rank);
            order.truncate(k);
        }
        order.sort_by(by_rank);
        Ok(order
            .into_iter()
            .map(|row| Retrieved {
                row,
                cui: self.cuis[row].clone(),
                name: self.names[row].clone(),
                score: scores[row],
            })
            .collect())
    }

    /// Writes the `BIDX1` format: magic, u32 dim, u32 rows, a length-prefixed
    /// name/cui table, then the row-major little-endian f32 matrix.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, cui) in self.names.iter().zip(&self.cuis) {
            for s in [name, cui] {
                w.write_all(&(s.len() as u32).to_le_bytes())?;
                w.write_all(s.as_bytes())?;
            }
        }
        for x in &self.matrix {
            let v = x.to_f32().unwrap_or(0.0);
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, IndexFormatError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(IndexFormatError::BadMagic);
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let mut names = Vec::with_capacity(n.min(1 << 20));
        let mut cuis = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            names.push(read_string(&mut r)?);
            cuis.push(read_string(&mut r)?);
        }
        let mut matrix = Vec::with_capacity((n * dim).min(1 << 26));
        let mut buf = [0u8; 4];
        for _ in 0..n * dim {
            r.read_exact(&mut buf)?;
            matrix.push(S::from_f32(f32::from_le_bytes(buf)).unwrap_or_else(S::zero));
        }
        Self::from_rows(names, cuis, dim, matrix).map_err(|e| IndexFormatError::Invalid(e.to_string()))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, IndexFormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, IndexFormatError> {
    let len = read_u32(r)? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| IndexFormatError::Invalid("non-UTF-8 string".into()))
}

/// Embeds `(name, cui)` pairs in the given order.
pub fn build_index_from_pairs<S: Scalar>(
    pairs: &[(String, String)],
    enc: &dyn Encoder<S>,
) -> Result<EmbeddingIndex<S>, NormalizeError> {
    if pairs.is_empty() {
        return Err(NormalizeError::EmptyLexicon);
    }
    let names: Vec<&str> = pairs.iter().map(|(n, _)| n.as_str()).collect();
    let vectors = enc.embed_batch(&names)?;
    let dim = enc.dim();
    let mut matrix = Vec::with_capacity(pairs.len() * dim);
    for v in &vectors {
        if v.len() != dim {
            return Err(NormalizeError::DimensionMismatch(format!(
                "encoder returned dimension {}, expected {dim}",
                v.len()
            )));
        }
        matrix.extend_from_slice(v);
    }
    let (names, cuis) = pairs.iter().cloned().unzip();
    EmbeddingIndex::from_rows(names, cuis, dim, matrix)
}

/// One row per dictionary synonym, ordered by (name, cui).
pub fn build_index<S: Scalar>(lex: &Lexicon, enc: &dyn Encoder<S>) -> Result<EmbeddingIndex<S>, NormalizeError> {
    let pairs: Vec<(String, String)> = lex
        .pairs()
        .map(|(n, c)| (n.to_string(), c.to_string()))
        .collect();
    build_index_from_pairs(&pairs, enc)
}

/// Embeds `mention` and returns the `k` best dictionary rows by inner product.
pub fn dense_retrieve<S: Scalar>(
    mention: &str,
    idx: &EmbeddingIndex<S>,
    enc: &dyn Encoder<S>,
    k: usize,
) -> Result<Vec<Retrieved<S>>, NormalizeError> {
    if idx.is_empty() {
        return Err(NormalizeError::EmptyIndex);
    }
    if k == 0 {
        return Err(NormalizeError::InvalidK);
    }
    let q = enc.embed(mention)?;
    idx.top_k(&q, k)
}
