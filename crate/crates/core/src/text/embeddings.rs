//! Embedding tables and their plain-text file format:
//!
//! ```text
//! <count> <dim>
//! <token> <v1> <v2> ... <v_dim>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `|V| × d_e` word vectors aligned with a [`Vocabulary`]; row 0 is padding
/// and stays zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub matrix: Matrix,
}

impl EmbeddingTable {
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = Matrix::uniform(vocab_size, dim, 0.5 / dim as f64, &mut rng);
        matrix.row_mut(PAD_ID as usize).fill(0.0);
        EmbeddingTable { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols
    }

    pub fn vector(&self, id: u32) -> &[f64] {
        self.matrix.row(id as usize)
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        save_vectors(path, vocab.tokens(), &self.matrix)
    }

    /// Load vectors from a file and align them with `vocab`. Tokens absent
    /// from the file keep a seeded random initialization; padding is zero.
    pub fn load(path: &Path, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        let (tokens, matrix) = load_vectors(path)?;
        let mut table = EmbeddingTable::random(vocab.len(), matrix.cols, seed);
        for (row, token) in tokens.iter().enumerate() {
            let id = vocab.id(token);
            if id != PAD_ID && vocab.token(id) == Some(token.as_str()) {
                table.matrix.row_mut(id as usize).copy_from_slice(matrix.row(row));
            }
        }
        Ok(table)
    }
}

/// `|Y| × d_l` label vectors in label-space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEmbeddings {
    pub labels: Vec<String>,
    pub matrix: Matrix,
}

impl LabelEmbeddings {
    pub fn dim(&self) -> usize {
        self.matrix.cols
    }

    pub fn vector(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.matrix.row(i))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_vectors(path, &self.labels, &self.matrix)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (labels, matrix) = load_vectors(path)?;
        Ok(LabelEmbeddings { labels, matrix })
    }
}

pub fn save_vectors(path: &Path, tokens: &[String], matrix: &Matrix) -> Result<()> {
    if tokens.len() != matrix.rows {
        return Err(Error::Dimension(format!(
            "{} tokens for {} rows",
            tokens.len(),
            matrix.rows
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", matrix.rows, matrix.cols).map_err(io)?;
    for (r, token) in tokens.iter().enumerate() {
        write!(out, "{token}").map_err(io)?;
        for v in matrix.row(r) {
            write!(out, " {v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_vectors(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty embedding file"))?
        .map_err(|e| Error::io(path, e))?;
    let mut parts = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(count)), Some(Ok(dim)), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::invalid(format!("bad embedding header `{header}`")));
    };
    let mut tokens = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .filter(|f| !f.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("line {}: {e}", n + 2)))?;
        if values.len() != dim {
            return Err(Error::Dimension(format!(
                "line {}: expected {dim} values, found {}",
                n + 2,
                values.len()
            )));
        }
        tokens.push(token);
        data.extend(values);
    }
    if tokens.len() != count {
        return Err(Error::invalid(format!(
            "header declares {count} vectors, file holds {}",
            tokens.len()
        )));
    }
    Ok((tokens, Matrix::from_vec(count, dim, data)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        let tokens = vec!["<pad>".to_string(), "<unk>".into(), "heart".into()];
        let matrix = Matrix::from_vec(3, 2, vec![0.0, 0.0, 1.0 / 3.0, -2.5e-7, 123456.789, 1e-12]);
        save_vectors(&path, &tokens, &matrix).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("3 2\n<pad> 0 0\n"));
        let (t, m) = load_vectors(&path).unwrap();
        assert_eq!(t, tokens);
        for (a, b) in m.data.iter().zip(&matrix.data) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-30));
        }
    }

    #[test]
    fn load_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1 3\nword 1 2\n").unwrap();
        assert!(load_vectors(&path).is_err());
    }

    #[test]
    fn random_table_has_zero_padding_row() {
        let t = EmbeddingTable::random(10, 4, 3);
        assert!(t.vector(0).iter().all(|&v| v == 0.0));
        assert!(t.vector(5).iter().any(|&v| v != 0.0));
    }
}
