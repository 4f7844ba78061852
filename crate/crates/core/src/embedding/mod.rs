//! Spatial node embeddings: biased random walks over the location graph,
//! trained into dense vectors with SkipGram negative sampling.

mod alias;
mod skipgram;
mod walk;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use alias::AliasTable;
pub use skipgram::{
    apply_pair_update, pair_gradient, pair_loss, train_skipgram, train_skipgram_with_history, PairGradient,
    TrainConfig, TrainMode, TrainedEmbedding,
};
pub use walk::{generate_walks, Adjacency, WalkConfig};

use crate::geo::SpatialGraph;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("alias table needs at least one weight")]
    EmptyWeights,
    #[error("weight {index} must be positive and finite, got {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("no walks to train on")]
    EmptyWalks,
    #[error("walk references node {node} but the graph has {n} nodes")]
    NodeIdOutOfRange { node: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Dense `n x dims` input vectors plus, when trained in-process, the matching
/// output (context) vectors. Rows are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub dims: usize,
    pub matrix: Vec<f64>,
    pub context: Option<Vec<f64>>,
}

impl Embedding {
    /// Input vectors uniform in `[-0.5/dims, 0.5/dims]`, context vectors zero.
    pub fn initialize(n: usize, dims: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dims as f64;
        let matrix = (0..n * dims).map(|_| rng.gen_range(-half..=half)).collect();
        Self { n, dims, matrix, context: Some(vec![0.0; n * dims]) }
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.matrix[node * self.dims..(node + 1) * self.dims]
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|x| x.is_finite())
            && self.context.as_ref().is_none_or(|c| c.iter().all(|x| x.is_finite()))
    }

    pub fn column_names(&self) -> Vec<String> {
        (0..self.dims).map(|k| format!("e{k}")).collect()
    }

    /// CSV with header `node_id,e0,..`; values use the shortest decimal that
    /// round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EmbeddingError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["node_id".to_string()];
        header.extend(self.column_names());
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.dims + 1);
        for node in 0..self.n {
            rec.clear();
            rec.push(node.to_string());
            rec.extend(self.row(node).iter().map(|x| x.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let dims = header.len().saturating_sub(1);
        let expected: Vec<String> =
            std::iter::once("node_id".to_string()).chain((0..dims).map(|k| format!("e{k}"))).collect();
        if dims < 2 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(EmbeddingError::Format(format!(
                "header must be `node_id,e0,...`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut matrix = Vec::new();
        let mut n = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| EmbeddingError::Format(format!("row {}: {what}", line + 2));
            let id: usize = rec[0].parse().map_err(|_| bad("node_id is not an integer"))?;
            if id != n {
                return Err(bad("node ids must be contiguous from 0"));
            }
            for field in rec.iter().skip(1) {
                let x: f64 = field.parse().map_err(|_| bad("value is not a number"))?;
                if !x.is_finite() {
                    return Err(bad("value is not finite"));
                }
                matrix.push(x);
            }
            n += 1;
        }
        Ok(Self { n, dims, matrix, context: None })
    }

    /// SHA-256 of the CSV serialisation, hex encoded.
    pub fn checksum(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Walks then SkipGram: an `n x dims` embedding of the graph's nodes.
pub fn embed_graph(
    g: &SpatialGraph,
    walk_cfg: &WalkConfig,
    train_cfg: &TrainConfig,
) -> Result<Embedding, EmbeddingError> {
    train_cfg.validate()?;
    let walks = generate_walks(g, walk_cfg)?;
    train_skipgram(&walks, g.node_count(), train_cfg)
}
