use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyConfig;
use crate::error::PolicyError;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { rows, cols, data }
    }

    /// Xavier/Glorot uniform initialisation.
    pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, bound, rng)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = self · x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yi != 0.0 {
                axpy(*yi, row, out);
            }
        }
    }

    /// `self += a ⊗ b`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *ai != 0.0 {
                axpy(*ai, b, row);
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One LSTM layer; gate blocks are stacked in the order input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vec<f64>,
}

impl LstmLayer {
    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols
    }
}

/// Every trainable parameter of the walking policy.
///
/// `w1` maps `[h; e]` (LSTM width + embedding width) to the hidden layer and
/// `w2` maps the hidden layer to the `2d` action space.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub entity: Matrix,
    pub relation: Matrix,
    pub lstm: Vec<LstmLayer>,
    pub w1: Matrix,
    pub w2: Matrix,
}

pub const EMBEDDING_INIT_BOUND: f64 = 0.01;
pub const FORGET_BIAS: f64 = 1.0;

impl PolicyParams {
    pub fn init<R: Rng>(
        config: &PolicyConfig,
        num_entities: usize,
        num_relations: usize,
        rng: &mut R,
    ) -> Self {
        let d = config.embedding_dim;
        let h = config.hidden_dim;
        let entity = Matrix::uniform(num_entities, d, EMBEDDING_INIT_BOUND, rng);
        let relation = Matrix::uniform(num_relations, d, EMBEDDING_INIT_BOUND, rng);
        let lstm = (0..config.lstm_layers)
            .map(|layer| {
                let input = if layer == 0 { 2 * d } else { h };
                let mut bias = vec![0.0; 4 * h];
                bias[h..2 * h].iter_mut().for_each(|b| *b = FORGET_BIAS);
                LstmLayer {
                    w_input: Matrix::xavier(4 * h, input, rng),
                    w_hidden: Matrix::xavier(4 * h, h, rng),
                    bias,
                }
            })
            .collect();
        Self {
            entity,
            relation,
            lstm,
            w1: Matrix::xavier(h, h + d, rng),
            w2: Matrix::xavier(2 * d, h, rng),
        }
    }

    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &PolicyConfig, num_entities: usize, num_relations: usize) -> Self {
        let d = config.embedding_dim;
        let h = config.hidden_dim;
        Self {
            entity: Matrix::zeros(num_entities, d),
            relation: Matrix::zeros(num_relations, d),
            lstm: (0..config.lstm_layers)
                .map(|layer| LstmLayer {
                    w_input: Matrix::zeros(4 * h, if layer == 0 { 2 * d } else { h }),
                    w_hidden: Matrix::zeros(4 * h, h),
                    bias: vec![0.0; 4 * h],
                })
                .collect(),
            w1: Matrix::zeros(h, h + d),
            w2: Matrix::zeros(2 * d, h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        Self {
            entity: z(&self.entity),
            relation: z(&self.relation),
            lstm: self
                .lstm
                .iter()
                .map(|l| LstmLayer {
                    w_input: z(&l.w_input),
                    w_hidden: z(&l.w_hidden),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            w1: z(&self.w1),
            w2: z(&self.w2),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.entity.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows
    }

    /// Named views of every parameter block, in a fixed order.
    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = vec![
            ParamBlock::new("entity_embeddings", &self.entity),
            ParamBlock::new("relation_embeddings", &self.relation),
        ];
        for (i, layer) in self.lstm.iter().enumerate() {
            out.push(ParamBlock::new(format!("lstm{i}.w_input"), &layer.w_input));
            out.push(ParamBlock::new(
                format!("lstm{i}.w_hidden"),
                &layer.w_hidden,
            ));
            out.push(ParamBlock {
                name: format!("lstm{i}.bias"),
                shape: (1, layer.bias.len()),
                data: &layer.bias,
            });
        }
        out.push(ParamBlock::new("w1", &self.w1));
        out.push(ParamBlock::new("w2", &self.w2));
        out
    }

    /// Mutable flat slices of every block, in the same order as [`Self::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.entity.data, &mut self.relation.data];
        for layer in &mut self.lstm {
            out.push(&mut layer.w_input.data);
            out.push(&mut layer.w_hidden.data);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.w1.data);
        out.push(&mut self.w2.data);
        out
    }

    pub fn num_values(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.data.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Writes a versioned checkpoint: magic, JSON header, raw little-endian f64 blocks.
    pub fn save(&self, config: &PolicyConfig, path: &Path) -> Result<(), PolicyError> {
        let io = |source| PolicyError::Io {
            path: path.to_owned(),
            source,
        };
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            blocks: self
                .blocks()
                .iter()
                .map(|b| BlockHeader {
                    name: b.name.clone(),
                    rows: b.shape.0,
                    cols: b.shape.1,
                })
                .collect(),
        };
        let header =
            serde_json::to_vec(&header).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        let mut buf = Vec::with_capacity(16 + header.len() + 8 * self.num_values());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for block in self.blocks() {
            for v in block.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&buf).map_err(io)
    }

    /// Reads a checkpoint and checks every block against the shapes implied by
    /// its stored config and the graph sizes.
    pub fn load(
        path: &Path,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<(PolicyConfig, Self), PolicyError> {
        let io = |source| PolicyError::Io {
            path: path.to_owned(),
            source,
        };
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(io)?
            .read_to_end(&mut bytes)
            .map_err(io)?;
        let bad = |m: &str| PolicyError::Checkpoint(m.to_owned());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        header.config.validate()?;

        let mut params = PolicyParams::zeros(&header.config, num_entities, num_relations);
        let expected: Vec<(String, (usize, usize))> = params
            .blocks()
            .iter()
            .map(|b| (b.name.clone(), b.shape))
            .collect();
        if expected.len() != header.blocks.len() {
            return Err(PolicyError::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                header.blocks.len()
            )));
        }
        for ((name, shape), found) in expected.iter().zip(&header.blocks) {
            if *name != found.name || *shape != (found.rows, found.cols) {
                return Err(PolicyError::ShapeMismatch {
                    block: name.clone(),
                    expected: *shape,
                    found: (found.rows, found.cols),
                });
            }
        }
        let mut offset = header_end;
        for block in params.blocks_mut() {
            let end = offset + 8 * block.len();
            if end > bytes.len() {
                return Err(bad("truncated parameter data"));
            }
            for (v, chunk) in block.iter_mut().zip(bytes[offset..end].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            offset = end;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        Ok((header.config, params))
    }
}

pub struct ParamBlock<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

impl<'a> ParamBlock<'a> {
    fn new(name: impl Into<String>, m: &'a Matrix) -> Self {
        Self {
            name: name.into(),
            shape: m.shape(),
            data: &m.data,
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"POLOCKPT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    config: PolicyConfig,
    blocks: Vec<BlockHeader>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    rows: usize,
    cols: usize,
}
