//! Flat parameter stores with named layer views.
//!
//! Both trainable networks (the gain network and the hypernetwork) keep
//! their weights in one contiguous `Vec<f64>` partitioned into named
//! blocks. Flat storage is what the optimizer and the checkpoint
//! container operate on; the named views are what the layers use.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    data: Vec<f64>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Append a zero-initialized block. Block names must be unique.
    pub fn add_block(&mut self, name: &str, rows: usize, cols: usize) {
        assert!(
            self.block(name).is_none(),
            "duplicate parameter block '{}'",
            name
        );
        let offset = self.data.len();
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            rows,
            cols,
            offset,
        });
        self.data.resize(offset + rows * cols, 0.0);
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn block_required(&self, name: &str) -> Result<&ParamBlock> {
        self.block(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter block '{}'", name)))
    }

    pub fn slice(&self, name: &str) -> Result<&[f64]> {
        let b = self.block_required(name)?;
        Ok(&self.data[b.offset..b.offset + b.len()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let b = self.block_required(name)?.clone();
        Ok(&mut self.data[b.offset..b.offset + b.len()])
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let b = self.block_required(name)?;
        Ok(Matrix::new(
            b.rows,
            b.cols,
            self.data[b.offset..b.offset + b.len()].to_vec(),
        ))
    }

    pub fn set_matrix(&mut self, name: &str, m: &Matrix) -> Result<()> {
        let b = self.block_required(name)?.clone();
        if b.rows != m.rows() || b.cols != m.cols() {
            return Err(Error::DimensionMismatch {
                op: "set_matrix",
                details: format!(
                    "block '{}' is {}x{}, value is {}x{}",
                    name,
                    b.rows,
                    b.cols,
                    m.rows(),
                    m.cols()
                ),
            });
        }
        self.data[b.offset..b.offset + b.len()].copy_from_slice(m.data());
        Ok(())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Name of the block that owns flat index `i`.
    pub fn block_of_index(&self, i: usize) -> &str {
        for b in &self.blocks {
            if i >= b.offset && i < b.offset + b.len() {
                return &b.name;
            }
        }
        "<out of range>"
    }

    /// Total trainable-parameter count with a per-block breakdown.
    pub fn param_count(&self) -> (usize, Vec<(String, usize)>) {
        let per_block: Vec<(String, usize)> =
            self.blocks.iter().map(|b| (b.name.clone(), b.len())).collect();
        (self.data.len(), per_block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_storage_without_overlap() {
        let mut store = ParamStore::new();
        store.add_block("a.w", 2, 3);
        store.add_block("a.b", 2, 1);
        store.add_block("out", 1, 2);
        assert_eq!(store.len(), 6 + 2 + 2);
        assert_eq!(store.block("a.b").unwrap().offset, 6);
        assert_eq!(store.block_of_index(0), "a.w");
        assert_eq!(store.block_of_index(6), "a.b");
        assert_eq!(store.block_of_index(9), "out");
    }

    #[test]
    fn matrix_roundtrip() {
        let mut store = ParamStore::new();
        store.add_block("w", 2, 2);
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        store.set_matrix("w", &m).unwrap();
        assert_eq!(store.matrix("w").unwrap(), m);
    }

    #[test]
    fn param_count_breakdown() {
        let mut store = ParamStore::new();
        store.add_block("w", 4, 5);
        store.add_block("b", 4, 1);
        let (total, blocks) = store.param_count();
        assert_eq!(total, 24);
        assert_eq!(blocks[0], ("w".to_string(), 20));
        assert_eq!(blocks[1], ("b".to_string(), 4));
    }
}
