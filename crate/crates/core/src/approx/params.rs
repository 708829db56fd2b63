use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A named contiguous range of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Flat parameter vector with a layout descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<ParamBlock>,
}

impl ParamVector {
    /// Fails unless the layout partitions `[0, values.len())` in order.
    pub fn new(values: Vec<f64>, layout: Vec<ParamBlock>) -> Result<Self> {
        let mut next = 0;
        for block in &layout {
            if block.start != next {
                return Err(Error::InvalidModel(alloc::format!(
                    "parameter block '{}' starts at {} but previous block ends at {}",
                    block.name,
                    block.start,
                    next
                )));
            }
            next += block.len;
        }
        if next != values.len() {
            return Err(Error::InvalidModel(alloc::format!(
                "layout covers {} parameters but vector has {}",
                next,
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.start..b.start + b.len])
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidModel(alloc::format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self { values, layout: self.layout.clone() })
    }
}

/// Appends blocks back to back.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    blocks: Vec<ParamBlock>,
    next: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, len: usize) -> usize {
        let start = self.next;
        self.blocks.push(ParamBlock { name: name.into(), start, len });
        self.next += len;
        start
    }

    pub fn total(&self) -> usize {
        self.next
    }

    pub fn finish(self) -> Vec<ParamBlock> {
        self.blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_gaps_and_overlaps() {
        let gap = vec![
            ParamBlock { name: "a".into(), start: 0, len: 2 },
            ParamBlock { name: "b".into(), start: 3, len: 1 },
        ];
        assert!(ParamVector::new(vec![0.0; 4], gap).is_err());
        let short = vec![ParamBlock { name: "a".into(), start: 0, len: 2 }];
        assert!(ParamVector::new(vec![0.0; 3], short).is_err());
    }

    #[test]
    fn block_lookup() {
        let mut b = LayoutBuilder::new();
        b.push("w", 2);
        b.push("b", 1);
        let p = ParamVector::new(vec![1.0, 2.0, 3.0], b.finish()).unwrap();
        assert_eq!(p.block("b"), Some(&[3.0][..]));
    }
}
