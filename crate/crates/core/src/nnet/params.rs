use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::Record;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Inputs feeding each output unit.
    pub fan_in: usize,
    /// Init bound is `gain / sqrt(fan_in)`.
    pub gain: f64,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed back to back in one flat vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl ParamLayout {
    /// Appends a tensor with init bound `1/sqrt(fan_in)` and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> usize {
        self.push_scaled(name, shape, fan_in, 1.0)
    }

    pub fn push_scaled(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, gain: f64) -> usize {
        let offset = self.len;
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
            fan_in,
            gain,
        };
        self.len += spec.len();
        self.tensors.push(spec);
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Name of the tensor holding flat index `i`.
    pub fn owner(&self, i: usize) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.range().contains(&i))
    }

    /// Seeded uniform fan-in initialization.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.len);
        for t in &self.tensors {
            let bound = t.gain / (t.fan_in.max(1) as f64).sqrt();
            out.extend((0..t.len()).map(|_| rng.random_range(-bound..bound)));
        }
        out
    }

    fn index_record(&self) -> Record {
        let mut r = Record::new();
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            r.push("tensor", format!("{} {} {}", t.name, shape.join("x"), t.offset));
        }
        r
    }

    fn check_index(&self, rec: &Record, path: &Path) -> Result<()> {
        let expected = self.index_record();
        let got: Vec<&str> = rec.get_all("tensor").collect();
        let want: Vec<&str> = expected.get_all("tensor").collect();
        if got != want {
            let first = want
                .iter()
                .zip(&got)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected '{a}', found '{b}'"))
                .unwrap_or_else(|| format!("expected {} tensors, found {}", want.len(), got.len()));
            return Err(Error::format(path, format!("tensor index does not match the model: {first}")));
        }
        Ok(())
    }
}

/// Checkpoint files: `<stem>.idx` (header record + tensor index lines
/// `name shape offset`) and `<stem>.bin` (f32 little endian, flat).
pub fn write_checkpoint(stem: &Path, header: &Record, layout: &ParamLayout, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), layout.len());
    let mut rec = header.clone();
    rec.push("param_count", layout.len());
    for (k, v) in layout.index_record().entries() {
        rec.push(k.clone(), v);
    }
    rec.write(&stem.with_extension("idx"))?;
    let bin = stem.with_extension("bin");
    let bytes: Vec<u8> = values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

pub fn read_checkpoint_header(stem: &Path) -> Result<Record> {
    Record::read(&stem.with_extension("idx"))
}

pub fn read_checkpoint_values(stem: &Path, layout: &ParamLayout) -> Result<Vec<f64>> {
    let idx = stem.with_extension("idx");
    layout.check_index(&Record::read(&idx)?, &idx)?;
    let bin = stem.with_extension("bin");
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != layout.len() * 4 {
        return Err(Error::format(
            &bin,
            format!("expected {} bytes of f32 weights, found {}", layout.len() * 4, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let name = layout.owner(i).map(|t| t.name.as_str()).unwrap_or("?");
        return Err(Error::format(&bin, format!("non-finite weight in tensor {name}")));
    }
    Ok(values)
}
