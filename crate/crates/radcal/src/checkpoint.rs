//! Plain-text network checkpoints.
//!
//! ```text
//! radcal-mlp 1
//! encoding sinusoidal 6 0
//! layer 0 72 128
//! <72·128 weights, row-major, one row per line>
//! <128 biases>
//! ...
//! ```
//!
//! Values are printed in Rust's shortest round-trip form, so a save/load
//! cycle is bitwise exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use radcal_core::diff::Tensor;
use radcal_core::model::{layer_shapes, Encoding, Linear, MlpWeights, ModelError, PositionalEncoding};

const MAGIC: &str = "radcal-mlp 1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Model(#[from] ModelError),
}

pub fn to_text(weights: &MlpWeights) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    match weights.encoding {
        Encoding::Raw => out.push_str("encoding raw\n"),
        Encoding::Sinusoidal(pe) => {
            let _ = writeln!(out, "encoding sinusoidal {} {}", pe.depth, u8::from(pe.include_input));
        }
    }
    for (k, layer) in weights.layers.iter().enumerate() {
        let (i, o) = layer.weight.shape();
        let _ = writeln!(out, "layer {k} {i} {o}");
        for r in 0..i {
            write_row(&mut out, layer.weight.row_slice(r));
        }
        write_row(&mut out, layer.bias.data());
    }
    out
}

fn write_row(out: &mut String, values: &[f64]) {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.inner.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Parse { line: self.line, message: message.into() }
    }

    fn numbers(&mut self, expected: usize) -> Result<Vec<f64>, CheckpointError> {
        let line = self.next()?;
        let values = line
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(self.err(format!("non-finite value {v}")));
        }
        Ok(values)
    }
}

pub fn from_text(text: &str) -> Result<MlpWeights, CheckpointError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    if lines.next()?.trim() != MAGIC {
        return Err(lines.err(format!("expected `{MAGIC}`")));
    }
    let enc_line = lines.next()?;
    let encoding = match enc_line.split_ascii_whitespace().collect::<Vec<_>>()[..] {
        ["encoding", "raw"] => Encoding::Raw,
        ["encoding", "sinusoidal", depth, include] => {
            let depth = depth.parse().map_err(|_| lines.err("bad encoding depth"))?;
            let include = match include {
                "0" => false,
                "1" => true,
                _ => return Err(lines.err("include flag must be 0 or 1")),
            };
            Encoding::Sinusoidal(PositionalEncoding::new(depth, include)?)
        }
        _ => return Err(lines.err("bad encoding line")),
    };
    let mut layers = Vec::new();
    for (k, (i, o)) in layer_shapes(&encoding).into_iter().enumerate() {
        let header = lines.next()?;
        if header.split_ascii_whitespace().collect::<Vec<_>>() != [String::from("layer"), k.to_string(), i.to_string(), o.to_string()] {
            return Err(lines.err(format!("expected `layer {k} {i} {o}`")));
        }
        let mut w = Vec::with_capacity(i * o);
        for _ in 0..i {
            w.extend(lines.numbers(o)?);
        }
        let b = lines.numbers(o)?;
        layers.push(Linear { weight: Tensor::new(i, o, w), bias: Tensor::new(1, o, b) });
    }
    if let Some((n, l)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(CheckpointError::Parse { line: n + 1, message: format!("trailing content `{l}`") });
    }
    Ok(MlpWeights::new(encoding, layers)?)
}

pub fn save(path: &Path, weights: &MlpWeights) -> Result<(), CheckpointError> {
    fs::write(path, to_text(weights)).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load(path: &Path) -> Result<MlpWeights, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use radcal_core::model::init_weights;

    #[test]
    fn round_trip_is_bitwise() {
        for enc in [Encoding::Raw, Encoding::sinusoidal(6).unwrap()] {
            let w = init_weights(7, enc);
            let back = from_text(&to_text(&w)).unwrap();
            for (a, b) in w.tensors().iter().zip(back.tensors()) {
                let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(same);
            }
            assert_eq!(back.encoding, enc);
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let text = to_text(&init_weights(1, Encoding::Raw));
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(from_text(&cut), Err(CheckpointError::Parse { .. })));
    }
}
