//! Plain-text tensor fixtures: a `shape: d0 d1 ...` header line followed by
//! whitespace-separated values in row-major order.

use std::fmt::Write as _;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub fn parse_tensor(text: &str) -> Result<Tensor> {
    let mut lines = text.lines();
    let header = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse("empty tensor fixture".into()))?;
    let dims = header
        .trim()
        .strip_prefix("shape:")
        .ok_or_else(|| Error::Parse(format!("expected `shape:` header, got {header:?}")))?;
    let shape = dims
        .split_whitespace()
        .map(|d| {
            d.parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad dimension {d:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = lines
        .flat_map(str::split_whitespace)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value {v:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(shape, data)
}

/// Renders a tensor in fixture form. Values use the shortest representation
/// that parses back to the same `f64`, one innermost row per line.
pub fn format_tensor(t: &Tensor) -> String {
    let mut s = String::from("shape:");
    for d in t.shape() {
        let _ = write!(s, " {d}");
    }
    s.push('\n');
    let row = *t.shape().last().unwrap_or(&1);
    for chunk in t.data().chunks(row) {
        let mut first = true;
        for v in chunk {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    parse_tensor(&text)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, format_tensor(t))?;
    Ok(())
}
