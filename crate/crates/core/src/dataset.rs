//! On-disk containers.
//!
//! A stack directory holds `meta.json` plus one `.fpc` file per image. An
//! `.fpc` file is the magic `FPC1`, then `rows`, `cols` and a reserved word as
//! little-endian `u32`, then `rows * cols` little-endian `f32` in row-major
//! order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{KVector, SystemParams};
use crate::simulate::{GeometryConfig, ImageStack};

const MAGIC: &[u8; 4] = b"FPC1";

pub fn write_fpc(path: &Path, data: &Array2<f64>) -> Result<()> {
    let (rows, cols) = data.dim();
    let mut buf = Vec::with_capacity(16 + 4 * rows * cols);
    buf.extend_from_slice(MAGIC);
    for v in [rows as u32, cols as u32, 0u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in data.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_fpc(path: &Path) -> Result<Array2<f64>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(bad("missing FPC1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(1), word(2));
    if buf.len() != 16 + 4 * rows * cols {
        return Err(bad(&format!("expected {} payload bytes for {rows}x{cols}", 4 * rows * cols)));
    }
    let values = buf[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub file: String,
    pub index: usize,
    pub source: usize,
    pub board: usize,
    pub expected_na: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_na: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered_px: Option<[i64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub params: SystemParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub illuminator: Option<GeometryConfig>,
    pub images: Vec<ImageMeta>,
}

pub fn save_stack(dir: &Path, stack: &ImageStack) -> Result<()> {
    stack.validate()?;
    fs::create_dir_all(dir)?;
    let lambda = stack.params.wavelength;
    let mut images = Vec::with_capacity(stack.len());
    for (i, img) in stack.images.iter().enumerate() {
        let file = format!("img_{i:04}.fpc");
        write_fpc(&dir.join(&file), img)?;
        images.push(ImageMeta {
            file,
            index: i,
            source: stack.sources[i],
            board: stack.boards[i],
            expected_na: stack.expected[i].to_na(lambda),
            true_na: stack.truth.as_ref().map(|t| t[i].to_na(lambda)),
            rendered_px: stack.rendered.as_ref().map(|r| r[i]),
        });
    }
    let meta = StackMeta { params: stack.params, illuminator: stack.geometry.clone(), images };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_stack(dir: &Path) -> Result<ImageStack> {
    let text = fs::read_to_string(dir.join("meta.json"))?;
    let meta: StackMeta = serde_json::from_str(&text)?;
    meta.params.validate()?;
    let lambda = meta.params.wavelength;
    let mut images = Vec::with_capacity(meta.images.len());
    for (i, im) in meta.images.iter().enumerate() {
        if im.index != i {
            return Err(Error::Format(format!("image entries out of order at {i}")));
        }
        images.push(read_fpc(&dir.join(&im.file))?);
    }
    let all_true = meta.images.iter().all(|m| m.true_na.is_some());
    let all_rendered = meta.images.iter().all(|m| m.rendered_px.is_some());
    let stack = ImageStack {
        params: meta.params,
        images,
        expected: meta.images.iter().map(|m| KVector::from_na(m.expected_na, lambda)).collect(),
        truth: (all_true && !meta.images.is_empty())
            .then(|| meta.images.iter().map(|m| KVector::from_na(m.true_na.unwrap(), lambda)).collect()),
        rendered: (all_rendered && !meta.images.is_empty())
            .then(|| meta.images.iter().map(|m| m.rendered_px.unwrap()).collect()),
        sources: meta.images.iter().map(|m| m.source).collect(),
        boards: meta.images.iter().map(|m| m.board).collect(),
        geometry: meta.illuminator,
    };
    stack.validate()?;
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fpc_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = Array2::from_shape_fn((5, 7), |(r, c)| ((r * 7 + c) as f32 * 0.137) as f64);
        let p = dir.path().join("a.fpc");
        write_fpc(&p, &a).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16 + 4 * 35);
        assert_eq!(read_fpc(&p).unwrap(), a);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fpc");
        write_fpc(&p, &Array2::zeros((4, 4))).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_fpc(&p), Err(Error::Format(_))));
        fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(read_fpc(&p), Err(Error::Format(_))));
    }
}
