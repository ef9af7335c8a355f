//! Tensor files: one line of JSON header, then raw little-endian `f64` data.
//!
//! A single ROI feature block has the header `{"shape":[N,C,H,W]}`. Parameter
//! bundles list `"shapes"` and may carry extra metadata fields.

use std::path::Path;

use serde_json::{json, Map, Value};
use vsor_core::Tensor;

use crate::error::{Error, Result};

fn split(bytes: &[u8]) -> std::result::Result<(Map<String, Value>, &[u8]), String> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or("missing header line")?;
    let header: Value = serde_json::from_slice(&bytes[..nl]).map_err(|e| e.to_string())?;
    match header {
        Value::Object(m) => Ok((m, &bytes[nl + 1..])),
        _ => Err("header is not a JSON object".into()),
    }
}

fn shape_of(v: &Value) -> std::result::Result<Vec<usize>, String> {
    let dims = v.as_array().ok_or("shape is not an array")?;
    dims.iter()
        .map(|d| {
            d.as_u64()
                .filter(|&d| d > 0)
                .map(|d| d as usize)
                .ok_or_else(|| format!("bad extent {d}"))
        })
        .collect()
}

fn take_tensors(
    shapes: &[Vec<usize>],
    mut data: &[u8],
) -> std::result::Result<Vec<Tensor>, String> {
    let needed: usize = shapes.iter().map(|s| s.iter().product::<usize>() * 8).sum();
    if data.len() != needed {
        return Err(format!(
            "{} data bytes, header describes {needed}",
            data.len()
        ));
    }
    shapes
        .iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            let (chunk, rest) = data.split_at(n * 8);
            data = rest;
            let values = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::new(shape, values).map_err(|e| e.to_string())
        })
        .collect()
}

fn put(header: &Value, tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).unwrap();
    out.push(b'\n');
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn encode_features(t: &Tensor) -> Vec<u8> {
    put(&json!({ "shape": t.shape() }), &[t])
}

pub fn decode_features(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let (header, data) = split(bytes)?;
    let shape = shape_of(header.get("shape").ok_or("header has no shape")?)?;
    Ok(take_tensors(&[shape], data)?.remove(0))
}

/// Encodes several tensors behind `meta` plus a `"shapes"` list.
pub fn encode_bundle(meta: Map<String, Value>, tensors: &[&Tensor]) -> Vec<u8> {
    let mut header = meta;
    let shapes: Vec<Value> = tensors.iter().map(|t| json!(t.shape())).collect();
    header.insert("shapes".into(), Value::Array(shapes));
    put(&Value::Object(header), tensors)
}

pub fn decode_bundle(
    bytes: &[u8],
) -> std::result::Result<(Map<String, Value>, Vec<Tensor>), String> {
    let (mut header, data) = split(bytes)?;
    let shapes = header
        .remove("shapes")
        .ok_or("header has no shapes")?
        .as_array()
        .ok_or("shapes is not an array")?
        .iter()
        .map(shape_of)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, take_tensors(&shapes, data)?))
}

fn bad(path: &Path) -> impl FnOnce(String) -> Error + '_ {
    move |reason| Error::Tensor {
        path: path.into(),
        reason,
    }
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes).map_err(bad(path))
}

pub fn write_features(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_features(t)).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: &Path) -> Result<(Map<String, Value>, Vec<Tensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes).map_err(bad(path))
}

pub fn write_bundle(path: &Path, meta: Map<String, Value>, tensors: &[&Tensor]) -> Result<()> {
    std::fs::write(path, encode_bundle(meta, tensors)).map_err(|e| Error::io(path, e))
}
