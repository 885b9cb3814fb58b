//! Deterministic report formatting and mask images.

use std::fs;
use std::path::Path;

use conceptkit::{Error, Mask, Result};
use serde::Serialize;
use serde_json::Value;

/// Rounds a float to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = sig6(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

/// Pretty JSON with sorted keys and floats at 6 significant digits.
pub fn report_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is ordered by key, so a round trip through Value sorts.
    let v = round_floats(serde_json::to_value(value)?);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = report_json(value)?;
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Binary PGM (P5, maxval 255) from per-cell gray levels.
pub fn pgm(h: usize, w: usize, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn mask_pgm(mask: &Mask) -> Vec<u8> {
    let gray: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    pgm(mask.height(), mask.width(), &gray)
}

/// All masks in one image, concept `k` of `n` at gray level `255 (k + 1) / n`.
pub fn overlay_pgm(h: usize, w: usize, masks: &[Mask]) -> Vec<u8> {
    let n = masks.len().max(1);
    let mut gray = vec![0u8; h * w];
    for (k, m) in masks.iter().enumerate() {
        let level = (255 * (k + 1) / n) as u8;
        for p in m.indices() {
            gray[p] = level;
        }
    }
    pgm(h, w, &gray)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0 / 3.0), 0.333333);
        assert_eq!(sig6(123456789.0), 123457000.0);
        assert_eq!(sig6(-2.5e-9), -2.5e-9);
    }

    #[test]
    fn keys_are_sorted() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: u32,
        }
        let s = report_json(&R {
            zeta: 2.0 / 3.0,
            alpha: 1,
        })
        .unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("0.666667"));
    }

    #[test]
    fn pgm_header() {
        let img = mask_pgm(&Mask::from_indices(2, 3, [1]));
        assert_eq!(&img[..11], b"P5\n3 2\n255\n");
        assert_eq!(&img[11..], &[0, 255, 0, 0, 0, 0]);
    }
}
