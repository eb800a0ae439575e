//! File formats for cubes and images.
//!
//! Cube directory: `metadata.json` plus `frame_NNNN.csv`, one comma-separated
//! `rows × cols` matrix per delay step.
//!
//! Cube binary (`.wfc`), all little-endian:
//!
//! | offset | type     | field                            |
//! |--------|----------|----------------------------------|
//! | 0      | [u8; 8]  | magic `WFCUBE01`                 |
//! | 8      | u32 × 3  | rows, cols, delays               |
//! | 20     | u32      | reserved, 0                      |
//! | 24     | f64      | pixel pitch (crystal plane, m)   |
//! | 32     | f64      | first delay (s)                  |
//! | 40     | f64      | delay step (s)                   |
//! | 48     | [u8; 16] | zero padding                     |
//! | 64     | f32 × N  | counts, `[row][col][delay]` order |
//!
//! The binary form stores counts as `f32` and carries no pixel mask.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::WaveformCube;

pub const CUBE_MAGIC: &[u8; 8] = b"WFCUBE01";
pub const CUBE_HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CubeMetadata {
    rows: usize,
    cols: usize,
    delay_times: Vec<f64>,
    pixel_pitch_effective: f64,
    /// Row-major, 1 = valid.
    valid: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

fn frame_name(k: usize) -> String {
    format!("frame_{k:04}.csv")
}

/// Writes a cube directory; `config` is embedded verbatim in the metadata.
pub fn write_cube_dir(cube: &WaveformCube, dir: &Path, config: Option<serde_json::Value>) -> Result<()> {
    cube.check()?;
    fs::create_dir_all(dir)?;
    let (rows, cols, n) = cube.shape();
    let meta = CubeMetadata {
        rows,
        cols,
        delay_times: cube.delay_times.clone(),
        pixel_pitch_effective: cube.pixel_pitch_effective,
        valid: cube.valid.iter().map(|&v| v as u8).collect(),
        config,
    };
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    for k in 0..n {
        let frame = cube.counts.slice(ndarray::s![.., .., k]).to_owned();
        fs::write(dir.join(frame_name(k)), matrix_to_csv(&frame))?;
    }
    Ok(())
}

pub fn read_cube_dir(dir: &Path) -> Result<WaveformCube> {
    let meta: CubeMetadata = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json"))?)?;
    let n = meta.delay_times.len();
    let mut counts = Array3::zeros((meta.rows, meta.cols, n));
    for k in 0..n {
        let frame = csv_to_matrix(&fs::read_to_string(dir.join(frame_name(k)))?)?;
        if frame.dim() != (meta.rows, meta.cols) {
            return Err(Error::ShapeMismatch(vec![meta.rows, meta.cols], frame.shape().to_vec()));
        }
        counts.slice_mut(ndarray::s![.., .., k]).assign(&frame);
    }
    if meta.valid.len() != meta.rows * meta.cols {
        return Err(Error::Format("metadata valid mask has the wrong length".into()));
    }
    let valid = Array2::from_shape_vec((meta.rows, meta.cols), meta.valid.iter().map(|&v| v != 0).collect())
        .expect("length checked");
    let cube = WaveformCube { counts, pixel_pitch_effective: meta.pixel_pitch_effective, delay_times: meta.delay_times, valid };
    cube.check()?;
    Ok(cube)
}

pub fn encode_cube_binary(cube: &WaveformCube) -> Result<Vec<u8>> {
    cube.check()?;
    let (rows, cols, n) = cube.shape();
    let mut out = Vec::with_capacity(CUBE_HEADER_LEN + 4 * rows * cols * n);
    out.extend_from_slice(CUBE_MAGIC);
    for v in [rows as u32, cols as u32, n as u32, 0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [cube.pixel_pitch_effective, cube.delay_times[0], cube.delay_step()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.resize(CUBE_HEADER_LEN, 0);
    for &c in cube.counts.iter() {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cube_binary(bytes: &[u8]) -> Result<WaveformCube> {
    if bytes.len() < CUBE_HEADER_LEN || &bytes[..8] != CUBE_MAGIC {
        return Err(Error::Format("not a WFCUBE01 file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (rows, cols, n) = (u32_at(8), u32_at(12), u32_at(16));
    let (pitch, t0, dt) = (f64_at(24), f64_at(32), f64_at(40));
    let expected = CUBE_HEADER_LEN + 4 * rows * cols * n;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values: Vec<f64> = bytes[CUBE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let counts = Array3::from_shape_vec((rows, cols, n), values).expect("length checked");
    let delay_times = (0..n).map(|k| t0 + k as f64 * dt).collect();
    WaveformCube::new(counts, pitch, delay_times)
}

pub fn write_cube_binary(cube: &WaveformCube, path: &Path) -> Result<()> {
    fs::write(path, encode_cube_binary(cube)?)?;
    Ok(())
}

pub fn read_cube_binary(path: &Path) -> Result<WaveformCube> {
    decode_cube_binary(&fs::read(path)?)
}

/// Comma-separated rows; NaN is written as `nan`.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn csv_to_matrix(text: &str) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Format(format!("line {}: ragged row", i + 1)));
        }
        data.extend(row);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).expect("rows are uniform"))
}

pub fn mask_to_csv(mask: &Array2<bool>) -> String {
    let mut s = String::new();
    for row in mask.rows() {
        let line: Vec<&str> = row.iter().map(|&v| if v { "1" } else { "0" }).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Binary 16-bit PGM. Finite values map linearly from `[min, max]` onto
/// `[0, 65535]`; the header comment records the mapping. Non-finite
/// values become 0.
pub fn to_pgm16(m: &Array2<f64>) -> Vec<u8> {
    let finite = m.iter().copied().filter(|v| v.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
    let span = if max > min { max - min } else { 1.0 };
    let (rows, cols) = m.dim();
    let mut header = String::from("P5\n");
    let _ = writeln!(header, "# value = {min:e} + pixel * {:e}", span / 65535.0);
    let _ = write!(header, "{cols} {rows}\n65535\n");
    let mut out = header.into_bytes();
    for &v in m.iter() {
        let p = if v.is_finite() { (((v - min) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        out.extend_from_slice(&p.to_be_bytes());
    }
    out
}

/// Reads a PGM written by [`to_pgm16`] back into physical values.
pub fn from_pgm16(bytes: &[u8]) -> Result<Array2<f64>> {
    let bad = |m: &str| Error::Format(format!("pgm: {m}"));
    let mut lines = Vec::new();
    let mut pos = 0;
    while lines.len() < 4 {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))? + pos;
        lines.push(std::str::from_utf8(&bytes[pos..end]).map_err(|_| bad("header not text"))?.to_string());
        pos = end + 1;
    }
    if lines[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let scale: Vec<f64> = lines[1]
        .trim_start_matches("# value = ")
        .split(" + pixel * ")
        .map(|v| v.parse().map_err(|_| bad("missing scale comment")))
        .collect::<Result<_>>()?;
    let dims: Vec<usize> = lines[2]
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| bad("bad dimensions")))
        .collect::<Result<_>>()?;
    let (cols, rows) = (dims[0], dims[1]);
    let body = &bytes[pos..];
    if body.len() != 2 * rows * cols || scale.len() != 2 {
        return Err(bad("size mismatch"));
    }
    let values = body
        .chunks_exact(2)
        .map(|b| scale[0] + u16::from_be_bytes([b[0], b[1]]) as f64 * scale[1])
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("size checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> WaveformCube {
        let counts = Array3::from_shape_fn((3, 4, 5), |(r, c, k)| 100.0 + (r * 20 + c * 5 + k) as f64 * 0.25);
        let mut cube = WaveformCube::new(counts, 39.7e-6, (0..5).map(|k| (k as f64 - 2.0) * 66.7e-15).collect())
            .unwrap();
        cube.valid[[1, 2]] = false;
        cube
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = cube();
        write_cube_dir(&c, dir.path(), Some(serde_json::json!({"note": 1}))).unwrap();
        let back = read_cube_dir(dir.path()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn binary_round_trip() {
        let c = cube();
        let bytes = encode_cube_binary(&c).unwrap();
        assert_eq!(&bytes[..8], CUBE_MAGIC);
        assert_eq!(bytes.len(), 64 + 4 * 60);
        let back = decode_cube_binary(&bytes).unwrap();
        assert_eq!(back.counts, c.counts);
        for (a, b) in back.delay_times.iter().zip(&c.delay_times) {
            assert!((a - b).abs() < 1e-27);
        }
        assert!(decode_cube_binary(&bytes[..70]).is_err());
        assert!(decode_cube_binary(b"garbage").is_err());
    }

    #[test]
    fn csv_round_trip_with_nan() {
        let m = Array2::from_shape_vec((2, 3), vec![1.5, f64::NAN, -3e-9, 0.0, 7.0, 1e300]).unwrap();
        let back = csv_to_matrix(&matrix_to_csv(&m)).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
        assert!(csv_to_matrix("1,2\n3\n").is_err());
    }

    #[test]
    fn pgm_scaling_documented() {
        let m = Array2::from_shape_fn((5, 7), |(r, c)| 0.001 * (r * 7 + c) as f64);
        let bytes = to_pgm16(&m);
        assert!(bytes.starts_with(b"P5\n# value = "));
        let back = from_pgm16(&bytes).unwrap();
        let step = 0.034 / 65535.0;
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() <= step, "{a} {b}");
        }
    }
}
