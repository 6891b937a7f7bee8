// SPDX-License-Identifier: Apache-2.0

//! File formats: point clouds (PLY, CSV) and JSON documents.

pub mod csv;
pub mod json;
pub mod ply;

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use stairwise_core::PointCloud;

pub use ply::PlyFormat;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Reads a cloud, picking the format from the extension (`.ply` or `.csv`).
pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let mut f = File::open(path)?;
    match extension(path).as_str() {
        "ply" => ply::read_ply(f),
        "csv" => csv::read_cloud_csv(f),
        _ => {
            // sniff the magic for unknown extensions
            let mut head = [0u8; 3];
            let n = f.read(&mut head)?;
            let f = File::open(path)?;
            if &head[..n] == b"ply" {
                ply::read_ply(f)
            } else {
                csv::read_cloud_csv(f)
            }
        }
    }
}

/// Writes a cloud; `.ply` files are binary little-endian.
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let w = BufWriter::new(File::create(path)?);
    match extension(path).as_str() {
        "ply" => ply::write_ply(cloud, PlyFormat::BinaryLittleEndian, w),
        "csv" => csv::write_cloud_csv(cloud, w),
        other => Err(IoError::Format(format!("unknown cloud extension {other:?}"))),
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}
