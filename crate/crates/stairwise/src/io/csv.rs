// SPDX-License-Identifier: Apache-2.0

//! CSV point clouds with an `x,y,z` header and an optional `label` column.
//! Labels are written as names; names and the PLY integer codes are read.

use std::io::{Read, Write};

use stairwise_core::{PointCloud, PointLabel};

use super::ply::label_from_code;
use super::IoError;

pub fn label_name(label: PointLabel) -> &'static str {
    match label {
        PointLabel::Tread => "tread",
        PointLabel::Clutter => "clutter",
        PointLabel::Other => "other",
    }
}

pub fn parse_label(s: &str) -> Result<PointLabel, IoError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "tread" => Ok(PointLabel::Tread),
        "clutter" => Ok(PointLabel::Clutter),
        "other" => Ok(PointLabel::Other),
        t => match t.parse::<i64>() {
            Ok(code) => label_from_code(code),
            Err(_) => Err(IoError::Format(format!("unknown label {t:?}"))),
        },
    }
}

pub fn read_cloud_csv<R: Read>(reader: R) -> Result<PointCloud, IoError> {
    let mut r = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(xi), Some(yi), Some(zi)) = (col("x"), col("y"), col("z")) else {
        return Err(IoError::Format("csv header must name x, y and z".into()));
    };
    let li = col("label");
    let mut points = Vec::new();
    let mut labels = li.map(|_| Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, IoError> {
            let s = rec.get(i).ok_or_else(|| IoError::Format("short csv record".into()))?;
            s.parse().map_err(|_| IoError::Format(format!("bad number {s:?}")))
        };
        points.push([num(xi)?, num(yi)?, num(zi)?]);
        if let (Some(li), Some(ls)) = (li, labels.as_mut()) {
            ls.push(parse_label(rec.get(li).unwrap_or(""))?);
        }
    }
    let cloud = PointCloud { points, labels };
    cloud.validate().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(cloud)
}

pub fn write_cloud_csv<W: Write>(cloud: &PointCloud, w: W) -> Result<(), IoError> {
    cloud.validate().map_err(|e| IoError::Format(e.to_string()))?;
    let mut out = ::csv::Writer::from_writer(w);
    match &cloud.labels {
        Some(labels) => {
            out.write_record(["x", "y", "z", "label"])?;
            for (p, l) in cloud.points.iter().zip(labels) {
                out.write_record([p[0].to_string(), p[1].to_string(), p[2].to_string(), label_name(*l).to_string()])?;
            }
        }
        None => {
            out.write_record(["x", "y", "z"])?;
            for p in &cloud.points {
                out.write_record([p[0].to_string(), p[1].to_string(), p[2].to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_labels() {
        let mut c = PointCloud {
            points: vec![[0.1, 0.2, 0.30000000000000004], [-1.0, 2.5e-7, 9.0]],
            labels: Some(vec![PointLabel::Clutter, PointLabel::Tread]),
        };
        for _ in 0..2 {
            let mut buf = Vec::new();
            write_cloud_csv(&c, &mut buf).unwrap();
            assert_eq!(read_cloud_csv(buf.as_slice()).unwrap(), c);
            c.labels = None;
        }
    }

    #[test]
    fn numeric_labels_and_spaces_are_read() {
        let c = read_cloud_csv(&b"x, y, z, label\n1, 2, 3, 1\n4,5,6,other\n"[..]).unwrap();
        assert_eq!(c.labels, Some(vec![PointLabel::Tread, PointLabel::Other]));
        assert!(read_cloud_csv(&b"a,b,c\n1,2,3\n"[..]).is_err());
        assert!(read_cloud_csv(&b"x,y,z\n1,q,3\n"[..]).is_err());
    }
}
