//! `PCDS` files: little-endian header `"PCDS"`, version `u32`, mode `u8`
//! (0 classification, 1 segmentation), record count `u64`, points `u32`,
//! classes `u32`; then per record the label (`u16`, or one `u16` per point)
//! followed by `points × 3` coordinates as `f64`.

use std::path::Path;

use super::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::model::Task;

pub const MAGIC: &[u8; 4] = b"PCDS";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let label_bytes = match d.task {
        Task::Classification => 2,
        Task::Segmentation => 2 * d.points,
    };
    let mut out = Vec::with_capacity(25 + d.len() * (label_bytes + 24 * d.points));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(d.task.code());
    out.extend_from_slice(&(d.len() as u64).to_le_bytes());
    out.extend_from_slice(&(d.points as u32).to_le_bytes());
    out.extend_from_slice(&(d.num_classes as u32).to_le_bytes());
    for (i, cloud) in d.clouds.iter().enumerate() {
        match &d.labels {
            Labels::Classes(v) => out.extend_from_slice(&(v[i] as u16).to_le_bytes()),
            Labels::Parts(v) => v[i].iter().for_each(|&l| out.extend_from_slice(&(l as u16).to_le_bytes())),
        }
        for p in cloud.points() {
            p.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::format("PCDS file is truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a PCDS file (bad magic)"));
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported PCDS version {version}")));
    }
    let task = Task::from_code(r.array::<1>()?[0])?;
    let count = u64::from_le_bytes(r.array()?) as usize;
    let points = u32::from_le_bytes(r.array()?) as usize;
    let num_classes = u32::from_le_bytes(r.array()?) as usize;
    let per_label = match task {
        Task::Classification => 1,
        Task::Segmentation => points,
    };
    let record = 2 * per_label + 24 * points;
    if record == 0 || r.bytes.len() != count.saturating_mul(record) {
        return Err(Error::format(format!(
            "PCDS body holds {} bytes, expected {count} records of {record}",
            r.bytes.len()
        )));
    }
    let mut clouds = Vec::with_capacity(count);
    let mut classes = Vec::new();
    let mut parts = Vec::new();
    for _ in 0..count {
        let labels: Vec<usize> = r
            .take(2 * per_label)?
            .chunks_exact(2)
            .map(|b| usize::from(u16::from_le_bytes([b[0], b[1]])))
            .collect();
        match task {
            Task::Classification => classes.push(labels[0]),
            Task::Segmentation => parts.push(labels),
        }
        let coords: Vec<f64> = r
            .take(24 * points)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        clouds.push(PointCloud::from_flat(&coords).map_err(|e| Error::format(e.to_string()))?);
    }
    let labels = match task {
        Task::Classification => Labels::Classes(classes),
        Task::Segmentation => Labels::Parts(parts),
    };
    Dataset::new(task, num_classes, points, clouds, labels).map_err(|e| Error::format(e.to_string()))
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(d))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, DatasetSpec, DomainProfile};

    #[test]
    fn round_trip_is_bitwise() {
        for spec in [
            DatasetSpec::classification(3, DomainProfile::SHIFTED, 16, 4),
            DatasetSpec::segmentation(3, DomainProfile::SHIFTED, 16, 4),
        ] {
            let d = build_dataset(&spec).unwrap().train;
            let bytes = encode_dataset(&d);
            let back = decode_dataset(&bytes).unwrap();
            assert_eq!(back, d);
            assert_eq!(encode_dataset(&back), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let d = build_dataset(&DatasetSpec::classification(2, DomainProfile::CLEAN, 16, 0)).unwrap().train;
        let bytes = encode_dataset(&d);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_dataset(&bytes[..10]), Err(Error::Format(_))));
    }
}
