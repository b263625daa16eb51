//! Procedural domain-shifted datasets and the `PCDS` binary format.

mod domain;
mod format;
mod shapes;

use std::path::Path;

pub use domain::{apply_domain, apply_domain_indexed, DomainProfile};
pub use format::{read_dataset, write_dataset, FORMAT_VERSION, MAGIC};
pub use shapes::{
    generate_shape, LabelledCloud, ShapeFamily, ShapeSpec, NUM_PARTS, PART_BOTTOM, PART_LATERAL, PART_TOP,
};

use crate::error::{Error, Result};
use crate::geometry::{normalize_unit_sphere, PointCloud};
use crate::model::Task;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Parts(Vec<Vec<usize>>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(v) => v.len(),
            Labels::Parts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Equally sized clouds with object or per-point part labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    /// Object classes (classification) or part classes (segmentation).
    pub num_classes: usize,
    pub points: usize,
    pub clouds: Vec<PointCloud>,
    pub labels: Labels,
}

impl Dataset {
    pub fn new(task: Task, num_classes: usize, points: usize, clouds: Vec<PointCloud>, labels: Labels) -> Result<Self> {
        let d = Dataset {
            task,
            num_classes,
            points,
            clouds,
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.clouds.len() {
            return Err(Error::invalid("dataset: label and cloud counts differ"));
        }
        if self.num_classes < 2 || self.num_classes > usize::from(u16::MAX) {
            return Err(Error::invalid(format!("dataset: bad class count {}", self.num_classes)));
        }
        if self.clouds.iter().any(|c| c.len() != self.points) {
            return Err(Error::invalid(format!("dataset: every cloud must have {} points", self.points)));
        }
        let in_range = |&l: &usize| l < self.num_classes;
        match (&self.labels, self.task) {
            (Labels::Classes(v), Task::Classification) if v.iter().all(in_range) => Ok(()),
            (Labels::Parts(v), Task::Segmentation)
                if v.iter().all(|p| p.len() == self.points && p.iter().all(in_range)) =>
            {
                Ok(())
            }
            _ => Err(Error::invalid("dataset: labels do not match the task or are out of range")),
        }
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let labels = match &self.labels {
            Labels::Classes(v) => Labels::Classes(indices.iter().map(|&i| v[i]).collect()),
            Labels::Parts(v) => Labels::Parts(indices.iter().map(|&i| v[i].clone()).collect()),
        };
        Dataset {
            task: self.task,
            num_classes: self.num_classes,
            points: self.points,
            clouds: indices.iter().map(|&i| self.clouds[i].clone()).collect(),
            labels,
        }
    }

    /// Writes one point per row: `sample_id,x,y,z,label`.
    pub fn export_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "sample_id,x,y,z,label")?;
        for (s, cloud) in self.clouds.iter().enumerate() {
            for (i, p) in cloud.points().iter().enumerate() {
                let label = match &self.labels {
                    Labels::Classes(v) => v[s],
                    Labels::Parts(v) => v[s][i],
                };
                writeln!(out, "{s},{},{},{},{label}", p[0], p[1], p[2])?;
            }
        }
        Ok(())
    }
}

/// Everything needed to synthesise one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub task: Task,
    pub classes: Vec<ShapeSpec>,
    pub per_class: usize,
    pub profile: DomainProfile,
    pub points: usize,
    /// Surface samples drawn before the domain profile is applied.
    pub raw_points: usize,
    /// Train and validation fractions; the test split takes the rest.
    pub split: (f64, f64),
    pub seed: u64,
}

impl DatasetSpec {
    /// Six shape classes, each its own label.
    pub fn classification(per_class: usize, profile: DomainProfile, points: usize, seed: u64) -> Self {
        DatasetSpec {
            task: Task::Classification,
            classes: ShapeFamily::ALL.iter().map(|&f| ShapeSpec::new(f, 0.25)).collect(),
            per_class,
            profile,
            points,
            raw_points: 16 * points,
            split: (0.7, 0.1),
            seed,
        }
    }

    /// Part-labelled cylinders and boxes (lateral, top, bottom).
    pub fn segmentation(per_class: usize, profile: DomainProfile, points: usize, seed: u64) -> Self {
        DatasetSpec {
            task: Task::Segmentation,
            classes: vec![
                ShapeSpec::new(ShapeFamily::Cylinder, 0.25),
                ShapeSpec::new(ShapeFamily::Box, 0.25),
            ],
            ..Self::classification(per_class, profile, points, seed)
        }
    }
}

/// Train, validation and test partitions of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub const NAMES: [&'static str; 3] = ["train", "val", "test"];

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, d) in Self::NAMES.iter().zip([&self.train, &self.val, &self.test]) {
            write_dataset(d, &dir.join(format!("{name}.pcds")))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let load = |name: &str| read_dataset(&dir.join(format!("{name}.pcds")));
        Ok(Splits {
            train: load("train")?,
            val: load("val")?,
            test: load("test")?,
        })
    }
}

fn split_sizes(n: usize, (train, val): (f64, f64)) -> (usize, usize) {
    let a = ((train * n as f64).round() as usize).min(n);
    let b = ((val * n as f64).round() as usize).min(n - a);
    (a, b)
}

/// Generates a class-balanced dataset and splits every class 70/10/20 (by default).
pub fn build_dataset(spec: &DatasetSpec) -> Result<Splits> {
    let (ftrain, fval) = spec.split;
    if spec.classes.is_empty() || spec.per_class == 0 {
        return Err(Error::invalid("build_dataset: need at least one class and one sample per class"));
    }
    if !(ftrain >= 0.0 && fval >= 0.0 && ftrain + fval <= 1.0) {
        return Err(Error::invalid("build_dataset: split fractions must be non-negative and sum to at most 1"));
    }
    let num_classes = match spec.task {
        Task::Classification => spec.classes.len(),
        Task::Segmentation => NUM_PARTS,
    };
    let (n_train, n_val) = split_sizes(spec.per_class, spec.split);
    let mut parts: [Vec<(PointCloud, Vec<usize>, usize)>; 3] = Default::default();
    for (c, shape) in spec.classes.iter().enumerate() {
        for i in 0..spec.per_class {
            let stream = (c as u64) << 32 | i as u64;
            let raw = generate_shape(shape, spec.raw_points, rng::derive(spec.seed, 2 * stream))?;
            let (cloud, origin) =
                apply_domain_indexed(&raw.cloud, &spec.profile, spec.points, rng::derive(spec.seed, 2 * stream + 1))?;
            let point_parts = origin.iter().map(|&j| raw.parts[j]).collect();
            let bucket = if i < n_train {
                0
            } else if i < n_train + n_val {
                1
            } else {
                2
            };
            parts[bucket].push((normalize_unit_sphere(&cloud), point_parts, c));
        }
    }
    let [train, val, test] = parts.map(|records| {
        let mut clouds = Vec::with_capacity(records.len());
        let mut classes = Vec::new();
        let mut point_parts = Vec::new();
        for (cloud, p, c) in records {
            clouds.push(cloud);
            classes.push(c);
            point_parts.push(p);
        }
        let labels = match spec.task {
            Task::Classification => Labels::Classes(classes),
            Task::Segmentation => Labels::Parts(point_parts),
        };
        Dataset {
            task: spec.task,
            num_classes,
            points: spec.points,
            clouds,
            labels,
        }
    });
    Ok(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::norm;

    #[test]
    fn six_by_hundred_splits_420_60_120() {
        let spec = DatasetSpec {
            raw_points: 64,
            ..DatasetSpec::classification(100, DomainProfile::CLEAN, 16, 0)
        };
        let s = build_dataset(&spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (420, 60, 120));
        let Labels::Classes(y) = &s.train.labels else { panic!() };
        for c in 0..6 {
            assert_eq!(y.iter().filter(|&&l| l == c).count(), 70);
        }
    }

    #[test]
    fn clouds_are_normalised_and_sized() {
        let s = build_dataset(&DatasetSpec::classification(5, DomainProfile::SHIFTED, 32, 3)).unwrap();
        for c in s.train.clouds.iter().chain(&s.test.clouds) {
            assert_eq!(c.len(), 32);
            let max = c.points().iter().map(norm).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12);
            let centroid = c.centroid();
            assert!(norm(&centroid) < 1e-12);
        }
    }

    #[test]
    fn segmentation_labels_follow_the_points() {
        let s = build_dataset(&DatasetSpec::segmentation(10, DomainProfile::CLEAN, 32, 1)).unwrap();
        assert_eq!(s.train.num_classes, NUM_PARTS);
        let Labels::Parts(p) = &s.train.labels else { panic!() };
        assert!(p.iter().all(|v| v.len() == 32));
        // cylinder caps sit at the top and bottom of every clean sample
        for (cloud, parts) in s.train.clouds.iter().zip(p).take(7) {
            for (pt, &part) in cloud.points().iter().zip(parts) {
                match part {
                    PART_TOP => assert!(pt[2] > 0.0),
                    PART_BOTTOM => assert!(pt[2] < 0.0),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn seeds_change_the_data() {
        let a = build_dataset(&DatasetSpec::classification(3, DomainProfile::SHIFTED, 16, 1)).unwrap();
        let b = build_dataset(&DatasetSpec::classification(3, DomainProfile::SHIFTED, 16, 1)).unwrap();
        let c = build_dataset(&DatasetSpec::classification(3, DomainProfile::SHIFTED, 16, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train.clouds, c.train.clouds);
    }

    #[test]
    fn csv_export() {
        let s = build_dataset(&DatasetSpec::classification(2, DomainProfile::CLEAN, 16, 0)).unwrap();
        let mut buf = Vec::new();
        s.test.export_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("sample_id,x,y,z,label"));
        assert_eq!(text.lines().count(), 1 + s.test.len() * 16);
    }
}
