use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Segmentation,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Segmentation => "segmentation",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Task::Classification => 0,
            Task::Segmentation => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Task::Classification),
            1 => Ok(Task::Segmentation),
            _ => Err(Error::format(format!("unknown task code {code}"))),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" | "cls" => Ok(Task::Classification),
            "segmentation" | "seg" => Ok(Task::Segmentation),
            _ => Err(Error::invalid(format!("unknown mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network shape. Fixed once a [`ModelParams`](super::ModelParams) is built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arch {
    pub task: Task,
    /// Points per cloud (`M`).
    pub points: usize,
    pub k: usize,
    /// Output widths of the EdgeConv stack.
    pub edge_widths: Vec<usize>,
    /// Global feature width (`F`).
    pub latent: usize,
    pub head_hidden: usize,
    /// Object classes in classification mode, part classes in segmentation mode.
    pub num_classes: usize,
    /// Hidden widths of the folding decoder; a final 3-wide layer is implied.
    pub decoder_widths: Vec<usize>,
    /// Rebuild the kNN graph in feature space after the first EdgeConv layer.
    pub dynamic_graph: bool,
}

impl Arch {
    /// Desk-scale default: EdgeConv 32/64, k = 8, F = 128, decoder 128/64/32/3.
    pub fn desk(task: Task, num_classes: usize, points: usize) -> Self {
        Arch {
            task,
            points,
            k: 8,
            edge_widths: vec![32, 64],
            latent: 128,
            head_hidden: match task {
                Task::Classification => 64,
                Task::Segmentation => 32,
            },
            num_classes,
            decoder_widths: vec![128, 64, 32],
            dynamic_graph: true,
        }
    }

    /// A very small network for exhaustive gradient checks.
    pub fn tiny(task: Task, num_classes: usize, points: usize) -> Self {
        Arch {
            task,
            points,
            k: 4,
            edge_widths: vec![8, 8],
            latent: 16,
            head_hidden: 8,
            num_classes,
            decoder_widths: vec![16, 8, 8],
            dynamic_graph: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("invalid architecture: {msg}")));
        if self.points < 2 {
            return bad(format!("need at least 2 points, got {}", self.points));
        }
        if self.k == 0 || self.k >= self.points {
            return bad(format!("k = {} must be in 1..{}", self.k, self.points));
        }
        if self.edge_widths.is_empty() || self.edge_widths.contains(&0) {
            return bad("EdgeConv widths must be non-empty and positive".into());
        }
        if self.latent == 0 || self.head_hidden == 0 || self.num_classes < 2 {
            return bad("latent, head and class widths must be positive (>= 2 classes)".into());
        }
        if self.decoder_widths.contains(&0) {
            return bad("decoder widths must be positive".into());
        }
        Ok(())
    }

    /// Folding grid `(rows, cols)`: the most square factorisation of `points`.
    pub fn grid(&self) -> (usize, usize) {
        let mut rows = (self.points as f64).sqrt().floor() as usize;
        while rows > 1 && self.points % rows != 0 {
            rows -= 1;
        }
        let rows = rows.max(1);
        (rows, self.points / rows)
    }

    /// Width of the per-point feature: last EdgeConv width plus the global feature.
    pub fn per_point_dim(&self) -> usize {
        self.edge_widths.last().copied().unwrap_or(0) + self.latent
    }

    /// Width of the feature compared by the consistency loss.
    pub fn feature_dim(&self) -> usize {
        match self.task {
            Task::Classification => self.latent,
            Task::Segmentation => self.per_point_dim(),
        }
    }

    /// Flat integer encoding stored alongside checkpoints.
    pub fn to_codes(&self) -> Vec<usize> {
        let mut v = vec![
            self.task.code() as usize,
            self.points,
            self.k,
            self.latent,
            self.head_hidden,
            self.num_classes,
            self.dynamic_graph as usize,
            self.edge_widths.len(),
        ];
        v.extend(&self.edge_widths);
        v.push(self.decoder_widths.len());
        v.extend(&self.decoder_widths);
        v
    }

    pub fn from_codes(codes: &[usize]) -> Result<Self> {
        let err = || Error::format("malformed architecture record");
        let mut it = codes.iter().copied();
        let mut next = || it.next().ok_or_else(err);
        let task = Task::from_code(u8::try_from(next()?).map_err(|_| err())?)?;
        let points = next()?;
        let k = next()?;
        let latent = next()?;
        let head_hidden = next()?;
        let num_classes = next()?;
        let dynamic_graph = next()? != 0;
        let n_edge = next()?;
        let edge_widths = (0..n_edge).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let n_dec = next()?;
        let decoder_widths = (0..n_dec).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let arch = Arch {
            task,
            points,
            k,
            edge_widths,
            latent,
            head_hidden,
            num_classes,
            decoder_widths,
            dynamic_graph,
        };
        arch.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_factorisations() {
        let g = |m| Arch::desk(Task::Classification, 6, m).grid();
        assert_eq!(g(64), (8, 8));
        assert_eq!(g(16), (4, 4));
        assert_eq!(g(1024), (32, 32));
        assert_eq!(g(2048), (32, 64));
        assert_eq!(g(7), (1, 7));
    }

    #[test]
    fn codes_round_trip() {
        let a = Arch::desk(Task::Segmentation, 3, 64);
        assert_eq!(Arch::from_codes(&a.to_codes()).unwrap(), a);
        assert!(Arch::from_codes(&a.to_codes()[..4]).is_err());
    }

    #[test]
    fn validation() {
        let mut a = Arch::desk(Task::Classification, 6, 16);
        assert!(a.validate().is_ok());
        a.k = 16;
        assert!(a.validate().is_err());
    }
}
