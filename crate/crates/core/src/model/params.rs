use std::collections::HashMap;

use rand::Rng;

use super::arch::{Arch, Task};
use crate::autodiff::{Gradients, Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// Uniform in `±1/√fan_in`, where fan-in is the leading dimension.
    FanIn,
    Ones,
    Zeros,
}

fn layout(arch: &Arch) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init| out.push((name, shape, init));

    let mut width = 3;
    for (i, &w) in arch.edge_widths.iter().enumerate() {
        let p = format!("encoder.edgeconv{}", i + 1);
        push(format!("{p}.w"), vec![2 * width, w], Init::FanIn);
        push(format!("{p}.scale"), vec![w], Init::Ones);
        push(format!("{p}.shift"), vec![w], Init::Zeros);
        width = w;
    }
    push("encoder.proj.w".into(), vec![width, arch.latent], Init::FanIn);
    push("encoder.proj.scale".into(), vec![arch.latent], Init::Ones);
    push("encoder.proj.shift".into(), vec![arch.latent], Init::Zeros);

    let (head, head_in) = match arch.task {
        Task::Classification => ("cls", arch.latent),
        Task::Segmentation => ("seg", arch.per_point_dim()),
    };
    push(format!("{head}.fc1.w"), vec![head_in, arch.head_hidden], Init::FanIn);
    push(format!("{head}.fc1.b"), vec![arch.head_hidden], Init::Zeros);
    push(format!("{head}.fc2.w"), vec![arch.head_hidden, arch.num_classes], Init::FanIn);
    push(format!("{head}.fc2.b"), vec![arch.num_classes], Init::Zeros);

    let mut width = arch.latent + 2;
    let widths = arch.decoder_widths.iter().copied().chain(std::iter::once(3));
    for (i, w) in widths.enumerate() {
        push(format!("decoder.fc{}.w", i + 1), vec![width, w], Init::FanIn);
        push(format!("decoder.fc{}.b", i + 1), vec![w], Init::Zeros);
        width = w;
    }
    out
}

/// Every parameter of encoder, task head and decoder, in architecture order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: Arch,
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Seeded fan-in uniform initialisation.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::seeded(seed);
        let params = layout(&arch)
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Ones => vec![1.0; n],
                    Init::Zeros => vec![0.0; n],
                    Init::FanIn => {
                        let bound = 1.0 / (shape[0] as f64).sqrt();
                        (0..n).map(|_| r.random_range(-bound..=bound)).collect()
                    }
                };
                Parameter::new(name, Tensor::from_parts(shape, data))
            })
            .collect();
        Ok(Self::assemble(arch, params))
    }

    /// Rebuilds a parameter set from stored values, checking names and shapes.
    pub fn from_parameters(arch: Arch, params: Vec<Parameter>) -> Result<Self> {
        arch.validate()?;
        let expected = layout(&arch);
        if expected.len() != params.len() {
            return Err(Error::format(format!(
                "expected {} parameters for this architecture, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value().shape() {
                return Err(Error::format(format!(
                    "parameter mismatch: expected {name} {shape:?}, found {} {:?}",
                    p.name,
                    p.value().shape()
                )));
            }
        }
        Ok(Self::assemble(arch, params))
    }

    fn assemble(arch: Arch, params: Vec<Parameter>) -> Self {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        ModelParams {
            arch,
            params,
            index,
        }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    pub fn as_slice(&self) -> &[Parameter] {
        &self.params
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds the parameter gradients recorded in `grads` (from a tape on which
    /// this set was bound trainable).
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (i, g) in grads.params() {
            if let (Some(g), Some(p)) = (g, self.params.get_mut(i)) {
                p.accumulate_grad(g);
            }
        }
    }

    /// Places every parameter on `tape`; trainable parameters receive gradients.
    pub fn bind<'a>(&'a self, tape: &mut Tape, trainable: bool) -> Bound<'a> {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if trainable {
                    tape.param(i, p.value().clone())
                } else {
                    tape.constant(p.value().clone())
                }
            })
            .collect();
        Bound { model: self, vars }
    }

    /// Binds externally supplied handles (one per parameter, in order).
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<Bound<'_>> {
        if vars.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        Ok(Bound { model: self, vars })
    }

    pub fn same_layout(&self, other: &ModelParams) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value().shape() == b.value().shape())
    }
}

/// A parameter set placed on a tape.
#[derive(Debug)]
pub struct Bound<'a> {
    model: &'a ModelParams,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn params(&self) -> &ModelParams {
        self.model
    }

    pub fn arch(&self) -> &Arch {
        &self.model.arch
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self
            .model
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        self.vars[*i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_arch_stays_under_fifty_thousand_weights() {
        for (task, c) in [(Task::Classification, 6), (Task::Segmentation, 3)] {
            let p = ModelParams::init(Arch::desk(task, c, 64), 0).unwrap();
            assert!(p.num_scalars() < 50_000, "{task}: {}", p.num_scalars());
        }
    }

    #[test]
    fn init_respects_fan_in_bounds_and_is_seeded() {
        let arch = Arch::desk(Task::Classification, 6, 64);
        let a = ModelParams::init(arch.clone(), 1).unwrap();
        let b = ModelParams::init(arch.clone(), 1).unwrap();
        let c = ModelParams::init(arch, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let w = a.get("encoder.proj.w").unwrap();
        let bound = 1.0 / (64f64).sqrt();
        assert!(w.value().data().iter().all(|v| v.abs() <= bound));
        assert!(a.get("encoder.edgeconv1.scale").unwrap().value().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn from_parameters_checks_layout() {
        let arch = Arch::desk(Task::Classification, 6, 64);
        let a = ModelParams::init(arch.clone(), 1).unwrap();
        let mut ps = a.as_slice().to_vec();
        assert!(ModelParams::from_parameters(arch.clone(), ps.clone()).is_ok());
        ps.swap(0, 1);
        assert!(ModelParams::from_parameters(arch, ps).is_err());
    }
}
