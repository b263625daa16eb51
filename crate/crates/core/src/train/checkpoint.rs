//! `SENC` checkpoints: little-endian `"SENC"`, version `u32`, 32-byte config
//! digest, entry count `u64`, then per entry the name length (`u32`) and
//! UTF-8 name, rank (`u32`), dims (`u64` each) and `f64` values.
//!
//! Besides the model parameters, reserved entries hold the architecture
//! (`meta.arch`), the EMA state (`meta.ema`) and the Adam moments
//! (`adam.meta`, `adam.m.<name>`, `adam.v.<name>`).

use std::path::Path;

use crate::autodiff::{Parameter, Tensor};
use crate::error::{Error, Result};
use crate::model::{Arch, ModelParams};
use crate::teacher::EmaState;

use super::optim::AdamState;

pub const MAGIC: &[u8; 4] = b"SENC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub ema: Option<EmaState>,
    pub adam: Option<AdamState>,
    pub config_digest: [u8; 32],
}

fn entries(ck: &Checkpoint) -> Vec<(String, Tensor)> {
    let codes: Vec<f64> = ck.params.arch().to_codes().iter().map(|&c| c as f64).collect();
    let mut out = vec![("meta.arch".to_string(), Tensor::vector(codes))];
    out.extend(ck.params.iter().map(|p| (p.name.clone(), p.value().clone())));
    if let Some(ema) = &ck.ema {
        out.push(("meta.ema".into(), Tensor::vector(vec![ema.momentum(), ema.step as f64])));
    }
    if let Some(adam) = &ck.adam {
        out.push((
            "adam.meta".into(),
            Tensor::vector(vec![adam.beta1, adam.beta2, adam.eps, adam.step as f64]),
        ));
        for (which, buffers) in [("m", &adam.m), ("v", &adam.v)] {
            for (p, b) in ck.params.iter().zip(buffers) {
                let t = Tensor::from_parts(p.value().shape().to_vec(), b.clone());
                out.push((format!("adam.{which}.{}", p.name), t));
            }
        }
    }
    out
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let entries = entries(ck);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&ck.config_digest);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (name, t) in &entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        t.shape().iter().for_each(|&d| out.extend_from_slice(&(d as u64).to_le_bytes()));
        t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::format("checkpoint is truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("checkpoint size field overflows"))
    }
}

fn scalar_at(t: &Tensor, i: usize, what: &str) -> Result<f64> {
    t.data()
        .get(i)
        .copied()
        .ok_or_else(|| Error::format(format!("checkpoint entry {what} is too short")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let count = r.len()?;
    let mut arch = None;
    let mut params = Vec::new();
    let mut ema = None;
    let mut adam_meta = None;
    let mut moments: Vec<(String, Tensor)> = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("checkpoint entry name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.bytes.len()))
            .ok_or_else(|| Error::format("checkpoint is truncated"))?;
        let data: Vec<f64> = r
            .take(8 * n)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data)?;
        match name.as_str() {
            "meta.arch" => {
                let codes: Vec<usize> = t.data().iter().map(|&v| v as usize).collect();
                arch = Some(Arch::from_codes(&codes)?);
            }
            "meta.ema" => {
                let mut state = EmaState::new(scalar_at(&t, 0, &name)?).map_err(|e| Error::format(e.to_string()))?;
                state.step = scalar_at(&t, 1, &name)? as u64;
                ema = Some(state);
            }
            "adam.meta" => adam_meta = Some(t),
            _ if name.starts_with("adam.") => moments.push((name, t)),
            _ => params.push(Parameter::new(name, t)),
        }
    }
    if !r.bytes.is_empty() {
        return Err(Error::format("trailing bytes after the last checkpoint entry"));
    }
    let arch = arch.ok_or_else(|| Error::format("checkpoint has no architecture record"))?;
    let params = ModelParams::from_parameters(arch, params)?;
    let adam = match adam_meta {
        None => None,
        Some(meta) => {
            let mut state = AdamState::new(&params);
            state.beta1 = scalar_at(&meta, 0, "adam.meta")?;
            state.beta2 = scalar_at(&meta, 1, "adam.meta")?;
            state.eps = scalar_at(&meta, 2, "adam.meta")?;
            state.step = scalar_at(&meta, 3, "adam.meta")? as u64;
            for (name, t) in moments {
                let (which, pname) = name[5..]
                    .split_once('.')
                    .ok_or_else(|| Error::format(format!("bad checkpoint entry {name}")))?;
                let i = params
                    .position(pname)
                    .ok_or_else(|| Error::format(format!("moment for unknown parameter {pname}")))?;
                if t.shape() != params.as_slice()[i].value().shape() {
                    return Err(Error::format(format!("moment {name} has the wrong shape")));
                }
                match which {
                    "m" => state.m[i] = t.into_data(),
                    "v" => state.v[i] = t.into_data(),
                    _ => return Err(Error::format(format!("bad checkpoint entry {name}"))),
                }
            }
            Some(state)
        }
    };
    Ok(Checkpoint {
        params,
        ema,
        adam,
        config_digest,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
