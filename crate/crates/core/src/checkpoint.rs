//! Binary model checkpoints.
//!
//! Layout, all integers `u32` and floats `f64`, little-endian:
//!
//! ```text
//! magic "PLNKCKPT"  version  objective  n_bins  n_fine
//! frame: center.x center.y center.z scale
//! network × 2 (coarse, then fine):
//!     position_levels  has_direction  direction_levels  activation
//!     drop_head  n_hidden  width × n_hidden  param_count
//!     param × param_count
//! ```

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::net::{Activation, Architecture, EncodingConfig, FieldModel};
use crate::sampler::{FieldModels, Objective};
use crate::sensor::UnitCube;

const MAGIC: &[u8; 8] = b"PLNKCKPT";
const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptedModel(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_network(out: &mut Vec<u8>, model: &FieldModel) {
    let arch = model.arch();
    put_u32(out, arch.encoding.position_levels);
    put_u32(out, arch.encoding.direction_levels.is_some() as usize);
    put_u32(out, arch.encoding.direction_levels.unwrap_or(0));
    put_u32(out, arch.activation.code() as usize);
    put_u32(out, arch.drop_head as usize);
    put_u32(out, arch.hidden.len());
    for &w in &arch.hidden {
        put_u32(out, w);
    }
    put_u32(out, model.params().len());
    for &p in model.params() {
        put_f64(out, p);
    }
}

pub fn to_bytes(models: &FieldModels) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, models.objective.code() as usize);
    put_u32(&mut out, models.n_bins);
    put_u32(&mut out, models.n_fine);
    let c = models.frame.center;
    for v in [c.x, c.y, c.z, models.frame.scale] {
        put_f64(&mut out, v);
    }
    put_network(&mut out, &models.coarse);
    put_network(&mut out, &models.fine);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn network(&mut self) -> Result<FieldModel> {
        let position_levels = self.u32()?;
        let has_direction = self.u32()? != 0;
        let direction_levels = self.u32()?;
        let activation = Activation::from_code(self.u32()? as u32).ok_or_else(|| corrupt("unknown activation"))?;
        let drop_head = self.u32()? != 0;
        let n_hidden = self.u32()?;
        if n_hidden > 64 {
            return Err(corrupt(format!("{n_hidden} hidden layers")));
        }
        let hidden = (0..n_hidden).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if hidden.iter().any(|&w| w == 0 || w > 1 << 16) || position_levels > 32 || direction_levels > 32 {
            return Err(corrupt("implausible architecture"));
        }
        let arch = Architecture {
            encoding: EncodingConfig {
                position_levels,
                direction_levels: has_direction.then_some(direction_levels),
            },
            hidden,
            activation,
            drop_head,
        };
        let count = self.u32()?;
        if count != arch.param_count() {
            return Err(corrupt(format!(
                "{count} parameters stored for an architecture of {}",
                arch.param_count()
            )));
        }
        let params = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(corrupt("non-finite parameter"));
        }
        FieldModel::from_params(arch, params)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FieldModels> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let objective = Objective::from_code(r.u32()? as u32).ok_or_else(|| corrupt("unknown objective"))?;
    let n_bins = r.u32()?;
    let n_fine = r.u32()?;
    let center = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
    let scale = r.f64()?;
    if !(scale > 0.0 && scale.is_finite()) || !center.iter().all(|c| c.is_finite()) {
        return Err(corrupt("invalid unit-cube frame"));
    }
    let coarse = r.network()?;
    let fine = r.network()?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after the fine network"));
    }
    Ok(FieldModels {
        coarse,
        fine,
        frame: UnitCube { center, scale },
        objective,
        n_bins,
        n_fine,
    })
}

pub fn save(path: &Path, models: &FieldModels) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, to_bytes(models))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FieldModels> {
    from_bytes(&std::fs::read(path)?)
}
