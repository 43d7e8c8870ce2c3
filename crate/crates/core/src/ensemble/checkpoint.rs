//! The `UQDON-CKPT` container.
//!
//! Layout (little-endian): magic, `u16` version, then the header
//!
//! ```text
//! u8   hidden activation code
//! u64  branch width count, then each width
//! u64  trunk width count, then each width
//! u64  latent n, N_s, d_u, d_s, d_y, m, harmonic order, master seed, step count
//! f64  beta, Adam beta1, beta2, eps
//! ```
//!
//! followed by, per member, its `u64` batch-stream id, trainable parameters,
//! prior parameters, and the branch then trunk Adam states (`u64` step, first
//! moments, second moments), all as `f64`. A CRC32 of everything before it
//! closes the file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{Reader, Writer};
use crate::model::{Architecture, DeepONetParams, RpDeepONet};
use crate::nn::{Activation, AdamConfig, AdamState, MlpGrads, MlpParams};

use super::{EnsembleModel, Member};

pub const CKPT_MAGIC: &[u8; 10] = b"UQDON-CKPT";
pub const CKPT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub arch: Architecture,
    pub members: usize,
    pub beta: f64,
    pub seed: u64,
    pub step: u64,
    pub adam: AdamConfig,
}

fn write_header(w: &mut Writer, h: &CheckpointHeader) {
    let a = &h.arch;
    w.u8(a.activation.code());
    w.usize(a.branch_widths.len());
    a.branch_widths.iter().for_each(|&v| w.usize(v));
    w.usize(a.trunk_widths.len());
    a.trunk_widths.iter().for_each(|&v| w.usize(v));
    for v in [a.latent, h.members, a.d_u, a.d_s, a.d_y, a.sensors(), a.harmonics] {
        w.usize(v);
    }
    w.u64(h.seed);
    w.u64(h.step);
    for v in [h.beta, h.adam.beta1, h.adam.beta2, h.adam.eps] {
        w.f64(v);
    }
}

fn read_widths(r: &mut Reader) -> Result<Vec<usize>> {
    let n = r.usize()?;
    if n > 1024 {
        return Err(Error::Format(format!("implausible layer count {n}")));
    }
    (0..n).map(|_| r.usize()).collect()
}

fn read_header(r: &mut Reader) -> Result<CheckpointHeader> {
    let code = r.u8()?;
    let activation =
        Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
    let branch_widths = read_widths(r)?;
    let trunk_widths = read_widths(r)?;
    let latent = r.usize()?;
    let members = r.usize()?;
    let d_u = r.usize()?;
    let d_s = r.usize()?;
    let d_y = r.usize()?;
    let sensors = r.usize()?;
    let harmonics = r.usize()?;
    let seed = r.u64()?;
    let step = r.u64()?;
    let beta = r.f64()?;
    let adam = AdamConfig {
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let arch = Architecture {
        branch_widths,
        trunk_widths,
        latent,
        d_u,
        d_s,
        d_y,
        harmonics,
        activation,
    };
    arch.validate().map_err(|e| Error::Format(format!("checkpoint architecture: {e}")))?;
    if arch.sensors() != sensors {
        return Err(Error::Format("checkpoint sensor count disagrees with branch width".into()));
    }
    if members == 0 {
        return Err(Error::Format("checkpoint holds no members".into()));
    }
    Ok(CheckpointHeader {
        arch,
        members,
        beta,
        seed,
        step,
        adam,
    })
}

fn read_mlp(r: &mut Reader, template: &MlpParams) -> Result<MlpParams> {
    let mut p = template.clone();
    let n = p.num_params();
    let vals = r.f64s(n)?;
    p.iter_mut().zip(vals).for_each(|(d, v)| *d = v);
    Ok(p)
}

fn read_adam(r: &mut Reader, template: &MlpParams, config: AdamConfig) -> Result<AdamState> {
    let t = r.u64()?;
    let mut m = MlpGrads::zeros_like(template);
    let mut v = MlpGrads::zeros_like(template);
    let n = template.num_params();
    m.iter_mut().zip(r.f64s(n)?).for_each(|(d, x)| *d = x);
    v.iter_mut().zip(r.f64s(n)?).for_each(|(d, x)| *d = x);
    Ok(AdamState { m, v, t, config })
}

fn write_adam(w: &mut Writer, s: &AdamState) {
    w.u64(s.t);
    w.f64s(s.m.iter());
    w.f64s(s.v.iter());
}

impl EnsembleModel {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            arch: self.arch.clone(),
            members: self.len(),
            beta: self.beta,
            seed: self.seed,
            step: self.step,
            adam: self.members[0].adam_branch.config,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CKPT_MAGIC, CKPT_VERSION);
        write_header(&mut w, &self.header());
        for m in &self.members {
            w.u64(m.id);
            w.f64s(m.model.trainable.iter());
            w.f64s(m.model.prior().iter());
            write_adam(&mut w, &m.adam_branch);
            write_adam(&mut w, &m.adam_trunk);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CKPT_MAGIC, CKPT_VERSION, true, "checkpoint")?;
        let h = read_header(&mut r)?;
        let a = &h.arch;
        let branch = MlpParams::zeros(&a.branch_widths, a.activation)?;
        let trunk = MlpParams::zeros(&a.trunk_widths, a.activation)?;
        let per_member = 8 + 8 * (4 * (branch.num_params() + trunk.num_params())) + 16;
        if r.remaining() != per_member * h.members {
            return Err(Error::Format(format!(
                "checkpoint payload holds {} bytes, header implies {}",
                r.remaining(),
                per_member * h.members
            )));
        }
        let mut members = Vec::with_capacity(h.members);
        for _ in 0..h.members {
            let id = r.u64()?;
            let tb = read_mlp(&mut r, &branch)?;
            let tt = read_mlp(&mut r, &trunk)?;
            let pb = read_mlp(&mut r, &branch)?;
            let pt = read_mlp(&mut r, &trunk)?;
            let adam_branch = read_adam(&mut r, &branch, h.adam)?;
            let adam_trunk = read_adam(&mut r, &trunk, h.adam)?;
            let model = RpDeepONet::new(
                DeepONetParams::new(tb, tt, a.latent, a.d_s)?,
                DeepONetParams::new(pb, pt, a.latent, a.d_s)?,
                h.beta,
            )
            .map_err(|e| Error::Format(format!("checkpoint member: {e}")))?;
            members.push(Member {
                id,
                model,
                adam_branch,
                adam_trunk,
            });
        }
        r.finish()?;
        EnsembleModel::from_parts(h.arch, h.beta, h.seed, h.step, members)
            .map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }
}

pub fn save_checkpoint(ensemble: &EnsembleModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ensemble.to_bytes())?;
    Ok(())
}

/// Loads a whole checkpoint; nothing is returned unless every check passes.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    EnsembleModel::from_bytes(&fs::read(path)?)
}

/// Header only; the CRC still covers the full file.
pub fn read_checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let bytes = fs::read(path)?;
    let mut r = Reader::open(&bytes, CKPT_MAGIC, CKPT_VERSION, true, "checkpoint")?;
    read_header(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::init_ensemble;

    fn ensemble() -> EnsembleModel {
        let arch = Architecture::uniform(4, 1, 1, 1, 1, 6, 3, 2).unwrap();
        init_ensemble(&arch, 0.7, 3, 5).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let e = ensemble();
        let bytes = e.to_bytes();
        let back = EnsembleModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_reports_member_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&ensemble(), &p).unwrap();
        let h = read_checkpoint_header(&p).unwrap();
        assert_eq!(h.members, 3);
        assert_eq!(h.beta, 0.7);
        assert_eq!(h.arch.harmonics, 2);
    }

    #[test]
    fn damage_is_rejected() {
        let bytes = ensemble().to_bytes();
        let mut magic = bytes.clone();
        magic[3] = b'?';
        assert!(matches!(EnsembleModel::from_bytes(&magic), Err(Error::Format(_))));
        let mut flip = bytes.clone();
        flip[200] ^= 0x10;
        assert!(matches!(EnsembleModel::from_bytes(&flip), Err(Error::Corrupt(_))));
        assert!(matches!(EnsembleModel::from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Corrupt(_))));
    }
}
