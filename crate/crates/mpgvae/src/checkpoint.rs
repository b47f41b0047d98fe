//! Binary checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "MPGV1"  float width (u8: 4 or 8)  epoch
//! config length  config text (model keys, `key = value` lines)
//! tensor count
//! per tensor: name length  name  rank  dims…  values
//! ```
//!
//! Tensors are stored in name order, so equal models give equal files.

use std::path::Path;

use mpgvae_core::{Model, ModelConfig, ParamStore, Scalar, Tensor};

use crate::config_file::{model_config_text, parse_model_config};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 5] = b"MPGV1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Epochs completed when the checkpoint was written.
    pub epoch: usize,
    /// 4 or 8.
    pub float_bytes: u8,
    pub params: ParamStore<f64>,
}

impl Checkpoint {
    pub fn model<F: Scalar>(&self) -> Result<Model<F>> {
        Model::from_params(self.config.clone(), self.params.cast())
            .map_err(|e| CliError::Checkpoint(format!("parameters do not fit the stored config: {e}")))
    }
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&u32::try_from(x).expect("fits in u32").to_le_bytes());
}

pub fn encode<F: Scalar>(model: &Model<F>, epoch: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.params.numel() * F::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(F::BYTES as u8);
    put_u32(&mut out, epoch);
    let text = model_config_text(&model.config);
    put_u32(&mut out, text.len());
    out.extend_from_slice(text.as_bytes());
    put_u32(&mut out, model.params.len());
    for (name, t) in model.params.iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| CliError::Checkpoint("text field is not UTF-8".into()))
    }
}

fn read_values<F: Scalar>(r: &mut Reader<'_>, n: usize) -> Result<Vec<f64>> {
    let bytes = r.take(n.checked_mul(F::BYTES).ok_or_else(|| CliError::Checkpoint("tensor too large".into()))?)?;
    Ok(bytes.chunks_exact(F::BYTES).map(|c| F::read_le(c).as_f64()).collect())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(CliError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let float_bytes = r.take(1)?[0];
    if float_bytes != 4 && float_bytes != 8 {
        return Err(CliError::Checkpoint(format!("unknown float width {float_bytes}")));
    }
    let epoch = r.u32()?;
    let config = parse_model_config(r.text()?)
        .map_err(|e| CliError::Checkpoint(format!("stored config: {e}")))?;
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = r.text()?.to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| CliError::Checkpoint(format!("{name}: shape overflows")))?;
        let data = if float_bytes == 4 {
            read_values::<f32>(&mut r, n)?
        } else {
            read_values::<f64>(&mut r, n)?
        };
        let t = Tensor::from_f64(&shape, &data).map_err(|e| CliError::Checkpoint(format!("{name}: {e}")))?;
        params.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(CliError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if !params.all_finite() {
        return Err(CliError::Checkpoint("non-finite parameter values".into()));
    }
    let ck = Checkpoint {
        config,
        epoch,
        float_bytes,
        params,
    };
    ck.model::<f64>()?;
    Ok(ck)
}

/// Writes through a temporary file so an interrupted write never replaces
/// a good checkpoint.
pub fn save<F: Scalar>(path: &Path, model: &Model<F>, epoch: usize) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(model, epoch)).map_err(CliError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Checkpoint(m) => CliError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            encoder_widths: vec![4, 4],
            decoder_widths: vec![4, 3],
            graph_width: 8,
            latent_dim: 3,
            set2set_steps: 2,
            conditional: true,
        }
    }

    #[test]
    fn round_trip_at_both_widths() {
        let m = Model::<f64>::new(small(), 1).unwrap();
        let ck = decode(&encode(&m, 7)).unwrap();
        assert_eq!((ck.epoch, ck.float_bytes), (7, 8));
        assert_eq!(ck.model::<f64>().unwrap(), m);
        let m32 = m.cast::<f32>();
        let ck = decode(&encode(&m32, 0)).unwrap();
        assert_eq!(ck.float_bytes, 4);
        assert_eq!(ck.model::<f32>().unwrap(), m32);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&Model::<f32>::new(small(), 2).unwrap(), 1);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert_eq!(decode(b"").unwrap_err().exit_code(), 4);
    }
}
