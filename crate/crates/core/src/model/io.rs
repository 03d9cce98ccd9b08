//! `PQM1` parameter files.
//!
//! ```text
//! magic "PQM1" | version u16 | input_dim u32 | activation u8
//!   | encoder hidden count u32, widths u32* | decoder hidden count u32, widths u32*
//!   | h,w,c,d,K u32 | encoder then decoder tensors, per layer weight (out x in) then bias, f32
//!   | embedded PQC1 codebook | FNV-1a 64 of every preceding byte
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::codec::{CodecArchitecture, CodecParams};
use super::mlp::{Activation, Dense, Mlp};
use crate::error::{format_err, Result};
use crate::format::{fnv1a64, read_file, write_file, ByteReader, ByteWriter};
use crate::pq::{read_config, write_config, SharedCodebook};

pub const PARAMS_MAGIC: &[u8; 4] = b"PQM1";
const PARAMS_VERSION: u16 = 1;

impl CodecParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut w = ByteWriter::new();
        w.bytes(PARAMS_MAGIC).u16(PARAMS_VERSION).u32(a.input_dim as u32).u8(a.activation.id());
        for hidden in [&a.encoder_hidden, &a.decoder_hidden] {
            w.u32(hidden.len() as u32);
            for &h in hidden.iter() {
                w.u32(h as u32);
            }
        }
        write_config(&mut w, &a.pq);
        for net in [&self.encoder, &self.decoder] {
            for layer in &net.layers {
                w.f32s(layer.weight.iter().map(|&v| v as f32));
                w.f32s(layer.bias.iter().map(|&v| v as f32));
            }
        }
        w.bytes(&self.codebook.to_bytes());
        let hash = fnv1a64(w.as_slice());
        w.u64(hash);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "PQM1");
        r.expect_magic(PARAMS_MAGIC)?;
        let version = r.u16()?;
        if version != PARAMS_VERSION {
            return Err(format_err!("PQM1: unsupported version {version}"));
        }
        let input_dim = r.u32()? as usize;
        let activation = Activation::from_id(r.u8()?).map_err(|e| format_err!("PQM1: {e}"))?;
        let read_widths = |r: &mut ByteReader<'_>| -> Result<Vec<usize>> {
            let n = r.u32()? as usize;
            if n > 1024 {
                return Err(format_err!("PQM1: implausible hidden layer count {n}"));
            }
            (0..n).map(|_| Ok(r.u32()? as usize)).collect()
        };
        let encoder_hidden = read_widths(&mut r)?;
        let decoder_hidden = read_widths(&mut r)?;
        let pq = read_config(&mut r).map_err(|e| format_err!("PQM1: {e}"))?;
        let arch = CodecArchitecture { input_dim, encoder_hidden, decoder_hidden, activation, pq };
        arch.validate().map_err(|e| format_err!("PQM1: {e}"))?;

        let read_net = |widths: Vec<usize>, r: &mut ByteReader<'_>| -> Result<Mlp> {
            let mut layers = Vec::new();
            for pair in widths.windows(2) {
                let (inp, out) = (pair[0], pair[1]);
                let n = inp.checked_mul(out).ok_or_else(|| format_err!("PQM1: layer size overflow"))?;
                let weight = r.f32s(n)?.into_iter().map(f64::from).collect();
                let bias = r.f32s(out)?.into_iter().map(f64::from).collect();
                layers.push(Dense {
                    weight: Array2::from_shape_vec((out, inp), weight).expect("sized above"),
                    bias: Array1::from_vec(bias),
                });
            }
            Ok(Mlp { layers, activation })
        };
        let encoder = read_net(arch.encoder_widths(), &mut r)?;
        let decoder = read_net(arch.decoder_widths(), &mut r)?;
        let codebook = SharedCodebook::read_from(&mut r)?;
        let hash = fnv1a64(r.since(0));
        let stored = r.u64()?;
        if hash != stored {
            return Err(format_err!("PQM1: content hash {hash:#018x} != stored {stored:#018x}"));
        }
        r.finish()?;
        let params = CodecParams { arch, encoder, decoder, codebook };
        params.validate().map_err(|e| format_err!("PQM1: {e}"))?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

pub fn save_params(params: &CodecParams, path: &Path) -> Result<()> {
    params.save(path)
}

pub fn load_params(path: &Path) -> Result<CodecParams> {
    CodecParams::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pq::PQConfig;

    fn params() -> CodecParams {
        let arch = CodecArchitecture::mirrored(7, &[5, 3], Activation::Silu, PQConfig::new(2, 1, 4, 2, 5).unwrap());
        CodecParams::init(&arch, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let bytes = p.to_bytes();
        let back = CodecParams::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = params().to_bytes();
        for i in (0..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(CodecParams::from_bytes(&bad).is_err(), "byte {i}");
        }
        assert!(CodecParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
