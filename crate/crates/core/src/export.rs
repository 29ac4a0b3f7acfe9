//! Flat binary deployment format (`SNNX`).
//!
//! Little-endian throughout: magic, version, channel labels, input
//! normalization, per-layer parameters with row-major f32 weights, the
//! readout matrix, and the source checkpoint hash. An imported network
//! matches the source checkpoint bit-for-bit (0 ULP), and export → import →
//! export reproduces identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::snn::{InputNorm, LayerParams, NetworkMeta, SpikingNetwork};

pub const MAGIC: &[u8; 4] = b"SNNX";
pub const EXPORT_VERSION: u32 = 1;

const FLAG_RECURRENT: u32 = 1;
const FLAG_INPUT_TAP: u32 = 2;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for &v in vs {
            self.f32(v);
        }
    }
    fn str16(&mut self, s: &str) {
        let bytes = s.as_bytes();
        assert!(bytes.len() <= u16::MAX as usize);
        self.buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(bytes);
    }
    fn mat(&mut self, m: &Mat<f32>) {
        self.f32s(m.data());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            message: message.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err("truncated export blob"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f32()?);
        }
        Ok(v)
    }
    fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| self.err(format!("bad utf-8: {e}")))
    }
    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat<f32>> {
        Mat::from_vec(rows, cols, self.f32s(rows * cols)?)
    }
}

/// Serialize a network plus its source-checkpoint hash.
pub fn export_network(net: &SpikingNetwork<f32>, source_checkpoint_hash: &str) -> Result<Vec<u8>> {
    net.validate()?;
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(EXPORT_VERSION);
    w.u32(net.n_inputs() as u32);
    w.u32(net.n_outputs() as u32);
    w.u32(net.layers.len() as u32);
    w.str16(&net.meta.name);
    w.str16(source_checkpoint_hash);
    for l in &net.input_labels {
        w.str16(l);
    }
    for l in &net.output_labels {
        w.str16(l);
    }
    w.f32s(&net.input_norm.offset);
    w.f32s(&net.input_norm.scale);
    for layer in &net.layers {
        w.u32(layer.n() as u32);
        let mut flags = 0u32;
        if layer.w_rec.is_some() {
            flags |= FLAG_RECURRENT;
        }
        if layer.w_in.is_some() {
            flags |= FLAG_INPUT_TAP;
        }
        w.u32(flags);
        w.f32s(&layer.tau_mem);
        w.f32s(&layer.tau_syn);
        w.f32s(&layer.theta);
        for &f in &layer.frozen {
            w.buf.push(f as u8);
        }
        w.mat(&layer.w_ff);
        if let Some(rec) = &layer.w_rec {
            w.mat(rec);
        }
        if let Some(tap) = &layer.w_in {
            w.mat(tap);
        }
    }
    w.mat(&net.w_decode);
    Ok(w.buf)
}

/// Parse an export blob back into a network. Returns the network and the
/// recorded source checkpoint hash.
pub fn import_network(bytes: &[u8], origin: &str) -> Result<(SpikingNetwork<f32>, String)> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path: origin.to_string(),
    };
    if r.take(4)? != MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != EXPORT_VERSION {
        return Err(r.err(format!("unsupported export version {version}")));
    }
    let n_in = r.u32()? as usize;
    let n_out = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let name = r.str16()?;
    let source_hash = r.str16()?;
    let input_labels: Vec<String> = (0..n_in).map(|_| r.str16()).collect::<Result<_>>()?;
    let output_labels: Vec<String> = (0..n_out).map(|_| r.str16()).collect::<Result<_>>()?;
    let offset = r.f32s(n_in)?;
    let scale = r.f32s(n_in)?;

    let mut layers = Vec::with_capacity(n_layers);
    let mut prev = n_in;
    for _ in 0..n_layers {
        let width = r.u32()? as usize;
        let flags = r.u32()?;
        let tau_mem = r.f32s(width)?;
        let tau_syn = r.f32s(width)?;
        let theta = r.f32s(width)?;
        let mut frozen = Vec::with_capacity(width);
        for _ in 0..width {
            frozen.push(r.u8()? != 0);
        }
        let w_ff = r.mat(width, prev)?;
        let w_rec = if flags & FLAG_RECURRENT != 0 {
            Some(r.mat(width, width)?)
        } else {
            None
        };
        let w_in = if flags & FLAG_INPUT_TAP != 0 {
            Some(r.mat(width, n_in)?)
        } else {
            None
        };
        layers.push(LayerParams {
            tau_mem,
            tau_syn,
            theta,
            w_ff,
            w_rec,
            w_in,
            frozen,
        });
        prev = width;
    }
    let w_decode = r.mat(n_out, prev)?;
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut provenance = std::collections::BTreeMap::new();
    provenance.insert("source_checkpoint".into(), source_hash.clone());
    let net = SpikingNetwork {
        input_labels,
        output_labels,
        input_norm: InputNorm { offset, scale },
        layers,
        w_decode,
        meta: NetworkMeta { name, provenance },
    };
    net.validate()?;
    Ok((net, source_hash))
}

pub fn write_export(net: &SpikingNetwork<f32>, source_hash: &str, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, export_network(net, source_hash)?)?;
    Ok(())
}

pub fn read_export(path: &Path) -> Result<(SpikingNetwork<f32>, String)> {
    import_network(&std::fs::read(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::run_sequence_raw;
    use crate::training::{init_network, TrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_net() -> SpikingNetwork<f32> {
        let mut cfg = TrainConfig::controller();
        cfg.hidden = vec![11];
        cfg.frozen_integrators = 3;
        let inputs: Vec<String> = (0..6).map(|i| format!("in{i}")).collect();
        let outputs: Vec<String> = (0..3).map(|i| format!("out{i}")).collect();
        let mut net = init_network(&inputs, &outputs, &cfg, "export-test");
        net.input_norm.offset = vec![0.0, 0.0, 0.0, 1.0, -0.5, 9.8];
        net.input_norm.scale = vec![1.0, 2.0, 0.5, 1.5, 1.0, 3.0];
        net
    }

    #[test]
    fn round_trip_byte_identical_and_zero_ulp() {
        let net = sample_net();
        let blob = export_network(&net, "deadbeef").unwrap();
        let (imported, hash) = import_network(&blob, "test").unwrap();
        assert_eq!(hash, "deadbeef");
        let blob2 = export_network(&imported, &hash).unwrap();
        assert_eq!(blob, blob2, "export→import→export must be byte-identical");

        // Identical arithmetic on a probe sequence: bit-equal outputs.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probe = Mat::from_fn(500, 6, |_, _| rng.gen_range(-1.0..1.0f32));
        let a = run_sequence_raw(&net, &probe);
        let b = run_sequence_raw(&imported, &probe);
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.spikes_per_step, b.spikes_per_step);
    }

    #[test]
    fn corrupt_blobs_rejected() {
        let net = sample_net();
        let blob = export_network(&net, "h").unwrap();
        assert!(import_network(&blob[..blob.len() - 2], "t").is_err());
        let mut bad_magic = blob.clone();
        bad_magic[0] = b'X';
        assert!(import_network(&bad_magic, "t").is_err());
        let mut trailing = blob;
        trailing.push(0);
        assert!(import_network(&trailing, "t").is_err());
    }
}
