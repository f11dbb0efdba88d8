//! Flat binary network checkpoints.
//!
//! Layout of one network block, all integers and floats little-endian:
//!
//! ```text
//! "AMRT"            4 bytes magic
//! version           u32 (= 1)
//! layer_count       u32, trunk layers plus head layers
//! activation        u32 tag (0 leaky relu, 1 relu, 2 identity), f64 slope
//! head              u32 tag (0 plain, 1 mean/variance)
//! per layer:        u32 inputs, u32 outputs,
//!                   outputs*inputs f64 weights (row-major), outputs f64 biases
//! ```
//!
//! Trunk layers come first, head layers last. A checkpoint file is a sequence
//! of such blocks.

use std::path::Path;

use super::{Activation, Dense, Head, Network};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AMRT";
const VERSION: u32 = 1;

pub fn encode_network(net: &Network, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    let (tag, slope) = match net.activation() {
        Activation::LeakyRelu(s) => (0u32, s),
        Activation::Relu => (1, 0.0),
        Activation::Identity => (2, 0.0),
    };
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&slope.to_le_bytes());
    let head = match net.head() {
        Head::Plain => 0u32,
        Head::MeanVar => 1,
    };
    out.extend_from_slice(&head.to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes one network block; returns it with the number of bytes consumed.
pub fn decode_network(buf: &[u8]) -> Result<(Network, usize)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let tag = r.u32()?;
    let slope = r.f64()?;
    let activation = match tag {
        0 => Activation::LeakyRelu(slope),
        1 => Activation::Relu,
        2 => Activation::Identity,
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let head = match r.u32()? {
        0 => Head::Plain,
        1 => Head::MeanVar,
        t => return Err(Error::Checkpoint(format!("unknown head tag {t}"))),
    };
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let weights = r.f64s(inputs * outputs)?;
        let bias = r.f64s(outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    let net = Network::from_layers(activation, head, layers)
        .map_err(|e| Error::Checkpoint(format!("inconsistent layers: {e}")))?;
    Ok((net, r.pos))
}

pub fn write_networks(path: &Path, nets: &[&Network]) -> Result<()> {
    let mut buf = Vec::new();
    for n in nets {
        encode_network(n, &mut buf);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_networks(path: &Path) -> Result<Vec<Network>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut nets = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let (n, used) = decode_network(&buf[pos..])?;
        nets.push(n);
        pos += used;
    }
    Ok(nets)
}
