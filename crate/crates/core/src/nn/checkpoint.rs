//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes   "MSL1"
//! layer_count  u32       number of entries in `sizes` (input + hidden + output)
//! sizes        u32 x layer_count
//! per dense layer, in order:
//!   weights    f64 x (out * in), row-major (one row per output neuron)
//!   biases     f64 x out
//! ```
//!
//! Activation and head kinds are not stored; the loader supplies them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Head, Layer, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSL1";

pub fn write_checkpoint<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let sizes = net.sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_checkpoint<R: Read>(mut r: R, activation: Activation, head: Head) -> Result<Mlp> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse(format!("bad checkpoint magic {magic:?}")));
    }
    let count = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Parse(format!("implausible layer count {count}")));
    }
    let sizes = (0..count)
        .map(|_| read_u32(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        let mut layer = Layer::zeros(w[0], w[1]);
        for v in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            *v = read_f64(&mut r)?;
        }
        layers.push(layer);
    }
    Mlp::from_layers(layers, activation, head)
}

pub fn save_checkpoint(net: &Mlp, path: &Path) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path, activation: Activation, head: Head) -> Result<Mlp> {
    read_checkpoint(BufReader::new(File::open(path)?), activation, head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn header_layout_and_resave_stability() {
        let net = Mlp::new(
            &[3, 4, 2],
            Activation::Relu,
            Head::Softmax,
            &mut rng::stream(1, 0, 0),
        )
        .unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"MSL1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 4 + 4 + 3 * 4 + 8 * net.param_count());
        let first = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(first, net.layers()[0].weights[0]);

        let loaded = read_checkpoint(&bytes[..], Activation::Relu, Head::Softmax).unwrap();
        assert_eq!(loaded, net);
        let mut again = Vec::new();
        write_checkpoint(&loaded, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_checkpoint(&b"XXXX\x03\0\0\0"[..], Activation::Relu, Head::Linear).is_err());
        let net = Mlp::zeros(&[2, 2, 1], Activation::Relu, Head::Linear).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(&bytes[..], Activation::Relu, Head::Linear).is_err());
    }
}
