//! `BNET1` checkpoint format.
//!
//! Layout (all integers little-endian `u32`):
//! magic `BNET1`; architecture block `input_channels, kernel_size, scales, M`
//! followed by `M` pairs `(channels, pool as u32)`; tensor count; then per
//! tensor `name_len, name bytes, rank, dims..., f64 values (LE)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, NetworkParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"BNET1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint<T: Scalar>(params: &NetworkParams<T>) -> Vec<u8> {
    let arch = params.arch();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, arch.input_channels);
    put_u32(&mut out, arch.kernel_size);
    put_u32(&mut out, arch.scales);
    put_u32(&mut out, arch.stages());
    for (c, p) in arch.stage_channels.iter().zip(&arch.pool_after) {
        put_u32(&mut out, *c);
        put_u32(&mut out, usize::from(*p));
    }
    let tensors = params.tensors();
    put_u32(&mut out, tensors.len());
    for t in tensors {
        put_u32(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.dims.len());
        for &d in &t.dims {
            put_u32(&mut out, d);
        }
        for v in t.data {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("truncated BNET1 checkpoint".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    let mut cur = Cursor { bytes };
    if cur.take(5)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad BNET1 magic".into()));
    }
    let input_channels = cur.u32()?;
    let kernel_size = cur.u32()?;
    let scales = cur.u32()?;
    let m = cur.u32()?;
    if m > 1024 {
        return Err(Error::Format(format!("implausible stage count {m}")));
    }
    let mut stage_channels = Vec::with_capacity(m);
    let mut pool_after = Vec::with_capacity(m);
    for _ in 0..m {
        stage_channels.push(cur.u32()?);
        pool_after.push(match cur.u32()? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("bad pool flag {v}"))),
        });
    }
    let arch = Architecture {
        input_channels,
        stage_channels,
        kernel_size,
        pool_after,
        scales,
    };
    let mut params = NetworkParams::<T>::zeros(&arch)?;
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().into_iter().map(|t| (t.name, t.dims)).collect();
    let count = cur.u32()?;
    if count != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} tensors, architecture needs {}",
            expected.len()
        )));
    }
    let mut slots = params.tensors_mut();
    for (slot, (name, dims)) in slots.iter_mut().zip(&expected) {
        let n = cur.u32()?;
        let got = std::str::from_utf8(cur.take(n)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got}")));
        }
        let rank = cur.u32()?;
        let got_dims = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        if &got_dims != dims {
            return Err(Error::Format(format!("tensor {name} has dims {got_dims:?}, expected {dims:?}")));
        }
        for v in slot.data.iter_mut() {
            *v = T::lit(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
        }
    }
    if !cur.bytes.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    drop(slots);
    Ok(params)
}

pub fn write_checkpoint<T: Scalar>(params: &NetworkParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    f.write_all(&encode_checkpoint(params))?;
    f.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<NetworkParams<T>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path.as_ref())?).read_to_end(&mut buf)?;
    decode_checkpoint(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), c1 in 1usize..4, c2 in 1usize..4, scales in 1usize..4) {
            let arch = Architecture {
                input_channels: 1,
                stage_channels: vec![c1, c2],
                kernel_size: 3,
                pool_after: vec![true, false],
                scales,
            };
            let p = init_params::<f64>(&arch, seed).unwrap();
            let bytes = encode_checkpoint(&p);
            let q: NetworkParams<f64> = decode_checkpoint(&bytes).unwrap();
            prop_assert_eq!(q.arch(), p.arch());
            let same = p.to_flat().iter().zip(q.to_flat()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
            prop_assert_eq!(encode_checkpoint(&q), bytes);
        }
    }

    #[test]
    fn header_and_corruption() {
        let p = init_params::<f64>(&Architecture::default(), 0).unwrap();
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..5], b"BNET1");
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint::<f64>(&extra).is_err());
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(decode_checkpoint::<f64>(&bad).is_err());
    }
}
