//! Binary weight files.
//!
//! Layout (little-endian): magic `DSIM`, format version `u16`, layer count
//! `u32`, then per layer `in: u32`, `out: u32`, activation tag `u8`, the
//! `out x in` weights row-major as `f64`, and `out` bias values as `f64`.

use std::io::{Read, Write};

use super::{Activation, Dense, MlpParams, NetError};

pub const MAGIC: &[u8; 4] = b"DSIM";
pub const FORMAT_VERSION: u16 = 1;

/// Guards allocation when reading corrupt files.
const MAX_LAYER_PARAMS: u64 = 1 << 28;

pub fn write_params<W: Write>(p: &MlpParams, w: &mut W) -> Result<(), NetError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(p.layers().len() as u32).to_le_bytes())?;
    for l in p.layers() {
        w.write_all(&(l.input as u32).to_le_bytes())?;
        w.write_all(&(l.output as u32).to_le_bytes())?;
        w.write_all(&[l.activation.tag()])?;
        for v in l.weights.iter().chain(&l.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], NetError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, NetError> {
    (0..count)
        .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
        .collect()
}

pub fn read_params<R: Read>(r: &mut R) -> Result<MlpParams, NetError> {
    if &read_array::<4, _>(r)? != MAGIC {
        return Err(NetError::BadMagic);
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != FORMAT_VERSION {
        return Err(NetError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(read_array(r)?);
    if count == 0 {
        return Err(NetError::Corrupt("zero layers"));
    }
    let mut layers = Vec::with_capacity(count.min(64) as usize);
    for _ in 0..count {
        let input = u32::from_le_bytes(read_array(r)?) as usize;
        let output = u32::from_le_bytes(read_array(r)?) as usize;
        let activation = Activation::from_tag(read_array::<1, _>(r)?[0])?;
        if input == 0 || output == 0 || (input as u64) * (output as u64) > MAX_LAYER_PARAMS {
            return Err(NetError::Corrupt("layer size"));
        }
        let weights = read_f64s(r, input * output)?;
        let bias = read_f64s(r, output)?;
        layers.push(Dense {
            input,
            output,
            weights,
            bias,
            activation,
        });
    }
    MlpParams::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sample() -> MlpParams {
        MlpParams::init(
            &[8, 32, 64, 16],
            &[Activation::Tanh, Activation::Tanh, Activation::Softmax],
            &mut rng::stream(12),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"DSIM");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf.len(), 4 + 2 + 4 + 3 * 9 + 8 * p.num_params());
        let q = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_unknown_version_and_tag() {
        let mut buf = Vec::new();
        write_params(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_params(&mut bad.as_slice()),
            Err(NetError::UnsupportedVersion(9))
        ));
        let mut bad = buf.clone();
        bad[10 + 8] = 7; // first layer's activation tag
        assert!(matches!(
            read_params(&mut bad.as_slice()),
            Err(NetError::UnknownActivation(7))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_params(&mut bad.as_slice()),
            Err(NetError::BadMagic)
        ));
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_params(&mut buf.as_slice()),
            Err(NetError::Io(_))
        ));
    }
}
