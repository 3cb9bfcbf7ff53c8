//! Density raster files.
//!
//! Layout (all little-endian): `DMAP`, `u32` width, `u32` height, `u32` reserved (zero),
//! then `height * width` IEEE-754 doubles in row-major order.

use std::path::Path;

use super::DensityMap;
use crate::error::{Error, Result};
use crate::io;

const MAGIC: &[u8; 4] = b"DMAP";
const HEADER_LEN: usize = 16;

pub fn encode_density(map: &DensityMap) -> Result<Vec<u8>> {
    let w = u32::try_from(map.width()).map_err(|_| Error::invalid("dimension overflow"))?;
    let h = u32::try_from(map.height()).map_err(|_| Error::invalid("dimension overflow"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * map.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_density(bytes: &[u8]) -> Result<DensityMap> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format("not a density file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h, reserved) = (word(4) as usize, word(8) as usize, word(12));
    if reserved != 0 {
        return Err(Error::format("not a density file (reserved header word is non-zero)"));
    }
    let n = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format("dimension overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != n {
        return Err(Error::format(format!(
            "density payload is {} bytes, expected {n}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DensityMap::from_values_unchecked_sign(w, h, values)
}

pub fn save_density(map: &DensityMap, path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_density(map)?)
}

pub fn load_density(path: &Path) -> Result<DensityMap> {
    decode_density(&io::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_value_file() {
        let m = DensityMap::from_values(1, 1, vec![0.25]).unwrap();
        let bytes = encode_density(&m).unwrap();
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(decode_density(&bytes).unwrap().values(), &[0.25]);
    }

    #[test]
    fn bad_magic() {
        let m = DensityMap::zeros(2, 1);
        let mut bytes = encode_density(&m).unwrap();
        bytes[0] = b'X';
        assert_eq!(decode_density(&bytes).unwrap_err().to_string(), "not a density file");
        assert!(decode_density(b"DM").is_err());
    }

    #[test]
    fn short_payload() {
        let bytes = encode_density(&DensityMap::zeros(3, 3)).unwrap();
        assert!(decode_density(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dmap");
        let m = DensityMap::from_values(3, 2, vec![0.0, 1e-300, 0.5, 1.0 / 3.0, 7.0, 2.5]).unwrap();
        save_density(&m, &p).unwrap();
        assert_eq!(load_density(&p).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..8, h in 1usize..8, bits in proptest::collection::vec(any::<u64>(), 64)) {
            let values: Vec<f64> = (0..w * h).map(|i| f64::from_bits(bits[i]).abs()).collect();
            let m = DensityMap::from_values_unchecked_sign(w, h, values).unwrap();
            let back = decode_density(&encode_density(&m).unwrap()).unwrap();
            for (a, b) in m.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
