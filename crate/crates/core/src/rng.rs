//! Deterministic, splittable random streams.
//!
//! A stream is named by a master seed and a path of indices. The path is folded
//! into a 256-bit ChaCha key, so the draws of stream `[scenario, replication, l]`
//! never depend on which worker thread produced them or in what order.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NneError;

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(master_seed: u64, path: &[u64]) -> Self {
        Self {
            master_seed,
            path: path.to_vec(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream `index` of this stream. Deterministic in `(self, index)`.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Convenience for a chain of [`substream`](Self::substream) calls.
    pub fn descend(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut k = [0u64; 4];
        for (i, w) in k.iter_mut().enumerate() {
            *w = splitmix64(self.master_seed ^ splitmix64(0xA076_1D64_78BD_642F ^ i as u64));
        }
        for (depth, &idx) in self.path.iter().enumerate() {
            let salt = splitmix64(idx ^ ((depth as u64 + 1) << 56));
            let prev = k;
            for i in 0..4 {
                k[i] = splitmix64(
                    prev[i] ^ prev[(i + 1) % 4].rotate_left(23) ^ salt.rotate_left(i as u32 * 16),
                );
            }
        }
        let mut bytes = [0u8; 32];
        for (i, w) in k.iter().enumerate() {
            bytes[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        bytes
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// Rendered as `seed:i.j.k`, the form stored in result tables.
impl fmt::Display for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.master_seed)?;
        for (i, p) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for RngStream {
    type Err = NneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NneError::Parse {
            line: 0,
            reason: format!("malformed seed path {s:?}"),
        };
        let (seed, rest) = s.split_once(':').ok_or_else(bad)?;
        let master_seed = seed.parse().map_err(|_| bad())?;
        let path = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split('.')
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        };
        Ok(Self { master_seed, path })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(s: &RngStream, n: usize) -> Vec<f64> {
        let mut r = s.rng();
        (0..n).map(|_| r.random::<f64>()).collect()
    }

    #[test]
    fn same_path_same_sequence() {
        let a = RngStream::new(1).substream(0);
        let b = RngStream::new(1).substream(0);
        assert_eq!(draws(&a, 1000), draws(&b, 1000));
        assert_eq!(RngStream::new(1).descend(&[2, 3]), RngStream::with_path(1, &[2, 3]));
    }

    #[test]
    fn sibling_streams_are_uncorrelated() {
        let n = 100_000;
        let a = draws(&RngStream::new(1).substream(0), n);
        let b = draws(&RngStream::new(1).substream(1), n);
        assert_ne!(a[..10], b[..10]);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        let rho = sab / (saa * sbb).sqrt();
        assert!(rho.abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn path_order_and_depth_matter() {
        let base = RngStream::new(7);
        let k = |s: RngStream| s.key();
        assert_ne!(k(base.descend(&[1, 2])), k(base.descend(&[2, 1])));
        assert_ne!(k(base.descend(&[0])), k(base.descend(&[0, 0])));
        assert_ne!(k(RngStream::new(7)), k(RngStream::new(8)));
    }

    #[test]
    fn display_round_trips() {
        let s = RngStream::with_path(42, &[3, 0, 17]);
        assert_eq!(s.to_string(), "42:3.0.17");
        assert_eq!(s.to_string().parse::<RngStream>().unwrap(), s);
        assert_eq!("5:".parse::<RngStream>().unwrap(), RngStream::new(5));
        assert!("x:1".parse::<RngStream>().is_err());
    }
}
