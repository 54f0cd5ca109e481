use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{area_resample, GrayImage};
use crate::error::{Error, Result};

/// Values within this fraction of the largest magnitude count as ties with
/// the threshold, so flat images hash to all zeros instead of float noise.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HashAlgorithm {
    #[default]
    DctPhash,
    AverageHash,
    DifferenceHash,
}

impl HashAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            HashAlgorithm::DctPhash => "dct_phash",
            HashAlgorithm::AverageHash => "average_hash",
            HashAlgorithm::DifferenceHash => "difference_hash",
        }
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HashAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct_phash" | "phash" | "dct" => Ok(HashAlgorithm::DctPhash),
            "average_hash" | "ahash" | "average" => Ok(HashAlgorithm::AverageHash),
            "difference_hash" | "dhash" | "difference" => Ok(HashAlgorithm::DifferenceHash),
            other => Err(Error::contract(format!("unknown hash algorithm '{other}'"))),
        }
    }
}

/// Hash length; always a square of the block side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct HashBits(u32);

impl HashBits {
    pub const B16: HashBits = HashBits(16);
    pub const B64: HashBits = HashBits(64);
    pub const B256: HashBits = HashBits(256);

    pub fn new(bits: u32) -> Result<Self> {
        match bits {
            16 | 64 | 256 => Ok(HashBits(bits)),
            other => Err(Error::contract(format!(
                "hash bit depth must be 16, 64 or 256, got {other}"
            ))),
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Side of the square coefficient block, `sqrt(bits)`.
    pub fn side(self) -> usize {
        match self.0 {
            16 => 4,
            64 => 8,
            _ => 16,
        }
    }
}

impl Default for HashBits {
    fn default() -> Self {
        HashBits::B64
    }
}

impl TryFrom<u32> for HashBits {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        HashBits::new(v)
    }
}

impl From<HashBits> for u32 {
    fn from(b: HashBits) -> u32 {
        b.0
    }
}

/// Packed binary hash. Bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PerceptualHash {
    algorithm: HashAlgorithm,
    len: usize,
    words: Vec<u64>,
}

impl PerceptualHash {
    pub fn from_bits(algorithm: HashAlgorithm, bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        PerceptualHash {
            algorithm,
            len: bits.len(),
            words,
        }
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for a {}-bit hash", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.bit(i))
    }

    /// Big-endian hex of the hash read as an integer with bit 0 least significant.
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        let full: String = self.words.iter().rev().map(|w| format!("{w:016x}")).collect();
        full[full.len() - digits..].to_string()
    }

    pub fn from_hex(algorithm: HashAlgorithm, len: usize, hex: &str) -> Result<Self> {
        if hex.len() != len.div_ceil(4) || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::contract(format!("'{hex}' is not a {len}-bit hex hash")));
        }
        let padded = format!("{hex:0>width$}", width = len.div_ceil(64) * 16);
        let words = padded
            .as_bytes()
            .chunks(16)
            .rev()
            .map(|c| u64::from_str_radix(std::str::from_utf8(c).expect("ascii"), 16).expect("hex digits"))
            .collect();
        Ok(PerceptualHash { algorithm, len, words })
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Number of differing bit positions.
pub fn hamming(a: &PerceptualHash, b: &PerceptualHash) -> Result<u32> {
    if a.len != b.len || a.algorithm != b.algorithm {
        return Err(Error::contract(format!(
            "cannot compare a {}-bit {} hash with a {}-bit {} hash",
            a.len, a.algorithm, b.len, b.algorithm
        )));
    }
    Ok(a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum())
}

pub fn perceptual_hash(g: &GrayImage, algorithm: HashAlgorithm, bits: HashBits) -> PerceptualHash {
    match algorithm {
        HashAlgorithm::DctPhash => phash(g, bits),
        HashAlgorithm::AverageHash => average_hash(g, bits),
        HashAlgorithm::DifferenceHash => difference_hash(g, bits),
    }
}

/// DCT perceptual hash.
///
/// The image is area-resampled to `4s x 4s` (`s = sqrt(bits)`) and
/// transformed with an orthonormal 2-D DCT-II. The first `bits` coefficients
/// of the `(s + 1) x s` low-frequency window, row-major with DC skipped, are
/// compared against their median: strictly above sets the bit.
pub fn phash(g: &GrayImage, bits: HashBits) -> PerceptualHash {
    let side = bits.side();
    let n = 4 * side;
    let small = area_resample(g, n, n);

    let basis = |freq: usize, pos: usize| {
        let scale = if freq == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * (2 * pos + 1) as f64 * freq as f64 / (2 * n) as f64).cos()
    };
    let col_basis: Vec<Vec<f64>> = (0..side).map(|v| (0..n).map(|y| basis(v, y)).collect()).collect();
    let row_basis: Vec<Vec<f64>> = (0..=side).map(|u| (0..n).map(|x| basis(u, x)).collect()).collect();

    // Transform along columns first, keeping only the needed frequencies.
    let mut partial = vec![0.0; n * side];
    for x in 0..n {
        let line = &small[x * n..(x + 1) * n];
        for (v, b) in col_basis.iter().enumerate() {
            partial[x * side + v] = line.iter().zip(b).map(|(p, c)| p * c).sum();
        }
    }
    let mut window = Vec::with_capacity((side + 1) * side);
    for b in &row_basis {
        for v in 0..side {
            window.push((0..n).map(|x| b[x] * partial[x * side + v]).sum::<f64>());
        }
    }

    let scale = window.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let picked = &window[1..=bits.get()];
    threshold_bits(HashAlgorithm::DctPhash, picked, median(picked), scale)
}

/// Bits set where the resampled `s x s` thumbnail is above its mean.
pub fn average_hash(g: &GrayImage, bits: HashBits) -> PerceptualHash {
    let side = bits.side();
    let small = area_resample(g, side, side);
    let mean = small.iter().sum::<f64>() / small.len() as f64;
    let scale = small.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    threshold_bits(HashAlgorithm::AverageHash, &small, mean, scale)
}

/// Bits set where a pixel of the `s x (s + 1)` thumbnail is brighter than
/// its left neighbour.
pub fn difference_hash(g: &GrayImage, bits: HashBits) -> PerceptualHash {
    let side = bits.side();
    let small = area_resample(g, side, side + 1);
    let scale = small.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = TIE_TOLERANCE * scale;
    let out: Vec<bool> = (0..side)
        .flat_map(|r| {
            let row = &small[r * (side + 1)..(r + 1) * (side + 1)];
            (0..side).map(move |c| row[c + 1] - row[c] > tol)
        })
        .collect();
    PerceptualHash::from_bits(HashAlgorithm::DifferenceHash, &out)
}

fn threshold_bits(algorithm: HashAlgorithm, values: &[f64], threshold: f64, scale: f64) -> PerceptualHash {
    let tol = TIE_TOLERANCE * scale;
    let bits: Vec<bool> = values.iter().map(|&v| v - threshold > tol).collect();
    PerceptualHash::from_bits(algorithm, &bits)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}
