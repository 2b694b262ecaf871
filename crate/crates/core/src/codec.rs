//! Compressed syndrome messages: the sorted list of defect addresses.
//!
//! Wire layout, all integers little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 1    | format version, currently `1`          |
//! | 1      | 2    | code distance `d`                      |
//! | 3      | 2    | number of rounds                       |
//! | 5      | 4    | defect count `n`                       |
//! | 9      | 4n   | addresses, `u32` each, strictly rising |
//!
//! Files holding one message use the `.synz` extension.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::CodeLattice;
use crate::noise::SyndromeHistory;

pub const FORMAT_VERSION: u8 = 1;

/// Bytes before the address payload.
pub const HEADER_LEN: usize = 9;

/// Reasons a message is rejected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("message truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },

    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("header describes an invalid geometry (d = {d}, rounds = {rounds})")]
    InvalidGeometry { d: u16, rounds: u16 },

    #[error("header (d = {d}, rounds = {rounds}) does not match the lattice (d = {lattice_d}, rounds = {lattice_rounds})")]
    HeaderMismatch {
        d: u16,
        rounds: u16,
        lattice_d: usize,
        lattice_rounds: usize,
    },

    #[error("defect count {0} is odd")]
    OddCount(u32),

    #[error("address {address} out of range for a volume of {volume}")]
    AddressOutOfRange { address: u32, volume: u64 },

    #[error("address {0} appears twice")]
    DuplicateAddress(u32),

    #[error("addresses not ascending at position {0}")]
    Unsorted(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

/// A syndrome history as a canonical address list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedSyndrome {
    version: u8,
    d: u16,
    rounds: u16,
    addresses: Vec<u32>,
}

impl CompressedSyndrome {
    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn d(&self) -> u16 {
        self.d
    }

    pub fn rounds(&self) -> u16 {
        self.rounds
    }

    pub fn count(&self) -> usize {
        self.addresses.len()
    }

    pub fn addresses(&self) -> &[u32] {
        &self.addresses
    }

    /// Spacetime volume described by the header.
    pub fn volume(&self) -> u64 {
        let d = u64::from(self.d);
        d * d / 2 * u64::from(self.rounds)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.addresses.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.version);
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&self.rounds.to_le_bytes());
        out.extend_from_slice(&(self.addresses.len() as u32).to_le_bytes());
        for a in &self.addresses {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out
    }

    /// Parses and validates a message. Every structural or canonical-form
    /// violation is reported; nothing panics on arbitrary input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated {
                needed: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let version = bytes[0];
        if version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let d = u16::from_le_bytes([bytes[1], bytes[2]]);
        let rounds = u16::from_le_bytes([bytes[3], bytes[4]]);
        let count = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
        if d < 4 || d % 2 != 0 || rounds == 0 {
            return Err(CodecError::InvalidGeometry { d, rounds });
        }
        let needed = (count as usize)
            .checked_mul(4)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or(CodecError::Truncated {
                needed: usize::MAX,
                got: bytes.len(),
            })?;
        if bytes.len() < needed {
            return Err(CodecError::Truncated {
                needed,
                got: bytes.len(),
            });
        }
        if bytes.len() > needed {
            return Err(CodecError::TrailingBytes(bytes.len() - needed));
        }
        if count % 2 != 0 {
            return Err(CodecError::OddCount(count));
        }
        let addresses: Vec<u32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let m = CompressedSyndrome {
            version,
            d,
            rounds,
            addresses,
        };
        m.check_addresses()?;
        Ok(m)
    }

    fn check_addresses(&self) -> Result<(), CodecError> {
        let volume = self.volume();
        for (i, &a) in self.addresses.iter().enumerate() {
            if u64::from(a) >= volume {
                return Err(CodecError::AddressOutOfRange { address: a, volume });
            }
            if i > 0 {
                let prev = self.addresses[i - 1];
                if prev == a {
                    return Err(CodecError::DuplicateAddress(a));
                }
                if prev > a {
                    return Err(CodecError::Unsorted(i));
                }
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), CodecError> {
        fs::write(path, self.to_bytes()).map_err(|e| CodecError::Io(e.to_string()))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, CodecError> {
        let bytes = fs::read(path).map_err(|e| CodecError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

pub fn compress(lattice: &CodeLattice, s: &SyndromeHistory) -> CompressedSyndrome {
    debug_assert_eq!(s.volume(), lattice.volume());
    CompressedSyndrome {
        version: FORMAT_VERSION,
        d: lattice.d() as u16,
        rounds: lattice.n_rounds() as u16,
        addresses: s.bits().iter_ones().map(|a| a as u32).collect(),
    }
}

pub fn decompress(
    m: &CompressedSyndrome,
    lattice: &CodeLattice,
) -> Result<SyndromeHistory, CodecError> {
    if usize::from(m.d) != lattice.d() || usize::from(m.rounds) != lattice.n_rounds() {
        return Err(CodecError::HeaderMismatch {
            d: m.d,
            rounds: m.rounds,
            lattice_d: lattice.d(),
            lattice_rounds: lattice.n_rounds(),
        });
    }
    if m.version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(m.version));
    }
    if m.addresses.len() % 2 != 0 {
        return Err(CodecError::OddCount(m.addresses.len() as u32));
    }
    m.check_addresses()?;
    Ok(SyndromeHistory::from_defects(
        lattice,
        m.addresses.iter().map(|&a| a as usize),
    ))
}

/// Message-size accounting for one syndrome history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub count: usize,
    pub volume: usize,
    pub rounds: usize,
    /// `ceil(log2 V)`, the bits needed to name one vertex.
    pub address_bits: u32,
    pub ideal_bits: u64,
    /// Cost at a flat 16 bits per address.
    pub model16_bits: u64,
    /// One bit per vertex.
    pub uncompressed_bits: u64,
    pub wire_bits: u64,
}

impl BandwidthReport {
    pub fn ideal_bits_per_round(&self) -> f64 {
        self.ideal_bits as f64 / self.rounds as f64
    }

    pub fn model16_bits_per_round(&self) -> f64 {
        self.model16_bits as f64 / self.rounds as f64
    }

    pub fn uncompressed_bits_per_round(&self) -> f64 {
        self.uncompressed_bits as f64 / self.rounds as f64
    }

    pub fn ideal_density(&self) -> f64 {
        self.ideal_bits as f64 / self.volume as f64
    }

    pub fn model16_density(&self) -> f64 {
        self.model16_bits as f64 / self.volume as f64
    }

    /// Addresses sent per vertex.
    pub fn address_density(&self) -> f64 {
        self.count as f64 / self.volume as f64
    }

    /// The uncompressed stream measured in 16-bit address units per vertex.
    pub const UNCOMPRESSED_ADDRESS_UNITS: f64 = 1.0 / 16.0;
}

/// `ceil(log2 v)` for `v >= 1`.
pub fn address_bits(v: usize) -> u32 {
    if v <= 1 {
        0
    } else {
        usize::BITS - (v - 1).leading_zeros()
    }
}

pub fn bandwidth_report(m: &CompressedSyndrome, lattice: &CodeLattice) -> BandwidthReport {
    let volume = lattice.volume();
    let bits = address_bits(volume);
    let count = m.count();
    BandwidthReport {
        count,
        volume,
        rounds: lattice.n_rounds(),
        address_bits: bits,
        ideal_bits: count as u64 * u64::from(bits),
        model16_bits: count as u64 * 16,
        uncompressed_bits: volume as u64,
        wire_bits: 8 * m.encoded_len() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(d: usize) -> CodeLattice {
        CodeLattice::build(d).unwrap()
    }

    #[test]
    fn empty_message() {
        let l = lat(4);
        let m = compress(&l, &SyndromeHistory::empty(&l));
        assert_eq!(m.count(), 0);
        assert_eq!(m.to_bytes(), vec![1, 4, 0, 4, 0, 0, 0, 0, 0]);
        assert!(decompress(&m, &l).unwrap().is_clear());
    }

    #[test]
    fn golden_pair() {
        let l = lat(4);
        let s = SyndromeHistory::from_defects(&l, [9, 0]);
        let bytes = compress(&l, &s).to_bytes();
        assert_eq!(
            bytes,
            vec![1, 4, 0, 4, 0, 2, 0, 0, 0, 0, 0, 0, 0, 9, 0, 0, 0]
        );
        let back = CompressedSyndrome::from_bytes(&bytes).unwrap();
        assert_eq!(decompress(&back, &l).unwrap(), s);
    }

    #[test]
    fn rejects_malformed() {
        let good = vec![1, 4, 0, 4, 0, 2, 0, 0, 0, 0, 0, 0, 0, 9, 0, 0, 0];
        let with = |i: usize, v: u8| {
            let mut b = good.clone();
            b[i] = v;
            b
        };
        use CodecError::*;
        let parse = CompressedSyndrome::from_bytes;
        assert!(matches!(parse(&good[..5]), Err(Truncated { .. })));
        assert!(matches!(parse(&good[..16]), Err(Truncated { .. })));
        assert_eq!(parse(&[good.clone(), vec![0]].concat()), Err(TrailingBytes(1)));
        assert_eq!(parse(&with(0, 2)), Err(UnsupportedVersion(2)));
        assert!(matches!(parse(&with(1, 5)), Err(InvalidGeometry { .. })));
        // Address 32 equals V at d = 4.
        assert!(matches!(parse(&with(13, 32)), Err(AddressOutOfRange { .. })));
        assert_eq!(parse(&with(13, 0)), Err(DuplicateAddress(0)));
        assert_eq!(parse(&with(9, 10)), Err(Unsorted(1)));
        let odd = [&[1, 4, 0, 4, 0, 1, 0, 0, 0][..], &[3, 0, 0, 0]].concat();
        assert_eq!(parse(&odd), Err(OddCount(1)));
    }

    #[test]
    fn header_must_match_lattice() {
        let m = compress(&lat(4), &SyndromeHistory::empty(&lat(4)));
        assert!(matches!(
            decompress(&m, &lat(6)),
            Err(CodecError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn bandwidth_accounting() {
        let l = lat(22);
        assert_eq!(l.volume(), 5324);
        assert_eq!(address_bits(5324), 13);
        let s = SyndromeHistory::from_defects(&l, [1, 2, 3, 4]);
        let r = bandwidth_report(&compress(&l, &s), &l);
        assert_eq!(r.ideal_bits, 52);
        assert_eq!(r.model16_bits, 64);
        assert_eq!(r.uncompressed_bits, 5324);
        assert_eq!(r.uncompressed_bits_per_round(), 242.0);
        let empty = bandwidth_report(&compress(&l, &SyndromeHistory::empty(&l)), &l);
        assert_eq!((empty.ideal_bits, empty.uncompressed_bits), (0, 5324));
    }

    #[test]
    fn address_bit_counts() {
        assert_eq!(address_bits(1), 0);
        assert_eq!(address_bits(2), 1);
        assert_eq!(address_bits(32), 5);
        assert_eq!(address_bits(33), 6);
    }
}
