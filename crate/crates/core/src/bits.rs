//! Fixed-length bit strings with MSB-first packing.
//!
//! Protocol values are bit strings whose length is rarely a whole number of
//! bytes, so all slicing, symbol packing and hex rendering goes through this
//! one type to keep the bit order consistent everywhere.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("hex string has odd length")]
    OddHexLength,
    #[error("invalid hex digit {0:?}")]
    InvalidHexDigit(char),
    #[error("hex string encodes {got} bits, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("padding bits past the declared length must be zero")]
    DirtyPadding,
}

/// A bit string of arbitrary length. Bit 0 is the most significant bit of the
/// first byte.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bits {
    bytes: Vec<u8>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            bytes: vec![0; len.div_ceil(8)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        self.bytes[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        let mask = 1u8 << (7 - i % 8);
        if v {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    /// Reads `width` bits starting at `pos` as an MSB-first integer.
    pub fn read_uint(&self, pos: usize, width: usize) -> u64 {
        assert!(width <= 64 && pos + width <= self.len);
        let mut v = 0u64;
        for i in 0..width {
            v = v << 1 | self.get(pos + i) as u64;
        }
        v
    }

    /// Writes `width` bits of `value` (MSB first) starting at `pos`.
    pub fn write_uint(&mut self, pos: usize, width: usize, value: u64) {
        assert!(width <= 64 && pos + width <= self.len);
        for i in 0..width {
            self.set(pos + i, value >> (width - 1 - i) & 1 == 1);
        }
    }

    /// Copies bits `[start, start+len)` into a new string.
    pub fn slice(&self, start: usize, len: usize) -> Bits {
        assert!(start + len <= self.len);
        let mut out = Bits::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    /// Returns a copy zero-extended (or truncated) to `len` bits.
    pub fn resized(&self, len: usize) -> Bits {
        let mut out = Bits::zeros(len);
        for i in 0..len.min(self.len) {
            out.set(i, self.get(i));
        }
        out
    }

    pub fn extend(&mut self, other: &Bits) {
        let old = self.len;
        let mut grown = self.resized(old + other.len);
        for i in 0..other.len {
            grown.set(old + i, other.get(i));
        }
        *self = grown;
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a hex string as exactly `len` bits. The string must cover whole
    /// bytes and any bits past `len` must be zero.
    pub fn from_hex(hex: &str, len: usize) -> Result<Self, BitsError> {
        let hex = hex.trim().trim_start_matches("0x").trim_start_matches("0X");
        if hex.len() % 2 != 0 {
            return Err(BitsError::OddHexLength);
        }
        let mut bytes = Vec::with_capacity(hex.len() / 2);
        let digits: Vec<char> = hex.chars().collect();
        for pair in digits.chunks(2) {
            let hi = pair[0].to_digit(16).ok_or(BitsError::InvalidHexDigit(pair[0]))?;
            let lo = pair[1].to_digit(16).ok_or(BitsError::InvalidHexDigit(pair[1]))?;
            bytes.push((hi << 4 | lo) as u8);
        }
        if bytes.len() != len.div_ceil(8) {
            return Err(BitsError::LengthMismatch { got: bytes.len() * 8, want: len });
        }
        let out = Bits { bytes, len };
        for i in len..out.bytes.len() * 8 {
            if out.bytes[i / 8] >> (7 - i % 8) & 1 == 1 {
                return Err(BitsError::DirtyPadding);
            }
        }
        Ok(out)
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits[{}]({})", self.len, self.to_hex())
    }
}
