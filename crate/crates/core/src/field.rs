//! Arithmetic in the binary fields GF(2^c), 2 <= c <= 16.
//!
//! Elements are polynomials over GF(2) packed into the low `c` bits of an
//! integer. Addition is XOR; multiplication is a carry-less product reduced
//! by a fixed irreducible polynomial. Widths are capped at 16 so that every
//! property of interest can be checked exhaustively, and the reduction
//! polynomial for each width comes from a built-in table so that two runs of
//! the simulator always agree symbol for symbol.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("symbol width c={0} is outside the supported range 2..=16")]
    UnsupportedWidth(u32),
    #[error("polynomial {0:#x} is reducible and cannot define a field")]
    ReduciblePolynomial(u32),
    #[error("polynomial {poly:#x} does not have degree {c}")]
    WrongDegree { poly: u32, c: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// One element of GF(2^c), wrapping its integer representation.
///
/// The element does not carry its field; all arithmetic happens through a
/// [`Field`], which checks that operand values are in range.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fe(pub u16);

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

/// Irreducible polynomial used for each supported width, indexed by c - 2.
/// Entry for width c is a (c+1)-bit mask, e.g. 0x13 = x^4 + x + 1.
const REDUCTION_POLYNOMIALS: [u32; 15] = [
    0x7,     // c=2:  x^2 + x + 1
    0xb,     // c=3:  x^3 + x + 1
    0x13,    // c=4:  x^4 + x + 1
    0x25,    // c=5:  x^5 + x^2 + 1
    0x43,    // c=6:  x^6 + x + 1
    0x89,    // c=7:  x^7 + x^3 + 1
    0x11b,   // c=8:  x^8 + x^4 + x^3 + x + 1
    0x211,   // c=9:  x^9 + x^4 + 1
    0x409,   // c=10: x^10 + x^3 + 1
    0x805,   // c=11: x^11 + x^2 + 1
    0x1053,  // c=12: x^12 + x^6 + x^4 + x + 1
    0x201b,  // c=13: x^13 + x^4 + x^3 + x + 1
    0x4443,  // c=14: x^14 + x^10 + x^6 + x + 1
    0x8003,  // c=15: x^15 + x + 1
    0x1100b, // c=16: x^16 + x^12 + x^3 + x + 1
];

/// A binary field GF(2^c): the symbol width plus the reduction polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    c: u32,
    poly: u32,
}

impl Field {
    /// Builds the field of width `c` with the table polynomial.
    pub fn new(c: u32) -> Result<Self, FieldError> {
        if !(2..=16).contains(&c) {
            return Err(FieldError::UnsupportedWidth(c));
        }
        Self::with_polynomial(c, REDUCTION_POLYNOMIALS[(c - 2) as usize])
    }

    /// Builds a field with an explicit reduction polynomial, verifying that
    /// it has degree `c` and is irreducible.
    pub fn with_polynomial(c: u32, poly: u32) -> Result<Self, FieldError> {
        if !(2..=16).contains(&c) {
            return Err(FieldError::UnsupportedWidth(c));
        }
        if 32 - poly.leading_zeros() != c + 1 {
            return Err(FieldError::WrongDegree { poly, c });
        }
        if !poly_is_irreducible(poly, c) {
            return Err(FieldError::ReduciblePolynomial(poly));
        }
        Ok(Field { c, poly })
    }

    pub fn width(&self) -> u32 {
        self.c
    }

    pub fn reduction_polynomial(&self) -> u32 {
        self.poly
    }

    /// Number of elements, 2^c.
    pub fn order(&self) -> u32 {
        1 << self.c
    }

    pub fn zero(&self) -> Fe {
        Fe(0)
    }

    pub fn one(&self) -> Fe {
        Fe(1)
    }

    pub fn contains(&self, a: Fe) -> bool {
        (a.0 as u32) < self.order()
    }

    fn check(&self, a: Fe) {
        assert!(
            self.contains(a),
            "{a:?} is not an element of GF(2^{})",
            self.c
        );
    }

    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        self.check(a);
        self.check(b);
        Fe(a.0 ^ b.0)
    }

    /// Subtraction coincides with addition in characteristic 2.
    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        self.add(a, b)
    }

    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        self.check(a);
        self.check(b);
        // Carry-less product of the two polynomials, then reduction.
        let mut prod: u64 = 0;
        let a64 = a.0 as u64;
        for i in 0..self.c {
            if b.0 >> i & 1 == 1 {
                prod ^= a64 << i;
            }
        }
        Fe(self.reduce(prod))
    }

    fn reduce(&self, mut v: u64) -> u16 {
        let poly = self.poly as u64;
        let mut deg = 63_i32.saturating_sub(v.leading_zeros() as i32);
        while deg >= self.c as i32 {
            v ^= poly << (deg as u32 - self.c);
            deg = 63_i32.saturating_sub(v.leading_zeros() as i32);
        }
        v as u16
    }

    pub fn pow(&self, a: Fe, mut e: u64) -> Fe {
        self.check(a);
        let mut base = a;
        let mut acc = Fe(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via a^(2^c - 2).
    pub fn inv(&self, a: Fe) -> Result<Fe, FieldError> {
        self.check(a);
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.order() as u64 - 2))
    }

    pub fn div(&self, a: Fe, b: Fe) -> Result<Fe, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }
}

/// Exhaustive irreducibility test: a degree-c polynomial is reducible iff it
/// has a factor of degree between 1 and c/2.
fn poly_is_irreducible(poly: u32, c: u32) -> bool {
    for d in 1..=c / 2 {
        for candidate in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_rem(poly, candidate) == 0 {
                return false;
            }
        }
    }
    true
}

/// Remainder of carry-less division of `a` by `b` (b != 0).
fn poly_rem(mut a: u32, b: u32) -> u32 {
    let db = 31 - b.leading_zeros();
    loop {
        if a == 0 {
            return 0;
        }
        let da = 31 - a.leading_zeros();
        if da < db {
            return a;
        }
        a ^= b << (da - db);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent multiplication oracle: accumulate shifted copies of `a`,
    /// reducing after every doubling instead of once at the end.
    fn mul_oracle(f: &Field, a: Fe, b: Fe) -> Fe {
        let mut shifted = a.0 as u32; // a * x^i, kept reduced
        let mut acc = 0u32;
        for i in 0..f.width() {
            if b.0 >> i & 1 == 1 {
                acc ^= shifted;
            }
            shifted <<= 1;
            if shifted >> f.width() & 1 == 1 {
                shifted ^= f.reduction_polynomial();
            }
        }
        Fe(acc as u16)
    }

    /// Log/antilog tables built by repeated multiplication with a generator.
    fn log_tables(f: &Field) -> Option<(Vec<u32>, Vec<Fe>)> {
        'gen: for g in 2..f.order() {
            let g = Fe(g as u16);
            let mut log = vec![u32::MAX; f.order() as usize];
            let mut antilog = Vec::with_capacity(f.order() as usize - 1);
            let mut cur = Fe(1);
            for e in 0..f.order() - 1 {
                if log[cur.0 as usize] != u32::MAX {
                    continue 'gen; // g does not generate the whole group
                }
                log[cur.0 as usize] = e;
                antilog.push(cur);
                cur = mul_oracle(f, cur, g);
            }
            return Some((log, antilog));
        }
        None
    }

    #[test]
    fn builtin_polynomials_are_irreducible() {
        for c in 2..=16 {
            let f = Field::new(c).unwrap();
            assert_eq!(f.width(), c);
            assert!(poly_is_irreducible(f.reduction_polynomial(), c));
        }
    }

    #[test]
    fn rejects_reducible_polynomial() {
        // x^4 + 1 = (x + 1)^4
        assert_eq!(
            Field::with_polynomial(4, 0x11),
            Err(FieldError::ReduciblePolynomial(0x11))
        );
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert_eq!(
            Field::with_polynomial(4, 0x15),
            Err(FieldError::ReduciblePolynomial(0x15))
        );
    }

    #[test]
    fn rejects_unsupported_widths() {
        assert_eq!(Field::new(1), Err(FieldError::UnsupportedWidth(1)));
        assert_eq!(Field::new(17), Err(FieldError::UnsupportedWidth(17)));
    }

    #[test]
    fn add_is_xor_with_identities() {
        let f = Field::new(4).unwrap();
        assert_eq!(f.add(Fe(0xa), Fe(0x3)), Fe(0x9));
        for v in 0..16 {
            let a = Fe(v);
            assert_eq!(f.add(a, a), Fe(0), "self-inverse");
            assert_eq!(f.add(a, Fe(0)), a, "additive identity");
        }
    }

    #[test]
    #[should_panic(expected = "is not an element")]
    fn add_rejects_out_of_range_operand() {
        let f = Field::new(4).unwrap();
        f.add(Fe(0x10), Fe(0x1));
    }

    #[test]
    fn aes_field_inverse_pair() {
        // In GF(2^8) with x^8 + x^4 + x^3 + x + 1, 0x53 * 0xca = 1.
        let f = Field::new(8).unwrap();
        assert_eq!(f.mul(Fe(0x53), Fe(0xca)), Fe(0x01));
        assert_eq!(mul_oracle(&f, Fe(0x53), Fe(0xca)), Fe(0x01));
        assert_eq!(f.inv(Fe(0x53)).unwrap(), Fe(0xca));
    }

    #[test]
    fn mul_identities() {
        let f = Field::new(4).unwrap();
        for v in 0..16 {
            let a = Fe(v);
            assert_eq!(f.mul(a, Fe(1)), a);
            assert_eq!(f.mul(a, Fe(0)), Fe(0));
        }
    }

    #[test]
    fn mul_matches_oracle_exhaustively_gf16() {
        let f = Field::new(4).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(f.mul(Fe(a), Fe(b)), mul_oracle(&f, Fe(a), Fe(b)));
            }
        }
    }

    #[test]
    fn mul_matches_log_tables_gf256() {
        let f = Field::new(8).unwrap();
        let (log, antilog) = log_tables(&f).expect("GF(2^8) has a generator");
        for a in 1..256u32 {
            for b in 1..256u32 {
                let e = (log[a as usize] + log[b as usize]) % 255;
                assert_eq!(f.mul(Fe(a as u16), Fe(b as u16)), antilog[e as usize]);
            }
        }
    }

    #[test]
    fn inverses_exhaustive_gf16() {
        let f = Field::new(4).unwrap();
        assert_eq!(f.inv(Fe(1)).unwrap(), Fe(1));
        assert_eq!(f.inv(Fe(0)), Err(FieldError::ZeroInverse));
        for v in 1..16 {
            let a = Fe(v);
            let ai = f.inv(a).unwrap();
            assert_eq!(f.mul(a, ai), Fe(1));
            assert_eq!(f.inv(ai).unwrap(), a);
        }
    }

    #[test]
    fn distributivity_exhaustive_gf16() {
        let f = Field::new(4).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                for z in 0..16 {
                    let (a, b, z) = (Fe(a), Fe(b), Fe(z));
                    assert_eq!(f.mul(a, f.add(b, z)), f.add(f.mul(a, b), f.mul(a, z)));
                }
            }
        }
    }

    #[test]
    fn frobenius_fixes_every_element_gf16() {
        let f = Field::new(4).unwrap();
        for v in 0..16 {
            assert_eq!(f.pow(Fe(v), f.order() as u64), Fe(v));
        }
    }

    #[test]
    fn division_round_trips_gf16() {
        let f = Field::new(4).unwrap();
        assert_eq!(f.div(Fe(5), Fe(0)), Err(FieldError::ZeroInverse));
        for a in 0..16 {
            for b in 1..16 {
                let q = f.div(Fe(a), Fe(b)).unwrap();
                assert_eq!(f.mul(q, Fe(b)), Fe(a));
            }
        }
    }
}
