//! Reed-Solomon coding over GF(2^c) in evaluation form.
//!
//! A `CodeSpec` fixes an (n, k) code: the data block is read as the
//! coefficients of a polynomial of degree < k, and codeword position j holds
//! the evaluation at the j-th nonzero field element. Any k positions of a
//! codeword determine the data, two distinct codewords differ in at least
//! n - k + 1 positions, and a partial view of a codeword can be tested for
//! membership without decoding errors — the protocol built on top only ever
//! detects corruption, it never corrects it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Fe, Field};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeError {
    #[error("code parameters out of range: need 1 <= k < n <= 2^c - 1, got n={n}, k={k}, c={c}")]
    InvalidParameters { n: usize, k: usize, c: u32 },
    #[error("{got} known symbols cannot determine a dimension-{needed} code")]
    InsufficientSymbols { got: usize, needed: usize },
    #[error("known symbols are not consistent with any codeword")]
    Inconsistent,
}

/// An (n, k) Reed-Solomon code over a binary field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpec {
    n: usize,
    k: usize,
    field: Field,
    /// Evaluation point for each codeword position: the j-th nonzero element
    /// in natural integer order.
    points: Vec<Fe>,
}

/// A block of k data symbols (polynomial coefficients, ascending degree).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBlock(pub Vec<Fe>);

/// A full codeword of n symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codeword(pub Vec<Fe>);

/// An n-slot view of a codeword where some symbols may be unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialView(pub Vec<Option<Fe>>);

impl PartialView {
    pub fn unknown(n: usize) -> Self {
        PartialView(vec![None; n])
    }

    pub fn from_codeword(cw: &Codeword) -> Self {
        PartialView(cw.0.iter().copied().map(Some).collect())
    }

    pub fn known_count(&self) -> usize {
        self.0.iter().filter(|s| s.is_some()).count()
    }

    /// Known (position, symbol) pairs in ascending position order.
    pub fn known(&self) -> impl Iterator<Item = (usize, Fe)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|v| (i, v)))
    }
}

impl CodeSpec {
    pub fn new(field: Field, n: usize, k: usize) -> Result<Self, CodeError> {
        if k < 1 || k >= n || n > field.order() as usize - 1 {
            return Err(CodeError::InvalidParameters { n, k, c: field.width() });
        }
        let points = (1..=n).map(|v| Fe(v as u16)).collect();
        Ok(CodeSpec { n, k, field, points })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Evaluates the data polynomial at every evaluation point.
    pub fn encode(&self, data: &DataBlock) -> Codeword {
        assert_eq!(data.0.len(), self.k, "data block must have exactly k symbols");
        let symbols = self
            .points
            .iter()
            .map(|&alpha| self.eval(&data.0, alpha))
            .collect();
        Codeword(symbols)
    }

    /// Horner evaluation of a coefficient-ascending polynomial.
    fn eval(&self, coeffs: &[Fe], x: Fe) -> Fe {
        let f = &self.field;
        let mut acc = Fe(0);
        for &c in coeffs.iter().rev() {
            acc = f.add(f.mul(acc, x), c);
        }
        acc
    }

    /// Recovers the unique data block consistent with every known slot of the
    /// view. Decoding interpolates through the k known slots with the lowest
    /// positions and then checks the remaining known slots against the
    /// resulting polynomial.
    pub fn erasure_decode(&self, view: &PartialView) -> Result<DataBlock, CodeError> {
        assert_eq!(view.0.len(), self.n, "view must have exactly n slots");
        let known: Vec<(usize, Fe)> = view.known().collect();
        if known.len() < self.k {
            return Err(CodeError::InsufficientSymbols { got: known.len(), needed: self.k });
        }
        let coeffs = self.interpolate(&known[..self.k]);
        for &(pos, sym) in &known[self.k..] {
            if self.eval(&coeffs, self.points[pos]) != sym {
                return Err(CodeError::Inconsistent);
            }
        }
        Ok(DataBlock(coeffs))
    }

    /// Whether some codeword agrees with every known slot. A view with at
    /// most k known slots is always consistent (underdetermined).
    pub fn is_consistent(&self, view: &PartialView) -> bool {
        assert_eq!(view.0.len(), self.n, "view must have exactly n slots");
        if view.known_count() <= self.k {
            return true;
        }
        self.erasure_decode(view).is_ok()
    }

    /// The unique full codeword agreeing with the view.
    pub fn reconstruct(&self, view: &PartialView) -> Result<Codeword, CodeError> {
        Ok(self.encode(&self.erasure_decode(view)?))
    }

    /// Lagrange interpolation through exactly k points, returning polynomial
    /// coefficients in ascending degree order.
    fn interpolate(&self, pts: &[(usize, Fe)]) -> Vec<Fe> {
        let f = &self.field;
        let k = pts.len();
        debug_assert_eq!(k, self.k);

        // master(x) = prod over points (x + x_j), coefficient-ascending
        let mut master = vec![Fe(0); k + 1];
        master[0] = Fe(1);
        for (deg, &(pos, _)) in pts.iter().enumerate() {
            let xj = self.points[pos];
            // multiply master (degree `deg`) by (x + xj)
            for i in (0..=deg + 1).rev() {
                let shifted = if i > 0 { master[i - 1] } else { Fe(0) };
                master[i] = f.add(shifted, f.mul(master[i], xj));
            }
        }

        let mut coeffs = vec![Fe(0); k];
        let mut basis = vec![Fe(0); k];
        for &(pos, y) in pts {
            let xi = self.points[pos];
            // basis(x) = master(x) / (x + xi) by synthetic division
            let mut carry = master[k];
            for d in (0..k).rev() {
                basis[d] = carry;
                carry = f.add(master[d], f.mul(carry, xi));
            }
            debug_assert_eq!(carry, Fe(0), "xi must be a root of master");
            let denom = self.eval(&basis, xi);
            let scale = f
                .mul(y, f.inv(denom).expect("evaluation points are distinct"));
            for d in 0..k {
                coeffs[d] = f.add(coeffs[d], f.mul(scale, basis[d]));
            }
        }
        coeffs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    fn small_code() -> CodeSpec {
        CodeSpec::new(Field::new(4).unwrap(), 7, 3).unwrap()
    }

    /// Independent encoding oracle: power-sum evaluation using pow() instead
    /// of Horner.
    fn encode_oracle(code: &CodeSpec, data: &[Fe]) -> Vec<Fe> {
        let f = code.field();
        (1..=code.n() as u64)
            .map(|x| {
                let alpha = Fe(x as u16);
                let mut acc = Fe(0);
                for (s, &d) in data.iter().enumerate() {
                    acc = f.add(acc, f.mul(d, f.pow(alpha, s as u64)));
                }
                acc
            })
            .collect()
    }

    /// Brute-force consistency oracle: scan every possible data block.
    fn consistent_oracle(code: &CodeSpec, view: &PartialView) -> bool {
        let order = code.field().order() as u64;
        let total = order.pow(code.k() as u32);
        (0..total).any(|mut idx| {
            let mut data = Vec::with_capacity(code.k());
            for _ in 0..code.k() {
                data.push(Fe((idx % order) as u16));
                idx /= order;
            }
            let cw = code.encode(&DataBlock(data));
            view.known().all(|(pos, sym)| cw.0[pos] == sym)
        })
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = Field::new(4).unwrap();
        assert!(CodeSpec::new(f, 16, 3).is_err()); // n > 2^c - 1
        assert!(CodeSpec::new(f, 7, 7).is_err());
        assert!(CodeSpec::new(f, 7, 0).is_err());
    }

    #[test]
    fn degree_zero_polynomial_extends_constant() {
        let code = CodeSpec::new(Field::new(4).unwrap(), 7, 1).unwrap();
        let cw = code.encode(&DataBlock(vec![Fe(0xb)]));
        assert_eq!(cw.0, vec![Fe(0xb); 7]);
    }

    #[test]
    fn zero_data_encodes_to_zero_codeword() {
        let code = small_code();
        let cw = code.encode(&DataBlock(vec![Fe(0); 3]));
        assert_eq!(cw.0, vec![Fe(0); 7]);
    }

    #[test]
    fn encode_matches_frozen_vector_and_oracle() {
        // Computed with the power-sum oracle for data (1, 2, 3) in GF(2^4).
        let code = small_code();
        let data = vec![Fe(1), Fe(2), Fe(3)];
        let cw = code.encode(&DataBlock(data.clone()));
        let frozen = [0x0, 0x9, 0x8, 0xc, 0xd, 0x4, 0x5].map(Fe);
        assert_eq!(cw.0, frozen);
        assert_eq!(encode_oracle(&code, &data), frozen);
    }

    #[test]
    #[should_panic(expected = "exactly k symbols")]
    fn encode_rejects_wrong_length() {
        small_code().encode(&DataBlock(vec![Fe(1); 4]));
    }

    #[test]
    fn full_view_round_trips() {
        let code = small_code();
        let data = DataBlock(vec![Fe(7), Fe(0), Fe(9)]);
        let cw = code.encode(&data);
        assert_eq!(code.erasure_decode(&PartialView::from_codeword(&cw)).unwrap(), data);
        assert_eq!(code.reconstruct(&PartialView::from_codeword(&cw)).unwrap(), cw);
    }

    #[test]
    fn every_k_subset_recovers_the_data() {
        let code = small_code();
        let data = DataBlock(vec![Fe(0xe), Fe(0x2), Fe(0xb)]);
        let cw = code.encode(&data);
        for subset in (0..7).combinations(3) {
            let mut view = PartialView::unknown(7);
            for pos in subset {
                view.0[pos] = Some(cw.0[pos]);
            }
            assert_eq!(code.erasure_decode(&view).unwrap(), data);
        }
    }

    #[test]
    fn underdetermined_view_is_an_error_for_decode_but_consistent() {
        let code = small_code();
        let cw = code.encode(&DataBlock(vec![Fe(1), Fe(2), Fe(3)]));
        let mut view = PartialView::unknown(7);
        view.0[1] = Some(cw.0[1]);
        view.0[4] = Some(cw.0[4]);
        assert_eq!(
            code.erasure_decode(&view),
            Err(CodeError::InsufficientSymbols { got: 2, needed: 3 })
        );
        assert!(code.is_consistent(&view));
        assert!(code.is_consistent(&PartialView::unknown(7)));
    }

    #[test]
    fn corrupted_slot_is_detected() {
        let code = small_code();
        let cw = code.encode(&DataBlock(vec![Fe(1), Fe(2), Fe(3)]));
        // 5 known slots, one of them corrupted
        let mut view = PartialView::unknown(7);
        for pos in [0, 2, 3, 5, 6] {
            view.0[pos] = Some(cw.0[pos]);
        }
        view.0[3] = Some(Fe(cw.0[3].0 ^ 1));
        assert!(!code.is_consistent(&view));
        assert!(!consistent_oracle(&code, &view));
        assert_eq!(code.erasure_decode(&view), Err(CodeError::Inconsistent));
        assert_eq!(code.reconstruct(&view), Err(CodeError::Inconsistent));
    }

    #[test]
    fn consistency_matches_brute_force_oracle_on_samples() {
        let code = small_code();
        let cw = code.encode(&DataBlock(vec![Fe(4), Fe(0xf), Fe(2)]));
        // A deterministic spread of views: every 4-subset of positions, taken
        // verbatim and with the first slot corrupted.
        for subset in (0..7).combinations(4) {
            let mut view = PartialView::unknown(7);
            for &pos in &subset {
                view.0[pos] = Some(cw.0[pos]);
            }
            assert!(code.is_consistent(&view));
            assert!(consistent_oracle(&code, &view));
            view.0[subset[0]] = Some(Fe(cw.0[subset[0]].0 ^ 0x9));
            assert_eq!(code.is_consistent(&view), consistent_oracle(&code, &view));
        }
    }

    #[test]
    fn erase_up_to_n_minus_k_and_reconstruct() {
        let code = small_code();
        let cw = code.encode(&DataBlock(vec![Fe(9), Fe(9), Fe(1)]));
        let mut view = PartialView::from_codeword(&cw);
        view.0[0] = None;
        view.0[3] = None;
        view.0[4] = None;
        view.0[6] = None;
        assert_eq!(code.reconstruct(&view).unwrap(), cw);
    }

    #[test]
    fn encoding_is_linear() {
        let code = small_code();
        let f = *code.field();
        for a in 0..64u16 {
            // a sparse but varied sample of data-block pairs
            let d1 = DataBlock(vec![Fe(a % 16), Fe(a / 16), Fe(5)]);
            let d2 = DataBlock(vec![Fe(3), Fe((a * 7) % 16), Fe((a * 11) % 16)]);
            let sum = DataBlock(
                d1.0.iter()
                    .zip(&d2.0)
                    .map(|(&x, &y)| f.add(x, y))
                    .collect(),
            );
            let cw1 = code.encode(&d1);
            let cw2 = code.encode(&d2);
            let cws = code.encode(&sum);
            for j in 0..7 {
                assert_eq!(cws.0[j], f.add(cw1.0[j], cw2.0[j]));
            }
        }
    }
}
