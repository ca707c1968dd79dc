//! Dense and sparse truth tables over packed bit-strings.

use crate::bits;
use serde::{Deserialize, Serialize};

/// Function `{0,1}^n_in → {0,1}^n_out` (`n_out ≤ 64`), rows packed back to back.
#[derive(Clone, PartialEq, Eq)]
pub struct TruthTable {
    n_in: usize,
    n_out: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for TruthTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TruthTable({} -> {})", self.n_in, self.n_out)
    }
}

impl TruthTable {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        assert!((1..=64).contains(&n_out), "output width must be in 1..=64");
        assert!(n_in <= 40, "table input width too large");
        let total = (1u128 << n_in) * n_out as u128;
        let words = total.div_ceil(64) as usize;
        TruthTable { n_in, n_out, words: vec![0; words.max(1)] }
    }

    pub fn from_fn(n_in: usize, n_out: usize, mut f: impl FnMut(u64) -> u64) -> Self {
        let mut t = TruthTable::zeros(n_in, n_out);
        for x in 0..(1u64 << n_in) {
            t.set(x, f(x));
        }
        t
    }

    /// One-bit table from row values.
    pub fn from_bits(n_in: usize, rows: &[bool]) -> Self {
        assert_eq!(rows.len(), 1 << n_in);
        TruthTable::from_fn(n_in, 1, |x| rows[x as usize] as u64)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn rows(&self) -> u64 {
        1u64 << self.n_in
    }

    #[inline]
    pub fn get(&self, x: u64) -> u64 {
        let w = self.n_out;
        if w == 1 {
            return (self.words[(x >> 6) as usize] >> (x & 63)) & 1;
        }
        let start = x as u128 * w as u128;
        let word = (start >> 6) as usize;
        let off = (start & 63) as u32;
        let lo = self.words[word] >> off;
        let v = if off as usize + w > 64 { lo | (self.words[word + 1] << (64 - off)) } else { lo };
        v & bits::mask(w)
    }

    #[inline]
    pub fn bit(&self, x: u64) -> bool {
        self.get(x) & 1 == 1
    }

    pub fn set(&mut self, x: u64, v: u64) {
        let w = self.n_out;
        let v = v & bits::mask(w);
        let start = x as u128 * w as u128;
        let word = (start >> 6) as usize;
        let off = (start & 63) as u32;
        let m = bits::mask(w);
        self.words[word] &= !(m << off);
        self.words[word] |= v << off;
        if off as usize + w > 64 {
            let spill = 64 - off;
            self.words[word + 1] &= !(m >> spill);
            self.words[word + 1] |= v >> spill;
        }
    }

    pub fn count_ones_bit0(&self) -> u64 {
        (0..self.rows()).filter(|&x| self.get(x) & 1 == 1).count() as u64
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 16);
        for w in &self.words {
            s.push_str(&format!("{w:016x}"));
        }
        s
    }

    pub fn from_hex(n_in: usize, n_out: usize, hex: &str) -> Option<Self> {
        let mut t = TruthTable::zeros(n_in, n_out);
        if hex.len() != t.words.len() * 16 {
            return None;
        }
        for (i, w) in t.words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&hex[16 * i..16 * i + 16], 16).ok()?;
        }
        Some(t)
    }
}

/// Explicitly listed rows with a default for every other input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseTable {
    pub n_in: usize,
    pub n_out: usize,
    keys: Vec<u64>,
    vals: Vec<u64>,
    pub default: u64,
}

impl SparseTable {
    /// Later duplicates of a key are dropped.
    pub fn new(n_in: usize, n_out: usize, mut rows: Vec<(u64, u64)>, default: u64) -> Self {
        rows.sort_by_key(|r| r.0);
        rows.dedup_by_key(|r| r.0);
        let (keys, vals) = rows.into_iter().unzip();
        SparseTable { n_in, n_out, keys, vals, default }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u64) -> u64 {
        match self.keys.binary_search(&x) {
            Ok(i) => self.vals[i],
            Err(_) => self.default,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_bit_rows_straddle_words() {
        let t = TruthTable::from_fn(5, 7, |x| (x * 37) & 0x7f);
        for x in 0..32 {
            assert_eq!(t.get(x), (x * 37) & 0x7f);
        }
        let h = t.to_hex();
        assert_eq!(TruthTable::from_hex(5, 7, &h).unwrap(), t);
    }

    #[test]
    fn sparse_default() {
        let s = SparseTable::new(4, 1, vec![(3, 1), (9, 1)], 0);
        assert_eq!(s.get(3), 1);
        assert_eq!(s.get(4), 0);
    }
}
