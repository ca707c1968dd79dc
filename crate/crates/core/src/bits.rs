//! Packed bit-strings.
//!
//! A string `x_1 … x_L` of length `L ≤ 64` is stored in a `u64` with `x_1` in
//! the most significant used position, so integer order is lexicographic order.

/// Bit `j` (0-based) of a packed string of length `len`.
#[inline]
pub fn get(x: u64, len: usize, j: usize) -> bool {
    debug_assert!(j < len && len <= 64);
    (x >> (len - 1 - j)) & 1 == 1
}

/// Sets bit `j` of a packed string of length `len`.
#[inline]
pub fn set(x: u64, len: usize, j: usize, b: bool) -> u64 {
    let mask = 1u64 << (len - 1 - j);
    if b {
        x | mask
    } else {
        x & !mask
    }
}

#[inline]
pub fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Number of strings of length `len`, or `None` beyond `2^63`.
pub fn count(len: usize) -> Option<u64> {
    if len < 64 {
        Some(1u64 << len)
    } else {
        None
    }
}

pub fn unpack(x: u64, len: usize) -> Vec<bool> {
    (0..len).map(|j| get(x, len, j)).collect()
}

pub fn unpack_into(x: u64, out: &mut [bool]) {
    let len = out.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = get(x, len, j);
    }
}

pub fn pack(bits: &[bool]) -> u64 {
    assert!(bits.len() <= 64, "bit-string longer than 64");
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// Collects the bits at `positions` into a packed string, first position first.
#[inline]
pub fn gather(x: u64, len: usize, positions: &[usize]) -> u64 {
    let mut out = 0u64;
    for &p in positions {
        out = (out << 1) | ((x >> (len - 1 - p)) & 1);
    }
    out
}

/// Concatenates `hi` (length `hi_len` implied by shifting) and `lo` of length `lo_len`.
#[inline]
pub fn concat(hi: u64, lo: u64, lo_len: usize) -> u64 {
    if lo_len >= 64 {
        lo
    } else {
        (hi << lo_len) | (lo & mask(lo_len))
    }
}

/// Prefix of length `k` of a packed string of length `len`.
#[inline]
pub fn prefix(x: u64, len: usize, k: usize) -> u64 {
    if k == 0 {
        0
    } else {
        x >> (len - k)
    }
}

pub fn to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}
