//! Arithmetic in GF(2^k) for `k ≤ 16`, Reed–Solomon evaluation codes and the
//! Berlekamp–Welch unique decoder.
//!
//! Elements are `u32` coefficient vectors (bit `j` is the coefficient of
//! `x^j`). The modulus of each field is the smallest irreducible polynomial of
//! degree `k`. Evaluation points are listed as `a_i = i − 1`, so `a_1 = 0`.

use thiserror::Error;

pub type Elem = u32;

pub const MAX_DEGREE: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("extension degree {0} not in 1..=16")]
    Degree(u32),
    #[error("element {0:#x} outside the field")]
    NotInField(u32),
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("word has {found} symbols, code length is {expected}")]
    WordLength { expected: usize, found: usize },
    #[error("degree bound {d} must be below the code length {n}")]
    DegreeBound { d: usize, n: usize },
    #[error("matrix is {rows}x{cols} but right-hand side has {rhs} entries")]
    Dimensions { rows: usize, cols: usize, rhs: usize },
}

/// Carry-less multiplication of two polynomials over GF(2).
pub fn clmul(a: u64, b: u64) -> u64 {
    let mut r = 0;
    let mut b = b;
    let mut a = a;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    r
}

fn deg(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

/// Remainder of `a` modulo `m` over GF(2).
pub fn poly_mod(mut a: u64, m: u64) -> u64 {
    let dm = deg(m);
    while a != 0 && deg(a) >= dm {
        a ^= m << (deg(a) - dm);
    }
    a
}

/// Irreducibility of a GF(2) polynomial by trial division with every
/// polynomial of degree `1..=deg/2`.
pub fn is_irreducible(p: u64) -> bool {
    let d = deg(p);
    if d < 1 {
        return false;
    }
    for q in 2u64..(1u64 << (d / 2 + 1)) {
        if poly_mod(p, q) == 0 {
            return false;
        }
    }
    true
}

/// The smallest irreducible polynomial of degree `k`.
pub fn first_irreducible(k: u32) -> u64 {
    ((1u64 << k)..(1u64 << (k + 1))).find(|&p| is_irreducible(p)).expect("irreducible exists")
}

#[derive(Debug, Clone)]
pub struct Field {
    k: u32,
    modulus: u64,
    exp: Vec<Elem>,
    log: Vec<u32>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.modulus == other.modulus
    }
}

impl Eq for Field {}

impl Field {
    pub fn new(k: u32) -> Result<Field, GfError> {
        if k == 0 || k > MAX_DEGREE {
            return Err(GfError::Degree(k));
        }
        let modulus = first_irreducible(k);
        let order = (1u64 << k) - 1;
        let slow = |a: u64, b: u64| poly_mod(clmul(a, b), modulus);
        let primes = prime_factors(order);
        let gen = (1..=order)
            .find(|&g| {
                primes.iter().all(|&p| {
                    let e = order / p;
                    let mut acc = 1u64;
                    let mut base = g;
                    let mut e = e;
                    while e > 0 {
                        if e & 1 == 1 {
                            acc = slow(acc, base);
                        }
                        base = slow(base, base);
                        e >>= 1;
                    }
                    acc != 1
                })
            })
            .expect("cyclic group has a generator");
        let size = 1usize << k;
        let mut exp = vec![0; 2 * size];
        let mut log = vec![0; size];
        let mut x = 1u64;
        for i in 0..order as usize {
            exp[i] = x as Elem;
            log[x as usize] = i as u32;
            x = slow(x, gen);
        }
        for i in order as usize..2 * size {
            exp[i] = exp[i - order as usize];
        }
        Ok(Field { k, modulus, exp, log })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn size(&self) -> usize {
        1 << self.k
    }

    /// `a_i` for `i` in `1..=N`.
    pub fn point(&self, i: usize) -> Elem {
        debug_assert!(i >= 1 && i <= self.size());
        (i - 1) as Elem
    }

    pub fn elements(&self) -> impl Iterator<Item = Elem> {
        0..self.size() as Elem
    }

    pub fn contains(&self, x: Elem) -> bool {
        (x as usize) < self.size()
    }

    pub fn check(&self, x: Elem) -> Result<Elem, GfError> {
        if self.contains(x) {
            Ok(x)
        } else {
            Err(GfError::NotInField(x))
        }
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, GfError> {
        if a == 0 {
            return Err(GfError::ZeroInverse);
        }
        let order = self.size() as u32 - 1;
        Ok(self.exp[((order - self.log[a as usize]) % order) as usize])
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, e: u64) -> Elem {
        if e == 0 {
            return 1;
        }
        if a == 0 {
            return 0;
        }
        let order = self.size() as u64 - 1;
        let l = (self.log[a as usize] as u64 * (e % order)) % order;
        self.exp[l as usize]
    }

    /// Multiplication without tables, used as a cross-check.
    pub fn mul_slow(&self, a: Elem, b: Elem) -> Elem {
        poly_mod(clmul(a as u64, b as u64), self.modulus) as Elem
    }

    /// The unit-bit element `e_i` (`i` in `1..=k`).
    pub fn unit(&self, i: u32) -> Elem {
        debug_assert!(i >= 1 && i <= self.k);
        1 << (i - 1)
    }

    /// Coefficients are listed from the constant term up.
    pub fn poly_eval(&self, coeffs: &[Elem], x: Elem) -> Elem {
        coeffs.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }

    /// Evaluations `(q(a_1), …, q(a_N))`.
    pub fn rs_encode(&self, coeffs: &[Elem]) -> Vec<Elem> {
        self.elements().map(|x| self.poly_eval(coeffs, x)).collect()
    }

    /// Berlekamp–Welch: corrects up to `⌊(N − d − 1)/2⌋` errors. Returns
    /// `Ok(None)` when no polynomial of degree `≤ d` lies within that radius.
    pub fn rs_decode(&self, word: &[Elem], d: usize) -> Result<Option<Vec<Elem>>, GfError> {
        Ok(self.rs_decode_poly(word, d)?.map(|q| self.rs_encode(&q)))
    }

    /// As [`Field::rs_decode`] but returns the coefficients of the decoded polynomial.
    pub fn rs_decode_poly(&self, word: &[Elem], d: usize) -> Result<Option<Vec<Elem>>, GfError> {
        let n = self.size();
        if word.len() != n {
            return Err(GfError::WordLength { expected: n, found: word.len() });
        }
        if d >= n {
            return Err(GfError::DegreeBound { d, n });
        }
        for &w in word {
            self.check(w)?;
        }
        let e = (n - d - 1) / 2;
        // unknowns: Q_0..Q_{d+e}, E_0..E_{e-1}; E is monic of degree e.
        // Q(a) - b·(E_0 + … + E_{e-1} a^{e-1}) = b·a^e
        let nq = d + e + 1;
        let cols = nq + e;
        let mut a = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for (i, &b) in word.iter().enumerate() {
            let x = self.point(i + 1);
            let mut row = Vec::with_capacity(cols);
            let mut xp = 1;
            for _ in 0..nq {
                row.push(xp);
                xp = self.mul(xp, x);
            }
            let mut xp = 1;
            for _ in 0..e {
                row.push(self.mul(b, xp));
                xp = self.mul(xp, x);
            }
            a.push(row);
            rhs.push(self.mul(b, self.pow(x, e as u64)));
        }
        let sol = match self.solve_linear(&a, &rhs)? {
            Some(s) => s,
            None => return Ok(None),
        };
        let qpoly = &sol[..nq];
        let mut epoly = sol[nq..].to_vec();
        epoly.push(1);
        let (quot, rem) = self.poly_divmod(qpoly, &epoly);
        if rem.iter().any(|&c| c != 0) || poly_degree(&quot) > d as isize {
            return Ok(None);
        }
        let mut q = quot;
        q.resize(d + 1, 0);
        let agree = word.iter().enumerate().filter(|(i, &b)| self.poly_eval(&q, self.point(i + 1)) == b).count();
        if agree + e < n {
            return Ok(None);
        }
        Ok(Some(q))
    }

    /// Polynomial division; coefficients from the constant term up.
    pub fn poly_divmod(&self, num: &[Elem], den: &[Elem]) -> (Vec<Elem>, Vec<Elem>) {
        let dd = poly_degree(den);
        assert!(dd >= 0, "division by the zero polynomial");
        let dd = dd as usize;
        let lead_inv = self.inv(den[dd]).unwrap();
        let mut rem = num.to_vec();
        let nd = poly_degree(&rem);
        if nd < dd as isize {
            return (vec![0], rem);
        }
        let mut quot = vec![0; nd as usize - dd + 1];
        for i in (dd..=nd as usize).rev() {
            let c = rem[i];
            if c == 0 {
                continue;
            }
            let f = self.mul(c, lead_inv);
            quot[i - dd] = f;
            for j in 0..=dd {
                rem[i - dd + j] ^= self.mul(f, den[j]);
            }
        }
        (quot, rem)
    }

    /// Some `x` with `A·x = b` (free variables set to 0), or `None` if inconsistent.
    pub fn solve_linear(&self, a: &[Vec<Elem>], b: &[Elem]) -> Result<Option<Vec<Elem>>, GfError> {
        let rows = a.len();
        let cols = a.first().map_or(0, |r| r.len());
        if b.len() != rows || a.iter().any(|r| r.len() != cols) {
            return Err(GfError::Dimensions { rows, cols, rhs: b.len() });
        }
        let mut m: Vec<Vec<Elem>> = a.iter().zip(b).map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        }).collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            let Some(p) = (r..rows).find(|&i| m[i][c] != 0) else { continue };
            m.swap(r, p);
            let inv = self.inv(m[r][c])?;
            for x in m[r].iter_mut() {
                *x = self.mul(*x, inv);
            }
            for i in 0..rows {
                if i != r && m[i][c] != 0 {
                    let f = m[i][c];
                    for j in c..=cols {
                        let t = self.mul(f, m[r][j]);
                        m[i][j] ^= t;
                    }
                }
            }
            pivots.push(c);
            r += 1;
            if r == rows {
                break;
            }
        }
        if m[r..].iter().any(|row| row[cols] != 0) {
            return Ok(None);
        }
        let mut x = vec![0; cols];
        for (i, &c) in pivots.iter().enumerate() {
            x[c] = m[i][cols];
        }
        Ok(Some(x))
    }
}

/// Degree of a coefficient vector, `-1` for the zero polynomial.
pub fn poly_degree(p: &[Elem]) -> isize {
    p.iter().rposition(|&c| c != 0).map_or(-1, |d| d as isize)
}

/// Inner product over GF(2) of the binary representations.
#[inline]
pub fn inner(a: Elem, b: Elem) -> bool {
    (a & b).count_ones() & 1 == 1
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            out.push(p);
            while n.is_multiple_of(p) {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}
