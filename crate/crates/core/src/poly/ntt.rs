//! Iterative radix-2 negacyclic NTT with precomputed bit-reversed
//! twiddle tables, one table per (prime, ring degree) pair.
//!
//! The forward transform evaluates a polynomial at the odd powers of the
//! 2N-th root `psi`; slot `i` of the output holds the evaluation at
//! exponent `2*bitrev(i) + 1`. That ordering is shared with the complex
//! encoder FFT so slot permutations (automorphisms) are computed once.

use crate::rns::{mod_add, mod_inv, mod_mul, mod_pow, mod_sub, PrimeModulus};

pub(crate) fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

#[derive(Debug, Clone)]
pub struct NttTable {
    pub m: PrimeModulus,
    /// psi^bitrev(i) for the Cooley-Tukey forward pass.
    psi_rev: Vec<u64>,
    /// psi^-bitrev(i) for the Gentleman-Sande inverse pass.
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
    n: usize,
}

impl NttTable {
    pub fn new(m: PrimeModulus, n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let psi = m.two_n_root;
        let psi_inv = mod_inv(psi, &m);
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let mut fwd = 1u64;
        let mut inv = 1u64;
        let mut pow_fwd = vec![0u64; n];
        let mut pow_inv = vec![0u64; n];
        for i in 0..n {
            pow_fwd[i] = fwd;
            pow_inv[i] = inv;
            fwd = mod_mul(fwd, psi, &m);
            inv = mod_mul(inv, psi_inv, &m);
        }
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[i] = pow_fwd[r];
            psi_inv_rev[i] = pow_inv[r];
        }
        let n_inv = mod_inv(n as u64, &m);
        Self {
            m,
            psi_rev,
            psi_inv_rev,
            n_inv,
            n,
        }
    }

    /// In-place forward negacyclic transform (coefficients -> evaluations).
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.m.q;
        let mut t = self.n;
        let mut m_len = 1;
        while m_len < self.n {
            t >>= 1;
            for i in 0..m_len {
                let s = self.psi_rev[m_len + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mod_mul(a[j + t], s, &self.m);
                    a[j] = mod_add(u, v, q);
                    a[j + t] = mod_sub(u, v, q);
                }
            }
            m_len <<= 1;
        }
    }

    /// In-place inverse transform (evaluations -> coefficients).
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.m.q;
        let mut t = 1;
        let mut m_len = self.n;
        while m_len > 1 {
            let h = m_len >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = mod_add(u, v, q);
                    a[j + t] = mod_mul(mod_sub(u, v, q), s, &self.m);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m_len = h;
        }
        for x in a.iter_mut() {
            *x = mod_mul(*x, self.n_inv, &self.m);
        }
    }
}

/// Odd-exponent bookkeeping for one ring degree: which power of psi each
/// evaluation slot holds, and the inverse lookup.
#[derive(Debug, Clone)]
pub struct SlotExponents {
    /// exponent (odd, mod 2N) evaluated at transform slot i
    pub exp_of_slot: Vec<usize>,
    /// slot holding a given odd exponent; 2N entries, even ones unused
    pub slot_of_exp: Vec<usize>,
}

impl SlotExponents {
    pub fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let mut exp_of_slot = vec![0usize; n];
        let mut slot_of_exp = vec![usize::MAX; 2 * n];
        for (i, e) in exp_of_slot.iter_mut().enumerate() {
            *e = 2 * bit_reverse(i, bits) + 1;
            slot_of_exp[*e] = i;
        }
        Self {
            exp_of_slot,
            slot_of_exp,
        }
    }
}

/// Galois element for a left rotation by `r` slots: `5^r mod 2N`.
pub fn galois_element(r: usize, n: usize) -> usize {
    let two_n = 2 * n;
    let mut g = 1usize;
    let mut base = 5usize % two_n;
    let mut e = r;
    while e > 0 {
        if e & 1 == 1 {
            g = g * base % two_n;
        }
        base = base * base % two_n;
        e >>= 1;
    }
    g
}
