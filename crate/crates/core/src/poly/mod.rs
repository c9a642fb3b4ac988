//! Polynomials in `R_Q = Z_Q[X]/(X^N + 1)` under RNS: a limb-by-coefficient
//! residue grid tagged with its transform domain, plus the NTT, automorphism,
//! and element-wise operations every upper layer is built from.

pub mod ntt;
mod serial;

use std::sync::Arc;

use thiserror::Error;

use crate::rns::{mod_add, mod_mul, mod_neg, mod_sub, ModulusChain, PrimeModulus};
use ntt::{galois_element, NttTable, SlotExponents};

pub use serial::{deserialize_poly, serialize_poly, SerialError, FORMAT_MAGIC, FORMAT_VERSION};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("operation requires {want:?} domain, got {got:?}")]
    WrongDomain { want: Domain, got: Domain },
    #[error("operands carry different limb sets ({0} vs {1} rows)")]
    LimbMismatch(usize, usize),
    #[error("operands belong to different modulus chains")]
    ChainMismatch,
    #[error("rotation step {step} outside [0, {max})")]
    RotationOutOfRange { step: usize, max: usize },
    #[error("cannot drop the only limb")]
    LastLimb,
    #[error("limb extension overlaps limbs already present")]
    ExtensionOverlap,
    #[error("extension rows malformed: expected {want} rows of length {n}")]
    BadExtensionRows { want: usize, n: usize },
}

/// Which transform domain the residue grid currently lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

/// Shared per-chain context: the chain itself, one NTT table per
/// modulus, and the slot/exponent maps used by evaluation-domain
/// automorphisms. Build once, share via `Arc`.
#[derive(Debug)]
pub struct RingContext {
    pub chain: ModulusChain,
    q_tables: Vec<NttTable>,
    p_tables: Vec<NttTable>,
    exponents: SlotExponents,
}

impl RingContext {
    pub fn new(chain: ModulusChain) -> Arc<Self> {
        let n = chain.ring_degree;
        let q_tables = chain.q_chain.iter().map(|&m| NttTable::new(m, n)).collect();
        let p_tables = chain.p_chain.iter().map(|&m| NttTable::new(m, n)).collect();
        let exponents = SlotExponents::new(n);
        Arc::new(Self {
            chain,
            q_tables,
            p_tables,
            exponents,
        })
    }

    pub fn degree(&self) -> usize {
        self.chain.ring_degree
    }

    pub fn slot_count(&self) -> usize {
        self.chain.ring_degree / 2
    }

    pub fn max_level(&self) -> usize {
        self.chain.max_level()
    }

    fn table(&self, limbs: &LimbSet, row: usize) -> &NttTable {
        if row < limbs.q_count {
            &self.q_tables[row]
        } else {
            &self.p_tables[row - limbs.q_count]
        }
    }

    pub fn modulus_of(&self, limbs: &LimbSet, row: usize) -> &PrimeModulus {
        &self.table(limbs, row).m
    }
}

/// The active moduli of a polynomial: a contiguous prefix of the q-chain,
/// optionally extended by a prefix of the p-chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimbSet {
    pub q_count: usize,
    pub p_count: usize,
}

impl LimbSet {
    pub fn q_only(level: usize) -> Self {
        Self {
            q_count: level + 1,
            p_count: 0,
        }
    }

    pub fn extended(level: usize, k: usize) -> Self {
        Self {
            q_count: level + 1,
            p_count: k,
        }
    }

    pub fn len(&self) -> usize {
        self.q_count + self.p_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level(&self) -> usize {
        self.q_count - 1
    }
}

/// A polynomial in `R_Q` as a `limb x N` residue grid.
#[derive(Debug, Clone)]
pub struct RingPoly {
    ctx: Arc<RingContext>,
    limbs: LimbSet,
    rows: Vec<Vec<u64>>,
    domain: Domain,
}

impl PartialEq for RingPoly {
    fn eq(&self, other: &Self) -> bool {
        self.limbs == other.limbs && self.domain == other.domain && self.rows == other.rows
    }
}

impl RingPoly {
    pub fn zero(ctx: &Arc<RingContext>, limbs: LimbSet, domain: Domain) -> Self {
        let n = ctx.degree();
        Self {
            ctx: Arc::clone(ctx),
            rows: vec![vec![0u64; n]; limbs.len()],
            limbs,
            domain,
        }
    }

    /// Builds a polynomial from signed integer coefficients, reducing
    /// each centered value into every active limb.
    pub fn from_signed_coeffs(
        ctx: &Arc<RingContext>,
        limbs: LimbSet,
        coeffs: &[i128],
        domain: Domain,
    ) -> Self {
        let n = ctx.degree();
        assert_eq!(coeffs.len(), n);
        let mut poly = Self::zero(ctx, limbs, Domain::Coefficient);
        for row in 0..limbs.len() {
            let q = ctx.modulus_of(&limbs, row).q as i128;
            let dst = &mut poly.rows[row];
            for (c, &v) in dst.iter_mut().zip(coeffs) {
                *c = v.rem_euclid(q) as u64;
            }
        }
        if domain == Domain::Evaluation {
            poly.ntt_in_place().expect("fresh poly is in coefficient domain");
        }
        poly
    }

    pub fn random_uniform(
        ctx: &Arc<RingContext>,
        limbs: LimbSet,
        domain: Domain,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let n = ctx.degree();
        let mut poly = Self::zero(ctx, limbs, domain);
        for row in 0..limbs.len() {
            let q = ctx.modulus_of(&limbs, row).q;
            for c in poly.rows[row].iter_mut() {
                *c = rng.gen_range(0..q);
            }
        }
        poly
    }

    pub fn ctx(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn limbs(&self) -> LimbSet {
        self.limbs
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i]
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.rows
    }

    pub fn modulus_of_row(&self, i: usize) -> &PrimeModulus {
        self.ctx.modulus_of(&self.limbs, i)
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|&x| x == 0))
    }

    fn check_compatible(&self, other: &Self) -> Result<(), PolyError> {
        if !Arc::ptr_eq(&self.ctx, &other.ctx) {
            return Err(PolyError::ChainMismatch);
        }
        if self.limbs != other.limbs {
            return Err(PolyError::LimbMismatch(
                self.limbs.len(),
                other.limbs.len(),
            ));
        }
        if self.domain != other.domain {
            return Err(PolyError::WrongDomain {
                want: self.domain,
                got: other.domain,
            });
        }
        Ok(())
    }

    // ---- transforms -------------------------------------------------

    pub fn ntt(&self) -> Result<Self, PolyError> {
        let mut out = self.clone();
        out.ntt_in_place()?;
        Ok(out)
    }

    pub fn intt(&self) -> Result<Self, PolyError> {
        let mut out = self.clone();
        out.intt_in_place()?;
        Ok(out)
    }

    pub fn ntt_in_place(&mut self) -> Result<(), PolyError> {
        if self.domain != Domain::Coefficient {
            return Err(PolyError::WrongDomain {
                want: Domain::Coefficient,
                got: self.domain,
            });
        }
        for row in 0..self.limbs.len() {
            let table = self.ctx.table(&self.limbs, row);
            table.forward(&mut self.rows[row]);
        }
        self.domain = Domain::Evaluation;
        Ok(())
    }

    pub fn intt_in_place(&mut self) -> Result<(), PolyError> {
        if self.domain != Domain::Evaluation {
            return Err(PolyError::WrongDomain {
                want: Domain::Evaluation,
                got: self.domain,
            });
        }
        for row in 0..self.limbs.len() {
            let table = self.ctx.table(&self.limbs, row);
            table.inverse(&mut self.rows[row]);
        }
        self.domain = Domain::Coefficient;
        Ok(())
    }

    // ---- automorphism -----------------------------------------------

    /// Applies the Galois map `X -> X^(5^r mod 2N)`. In the coefficient
    /// domain this permutes coefficients with sign flips; in the
    /// evaluation domain it permutes evaluation slots. The two agree
    /// through the NTT.
    pub fn automorph(&self, r: usize) -> Result<Self, PolyError> {
        let n = self.ctx.degree();
        if r >= n / 2 {
            return Err(PolyError::RotationOutOfRange { step: r, max: n / 2 });
        }
        let g = galois_element(r, n);
        let mut out = Self::zero(&self.ctx, self.limbs, self.domain);
        match self.domain {
            Domain::Coefficient => {
                let two_n = 2 * n;
                for (row, src) in self.rows.iter().enumerate() {
                    let q = self.ctx.modulus_of(&self.limbs, row).q;
                    let dst = &mut out.rows[row];
                    for (i, &v) in src.iter().enumerate() {
                        let j = i * g % two_n;
                        if j < n {
                            dst[j] = v;
                        } else {
                            dst[j - n] = mod_neg(v, q);
                        }
                    }
                }
            }
            Domain::Evaluation => {
                let exps = &self.ctx.exponents;
                let two_n = 2 * n;
                // slot i of the output takes the input slot evaluating
                // at exponent e(i) * g
                let mut src_slot = vec![0usize; n];
                for (i, s) in src_slot.iter_mut().enumerate() {
                    let e = exps.exp_of_slot[i] * g % two_n;
                    *s = exps.slot_of_exp[e];
                }
                for (row, src) in self.rows.iter().enumerate() {
                    let dst = &mut out.rows[row];
                    for (i, &s) in src_slot.iter().enumerate() {
                        dst[i] = src[s];
                    }
                }
            }
        }
        Ok(out)
    }

    // ---- element-wise arithmetic -------------------------------------

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), PolyError> {
        self.check_compatible(other)?;
        for row in 0..self.limbs.len() {
            let q = self.ctx.modulus_of(&self.limbs, row).q;
            for (a, &b) in self.rows[row].iter_mut().zip(&other.rows[row]) {
                *a = mod_add(*a, b, q);
            }
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for row in 0..out.limbs.len() {
            let q = out.ctx.modulus_of(&out.limbs, row).q;
            for (a, &b) in out.rows[row].iter_mut().zip(&other.rows[row]) {
                *a = mod_sub(*a, b, q);
            }
        }
        Ok(out)
    }

    /// Element-wise product; both operands must be in the evaluation
    /// domain.
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self, PolyError> {
        if self.domain != Domain::Evaluation {
            return Err(PolyError::WrongDomain {
                want: Domain::Evaluation,
                got: self.domain,
            });
        }
        self.check_compatible(other)?;
        let mut out = self.clone();
        for row in 0..out.limbs.len() {
            let m = *out.ctx.modulus_of(&out.limbs, row);
            for (a, &b) in out.rows[row].iter_mut().zip(&other.rows[row]) {
                *a = mod_mul(*a, b, &m);
            }
        }
        Ok(out)
    }

    /// `self += a ⊙ b`, the fused multiply-accumulate used by diagonal
    /// inner products.
    pub fn mul_acc(&mut self, a: &Self, b: &Self) -> Result<(), PolyError> {
        if self.domain != Domain::Evaluation {
            return Err(PolyError::WrongDomain {
                want: Domain::Evaluation,
                got: self.domain,
            });
        }
        self.check_compatible(a)?;
        self.check_compatible(b)?;
        for row in 0..self.limbs.len() {
            let m = *self.ctx.modulus_of(&self.limbs, row);
            let (acc, lhs, rhs) = (
                &mut self.rows[row],
                &a.rows[row],
                &b.rows[row],
            );
            for i in 0..acc.len() {
                acc[i] = mod_add(acc[i], mod_mul(lhs[i], rhs[i], &m), m.q);
            }
        }
        Ok(())
    }

    /// Multiplies every limb by a scalar (reduced per limb modulus).
    pub fn scalar_mul(&self, c: u64) -> Self {
        let mut out = self.clone();
        for row in 0..out.limbs.len() {
            let m = *out.ctx.modulus_of(&out.limbs, row);
            let cr = c % m.q;
            for a in out.rows[row].iter_mut() {
                *a = mod_mul(*a, cr, &m);
            }
        }
        out
    }

    /// Multiplies limb `i` by `consts[i]`; used to fold constants such
    /// as `[P]_{q_i}` into a polynomial in one pass.
    pub fn scale_by_limb_constants(&self, consts: &[u64]) -> Self {
        assert_eq!(consts.len(), self.limbs.len());
        let mut out = self.clone();
        for row in 0..out.limbs.len() {
            let m = *out.ctx.modulus_of(&out.limbs, row);
            for a in out.rows[row].iter_mut() {
                *a = mod_mul(*a, consts[row] % m.q, &m);
            }
        }
        out
    }

    pub fn negate(&self) -> Self {
        let mut out = self.clone();
        for row in 0..out.limbs.len() {
            let q = out.ctx.modulus_of(&out.limbs, row).q;
            for a in out.rows[row].iter_mut() {
                *a = mod_neg(*a, q);
            }
        }
        out
    }

    // ---- limb-set edits ----------------------------------------------

    /// Removes the last active limb (structural; residues of the other
    /// limbs are untouched).
    pub fn drop_last_limb(&self) -> Result<Self, PolyError> {
        if self.limbs.len() <= 1 {
            return Err(PolyError::LastLimb);
        }
        let mut out = self.clone();
        out.rows.pop();
        if out.limbs.p_count > 0 {
            out.limbs.p_count -= 1;
        } else {
            out.limbs.q_count -= 1;
        }
        Ok(out)
    }

    /// Drops all p-extension limbs at once.
    pub fn drop_p_limbs(&self) -> Self {
        let mut out = self.clone();
        out.rows.truncate(out.limbs.q_count);
        out.limbs.p_count = 0;
        out
    }

    /// Appends `rows` as the next `rows.len()` p-limbs.
    pub fn extend_limbs(&self, rows: Vec<Vec<u64>>) -> Result<Self, PolyError> {
        let count = rows.len();
        let k = self.ctx.chain.p_chain.len();
        if self.limbs.p_count + count > k {
            return Err(PolyError::ExtensionOverlap);
        }
        let n = self.ctx.degree();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PolyError::BadExtensionRows { want: count, n });
        }
        let mut out = self.clone();
        out.rows.extend(rows);
        out.limbs.p_count += count;
        Ok(out)
    }

    /// Clones the polynomial restricted to the first `level + 1` q-limbs
    /// (keeping any p-limbs). Used to match evaluation keys to the
    /// operand level.
    pub fn restrict_q_limbs(&self, level: usize) -> Self {
        assert!(level + 1 <= self.limbs.q_count);
        let mut rows = Vec::with_capacity(level + 1 + self.limbs.p_count);
        rows.extend_from_slice(&self.rows[..level + 1]);
        rows.extend_from_slice(&self.rows[self.limbs.q_count..]);
        Self {
            ctx: Arc::clone(&self.ctx),
            limbs: LimbSet {
                q_count: level + 1,
                p_count: self.limbs.p_count,
            },
            rows,
            domain: self.domain,
        }
    }
}
