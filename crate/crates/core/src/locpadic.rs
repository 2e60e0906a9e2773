//! Cartan decomposition of `PGL_n(Q_p)` through the Smith normal form, local
//! heights, and local height integrals as cell sums over `S(Q_p)^+`.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::picard::SVector;
use crate::qcounts::{bruhat_constant, stratum_ratio, support};
use crate::rootsys::RootDatum;

/// `a_i = e_i - e_{i+1}` for the normalized elementary-divisor exponents
/// `e_1 >= ... >= e_n = 0` at the prime `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CartanExponents {
    pub a: Vec<i64>,
    pub p: u64,
}

impl CartanExponents {
    pub fn new(a: Vec<i64>, p: u64) -> Result<Self> {
        if a.iter().any(|&x| x < 0) {
            return invalid(format!("Cartan exponents must be nonnegative, got {a:?}"));
        }
        check_prime(p)?;
        Ok(CartanExponents { a, p })
    }

    /// Builds from descending exponents, shifting so the last one is 0.
    pub fn from_elementary(e: &[i64], p: u64) -> Result<Self> {
        if e.is_empty() {
            return invalid("need at least one exponent");
        }
        if e.windows(2).any(|w| w[0] < w[1]) {
            return invalid(format!("exponents {e:?} are not descending"));
        }
        CartanExponents::new(e.windows(2).map(|w| w[0] - w[1]).collect(), p)
    }

    /// Reconstructs `e` with `e_n = 0`.
    pub fn elementary(&self) -> Vec<i64> {
        let mut e = vec![0; self.a.len() + 1];
        for i in (0..self.a.len()).rev() {
            e[i] = e[i + 1] + self.a[i];
        }
        e
    }

    pub fn is_trivial(&self) -> bool {
        self.a.iter().all(|&x| x == 0)
    }
}

/// A point of `PGL_n(Q)`: an integer matrix with coprime entries, nonzero
/// determinant, and first nonzero entry positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrimitiveMatrix {
    n: usize,
    entries: Vec<BigInt>,
}

impl PrimitiveMatrix {
    /// Validates without normalizing.
    pub fn new(n: usize, entries: Vec<BigInt>) -> Result<Self> {
        check_shape(n, &entries)?;
        if entry_gcd(&entries) != BigInt::one() {
            return invalid("entries are not coprime");
        }
        if entries.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) {
            return invalid("first nonzero entry must be positive");
        }
        if determinant(n, &entries).is_zero() {
            return Err(Error::Singular);
        }
        Ok(PrimitiveMatrix { n, entries })
    }

    /// Divides out the content and fixes the sign.
    pub fn primitivize(n: usize, mut entries: Vec<BigInt>) -> Result<Self> {
        check_shape(n, &entries)?;
        if determinant(n, &entries).is_zero() {
            return Err(Error::Singular);
        }
        let g = entry_gcd(&entries);
        let negate = entries.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative());
        for x in entries.iter_mut() {
            *x = &*x / &g;
            if negate {
                *x = -&*x;
            }
        }
        Ok(PrimitiveMatrix { n, entries })
    }

    pub fn from_i64(n: usize, entries: &[i64]) -> Result<Self> {
        PrimitiveMatrix::new(n, entries.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn determinant(&self) -> BigInt {
        determinant(self.n, &self.entries)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

fn check_shape(n: usize, entries: &[BigInt]) -> Result<()> {
    if n == 0 || entries.len() != n * n {
        return invalid(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, entries.len()));
    }
    Ok(())
}

fn check_prime(p: u64) -> Result<()> {
    if !crate::primes::is_prime(p) {
        return invalid(format!("{p} is not prime"));
    }
    Ok(())
}

fn entry_gcd(entries: &[BigInt]) -> BigInt {
    entries.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

/// Fraction-free Gaussian elimination (Bareiss).
pub fn determinant(n: usize, entries: &[BigInt]) -> BigInt {
    let mut m: Vec<Vec<BigInt>> = entries.chunks(n).map(|r| r.to_vec()).collect();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        let Some(piv) = (k..n).find(|&i| !m[i][k].is_zero()) else {
            return BigInt::zero();
        };
        if piv != k {
            m.swap(piv, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

/// Invariant factors `d_1 | d_2 | ... | d_n` (nonnegative) of an integer
/// matrix, by row and column reduction.
pub fn smith_diagonal(n: usize, entries: &[BigInt]) -> Result<Vec<BigInt>> {
    check_shape(n, entries)?;
    let mut m: Vec<Vec<BigInt>> = entries.chunks(n).map(|r| r.to_vec()).collect();
    for t in 0..n {
        // Smallest nonzero entry of the trailing block as pivot.
        let pivot = (t..n)
            .flat_map(|i| (t..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !m[i][j].is_zero())
            .min_by(|&(a, b), &(c, d)| m[a][b].abs().cmp(&m[c][d].abs()));
        let Some((pi, pj)) = pivot else {
            break;
        };
        m.swap(t, pi);
        for row in m.iter_mut() {
            row.swap(t, pj);
        }
        loop {
            let mut changed = false;
            for i in t + 1..n {
                if m[i][t].is_zero() {
                    continue;
                }
                let q = m[i][t].div_floor(&m[t][t]);
                for j in t..n {
                    let v = &m[i][j] - &q * &m[t][j];
                    m[i][j] = v;
                }
                if !m[i][t].is_zero() {
                    m.swap(t, i);
                    changed = true;
                }
            }
            for j in t + 1..n {
                if m[t][j].is_zero() {
                    continue;
                }
                let q = m[t][j].div_floor(&m[t][t]);
                for row in m.iter_mut().skip(t) {
                    let v = &row[j] - &q * &row[t];
                    row[j] = v;
                }
                if !m[t][j].is_zero() {
                    for row in m.iter_mut() {
                        row.swap(t, j);
                    }
                    changed = true;
                }
            }
            if changed {
                continue;
            }
            // Pivot must divide the rest of the block.
            let bad = (t + 1..n)
                .flat_map(|i| (t + 1..n).map(move |j| (i, j)))
                .find(|&(i, j)| !m[i][j].is_multiple_of(&m[t][t]));
            match bad {
                Some((i, _)) => {
                    for j in t..n {
                        let v = &m[t][j] + &m[i][j];
                        m[t][j] = v;
                    }
                }
                None => break,
            }
        }
    }
    Ok((0..n).map(|i| m[i][i].abs()).collect())
}

pub fn p_valuation(x: &BigInt, p: u64) -> Option<u32> {
    if x.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut x = x.clone();
    let mut v = 0;
    while x.is_multiple_of(&p) {
        x /= &p;
        v += 1;
    }
    Some(v)
}

/// `p`-adic valuations of the invariant factors, in descending order.
pub fn elementary_exponents(n: usize, entries: &[BigInt], p: u64) -> Result<Vec<i64>> {
    check_prime(p)?;
    let diag = smith_diagonal(n, entries)?;
    let mut e = diag
        .iter()
        .map(|d| p_valuation(d, p).map(i64::from).ok_or(Error::Singular))
        .collect::<Result<Vec<_>>>()?;
    e.sort_unstable_by(|a, b| b.cmp(a));
    Ok(e)
}

pub fn smith_exponents(g: &PrimitiveMatrix, p: u64) -> Result<CartanExponents> {
    let e = elementary_exponents(g.n, &g.entries, p)?;
    CartanExponents::from_elementary(&e, p)
}

/// Gcds of the `k x k` minors, `k = 1..n`, for small matrices. Used as an
/// independent route to the invariant factors.
pub fn determinantal_divisors(m: &[i64], n: usize) -> Result<Vec<i128>> {
    if n == 0 || n > 4 || m.len() != n * n {
        return invalid(format!("determinantal divisors need a square matrix of size 1..=4, got n = {n}"));
    }
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let mut g: i128 = 0;
        for rows in combinations(n, k) {
            for cols in combinations(n, k) {
                let minor: Vec<i128> = rows
                    .iter()
                    .flat_map(|&i| cols.iter().map(move |&j| m[i * n + j] as i128))
                    .collect();
                g = g.gcd(&det_small(&minor, k));
            }
        }
        if g == 0 {
            return Err(Error::Singular);
        }
        out.push(g);
    }
    Ok(out)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Cofactor expansion along the first row.
fn det_small(m: &[i128], k: usize) -> i128 {
    if k == 1 {
        return m[0];
    }
    let mut total = 0;
    for c in 0..k {
        let sub: Vec<i128> = (1..k)
            .flat_map(|i| (0..k).filter(move |&j| j != c).map(move |j| m[i * k + j]))
            .collect();
        let term = m[c] * det_small(&sub, k - 1);
        total += if c % 2 == 0 { term } else { -term };
    }
    total
}

/// All `a` in `[0, max]^rank`.
pub fn exponent_box(rank: usize, max: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..rank {
        out = out
            .into_iter()
            .flat_map(|v: Vec<i64>| {
                (0..=max).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// `p^{sum s_alpha a_alpha}`.
pub fn local_height(s: &[f64], a: &CartanExponents) -> Result<f64> {
    check_len(s.len(), a)?;
    let exponent: f64 = s.iter().zip(&a.a).map(|(s, &x)| s * x as f64).sum();
    Ok((a.p as f64).powf(exponent))
}

pub fn local_height_complex(s: &[Complex64], a: &CartanExponents) -> Result<Complex64> {
    check_len(s.len(), a)?;
    let exponent: Complex64 = s.iter().zip(&a.a).map(|(s, &x)| s * x as f64).sum();
    Ok((exponent * (a.p as f64).ln()).exp())
}

/// Exact height for integral `s`.
pub fn local_height_exact(s: &SVector, a: &CartanExponents) -> Result<BigInt> {
    check_len(s.len(), a)?;
    let Some(ints) = s.as_integers() else {
        return invalid(format!("exact height needs integral s, got ({s})"));
    };
    let exponent: i64 = ints.iter().zip(&a.a).map(|(s, x)| s * x).sum();
    let Ok(exponent) = u32::try_from(exponent) else {
        return invalid(format!("exponent {exponent} out of range"));
    };
    Ok(BigInt::from(a.p).pow(exponent))
}

fn check_len(len: usize, a: &CartanExponents) -> Result<()> {
    if len != a.a.len() {
        return invalid(format!("s has {len} coordinates, exponents have {}", a.a.len()));
    }
    Ok(())
}

/// Number of explicit shells summed before the closed-form tail.
const SCHWARTZ_SHELLS: i64 = 16;

fn min_entry_valuation(entries: &[BigInt], p: u64) -> Result<i64> {
    entries
        .iter()
        .filter_map(|x| p_valuation(x, p))
        .min()
        .map(i64::from)
        .ok_or_else(|| Error::InvalidArgument("zero matrix".into()))
}

/// Shells `k` for which `p^k g` is integral, over `k in [k_lo, k_hi]`.
fn integral_shells(entries: &[BigInt], p: u64, k_lo: i64, k_hi: i64) -> Vec<i64> {
    let vals: Vec<u32> = entries.iter().filter_map(|x| p_valuation(x, p)).collect();
    (k_lo..=k_hi)
        .filter(|&k| vals.iter().all(|&v| v as i64 + k >= 0))
        .collect()
}

/// Both sides of `int Psi(a g) |a|^s d^x a = zeta_p(s) ||g||_p^{-s}` with
/// `Psi` the indicator of `M_n(Z_p)` and `vol(Z_p^x) = 1`. The left side
/// sums the shells `a in p^k Z_p^x` on which the indicator is 1, explicitly
/// over a window and then in closed form.
pub fn schwartz_height_check(entries: &[BigInt], p: u64, s: f64) -> Result<(f64, f64)> {
    check_prime(p)?;
    if !(s > 0.0) {
        return invalid(format!("s must be positive, got {s}"));
    }
    let v = min_entry_valuation(entries, p)?;
    let pf = p as f64;
    let (k_lo, k_hi) = (-v - SCHWARTZ_SHELLS, -v + SCHWARTZ_SHELLS);
    let explicit: f64 = integral_shells(entries, p, k_lo, k_hi)
        .iter()
        .map(|&k| pf.powf(-(k as f64) * s))
        .sum();
    let tail = pf.powf(-((k_hi + 1) as f64) * s) / (1.0 - pf.powf(-s));
    let norm = pf.powf(-(v as f64));
    let rhs = norm.powf(-s) / (1.0 - pf.powf(-s));
    Ok((explicit + tail, rhs))
}

/// Exact version for a positive integer exponent.
pub fn schwartz_height_check_exact(entries: &[BigInt], p: u64, s: u32) -> Result<(BigRational, BigRational)> {
    check_prime(p)?;
    if s == 0 {
        return invalid("s must be positive");
    }
    let v = min_entry_valuation(entries, p)?;
    let x = BigRational::new(BigInt::one(), BigInt::from(p).pow(s));
    let pow = |k: i64| -> BigRational {
        // p^{-k s}
        if k >= 0 {
            x.pow(k as i32)
        } else {
            x.recip().pow((-k) as i32)
        }
    };
    let one = BigRational::one();
    let (k_lo, k_hi) = (-v - SCHWARTZ_SHELLS, -v + SCHWARTZ_SHELLS);
    let explicit: BigRational = integral_shells(entries, p, k_lo, k_hi)
        .iter()
        .map(|&k| pow(k))
        .fold(BigRational::zero(), |acc, t| acc + t);
    let lhs = explicit + pow(k_hi + 1) / (&one - &x);
    // ||g||_p = p^{-v}, so ||g||^{-s} = p^{v s}.
    let rhs = pow(-v) / (&one - &x);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRow {
    pub p: u64,
    pub a: Vec<i64>,
    pub vol: f64,
    pub term_re: f64,
    pub term_im: f64,
}

#[derive(Debug, Clone)]
pub struct CellSum {
    pub value: Complex64,
    /// Bound on the modulus of the omitted terms.
    pub tail_bound: f64,
    pub terms: usize,
    pub rows: Vec<CellRow>,
}

/// `sum_{a in [0, a_max]^r} chi(a) vol(K t(a) K) H(s, t(a))^{-1}` with the
/// volume bound `vol <= delta_B (1 + c/p)` for the omitted cells.
pub fn cell_sum_local_integral(
    datum: &RootDatum,
    p: u64,
    s: &[Complex64],
    a_max: i64,
    twist: Option<&[Complex64]>,
    keep_rows: bool,
) -> Result<CellSum> {
    check_prime(p)?;
    let r = datum.rank;
    if s.len() != r {
        return invalid(format!("s has {} coordinates, rank is {r}", s.len()));
    }
    if a_max < 0 {
        return invalid("a_max must be nonnegative");
    }
    for (i, (z, &k)) in s.iter().zip(&datum.kappa).enumerate() {
        if z.re <= k as f64 {
            return Err(Error::Divergent(format!(
                "Re s_{} = {} is not above kappa = {k}",
                i + 1,
                z.re
            )));
        }
    }
    let chi: Vec<Complex64> = match twist {
        Some(t) if t.len() != r => return invalid("twist has the wrong length"),
        Some(t) if t.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) => {
            return invalid("twist values must have modulus 1")
        }
        Some(t) => t.to_vec(),
        None => vec![Complex64::new(1.0, 0.0); r],
    };
    let pf = p as f64;
    let ratios: Vec<f64> = crate::rootsys::subsets(r)
        .map(|a| stratum_ratio(datum, &a, p).map(|x| x.to_f64().unwrap_or(f64::NAN)))
        .collect::<Result<_>>()?;
    // Per-root ratio chi_alpha p^{kappa_alpha - s_alpha}.
    let step: Vec<Complex64> = s
        .iter()
        .zip(&datum.kappa)
        .zip(&chi)
        .map(|((z, &k), c)| c * ((Complex64::from(k as f64) - z) * pf.ln()).exp())
        .collect();
    let mut value = Complex64::new(0.0, 0.0);
    let mut rows = Vec::new();
    let cells = exponent_box(r, a_max);
    for a in &cells {
        let mask = support(a);
        let idx = mask.iter().enumerate().fold(0, |acc, (i, &b)| acc | (usize::from(b) << i));
        let mut term = Complex64::new(ratios[idx], 0.0);
        for (z, &x) in step.iter().zip(a) {
            term *= z.powi(x as i32);
        }
        value += term;
        if keep_rows {
            let delta = datum.delta_b_exponent(a)?;
            rows.push(CellRow {
                p,
                a: a.clone(),
                vol: ratios[idx] * pf.powi(delta as i32),
                term_re: term.re,
                term_im: term.im,
            });
        }
    }
    let c = bruhat_constant(datum) as f64;
    let x: Vec<f64> = step.iter().map(|z| z.norm()).collect();
    let full: f64 = x.iter().map(|x| 1.0 / (1.0 - x)).product();
    let boxed: f64 = x
        .iter()
        .map(|x| (1.0 - x.powi(a_max as i32 + 1)) / (1.0 - x))
        .product();
    let tail_bound = ((1.0 + c / pf) * (full - boxed)).max(0.0);
    Ok(CellSum {
        value,
        tail_bound,
        terms: cells.len(),
        rows,
    })
}

/// Real-exponent convenience wrapper.
pub fn cell_sum_real(datum: &RootDatum, p: u64, s: &[f64], a_max: i64) -> Result<CellSum> {
    let z: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    cell_sum_local_integral(datum, p, &z, a_max, None, false)
}

pub fn cell_rows_csv(rows: &[CellRow]) -> String {
    let mut out = String::from("p,a,vol,term_re,term_im\n");
    for r in rows {
        let a: Vec<String> = r.a.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{},{},{},{}", r.p, a.join(" "), r.vol, r.term_re, r.term_im);
    }
    out
}
