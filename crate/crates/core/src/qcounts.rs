//! Point counts over finite fields as polynomials in `q`, and exact Hecke
//! double-coset volumes.
//!
//! Boundary strata are indexed by subsets `A` of the simple roots, passed as
//! boolean masks. `P_A` is the standard parabolic whose Levi factor has
//! simple roots `Delta \ A`, so `A = Delta` is the Borel and `A = {}` is `G`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};
use crate::locpadic::determinantal_divisors;
use crate::rootsys::{subsets, RootDatum};

/// Integer polynomial in `q`, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QPolynomial {
    coeffs: Vec<BigInt>,
}

impl QPolynomial {
    pub fn from_coeffs(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        QPolynomial { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::from_coeffs(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn zero() -> Self {
        QPolynomial { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::from_i64(&[1])
    }

    /// `q^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![BigInt::zero(); k + 1];
        coeffs[k] = BigInt::one();
        QPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading_coefficient(&self) -> Option<&BigInt> {
        self.coeffs.last()
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(), |acc, _| &acc * self)
    }

    pub fn eval(&self, q: &BigInt) -> BigInt {
        self.coeffs
            .iter()
            .rev()
            .fold(BigInt::zero(), |acc, c| acc * q + c)
    }

    pub fn eval_u64(&self, q: u64) -> BigInt {
        self.eval(&BigInt::from(q))
    }

    pub fn eval_f64(&self, q: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * q + c.to_f64().unwrap_or(f64::NAN))
    }

    /// Exact quotient by a divisor with leading coefficient `+-1`; fails if
    /// the remainder is nonzero.
    pub fn div_exact(&self, divisor: &QPolynomial) -> Result<QPolynomial> {
        let dd = divisor
            .degree()
            .ok_or_else(|| Error::InvalidArgument("division by the zero polynomial".into()))?;
        let lead = divisor.coeffs[dd].clone();
        if lead.abs() != BigInt::one() {
            return invalid("divisor must have leading coefficient +-1");
        }
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return if self.is_zero() {
                Ok(Self::zero())
            } else {
                Err(Error::Consistency(format!("{self} is not divisible by {divisor}")))
            };
        }
        let mut quot = vec![BigInt::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] * &lead;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= &c * d;
            }
            quot[k] = c;
        }
        if rem.iter().any(|c| !c.is_zero()) {
            return Err(Error::Consistency(format!("{self} is not divisible by {divisor}")));
        }
        Ok(Self::from_coeffs(quot))
    }
}

impl fmt::Display for QPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if c.is_negative() { "-" } else { "+" })?;
            }
            first = false;
            let show_coeff = k == 0 || !mag.is_one();
            if show_coeff {
                write!(f, "{mag}")?;
            }
            match k {
                0 => {}
                1 => write!(f, "q")?,
                _ => write!(f, "q^{k}")?,
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a QPolynomial> for &'a QPolynomial {
    type Output = QPolynomial;
    fn add(self, rhs: &QPolynomial) -> QPolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = BigInt::zero();
        QPolynomial::from_coeffs(
            (0..n)
                .map(|k| self.coeffs.get(k).unwrap_or(&zero) + rhs.coeffs.get(k).unwrap_or(&zero))
                .collect(),
        )
    }
}

impl<'a> Sub<&'a QPolynomial> for &'a QPolynomial {
    type Output = QPolynomial;
    fn sub(self, rhs: &QPolynomial) -> QPolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = BigInt::zero();
        QPolynomial::from_coeffs(
            (0..n)
                .map(|k| self.coeffs.get(k).unwrap_or(&zero) - rhs.coeffs.get(k).unwrap_or(&zero))
                .collect(),
        )
    }
}

impl<'a> Mul<&'a QPolynomial> for &'a QPolynomial {
    type Output = QPolynomial;
    fn mul(self, rhs: &QPolynomial) -> QPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return QPolynomial::zero();
        }
        let mut out = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        QPolynomial::from_coeffs(out)
    }
}

impl Add for QPolynomial {
    type Output = QPolynomial;
    fn add(self, rhs: QPolynomial) -> QPolynomial {
        &self + &rhs
    }
}

impl Mul for QPolynomial {
    type Output = QPolynomial;
    fn mul(self, rhs: QPolynomial) -> QPolynomial {
        &self * &rhs
    }
}

impl std::iter::Sum for QPolynomial {
    fn sum<I: Iterator<Item = QPolynomial>>(iter: I) -> Self {
        iter.fold(QPolynomial::zero(), |a, b| a + b)
    }
}

/// `#PGL_m(F_q)`; equal to `1` for `m = 1`.
pub fn order_pgl(m: usize) -> QPolynomial {
    let qm = QPolynomial::monomial(m);
    let gl = (0..m).fold(QPolynomial::one(), |acc, i| &acc * &(&qm - &QPolynomial::monomial(i)));
    gl.div_exact(&QPolynomial::from_i64(&[-1, 1]))
        .expect("#GL_m(F_q) is divisible by q - 1")
}

fn require_type_a(datum: &RootDatum) -> Result<usize> {
    datum.type_a_degree().ok_or_else(|| {
        Error::Unsupported(format!(
            "Levi factorization is implemented for type A only, got {}",
            datum.label
        ))
    })
}

fn check_subset(datum: &RootDatum, a: &[bool]) -> Result<()> {
    if a.len() != datum.rank {
        return invalid(format!(
            "subset mask has length {}, expected {} simple roots",
            a.len(),
            datum.rank
        ));
    }
    Ok(())
}

pub fn order_g(datum: &RootDatum) -> Result<QPolynomial> {
    Ok(order_pgl(require_type_a(datum)?))
}

/// `[G : P_A]` as the sum of `q^l(w)` over minimal coset representatives of
/// `W / W_{Delta \ A}`.
pub fn parabolic_index(datum: &RootDatum, a: &[bool]) -> Result<QPolynomial> {
    check_subset(datum, a)?;
    let levi: Vec<bool> = a.iter().map(|&x| !x).collect();
    Ok(datum
        .minimal_coset_reps(&levi)
        .into_iter()
        .map(|w| QPolynomial::monomial(w.length))
        .sum())
}

/// Block sizes of the Levi of `P_A` in `PGL_n`: the composition of `n`
/// obtained by cutting after position `i` whenever `alpha_i` is in `A`.
pub fn levi_blocks(n: usize, a: &[bool]) -> Vec<usize> {
    let mut blocks = Vec::new();
    let mut size = 1;
    for &cut in a {
        if cut {
            blocks.push(size);
            size = 1;
        } else {
            size += 1;
        }
    }
    blocks.push(size);
    debug_assert_eq!(blocks.iter().sum::<usize>(), n);
    blocks
}

/// `#D_A^0(F_q) = [G:P_A]^2 * #M_A^ad(F_q)`, with `M_A^ad` the adjoint
/// quotient of the Levi.
pub fn d_a0_count(datum: &RootDatum, a: &[bool]) -> Result<QPolynomial> {
    let n = require_type_a(datum)?;
    let index = parabolic_index(datum, a)?;
    let levi_ad = levi_blocks(n, a)
        .into_iter()
        .fold(QPolynomial::one(), |acc, m| &acc * &order_pgl(m));
    Ok(&(&index * &index) * &levi_ad)
}

/// `#X(F_q)` as the sum over all boundary strata.
pub fn x_count(datum: &RootDatum) -> Result<QPolynomial> {
    let strata = subsets(datum.rank)
        .map(|a| d_a0_count(datum, &a))
        .collect::<Result<Vec<_>>>()?;
    Ok(strata.into_iter().sum())
}

/// `R_A(q) = #D_A^0 (q-1)^{#A} / #G`; the volume of `K t K` is
/// `R_{supp(a)}(q) * q^{<kappa, a>}`.
pub fn stratum_ratio(datum: &RootDatum, a: &[bool], q: u64) -> Result<BigRational> {
    let qb = BigInt::from(q);
    let size = a.iter().filter(|&&x| x).count() as u32;
    let num = d_a0_count(datum, a)?.eval(&qb) * num_traits::pow(&qb - 1, size as usize);
    let den = order_g(datum)?.eval(&qb);
    Ok(BigRational::new(num, den))
}

pub fn support(a: &[i64]) -> Vec<bool> {
    a.iter().map(|&x| x >= 1).collect()
}

/// `vol(K t(a) K)` with `vol(K) = 1`, for `q >= 2`.
pub fn hecke_volume(datum: &RootDatum, a: &[i64], q: u64) -> Result<BigInt> {
    if q < 2 {
        return invalid("q must be at least 2");
    }
    let delta = datum.delta_b_exponent(a)?;
    let ratio = stratum_ratio(datum, &support(a), q)?;
    let vol = ratio * BigRational::from_integer(num_traits::pow(BigInt::from(q), delta as usize));
    if !vol.is_integer() {
        return Err(Error::Consistency(format!(
            "Hecke volume for a = {a:?}, q = {q} is not an integer: {vol}"
        )));
    }
    Ok(vol.to_integer())
}

/// The constant `c = max_A #(W_A \ W / W_A)` bounding
/// `vol(K t K) <= delta_B(t) (1 + c/q)`; `W_A` is the Weyl group of the Levi of `P_A`.
pub fn bruhat_constant(datum: &RootDatum) -> usize {
    subsets(datum.rank)
        .map(|a| {
            let levi: Vec<bool> = a.iter().map(|&x| !x).collect();
            datum.double_coset_count(&levi)
        })
        .max()
        .unwrap_or(1)
}

fn is_small_prime(p: u64) -> bool {
    matches!(p, 2 | 3 | 5)
}

/// Number of right `K`-cosets in `K diag(p^e) K` for `GL_n(Q_p)`, counted as
/// the Hermite normal forms (sublattices of `Z^n`) whose elementary divisors
/// are `p^{e_i}`. Brute force; `n <= 3`, `p <= 5`, `sum e <= 4`.
pub fn coset_count_oracle(n: usize, p: u64, e: &[u32]) -> Result<u64> {
    if !(1..=3).contains(&n) || e.len() != n {
        return invalid("coset oracle requires 1 <= n <= 3 and e of length n");
    }
    if !is_small_prime(p) {
        return invalid("coset oracle requires a prime p <= 5");
    }
    if e.windows(2).any(|w| w[0] < w[1]) {
        return invalid("exponent vector must be descending");
    }
    let total: u32 = e.iter().sum();
    if total > 4 {
        return invalid("coset oracle requires sum e <= 4");
    }
    let mut count = 0;
    for_each_hnf(n, p, total, |h| {
        let divisors = determinantal_divisors(h, n).expect("HNF is nonsingular");
        let mut exps: Vec<u32> = invariant_factors(&divisors)
            .into_iter()
            .map(|f| valuation(f, p))
            .collect();
        exps.reverse();
        if exps == e {
            count += 1;
        }
    });
    Ok(count)
}

fn valuation(mut x: i128, p: u64) -> u32 {
    let p = p as i128;
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    v
}

fn invariant_factors(divisors: &[i128]) -> Vec<i128> {
    let mut prev = 1;
    divisors
        .iter()
        .map(|&d| {
            let f = d / prev;
            prev = d;
            f
        })
        .collect()
}

/// Visit every upper-triangular HNF with diagonal `p^{f_i}`, `sum f = total`,
/// and entries above the diagonal reduced modulo the diagonal entry of their column.
fn for_each_hnf(n: usize, p: u64, total: u32, mut visit: impl FnMut(&[i64])) {
    let mut diag = vec![0u32; n];
    loop {
        if diag.iter().sum::<u32>() == total {
            let mods: Vec<i64> = diag.iter().map(|&f| (p as i64).pow(f)).collect();
            // Free entries (i, j) with i < j, bounded by mods[j].
            let slots: Vec<(usize, usize)> = (0..n)
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .collect();
            let mut h = vec![0i64; n * n];
            for i in 0..n {
                h[i * n + i] = mods[i];
            }
            let mut idx = vec![0i64; slots.len()];
            'entries: loop {
                for (k, &(i, j)) in slots.iter().enumerate() {
                    h[i * n + j] = idx[k];
                }
                visit(&h);
                for k in 0..slots.len() {
                    idx[k] += 1;
                    if idx[k] < mods[slots[k].1] {
                        continue 'entries;
                    }
                    idx[k] = 0;
                }
                break;
            }
        }
        // Next diagonal exponent vector in [0, total]^n.
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            diag[k] += 1;
            if diag[k] <= total {
                break;
            }
            diag[k] = 0;
            k += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub p: u64,
    pub e: Vec<u32>,
    pub count: u64,
}

/// Oracle rows as CSV with columns `n,p,e,count`; `e` is space-separated.
pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "p", "e", "count"]).expect("in-memory write");
    for r in rows {
        let e = r.e.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([r.n.to_string(), r.p.to_string(), e, r.count.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

/// All descending exponent vectors of length `n` with `sum <= max_total`.
pub fn descending_exponents(n: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, cap: u32, budget: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for x in (0..=cap.min(budget)).rev() {
            cur.push(x);
            rec(n, x, budget - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, max_total, max_total, &mut Vec::new(), &mut out);
    out
}

/// Cartan gaps `a_i = e_i - e_{i+1}` of a descending exponent vector.
pub fn gaps(e: &[u32]) -> Vec<i64> {
    e.windows(2).map(|w| i64::from(w[0]) - i64::from(w[1])).collect()
}

/// `#PGL_n(F_q)` by scanning every matrix over `F_q`, `q` prime.
pub fn brute_force_order_pgl(n: usize, q: u64) -> Result<u64> {
    if !crate::primes::is_prime(q) || (q as f64).powi((n * n) as i32) > 2e7 {
        return invalid(format!("brute-force order needs a prime q and q^(n^2) <= 2e7, got n = {n}, q = {q}"));
    }
    let q = q as i64;
    let cells = n * n;
    let total = q.pow(cells as u32);
    let mut invertible = 0u64;
    for code in 0..total {
        let mut m = vec![0i64; cells];
        let mut c = code;
        for x in m.iter_mut() {
            *x = c % q;
            c /= q;
        }
        if det_mod(&m, n, q) != 0 {
            invertible += 1;
        }
    }
    Ok(invertible / (q as u64 - 1))
}

fn det_mod(m: &[i64], n: usize, q: i64) -> i64 {
    let mut a = m.to_vec();
    let mut det = 1;
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| a[r * n + col] % q != 0) else {
            return 0;
        };
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        let pv = a[col * n + col].rem_euclid(q);
        det = det * pv % q;
        let inv = (1..q).find(|x| x * pv % q == 1).unwrap();
        for r in col + 1..n {
            let f = a[r * n + col] * inv % q;
            for j in 0..n {
                a[r * n + j] = (a[r * n + j] - f * a[col * n + j]).rem_euclid(q);
            }
        }
    }
    det.rem_euclid(q)
}
