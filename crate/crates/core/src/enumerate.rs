//! Enumeration of rational points of `PGL_n` of bounded height.
//!
//! Points are primitive integer matrices with nonzero determinant, taken up
//! to sign (first nonzero entry positive).

use std::fmt::Write as _;
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::locarch::{arch_height, ArchMetric};
use crate::locpadic::{local_height, smith_exponents, PrimitiveMatrix};
use crate::picard::SVector;

/// Relative band around a threshold inside which floating-point height
/// comparisons are redone exactly.
pub const GUARD_BAND: f64 = 1e-9;

fn candidates(n: usize, t: u64) -> u128 {
    (2 * t as u128 + 1).pow((n * n) as u32)
}

/// Primitive, sign-canonical, nonsingular matrices with `max|entry| <= t`.
pub fn point_stream(n: usize, t: u64, budget: u128) -> Result<impl Iterator<Item = PrimitiveMatrix>> {
    point_stream_shard(n, t, budget, 0, 1)
}

/// The part of [`point_stream`] whose first entry is `= shard (mod shards)`.
pub fn point_stream_shard(
    n: usize,
    t: u64,
    budget: u128,
    shard: usize,
    shards: usize,
) -> Result<impl Iterator<Item = PrimitiveMatrix>> {
    if !(n == 2 || n == 3) {
        return Err(Error::Unsupported(format!("point enumeration is implemented for n = 2, 3, got {n}")));
    }
    if shards == 0 || shard >= shards {
        return invalid(format!("shard {shard} out of range for {shards} shards"));
    }
    let required = candidates(n, t);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let t = t as i64;
    let len = n * n;
    let mut current: Option<Vec<i64>> = Some(vec![-t; len]);
    let step = move |v: &mut Vec<i64>| -> bool {
        for i in (0..len).rev() {
            if v[i] < t {
                v[i] += 1;
                return true;
            }
            v[i] = -t;
        }
        false
    };
    Ok(std::iter::from_fn(move || loop {
        let v = current.as_mut()?;
        let out = v.clone();
        if !step(v) {
            current = None;
        }
        let Some(first) = out.iter().find(|&&x| x != 0) else {
            continue;
        };
        if *first < 0 || (out[0].rem_euclid(shards as i64)) as usize != shard {
            continue;
        }
        if out.iter().fold(0i64, |g, &x| g.gcd(&x)) != 1 {
            continue;
        }
        if let Ok(m) = PrimitiveMatrix::from_i64(n, &out) {
            return Some(m);
        }
    }))
}

fn trial_division(mut x: u128) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p: u128 = 2;
    while p * p <= x {
        if x % p == 0 {
            out.push(p as u64);
            while x % p == 0 {
                x /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if x > 1 {
        out.push(x as u64);
    }
    out
}

/// `H(g) = H_inf(g) prod_{p | det g} H_p(g)`.
pub fn height_of_point(l: &SVector, metric: ArchMetric, g: &PrimitiveMatrix) -> Result<f64> {
    let n = g.n();
    let s = l.to_f64();
    let arch = arch_height(metric, &s, n, &g.to_f64())?;
    let det = g.determinant().abs().to_u128().ok_or_else(|| {
        Error::Unsupported("determinant too large for trial division".into())
    })?;
    let mut h = arch;
    for p in trial_division(det) {
        h *= local_height(&s, &smith_exponents(g, p)?)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Serialize)]
pub struct CountRun {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: SVector,
    pub metric: ArchMetric,
    pub b_max: u64,
    pub checkpoints: Vec<u64>,
    pub counts: Vec<u64>,
    pub box_bound: u64,
    pub shards: usize,
    /// Matrices re-evaluated exactly inside the guard band.
    pub guard_band_hits: u64,
    #[serde(skip)]
    pub elapsed_s: Option<f64>,
}

impl CountRun {
    /// Columns `B,N,elapsed_s`; the last is left empty unless timings were recorded.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("B,N,elapsed_s\n");
        let elapsed = self.elapsed_s.map(|e| format!("{e:.3}")).unwrap_or_default();
        for (b, c) in self.checkpoints.iter().zip(&self.counts) {
            let _ = writeln!(out, "{b},{c},{elapsed}");
        }
        out
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.checkpoints
            .iter()
            .zip(&self.counts)
            .map(|(&b, &c)| (b as f64, c as f64))
            .collect()
    }
}

/// Integer checkpoints on a geometric grid, deduplicated.
pub fn integer_grid(lo: f64, hi: f64, k: usize) -> Vec<u64> {
    let mut v: Vec<u64> = crate::euler::geometric_grid(lo, hi, k)
        .into_iter()
        .map(|x| x.round() as u64)
        .collect();
    v.dedup();
    v
}

/// `s = num/den` with both positive.
fn exponent_parts(l: &SVector) -> Result<(u32, u32)> {
    let s: Rational64 = l.values()[0];
    if s <= Rational64::zero() {
        return invalid("height exponent must be positive");
    }
    let (num, den) = (*s.numer(), *s.denom());
    if num > 64 || den > 64 {
        return Err(Error::Unsupported(format!("exponent {s} has too large a numerator or denominator")));
    }
    Ok((num as u32, den as u32))
}

/// Largest integer `x` with `x^num <= b^den`.
fn integer_threshold(b: u64, num: u32, den: u32) -> u64 {
    let target = BigInt::from(b).pow(den);
    let r = target.nth_root(num);
    r.to_u64().unwrap_or(u64::MAX)
}

/// `((f + sqrt(f^2 - 4 d^2)) / 2)^num <= b^den`, exactly.
fn singular_le(f: i64, d: i64, b: u64, num: u32, den: u32) -> bool {
    let disc = BigInt::from(f) * f - BigInt::from(4) * d * d;
    // (f + sqrt(disc))^num = x + y sqrt(disc)
    let (mut x, mut y) = (BigInt::one(), BigInt::zero());
    let fb = BigInt::from(f);
    for _ in 0..num {
        let nx = &x * &fb + &y * &disc;
        let ny = &x + &y * &fb;
        x = nx;
        y = ny;
    }
    let rhs = BigInt::from(b).pow(den) << num as usize;
    let r = rhs - x;
    !r.is_negative() && &y * &y * disc <= &r * &r
}

/// Counts for one metric, given a binning function on `(a, b, c, d, det)`.
fn count_pgl2<F>(t: i64, shards: usize, bins: usize, bin: F) -> Result<(Vec<u64>, u64)>
where
    F: Fn(i64, i64, i64, i64, i64) -> std::result::Result<Option<(usize, bool)>, Error> + Sync,
{
    let tu = t as usize;
    let gcd_table: Vec<u16> = (0..=tu)
        .flat_map(|x| (0..=tu).map(move |y| (x as u64).gcd(&(y as u64)) as u16))
        .collect();
    let row = |g: usize| &gcd_table[g * (tu + 1)..(g + 1) * (tu + 1)];
    let per_shard: Vec<Result<(Vec<u64>, u64)>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut hist = vec![0u64; bins + 1];
            let mut hits = 0u64;
            let mut a = shard as i64;
            while a <= t {
                let b_lo = if a == 0 { 1 } else { -t };
                for b in b_lo..=t {
                    let gab = row(a as usize)[b.unsigned_abs() as usize] as usize;
                    for c in -t..=t {
                        if a == 0 && c == 0 {
                            continue;
                        }
                        let gabc = row(gab)[c.unsigned_abs() as usize] as usize;
                        let r = row(gabc);
                        for d in -t..=t {
                            if r[d.unsigned_abs() as usize] != 1 {
                                continue;
                            }
                            let det = a * d - b * c;
                            if det == 0 {
                                continue;
                            }
                            if let Some((k, guarded)) = bin(a, b, c, d, det)? {
                                hist[k] += 1;
                                hits += u64::from(guarded);
                            }
                        }
                    }
                }
                a += shards as i64;
            }
            Ok((hist, hits))
        })
        .collect();
    let mut total = vec![0u64; bins + 1];
    let mut hits = 0;
    for r in per_shard {
        let (h, g) = r?;
        for (x, y) in total.iter_mut().zip(h) {
            *x += y;
        }
        hits += g;
    }
    Ok((total, hits))
}

/// `N(B)` at each checkpoint for `PGL_2`, enumerating the box
/// `max|entry| <= T = ceil(B_max^{1/(2s)})`. Valid because every metric here
/// satisfies `H >= max|entry|^{2s}` on primitive matrices, which is checked
/// for each enumerated matrix.
pub fn count_run(l: &SVector, metric: ArchMetric, checkpoints: &[u64], shards: usize) -> Result<CountRun> {
    let started = Instant::now();
    if l.len() != 1 {
        return Err(Error::Unsupported("counting runs are implemented for n = 2 only".into()));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("checkpoints must be nonempty and strictly increasing");
    }
    if shards == 0 {
        return invalid("need at least one shard");
    }
    let (num, den) = exponent_parts(l)?;
    let b_max = *checkpoints.last().unwrap();
    // T = ceil(B^{den/(2 num)}): smallest integer with T^{2 num} >= B^den.
    let mut t = integer_threshold(b_max, 2 * num, den);
    if BigInt::from(t).pow(2 * num) < BigInt::from(b_max).pow(den) {
        t += 1;
    }
    let t = t.max(1);
    if t > 4000 {
        return Err(Error::BudgetExceeded {
            required: candidates(2, t),
            budget: candidates(2, 4000),
        });
    }
    let ti = t as i64;
    let bins = checkpoints.len();
    // Largest admissible radial quantity per checkpoint.
    let thresholds: Vec<u64> = checkpoints.iter().map(|&b| integer_threshold(b, num, den)).collect();
    let table_for = |max_x: u64| -> Vec<u8> {
        (0..=max_x)
            .map(|x| thresholds.iter().position(|&th| x <= th).unwrap_or(bins) as u8)
            .collect()
    };
    if bins > 250 {
        return invalid("at most 250 checkpoints");
    }
    let (hist, hits) = match metric {
        ArchMetric::SupNorm => {
            let table = table_for((t * t) as u64);
            count_pgl2(ti, shards, bins, |a, b, c, d, _| {
                let m = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
                Ok(Some((table[(m * m) as usize] as usize, false)))
            })?
        }
        ArchMetric::L2Norm => {
            let table = table_for(4 * (t * t) as u64);
            count_pgl2(ti, shards, bins, |a, b, c, d, _| {
                let f = a * a + b * b + c * c + d * d;
                Ok(Some((table[f as usize] as usize, false)))
            })?
        }
        ArchMetric::SingularValue => {
            let s = num as f64 / den as f64;
            let radii: Vec<f64> = checkpoints.iter().map(|&b| (b as f64).powf(1.0 / s)).collect();
            count_pgl2(ti, shards, bins, |a, b, c, d, det| {
                let f = a * a + b * b + c * c + d * d;
                let ff = f as f64;
                let dd = det as f64;
                let q = 0.5 * (ff + ((ff - 2.0 * dd) * (ff + 2.0 * dd)).sqrt());
                let m = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
                if q < (m * m) as f64 * (1.0 - 1e-12) {
                    return Err(Error::BoxBoundViolation {
                        matrix: vec![a, b, c, d],
                        height: q.powf(s),
                    });
                }
                let mut k = radii.partition_point(|&r| r < q);
                let mut guarded = false;
                // Exact comparison against neighbouring thresholds in the band.
                while k > 0 && q <= radii[k - 1] * (1.0 + GUARD_BAND) {
                    guarded = true;
                    if singular_le(f, det, checkpoints[k - 1], num, den) {
                        k -= 1;
                    } else {
                        break;
                    }
                }
                while k < bins && q >= radii[k] * (1.0 - GUARD_BAND) {
                    guarded = true;
                    if singular_le(f, det, checkpoints[k], num, den) {
                        break;
                    }
                    k += 1;
                }
                Ok(Some((k, guarded)))
            })?
        }
    };
    let mut counts = Vec::with_capacity(bins);
    let mut acc = 0u64;
    for &h in hist.iter().take(bins) {
        acc += h;
        counts.push(acc);
    }
    Ok(CountRun {
        n: 2,
        l: l.clone(),
        metric,
        b_max,
        checkpoints: checkpoints.to_vec(),
        counts,
        box_bound: t,
        shards,
        guard_band_hits: hits,
        elapsed_s: Some(started.elapsed().as_secs_f64()),
    })
}
