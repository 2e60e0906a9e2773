//! Heights at the real place and the archimedean local integral
//! `I_inf(s) = int_{PGL_n(R)} H_inf(s, g)^{-1} dg`.
//!
//! The integral is evaluated through the gauge-fixed form
//! `pi^{t/2} Gamma(t/2)^{-1} int_{M_n(R)} H^{-1} e^{-pi Phi^2} Phi^t |det|^{-n} dx`
//! where `Phi` is the norm attached to the metric. The measure on `PGL_n(R)`
//! is the quotient of `dx/|det x|^n` by `da/|a|` on the center.

use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::rootsys::RootDatum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchMetric {
    /// `prod (sigma_i / sigma_{i+1})^{s_i}`.
    SingularValue,
    /// `(max|x_ij|^2 / |det|)^s`, `n = 2` only.
    SupNorm,
    /// `(sum x_ij^2 / |det|)^s`, `n = 2` only.
    L2Norm,
}

impl ArchMetric {
    pub const ALL: [ArchMetric; 3] = [ArchMetric::SingularValue, ArchMetric::SupNorm, ArchMetric::L2Norm];

    pub fn label(self) -> &'static str {
        match self {
            ArchMetric::SingularValue => "singular-value",
            ArchMetric::SupNorm => "sup-norm",
            ArchMetric::L2Norm => "l2-norm",
        }
    }

    fn check_n(self, n: usize) -> Result<()> {
        if n < 2 {
            return invalid("need n >= 2");
        }
        if self != ArchMetric::SingularValue && n != 2 {
            return Err(Error::Unsupported(format!("{} metric is only defined for n = 2", self.label())));
        }
        Ok(())
    }
}

impl fmt::Display for ArchMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArchMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singular-value" | "singular" | "sv" => Ok(ArchMetric::SingularValue),
            "sup-norm" | "sup" => Ok(ArchMetric::SupNorm),
            "l2-norm" | "l2" => Ok(ArchMetric::L2Norm),
            _ => invalid(format!("unknown metric {s:?} (expected singular-value, sup-norm or l2-norm)")),
        }
    }
}

impl Serialize for ArchMetric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

fn check_square(n: usize, g: &[f64]) -> Result<()> {
    if n == 0 || g.len() != n * n {
        return invalid(format!("expected {} entries, got {}", n * n, g.len()));
    }
    Ok(())
}

/// Singular values in descending order. Closed form for `n <= 3`, SVD above.
pub fn singular_values(n: usize, g: &[f64]) -> Result<Vec<f64>> {
    check_square(n, g)?;
    Ok(match n {
        1 => vec![g[0].abs()],
        2 => sv2(g).to_vec(),
        3 => sv3(g).to_vec(),
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(n, n, g);
            let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        }
    })
}

fn sv2(g: &[f64]) -> [f64; 2] {
    let f = g.iter().map(|x| x * x).sum::<f64>();
    let det = (g[0] * g[3] - g[1] * g[2]).abs();
    let disc = ((f - 2.0 * det) * (f + 2.0 * det)).max(0.0).sqrt();
    let l1 = 0.5 * (f + disc);
    let s1 = l1.sqrt();
    [s1, if s1 > 0.0 { det / s1 } else { 0.0 }]
}

fn det3(g: &[f64]) -> f64 {
    g[0] * (g[4] * g[8] - g[5] * g[7]) - g[1] * (g[3] * g[8] - g[5] * g[6]) + g[2] * (g[3] * g[7] - g[4] * g[6])
}

fn sv3(g: &[f64]) -> [f64; 3] {
    // A = g^T g.
    let mut a = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            a[i * 3 + j] = (0..3).map(|k| g[k * 3 + i] * g[k * 3 + j]).sum();
        }
    }
    let det = det3(g).abs();
    let tr = a[0] + a[4] + a[8];
    let c2 = a[0] * a[4] - a[1] * a[3] + a[0] * a[8] - a[2] * a[6] + a[4] * a[8] - a[5] * a[7];
    let c3 = det * det;
    let off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
    let q = tr / 3.0;
    let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * off;
    let (mut l1, mut l2) = if p2 <= 0.0 {
        (q, q)
    } else {
        let p = (p2 / 6.0).sqrt();
        let mut b = a;
        for i in 0..3 {
            b[i * 3 + i] -= q;
        }
        let r = (det3(&b) / (p * p * p) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        (l1, 3.0 * q - l1 - l3)
    };
    let poly = |x: f64| ((x - tr) * x + c2) * x - c3;
    let dpoly = |x: f64| (3.0 * x - 2.0 * tr) * x + c2;
    for l in [&mut l1, &mut l2] {
        for _ in 0..2 {
            let d = dpoly(*l);
            if d.abs() > 1e-300 {
                let next = *l - poly(*l) / d;
                if next.is_finite() && poly(next).abs() < poly(*l).abs() {
                    *l = next;
                }
            }
        }
    }
    let l1 = l1.max(0.0);
    let l2 = l2.clamp(0.0, l1);
    let s1 = l1.sqrt();
    let s2 = l2.sqrt();
    let s3 = if s1 * s2 > 0.0 { (det / (s1 * s2)).min(s2) } else { 0.0 };
    [s1, s2, s3]
}

fn abs_det(n: usize, g: &[f64], sv: &[f64]) -> f64 {
    match n {
        2 => (g[0] * g[3] - g[1] * g[2]).abs(),
        3 => det3(g).abs(),
        _ => sv.iter().product(),
    }
}

/// `log H_inf(s, g)`, given precomputed singular values.
fn log_height_sv(metric: ArchMetric, s: &[f64], n: usize, g: &[f64], sv: &[f64]) -> f64 {
    match metric {
        ArchMetric::SingularValue => s
            .iter()
            .enumerate()
            .map(|(i, si)| si * (sv[i].ln() - sv[i + 1].ln()))
            .sum(),
        ArchMetric::SupNorm => {
            let m = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            s[0] * (2.0 * m.ln() - abs_det(n, g, sv).ln())
        }
        ArchMetric::L2Norm => {
            let f: f64 = g.iter().map(|x| x * x).sum();
            s[0] * (f.ln() - abs_det(n, g, sv).ln())
        }
    }
}

/// The archimedean height; invariant under `g -> c g`.
pub fn arch_height(metric: ArchMetric, s: &[f64], n: usize, g: &[f64]) -> Result<f64> {
    check_square(n, g)?;
    metric.check_n(n)?;
    if s.len() != n - 1 {
        return invalid(format!("s has {} coordinates, expected {}", s.len(), n - 1));
    }
    let sv = singular_values(n, g)?;
    if !(sv[n - 1] > 0.0) || abs_det(n, g, &sv) == 0.0 {
        return Err(Error::Singular);
    }
    Ok(log_height_sv(metric, s, n, g, &sv).exp())
}

/// Degree-one norm `Phi` paired with the metric in the gauge-fixed integral.
pub fn gauge_norm(metric: ArchMetric, g: &[f64], sv: &[f64]) -> f64 {
    match metric {
        ArchMetric::SingularValue => sv[0],
        ArchMetric::SupNorm => g.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        ArchMetric::L2Norm => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// `C_n` in `dx = C_n prod_{i<j} (sigma_i^2 - sigma_j^2) dsigma dk_1 dk_2`
/// with `dk` the Haar probability measure on `O(n)` and `sigma` ordered.
pub fn kak_normalizer(n: usize) -> f64 {
    let nf = n as f64;
    let log_mv_gamma = nf * (nf - 1.0) / 4.0 * PI.ln()
        + (1..=n).map(|j| ln_gamma(nf / 2.0 - (j as f64 - 1.0) / 2.0)).sum::<f64>();
    (nf * 2f64.ln() + nf * nf * PI.ln() - 2.0 * log_mv_gamma).exp()
}

/// Haar-random orthogonal matrix (row-major) by Gram-Schmidt on a Gaussian matrix.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
                for i in 0..n {
                    cols[j][i] -= dot * cols[k][i];
                }
            }
            let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        if ok {
            let mut m = vec![0.0; n * n];
            for (j, c) in cols.iter().enumerate() {
                for i in 0..n {
                    m[i * n + j] = c[i];
                }
            }
            return m;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McBudget {
    pub samples: u64,
    pub shards: usize,
    pub seed: u64,
    /// Requested relative standard error; larger estimates are flagged.
    pub rel_tol: f64,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget {
            samples: 4_000_000,
            shards: 16,
            seed: 1,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchIntegral {
    pub value: f64,
    /// Standard error (Monte Carlo) or error estimate (quadrature).
    pub stderr: f64,
    pub n_samples: u64,
    pub converged: bool,
    pub method: String,
    pub metric: ArchMetric,
    pub t_gauge: f64,
}

/// Sampling plan shared by all shards.
struct Proposal {
    n: usize,
    metric: ArchMetric,
    s: Vec<f64>,
    t: f64,
    log_prefactor: f64,
    /// Gaussian component variance.
    var: f64,
    /// KAK component: `pi sigma_1^2 / c^2 ~ Gamma(t/2)`, gaps `~ Exp(rate)`.
    c2: f64,
    gamma: Gamma<f64>,
    rates: Vec<f64>,
    log_cn: f64,
}

impl Proposal {
    fn log_target(&self, g: &[f64], sv: &[f64]) -> f64 {
        let phi = gauge_norm(self.metric, g, sv);
        let det = abs_det(self.n, g, sv);
        -log_height_sv(self.metric, &self.s, self.n, g, sv) - PI * phi * phi + self.t * phi.ln()
            - self.n as f64 * det.ln()
    }

    fn log_gauss(&self, g: &[f64]) -> f64 {
        let d = (self.n * self.n) as f64;
        -0.5 * d * (2.0 * PI * self.var).ln() - g.iter().map(|x| x * x).sum::<f64>() / (2.0 * self.var)
    }

    fn log_kak(&self, sv: &[f64]) -> f64 {
        let n = self.n;
        let k = self.t / 2.0;
        let gam = PI * sv[0] * sv[0] / self.c2;
        let mut lq = (k - 1.0) * gam.ln() - gam - ln_gamma(k) + (2.0 * PI * sv[0] / self.c2).ln();
        for i in 0..n - 1 {
            let gap = sv[i].ln() - sv[i + 1].ln();
            lq += self.rates[i].ln() - self.rates[i] * gap - sv[i + 1].ln();
        }
        let mut lj = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                lj += (sv[i] * sv[i] - sv[j] * sv[j]).ln();
            }
        }
        lq - self.log_cn - lj
    }

    fn weight(&self, g: &[f64], sv: &[f64]) -> f64 {
        let lt = self.log_target(g, sv);
        if !lt.is_finite() {
            return 0.0;
        }
        let la = self.log_gauss(g);
        let lb = self.log_kak(sv);
        let hi = la.max(lb);
        if hi == f64::INFINITY {
            return 0.0;
        }
        let lmix = hi + (0.5 * (la - hi).exp() + 0.5 * (lb - hi).exp()).ln();
        (lt - lmix).exp()
    }

    fn sample_kak<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let gam: f64 = self.gamma.sample(rng);
        let mut sv = vec![(gam * self.c2 / PI).sqrt(); n];
        for i in 1..n {
            let e: f64 = rng.sample(Exp1);
            sv[i] = sv[i - 1] * (-e / self.rates[i - 1]).exp();
        }
        let k1 = haar_orthogonal(n, rng);
        let k2 = haar_orthogonal(n, rng);
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..n).map(|l| k1[i * n + l] * sv[l] * k2[l * n + j]).sum();
            }
        }
        (g, sv)
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, w: f64) {
        self.n += 1;
        self.sum += w;
        self.sum_sq += w * w;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let m = self.sum / self.n as f64;
        ((self.sum_sq - self.n as f64 * m * m) / (self.n as f64 - 1.0)).max(0.0)
    }
}

fn check_exponents(datum: &RootDatum, s: &[f64]) -> Result<usize> {
    let n = datum
        .type_a_degree()
        .ok_or_else(|| Error::Unsupported(format!("archimedean integral needs a PGL_n datum, got {}", datum.label)))?;
    if s.len() != datum.rank {
        return invalid(format!("s has {} coordinates, rank is {}", s.len(), datum.rank));
    }
    for (i, (&x, &k)) in s.iter().zip(&datum.kappa).enumerate() {
        if !(x > k as f64) {
            return Err(Error::Divergent(format!("s_{} = {x} is not above kappa = {k}", i + 1)));
        }
    }
    Ok(n)
}

/// Monte Carlo value of `I_inf(s)` with gauge parameter `t`.
pub fn arch_integral(
    datum: &RootDatum,
    metric: ArchMetric,
    s: &[f64],
    t_gauge: f64,
    budget: &McBudget,
) -> Result<ArchIntegral> {
    let rates: Vec<f64> = s.iter().zip(&datum.kappa).map(|(x, &k)| x - k as f64).collect();
    arch_integral_with_rates(datum, metric, s, t_gauge, budget, &rates)
}

/// As [`arch_integral`] with explicit gap rates for the KAK proposal; fixing
/// the rates makes runs at different `s` share their samples.
pub fn arch_integral_with_rates(
    datum: &RootDatum,
    metric: ArchMetric,
    s: &[f64],
    t_gauge: f64,
    budget: &McBudget,
    rates: &[f64],
) -> Result<ArchIntegral> {
    let n = check_exponents(datum, s)?;
    metric.check_n(n)?;
    if !(t_gauge > 0.0) {
        return invalid(format!("gauge parameter must be positive, got {t_gauge}"));
    }
    if budget.shards == 0 || budget.samples < 4 * budget.shards as u64 {
        return invalid("Monte Carlo budget too small for the shard count");
    }
    if rates.len() != datum.rank || rates.iter().any(|&r| !(r > 0.0)) {
        return invalid("proposal rates must be positive, one per simple root");
    }
    let nf = n as f64;
    let (var, c2) = match metric {
        ArchMetric::SupNorm => (nf * nf / (2.0 * PI), nf * nf),
        ArchMetric::L2Norm => (1.0 / (2.0 * PI), 1.0),
        ArchMetric::SingularValue => (nf / (2.0 * PI), 1.0),
    };
    let proposal = Proposal {
        n,
        metric,
        s: s.to_vec(),
        t: t_gauge,
        log_prefactor: t_gauge / 2.0 * PI.ln() - ln_gamma(t_gauge / 2.0),
        var,
        c2,
        gamma: Gamma::new(t_gauge / 2.0, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        rates: rates.to_vec(),
        log_cn: kak_normalizer(n).ln(),
    };
    let per_shard = budget.samples / budget.shards as u64;
    let half = per_shard / 2;
    let shards: Vec<(Moments, Moments)> = (0..budget.shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(shard as u64);
            let sd = proposal.var.sqrt();
            let mut ga = Moments::default();
            let mut kb = Moments::default();
            let mut g = vec![0.0; n * n];
            for _ in 0..half {
                for x in g.iter_mut() {
                    *x = sd * rng.sample::<f64, _>(StandardNormal);
                }
                let sv = singular_values(n, &g).expect("square");
                ga.push(proposal.weight(&g, &sv));
            }
            for _ in 0..half {
                let (g, sv) = proposal.sample_kak(&mut rng);
                kb.push(proposal.weight(&g, &sv));
            }
            (ga, kb)
        })
        .collect();
    let (ga, kb) = shards
        .into_iter()
        .fold((Moments::default(), Moments::default()), |(a, b), (x, y)| (a.merge(x), b.merge(y)));
    // Deterministic mixture with equal counts: mean over both streams.
    let total = (ga.n + kb.n) as f64;
    let pre = proposal.log_prefactor.exp();
    let value = pre * (ga.sum + kb.sum) / total;
    let var = (ga.n as f64 * ga.variance() + kb.n as f64 * kb.variance()) / (total * total);
    let stderr = pre * var.sqrt();
    let converged = value.is_finite() && stderr.is_finite() && stderr <= budget.rel_tol * value.abs();
    Ok(ArchIntegral {
        value,
        stderr,
        n_samples: ga.n + kb.n,
        converged,
        method: "monte-carlo".into(),
        metric,
        t_gauge,
    })
}

const GM_L2: f64 = 0.358_568_582_800_318_1; // sqrt(9/70)
const GM_L4: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const GM_L5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)

struct Region {
    center: [f64; 3],
    half: [f64; 3],
    value: f64,
    error: f64,
    split: usize,
}

impl PartialEq for Region {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Region {}
impl PartialOrd for Region {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Region {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Degree-7/degree-5 Genz-Malik pair on a 3-cube.
fn genz_malik<F: Fn(&[f64; 3]) -> f64>(f: &F, center: [f64; 3], half: [f64; 3]) -> Region {
    const D: f64 = 3.0;
    let w7 = [
        (12824.0 - 9120.0 * D + 400.0 * D * D) / 19683.0,
        980.0 / 6561.0,
        (1820.0 - 400.0 * D) / 19683.0,
        200.0 / 19683.0,
        6859.0 / 19683.0 / 8.0,
    ];
    let w5 = [
        (729.0 - 950.0 * D + 50.0 * D * D) / 729.0,
        245.0 / 486.0,
        (265.0 - 100.0 * D) / 1458.0,
        25.0 / 729.0,
    ];
    let at = |offs: [f64; 3]| {
        let x = [
            center[0] + half[0] * offs[0],
            center[1] + half[1] * offs[1],
            center[2] + half[2] * offs[2],
        ];
        f(&x)
    };
    let f0 = at([0.0; 3]);
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut fourth = [0.0; 3];
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = GM_L2;
        let a = at(e);
        e[i] = -GM_L2;
        let b = at(e);
        e[i] = GM_L4;
        let c = at(e);
        e[i] = -GM_L4;
        let d = at(e);
        s2 += a + b;
        s3 += c + d;
        fourth[i] = ((a + b - 2.0 * f0) - (GM_L2 * GM_L2 / (GM_L4 * GM_L4)) * (c + d - 2.0 * f0)).abs();
    }
    let mut s4 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut e = [0.0; 3];
                e[i] = si * GM_L4;
                e[j] = sj * GM_L4;
                s4 += at(e);
            }
        }
    }
    let mut s5 = 0.0;
    for mask in 0..8 {
        let e = [0, 1, 2].map(|i| if mask & (1 << i) != 0 { GM_L5 } else { -GM_L5 });
        s5 += at(e);
    }
    let vol = 8.0 * half[0] * half[1] * half[2];
    let r7 = vol * (w7[0] * f0 + w7[1] * s2 + w7[2] * s3 + w7[3] * s4 + w7[4] * s5);
    let r5 = vol * (w5[0] * f0 + w5[1] * s2 + w5[2] * s3 + w5[3] * s4);
    let split = (0..3)
        .max_by(|&a, &b| (fourth[a], half[a]).partial_cmp(&(fourth[b], half[b])).unwrap())
        .unwrap();
    Region {
        center,
        half,
        value: r7,
        error: (r7 - r5).abs(),
        split,
    }
}

/// Points evaluated by one Genz-Malik rule in three dimensions.
const GM_POINTS: u64 = 33;

/// Adaptive cubature of `f` over `[-1, 1]^3`; returns `(value, error, evals)`.
pub fn adaptive_cube<F: Fn(&[f64; 3]) -> f64>(f: F, rel_tol: f64, max_evals: u64) -> (f64, f64, u64) {
    let mut heap = BinaryHeap::new();
    let first = genz_malik(&f, [0.0; 3], [1.0; 3]);
    let mut value = first.value;
    let mut error = first.error;
    let mut evals = GM_POINTS;
    heap.push(first);
    while error > rel_tol * value.abs() && evals + 2 * GM_POINTS <= max_evals {
        let r = heap.pop().expect("nonempty");
        value -= r.value;
        error -= r.error;
        let mut half = r.half;
        half[r.split] /= 2.0;
        for sign in [-1.0, 1.0] {
            let mut c = r.center;
            c[r.split] += sign * half[r.split];
            let child = genz_malik(&f, c, half);
            value += child.value;
            error += child.error;
            heap.push(child);
        }
        evals += 2 * GM_POINTS;
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|r| r.value).sum();
    let error = heap.iter().map(|r| r.error).sum();
    (value, error, evals)
}

/// `I_inf` for `PGL_2` by cubature on the unit sphere of the sup norm:
/// `I_inf = (1/2) int_{max|u| = 1} H^{-1}(u) |det u|^{-2} dsigma(u)`. The
/// integrand is invariant under `u -> -u` and under row and column swaps,
/// which permute the eight faces transitively, so one face `u_11 = 1` is
/// integrated and multiplied by 8.
///
/// On that face `u = [[1, a], [b, d]]` and `det = d - ab` is linear in `d`,
/// so `d` is split at `ab` and each half is mapped by `v -> v^m` onto `[0, 1]`;
/// the singular surface `det = 0` then lies on the boundary of the cube.
pub fn arch_quadrature_pgl2(metric: ArchMetric, s: f64, rel_tol: f64, max_evals: u64) -> Result<ArchIntegral> {
    if !(s > 1.0) {
        return Err(Error::Divergent(format!("s = {s} is not above kappa = 1")));
    }
    let m = (1.0 / (s - 1.0)).ceil().clamp(1.0, 8.0);
    let face = |a: f64, b: f64, det: f64| {
        if det == 0.0 {
            return 0.0;
        }
        let g = [1.0, a, b, det + a * b];
        let sv = sv2(&g);
        (-log_height_sv(metric, &[s], 2, &g, &sv) - 2.0 * det.abs().ln()).exp()
    };
    let f = |y: &[f64; 3]| {
        let (a, b) = (y[0], y[1]);
        let c = a * b;
        let v = 0.5 * (y[2] + 1.0);
        let vm = v.powf(m);
        let jac = 0.5 * m * v.powf(m - 1.0);
        face(a, b, -(1.0 + c) * vm) * (1.0 + c) * jac + face(a, b, (1.0 - c) * vm) * (1.0 - c) * jac
    };
    let (v, e, evals) = adaptive_cube(f, rel_tol, max_evals);
    let value = 4.0 * v;
    let stderr = 4.0 * e;
    Ok(ArchIntegral {
        value,
        stderr,
        n_samples: evals,
        converged: stderr <= rel_tol * value.abs() * 1.000_001,
        method: "cubature".into(),
        metric,
        t_gauge: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rootsys::build_pgl;
    use proptest::prelude::*;
    use rand::Rng;

    fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn height_examples() {
        let h = arch_height(ArchMetric::SingularValue, &[2.0], 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((h - 4.0).abs() < 1e-12);
        let h = arch_height(ArchMetric::SingularValue, &[1.0], 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((h - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        let (c, s) = (0.6, 0.8);
        for m in ArchMetric::ALL {
            let h = arch_height(m, &[3.0], 2, &[c, -s, s, c]).unwrap();
            let expected = match m {
                ArchMetric::SingularValue => 1.0,
                ArchMetric::SupNorm => (0.64f64).powi(3),
                ArchMetric::L2Norm => 8.0,
            };
            assert!((h - expected).abs() < 1e-12, "{m}");
        }
        assert_eq!(arch_height(ArchMetric::SingularValue, &[1.0], 2, &[1.0, 2.0, 2.0, 4.0]), Err(Error::Singular));
        assert!(matches!(
            arch_height(ArchMetric::SupNorm, &[1.0, 1.0], 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn metric_parsing() {
        for m in ArchMetric::ALL {
            assert_eq!(m.label().parse::<ArchMetric>().unwrap(), m);
        }
        assert_eq!("sup".parse::<ArchMetric>().unwrap(), ArchMetric::SupNorm);
        assert!("frobenius".parse::<ArchMetric>().is_err());
        assert_eq!(serde_json::to_string(&ArchMetric::L2Norm).unwrap(), "\"l2-norm\"");
    }

    #[test]
    fn kak_constants() {
        assert!((kak_normalizer(1) - 2.0).abs() < 1e-12);
        assert!((kak_normalizer(2) - 4.0 * PI * PI).abs() < 1e-9);
    }

    /// `int e^{-|x|^2/2} dx = (2 pi)^{n^2/2}`, sampled through the KAK chart.
    #[test]
    fn kak_normalizer_by_sampling() {
        for n in [2usize, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let gamma = Gamma::new(n as f64 * n as f64 / 2.0, 1.0).unwrap();
            let rates = vec![1.0; n - 1];
            let mut m = Moments::default();
            for _ in 0..200_000 {
                // sigma_1^2 / 2 ~ Gamma(n^2/2), gaps ~ Exp(1).
                let g1: f64 = gamma.sample(&mut rng);
                let mut sv = vec![(2.0 * g1).sqrt(); n];
                for i in 1..n {
                    let e: f64 = rng.sample(Exp1);
                    sv[i] = sv[i - 1] * (-e / rates[i - 1]).exp();
                }
                let k = n as f64 * n as f64 / 2.0;
                let mut lq = (k - 1.0) * g1.ln() - g1 - ln_gamma(k) + sv[0].ln();
                for i in 0..n - 1 {
                    lq += rates[i].ln() - rates[i] * (sv[i] / sv[i + 1]).ln() - sv[i + 1].ln();
                }
                let mut lj = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        lj += (sv[i] * sv[i] - sv[j] * sv[j]).ln();
                    }
                }
                let f = -0.5 * sv.iter().map(|x| x * x).sum::<f64>();
                m.push((f + kak_normalizer(n).ln() + lj - lq).exp());
            }
            let est = m.sum / m.n as f64;
            let se = (m.variance() / m.n as f64).sqrt();
            let exact = (2.0 * PI).powf(n as f64 * n as f64 / 2.0);
            assert!((est - exact).abs() < 4.0 * se, "n = {n}: {est} vs {exact} (se {se})");
            assert!(se < 0.02 * exact);
        }
    }

    #[test]
    fn singular_values_agree_with_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 3] {
            for _ in 0..500 {
                let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let fast = singular_values(n, &g).unwrap();
                let m = nalgebra::DMatrix::from_row_slice(n, n, &g);
                let mut slow: Vec<f64> = m.singular_values().iter().copied().collect();
                slow.sort_by(|a, b| b.total_cmp(a));
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-9 * slow[0], "{fast:?} vs {slow:?}");
                }
            }
        }
        let near = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0 + 1e-9, 1.0, 0.0, 1.0];
        let sv = singular_values(3, &near).unwrap();
        let det = det3(&near).abs();
        assert!((sv[0] * sv[1] * sv[2] - det).abs() <= 1e-6 * det);
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4 {
            let k = haar_orthogonal(n, &mut rng);
            let mut kt = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    kt[i * n + j] = k[j * n + i];
                }
            }
            let p = matmul(n, &k, &kt);
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i * n + j] - e).abs() < 1e-12);
                }
            }
        }
    }

    fn quick_budget(samples: u64) -> McBudget {
        McBudget {
            samples,
            shards: 4,
            seed: 5,
            rel_tol: 0.05,
        }
    }

    /// Sup-norm integral reduces to `(8/(s-1)) int_{[-1,1]^2} (1 + y z)^{s-1}`.
    #[test]
    fn sup_norm_closed_forms() {
        let q = arch_quadrature_pgl2(ArchMetric::SupNorm, 2.0, 1e-10, 100_000).unwrap();
        assert!((q.value - 32.0).abs() < 1e-8);
        let q = arch_quadrature_pgl2(ArchMetric::SupNorm, 3.0, 1e-7, 2_000_000).unwrap();
        assert!((q.value - 160.0 / 9.0).abs() < 1e-5 * 160.0 / 9.0, "{q:?}");
        let d2 = build_pgl(2).unwrap();
        let mc = arch_integral(&d2, ArchMetric::SupNorm, &[2.0], 4.0, &quick_budget(200_000)).unwrap();
        assert!((mc.value - 32.0).abs() < 4.0 * mc.stderr, "{mc:?}");
        assert!(mc.converged);
    }

    #[test]
    fn mc_matches_quadrature_small() {
        let d2 = build_pgl(2).unwrap();
        for m in ArchMetric::ALL {
            let q = arch_quadrature_pgl2(m, 2.5, 1e-6, 2_000_000).unwrap();
            let mc = arch_integral(&d2, m, &[2.5], 4.0, &quick_budget(200_000)).unwrap();
            let sigma = (mc.stderr.powi(2) + q.stderr.powi(2)).sqrt();
            assert!((mc.value - q.value).abs() < 4.0 * sigma, "{m}: {mc:?} vs {q:?}");
        }
    }

    #[test]
    fn gauge_independence_small() {
        let d3 = build_pgl(3).unwrap();
        let a = arch_integral(&d3, ArchMetric::SingularValue, &[3.0, 3.0], 9.0, &quick_budget(100_000)).unwrap();
        let b = arch_integral(&d3, ArchMetric::SingularValue, &[3.0, 3.0], 18.0, &quick_budget(100_000)).unwrap();
        let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 4.0 * sigma, "{a:?} vs {b:?}");
    }

    #[test]
    fn monotone_in_s_with_shared_samples() {
        let d2 = build_pgl(2).unwrap();
        let d3 = build_pgl(3).unwrap();
        let budget = quick_budget(40_000);
        for m in [ArchMetric::SingularValue, ArchMetric::L2Norm] {
            let vals: Vec<f64> = [1.5, 2.0, 2.5, 3.0]
                .iter()
                .map(|&s| arch_integral_with_rates(&d2, m, &[s], 4.0, &budget, &[0.5]).unwrap().value)
                .collect();
            assert!(vals.windows(2).all(|w| w[0] > w[1]), "{m}: {vals:?}");
        }
        let vals: Vec<f64> = [2.5, 3.0, 3.5]
            .iter()
            .map(|&s| {
                arch_integral_with_rates(&d3, ArchMetric::SingularValue, &[s, 3.0], 9.0, &budget, &[0.5, 0.5])
                    .unwrap()
                    .value
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[0] > w[1]), "{vals:?}");
    }

    #[test]
    fn deterministic_and_scheduling_independent() {
        let d2 = build_pgl(2).unwrap();
        let b = quick_budget(20_000);
        let x = arch_integral(&d2, ArchMetric::SingularValue, &[2.0], 4.0, &b).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let y = pool.install(|| arch_integral(&d2, ArchMetric::SingularValue, &[2.0], 4.0, &b).unwrap());
        assert_eq!(x, y);
    }

    #[test]
    fn integral_rejections() {
        let d2 = build_pgl(2).unwrap();
        let b = quick_budget(1000);
        assert!(matches!(arch_integral(&d2, ArchMetric::SupNorm, &[1.0], 4.0, &b), Err(Error::Divergent(_))));
        assert!(arch_integral(&d2, ArchMetric::SupNorm, &[2.0], 0.0, &b).is_err());
        let d3 = build_pgl(3).unwrap();
        assert!(matches!(
            arch_integral(&d3, ArchMetric::SupNorm, &[3.0, 3.0], 9.0, &b),
            Err(Error::Unsupported(_))
        ));
        let tight = McBudget { rel_tol: 1e-9, ..quick_budget(1000) };
        assert!(!arch_integral(&d2, ArchMetric::SupNorm, &[2.0], 4.0, &tight).unwrap().converged);
    }

    fn matrix(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_filter("near singular", move |g| {
            let sv = singular_values(n, g).unwrap();
            sv[n - 1] > 1e-3 * sv[0]
        })
    }

    proptest! {
        #[test]
        fn bi_orthogonal_invariance(g in matrix(3), s1 in 0.5f64..4.0, s2 in 0.5f64..4.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k1 = haar_orthogonal(3, &mut rng);
            let k2 = haar_orthogonal(3, &mut rng);
            let h = arch_height(ArchMetric::SingularValue, &[s1, s2], 3, &g).unwrap();
            let h2 = arch_height(ArchMetric::SingularValue, &[s1, s2], 3, &matmul(3, &matmul(3, &k1, &g), &k2)).unwrap();
            prop_assert!((h - h2).abs() <= 1e-10 * h);
        }

        #[test]
        fn inverse_with_symmetric_s(g in matrix(3), s in 0.5f64..3.0) {
            let m = nalgebra::Matrix3::from_row_slice(&g);
            let inv = m.try_inverse().unwrap();
            let gi: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| inv[(i, j)])).collect();
            let a = arch_height(ArchMetric::SingularValue, &[s, s], 3, &g).unwrap();
            let b = arch_height(ArchMetric::SingularValue, &[s, s], 3, &gi).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * a);
        }

        #[test]
        fn scale_invariance(g in matrix(2), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], s in 0.5f64..4.0) {
            for m in ArchMetric::ALL {
                let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
                let a = arch_height(m, &[s], 2, &g).unwrap();
                let b = arch_height(m, &[s], 2, &scaled).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a);
            }
        }

        #[test]
        fn singular_height_bounds_sup(g in matrix(2), s in 0.5f64..4.0) {
            // H_sv = (sigma_1^2/|det|)^s >= (max^2/|det|)^s = H_sup.
            let a = arch_height(ArchMetric::SingularValue, &[s], 2, &g).unwrap();
            let b = arch_height(ArchMetric::SupNorm, &[s], 2, &g).unwrap();
            prop_assert!(a >= b * (1.0 - 1e-12));
        }
    }
}
