//! Local factors, the regularized Euler product, assembly of the leading
//! constant and the Tauberian fit.

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::locarch::{arch_integral, ArchIntegral, ArchMetric, McBudget};
use crate::picard::{character_count_pgl, manin_invariants, PoleData, SVector};
use crate::primes::primes_up_to;
use crate::qcounts::{d_a0_count, order_g, QPolynomial};
use crate::rootsys::{subsets, RootDatum};

const BERNOULLI_2K: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta for real `x > 1` by Euler-Maclaurin summation.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return invalid(format!("zeta is evaluated for x > 1 only, got {x}"));
    }
    const N: usize = 10;
    let nf = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-x)).sum();
    sum += nf.powf(1.0 - x) / (x - 1.0) + 0.5 * nf.powf(-x);
    // B_{2k}/(2k)! * x (x+1) ... (x+2k-2) * N^{-x-2k+1}
    let mut rising = x;
    let mut fact = 2.0;
    let mut power = nf.powf(-x - 1.0);
    for (k, b) in BERNOULLI_2K.iter().enumerate() {
        sum += b / fact * rising * power;
        let k2 = 2.0 * (k as f64 + 1.0);
        rising *= (x + k2 - 1.0) * (x + k2);
        fact *= (k2 + 1.0) * (k2 + 2.0);
        power /= nf * nf;
    }
    Ok(sum)
}

/// Per-stratum data for fast evaluation of local factors at many primes.
#[derive(Debug, Clone)]
pub struct LocalFactorTable {
    rank: usize,
    kappa: Vec<i64>,
    /// `(mask, #D_A^0 (q-1)^{#A})` for every `A`.
    strata: Vec<(Vec<bool>, QPolynomial)>,
    order: QPolynomial,
    dim: usize,
    /// `C' = sum_{A != 0} (|W^{Delta \ A}| - 1)`, bounding `R_A - 1 <= (...)/q`.
    excess: usize,
}

impl LocalFactorTable {
    pub fn new(datum: &RootDatum) -> Result<Self> {
        let order = order_g(datum)?;
        let mut strata = Vec::new();
        let mut excess = 0;
        for a in subsets(datum.rank) {
            let k = a.iter().filter(|&&x| x).count();
            let poly = &d_a0_count(datum, &a)? * &QPolynomial::from_i64(&[-1, 1]).pow(k as u32);
            if k > 0 {
                let levi: Vec<bool> = a.iter().map(|&x| !x).collect();
                excess += datum.minimal_coset_reps(&levi).len() - 1;
            }
            strata.push((a, poly));
        }
        Ok(LocalFactorTable {
            rank: datum.rank,
            kappa: datum.kappa.clone(),
            strata,
            order,
            dim: datum.dim_group(),
            excess,
        })
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.rank {
            return invalid(format!("s has {} coordinates, rank is {}", s.len(), self.rank));
        }
        for (i, (&x, &k)) in s.iter().zip(&self.kappa).enumerate() {
            if !(x > k as f64) {
                return Err(Error::Divergent(format!(
                    "s_{} = {x} is at or below kappa = {k}: pole of the local factor",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// `J_q(s) - 1`, summed over nonempty strata.
    fn excess_over_one(&self, q: f64, s: &[f64]) -> f64 {
        let order = self.order.eval_f64(q);
        self.strata
            .iter()
            .filter(|(a, _)| a.iter().any(|&x| x))
            .map(|(a, poly)| {
                let mut term = poly.eval_f64(q) / order;
                for (i, _) in a.iter().enumerate().filter(|(_, &x)| x) {
                    term /= q.powf(s[i] - self.kappa[i] as f64) - 1.0;
                }
                term
            })
            .sum()
    }

    /// `J_q(s)`.
    pub fn local_factor(&self, q: u64, s: &[f64]) -> Result<f64> {
        self.check(s)?;
        Ok(1.0 + self.excess_over_one(q as f64, s))
    }

    /// `#G(F_q) / q^{dim G}`.
    pub fn omega(&self, q: u64) -> f64 {
        let q = q as f64;
        self.order.eval_f64(q) / q.powi(self.dim as i32)
    }

    /// `log( omega_q J_q(s) prod (1 - q^{-(s - kappa)}) )`.
    pub fn log_stripped(&self, q: u64, s: &[f64]) -> f64 {
        let qf = q as f64;
        let mut l = self.omega(q).ln() + self.excess_over_one(qf, s).ln_1p();
        for (x, &k) in s.iter().zip(&self.kappa) {
            l += (-qf.powf(-(x - k as f64))).ln_1p();
        }
        l
    }

    pub fn stripped_factor(&self, q: u64, s: &[f64]) -> Result<f64> {
        self.check(s)?;
        Ok(self.log_stripped(q, s).exp())
    }

    /// `C` with `|f_p - 1| <= C p^{-gamma}`, `gamma = min(2, 1 + min(s - kappa))`.
    pub fn decay_constant(&self) -> f64 {
        2.0 + 2.0 * self.excess as f64
    }

    pub fn decay_exponent(&self, s: &[f64]) -> f64 {
        let u_min = s
            .iter()
            .zip(&self.kappa)
            .map(|(x, &k)| x - k as f64)
            .fold(f64::INFINITY, f64::min);
        (1.0 + u_min).min(2.0)
    }
}

/// `J_q(s) = (1/#G(F_q)) sum_A #D_A^0(F_q) prod_{alpha in A} (q-1)/(q^{s_alpha - kappa_alpha} - 1)`.
pub fn local_factor(datum: &RootDatum, q: u64, s: &[f64]) -> Result<f64> {
    if !crate::primes::is_prime(q) {
        return invalid(format!("{q} is not prime"));
    }
    LocalFactorTable::new(datum)?.local_factor(q, s)
}

/// Exact value for integral `s`.
pub fn local_factor_exact(datum: &RootDatum, q: u64, s: &SVector) -> Result<BigRational> {
    let Some(ints) = s.as_integers() else {
        return invalid(format!("exact local factor needs integral s, got ({s})"));
    };
    let table = LocalFactorTable::new(datum)?;
    table.check(&s.to_f64())?;
    let qb = BigInt::from(q);
    let order = table.order.eval(&qb);
    let mut total = BigRational::zero();
    for (a, poly) in &table.strata {
        let mut term = BigRational::new(poly.eval(&qb), order.clone());
        for i in (0..a.len()).filter(|&i| a[i]) {
            let u = (ints[i] - datum.kappa[i]) as usize;
            term /= BigRational::from_integer(num_traits::pow(qb.clone(), u) - 1);
        }
        total += term;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerProduct {
    pub value: f64,
    /// `|E - E(p_max)| <= tail_bound`.
    pub tail_bound: f64,
    pub p_max: u64,
    pub primes: usize,
}

/// `E(s) = prod_{p <= p_max} omega_p J_p(s) prod_alpha (1 - p^{-(s_alpha - kappa_alpha)})`
/// with a rigorous bound on the omitted primes.
pub fn regularized_product(datum: &RootDatum, s: &[f64], p_max: u64) -> Result<EulerProduct> {
    if p_max < 100 {
        return invalid(format!("p_max must be at least 100, got {p_max}"));
    }
    let table = LocalFactorTable::new(datum)?;
    table.check(s)?;
    let gamma = table.decay_exponent(s);
    if gamma <= 1.0 {
        return Err(Error::Divergent("s is too close to the local abscissa for the regularized product".into()));
    }
    let primes = primes_up_to(p_max);
    let logs: Vec<f64> = primes.par_iter().map(|&p| table.log_stripped(p, s)).collect();
    let log_e: f64 = logs.iter().sum();
    let value = log_e.exp();
    // |f_p - 1| <= C p^{-gamma} <= 1/2 gives |log f_p| <= 2 C p^{-gamma};
    // sum over p > P is at most 2 C P^{1-gamma}/(gamma-1).
    let c = table.decay_constant();
    let pf = p_max as f64;
    if c * pf.powf(-gamma) > 0.5 {
        return invalid(format!("p_max = {p_max} is too small for the tail estimate"));
    }
    let delta = 2.0 * c * pf.powf(1.0 - gamma) / (gamma - 1.0);
    Ok(EulerProduct {
        value,
        tail_bound: value * delta.exp_m1(),
        p_max,
        primes: primes.len(),
    })
}

/// `max_A (1 + deg R_A + sum_{alpha in A} kappa_alpha) / sum_{alpha in A} L_alpha`: the
/// rightmost real `s` where `prod_p J_p(s L)` diverges, read off the strata.
pub fn euler_product_abscissa(datum: &RootDatum, l: &SVector) -> Result<Rational64> {
    if l.len() != datum.rank || l.values().iter().any(|x| *x <= Rational64::zero()) {
        return invalid(format!("class ({l}) is not in the interior of the effective cone"));
    }
    let table = LocalFactorTable::new(datum)?;
    let order_deg = table.order.degree().expect("nonzero") as i64;
    let mut best: Option<Rational64> = None;
    for (a, poly) in &table.strata {
        if !a.iter().any(|&x| x) {
            continue;
        }
        // R_A is a ratio of polynomials; its degree enters the growth rate.
        let deg_r = poly.degree().expect("nonzero") as i64 - order_deg;
        let num: i64 = 1 + deg_r + (0..a.len()).filter(|&i| a[i]).map(|i| datum.kappa[i]).sum::<i64>();
        let den: Rational64 = (0..a.len()).filter(|&i| a[i]).map(|i| l.values()[i]).sum();
        let r = Rational64::from_integer(num) / den;
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    best.ok_or_else(|| Error::InvalidArgument("rank zero".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct AbscissaDiagnostics {
    pub s: f64,
    /// `(P, log prod_{p <= P} J_p(s L))`.
    pub partial_logs: Vec<(u64, f64)>,
    /// Log growth per doubling of `P`.
    pub increments: Vec<f64>,
    /// Geometric decay ratio of the increments.
    pub ratio: f64,
    /// Total log growth over the grid.
    pub growth: f64,
    /// Geometric extrapolation of the remaining growth.
    pub tail_estimate: f64,
    pub divergent: bool,
    pub stable: bool,
}

/// Partial products `prod_{p <= P} J_p(s L)` for `P = p0 2^k`, `k = 0..=doublings`.
pub fn abscissa_diagnostics(
    datum: &RootDatum,
    l: &SVector,
    s: f64,
    p0: u64,
    doublings: u32,
) -> Result<AbscissaDiagnostics> {
    if doublings < 2 {
        return invalid("need at least two doublings");
    }
    let table = LocalFactorTable::new(datum)?;
    let sl: Vec<f64> = l.to_f64().iter().map(|x| s * x).collect();
    table.check(&sl)?;
    let p_top = p0 << doublings;
    let primes = primes_up_to(p_top);
    let logs: Vec<f64> = primes
        .par_iter()
        .map(|&p| table.excess_over_one(p as f64, &sl).ln_1p())
        .collect();
    let mut partial_logs = Vec::new();
    let mut acc = 0.0;
    let mut idx = 0;
    for k in 0..=doublings {
        let bound = p0 << k;
        while idx < primes.len() && primes[idx] <= bound {
            acc += logs[idx];
            idx += 1;
        }
        partial_logs.push((bound, acc));
    }
    let increments: Vec<f64> = partial_logs.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let first = increments[0];
    let last = *increments.last().expect("doublings >= 2");
    let ratio = (last / first).powf(1.0 / (increments.len() as f64 - 1.0));
    let growth = partial_logs.last().unwrap().1 - partial_logs[0].1;
    let tail_estimate = if ratio < 1.0 { last * ratio / (1.0 - ratio) } else { f64::INFINITY };
    Ok(AbscissaDiagnostics {
        s,
        partial_logs,
        increments,
        ratio,
        growth,
        tail_estimate,
        divergent: ratio >= 0.9 && growth >= 0.4,
        stable: ratio <= 0.85 && tail_estimate <= 0.01,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ZetaValue {
    pub root: String,
    pub argument: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Factors {
    /// `prod_{alpha in S} L_alpha^{-1}` (closed form).
    pub residue_product: f64,
    /// `zeta(sigma L_alpha - kappa_alpha)` for the roots outside `S` (closed form).
    pub finite_zeta_values: Vec<ZetaValue>,
    pub finite_zeta_product: f64,
    /// `E(sigma L)` (truncated product).
    pub euler_tail: EulerProduct,
    /// `I_inf(sigma L)` (Monte Carlo).
    pub arch_integral: ArchIntegral,
    /// `tau(PGL_n) = n`.
    pub tamagawa_number: f64,
    /// `sigma (m - 1)!`.
    pub tauberian_divisor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    pub datum: String,
    #[serde(rename = "L")]
    pub l: SVector,
    pub metric: ArchMetric,
    pub pole: PoleData,
    pub a: f64,
    pub b: usize,
    pub factors: Factors,
    pub theta: f64,
    pub theta_stderr: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictBudget {
    pub p_max: u64,
    pub mc: McBudget,
    /// Gauge parameter as a multiple of `n^2`.
    pub gauge_multiple: f64,
}

impl Default for PredictBudget {
    fn default() -> Self {
        PredictBudget {
            p_max: 100_000,
            mc: McBudget::default(),
            gauge_multiple: 1.0,
        }
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// `Theta(L) = tau^{-1} (prod_S L_alpha^{-1}) (prod_{not S} zeta(sigma L_alpha - kappa_alpha))
/// E(sigma L) I_inf(sigma L) / (sigma (m-1)!)`.
pub fn leading_constant(
    datum: &RootDatum,
    l: &SVector,
    metric: ArchMetric,
    budget: &PredictBudget,
) -> Result<PredictionReport> {
    let n = datum
        .type_a_degree()
        .ok_or_else(|| Error::Unsupported(format!("leading constant needs PGL_n, got {}", datum.label)))?;
    let pole = manin_invariants(datum, l)?;
    if l.values().iter().any(|x| !(x * Rational64::from_integer(2)).is_integer()) {
        return invalid(format!("class ({l}) must be integral or half-integral"));
    }
    let twice = l.scale(Rational64::from_integer(2));
    let d = character_count_pgl(n, &twice)?;
    if d > 1 {
        return Err(Error::CharacterObstruction { d });
    }
    let sigma = pole.sigma.to_f64().expect("finite");
    let sl: Vec<f64> = l.to_f64().iter().map(|x| sigma * x).collect();
    let lf = l.to_f64();

    let residue_product: f64 = pole.argmax.iter().map(|&i| 1.0 / lf[i]).product();
    let mut finite_zeta_values = Vec::new();
    for i in (0..datum.rank).filter(|i| !pole.argmax.contains(i)) {
        let argument = sl[i] - datum.kappa[i] as f64;
        finite_zeta_values.push(ZetaValue {
            root: format!("alpha_{}", i + 1),
            argument,
            value: zeta(argument)?,
        });
    }
    let finite_zeta_product: f64 = finite_zeta_values.iter().map(|z| z.value).product();
    let euler_tail = regularized_product(datum, &sl, budget.p_max)?;
    let t = budget.gauge_multiple * (n * n) as f64;
    let arch = arch_integral(datum, metric, &sl, t, &budget.mc)?;
    let tamagawa_number = n as f64;
    let tauberian_divisor = sigma * factorial(pole.multiplicity - 1);

    let theta = residue_product * finite_zeta_product * euler_tail.value * arch.value
        / tamagawa_number
        / tauberian_divisor;
    // First-order propagation; zeta values are accurate far beyond the others.
    let rel = ((euler_tail.tail_bound / euler_tail.value).powi(2) + (arch.stderr / arch.value).powi(2)).sqrt();
    Ok(PredictionReport {
        datum: datum.label.clone(),
        l: l.clone(),
        metric,
        a: sigma,
        b: pole.multiplicity,
        pole,
        converged: arch.converged,
        factors: Factors {
            residue_product,
            finite_zeta_values,
            finite_zeta_product,
            euler_tail,
            arch_integral: arch,
            tamagawa_number,
            tauberian_divisor,
        },
        theta,
        theta_stderr: theta * rel,
    })
}

impl PredictionReport {
    /// Product of the logged factors, in the order they are listed.
    pub fn recompute_theta(&self) -> f64 {
        let f = &self.factors;
        f.residue_product * f.finite_zeta_product * f.euler_tail.value * f.arch_integral.value
            / f.tamagawa_number
            / f.tauberian_divisor
    }

    pub fn to_markdown(&self) -> String {
        let f = &self.factors;
        let mut out = String::new();
        out.push_str(&format!("# Prediction for {} with L = ({})\n\n", self.datum, self.l));
        out.push_str(&format!("- metric: {}\n", self.metric));
        out.push_str(&format!("- a(L) = {} ({})\n", self.pole.sigma, self.a));
        out.push_str(&format!("- b(L) = {}\n", self.b));
        out.push_str(&format!("- Theta = {:.6} +/- {:.2e}\n", self.theta, self.theta_stderr));
        if !self.converged {
            out.push_str("- WARNING: archimedean integral did not reach the requested precision\n");
        }
        out.push_str("\n| factor | value | source |\n|---|---|---|\n");
        out.push_str(&format!("| residue product | {:.12} | closed form |\n", f.residue_product));
        for z in &f.finite_zeta_values {
            out.push_str(&format!(
                "| zeta({:.6}) for {} | {:.12} | closed form |\n",
                z.argument, z.root, z.value
            ));
        }
        out.push_str(&format!(
            "| E(sigma L) | {:.12} +/- {:.2e} | truncated at p <= {} |\n",
            f.euler_tail.value, f.euler_tail.tail_bound, f.euler_tail.p_max
        ));
        out.push_str(&format!(
            "| I_inf(sigma L) | {:.8} +/- {:.2e} | Monte Carlo, {} samples, t = {} |\n",
            f.arch_integral.value, f.arch_integral.stderr, f.arch_integral.n_samples, f.arch_integral.t_gauge
        ));
        out.push_str(&format!("| tau(G) | {} | closed form |\n", f.tamagawa_number));
        out.push_str(&format!("| sigma (b-1)! | {} | closed form |\n", f.tauberian_divisor));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TauberianFit {
    pub c_hat: f64,
    /// First-order correction `c_1` in `Theta (1 + c_1 / log B)`.
    pub c1: f64,
    /// Residuals of `N / (B^a (log B)^{b-1})` against the fitted line.
    pub residuals: Vec<f64>,
    /// Correlation of `N / B^a` with `(log B)^{b-1}`; `None` when `b = 1`.
    pub correlation: Option<f64>,
    /// Local slopes of `log N` against `log B` between consecutive checkpoints.
    pub local_slopes: Vec<f64>,
}

fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Least-squares fit of `N(B) = Theta B^a (log B)^{b-1} (1 + c_1 / log B)`.
pub fn tauberian_fit(checkpoints: &[(f64, f64)], a: f64, b: usize) -> Result<TauberianFit> {
    if checkpoints.len() < 8 {
        return invalid(format!("need at least 8 checkpoints, got {}", checkpoints.len()));
    }
    if b == 0 {
        return invalid("b must be at least 1");
    }
    let (lo, hi) = checkpoints
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(bb, _)| (lo.min(bb), hi.max(bb)));
    if !(lo > 1.0) || hi / lo < 100.0 {
        return invalid("checkpoints must exceed 1 and span at least two decades");
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&(bb, _)| 1.0 / bb.ln()).collect();
    let ys: Vec<f64> = checkpoints
        .iter()
        .map(|&(bb, nb)| nb / (bb.powf(a) * bb.ln().powi(b as i32 - 1)))
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 * mx * mx * n {
        return invalid("degenerate design matrix");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let c_hat = my - slope * mx;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (c_hat + slope * x)).collect();
    let corr = if b == 1 {
        None
    } else {
        let u: Vec<f64> = checkpoints.iter().map(|&(bb, nb)| nb / bb.powf(a)).collect();
        let v: Vec<f64> = checkpoints.iter().map(|&(bb, _)| bb.ln().powi(b as i32 - 1)).collect();
        correlation(&u, &v)
    };
    let local_slopes = checkpoints
        .windows(2)
        .filter(|w| w[0].1 > 0.0 && w[1].1 > w[0].1)
        .map(|w| (w[1].1.ln() - w[0].1.ln()) / (w[1].0.ln() - w[0].0.ln()))
        .collect();
    Ok(TauberianFit {
        c_hat,
        c1: if c_hat != 0.0 { slope / c_hat } else { f64::NAN },
        residuals,
        correlation: corr,
        local_slopes,
    })
}

/// Geometric grid of `k` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k as f64 - 1.0)))
        .collect()
}
