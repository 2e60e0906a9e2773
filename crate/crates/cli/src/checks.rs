//! Invariant suites behind `manin check`.

use manin_core::euler::{abscissa_diagnostics, euler_product_abscissa, local_factor};
use manin_core::locpadic::{cell_sum_real, schwartz_height_check_exact};
use manin_core::picard::{manin_invariants, SVector};
use manin_core::qcounts::{
    brute_force_order_pgl, coset_count_oracle, d_a0_count, descending_exponents, gaps, hecke_volume, order_g,
    x_count, QPolynomial,
};
use manin_core::rootsys::{build_pgl, subsets, RootDatum};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::Failure;

pub const SUITES: [&str; 5] = ["qcounts", "volumes", "localint", "schwartz", "abscissa"];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: Vec<Value>,
}

#[derive(Default)]
struct Tally {
    cases: usize,
    failures: Vec<Value>,
}

impl Tally {
    fn record(&mut self, ok: bool, detail: impl FnOnce() -> Value) {
        self.cases += 1;
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(self, suite: &str) -> SuiteReport {
        SuiteReport {
            suite: suite.into(),
            passed: self.failures.is_empty() && self.cases > 0,
            cases: self.cases,
            failures: self.failures,
        }
    }
}

fn core(e: manin_core::Error) -> Failure {
    match e {
        manin_core::Error::InvalidArgument(_) | manin_core::Error::Unsupported(_) => Failure::Usage(e.to_string()),
        other => Failure::Verification(other.to_string()),
    }
}

fn datum(n: usize) -> Result<RootDatum, Failure> {
    build_pgl(n).map_err(core)
}

pub fn run_suite(config: &RunConfig) -> Result<SuiteReport, Failure> {
    let suite = config
        .suite
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("check needs a suite, one of {}", SUITES.join(", "))))?;
    match suite {
        "qcounts" => qcounts(config.n),
        "volumes" => volumes(config.n, &config.primes, config.emax),
        "localint" => localint(config.n, &config.primes),
        "schwartz" => schwartz(config.n, &config.primes, config.seed),
        "abscissa" => abscissa(config.n, &config.class()?),
        other => Err(Failure::Usage(format!("unknown suite {other:?}, expected one of {}", SUITES.join(", ")))),
    }
}

fn qcounts(n: usize) -> Result<SuiteReport, Failure> {
    let d = datum(n)?;
    let mut t = Tally::default();
    let mut total = QPolynomial::zero();
    for a in subsets(d.rank) {
        total = &total + &d_a0_count(&d, &a).map_err(core)?;
    }
    let x = x_count(&d).map_err(core)?;
    t.record(total == x, || json!({"check": "sum of strata", "sum": total.to_string(), "x": x.to_string()}));
    if n == 2 {
        let expected = QPolynomial::from_i64(&[1, 1, 1, 1]);
        t.record(x == expected, || json!({"check": "PGL_2 count", "x": x.to_string()}));
    }
    let order = order_g(&d).map_err(core)?;
    for q in [2u64, 3, 5] {
        let Ok(brute) = brute_force_order_pgl(n, q) else {
            continue;
        };
        let poly = order.eval_u64(q);
        t.record(poly == BigInt::from(brute), || {
            json!({"check": "group order", "q": q, "polynomial": poly.to_string(), "brute_force": brute})
        });
    }
    Ok(t.finish("qcounts"))
}

fn volumes(n: usize, primes: &[u64], emax: u32) -> Result<SuiteReport, Failure> {
    let d = datum(n)?;
    let mut t = Tally::default();
    for &p in primes {
        for e in descending_exponents(n, emax) {
            let vol = hecke_volume(&d, &gaps(&e), p).map_err(core)?;
            let oracle = coset_count_oracle(n, p, &e).map_err(core)?;
            t.record(vol == BigInt::from(oracle), || {
                json!({"p": p, "e": e, "hecke_volume": vol.to_string(), "coset_count": oracle})
            });
        }
    }
    Ok(t.finish("volumes"))
}

/// Closed form against the truncated cell sum at `s = kappa + u`, `u` on a grid.
fn localint(n: usize, primes: &[u64]) -> Result<SuiteReport, Failure> {
    const GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
    let d = datum(n)?;
    let mut t = Tally::default();
    for &p in primes {
        for code in 0..GRID.len().pow(d.rank as u32) {
            let s: Vec<f64> = (0..d.rank)
                .map(|i| d.kappa[i] as f64 + GRID[(code / GRID.len().pow(i as u32)) % GRID.len()])
                .collect();
            let closed = local_factor(&d, p, &s).map_err(core)?;
            let cells = cell_sum_real(&d, p, &s, 40).map_err(core)?;
            let gap = (closed - cells.value.re).abs();
            t.record(gap <= cells.tail_bound + 1e-12 * closed.abs(), || {
                json!({"p": p, "s": s, "closed_form": closed, "cell_sum": cells.value.re, "tail_bound": cells.tail_bound})
            });
        }
    }
    Ok(t.finish("localint"))
}

/// Exact Tate-integral identity on seeded random matrices with `p`-power content.
fn schwartz(n: usize, primes: &[u64], seed: u64) -> Result<SuiteReport, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for &p in primes {
        for _ in 0..20 {
            let shift = rng.gen_range(0u32..=3);
            let mut entries: Vec<BigInt> = (0..n * n).map(|_| BigInt::from(rng.gen_range(-50i64..=50))).collect();
            if entries.iter().all(|x| *x == BigInt::from(0)) {
                entries[0] = BigInt::from(1);
            }
            let scale = BigInt::from(p).pow(shift);
            let entries: Vec<BigInt> = entries.into_iter().map(|x| x * &scale).collect();
            for s in 1..=3u32 {
                let (lhs, rhs) = schwartz_height_check_exact(&entries, p, s).map_err(core)?;
                t.record(lhs == rhs, || json!({"p": p, "s": s, "lhs": lhs.to_string(), "rhs": rhs.to_string()}));
            }
        }
    }
    Ok(t.finish("schwartz"))
}

fn abscissa(n: usize, l: &SVector) -> Result<SuiteReport, Failure> {
    let d = datum(n)?;
    let mut t = Tally::default();
    let sigma = manin_invariants(&d, l).map_err(core)?.sigma;
    let abscissa = euler_product_abscissa(&d, l).map_err(core)?;
    t.record(abscissa == sigma, || json!({"check": "abscissa", "euler": abscissa.to_string(), "sigma": sigma.to_string()}));
    let sf = *sigma.numer() as f64 / *sigma.denom() as f64;
    let near = abscissa_diagnostics(&d, l, sf + 1e-3, 1000, 10).map_err(core)?;
    t.record(near.divergent, || json!({"check": "divergent near sigma", "ratio": near.ratio, "growth": near.growth}));
    let far = abscissa_diagnostics(&d, l, sf + 0.2, 1000, 10).map_err(core)?;
    t.record(far.stable, || json!({"check": "stable above sigma", "ratio": far.ratio, "tail": far.tail_estimate}));
    Ok(t.finish("abscissa"))
}
