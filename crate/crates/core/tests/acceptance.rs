//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use manin_core::enumerate::{count_run, integer_grid, CountRun};
use manin_core::euler::{
    abscissa_diagnostics, euler_product_abscissa, leading_constant, local_factor, regularized_product,
    tauberian_fit, LocalFactorTable, PredictBudget,
};
use manin_core::locarch::{arch_integral, arch_quadrature_pgl2, ArchMetric, McBudget};
use manin_core::locpadic::cell_sum_real;
use manin_core::picard::{anticanonical, character_count_pgl, manin_invariants, SVector};
use manin_core::primes::primes_up_to;
use manin_core::qcounts::{
    brute_force_order_pgl, coset_count_oracle, d_a0_count, descending_exponents, gaps, hecke_volume, order_g,
    x_count, QPolynomial,
};
use manin_core::rootsys::{build_pgl, subsets};
use num_bigint::BigInt;
use num_rational::Rational64;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

/// 8 / zeta(4) = 720 / pi^4.
fn schanuel_constant() -> f64 {
    720.0 / PI.powi(4)
}

fn exact_combinatorics() -> Outcome {
    let t = Instant::now();
    let d = build_pgl(4).map_err(e)?;
    ensure(d.kappa == vec![3, 4, 3], || format!("kappa = {:?}", d.kappa))?;
    let k = anticanonical(&d);
    ensure(k == SVector::from_ints(&[4, 5, 4]), || format!("anticanonical = ({k})"))?;
    let l = SVector::from_ints(&[1, 1, 1]);
    let pole = manin_invariants(&d, &l).map_err(e)?;
    ensure(pole.sigma == Rational64::from_integer(5), || format!("sigma = {}", pole.sigma))?;
    ensure(pole.argmax == vec![1], || format!("argmax = {:?}", pole.argmax))?;
    ensure(pole.multiplicity == 1, || format!("multiplicity = {}", pole.multiplicity))?;
    let dd = character_count_pgl(4, &l).map_err(e)?;
    ensure(dd == 2, || format!("d = {dd}"))?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("sigma = 5, argmax = {{alpha_2}}, b = 1, d = 2 in {:.1?}", t.elapsed()))
}

fn volume_oracle() -> Outcome {
    let t = Instant::now();
    let mut cases = 0;
    for n in 2..=3 {
        let d = build_pgl(n).map_err(e)?;
        for p in [2u64, 3, 5] {
            for ex in descending_exponents(n, 4) {
                let vol = hecke_volume(&d, &gaps(&ex), p).map_err(e)?;
                let oracle = coset_count_oracle(n, p, &ex).map_err(e)?;
                ensure(vol == BigInt::from(oracle), || format!("n = {n}, p = {p}, e = {ex:?}: {vol} vs {oracle}"))?;
                cases += 1;
            }
        }
    }
    // n = 1: the trivial group has a single coset.
    for p in [2u64, 3, 5] {
        for k in 0..=4 {
            ensure(coset_count_oracle(1, p, &[k]).map_err(e)? == 1, || format!("n = 1, p = {p}"))?;
            cases += 1;
        }
    }
    let d2 = build_pgl(2).map_err(e)?;
    for q in [2u64, 3, 5] {
        let q_big = BigInt::from(q);
        ensure(hecke_volume(&d2, &[1], q).map_err(e)? == &q_big + 1, || format!("vol(a=1) at q = {q}"))?;
        ensure(hecke_volume(&d2, &[2], q).map_err(e)? == &q_big * (&q_big + 1), || format!("vol(a=2) at q = {q}"))?;
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{cases} exact matches, PGL_2 volumes q+1 and q(q+1), in {:.1?}", t.elapsed()))
}

fn local_integral_equivalence() -> Outcome {
    let t = Instant::now();
    const GRID: [(i64, i64); 4] = [(1, 4), (1, 2), (1, 1), (2, 1)];
    let mut cases = 0;
    let mut strict_at_40 = 0;
    let mut worst_deep = 0.0f64;
    for n in 2..=3 {
        let d = build_pgl(n).map_err(e)?;
        for p in [2u64, 3, 5] {
            for code in 0..GRID.len().pow(d.rank as u32) {
                let u: Vec<(i64, i64)> = (0..d.rank).map(|i| GRID[(code / GRID.len().pow(i as u32)) % GRID.len()]).collect();
                let s: Vec<f64> = u
                    .iter()
                    .zip(&d.kappa)
                    .map(|(&(a, b), &k)| k as f64 + a as f64 / b as f64)
                    .collect();
                let closed = local_factor(&d, p, &s).map_err(e)?;
                let cells = cell_sum_real(&d, p, &s, 40).map_err(e)?;
                let gap = (closed - cells.value.re).abs();
                ensure(gap <= cells.tail_bound + 1e-13 * closed, || {
                    format!("n = {n}, p = {p}, s = {s:?}: |{closed} - {}| > tail bound {}", cells.value.re, cells.tail_bound)
                })?;
                if gap < 1e-9 * closed {
                    strict_at_40 += 1;
                }
                // Deep truncation where the rigorous tail is below 1e-9.
                let deep = cell_sum_real(&d, p, &s, 240).map_err(e)?;
                ensure(deep.tail_bound < 1e-9 * closed, || format!("tail bound {} at a_max = 240", deep.tail_bound))?;
                let rel = (closed - deep.value.re).abs() / closed;
                ensure(rel < 1e-9, || format!("n = {n}, p = {p}, s = {s:?}: relative gap {rel:.2e} at a_max = 240"))?;
                worst_deep = worst_deep.max(rel);
                cases += 1;
            }
        }
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{cases} points within the rigorous tail bound at a_max = 40 ({strict_at_40} of them also within 1e-9 there; \
         the rest have tail bounds above 1e-9 at a_max = 40); all within {worst_deep:.1e} relative at a_max = 240; {:.1?}",
        t.elapsed()
    ))
}

fn q_count_identities() -> Outcome {
    let t = Instant::now();
    for n in 2..=4 {
        let d = build_pgl(n).map_err(e)?;
        let mut total = QPolynomial::zero();
        for a in subsets(d.rank) {
            total = &total + &d_a0_count(&d, &a).map_err(e)?;
        }
        let x = x_count(&d).map_err(e)?;
        ensure(total == x, || format!("n = {n}: sum of strata {total} vs {x}"))?;
    }
    let x2 = x_count(&build_pgl(2).map_err(e)?).map_err(e)?;
    ensure(x2 == QPolynomial::from_i64(&[1, 1, 1, 1]), || format!("PGL_2 count {x2}"))?;
    let mut orders = Vec::new();
    for (n, q) in [(2usize, 2u64), (2, 3), (3, 2)] {
        let poly = order_g(&build_pgl(n).map_err(e)?).map_err(e)?.eval_u64(q);
        let brute = brute_force_order_pgl(n, q).map_err(e)?;
        ensure(poly == BigInt::from(brute), || format!("|PGL_{n}(F_{q})|: {poly} vs {brute}"))?;
        orders.push(brute);
    }
    ensure(orders == vec![6, 24, 168], || format!("orders {orders:?}"))?;
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!("strata sum to #X for n = 2..4, #X = {x2}, orders {orders:?}, {:.1?}", t.elapsed()))
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn regularized_tail() -> Outcome {
    let t = Instant::now();
    let primes: Vec<u64> = primes_up_to(20_000).into_iter().filter(|&p| p >= 50).collect();
    let mut slopes = Vec::new();
    for (n, l) in [(2, vec![2]), (3, vec![3, 3]), (3, vec![3, 2]), (4, vec![4, 5, 4])] {
        let d = build_pgl(n).map_err(e)?;
        let l = SVector::from_ints(&l);
        let sigma = manin_invariants(&d, &l).map_err(e)?.sigma;
        let sl: Vec<f64> = l.to_f64().iter().map(|x| x * *sigma.numer() as f64 / *sigma.denom() as f64).collect();
        let table = LocalFactorTable::new(&d).map_err(e)?;
        let pts: Vec<(f64, f64)> = primes
            .iter()
            .map(|&p| ((p as f64).ln(), table.log_stripped(p, &sl).abs().ln()))
            .collect();
        let k = slope(&pts);
        ensure(k <= -1.4, || format!("PGL_{n}, L = ({l}): log-slope {k:.3}"))?;
        slopes.push(format!("PGL_{n} ({l}): {k:.2}"));
    }
    let d2 = build_pgl(2).map_err(e)?;
    let prod = regularized_product(&d2, &[2.0], 100_000).map_err(e)?;
    let target = 90.0 / PI.powi(4);
    ensure((prod.value - target).abs() < 1e-6, || format!("E = {} vs 1/zeta(4) = {target}", prod.value))?;
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "slopes [{}]; E(kappa+1) = {:.10} vs 1/zeta(4) = {target:.10}; {:.1?}",
        slopes.join(", "),
        prod.value,
        t.elapsed()
    ))
}

/// `4 pi^2 / (s^2 - 1)`: singular-value metric, PGL_2.
fn sv_closed_form_pgl2(s: f64) -> f64 {
    4.0 * PI * PI / (s * s - 1.0)
}

/// `512 pi^4 / 75`: singular-value metric, PGL_3 at s = (3, 3), by expanding
/// the Vandermonde factor of the KAK density.
fn sv_closed_form_pgl3_anticanonical() -> f64 {
    512.0 * PI.powi(4) / 75.0
}

fn gauge_invariance() -> Outcome {
    let t = Instant::now();
    let mut notes = Vec::new();
    let d2 = build_pgl(2).map_err(e)?;
    // Monte Carlo against deterministic quadrature for n = 2.
    for metric in ArchMetric::ALL {
        let budget = McBudget {
            samples: 32_000_000,
            ..McBudget::default()
        };
        let mc = arch_integral(&d2, metric, &[2.0], 4.0, &budget).map_err(e)?;
        let quad = arch_quadrature_pgl2(metric, 2.0, 1e-9, 20_000_000).map_err(e)?;
        let diff = (mc.value - quad.value).abs();
        let sigma = (mc.stderr.powi(2) + quad.stderr.powi(2)).sqrt();
        ensure(diff <= 3.0 * sigma, || format!("{metric}: MC {} vs quadrature {} beyond 3 sigma ({sigma:.2e})", mc.value, quad.value))?;
        ensure(diff <= 1e-3 * quad.value, || format!("{metric}: relative gap {:.2e}", diff / quad.value))?;
        notes.push(format!("{metric} MC {:.5} vs quadrature {:.5} (z = {:.1})", mc.value, quad.value, diff / sigma));
    }
    let sv_quad = arch_quadrature_pgl2(ArchMetric::SingularValue, 2.0, 1e-10, 20_000_000).map_err(e)?;
    ensure((sv_quad.value / sv_closed_form_pgl2(2.0) - 1.0).abs() < 1e-6, || {
        format!("quadrature {} vs closed form {}", sv_quad.value, sv_closed_form_pgl2(2.0))
    })?;
    let sup_quad = arch_quadrature_pgl2(ArchMetric::SupNorm, 2.0, 1e-10, 20_000_000).map_err(e)?;
    ensure((sup_quad.value / 32.0 - 1.0).abs() < 1e-6, || format!("sup quadrature {} vs 32", sup_quad.value))?;

    // Gauge parameters t in {n^2, 2 n^2, 3 n^2}.
    let cases: [(usize, ArchMetric, Vec<f64>); 3] = [
        (2, ArchMetric::SupNorm, vec![2.0]),
        (2, ArchMetric::SingularValue, vec![2.0]),
        (3, ArchMetric::SingularValue, vec![3.0, 3.0]),
    ];
    for (n, metric, s) in cases {
        let d = build_pgl(n).map_err(e)?;
        let budget = McBudget {
            samples: 4_000_000,
            ..McBudget::default()
        };
        let runs = [1.0, 2.0, 3.0]
            .iter()
            .map(|m| arch_integral(&d, metric, &s, m * (n * n) as f64, &budget))
            .collect::<Result<Vec<_>, _>>()
            .map_err(e)?;
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let (a, b) = (&runs[i], &runs[j]);
                let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                ensure((a.value - b.value).abs() <= 3.0 * sigma, || {
                    format!("PGL_{n} {metric}: t = {} gives {}, t = {} gives {} (sigma {sigma:.2e})", a.t_gauge, a.value, b.t_gauge, b.value)
                })?;
            }
        }
        if n == 3 {
            let exact = sv_closed_form_pgl3_anticanonical();
            for r in &runs {
                ensure((r.value - exact).abs() <= 4.0 * r.stderr, || format!("PGL_3: {} vs closed form {exact}", r.value))?;
            }
        }
        notes.push(format!(
            "PGL_{n} {metric} gauges [{}]",
            runs.iter().map(|r| format!("{:.4}", r.value)).collect::<Vec<_>>().join(", ")
        ));
    }
    within(t.elapsed(), Duration::from_secs(600))?;
    Ok(format!("{}; {:.1?}", notes.join("; "), t.elapsed()))
}

fn analytic_calibration() -> Result<(String, f64), String> {
    let t = Instant::now();
    let d = build_pgl(2).map_err(e)?;
    let r = leading_constant(&d, &SVector::from_ints(&[2]), ArchMetric::SupNorm, &PredictBudget::default()).map_err(e)?;
    let target = schanuel_constant();
    let rel = (r.theta / target - 1.0).abs();
    ensure(rel < 5e-3, || format!("Theta = {} vs 8/zeta(4) = {target}", r.theta))?;
    ensure((r.recompute_theta() - r.theta).abs() < 1e-12 * r.theta, || "factor table does not multiply out".into())?;
    Ok((
        format!(
            "Theta = {:.5} +/- {:.1e} vs 8/zeta(4) = {target:.5} (relative {rel:.1e}); {:.1?}",
            r.theta,
            r.theta_stderr,
            t.elapsed()
        ),
        r.theta,
    ))
}

fn top_decade_slope(run: &CountRun) -> f64 {
    let top = run.b_max as f64 / 10.0;
    let pts: Vec<(f64, f64)> = run
        .pairs()
        .into_iter()
        .filter(|&(b, _)| b >= top)
        .map(|(b, n)| (b.ln(), n.ln()))
        .collect();
    slope(&pts)
}

fn manin_asymptotic(theta: f64) -> Outcome {
    let l = SVector::from_ints(&[2]);
    let shards = 16;
    let t = Instant::now();
    let quick = count_run(&l, ArchMetric::SupNorm, &integer_grid(1e2, 1e6, 64), shards).map_err(e)?;
    let quick_time = t.elapsed();
    within(quick_time, Duration::from_secs(30))?;
    let quick_ratio = *quick.counts.last().unwrap() as f64 / (theta * 1e6);
    ensure((0.7..=1.3).contains(&quick_ratio), || format!("quick mode N/(Theta B) = {quick_ratio:.4}"))?;
    let quick_fit = tauberian_fit(&quick.pairs(), 1.0, 1).map_err(e)?;
    ensure((0.7..=1.3).contains(&(quick_fit.c_hat / theta)), || format!("quick fit {}", quick_fit.c_hat))?;

    let t = Instant::now();
    let grid = integer_grid(1e4, 1e8, 128);
    let full = count_run(&l, ArchMetric::SupNorm, &grid, shards).map_err(e)?;
    let full_time = t.elapsed();
    ensure(full.box_bound == 100, || format!("box bound {}", full.box_bound))?;
    let n_max = *full.counts.last().unwrap() as f64;
    let ratio = n_max / (theta * 1e8);
    ensure((0.85..=1.15).contains(&ratio), || format!("N(1e8)/(Theta B) = {ratio:.4}"))?;
    let fit = tauberian_fit(&full.pairs(), 1.0, 1).map_err(e)?;
    let fit_rel = (fit.c_hat / theta - 1.0).abs();
    ensure(fit_rel < 0.1, || format!("fitted Theta {} vs {theta}", fit.c_hat))?;

    // Same exponent a = 1 for a second metric.
    let sv = count_run(&l, ArchMetric::SingularValue, &grid, shards).map_err(e)?;
    let slopes = [top_decade_slope(&full), top_decade_slope(&sv)];
    for k in slopes {
        ensure((k - 1.0).abs() < 0.05, || format!("log-log slope {k:.4}"))?;
    }
    ensure(sv.counts != full.counts, || "metrics gave identical counts".into())?;
    Ok(format!(
        "N(1e8) = {} = {ratio:.4} Theta B in {full_time:.1?}; fitted Theta {:.4} ({:.1}% off); \
         top-decade slopes sup {:.4}, singular {:.4}; quick mode ratio {quick_ratio:.4}, fit {:.4}, {quick_time:.1?}",
        n_max,
        fit.c_hat,
        100.0 * fit_rel,
        slopes[0],
        slopes[1],
        quick_fit.c_hat / theta
    ))
}

fn abscissa_property() -> Outcome {
    let t = Instant::now();
    let d = build_pgl(3).map_err(e)?;
    let l = SVector::from_ints(&[3, 2]);
    let sigma = manin_invariants(&d, &l).map_err(e)?.sigma;
    ensure(sigma == Rational64::new(3, 2), || format!("sigma = {sigma}"))?;
    let abscissa = euler_product_abscissa(&d, &l).map_err(e)?;
    ensure(abscissa == sigma, || format!("Euler product abscissa {abscissa} vs sigma {sigma}"))?;
    let near = abscissa_diagnostics(&d, &l, 1.5 + 1e-3, 1000, 10).map_err(e)?;
    ensure(near.divergent, || format!("near sigma: ratio {:.3}, growth {:.3}", near.ratio, near.growth))?;
    let far = abscissa_diagnostics(&d, &l, 1.5 + 0.2, 1000, 10).map_err(e)?;
    ensure(far.stable, || format!("above sigma: ratio {:.3}, tail {:.2e}", far.ratio, far.tail_estimate))?;
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "sigma = 3/2; at sigma+1e-3 increments ratio {:.3}, growth {:.3}; at sigma+0.2 ratio {:.3}, tail {:.1e}; {:.1?}",
        near.ratio,
        near.growth,
        far.ratio,
        far.tail_estimate,
        t.elapsed()
    ))
}

fn determinism() -> Outcome {
    let l = SVector::from_ints(&[2]);
    let grid = integer_grid(1e2, 1e7, 48);
    for metric in ArchMetric::ALL {
        let runs = [1, 4, 16]
            .iter()
            .map(|&s| count_run(&l, metric, &grid, s).map(|mut r| {
                r.elapsed_s = None;
                r.to_csv()
            }))
            .collect::<Result<Vec<_>, _>>()
            .map_err(e)?;
        ensure(runs.iter().all(|r| *r == runs[0]), || format!("{metric}: counts depend on the shard count"))?;
    }
    let d = build_pgl(3).map_err(e)?;
    let budget = PredictBudget {
        p_max: 1000,
        mc: McBudget {
            samples: 200_000,
            ..McBudget::default()
        },
        gauge_multiple: 1.0,
    };
    let l3 = SVector::from_ints(&[3, 3]);
    let a = serde_json::to_string(&leading_constant(&d, &l3, ArchMetric::SingularValue, &budget).map_err(e)?).map_err(e)?;
    let b = serde_json::to_string(&leading_constant(&d, &l3, ArchMetric::SingularValue, &budget).map_err(e)?).map_err(e)?;
    ensure(a == b, || "prediction report differs between identical runs".into())?;
    let other = McBudget {
        seed: 2,
        ..budget.mc.clone()
    };
    let c = serde_json::to_string(
        &leading_constant(&d, &l3, ArchMetric::SingularValue, &PredictBudget { mc: other, ..budget.clone() }).map_err(e)?,
    )
    .map_err(e)?;
    ensure(a != c, || "seed has no effect".into())?;
    Ok("counts identical for 1, 4, 16 shards on all metrics up to 1e7; reports byte-identical for equal seeds".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |k: usize, name: &str, r: Outcome| {
        match &r {
            Ok(msg) => println!("criterion {k:>2} {name}: PASS ({msg})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {k:>2} {name}: FAIL ({msg})");
            }
        }
    };
    report(1, "exact combinatorics", exact_combinatorics());
    report(2, "volume oracle", volume_oracle());
    report(3, "local integral equivalence", local_integral_equivalence());
    report(4, "q-count identities", q_count_identities());
    report(5, "regularized tail", regularized_tail());
    report(6, "archimedean gauge invariance", gauge_invariance());
    let calibration = analytic_calibration();
    let theta = calibration.as_ref().map(|c| c.1).unwrap_or_else(|_| schanuel_constant());
    report(7, "analytic calibration", calibration.map(|c| c.0));
    report(8, "end-to-end asymptotic", manin_asymptotic(theta));
    report(9, "abscissa property", abscissa_property());
    report(10, "determinism", determinism());
    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
