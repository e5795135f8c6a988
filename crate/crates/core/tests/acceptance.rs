//! Acceptance suite: one PASS/FAIL line per criterion and a final tally.

use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stabilab::cgo::{cdot, cnorm, make_zeta_pair, solve_pair_member, solve_remainder, CgoOptions};
use stabilab::dn::{operator_norm_fractional, BoundaryNormCalculus, DnCache};
use stabilab::experiment::{carleman_check, cmd_sweep, sweep, ExperimentConfig};
use stabilab::forward::SolverOptions;
use stabilab::fourier::{
    estimate_fourier_mode, fourier_transform_at, frame_for, green_identity_residual, mode_lattice,
};
use stabilab::geometry::{norm, partition_boundary, DomainGrid, Point, Shape};
use stabilab::potential::{sample_profiles, PotentialField, Profile};
use stabilab::schedule::{ln_gap, schedule_params, Regime, ScheduleConfig};
use stabilab::sweep::{
    build_pairs, calibrate_records, check_records, family_bound, longest_non_decreasing, run_sweep, with_bound,
    PairFamily, PotentialPair, StabilityRecord, SweepSpec,
};
use stabilab::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn cube(h: f64) -> DomainGrid {
    DomainGrid::build(3, Shape::unit_cube(), h).unwrap()
}

fn gaussian(center: Point, width: f64, amplitude: f64) -> Profile {
    Profile::Gaussian {
        center,
        width,
        amplitude,
    }
}

fn background() -> Profile {
    gaussian([0.05, -0.03, 0.02], 0.18, 2.0)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    stabilab::experiment::loglog_slope(xs, ys)
}

fn zeta_algebra() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut e_dot, mut e_mag) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let xi: Point = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
        let a0: Point = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let (alpha, beta) = frame_for(&xi, &a0)?;
        let lambda = norm(&xi, 3) + rng.random_range(0.0..50.0);
        let omega = rng.random_range(1.0..40.0);
        let p = make_zeta_pair(xi, alpha, beta, lambda, omega)?;
        for z in [p.zeta1, p.zeta2] {
            e_dot = e_dot.max((cdot(&z, &z) - C64::from(omega * omega)).norm());
            e_mag = e_mag.max((cnorm(&z).powi(2) - (omega * omega + 2.0 * lambda * lambda)).abs());
        }
    }
    Ok(Outcome {
        pass: e_dot <= 1e-8 && e_mag <= 1e-8,
        detail: format!("max |z.z - w^2| = {e_dot:.2e}, max ||z|^2 - (w^2+2l^2)| = {e_mag:.2e}"),
    })
}

fn cgo_decay() -> Result<Outcome> {
    let g = cube(1.0 / 16.0);
    let q = sample_profiles(&g, &[gaussian([0.0; 3], 0.15, 20.0)], 2, 1e4)?;
    let opts = CgoOptions::default();
    let (mut zs, mut rs) = (Vec::new(), Vec::new());
    for i in 0..6 {
        let lambda = 5.0 * 10f64.powf(i as f64 / 5.0);
        let p = make_zeta_pair([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], lambda, 2.0)?;
        let sol = solve_remainder(&g, &q, p.zeta1, &opts)?;
        zs.push(sol.magnitude());
        rs.push(sol.remainder_sobolev_norm(2.0));
    }
    let s = slope(&zs, &rs);
    Ok(Outcome {
        pass: (-1.2..=-0.8).contains(&s),
        detail: format!("slope of ln||r||_H2 vs ln|zeta| over |zeta| in [{:.1}, {:.1}] = {s:.4}", zs[0], zs[5]),
    })
}

fn carleman() -> Result<Outcome> {
    let cfg = ExperimentConfig {
        h: 1.0 / 16.0,
        omega_grid: vec![2.0, 5.0, 10.0, 20.0],
        test_fields: 200,
        seed: 3,
        ..ExperimentConfig::default()
    };
    let g = cfg.grid()?;
    let q = sample_profiles(&g, &[background()], 2, 1e4)?;
    let chk = carleman_check(&cfg, &g, &q)?;
    let worst = chk.pass_fraction.iter().map(|p| p.1).fold(1.0, f64::min);
    let fractions: Vec<String> = chk.pass_fraction.iter().map(|(w, f)| format!("w={w}:{f:.3}")).collect();
    Ok(Outcome {
        pass: worst >= 0.99,
        detail: format!(
            "C_emp = {:.4}, lambda0_emp = {:.3}, slack >= 0 at 2*lambda0 for {}",
            chk.c_emp,
            chk.lambda0,
            fractions.join(" ")
        ),
    })
}

fn green_identity() -> Result<Outcome> {
    let mut res = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let g = cube(h);
        let q1 = sample_profiles(&g, &[gaussian([0.1, 0.0, 0.0], 0.15, 4.0)], 2, 1e4)?;
        let q2 = sample_profiles(&g, &[gaussian([-0.1, 0.05, 0.0], 0.15, 2.0)], 2, 1e4)?;
        let p = make_zeta_pair([0.0, 2.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 2.0)?;
        let gi = green_identity_residual(&g, &q1, &q2, 2.0, &p, &CgoOptions::default(), SolverOptions::default())?;
        res.push(gi.residual);
    }
    Ok(Outcome {
        pass: res[0] < 0.1 && res[1] <= 0.6 * res[0],
        detail: format!(
            "residual {:.3e} at h=1/16, {:.3e} at h=1/32 (ratio {:.3})",
            res[0],
            res[1],
            res[1] / res[0]
        ),
    })
}

/// `(|estimate - truth|, bound at C = 1)` for every lattice mode `|ξ| ≤ rho`.
fn mode_errors(g: &DomainGrid, q1: &PotentialField, q2: &PotentialField, omega: f64, rho: f64) -> Result<Vec<(f64, f64)>> {
    let calc = BoundaryNormCalculus::new(g)?;
    let cache = DnCache::in_memory();
    let solver = SolverOptions::default();
    let d1 = cache.get_or_build(g, q1, omega, solver)?;
    let d2 = cache.get_or_build(g, q2, omega, solver)?;
    let dq = q1.difference(q2)?;
    let opts = CgoOptions::default();
    let mut out = Vec::new();
    for xi in mode_lattice(2.0 * g.radius(), rho) {
        let (alpha, beta) = frame_for(&xi, &[1.0, 0.0, 0.0])?;
        let part = partition_boundary(g, alpha, 0.1)?;
        let diff = d1.restrict_partial(&part)?.difference(&d2.restrict_partial(&part)?)?;
        let gap = operator_norm_fractional(&diff, &calc)?;
        let zp = make_zeta_pair(xi, alpha, beta, rho, omega)?;
        let (v, zp) = solve_pair_member(g, q1, &zp, false, &opts)?;
        let u2 = solve_remainder(g, q2, zp.zeta2, &opts)?;
        let est = estimate_fourier_mode(g, &zp, &diff, gap, &v, &u2, &part, 1.0)?;
        let truth = fourier_transform_at(g, &dq, &xi)?;
        out.push(((est.value - truth).norm(), est.bound()));
    }
    Ok(out)
}

fn fourier_estimator() -> Result<Outcome> {
    let g = cube(1.0 / 16.0);
    let (omega, rho) = (2.0, 4.0);
    let pi = std::f64::consts::PI;
    let trig = |k: Point, amplitude: f64| Profile::Trig {
        wavevector: k,
        phase: 0.0,
        center: [0.0; 3],
        width: 0.2,
        amplitude,
    };
    let base = sample_profiles(&g, &[background()], 2, 1e4)?;
    let with = |extra: Vec<Profile>| {
        let mut p = vec![background()];
        p.extend(extra);
        sample_profiles(&g, &p, 2, 1e4)
    };
    let train = [
        with(vec![trig([0.0, pi, 0.0], 1.0)])?,
        with(vec![trig([0.0, 0.0, pi], 1.5)])?,
        with(vec![trig([pi, pi, 0.0], 1.0)])?,
        with(vec![gaussian([0.1, -0.15, 0.1], 0.1, 1.5), gaussian([-0.1, 0.15, -0.05], 0.1, 1.5)])?,
        with(vec![gaussian([0.0, 0.2, 0.0], 0.12, -2.0), gaussian([0.05, -0.2, 0.1], 0.08, 1.0)])?,
        with(vec![gaussian([0.1, 0.0, 0.0], 0.12, 1.5)])?,
    ];
    let test = [
        with(vec![trig([pi, 0.0, 0.0], 1.5)])?,
        with(vec![gaussian([0.15, 0.1, 0.0], 0.1, 2.0), gaussian([-0.15, -0.1, 0.05], 0.1, -1.5)])?,
    ];
    let mut c = 0.0f64;
    for q1 in &train {
        for (err, bound) in mode_errors(&g, q1, &base, omega, rho)? {
            c = c.max(err / bound);
        }
    }
    let (mut worst, mut modes) = (0.0f64, 0usize);
    for q1 in &test {
        for (err, bound) in mode_errors(&g, q1, &base, omega, rho)? {
            worst = worst.max(err / (c * bound));
            modes += 1;
        }
    }
    Ok(Outcome {
        pass: worst <= 1.0,
        detail: format!("calibrated C = {c:.3e}; {modes} test modes with |xi| <= {rho}, max error/bound = {worst:.3}"),
    })
}

fn schedule_invariants() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut broken, mut omega_dependent) = (Vec::new(), 0usize);
    for i in 0..500 {
        let n = if rng.random_bool(0.5) { 2 } else { 3 };
        let cfg = ScheduleConfig {
            n,
            s: (n / 2 + 1) as f64 + rng.random_range(0.0..3.0),
            theta: rng.random_range(0.05..0.95),
            radius: rng.random_range(1.0..3.0),
            m_bound: rng.random_range(0.1..100.0),
            lambda0: rng.random_range(0.0..20.0),
            c2m: rng.random_range(0.0..30.0),
            margin: rng.random_range(0.01..1.0),
        };
        let omega = 10f64.powf(rng.random_range(0.01..3.0));
        let ln_g = if i % 25 == 0 {
            f64::NEG_INFINITY
        } else {
            cfg.ln_delta() * (1.0 + 10f64.powf(rng.random_range(-9.0..3.0)))
        };
        let p = match schedule_params(omega, ln_g, &cfg) {
            Ok(p) => p,
            Err(e) => {
                broken.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let (nf, t) = (n as f64, cfg.theta);
        let k = nf / t + 4.0 * nf * (1.0 - t) / t + 5.0 * cfg.radius + (nf + 2.0) / t;
        let l = (3.0 * nf - 2.0 * nf * t + 2.0) / t;
        let lt = 1f64.max(cfg.lambda0).max(cfg.c2m) * (1.0 + cfg.margin);
        let ln_delta = -(k * lt.powf(1.0 / l)).exp();
        let (Some(rho), Some(ln_lambda)) = (p.rho, p.ln_lambda) else {
            broken.push(format!("#{i}: no schedule in the small-gap regime"));
            continue;
        };
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        let ge = |a: f64, b: f64| a >= b - 1e-12 * a.abs().max(b.abs()).max(1.0);
        let ln_zeta = 0.5 * (omega * omega + 2.0 * (2.0 * ln_lambda).exp()).ln().max(ln_lambda + 0.5 * 2f64.ln());
        let links = [
            ("regime", p.regime == Regime::SmallGap),
            ("K", rel(p.k, k)),
            ("L", rel(p.l, l) && l >= 1.0),
            ("delta", rel(p.ln_delta, ln_delta) && ln_delta < 0.0),
            ("rho >= lambda_tilde^(1/L)", ge(l * rho.ln(), lt.ln())),
            ("lambda >= rho^L", ge(ln_lambda, l * rho.ln())),
            ("lambda_tilde >= lambda0", lt >= cfg.lambda0),
            ("rho <= lambda", ge(ln_lambda, rho.ln())),
            ("lambda <= 2(lambda^2+omega^2)", ln_lambda <= 2f64.ln() + 2.0 * ln_lambda || ln_lambda <= 2f64.ln() + 2.0 * omega.ln()),
            ("|zeta| > C2 M", cfg.c2m == 0.0 || ln_zeta > cfg.c2m.ln()),
        ];
        if let Some((name, _)) = links.iter().find(|l| !l.1) {
            broken.push(format!("#{i}: {name}"));
        }
        let other = schedule_params(omega * 7.3 + 1.0, ln_g, &cfg)?;
        if other.ln_delta != p.ln_delta || other.lambda_tilde != p.lambda_tilde {
            omega_dependent += 1;
        }
    }
    Ok(Outcome {
        pass: broken.is_empty() && omega_dependent == 0,
        detail: format!(
            "500 random chains, {} broken links, delta depends on omega in {omega_dependent}{}",
            broken.len(),
            broken.first().map(|b| format!(" (first {b})")).unwrap_or_default()
        ),
    })
}

fn sweep_config(h: f64) -> ExperimentConfig {
    ExperimentConfig {
        h,
        pair_family: "frequency-ladder".into(),
        pair_count: 8,
        omega_grid: vec![2.0, 4.0, 8.0, 16.0],
        ..ExperimentConfig::default()
    }
}

fn increasing_stability() -> Result<Outcome> {
    let cfg = sweep_config(1.0 / 16.0);
    let r = sweep(&cfg, &DnCache::in_memory())?;
    let betas: Vec<String> = r.betas.iter().map(|b| format!("{}:{:.3}", b.omega, b.beta)).collect();
    let run = longest_non_decreasing(&r.betas);
    let b = |w: f64| r.betas.iter().find(|f| f.omega == w).map(|f| f.beta);
    let rising = matches!((b(2.0), b(16.0)), (Some(lo), Some(hi)) if hi > lo);
    Ok(Outcome {
        pass: r.failures.is_empty() && r.betas.len() == 4 && run >= 3 && rising,
        detail: format!(
            "beta(omega) = {}; non-decreasing over {run} of 4; {} failed points",
            betas.join(" "),
            r.failures.len()
        ),
    })
}

fn sweep_family(g: &DomainGrid, pairs: &[PotentialPair], m: f64, cfg: &ExperimentConfig) -> Result<(Vec<StabilityRecord>, usize)> {
    let cache = DnCache::in_memory();
    let spec = SweepSpec {
        grid: g,
        pairs,
        omegas: &cfg.omega_grid,
        alpha: cfg.alpha,
        epsilon: cfg.epsilon,
        schedule: cfg.schedule(m),
        solver: cfg.solver(),
        cache: &cache,
        jobs: 1,
    };
    let r = run_sweep(&spec)?;
    Ok((r.records, r.failures.len()))
}

fn bound_verification() -> Result<Outcome> {
    let cfg = sweep_config(1.0 / 16.0);
    let g = cfg.grid()?;
    let mut train = build_pairs(&g, &PairFamily::RandomBumps { count: 16, seed: 11 }, 2)?;
    train.extend(build_pairs(&g, &PairFamily::FrequencyLadder { count: 8, amplitude: 1.0, step: 3.0 }, 2)?);
    let mut test = build_pairs(&g, &PairFamily::RandomBumps { count: 8, seed: 12 }, 2)?;
    test.extend(build_pairs(&g, &PairFamily::Identical { count: 1 }, 2)?);
    let m = family_bound(&g, &train)?.max(family_bound(&g, &test)?);
    let (train, test) = (with_bound(&g, train, m)?, with_bound(&g, test, m)?);
    let (train_rec, f1) = sweep_family(&g, &train, m, &cfg)?;
    let (test_rec, f2) = sweep_family(&g, &test, m, &cfg)?;
    let ln_c = calibrate_records(&train_rec)?;
    let held = check_records(&test_rec, ln_c);
    let n_small = test_rec.iter().filter(|r| r.regime == Regime::SmallGap).count();
    let n_large = test_rec.len() - n_small;
    let worst = test_rec
        .iter()
        .map(|r| ln_gap(r.linfty) - ln_c - r.ln_rhs)
        .fold(f64::NEG_INFINITY, f64::max);
    let bad: Vec<String> = test_rec
        .iter()
        .zip(&held)
        .filter(|(_, ok)| !**ok)
        .map(|(r, _)| format!("{}@{}", r.pair, r.omega))
        .collect();
    let pass = f1 == 0 && f2 == 0 && bad.is_empty() && n_small > 0 && n_large > 0;
    Ok(Outcome {
        pass,
        detail: format!(
            "ln C = {ln_c:.6e} from {} training points; {}/{} test points hold ({n_large} large-gap, {n_small} small-gap); {} failed solves; worst ln(measured/bound) = {worst:.4}{}",
            train_rec.len(),
            held.iter().filter(|h| **h).count(),
            held.len(),
            f1 + f2,
            if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join(" ")) }
        ),
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv" || x == "svg"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism_and_cache() -> Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let run = |out: &str, cache: &str, jobs: usize| -> Result<Vec<(String, Vec<u8>)>> {
        let cfg = ExperimentConfig {
            output_dir: tmp.path().join(out),
            cache_dir: Some(tmp.path().join(cache)),
            seed: 42,
            jobs,
            pair_family: "random-bumps".into(),
            pair_count: 4,
            ..sweep_config(1.0 / 16.0)
        };
        cmd_sweep(&cfg)?;
        Ok(csv_files(&cfg.output_dir))
    };
    let a = run("a", "cache-a", 1)?;
    let b = run("b", "cache-b", 3)?;
    let identical = a == b && !a.is_empty();

    let cfg = ExperimentConfig {
        cache_dir: Some(tmp.path().join("cache-a")),
        seed: 42,
        pair_family: "random-bumps".into(),
        pair_count: 4,
        ..sweep_config(1.0 / 16.0)
    };
    let warm_cache = cfg.cache()?;
    let warm = sweep(&cfg, &warm_cache)?;
    let stats = warm_cache.stats();
    let mut warm_csv = Vec::new();
    stabilab::sweep::write_records_csv(&warm.records, &mut warm_csv)?;
    let cold_csv = &a.iter().find(|f| f.0 == "records.csv").unwrap().1;
    let same_physics = warm_csv == *cold_csv;
    Ok(Outcome {
        pass: identical && same_physics && stats.solves == 0,
        detail: format!(
            "{} output files byte-identical across runs (jobs 1 vs 3): {identical}; warm rerun: {} solves, {} disk hits, identical records: {same_physics}",
            a.len(),
            stats.solves,
            stats.disk_hits
        ),
    })
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("zeta algebra", zeta_algebra),
        ("CGO remainder decay", cgo_decay),
        ("Carleman inequality", carleman),
        ("Green identity", green_identity),
        ("Fourier-mode estimator", fourier_estimator),
        ("schedule invariants", schedule_invariants),
        ("increasing stability", increasing_stability),
        ("bound verification", bound_verification),
        ("determinism and cache", determinism_and_cache),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let (mut failed, mut run) = (0, 0);
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        run += 1;
        let t = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        failed += !o.pass as usize;
        println!(
            "criterion {} {} {name}: {} ({:.1} s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria pass", run - failed, run);
}
