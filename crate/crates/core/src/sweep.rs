//! Frequency sweep over a family of potential pairs: DN gaps, H⁻¹ and L∞
//! differences, schedules and bounds, with the regression exponent β(ω).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dn::{operator_norm_fractional, BoundaryNormCalculus, DnCache};
use crate::error::{invalid, Error, Result};
use crate::forward::SolverOptions;
use crate::geometry::{partition_boundary, DomainGrid, Point};
use crate::potential::{sample_profiles, PotentialField, Profile};
use crate::schedule::{
    bound_holds, calibrate_global_constant, hminus1_norm, ln_gap, ln_rhs_uncalibrated, schedule_params, Regime, ScheduleConfig,
    ScheduleParams,
};

#[derive(Clone, Debug)]
pub struct PotentialPair {
    pub label: String,
    pub q1: PotentialField,
    pub q2: PotentialField,
}

/// Named pair families.
#[derive(Clone, Debug, PartialEq)]
pub enum PairFamily {
    /// Shared background; the second potential adds a windowed cosine of
    /// growing frequency.
    FrequencyLadder { count: usize, amplitude: f64, step: f64 },
    /// Both potentials equal.
    Identical { count: usize },
    /// Independent random bumps drawn from `seed`.
    RandomBumps { count: usize, seed: u64 },
}

impl PairFamily {
    pub fn parse(name: &str, count: usize, seed: u64) -> Result<Self> {
        match name {
            "frequency-ladder" => Ok(PairFamily::FrequencyLadder {
                count,
                amplitude: 1.0,
                step: 3.0,
            }),
            "identical" => Ok(PairFamily::Identical { count }),
            "random-bumps" => Ok(PairFamily::RandomBumps { count, seed }),
            other => invalid(format!("unknown pair family '{other}'")),
        }
    }
}

fn background() -> Profile {
    Profile::Gaussian {
        center: [0.05, -0.03, 0.02],
        width: 0.18,
        amplitude: 2.0,
    }
}

fn random_bump(rng: &mut ChaCha8Rng) -> Profile {
    let c: Point = std::array::from_fn(|_| rng.random_range(-0.15..0.15));
    let amp = rng.random_range(0.5..3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    if rng.random::<bool>() {
        Profile::Gaussian {
            center: c,
            width: rng.random_range(0.08..0.16),
            amplitude: amp,
        }
    } else {
        let k: Point = std::array::from_fn(|_| rng.random_range(-8.0..8.0));
        Profile::Trig {
            wavevector: k,
            phase: rng.random_range(0.0..6.28),
            center: c,
            width: rng.random_range(0.1..0.16),
            amplitude: amp,
        }
    }
}

/// Pairs of the family on `grid`, with smoothness `s`. The bound `M` of
/// every potential is set to the largest H^s norm in the family.
pub fn build_pairs(grid: &DomainGrid, family: &PairFamily, s: u32) -> Result<Vec<PotentialPair>> {
    let mut raw: Vec<(String, Vec<Profile>, Vec<Profile>)> = Vec::new();
    match family {
        PairFamily::FrequencyLadder { count, amplitude, step } => {
            for i in 0..*count {
                let k = step * i as f64;
                let pert = Profile::Trig {
                    wavevector: [k, 0.5 * k, 0.0],
                    phase: 0.0,
                    center: [0.0; 3],
                    width: 0.15,
                    amplitude: *amplitude,
                };
                raw.push((format!("ladder-{i}"), vec![background()], vec![background(), pert]));
            }
        }
        PairFamily::Identical { count } => {
            for i in 0..*count {
                raw.push((format!("identical-{i}"), vec![background()], vec![background()]));
            }
        }
        PairFamily::RandomBumps { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for i in 0..*count {
                let a = vec![background(), random_bump(&mut rng)];
                let b = vec![background(), random_bump(&mut rng)];
                raw.push((format!("random-{seed}-{i}"), a, b));
            }
        }
    }
    let mut pairs = Vec::with_capacity(raw.len());
    let mut m = 0.0f64;
    let mut tmp = Vec::with_capacity(raw.len());
    for (label, a, b) in raw {
        let q1 = sample_profiles(grid, &a, s, f64::MAX)?;
        let q2 = sample_profiles(grid, &b, s, f64::MAX)?;
        m = m.max(q1.sobolev_norm(grid)?).max(q2.sobolev_norm(grid)?);
        tmp.push((label, q1, q2));
    }
    let m = m.max(1e-12);
    for (label, q1, q2) in tmp {
        pairs.push(PotentialPair {
            label,
            q1: PotentialField::new(grid, q1.values().to_vec(), s, m)?,
            q2: PotentialField::new(grid, q2.values().to_vec(), s, m)?,
        });
    }
    Ok(pairs)
}

/// Re-tags every potential with the class bound `m`; fails if one exceeds it.
pub fn with_bound(grid: &DomainGrid, pairs: Vec<PotentialPair>, m: f64) -> Result<Vec<PotentialPair>> {
    pairs
        .into_iter()
        .map(|p| {
            let retag = |q: &PotentialField| -> Result<PotentialField> {
                let n = q.sobolev_norm(grid)?;
                if n > m {
                    return Err(Error::AssumptionViolation {
                        reason: format!("H^s norm {n:.6e} exceeds M = {m:.6e}"),
                        q_id: q.id(),
                        omega: f64::NAN,
                    });
                }
                PotentialField::new(grid, q.values().to_vec(), q.s(), m)
            };
            Ok(PotentialPair {
                q1: retag(&p.q1)?,
                q2: retag(&p.q2)?,
                label: p.label,
            })
        })
        .collect()
}

/// Largest H^s norm over the pairs.
pub fn family_bound(grid: &DomainGrid, pairs: &[PotentialPair]) -> Result<f64> {
    let mut m = 0.0f64;
    for p in pairs {
        m = m.max(p.q1.sobolev_norm(grid)?).max(p.q2.sobolev_norm(grid)?);
    }
    Ok(m)
}

pub struct SweepSpec<'a> {
    pub grid: &'a DomainGrid,
    pub pairs: &'a [PotentialPair],
    pub omegas: &'a [f64],
    pub alpha: Point,
    pub epsilon: f64,
    /// `m_bound` and `c2m` are taken from here as given.
    pub schedule: ScheduleConfig,
    pub solver: SolverOptions,
    pub cache: &'a DnCache,
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRecord {
    pub pair: String,
    pub omega: f64,
    pub dn_gap: f64,
    pub hminus1: f64,
    pub linfty: f64,
    pub schedule: ScheduleParams,
    /// `ln` of the bound without the global constant.
    pub ln_rhs: f64,
    pub regime: Regime,
}

impl StabilityRecord {
    /// Set when a zero gap was replaced by the log cap.
    pub fn synthetic(&self) -> bool {
        self.schedule.capped
    }

    pub fn gap_point(&self) -> GapPoint {
        GapPoint {
            omega: self.omega,
            dn_gap: self.dn_gap,
            hminus1: self.hminus1,
        }
    }
}

/// The columns the regression and the plot need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapPoint {
    pub omega: f64,
    pub dn_gap: f64,
    pub hminus1: f64,
}

pub fn gap_points(records: &[StabilityRecord]) -> Vec<GapPoint> {
    records.iter().map(StabilityRecord::gap_point).collect()
}

/// Reads `omega`, `dn_gap` and `hminus1` back from a records CSV.
pub fn read_gap_points(text: &str) -> Result<Vec<GapPoint>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::CorruptRecord(format!("records CSV lacks column '{name}'")))
    };
    let (iw, ig, ih) = (col("omega")?, col("dn_gap")?, col("hminus1")?);
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::CorruptRecord(format!("records CSV row {}: bad value in column {i}", n + 2)))
        };
        out.push(GapPoint {
            omega: get(iw)?,
            dn_gap: get(ig)?,
            hminus1: get(ih)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaFit {
    pub omega: f64,
    pub beta: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub pair: String,
    pub omega: f64,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub records: Vec<StabilityRecord>,
    pub betas: Vec<BetaFit>,
    pub failures: Vec<SweepFailure>,
}

fn check_omegas(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return invalid("empty omega grid");
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) || omegas.iter().any(|w| !(*w > 1.0)) {
        return invalid("omega grid must be strictly increasing and above 1");
    }
    Ok(())
}

fn sweep_point(
    spec: &SweepSpec,
    calc: &BoundaryNormCalculus,
    pair: &PotentialPair,
    norms: (f64, f64),
    omega: f64,
) -> Result<StabilityRecord> {
    let grid = spec.grid;
    let part = partition_boundary(grid, spec.alpha, spec.epsilon)?;
    let d1 = spec.cache.get_or_build(grid, &pair.q1, omega, spec.solver)?;
    let d2 = spec.cache.get_or_build(grid, &pair.q2, omega, spec.solver)?;
    let diff = d1.restrict_partial(&part)?.difference(&d2.restrict_partial(&part)?)?;
    let gap = operator_norm_fractional(&diff, calc)?;
    let schedule = schedule_params(omega, ln_gap(gap), &spec.schedule)?;
    let ln_rhs = ln_rhs_uncalibrated(&schedule)?;
    Ok(StabilityRecord {
        pair: pair.label.clone(),
        omega,
        dn_gap: gap,
        hminus1: norms.0,
        linfty: norms.1,
        regime: schedule.regime,
        schedule,
        ln_rhs,
    })
}

/// Runs every (pair, ω) point; failures are collected and the sweep continues.
/// Records are ordered by ω, then by pair.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    check_omegas(spec.omegas)?;
    if spec.pairs.is_empty() {
        return invalid("empty pair family");
    }
    let calc = BoundaryNormCalculus::new(spec.grid)?;
    let norms: Vec<(f64, f64)> = spec
        .pairs
        .iter()
        .map(|p| {
            let d = p.q1.difference(&p.q2)?;
            Ok((hminus1_norm(spec.grid, &d)?, d.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        })
        .collect::<Result<_>>()?;
    let points: Vec<(usize, usize)> = (0..spec.omegas.len())
        .flat_map(|w| (0..spec.pairs.len()).map(move |p| (w, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<StabilityRecord>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(w, p)| sweep_point(spec, &calc, &spec.pairs[p], norms[p], spec.omegas[w]))
            .collect()
    });
    let mut result = SweepResult::default();
    for ((w, p), out) in points.into_iter().zip(outcomes) {
        match out {
            Ok(r) => result.records.push(r),
            Err(e) => {
                log::warn!("sweep point {} omega={} failed: {e}", spec.pairs[p].label, spec.omegas[w]);
                result.failures.push(SweepFailure {
                    pair: spec.pairs[p].label.clone(),
                    omega: spec.omegas[w],
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    result.betas = fit_beta(&gap_points(&result.records), spec.omegas);
    Ok(result)
}

/// Least-squares slope of `ln‖q₁-q₂‖_{H⁻¹}` against `ln gap` at each ω,
/// over points with both quantities positive. Frequencies with fewer than
/// two such points are omitted.
pub fn fit_beta(points: &[GapPoint], omegas: &[f64]) -> Vec<BetaFit> {
    let mut out = Vec::new();
    for &omega in omegas {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|r| r.omega == omega && r.dn_gap > 0.0 && r.hminus1 > 0.0)
            .map(|r| (r.dn_gap.ln(), r.hminus1.ln()))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            continue;
        }
        let beta = sxy / sxx;
        let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
        out.push(BetaFit {
            omega,
            beta,
            intercept: my - beta * mx,
            r2,
            points: pts.len(),
        });
    }
    out
}

/// `ln C` fitted on training records: the largest `ln‖q₁-q₂‖_∞ - ln rhs`.
pub fn calibrate_records(train: &[StabilityRecord]) -> Result<f64> {
    calibrate_global_constant(&train.iter().map(|r| (ln_gap(r.linfty), r.ln_rhs)).collect::<Vec<_>>())
}

/// Whether each record satisfies `‖q₁-q₂‖_∞ ≤ C·rhs`.
pub fn check_records(records: &[StabilityRecord], ln_c: f64) -> Vec<bool> {
    records
        .iter()
        .map(|r| bound_holds(ln_gap(r.linfty), ln_c, r.ln_rhs))
        .collect()
}

/// Longest non-decreasing run of `β` in ω order, as a subsequence length.
pub fn longest_non_decreasing(betas: &[BetaFit]) -> usize {
    let b: Vec<f64> = betas.iter().map(|f| f.beta).collect();
    let mut best = vec![1usize; b.len()];
    for i in 0..b.len() {
        for j in 0..i {
            if b[j] <= b[i] {
                best[i] = best[i].max(best[j] + 1);
            }
        }
    }
    best.into_iter().max().unwrap_or(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub const RECORD_COLUMNS: &str =
    "pair,omega,dn_gap,hminus1,linfty,regime,ln_delta,rho,lambda,lambda_tilde,K,L,eta,p,ln_rhs,synthetic";

pub fn write_records_csv<W: Write>(records: &[StabilityRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RECORD_COLUMNS}")?;
    for r in records {
        let s = &r.schedule;
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.pair,
            r.omega,
            r.dn_gap,
            r.hminus1,
            r.linfty,
            r.regime.as_str(),
            s.ln_delta,
            fmt_opt(s.rho),
            fmt_opt(s.lambda),
            s.lambda_tilde,
            s.k,
            s.l,
            s.eta,
            s.p,
            r.ln_rhs,
            r.synthetic() as u8
        )?;
    }
    Ok(())
}

pub fn write_beta_csv<W: Write>(betas: &[BetaFit], mut out: W) -> Result<()> {
    writeln!(out, "omega,beta,intercept,r2,points")?;
    for b in betas {
        writeln!(out, "{:.12e},{:.12e},{:.12e},{:.12e},{}", b.omega, b.beta, b.intercept, b.r2, b.points)?;
    }
    Ok(())
}

pub fn write_failures_csv<W: Write>(failures: &[SweepFailure], mut out: W) -> Result<()> {
    writeln!(out, "pair,omega,kind,message")?;
    for f in failures {
        writeln!(out, "{},{:.12e},{},\"{}\"", f.pair, f.omega, f.kind, f.message.replace('"', "'"))?;
    }
    Ok(())
}

/// Log–log scatter of `‖q₁-q₂‖_{H⁻¹}` against the gap, one color per ω.
pub fn write_svg<W: Write>(points: &[GapPoint], mut out: W) -> Result<()> {
    const W_: f64 = 640.0;
    const H_: f64 = 480.0;
    const PAD: f64 = 60.0;
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|r| r.dn_gap > 0.0 && r.hminus1 > 0.0)
        .map(|r| (r.omega, r.dn_gap.log10(), r.hminus1.log10()))
        .collect();
    let range = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = range(&|p| p.1);
    let (y0, y1) = range(&|p| p.2);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W_ - 2.0 * PAD);
    let sy = |y: f64| H_ - PAD - (y - y0) / (y1 - y0) * (H_ - 2.0 * PAD);
    let mut omegas: Vec<f64> = pts.iter().map(|p| p.0).collect();
    omegas.sort_by(|a, b| a.total_cmp(b));
    omegas.dedup();
    let palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W_}" height="{H_}" viewBox="0 0 {W_} {H_}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H_ - PAD,
        r = W_ - PAD
    )?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">log10 DN gap [{x0:.2}, {x1:.2}]</text>"#,
        W_ / 2.0,
        H_ - 20.0
    )?;
    writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">log10 H^-1 difference [{y0:.2}, {y1:.2}]</text>"#,
        H_ / 2.0,
        H_ / 2.0
    )?;
    for (i, w) in omegas.iter().enumerate() {
        let color = palette[i % palette.len()];
        for p in pts.iter().filter(|p| p.0 == *w) {
            writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, sx(p.1), sy(p.2))?;
        }
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">omega = {w}</text>"#,
            W_ - PAD - 80.0,
            PAD + 16.0 * i as f64
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    fn record(pair: &str, omega: f64, gap: f64, hm1: f64) -> StabilityRecord {
        let cfg = ScheduleConfig {
            n: 3,
            s: 2.0,
            theta: 0.5,
            radius: 1.0,
            m_bound: 10.0,
            lambda0: 1.0,
            c2m: 0.02,
            margin: 0.1,
        };
        let schedule = schedule_params(omega, ln_gap(gap), &cfg).unwrap();
        StabilityRecord {
            pair: pair.into(),
            omega,
            dn_gap: gap,
            hminus1: hm1,
            linfty: hm1,
            ln_rhs: ln_rhs_uncalibrated(&schedule).unwrap(),
            regime: schedule.regime,
            schedule,
        }
    }

    #[test]
    fn beta_recovers_power_law() {
        let mut recs = Vec::new();
        for (w, beta) in [(2.0, 0.4), (4.0, 0.9)] {
            for i in 0..5 {
                let gap = 10f64.powi(-i - 1);
                recs.push(record(&format!("p{i}"), w, gap, 3.0 * gap.powf(beta)));
            }
        }
        let fits = fit_beta(&gap_points(&recs), &[2.0, 4.0, 8.0]);
        assert_eq!(fits.len(), 2);
        assert!((fits[0].beta - 0.4).abs() < 1e-12);
        assert!((fits[1].beta - 0.9).abs() < 1e-12);
        assert!((fits[1].intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fits[0].r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_decreasing_subsequence() {
        let mk = |b: &[f64]| -> Vec<BetaFit> {
            b.iter()
                .map(|&beta| BetaFit {
                    omega: 1.0,
                    beta,
                    intercept: 0.0,
                    r2: 1.0,
                    points: 2,
                })
                .collect()
        };
        assert_eq!(longest_non_decreasing(&mk(&[0.6, 0.5, 1.1, 2.0])), 3);
        assert_eq!(longest_non_decreasing(&mk(&[3.0, 2.0, 1.0])), 1);
        assert_eq!(longest_non_decreasing(&mk(&[])), 0);
    }

    #[test]
    fn random_family_is_seeded() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        let a = build_pairs(&g, &PairFamily::RandomBumps { count: 3, seed: 5 }, 2).unwrap();
        let b = build_pairs(&g, &PairFamily::RandomBumps { count: 3, seed: 5 }, 2).unwrap();
        let c = build_pairs(&g, &PairFamily::RandomBumps { count: 3, seed: 6 }, 2).unwrap();
        assert_eq!(a[2].q2.values(), b[2].q2.values());
        assert_ne!(a[2].q2.values(), c[2].q2.values());
        let m = a[0].q1.bound();
        assert!(a.iter().all(|p| p.q1.bound() == m && p.q2.sobolev_norm(&g).unwrap() <= m));
    }

    #[test]
    fn identical_pairs_hit_the_cap() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        let pairs = build_pairs(&g, &PairFamily::Identical { count: 1 }, 2).unwrap();
        let cache = DnCache::in_memory();
        let spec = SweepSpec {
            grid: &g,
            pairs: &pairs,
            omegas: &[2.0, 3.0],
            alpha: [1.0, 0.0, 0.0],
            epsilon: 0.1,
            schedule: ScheduleConfig {
                n: 3,
                s: 2.0,
                theta: 0.5,
                radius: 1.0,
                m_bound: pairs[0].q1.bound(),
                lambda0: 1.0,
                c2m: 0.01,
                margin: 0.1,
            },
            solver: SolverOptions::default(),
            cache: &cache,
            jobs: 1,
        };
        let r = run_sweep(&spec).unwrap();
        assert!(r.failures.is_empty());
        assert_eq!(r.records.len(), 2);
        for rec in &r.records {
            assert_eq!(rec.dn_gap, 0.0);
            assert!(rec.synthetic());
            assert_eq!(rec.regime, Regime::SmallGap);
        }
        assert!(r.betas.is_empty());
        assert_eq!(cache.stats().solves, 2);
    }

    #[test]
    fn rejects_bad_omega_grid() {
        assert!(check_omegas(&[]).is_err());
        assert!(check_omegas(&[2.0, 2.0]).is_err());
        assert!(check_omegas(&[0.5, 2.0]).is_err());
        assert!(check_omegas(&[2.0, 4.0]).is_ok());
    }

    #[test]
    fn csv_has_fixed_precision() {
        let recs = vec![record("p0", 2.0, 1e-3, 2e-2)];
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RECORD_COLUMNS);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), RECORD_COLUMNS.split(',').count());
        assert_eq!(row[1], "2.000000000000e0");
        assert_eq!(row[2], "1.000000000000e-3");
        let mut svg = Vec::new();
        write_svg(&gap_points(&recs), &mut svg).unwrap();
        assert!(String::from_utf8(svg).unwrap().contains("<circle"));
        assert_eq!(read_gap_points(&text).unwrap(), gap_points(&recs));
    }
}
