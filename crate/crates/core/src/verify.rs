//! Built-in battery of analytic identities and bounds, each on a fixed
//! reference configuration small enough to run in seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{critical_speeds, homogeneous_speed_c_h, lambda_of_c, speed_bound};
use crate::discretization::{assemble, assemble_coupled, Grid, OperatorKind};
use crate::dynamics::{check_comparison, evolve_classify, State, Verdict};
use crate::eigen::{principal_eigenpair, rayleigh_quotient, ExhaustConfig, SpacingRule};
use crate::error::{Error, Result};
use crate::model::{positive_part, NicheProfile, Parameters, ReactionTerm};

pub const CHECKS: &[&str] = &[
    "shift-identity",
    "speed-bound",
    "kappa-bound",
    "min-at-zero",
    "mu-bound",
    "monotonicity",
    "road-deleterious",
    "road-harmful",
    "persistence-all-D",
    "effect-road",
    "l-infinity",
    "rayleigh-upper",
    "comparison",
    "dichotomy",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// The quantity compared against `threshold`.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!(
                "{} {:<18} measured {:>12.5e}  threshold {:>12.5e}  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s += &format!("{} checks, {} failed\n", self.checks.len(), failed);
        s
    }
}

fn params(dd: f64, d: f64, mu: f64, nu: f64) -> Parameters {
    Parameters::new(dd, d, mu, nu, 0.0).expect("reference parameters are valid")
}

fn radial(l: f64) -> NicheProfile {
    NicheProfile::radial(l).expect("finite scale")
}

fn ladder(x0: f64, h: f64, stop_tol: f64, max_steps: usize) -> ExhaustConfig {
    ExhaustConfig {
        x0,
        growth: 1.5,
        spacing: SpacingRule::Fixed(h),
        stop_tol,
        max_steps,
        ..Default::default()
    }
}

/// Eigenvalue on one fixed truncation.
fn fixed_lambda(kind: OperatorKind, p: &Parameters, profile: &NicheProfile, grid: &Grid) -> Result<f64> {
    Ok(principal_eigenpair(&assemble(kind, grid, p, profile)?, 1e-10)?.lambda)
}

fn result(name: &str, passed: bool, measured: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        measured,
        threshold,
        detail,
    }
}

fn shift_identity() -> Result<CheckResult> {
    let (d, c) = (2.0, 1.0);
    let p = params(d, d, 1.0, 1.0);
    let cfg = ladder(8.0, 0.25, 1e-5, 4);
    let prof = radial(3.0);
    let l0 = lambda_of_c(&p, &prof, OperatorKind::Coupled, &cfg, 0.0)?.lambda_inf;
    let lc = lambda_of_c(&p, &prof, OperatorKind::Coupled, &cfg, c)?.lambda_inf;
    let expected = c * c / (4.0 * d);
    let rel = ((lc - l0) - expected).abs() / expected;
    Ok(result(
        "shift-identity",
        rel <= 0.02,
        rel,
        0.02,
        format!(
            "d = D = {d}, c = {c}: lambda(c) - lambda(0) = {:.6}, c^2/(4d) = {expected}",
            lc - l0
        ),
    ))
}

fn speed_bound_check() -> Result<CheckResult> {
    let p = params(4.0, 1.0, 1.0, 1.0);
    let prof = radial(3.0);
    let tol = 1e-2;
    let s = critical_speeds(&p, &prof, &ladder(8.0, 0.5, 1e-3, 3), tol)?;
    let excess = s.c_star_upper - s.bound;
    Ok(result(
        "speed-bound",
        excess <= 2.0 * tol && s.c_star <= s.c_star_upper,
        excess,
        2.0 * tol,
        format!(
            "d = 1, D = 4: c_star = {:.4}, c_star_upper = {:.4}, bound = {:.4}",
            s.c_star, s.c_star_upper, s.bound
        ),
    ))
}

/// Configuration, niche, tolerance and `(c, lambda)` points.
type ScanData = (Parameters, NicheProfile, f64, Vec<(f64, f64)>);

/// `lambda(c)` on a short scan shared by the two speed-dependent bounds.
fn scan() -> Result<ScanData> {
    let p = params(2.0, 1.0, 1.0, 1.0);
    let prof = radial(2.0);
    let cfg = ladder(8.0, 0.5, 1e-4, 4);
    let bound = speed_bound(&p, &prof, OperatorKind::Coupled);
    let mut out = Vec::new();
    for k in 0..=6 {
        let c = bound * k as f64 / 6.0;
        out.push((c, lambda_of_c(&p, &prof, OperatorKind::Coupled, &cfg, c)?.lambda_inf));
    }
    Ok((p, prof, cfg.stop_tol, out))
}

fn kappa_bound() -> Result<CheckResult> {
    let (p, prof, tol, pts) = scan()?;
    let sup = positive_part(prof.sup_m());
    let worst = pts
        .iter()
        .map(|&(c, l)| l - (c * c / (4.0 * p.max_diffusion()) - sup))
        .fold(f64::INFINITY, f64::min);
    Ok(result(
        "kappa-bound",
        worst >= -tol,
        worst,
        -tol,
        "min over c of lambda(c) - (c^2/(4 max{d,D}) - [sup m]^+)".into(),
    ))
}

fn min_at_zero() -> Result<CheckResult> {
    let (_, _, tol, pts) = scan()?;
    let l0 = pts[0].1;
    let worst = pts.iter().map(|&(_, l)| l - l0).fold(f64::INFINITY, f64::min);
    Ok(result(
        "min-at-zero",
        worst >= -tol,
        worst,
        -tol,
        "min over c of lambda(c) - lambda(0)".into(),
    ))
}

fn mu_bound() -> Result<CheckResult> {
    let cfg = ladder(8.0, 0.5, 1e-4, 6);
    let mut worst = f64::NEG_INFINITY;
    for mu in [0.2, 1.0, 5.0] {
        let r = lambda_of_c(&params(1.0, 1.0, mu, 1.0), &radial(1.0), OperatorKind::Coupled, &cfg, 0.0)?;
        worst = worst.max(r.lambda_inf - mu);
    }
    Ok(result(
        "mu-bound",
        worst <= cfg.stop_tol,
        worst,
        cfg.stop_tol,
        "max over mu in {0.2, 1, 5} of lambda - mu".into(),
    ))
}

fn monotonicity() -> Result<CheckResult> {
    let grid = Grid::new(8.0, 8.0, 0.5)?;
    let slack = 1e-6;
    let mut worst = f64::NEG_INFINITY;
    let base = params(1.0, 1.0, 1.0, 1.0);
    // Nonincreasing in L.
    let ls = [-2.0, 0.0, 2.0, 4.0];
    let lam_l: Vec<f64> = ls
        .iter()
        .map(|&l| fixed_lambda(OperatorKind::Coupled, &base, &radial(l), &grid))
        .collect::<Result<_>>()?;
    worst = lam_l.windows(2).map(|w| w[1] - w[0]).fold(worst, f64::max);
    // Nondecreasing in d and in D.
    let ks = [0.5, 1.0, 2.0];
    for field in [true, false] {
        let lam: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let p = if field {
                    params(1.0, k, 1.0, 1.0)
                } else {
                    params(k, 1.0, 1.0, 1.0)
                };
                fixed_lambda(OperatorKind::Coupled, &p, &radial(2.0), &grid)
            })
            .collect::<Result<_>>()?;
        worst = lam.windows(2).map(|w| w[0] - w[1]).fold(worst, f64::max);
    }
    Ok(result(
        "monotonicity",
        worst <= slack,
        worst,
        slack,
        "largest wrong-way step along L, d and D ladders at c = 0".into(),
    ))
}

fn road_deleterious() -> Result<CheckResult> {
    let grid = Grid::new(8.0, 8.0, 0.5)?;
    let mut bad = 0usize;
    let mut rows = 0usize;
    for l in [1.0, 2.0, 3.0] {
        let prof = radial(l);
        let ln = fixed_lambda(OperatorKind::Neumann, &params(1.0, 1.0, 1.0, 1.0), &prof, &grid)?;
        for dd in [1.0, 10.0] {
            for mu in [1.0, 5.0] {
                rows += 1;
                let l1 = fixed_lambda(OperatorKind::Coupled, &params(dd, 1.0, mu, 1.0), &prof, &grid)?;
                if ln >= 0.0 && l1 < 0.0 {
                    bad += 1;
                }
            }
        }
    }
    Ok(result(
        "road-deleterious",
        bad == 0,
        bad as f64,
        0.0,
        format!("rows with lambda_N >= 0 and lambda_1 < 0 out of {rows}"),
    ))
}

/// Niche scale where the field-only eigenvalue changes sign on `grid`.
fn no_road_threshold(grid: &Grid) -> Result<f64> {
    let p = params(1.0, 1.0, 1.0, 1.0);
    let f = |l: f64| fixed_lambda(OperatorKind::Neumann, &p, &radial(l), grid);
    let (mut lo, mut hi) = (0.0, 6.0);
    if f(lo)? < 0.0 || f(hi)? >= 0.0 {
        return Err(Error::Structural("no sign change of lambda_N on [0, 6]".into()));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

fn road_harmful() -> Result<CheckResult> {
    let grid = Grid::new(10.0, 10.0, 0.5)?;
    let l_bar = no_road_threshold(&grid)?;
    let mut best = f64::NEG_INFINITY;
    let mut witness = String::from("none");
    for dl in [0.05, 0.1, 0.2, 0.4] {
        let prof = radial(l_bar + dl);
        let ln = fixed_lambda(OperatorKind::Neumann, &params(1.0, 1.0, 1.0, 1.0), &prof, &grid)?;
        if ln >= -0.01 {
            continue;
        }
        for dd in [1.0, 10.0, 100.0] {
            let l1 = fixed_lambda(OperatorKind::Coupled, &params(dd, 1.0, 1.0, 1.0), &prof, &grid)?;
            let margin = l1.min(-ln);
            if margin > best {
                best = margin;
                witness = format!("L = {:.3}, D = {dd}: lambda_N = {ln:.4}, lambda_1 = {l1:.4}", l_bar + dl);
            }
        }
    }
    Ok(result("road-harmful", best > 0.01, best, 0.01, witness))
}

fn persistence_all_d() -> Result<CheckResult> {
    let grid = Grid::new(10.0, 10.0, 0.5)?;
    let l_bar = no_road_threshold(&grid)?;
    let mut found = None;
    for k in 0..=10 {
        let l = l_bar + 0.5 * k as f64;
        let prof = radial(l);
        let worst = [1.0, 10.0, 100.0]
            .iter()
            .map(|&dd| fixed_lambda(OperatorKind::Coupled, &params(dd, 1.0, 1.0, 1.0), &prof, &grid))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < 0.0 {
            found = Some((l, worst));
            break;
        }
    }
    Ok(match found {
        Some((l, worst)) => result(
            "persistence-all-D",
            true,
            worst,
            0.0,
            format!("L = {l:.3}: max over D in {{1, 10, 100}} of lambda_1"),
        ),
        None => result("persistence-all-D", false, f64::NAN, 0.0, "no L found".into()),
    })
}

fn effect_road() -> Result<CheckResult> {
    let p = params(10.0, 1.0, 1.0, 1.0);
    let tol = 2e-2;
    let c_h = homogeneous_speed_c_h(&p, &ladder(16.0, 0.5, 1e-3, 2), tol)?.c_star;
    let mut speeds = Vec::new();
    for l in [2.0, 4.0, 8.0] {
        let s = critical_speeds(&p, &radial(l), &ladder(l + 8.0, 0.5, 1e-3, 2), tol)?;
        speeds.push(s.c_star);
    }
    let nondecreasing = speeds.windows(2).all(|w| w[1] >= w[0] - 2.0 * tol);
    let gaps: Vec<f64> = speeds.iter().map(|c| (c - c_h).abs()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(result(
        "effect-road",
        nondecreasing && shrinking,
        gaps[2],
        gaps[0],
        format!(
            "D = 10: c_star(L = 2, 4, 8) = {:.3}, {:.3}, {:.3}; c_H = {c_h:.3}",
            speeds[0], speeds[1], speeds[2]
        ),
    ))
}

fn l_infinity() -> Result<CheckResult> {
    let p = params(1.0, 1.0, 1.0, 1.0);
    let grid = Grid::new(24.0, 24.0, 0.5)?;
    let homogeneous = NicheProfile::constant(1.0, true)?;
    let mut worst = 0.0f64;
    for c in [0.0, 1.0] {
        let q = p.with_c(c);
        let lh = fixed_lambda(OperatorKind::Coupled, &q, &homogeneous, &grid)?;
        let l1 = fixed_lambda(OperatorKind::Coupled, &q, &radial(16.0), &grid)?;
        worst = worst.max((l1 - lh).abs() / lh.abs());
    }
    Ok(result(
        "l-infinity",
        worst <= 0.1,
        worst,
        0.1,
        "relative gap between lambda_1(c, L = 16) and lambda_H(c), c in {0, 1}".into(),
    ))
}

fn rayleigh_upper(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let grid = Grid::new(3.0, 3.0, 0.5)?;
    let p = params(2.0, 1.0, 1.0, 0.5);
    let prof = radial(1.0);
    let lambda = principal_eigenpair(&assemble_coupled(&grid, &p, &prof)?, 1e-12)?.lambda;
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let phi: Vec<f64> = (0..grid.nx).map(|_| rng.random::<f64>()).collect();
        let psi: Vec<f64> = (0..grid.nx * grid.ny).map(|_| rng.random::<f64>()).collect();
        worst = worst.min(rayleigh_quotient(&grid, &p, &prof, &phi, &psi)? - lambda);
    }
    Ok(result(
        "rayleigh-upper",
        worst >= -1e-8,
        worst,
        -1e-8,
        "min over 100 random pairs of quotient - lambda".into(),
    ))
}

fn comparison(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let grid = Grid::new(4.0, 4.0, 0.5)?;
    let p = params(1.0, 1.0, 1.0, 1.0);
    let term = ReactionTerm::new(radial(3.0));
    let mut worst = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for _ in 0..3 {
        let x0 = rng.random_range(-2.0..2.0);
        let y0 = rng.random_range(0.5..3.0);
        let high = State::bump(&grid, x0, y0, 1.0, 1.5);
        let mut low = high.clone();
        low.u.iter_mut().chain(low.v.iter_mut()).for_each(|v| *v *= 0.5);
        let r = check_comparison(&p, &term, &grid, &low, &high, 20.0, 0.05)?;
        worst = worst.max(r.max_violation);
        min_entry = min_entry.min(r.min_entry);
    }
    Ok(result(
        "comparison",
        worst <= 1e-10 && min_entry >= -1e-13,
        worst,
        1e-10,
        format!("ordering violation over 3 random bump pairs; smallest entry {min_entry:.3e}"),
    ))
}

fn dichotomy() -> Result<CheckResult> {
    let grid = Grid::new(8.0, 8.0, 0.5)?;
    let p = params(1.0, 1.0, 1.0, 1.0);
    let mut mismatches = 0usize;
    let mut detail = String::new();
    for l in [5.0, -5.0] {
        let c = evolve_classify(&p, &ReactionTerm::new(radial(l)), &grid, 300.0, 0.05, 1e-3)?;
        let expected = if c.lambda < 0.0 {
            Verdict::Persistence
        } else {
            Verdict::Extinction
        };
        if c.verdict != expected {
            mismatches += 1;
        }
        detail += &format!("L = {l}: lambda = {:.4}, {:?}; ", c.lambda, c.verdict);
    }
    Ok(result(
        "dichotomy",
        mismatches == 0,
        mismatches as f64,
        0.0,
        detail.trim_end_matches("; ").to_string(),
    ))
}

/// Runs the named checks (all of them when `names` is empty), in the fixed
/// order of [`CHECKS`]. A check that errors is reported as failed.
pub fn verify_suite(names: &[String], seed: u64) -> Result<VerifyReport> {
    for n in names {
        if !CHECKS.contains(&n.as_str()) {
            return Err(Error::config(format!("unknown check `{n}`; available: {}", CHECKS.join(", "))));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for &name in CHECKS {
        if !names.is_empty() && !names.iter().any(|n| n == name) {
            continue;
        }
        let r = match name {
            "shift-identity" => shift_identity(),
            "speed-bound" => speed_bound_check(),
            "kappa-bound" => kappa_bound(),
            "min-at-zero" => min_at_zero(),
            "mu-bound" => mu_bound(),
            "monotonicity" => monotonicity(),
            "road-deleterious" => road_deleterious(),
            "road-harmful" => road_harmful(),
            "persistence-all-D" => persistence_all_d(),
            "effect-road" => effect_road(),
            "l-infinity" => l_infinity(),
            "rayleigh-upper" => rayleigh_upper(&mut rng),
            "comparison" => comparison(&mut rng),
            "dichotomy" => dichotomy(),
            _ => unreachable!("names validated above"),
        };
        checks.push(r.unwrap_or_else(|e| result(name, false, f64::NAN, f64::NAN, format!("error: {e}"))));
    }
    Ok(VerifyReport {
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
