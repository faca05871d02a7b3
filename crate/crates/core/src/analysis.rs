//! Parameter studies: critical speeds, the diffusion threshold, the
//! homogeneous road-enhanced speed and sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{fmt_f64, Grid, OperatorKind};
use crate::dynamics::{evolve_classify, Verdict};
use crate::eigen::{exhaust_lambda, ExhaustConfig, ExhaustionResult};
use crate::error::{Error, Result};
use crate::model::{positive_part, NicheProfile, Parameters, ReactionTerm};

/// Scan resolution used before bisection.
pub const SCAN_POINTS: usize = 21;

/// Exhausted eigenvalue with the frame speed replaced by `c`.
pub fn lambda_of_c(p: &Parameters, profile: &NicheProfile, kind: OperatorKind, cfg: &ExhaustConfig, c: f64) -> Result<ExhaustionResult> {
    if !(c >= 0.0) {
        return Err(Error::invalid("frame speed c must be >= 0"));
    }
    exhaust_lambda(&p.with_c(c), profile, kind, cfg)
}

/// `2 sqrt(max{d, D} [sup m]^+)`, or the field-only analogue.
pub fn speed_bound(p: &Parameters, profile: &NicheProfile, kind: OperatorKind) -> f64 {
    let diffusion = if kind.has_road() { p.max_diffusion() } else { p.field_diffusion };
    2.0 * (diffusion * positive_part(profile.sup_m())).sqrt()
}

/// Homogeneous invasion speed `2 sqrt(d)` of `v(1 - v)`.
pub fn c_kpp(d: f64) -> f64 {
    2.0 * d.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub c: f64,
    pub lambda: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedPair {
    /// Start of `{lambda >= 0}` coming from the left.
    pub c_star: f64,
    /// End of `{lambda < 0}` coming from the right.
    pub c_star_upper: f64,
    pub bound: f64,
    pub bracket_width: f64,
    /// Some exhaustion along the way hit its step cap.
    pub provisional: bool,
    pub scan: Vec<ScanPoint>,
}

impl SpeedPair {
    pub const CSV_HEADER: &'static str = "c_star,c_star_upper,bound,bracket_width,provisional";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(self.c_star),
            fmt_f64(self.c_star_upper),
            fmt_f64(self.bound),
            fmt_f64(self.bracket_width),
            self.provisional
        )?;
        Ok(())
    }
}

struct SpeedProblem<'a> {
    p: &'a Parameters,
    profile: &'a NicheProfile,
    kind: OperatorKind,
    cfg: &'a ExhaustConfig,
}

impl SpeedProblem<'_> {
    fn eval(&self, c: f64) -> Result<ScanPoint> {
        let r = lambda_of_c(self.p, self.profile, self.kind, self.cfg, c)?;
        Ok(ScanPoint {
            c,
            lambda: r.lambda_inf,
            converged: r.converged,
        })
    }

    /// Bisects `[lo, hi]` with `lambda(lo) < 0 <= lambda(hi)`.
    fn bisect(&self, mut lo: f64, mut hi: f64, tol: f64, provisional: &mut bool) -> Result<(f64, f64)> {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let pt = self.eval(mid)?;
            *provisional |= !pt.converged;
            if pt.lambda < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi), hi - lo))
    }

    fn solve(&self, tol: f64) -> Result<SpeedPair> {
        if !(tol > 0.0) {
            return Err(Error::invalid("speed tolerance must be > 0"));
        }
        let bound = speed_bound(self.p, self.profile, self.kind);
        let first = self.eval(0.0)?;
        if first.lambda >= 0.0 || bound == 0.0 {
            return Ok(SpeedPair {
                c_star: 0.0,
                c_star_upper: 0.0,
                bound,
                bracket_width: 0.0,
                provisional: !first.converged,
                scan: vec![first],
            });
        }
        let n = SCAN_POINTS - 1;
        let rest: Vec<ScanPoint> = (1..=n)
            .into_par_iter()
            .map(|k| self.eval(bound * k as f64 / n as f64))
            .collect::<Result<_>>()?;
        let mut scan = vec![first];
        scan.extend(rest);
        let mut provisional = scan.iter().any(|s| !s.converged);

        let c_star;
        let c_star_upper;
        let mut width = 0.0f64;
        match scan.iter().position(|s| s.lambda >= 0.0) {
            None => {
                // Still negative at the bound: only possible through truncation error.
                provisional = true;
                c_star = bound;
                c_star_upper = bound;
            }
            Some(k) => {
                let (c, w) = self.bisect(scan[k - 1].c, scan[k].c, tol, &mut provisional)?;
                c_star = c;
                width = width.max(w);
                let last_neg = scan.iter().rposition(|s| s.lambda < 0.0).expect("lambda(0) < 0");
                if last_neg + 1 == k {
                    c_star_upper = c_star;
                } else {
                    let (c, w) = self.bisect(scan[last_neg].c, scan[last_neg + 1].c, tol, &mut provisional)?;
                    c_star_upper = c;
                    width = width.max(w);
                }
            }
        }
        Ok(SpeedPair {
            c_star,
            c_star_upper,
            bound,
            bracket_width: width,
            provisional,
            scan,
        })
    }
}

/// Lower and upper critical speeds of the coupled system: scan `[0, bound]`
/// at 21 points, then bisect the first and last sign changes. Returns
/// `(0, 0)` when the niche already fails at `c = 0`.
pub fn critical_speeds(p: &Parameters, profile: &NicheProfile, cfg: &ExhaustConfig, tol: f64) -> Result<SpeedPair> {
    SpeedProblem {
        p,
        profile,
        kind: OperatorKind::Coupled,
        cfg,
    }
    .solve(tol)
}

/// Critical speed of the field-only problem (reflecting boundary).
pub fn critical_speed_no_road(d: f64, profile: &NicheProfile, cfg: &ExhaustConfig, tol: f64) -> Result<SpeedPair> {
    let p = Parameters::new(d, d, 0.0, 0.0, 0.0)?;
    SpeedProblem {
        p: &p,
        profile,
        kind: OperatorKind::Neumann,
        cfg,
    }
    .solve(tol)
}

/// Root of the homogeneous eigenvalue `lambda_H(c)` (growth rate 1
/// everywhere). Truncation error decays only algebraically in the domain
/// size, so the ladder rarely meets `stop_tol` and the result is usually
/// flagged provisional.
pub fn homogeneous_speed_c_h(p: &Parameters, cfg: &ExhaustConfig, tol: f64) -> Result<SpeedPair> {
    let profile = NicheProfile::constant(1.0, true)?;
    critical_speeds(p, &profile, cfg, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub d_star: f64,
    pub bracket_width: f64,
    pub lambda_at_max: f64,
    pub provisional: bool,
}

/// Field diffusivity at which the `c = 0` eigenvalue changes sign,
/// bisecting geometrically on `[d_min, d_max]` (the eigenvalue is
/// nondecreasing in `d`). Zero when the niche already fails at `d_min`.
pub fn diffusion_threshold(
    p: &Parameters,
    profile: &NicheProfile,
    cfg: &ExhaustConfig,
    d_min: f64,
    d_max: f64,
    tol: f64,
) -> Result<Threshold> {
    if !(d_min > 0.0 && d_max > d_min) {
        return Err(Error::invalid("need 0 < d_min < d_max"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("threshold tolerance must be > 0"));
    }
    let base = p.with_c(0.0);
    let lam = |d: f64| -> Result<ExhaustionResult> {
        let q = Parameters {
            field_diffusion: d,
            ..base
        };
        q.validate()?;
        exhaust_lambda(&q, profile, OperatorKind::Coupled, cfg)
    };
    let hi_res = lam(d_max)?;
    let mut provisional = !hi_res.converged;
    if hi_res.lambda_inf < 0.0 {
        return Err(Error::config(format!(
            "eigenvalue still negative ({:.3e}) at d_max = {d_max}; raise d_max",
            hi_res.lambda_inf
        )));
    }
    let lo_res = lam(d_min)?;
    provisional |= !lo_res.converged;
    if lo_res.lambda_inf >= 0.0 {
        return Ok(Threshold {
            d_star: 0.0,
            bracket_width: 0.0,
            lambda_at_max: hi_res.lambda_inf,
            provisional,
        });
    }
    let (mut lo, mut hi) = (d_min, d_max);
    while hi - lo > tol {
        let mid = (lo * hi).sqrt();
        let r = lam(mid)?;
        provisional |= !r.converged;
        if r.lambda_inf < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold {
        d_star: 0.5 * (lo + hi),
        bracket_width: hi - lo,
        lambda_at_max: hi_res.lambda_inf,
        provisional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Axis {
    #[serde(rename = "c")]
    C,
    L,
    #[serde(rename = "d")]
    FieldDiffusion,
    D,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "nu")]
    Nu,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::C => "c",
            Axis::L => "L",
            Axis::FieldDiffusion => "d",
            Axis::D => "D",
            Axis::Mu => "mu",
            Axis::Nu => "nu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "c" => Axis::C,
            "L" => Axis::L,
            "d" => Axis::FieldDiffusion,
            "D" => Axis::D,
            "mu" => Axis::Mu,
            "nu" => Axis::Nu,
            other => {
                return Err(Error::config(format!(
                    "unknown sweep axis `{other}` (expected c, L, d, D, mu or nu)"
                )))
            }
        })
    }

    /// Parameters and profile with this axis set to `value`.
    pub fn apply(self, p: &Parameters, profile: &NicheProfile, value: f64) -> Result<(Parameters, NicheProfile)> {
        let mut q = *p;
        let mut prof = profile.clone();
        match self {
            Axis::C => q.c = value,
            Axis::L => prof = profile.with_scale(value)?,
            Axis::FieldDiffusion => q.field_diffusion = value,
            Axis::D => q.road_diffusion = value,
            Axis::Mu => q.mu = value,
            Axis::Nu => q.nu = value,
        }
        q.validate()?;
        Ok((q, prof))
    }
}

/// Dynamics settings for sweep verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsSettings {
    pub dt: f64,
    pub horizon: f64,
    pub steady_tol: f64,
    /// Enlargement of the exhaustion domain used for time integration.
    pub enlarge: f64,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        DynamicsSettings {
            dt: 0.02,
            horizon: 500.0,
            steady_tol: 1e-6,
            enlarge: 1.5,
        }
    }
}

/// The exhaustion domain enlarged by `factor`, snapped to the same spacing.
pub fn enlarged_grid(grid: &Grid, factor: f64) -> Result<Grid> {
    let h = grid.h;
    let snap = |len: f64| (factor * len / h - 1e-9).ceil() * h;
    Grid::new(snap(grid.half_width), snap(grid.height), h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda: Option<f64>,
    pub lambda_neumann: Option<f64>,
    pub converged: bool,
    pub rungs: usize,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
    /// Common truncation all rows were evaluated on.
    pub half_width: f64,
    pub height: f64,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let verdicts = self.rows.iter().any(|r| r.verdict.is_some());
        write!(out, "axis,value,lambda,lambda_neumann,converged")?;
        if verdicts {
            write!(out, ",verdict")?;
        }
        writeln!(out)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{}",
                self.axis.name(),
                fmt_f64(r.value),
                opt(r.lambda),
                opt(r.lambda_neumann),
                r.converged
            )?;
            if verdicts {
                let v = match r.verdict {
                    Some(Verdict::Persistence) => "persistence",
                    Some(Verdict::Extinction) => "extinction",
                    Some(Verdict::Undetermined) => "undetermined",
                    None => "",
                };
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evaluates the coupled eigenvalue (and optionally the field-only one and a
/// dynamics verdict) at each axis value. All rows end on the same truncation:
/// after a first pass, shorter ladders are extended to the longest one, so
/// rows are directly comparable. Failures are recorded per row.
pub fn sweep(
    axis: Axis,
    values: &[f64],
    p: &Parameters,
    profile: &NicheProfile,
    cfg: &ExhaustConfig,
    with_neumann: bool,
    verdicts: Option<&DynamicsSettings>,
) -> Result<SweepTable> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("sweep values must be finite"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("sweep values must be sorted"));
    }
    let mut kinds = vec![OperatorKind::Coupled];
    if with_neumann {
        kinds.push(OperatorKind::Neumann);
    }
    let jobs: Vec<(usize, OperatorKind)> = (0..values.len()).flat_map(|i| kinds.iter().map(move |&k| (i, k))).collect();
    let run = |&(i, kind): &(usize, OperatorKind), cfg: &ExhaustConfig| -> Result<ExhaustionResult> {
        let (q, prof) = axis.apply(p, profile, values[i])?;
        exhaust_lambda(&q, &prof, kind, cfg)
    };
    let first: Vec<Result<ExhaustionResult>> = jobs.par_iter().map(|j| run(j, cfg)).collect();
    let depth = first
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.ladder.len())
        .max()
        .unwrap_or(0);
    let matched = ExhaustConfig {
        min_steps: depth.max(cfg.min_steps),
        ..*cfg
    };
    let results: Vec<Result<ExhaustionResult>> = first
        .into_par_iter()
        .zip(jobs.par_iter())
        .map(|(r, j)| match r {
            Ok(r) if r.ladder.len() < depth => run(j, &matched),
            other => other,
        })
        .collect();

    let mut rows: Vec<SweepRow> = values
        .iter()
        .map(|&value| SweepRow {
            value,
            lambda: None,
            lambda_neumann: None,
            converged: true,
            rungs: 0,
            verdict: None,
            error: None,
        })
        .collect();
    let (mut half_width, mut height) = (0.0, 0.0);
    for ((i, kind), r) in jobs.iter().zip(results) {
        let row = &mut rows[*i];
        match r {
            Ok(r) => {
                row.converged &= r.converged;
                half_width = r.last_grid.half_width;
                height = r.last_grid.height;
                if *kind == OperatorKind::Coupled {
                    row.lambda = Some(r.lambda_inf);
                    row.rungs = r.ladder.len();
                } else {
                    row.lambda_neumann = Some(r.lambda_inf);
                }
            }
            Err(e) => {
                row.converged = false;
                row.error.get_or_insert_with(|| e.to_string());
            }
        }
    }

    if let Some(settings) = verdicts {
        let grid = enlarged_grid(
            &cfg.grid(depth.saturating_sub(1), None).or_else(|_| cfg.grid(0, None))?,
            settings.enlarge,
        )?;
        let verdict_of = |value: f64| -> Result<Verdict> {
            let (q, prof) = axis.apply(p, profile, value)?;
            let c = evolve_classify(
                &q,
                &ReactionTerm::new(prof),
                &grid,
                settings.horizon,
                settings.dt,
                settings.steady_tol,
            )?;
            Ok(c.verdict)
        };
        let found: Vec<Result<Verdict>> = values.par_iter().map(|&v| verdict_of(v)).collect();
        for (row, v) in rows.iter_mut().zip(found) {
            match v {
                Ok(v) => row.verdict = Some(v),
                Err(e) => {
                    row.error.get_or_insert_with(|| e.to_string());
                }
            }
        }
    }
    Ok(SweepTable {
        axis,
        rows,
        half_width,
        height,
    })
}

/// Reference constants gathered for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub c_kpp: f64,
    pub c_h: Option<f64>,
    pub c_n: Option<f64>,
    pub d_star: Option<f64>,
}

impl DerivedConstants {
    pub fn new(d: f64) -> Self {
        DerivedConstants {
            c_kpp: c_kpp(d),
            c_h: None,
            c_n: None,
            d_star: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::SpacingRule;

    fn cfg(x0: f64, h: f64) -> ExhaustConfig {
        ExhaustConfig {
            x0,
            growth: 1.5,
            spacing: SpacingRule::Fixed(h),
            stop_tol: 1e-3,
            max_steps: 4,
            ..Default::default()
        }
    }

    #[test]
    fn unfavorable_niche_has_no_speeds() {
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let prof = NicheProfile::radial(-1.0).unwrap();
        let s = critical_speeds(&p, &prof, &cfg(3.0, 0.5), 1e-2).unwrap();
        assert_eq!((s.c_star, s.c_star_upper), (0.0, 0.0));
        let n = critical_speed_no_road(1.0, &prof, &cfg(3.0, 0.5), 1e-2).unwrap();
        assert_eq!(n.c_star, 0.0);
    }

    #[test]
    fn speed_pair_is_ordered() {
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let prof = NicheProfile::radial(3.0).unwrap();
        let s = critical_speeds(&p, &prof, &cfg(5.0, 0.5), 1e-2).unwrap();
        assert!(s.c_star > 0.0);
        assert!(s.c_star <= s.c_star_upper);
        assert!(s.c_star_upper <= s.bound + s.bracket_width);
        assert_eq!(s.scan.len(), SCAN_POINTS);
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [Axis::C, Axis::L, Axis::FieldDiffusion, Axis::D, Axis::Mu, Axis::Nu] {
            assert_eq!(Axis::parse(a.name()).unwrap(), a);
        }
        assert!(Axis::parse("x").unwrap_err().is_config());
    }

    #[test]
    fn sweep_rows_share_truncation() {
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let prof = NicheProfile::radial(1.0).unwrap();
        let t = sweep(Axis::L, &[0.0, 2.0, 4.0], &p, &prof, &cfg(3.0, 0.5), true, None).unwrap();
        let rungs: Vec<usize> = t.rows.iter().map(|r| r.rungs).collect();
        assert!(rungs.windows(2).all(|w| w[0] == w[1]), "{rungs:?}");
        for w in t.rows.windows(2) {
            assert!(w[1].lambda.unwrap() <= w[0].lambda.unwrap() + 1e-9);
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("axis,value,lambda,lambda_neumann,converged\nL,"));
    }

    #[test]
    fn unsorted_sweep_rejected() {
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let prof = NicheProfile::radial(1.0).unwrap();
        assert!(sweep(Axis::C, &[1.0, 0.0], &p, &prof, &cfg(3.0, 0.5), false, None).is_err());
    }

    #[test]
    fn enlarged_grid_snaps() {
        let g = Grid::new(4.0, 4.0, 0.5).unwrap();
        let e = enlarged_grid(&g, 1.5).unwrap();
        assert_eq!((e.half_width, e.height), (6.0, 6.0));
    }
}
