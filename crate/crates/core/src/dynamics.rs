//! Time integration of the semilinear road–field system in the moving frame
//! and the persistence/extinction classification by sub/supersolution
//! bracketing.
//!
//! One step solves `(I + dt A) w_new = w - dt v^2`, with `A` the assembled
//! coupled operator (which already carries the linear `m v` term) and the
//! quadratic loss applied explicitly on field slots. Under
//! `dt (sup m + 2 sup v) <= 1/2` the implicit matrix is an M-matrix and the
//! explicit map `v -> v - dt v^2` is increasing, so the scheme is positive
//! and order preserving.

use std::io::Write;

use serde::Serialize;

use crate::discretization::{assemble_coupled, fmt_f64, Grid, SparseOperator};
use crate::eigen::principal_eigenpair;
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix, Pivoting};
use crate::model::{positive_part, Parameters, ReactionTerm};

/// Eigenvalues closer to zero than this give an undetermined verdict.
pub const BORDERLINE: f64 = 0.02;
const STABILITY_MARGIN: f64 = 0.5;

/// Road and field densities at time `t`. Field values are row-major `(j, i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(skip)]
    pub grid: Grid,
}

impl State {
    pub fn zero(grid: &Grid) -> Self {
        State {
            t: 0.0,
            u: vec![0.0; grid.nx],
            v: vec![0.0; grid.nx * grid.ny],
            grid: *grid,
        }
    }

    pub fn constant(grid: &Grid, u: f64, v: f64) -> Self {
        State {
            t: 0.0,
            u: vec![u; grid.nx],
            v: vec![v; grid.nx * grid.ny],
            grid: *grid,
        }
    }

    /// Field bump `amp exp(-|z - z0|^2 / width^2)` with an empty road.
    pub fn bump(grid: &Grid, x0: f64, y0: f64, width: f64, amp: f64) -> Self {
        let mut s = State::zero(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let r2 = (grid.x(i) - x0).powi(2) + (grid.y(j) - y0).powi(2);
                s.v[j * grid.nx + i] = amp * (-r2 / (width * width)).exp();
            }
        }
        s
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn sup_field(&self) -> f64 {
        self.v.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.u.iter().chain(&self.v).copied().fold(f64::INFINITY, f64::min)
    }

    /// `max (self - other)` over all entries.
    pub fn excess_over(&self, other: &State) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn gap(&self, other: &State) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn stacked(&self) -> Vec<f64> {
        let mut w = self.u.clone();
        w.extend_from_slice(&self.v);
        w
    }

    /// Writes `t,x,value` rows for the road (no header).
    pub fn write_road_rows<W: Write>(&self, out: &mut W) -> Result<()> {
        for (i, v) in self.u.iter().enumerate() {
            writeln!(out, "{},{},{}", fmt_f64(self.t), fmt_f64(self.grid.x(i)), fmt_f64(*v))?;
        }
        Ok(())
    }

    /// Writes `t,x,y,value` rows for the field (no header).
    pub fn write_field_rows<W: Write>(&self, out: &mut W) -> Result<()> {
        let g = &self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = self.v[j * g.nx + i];
                writeln!(out, "{},{},{},{}", fmt_f64(self.t), fmt_f64(g.x(i)), fmt_f64(g.y(j)), fmt_f64(v))?;
            }
        }
        Ok(())
    }
}

pub const ROAD_HEADER: &str = "t,x,value";
pub const FIELD_HEADER: &str = "t,x,y,value";

/// Largest admissible step for a state whose field sup is `sup_v`.
pub fn admissible_dt(sup_m: f64, sup_v: f64) -> f64 {
    STABILITY_MARGIN / (positive_part(sup_m) + 2.0 * sup_v).max(f64::MIN_POSITIVE)
}

/// `(I + dt A)` factored once for a fixed grid, parameter set and step.
#[derive(Debug)]
pub struct Stepper {
    op: SparseOperator,
    lu: BandedLu,
    dt: f64,
    sup_m: f64,
}

impl Stepper {
    pub fn new(grid: &Grid, p: &Parameters, term: &ReactionTerm, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("time step must be > 0"));
        }
        let op = assemble_coupled(grid, p, &term.profile)?;
        let n = op.dim();
        // I + dt A.
        let scaled = CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut row: Vec<(usize, f64)> = op.matrix.row(i).map(|(j, v)| (j, dt * v)).collect();
                    row.push((i, 1.0));
                    row
                })
                .collect(),
        );
        let perm = op.band_ordering();
        let lu = match BandedLu::factor(&scaled, 0.0, &perm, Pivoting::None) {
            Ok(lu) => lu,
            Err(Error::Singular(_)) => BandedLu::factor(&scaled, 0.0, &perm, Pivoting::Partial)?,
            Err(e) => return Err(e),
        };
        Ok(Stepper {
            sup_m: term.profile.sup_m(),
            op,
            lu,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.op.grid
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    pub fn step(&self, state: &State) -> Result<State> {
        let sup_v = state.sup_field();
        let bound = admissible_dt(self.sup_m, sup_v);
        if self.dt > bound {
            return Err(Error::TimeStep { dt: self.dt, bound });
        }
        let nx = state.u.len();
        let mut w = state.stacked();
        for x in &mut w[nx..] {
            *x -= self.dt * *x * *x;
        }
        self.lu.solve(&mut w);
        let v = w.split_off(nx);
        Ok(State {
            t: state.t + self.dt,
            u: w,
            v,
            grid: state.grid,
        })
    }

    /// Advances `steps` steps, calling `observe` after each.
    pub fn run(&self, mut state: State, steps: usize, mut observe: impl FnMut(&State)) -> Result<State> {
        for _ in 0..steps {
            state = self.step(&state)?;
            observe(&state);
        }
        Ok(state)
    }
}

/// One step from scratch; prefer [`Stepper`] for repeated steps.
pub fn step(state: &State, p: &Parameters, term: &ReactionTerm, dt: f64) -> Result<State> {
    Stepper::new(&state.grid, p, term, dt)?.step(state)
}

/// Constant supersolution `(nu M / mu, M)` with `M = 2 S`.
pub fn supersolution(grid: &Grid, p: &Parameters, term: &ReactionTerm) -> Result<State> {
    if !p.strict_exchange() {
        return Err(Error::invalid("dynamics need mu > 0 and nu > 0"));
    }
    let m = 2.0 * term.saturation();
    Ok(State::constant(grid, p.nu * m / p.mu, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Persistence,
    Extinction,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Minimum of the lower bracket over the favorable core.
    pub lower_core_min: f64,
    pub upper_sup: f64,
    /// `|upper - lower|_inf / |upper|_inf`.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub lambda: f64,
    pub dt: f64,
    pub horizon: f64,
    pub steady_tol: f64,
    /// Final time reached.
    pub t_end: f64,
    pub lower_monotone: bool,
    /// Largest value on the outer tenth of the domain over the global max.
    pub frame_ratio: Option<f64>,
    /// Midpoint of the brackets; exported separately as CSV.
    #[serde(skip)]
    pub steady_state: Option<State>,
    pub evidence: Vec<Sample>,
}

fn core_mask(grid: &Grid, term: &ReactionTerm) -> Result<Vec<bool>> {
    let mut mask = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            mask.push(term.profile.try_m(grid.x(i), grid.y(j))? > 0.0);
        }
    }
    if !mask.iter().any(|&b| b) {
        mask.fill(true);
    }
    Ok(mask)
}

fn frame_ratio(s: &State) -> f64 {
    let g = &s.grid;
    let global = s.sup();
    if global == 0.0 {
        return 0.0;
    }
    let (fx, fy) = (0.9 * g.half_width, 0.9 * g.height);
    let mut edge = 0.0f64;
    for (i, &u) in s.u.iter().enumerate() {
        if g.x(i).abs() >= fx {
            edge = edge.max(u.abs());
        }
    }
    for j in 0..g.ny {
        for i in 0..g.nx {
            if g.x(i).abs() >= fx || g.y(j) >= fy {
                edge = edge.max(s.v[j * g.nx + i].abs());
            }
        }
    }
    edge / global
}

/// Classifies the long-time behavior by evolving a subsolution (a small
/// multiple of the principal eigenfunction, only when the eigenvalue is
/// negative) and the constant supersolution. Persistence when both brackets
/// agree to `steady_tol` with a positive core; extinction when the upper
/// bracket falls below `steady_tol` relative to the saturation level.
pub fn evolve_classify(p: &Parameters, term: &ReactionTerm, grid: &Grid, horizon: f64, dt: f64, steady_tol: f64) -> Result<Classification> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be > 0"));
    }
    if !(steady_tol > 0.0) {
        return Err(Error::invalid("steady tolerance must be > 0"));
    }
    let mut upper = supersolution(grid, p, term)?;
    let stepper = Stepper::new(grid, p, term, dt)?;
    let eig = principal_eigenpair(stepper.operator(), 1e-10)?;
    let lambda = eig.lambda;

    let mut lower = if lambda < 0.0 {
        // eps e is a discrete subsolution as soon as eps <= |lambda|.
        let eps = (0.5 * lambda.abs()).min(1e-2);
        let phi = eig.phi.as_ref().expect("coupled operator has a road");
        Some(State {
            t: 0.0,
            u: phi.iter().map(|x| eps * x).collect(),
            v: eig.psi.iter().map(|x| eps * x).collect(),
            grid: *grid,
        })
    } else {
        None
    };

    let mask = core_mask(grid, term)?;
    let saturation = term.saturation();
    let steps = (horizon / dt).ceil() as usize;
    let stride = ((1.0 / dt).round() as usize).max(1);
    let mut evidence = Vec::new();
    let mut lower_monotone = true;
    let mut previous_lower = lower.clone();
    let mut verdict = Verdict::Undetermined;

    for k in 1..=steps {
        upper = stepper.step(&upper)?;
        if let Some(l) = lower.as_mut() {
            *l = stepper.step(l)?;
        }
        if k % stride != 0 && k != steps {
            continue;
        }
        let upper_sup = upper.sup();
        let (core_min, gap) = match &lower {
            Some(l) => {
                if let Some(prev) = &previous_lower {
                    if prev.excess_over(l) > 1e-12 * l.sup().max(1.0) {
                        lower_monotone = false;
                    }
                }
                previous_lower = Some(l.clone());
                let core_min =
                    l.v.iter()
                        .zip(&mask)
                        .filter(|(_, &m)| m)
                        .map(|(x, _)| *x)
                        .fold(f64::INFINITY, f64::min);
                (core_min, upper.gap(l) / upper_sup.max(f64::MIN_POSITIVE))
            }
            None => (0.0, f64::INFINITY),
        };
        evidence.push(Sample {
            t: upper.t,
            lower_core_min: core_min,
            upper_sup,
            relative_gap: gap,
        });
        if upper_sup <= steady_tol * saturation {
            verdict = Verdict::Extinction;
            break;
        }
        if gap <= steady_tol && core_min > 0.0 && lower_monotone {
            verdict = Verdict::Persistence;
            break;
        }
    }
    if lambda.abs() < BORDERLINE {
        verdict = Verdict::Undetermined;
    }

    let steady_state = (verdict == Verdict::Persistence).then(|| {
        let l = lower.as_ref().expect("persistence needs the lower bracket");
        State {
            t: upper.t,
            u: upper.u.iter().zip(&l.u).map(|(a, b)| 0.5 * (a + b)).collect(),
            v: upper.v.iter().zip(&l.v).map(|(a, b)| 0.5 * (a + b)).collect(),
            grid: *grid,
        }
    });
    Ok(Classification {
        verdict,
        lambda,
        dt,
        horizon,
        steady_tol,
        t_end: upper.t,
        lower_monotone,
        frame_ratio: steady_state.as_ref().map(frame_ratio),
        steady_state,
        evidence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max (low - high)^+` over sampled times.
    pub max_violation: f64,
    /// Smallest entry seen in either trajectory.
    pub min_entry: f64,
    pub samples: usize,
    pub bit_identical: bool,
}

/// Evolves ordered data `low <= high` side by side and reports how far the
/// ordering is ever violated (every step is sampled).
pub fn check_comparison(
    p: &Parameters,
    term: &ReactionTerm,
    grid: &Grid,
    init_low: &State,
    init_high: &State,
    horizon: f64,
    dt: f64,
) -> Result<ComparisonReport> {
    let stepper = Stepper::new(grid, p, term, dt)?;
    let (mut low, mut high) = (init_low.clone(), init_high.clone());
    let mut report = ComparisonReport {
        max_violation: low.excess_over(&high).max(0.0),
        min_entry: low.min_entry().min(high.min_entry()),
        samples: 1,
        bit_identical: low == high,
    };
    let steps = (horizon / dt).ceil() as usize;
    for _ in 0..steps {
        low = stepper.step(&low)?;
        high = stepper.step(&high)?;
        report.max_violation = report.max_violation.max(low.excess_over(&high).max(0.0));
        report.min_entry = report.min_entry.min(low.min_entry()).min(high.min_entry());
        report.bit_identical &= low == high;
        report.samples += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub final_gap: f64,
    pub within_tol: bool,
    /// Gap nonincreasing over the second half of the run.
    pub decreasing_last_half: bool,
    /// `(t, gap)` once per time unit.
    pub gaps: Vec<(f64, f64)>,
}

/// Evolves two unordered bumps centered at `(-2, 1)` and `(2, 1)` and reports
/// how close they end up.
pub fn check_uniqueness(p: &Parameters, term: &ReactionTerm, grid: &Grid, horizon: f64, dt: f64, tol: f64) -> Result<UniquenessReport> {
    let amp = term.saturation();
    let a = State::bump(grid, -2.0, 1.0, 1.0, amp);
    let b = State::bump(grid, 2.0, 1.0, 1.0, amp);
    uniqueness_from(p, term, grid, a, b, horizon, dt, tol)
}

#[allow(clippy::too_many_arguments)]
pub fn uniqueness_from(
    p: &Parameters,
    term: &ReactionTerm,
    grid: &Grid,
    mut a: State,
    mut b: State,
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<UniquenessReport> {
    let stepper = Stepper::new(grid, p, term, dt)?;
    let steps = (horizon / dt).ceil() as usize;
    let stride = ((1.0 / dt).round() as usize).max(1);
    let mut gaps = vec![(0.0, a.gap(&b))];
    for k in 1..=steps {
        a = stepper.step(&a)?;
        b = stepper.step(&b)?;
        if k % stride == 0 || k == steps {
            gaps.push((a.t, a.gap(&b)));
        }
    }
    let final_gap = gaps.last().map_or(0.0, |g| g.1);
    let half = &gaps[gaps.len() / 2..];
    let decreasing_last_half = half.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-15);
    Ok(UniquenessReport {
        final_gap,
        within_tol: final_gap <= tol,
        decreasing_last_half,
        gaps,
    })
}
