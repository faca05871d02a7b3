//! Principal eigenpairs, the dense verification oracle, the discrete
//! Rayleigh quotient and domain exhaustion.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::discretization::{assemble, fmt_f64, Grid, OperatorKind, SparseOperator};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, Pivoting};
use crate::model::{NicheProfile, Parameters};

/// Iteration cap for [`principal_eigenpair`].
pub const MAX_ITERATIONS: usize = 500;
const POWER_STEPS: usize = 10;
const SOLVES_PER_FACTOR: usize = 6;
const DENSE_LIMIT: usize = 2000;

/// Principal eigenpair of a discrete operator, eigenvector scaled to max-norm 1.
#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Road values; `None` for field-only operators.
    pub phi: Option<Vec<f64>>,
    /// Field values in row-major `(j, i)` order.
    pub psi: Vec<f64>,
    /// `|A w - lambda w|_inf / |w|_inf`.
    pub residual: f64,
    pub iterations: usize,
    pub tol: f64,
}

impl EigenResult {
    fn from_vector(op: &SparseOperator, lambda: f64, w: Vec<f64>, residual: f64, iterations: usize, tol: f64) -> Self {
        let off = op.field_offset();
        let phi = (off > 0).then(|| w[..off].to_vec());
        let psi = w[off..].to_vec();
        EigenResult {
            lambda,
            phi,
            psi,
            residual,
            iterations,
            tol,
        }
    }

    /// Stacked eigenvector (road first when present).
    pub fn vector(&self) -> Vec<f64> {
        let mut w = self.phi.clone().unwrap_or_default();
        w.extend_from_slice(&self.psi);
        w
    }

    pub fn min_entry(&self) -> f64 {
        self.phi.iter().flatten().chain(&self.psi).copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes `x,phi` rows for the road.
    pub fn write_road_csv<W: Write>(&self, grid: &Grid, mut out: W) -> Result<()> {
        writeln!(out, "x,phi")?;
        if let Some(phi) = &self.phi {
            for (i, v) in phi.iter().enumerate() {
                writeln!(out, "{},{}", fmt_f64(grid.x(i)), fmt_f64(*v))?;
            }
        }
        Ok(())
    }

    /// Writes `x,y,psi` rows for the field.
    pub fn write_field_csv<W: Write>(&self, grid: &Grid, mut out: W) -> Result<()> {
        writeln!(out, "x,y,psi")?;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = self.psi[j * grid.nx + i];
                writeln!(out, "{},{},{}", fmt_f64(grid.x(i)), fmt_f64(grid.y(j)), fmt_f64(v))?;
            }
        }
        Ok(())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn scale_to_unit(v: &mut [f64]) {
    let m = max_abs(v);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rayleigh estimate and relative residual of `w`.
fn residual_of(op: &SparseOperator, w: &[f64]) -> (f64, f64) {
    let aw = op.matrix.apply(w);
    let lambda = dot(w, &aw) / dot(w, w);
    let r = aw.iter().zip(w).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max);
    (lambda, r / max_abs(w))
}

/// Principal eigenpair of `op`.
///
/// A few power steps on `s I - A` from the all-ones vector give a positive
/// start. The eigenvalue is then approached from below by shifted inverse
/// iteration whose shift is the Collatz-Wielandt lower bound
/// `sigma + min_i w_i / ((A - sigma)^-1 w)_i`; every shifted matrix stays a
/// nonsingular M-matrix, so iterates remain positive and shifts remain safe.
/// Converges once the residual drops to `tol`, or to the rounding floor
/// `64 eps |A|_inf` when that is larger.
pub fn principal_eigenpair(op: &SparseOperator, tol: f64) -> Result<EigenResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("eigen tolerance must be > 0"));
    }
    let n = op.dim();
    let a = &op.matrix;
    let perm = op.band_ordering();
    let tol = tol.max(64.0 * f64::EPSILON * a.max_row_magnitude());

    let s = op.perron_shift();
    let mut w = vec![1.0; n];
    let mut aw = vec![0.0; n];
    for _ in 0..POWER_STEPS {
        a.mul_vec(&w, &mut aw);
        for (x, ax) in w.iter_mut().zip(&aw) {
            *x = s * *x - ax;
        }
        scale_to_unit(&mut w);
    }
    if w.iter().any(|&x| !(x > 0.0)) {
        // Reducible operators may leave exact zeros; restart from ones.
        w.fill(1.0);
    }

    // Row sums bound the Perron eigenvalue from below.
    let floor = a.min_row_sum();
    let mut sigma = floor - 1e-3 * floor.abs().max(1.0);
    let mut safe = sigma;
    let mut last_residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let lu = match BandedLu::factor(a, sigma, &perm, Pivoting::None) {
            Ok(lu) => lu,
            Err(Error::Singular(_)) if sigma - safe > 1e-15 * sigma.abs().max(1.0) => {
                // Rounding pushed the shift onto the eigenvalue: back off
                // towards the last shift that factored.
                sigma = safe + 0.5 * (sigma - safe);
                continue;
            }
            Err(e) => return Err(e),
        };
        safe = sigma;
        // Solves are cheap next to factorizations: polish the iterate a few
        // times at this shift. Each solve yields a valid lower bound relative
        // to the factored shift.
        let mut lower = f64::NEG_INFINITY;
        for _ in 0..SOLVES_PER_FACTOR {
            iterations += 1;
            let mut y = w.clone();
            lu.solve(&mut y);
            if y.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::Structural(format!(
                    "inverse iterate lost positivity at shift {sigma}; check exchange signs"
                )));
            }
            let gain = w
                .iter()
                .zip(&y)
                .filter(|(_, &yi)| yi > 0.0)
                .map(|(wi, yi)| wi / yi)
                .fold(f64::INFINITY, f64::min);
            scale_to_unit(&mut y);
            w = y;
            let (lambda, r) = residual_of(op, &w);
            last_residual = r;
            if r <= tol {
                let result = EigenResult::from_vector(op, lambda, w, r, iterations, tol);
                check_positive(op, &result)?;
                return Ok(result);
            }
            if gain.is_finite() {
                lower = lower.max(sigma + gain);
            }
            if iterations >= MAX_ITERATIONS {
                break;
            }
        }
        if lower.is_finite() {
            // Stay strictly below the eigenvalue.
            let margin = 1e-12 * lower.abs().max(1.0);
            sigma = sigma.max(lower - margin);
        }
    }
    Err(Error::NotConverged {
        stage: "principal eigenpair".into(),
        iterations,
        residual: last_residual,
    })
}

fn check_positive(op: &SparseOperator, r: &EigenResult) -> Result<()> {
    let min = r.min_entry();
    let irreducible = op.kind != OperatorKind::Coupled || op.params.strict_exchange();
    let ok = if irreducible { min > 0.0 } else { min >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Structural(format!(
            "principal eigenvector has a nonpositive entry ({min:e})"
        )))
    }
}

/// Dense verification oracle: full spectrum by a general (Schur) eigensolver,
/// eigenvector from the null space of `A - lambda I` via SVD.
pub fn dense_oracle(op: &SparseOperator) -> Result<EigenResult> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(Error::invalid(format!("dense oracle limited to {DENSE_LIMIT} unknowns, got {n}")));
    }
    let dense = op.matrix.to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
    let mut spectrum: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    spectrum.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.abs().total_cmp(&y.1.abs())));

    let scale = op.matrix.max_row_magnitude().max(1.0);
    for (k, &(re, im)) in spectrum.iter().enumerate() {
        if im.abs() > 1e-9 * scale {
            continue;
        }
        let shifted = &a - DMatrix::identity(n, n) * re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
        let j = svd.singular_values.imin();
        let mut w: Vec<f64> = v_t.row(j).iter().copied().collect();
        let big = w.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if big < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        scale_to_unit(&mut w);
        if w.iter().any(|&x| x < -1e-10) {
            continue;
        }
        let simple = spectrum
            .iter()
            .enumerate()
            .filter(|&(other, _)| other != k)
            .all(|(_, &(r2, i2))| (r2 - re).hypot(i2 - im) > 1e-9 * scale);
        if !simple {
            return Err(Error::Structural(format!("principal eigenvalue {re} is not simple")));
        }
        let (_, residual) = residual_of(op, &w);
        return Ok(EigenResult::from_vector(op, re, w, residual, 0, 0.0));
    }
    Err(Error::Structural("no eigenvalue with a positive eigenvector".into()))
}

/// Discrete Rayleigh quotient of the `c = 0` coupled problem.
///
/// Sums are weighted by cell measures (`h` on the road, `h^2` in the field);
/// gradients across Dirichlet edges are one-sided over the half cell to the
/// zero ghost. The field trace on the road line is the reconstruction `psi_b`
/// that balances the half-cell flux, so the quotient equals
/// `<w, W A w> / <w, W w>` for the assembled operator.
pub fn rayleigh_quotient(grid: &Grid, p: &Parameters, profile: &NicheProfile, phi: &[f64], psi: &[f64]) -> Result<f64> {
    if p.c != 0.0 {
        return Err(Error::invalid("the Rayleigh quotient characterizes the eigenvalue only for c = 0"));
    }
    if !p.strict_exchange() {
        return Err(Error::invalid("the Rayleigh quotient needs mu > 0 and nu > 0"));
    }
    let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
    if phi.len() != nx || psi.len() != nx * ny {
        return Err(Error::invalid("eigenfunction sizes do not match the grid"));
    }
    if phi.iter().chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entries"));
    }
    let (dd, d, mu, nu) = (p.road_diffusion, p.field_diffusion, p.mu, p.nu);
    let at = |i: usize, j: usize| psi[j * nx + i];

    // Road gradient energy: interior faces plus half cells to x = +-X.
    let mut road = 0.0;
    for i in 0..nx - 1 {
        let g = (phi[i + 1] - phi[i]) / h;
        road += g * g * h;
    }
    for &edge in &[phi[0], phi[nx - 1]] {
        let g = edge / (h / 2.0);
        road += g * g * (h / 2.0);
    }

    let mut field = 0.0;
    let mut potential = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let v = at(i, j);
            potential += profile.try_m(grid.x(i), grid.y(j))? * v * v * h * h;
            if i + 1 < nx {
                let g = (at(i + 1, j) - v) / h;
                field += g * g * h * h;
            }
            if j + 1 < ny {
                let g = (at(i, j + 1) - v) / h;
                field += g * g * h * h;
            }
        }
    }
    // Half cells to the Dirichlet edges (area h * h/2 each).
    for j in 0..ny {
        for v in [at(0, j), at(nx - 1, j)] {
            let g = v / (h / 2.0);
            field += g * g * h * h / 2.0;
        }
    }
    for i in 0..nx {
        let g = at(i, ny - 1) / (h / 2.0);
        field += g * g * h * h / 2.0;
    }

    // Road line: trace reconstruction and exchange.
    let kappa = 2.0 * d / h;
    let mut exchange = 0.0;
    for (i, &phi_i) in phi.iter().enumerate().take(nx) {
        let trace = (mu * phi_i + kappa * at(i, 0)) / (nu + kappa);
        let g = (at(i, 0) - trace) / (h / 2.0);
        field += g * g * h * h / 2.0;
        let flux = mu * phi_i - nu * trace;
        exchange += flux * flux * h;
    }

    let numerator = mu * dd * road + nu * (d * field - potential) + exchange;
    let denominator = mu * phi.iter().map(|v| v * v * h).sum::<f64>() + nu * psi.iter().map(|v| v * v * h * h).sum::<f64>();
    if denominator == 0.0 {
        return Err(Error::invalid("Rayleigh quotient of the zero pair"));
    }
    Ok(numerator / denominator)
}

/// Spacing policy along an exhaustion ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpacingRule {
    /// Same spacing on every rung.
    Fixed(f64),
    /// `h = X_k / cells`.
    CellsPerHalfWidth(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExhaustConfig {
    pub x0: f64,
    pub growth: f64,
    pub spacing: SpacingRule,
    pub stop_tol: f64,
    pub max_steps: usize,
    /// Rungs computed before the stopping test may fire; used to evaluate
    /// several configurations on the same final truncation.
    pub min_steps: usize,
    /// `Y_k = aspect * X_k`.
    pub aspect: f64,
    pub eig_tol: f64,
}

impl Default for ExhaustConfig {
    fn default() -> Self {
        ExhaustConfig {
            x0: 8.0,
            growth: 1.5,
            spacing: SpacingRule::Fixed(0.25),
            stop_tol: 1e-4,
            max_steps: 6,
            min_steps: 0,
            aspect: 1.0,
            eig_tol: 1e-9,
        }
    }
}

impl ExhaustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0) {
            return Err(Error::config("numerics.X0 must be > 0"));
        }
        if !(self.growth > 1.0) {
            return Err(Error::config("numerics.growth must be > 1"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::config("numerics.stop_tol must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("numerics.max_steps must be >= 1"));
        }
        if self.min_steps > self.max_steps {
            return Err(Error::config("numerics.min_steps must not exceed numerics.max_steps"));
        }
        if !(self.aspect > 0.0) {
            return Err(Error::config("numerics.aspect must be > 0"));
        }
        match self.spacing {
            SpacingRule::Fixed(h) if !(h > 0.0) => Err(Error::config("numerics.h must be > 0")),
            SpacingRule::CellsPerHalfWidth(0) => Err(Error::config("cells per half width must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Grid for rung `k`, snapped outward onto the spacing.
    pub fn grid(&self, k: usize, previous: Option<&Grid>) -> Result<Grid> {
        let target = self.x0 * self.growth.powi(k as i32);
        match self.spacing {
            SpacingRule::Fixed(h) => {
                let mut cells = (target / h - 1e-9).ceil().max(2.0);
                if let Some(prev) = previous {
                    let prev_cells = (prev.half_width / h).round();
                    if cells <= prev_cells {
                        cells = prev_cells + 1.0;
                    }
                }
                let half_width = cells * h;
                let height = (self.aspect * half_width / h - 1e-9).ceil().max(1.0) * h;
                Grid::new(half_width, height, h)
            }
            SpacingRule::CellsPerHalfWidth(n) => {
                let h = target / n as f64;
                let height = (self.aspect * n as f64 - 1e-9).ceil().max(1.0) * h;
                Grid::new(target, height, h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rung {
    pub half_width: f64,
    pub height: f64,
    pub h: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionResult {
    pub ladder: Vec<Rung>,
    pub lambda_inf: f64,
    pub converged: bool,
    #[serde(skip)]
    pub last: EigenResult,
    #[serde(skip)]
    pub last_grid: Grid,
}

/// Principal eigenvalues on growing truncations `X_k = X0 growth^k`,
/// `Y_k = aspect X_k`, stopping once consecutive values agree to `stop_tol`.
pub fn exhaust_lambda(p: &Parameters, profile: &NicheProfile, kind: OperatorKind, cfg: &ExhaustConfig) -> Result<ExhaustionResult> {
    cfg.validate()?;
    let mut ladder: Vec<Rung> = Vec::new();
    let mut grid: Option<Grid> = None;
    let mut last: Option<(EigenResult, Grid)> = None;
    for k in 0..cfg.max_steps {
        let g = cfg.grid(k, grid.as_ref())?;
        let solved = assemble(kind, &g, p, profile).and_then(|op| principal_eigenpair(&op, cfg.eig_tol));
        let res = match solved {
            Ok(r) => r,
            Err(e) => {
                return Err(Error::Exhaustion {
                    partial: ladder,
                    source: Box::new(e),
                })
            }
        };
        ladder.push(Rung {
            half_width: g.half_width,
            height: g.height,
            h: g.h,
            lambda: res.lambda,
            residual: res.residual,
            iterations: res.iterations,
        });
        grid = Some(g);
        last = Some((res, g));
        if ladder.len() >= 2 && ladder.len() >= cfg.min_steps {
            let n = ladder.len();
            if (ladder[n - 1].lambda - ladder[n - 2].lambda).abs() <= cfg.stop_tol {
                let (last, last_grid) = last.unwrap();
                return Ok(ExhaustionResult {
                    lambda_inf: ladder[n - 1].lambda,
                    ladder,
                    converged: true,
                    last,
                    last_grid,
                });
            }
        }
    }
    let (last, last_grid) = last.expect("at least one rung");
    Ok(ExhaustionResult {
        lambda_inf: ladder.last().unwrap().lambda,
        ladder,
        converged: false,
        last,
        last_grid,
    })
}
