//! Truncated-domain grids and finite-volume assembly of the road-field
//! operators.
//!
//! The field occupies `[-X, X] x [0, Y]`, split into `nx x ny` square cells of
//! side `h`; unknowns sit at cell centers. The road carries one unknown per
//! column, at the same abscissae. Homogeneous Dirichlet conditions on the
//! lateral and top edges (and at the road ends) are imposed through
//! antisymmetric ghost values, i.e. a half-cell flux `2 d / h^2`.
//!
//! On the road line the boundary trace `psi_b` of the field is eliminated
//! from the half-cell flux balance
//!
//! ```text
//! 2d (psi_0 - psi_b) / h = mu phi - nu psi_b
//! ```
//!
//! which gives the exchange flux `J = g (mu phi - nu psi_0)` with
//! `g = kappa / (nu + kappa)`, `kappa = 2d / h`. The road row gains `+J`, the
//! first field row gains `-J / h`.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::model::{NicheProfile, Parameters};

const COMMENSURATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub half_width: f64,
    pub height: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

fn cell_count(len: f64, h: f64, name: &str) -> Result<usize> {
    let ratio = len / h;
    let n = ratio.round();
    if (ratio - n).abs() > COMMENSURATE_TOL * ratio.max(1.0) || n < 1.0 {
        return Err(Error::config(format!(
            "{name} = {len} is not a positive integer multiple of the spacing {h}"
        )));
    }
    Ok(n as usize)
}

impl Grid {
    /// Grid on `[-half_width, half_width] x [0, height]` with spacing `h`.
    pub fn new(half_width: f64, height: f64, h: f64) -> Result<Self> {
        if !(half_width > 0.0 && height > 0.0 && h > 0.0) {
            return Err(Error::config("grid dimensions and spacing must be positive"));
        }
        let nx = cell_count(2.0 * half_width, h, "2X")?;
        let ny = cell_count(height, h, "Y")?;
        if nx < 3 {
            return Err(Error::config(format!("grid needs nx >= 3, got {nx}")));
        }
        Ok(Grid {
            half_width,
            height,
            h,
            nx,
            ny,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }

    pub fn index(&self) -> StackedIndex {
        StackedIndex { nx: self.nx, ny: self.ny }
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }
}

/// Free-function form of [`Grid::new`].
pub fn build_grid(half_width: f64, height: f64, h: f64) -> Result<Grid> {
    Grid::new(half_width, height, h)
}

/// Flattening of (road, field) unknowns into one vector: road `i` is slot `i`,
/// field `(i, j)` is slot `nx + j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackedIndex {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Road(usize),
    Field(usize, usize),
}

impl StackedIndex {
    pub fn n_road(&self) -> usize {
        self.nx
    }

    pub fn n_field(&self) -> usize {
        self.nx * self.ny
    }

    pub fn total(&self) -> usize {
        self.n_road() + self.n_field()
    }

    pub fn road(&self, i: usize) -> usize {
        i
    }

    pub fn field(&self, i: usize, j: usize) -> usize {
        self.nx + j * self.nx + i
    }

    pub fn slot(&self, k: usize) -> Slot {
        if k < self.nx {
            Slot::Road(k)
        } else {
            let f = k - self.nx;
            Slot::Field(f % self.nx, f / self.nx)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Road and field with the exchange condition.
    Coupled,
    /// Field alone, reflecting at `y = 0`.
    Neumann,
    /// Field alone, absorbing road: `-d psi_y + nu psi = 0` at `y = 0`.
    Robin,
}

impl OperatorKind {
    pub fn has_road(self) -> bool {
        self == OperatorKind::Coupled
    }
}

/// Discrete negative generator `A` of the linearized system: the principal
/// eigenvalue is the smallest-real-part eigenvalue of `A`.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub kind: OperatorKind,
    pub matrix: CsrMatrix,
    pub params: Parameters,
    pub profile: NicheProfile,
    pub grid: Grid,
    /// True when advection fell back to first-order upwinding.
    pub upwind: bool,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Offset of the first field unknown (0 for field-only operators).
    pub fn field_offset(&self) -> usize {
        if self.kind.has_road() {
            self.grid.nx
        } else {
            0
        }
    }

    pub fn field_index(&self, i: usize, j: usize) -> usize {
        self.field_offset() + j * self.grid.nx + i
    }

    /// Unknown ordering that minimizes the band: column-by-column (road
    /// first within each column) when the field is taller than it is wide in
    /// cells, row-major otherwise.
    pub fn band_ordering(&self) -> Vec<usize> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let road = self.kind.has_road();
        if ny + 1 >= nx {
            return (0..self.dim()).collect();
        }
        let mut perm = Vec::with_capacity(self.dim());
        for i in 0..nx {
            if road {
                perm.push(i);
            }
            for j in 0..ny {
                perm.push(self.field_index(i, j));
            }
        }
        perm
    }

    /// Diagonal weights under which the `c = 0` operator is symmetric:
    /// `mu h` on road slots, `nu h^2` on field slots.
    pub fn symmetrizing_weights(&self) -> Vec<f64> {
        let h = self.grid.h;
        let mut w = Vec::with_capacity(self.dim());
        if self.kind.has_road() {
            w.extend(std::iter::repeat_n(self.params.mu * h, self.grid.nx));
            w.extend(std::iter::repeat_n(self.params.nu * h * h, self.grid.nx * self.grid.ny));
        } else {
            w.extend(std::iter::repeat_n(h * h, self.grid.nx * self.grid.ny));
        }
        w
    }

    /// Coordinate-format dump: one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.dim() {
            for (c, v) in self.matrix.row(i) {
                writeln!(out, "{i} {c} {}", fmt_f64(v))?;
            }
        }
        Ok(())
    }

    /// Entries of `s I - A` are all nonnegative for `s` past this value.
    pub fn perron_shift(&self) -> f64 {
        1.0 + self.matrix.max_row_magnitude()
    }

    /// Whether the off-diagonal pattern is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.dim();
        let reach = |m: &CsrMatrix| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(k) = stack.pop() {
                for (c, v) in m.row(k) {
                    if c != k && v != 0.0 && !seen[c] {
                        seen[c] = true;
                        stack.push(c);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        n > 0 && reach(&self.matrix) && reach(&self.matrix.transpose())
    }
}

/// Warns on the first upwinded assembly only; scans and ladders would
/// otherwise repeat it for every operator. `SparseOperator::upwind` records
/// it per operator.
fn warn_upwind(peclet: f64) {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        log::warn!("grid Peclet number {peclet:.3} > 1: advection falls back to first-order upwinding (reported once)");
    });
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:.16e}").unwrap();
    s
}

/// Discretization of `-k d_xx - c d_x` along one row of cells, returning
/// `(west, diag, east)` contributions for cell `i` of `n`. Missing neighbors
/// are Dirichlet ghosts and fold into the diagonal.
fn line_stencil(k: f64, c: f64, h: f64, i: usize, n: usize, upwind: bool) -> (f64, f64, f64) {
    let diff = k / (h * h);
    let (mut west, mut east) = (-diff, -diff);
    let mut diag = 2.0 * diff;
    if upwind {
        let a = c.abs() / h;
        diag += a;
        if c > 0.0 {
            east -= a;
        } else {
            west -= a;
        }
    } else {
        let a = c / (2.0 * h);
        east -= a;
        west += a;
    }
    if i == 0 {
        diag -= west;
        west = 0.0;
    }
    if i + 1 == n {
        diag -= east;
        east = 0.0;
    }
    (west, diag, east)
}

fn sample_profile(grid: &Grid, profile: &NicheProfile) -> Result<Vec<f64>> {
    profile.check_domain(grid.half_width, grid.height)?;
    let mut m = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            m.push(profile.try_m(grid.x(i), grid.y(j))?);
        }
    }
    Ok(m)
}

fn needs_upwind(c: f64, h: f64, min_diffusion: f64) -> bool {
    c.abs() * h / (2.0 * min_diffusion) > 1.0
}

/// How the field row `j = 0` meets the line `y = 0`.
enum Bottom {
    /// Exchange with a road block of size `nx` stored first.
    Road {
        mu: f64,
        nu: f64,
    },
    Reflecting,
    Absorbing {
        nu: f64,
    },
}

fn assemble_field(grid: &Grid, d: f64, c: f64, m: &[f64], bottom: &Bottom, upwind: bool) -> Vec<Vec<(usize, f64)>> {
    let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
    let offset = if matches!(bottom, Bottom::Road { .. }) { nx } else { 0 };
    let kappa = 2.0 * d / h;
    let mut rows = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let me = offset + j * nx + i;
            let mut row = Vec::with_capacity(6);
            let (west, diag_x, east) = line_stencil(d, c, h, i, nx, upwind);
            let vert = d / (h * h);
            let mut diag = diag_x + vert;
            // North neighbor or Dirichlet ghost at the top.
            if j + 1 < ny {
                row.push((me + nx, -vert));
            } else {
                diag += vert;
            }
            // South neighbor or the road line.
            if j > 0 {
                row.push((me - nx, -vert));
                diag += vert;
            } else {
                match *bottom {
                    Bottom::Reflecting => {}
                    Bottom::Absorbing { nu } => {
                        let g = kappa / (nu + kappa);
                        diag += g * nu / h;
                    }
                    Bottom::Road { mu, nu } => {
                        let g = kappa / (nu + kappa);
                        diag += g * nu / h;
                        row.push((i, -g * mu / h));
                    }
                }
            }
            diag -= m[j * nx + i];
            if i > 0 {
                row.push((me - 1, west));
            }
            if i + 1 < nx {
                row.push((me + 1, east));
            }
            row.push((me, diag));
            rows.push(row);
        }
    }
    rows
}

/// Assembles the coupled road-field operator.
pub fn assemble_coupled(grid: &Grid, p: &Parameters, profile: &NicheProfile) -> Result<SparseOperator> {
    p.validate()?;
    let m = sample_profile(grid, profile)?;
    let (nx, h) = (grid.nx, grid.h);
    let d = p.field_diffusion;
    let upwind = needs_upwind(p.c, h, p.road_diffusion.min(d));
    if upwind {
        warn_upwind(p.c * h / (2.0 * p.road_diffusion.min(d)));
    }
    let kappa = 2.0 * d / h;
    let g = kappa / (p.nu + kappa);
    let mut rows = Vec::with_capacity(nx * (grid.ny + 1));
    for i in 0..nx {
        let (west, diag, east) = line_stencil(p.road_diffusion, p.c, h, i, nx, upwind);
        let mut row = Vec::with_capacity(4);
        if i > 0 {
            row.push((i - 1, west));
        }
        if i + 1 < nx {
            row.push((i + 1, east));
        }
        row.push((nx + i, -g * p.nu));
        row.push((i, diag + g * p.mu));
        rows.push(row);
    }
    rows.extend(assemble_field(grid, d, p.c, &m, &Bottom::Road { mu: p.mu, nu: p.nu }, upwind));
    Ok(SparseOperator {
        kind: OperatorKind::Coupled,
        matrix: CsrMatrix::from_rows(rows),
        params: *p,
        profile: profile.clone(),
        grid: *grid,
        upwind,
    })
}

fn field_params(d: f64, c: f64, nu: f64) -> Result<Parameters> {
    // Road coefficients are irrelevant for field-only operators; D mirrors d.
    Parameters::new(d, d, 0.0, nu, c)
}

/// Field-only operator with a reflecting boundary at `y = 0`.
pub fn assemble_neumann(grid: &Grid, d: f64, c: f64, profile: &NicheProfile) -> Result<SparseOperator> {
    let params = field_params(d, c, 0.0)?;
    let m = sample_profile(grid, profile)?;
    let upwind = needs_upwind(c, grid.h, d);
    if upwind {
        warn_upwind(c * grid.h / (2.0 * d));
    }
    let rows = assemble_field(grid, d, c, &m, &Bottom::Reflecting, upwind);
    Ok(SparseOperator {
        kind: OperatorKind::Neumann,
        matrix: CsrMatrix::from_rows(rows),
        params,
        profile: profile.clone(),
        grid: *grid,
        upwind,
    })
}

/// Field-only operator with the absorbing condition `-d psi_y + nu psi = 0`.
pub fn assemble_robin(grid: &Grid, d: f64, c: f64, nu: f64, profile: &NicheProfile) -> Result<SparseOperator> {
    let params = field_params(d, c, nu)?;
    let m = sample_profile(grid, profile)?;
    let upwind = needs_upwind(c, grid.h, d);
    if upwind {
        warn_upwind(c * grid.h / (2.0 * d));
    }
    let bottom = if nu == 0.0 { Bottom::Reflecting } else { Bottom::Absorbing { nu } };
    let rows = assemble_field(grid, d, c, &m, &bottom, upwind);
    Ok(SparseOperator {
        kind: OperatorKind::Robin,
        matrix: CsrMatrix::from_rows(rows),
        params,
        profile: profile.clone(),
        grid: *grid,
        upwind,
    })
}

/// Dispatches on `kind`, reading the relevant coefficients from `p`.
pub fn assemble(kind: OperatorKind, grid: &Grid, p: &Parameters, profile: &NicheProfile) -> Result<SparseOperator> {
    match kind {
        OperatorKind::Coupled => assemble_coupled(grid, p, profile),
        OperatorKind::Neumann => assemble_neumann(grid, p.field_diffusion, p.c, profile),
        OperatorKind::Robin => assemble_robin(grid, p.field_diffusion, p.c, p.nu, profile),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(l: f64) -> NicheProfile {
        NicheProfile::radial(l).unwrap()
    }

    #[test]
    fn grid_counts() {
        let g = build_grid(1.0, 1.0, 0.5).unwrap();
        assert_eq!((g.nx, g.ny), (4, 2));
        assert_eq!(g.index().total(), 12);
        let g = build_grid(2.0, 1.0, 0.25).unwrap();
        assert_eq!((g.nx, g.ny), (16, 4));
        assert!(matches!(build_grid(1.0, 1.0, 0.3), Err(Error::Config(_))));
        assert!(build_grid(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn road_shares_abscissae_with_first_field_row() {
        let g = build_grid(1.0, 1.0, 0.25).unwrap();
        assert!((g.x(0) + 0.875).abs() < 1e-15);
        assert!((g.x(g.nx - 1) - 0.875).abs() < 1e-15);
        assert!((g.y(0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn stacked_index_roundtrip() {
        let idx = build_grid(2.0, 1.5, 0.5).unwrap().index();
        for k in 0..idx.total() {
            let back = match idx.slot(k) {
                Slot::Road(i) => idx.road(i),
                Slot::Field(i, j) => idx.field(i, j),
            };
            assert_eq!(back, k);
        }
        assert_eq!(idx.field(0, 0), idx.n_road());
    }

    #[test]
    fn dimensions_and_kinds() {
        let g = build_grid(1.0, 1.0, 0.5).unwrap();
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let op = assemble_coupled(&g, &p, &radial(1.0)).unwrap();
        assert_eq!((op.dim(), op.kind), (12, OperatorKind::Coupled));
        let op = assemble_neumann(&g, 1.0, 0.0, &radial(1.0)).unwrap();
        assert_eq!((op.dim(), op.kind), (8, OperatorKind::Neumann));
    }

    #[test]
    fn robin_with_zero_nu_is_neumann() {
        let g = build_grid(1.5, 1.0, 0.25).unwrap();
        let prof = radial(1.0);
        let a = assemble_robin(&g, 0.7, 0.3, 0.0, &prof).unwrap();
        let b = assemble_neumann(&g, 0.7, 0.3, &prof).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn perron_structure() {
        let g = build_grid(1.5, 1.0, 0.25).unwrap();
        let p = Parameters::new(2.0, 0.5, 0.7, 1.3, 0.8).unwrap();
        let op = assemble_coupled(&g, &p, &radial(1.0)).unwrap();
        let s = op.perron_shift();
        for i in 0..op.dim() {
            for (c, v) in op.matrix.row(i) {
                let e = if c == i { s - v } else { -v };
                assert!(e >= 0.0, "entry ({i},{c}) of sI - A is {e}");
            }
        }
        assert!(op.is_irreducible());
        let decoupled = Parameters::new(2.0, 0.5, 0.0, 0.0, 0.8).unwrap();
        let op = assemble_coupled(&g, &decoupled, &radial(1.0)).unwrap();
        assert!(!op.is_irreducible());
    }

    #[test]
    fn weighted_symmetry_at_rest() {
        let g = build_grid(2.0, 1.5, 0.25).unwrap();
        let p = Parameters::new(3.0, 0.5, 0.7, 1.3, 0.0).unwrap();
        let op = assemble_coupled(&g, &p, &radial(1.2)).unwrap();
        let w = op.symmetrizing_weights();
        for i in 0..op.dim() {
            for (c, v) in op.matrix.row(i) {
                let lhs = w[i] * v;
                let rhs = op.matrix.get(c, i) * w[c];
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "({i},{c}) {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn constant_potential_shifts_diagonal_only() {
        let g = build_grid(1.0, 1.0, 0.125).unwrap();
        let a = assemble_neumann(&g, 1.0, 0.0, &NicheProfile::constant(0.0, true).unwrap()).unwrap();
        let b = assemble_neumann(&g, 1.0, 0.0, &NicheProfile::constant(3.0, true).unwrap()).unwrap();
        for i in 0..a.dim() {
            assert_eq!(a.matrix.get(i, i) - 3.0, b.matrix.get(i, i));
        }
    }

    #[test]
    fn upwind_fallback_keeps_m_matrix_signs() {
        let g = build_grid(2.0, 1.0, 0.5).unwrap();
        let p = Parameters::new(0.1, 0.1, 1.0, 1.0, 3.0).unwrap();
        let op = assemble_coupled(&g, &p, &radial(1.0)).unwrap();
        assert!(op.upwind);
        for i in 0..op.dim() {
            for (c, v) in op.matrix.row(i) {
                if c != i {
                    assert!(v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let g = build_grid(2.0, 2.0, 0.25).unwrap();
        let p = Parameters::new(2.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let a = assemble_coupled(&g, &p, &radial(1.5)).unwrap();
        let b = assemble_coupled(&g, &p, &radial(1.5)).unwrap();
        let bits = |m: &CsrMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.matrix), bits(&b.matrix));
        assert_eq!(a.matrix.col_indices(), b.matrix.col_indices());
    }

    #[test]
    fn band_ordering_is_a_permutation_with_small_band() {
        let g = build_grid(4.0, 2.0, 0.25).unwrap();
        let p = Parameters::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let op = assemble_coupled(&g, &p, &radial(1.0)).unwrap();
        let perm = op.band_ordering();
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..op.dim()).collect::<Vec<_>>());
        let (kl, ku) = op.matrix.bandwidth(&perm);
        assert_eq!((kl, ku), (g.ny + 1, g.ny + 1));
    }

    #[test]
    fn coo_dump_format() {
        let g = build_grid(1.5, 1.0, 1.0).unwrap();
        let op = assemble_neumann(&g, 1.0, 0.0, &NicheProfile::constant(0.0, true).unwrap()).unwrap();
        let mut buf = Vec::new();
        op.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        let parts: Vec<&str> = first.split(' ').collect();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2].parse::<f64>().unwrap(), op.matrix.get(0, 0));
        assert_eq!(text.lines().count(), op.matrix.nnz());
    }

    #[test]
    fn radial_sup_matches_grid_sup() {
        let prof = radial(2.0);
        let mut best = f64::NEG_INFINITY;
        for a in -40..=40 {
            for b in 0..=40 {
                best = best.max(prof.try_m(a as f64 * 0.1, b as f64 * 0.1).unwrap());
            }
        }
        assert!((best - prof.sup_m()).abs() < 1e-12);
    }
}
