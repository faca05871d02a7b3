//! Physical parameters, niche growth-rate profiles and the reaction term.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The favorability transition profile: smooth, decreasing, from +1 at
/// -infinity to -1 at +infinity, vanishing at 0.
pub fn chi(r: f64) -> f64 {
    -r.tanh()
}

/// `[x]^+`.
pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Coefficients of the road-field system in the frame moving with the niche.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Diffusivity on the road.
    #[serde(rename = "D")]
    pub road_diffusion: f64,
    /// Diffusivity in the field.
    #[serde(rename = "d")]
    pub field_diffusion: f64,
    /// Road-to-field exchange rate.
    pub mu: f64,
    /// Field-to-road exchange rate.
    pub nu: f64,
    /// Speed of the moving frame.
    pub c: f64,
}

impl Parameters {
    pub fn new(road_diffusion: f64, field_diffusion: f64, mu: f64, nu: f64, c: f64) -> Result<Self> {
        let p = Parameters {
            road_diffusion,
            field_diffusion,
            mu,
            nu,
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.road_diffusion, self.field_diffusion, self.mu, self.nu, self.c];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        if self.road_diffusion <= 0.0 {
            return Err(Error::invalid(format!("D must be > 0, got {}", self.road_diffusion)));
        }
        if self.field_diffusion <= 0.0 {
            return Err(Error::invalid(format!("d must be > 0, got {}", self.field_diffusion)));
        }
        if self.mu < 0.0 || self.nu < 0.0 {
            return Err(Error::invalid("exchange rates mu, nu must be >= 0"));
        }
        if self.c < 0.0 {
            return Err(Error::invalid(format!("c must be >= 0, got {}", self.c)));
        }
        Ok(())
    }

    /// True in the regime mu > 0, nu > 0. Zero exchange is only meant for
    /// decoupling diagnostics.
    pub fn strict_exchange(&self) -> bool {
        self.mu > 0.0 && self.nu > 0.0
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn max_diffusion(&self) -> f64 {
        self.road_diffusion.max(self.field_diffusion)
    }
}

/// Growth rate samples on a rectilinear grid, interpolated bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major over (y, x): `values[j * xs.len() + i]`.
    values: Vec<f64>,
    clamp: bool,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>, clamp: bool) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::invalid("tabulated niche needs at least 2 samples per axis"));
        }
        if values.len() != xs.len() * ys.len() {
            return Err(Error::invalid("tabulated niche: value count does not match the axes"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::invalid("tabulated niche axes must be strictly increasing"));
        }
        if values.iter().chain(&xs).chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated niche contains non-finite values"));
        }
        let table = Table { xs, ys, values, clamp };
        if clamp {
            let exposed = table.exposed_border_max();
            if exposed >= 0.0 {
                return Err(Error::invalid(format!(
                    "clamped tabulated niche must be unfavorable on its border, found m = {exposed}"
                )));
            }
        }
        Ok(table)
    }

    /// Reads a CSV file with header `x,y,m` listing every node of a
    /// rectilinear grid (any row order).
    pub fn from_csv(path: &Path, clamp: bool) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            m: f64,
        }
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "m"] {
            return Err(Error::config(format!(
                "{}: expected header `x,y,m`, found `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            rows.push(row);
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
        let mut ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
        for axis in [&mut xs, &mut ys] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        if rows.len() != xs.len() * ys.len() {
            return Err(Error::config(format!(
                "{}: {} rows do not form a complete {}x{} grid",
                path.display(),
                rows.len(),
                xs.len(),
                ys.len()
            )));
        }
        let mut values = vec![f64::NAN; rows.len()];
        for r in &rows {
            let i = xs.binary_search_by(|v| v.total_cmp(&r.x)).expect("x present");
            let j = ys.binary_search_by(|v| v.total_cmp(&r.y)).expect("y present");
            values[j * xs.len() + i] = r.m;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::config(format!("{}: duplicate grid nodes", path.display())));
        }
        Table::new(xs, ys, values, clamp)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.xs[0], *self.xs.last().unwrap(), self.ys[0], *self.ys.last().unwrap())
    }

    /// Largest border value through which clamping extends into `y >= 0`.
    fn exposed_border_max(&self) -> f64 {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut best = f64::NEG_INFINITY;
        for j in 0..ny {
            best = best.max(self.at(0, j)).max(self.at(nx - 1, j));
        }
        for i in 0..nx {
            best = best.max(self.at(i, ny - 1));
            if self.ys[0] > 0.0 {
                best = best.max(self.at(i, 0));
            }
        }
        best
    }

    fn locate(axis: &[f64], v: f64) -> (usize, f64) {
        let v = v.clamp(axis[0], axis[axis.len() - 1]);
        let k = match axis.binary_search_by(|a| a.total_cmp(&v)) {
            Ok(k) => k.min(axis.len() - 2),
            Err(k) => k.saturating_sub(1).min(axis.len() - 2),
        };
        let t = (v - axis[k]) / (axis[k + 1] - axis[k]);
        (k, t)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (x0, x1, y0, y1) = self.bounds();
        if !self.clamp && (x < x0 || x > x1 || y < y0 || y > y1) {
            return Err(Error::OutOfDomain {
                x,
                y,
                x_min: x0,
                x_max: x1,
                y_min: y0,
                y_max: y1,
            });
        }
        let (i, tx) = Self::locate(&self.xs, x);
        let (j, ty) = Self::locate(&self.ys, y);
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Ok((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    }

    fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Upper bound of m over `|(x, y)| >= radius`: the largest corner value of
    /// every cell reaching outside the radius, plus the clamped border.
    fn far_field_bound(&self, radius: f64) -> f64 {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut best = if self.clamp { self.exposed_border_max() } else { f64::NEG_INFINITY };
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let far_x = self.xs[i].abs().max(self.xs[i + 1].abs());
                let far_y = self.ys[j].abs().max(self.ys[j + 1].abs());
                if far_x.hypot(far_y) >= radius {
                    let corner = self
                        .at(i, j)
                        .max(self.at(i + 1, j))
                        .max(self.at(i, j + 1))
                        .max(self.at(i + 1, j + 1));
                    best = best.max(corner);
                }
            }
        }
        best
    }
}

/// Shape of the linearized growth rate `m(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NicheKind {
    /// `m(x, y) = chi(|(x, y)| - L)`: favorable exactly on the half-disk of radius `L`.
    RadialFL {
        scale: f64,
    },
    Tabulated(Arc<Table>),
    Constant {
        m0: f64,
    },
}

/// A growth-rate field with its cached supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct NicheProfile {
    kind: NicheKind,
    sup_m: f64,
    homogeneous: bool,
}

impl NicheProfile {
    pub fn radial(scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::invalid("niche scale L must be finite"));
        }
        Ok(NicheProfile {
            kind: NicheKind::RadialFL { scale },
            sup_m: chi(-scale),
            homogeneous: false,
        })
    }

    /// A constant profile. Nonnegative constants violate the bounded
    /// favorable zone hypothesis and must be requested as `homogeneous`.
    pub fn constant(m0: f64, homogeneous: bool) -> Result<Self> {
        if !m0.is_finite() {
            return Err(Error::invalid("constant growth rate must be finite"));
        }
        if m0 >= 0.0 && !homogeneous {
            return Err(Error::invalid(
                "a constant niche with m0 >= 0 has no unfavorable exterior; set `homogeneous` to use it",
            ));
        }
        Ok(NicheProfile {
            kind: NicheKind::Constant { m0 },
            sup_m: m0,
            homogeneous,
        })
    }

    pub fn tabulated(table: Table) -> Self {
        let sup_m = table.max_value();
        NicheProfile {
            kind: NicheKind::Tabulated(Arc::new(table)),
            sup_m,
            homogeneous: false,
        }
    }

    pub fn kind(&self) -> &NicheKind {
        &self.kind
    }

    pub fn sup_m(&self) -> f64 {
        self.sup_m
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// Niche scale `L` for the radial family.
    pub fn scale(&self) -> Option<f64> {
        match self.kind {
            NicheKind::RadialFL { scale } => Some(scale),
            _ => None,
        }
    }

    /// Growth rate at `(x, y)`; fails only for an unclamped table queried
    /// outside its box.
    pub fn try_m(&self, x: f64, y: f64) -> Result<f64> {
        match &self.kind {
            NicheKind::RadialFL { scale } => Ok(chi(x.hypot(y) - scale)),
            NicheKind::Constant { m0 } => Ok(*m0),
            NicheKind::Tabulated(t) => t.eval(x, y),
        }
    }

    /// Supremum of m over `|(x, y)| >= radius` in the upper half-plane (an
    /// upper bound for tabulated profiles).
    pub fn far_field_bound(&self, radius: f64) -> f64 {
        match &self.kind {
            NicheKind::RadialFL { scale } => chi(radius - scale),
            NicheKind::Constant { m0 } => *m0,
            NicheKind::Tabulated(t) => t.far_field_bound(radius),
        }
    }

    /// Checks that `m` is defined on the rectangle `[-half_width, half_width] x [0, height]`.
    pub fn check_domain(&self, half_width: f64, height: f64) -> Result<()> {
        if let NicheKind::Tabulated(t) = &self.kind {
            if !t.clamp {
                let (x0, x1, y0, y1) = t.bounds();
                if -half_width < x0 || half_width > x1 || y0 > 0.0 || height > y1 {
                    return Err(Error::invalid(format!(
                        "domain [-{half_width}, {half_width}] x [0, {height}] exceeds the unclamped niche table [{x0}, {x1}] x [{y0}, {y1}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Returns the same family with the scale `L` replaced.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        match self.kind {
            NicheKind::RadialFL { .. } => NicheProfile::radial(scale),
            _ => Err(Error::invalid("only radial niches have a scale L")),
        }
    }
}

/// Free-function form of [`NicheProfile::try_m`].
pub fn niche_m(profile: &NicheProfile, x: f64, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::invalid(format!("niche queried below the road (y = {y})")));
    }
    profile.try_m(x, y)
}

/// Logistic-saturation reaction `f(x, y, v) = m(x, y) v - v^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTerm {
    pub profile: NicheProfile,
}

impl ReactionTerm {
    pub fn new(profile: NicheProfile) -> Self {
        ReactionTerm { profile }
    }

    pub fn eval(&self, x: f64, y: f64, v: f64) -> Result<f64> {
        let m = self.profile.try_m(x, y)?;
        Ok(m * v - v * v)
    }

    /// Level above which `f < 0` everywhere.
    pub fn saturation(&self) -> f64 {
        positive_part(self.profile.sup_m()) + 1.0
    }
}

/// Outcome of [`validate_hypotheses`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub radius: f64,
    pub sup_m: f64,
    pub outside_sup: f64,
    pub saturation: f64,
    pub bounded_favorable_zone: bool,
    pub saturation_ok: bool,
    pub kpp_ok: bool,
    pub failures: Vec<String>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks saturation, the KPP ratio condition (on samples) and the bounded
/// favorable zone condition outside `radius`.
pub fn validate_hypotheses(term: &ReactionTerm, radius: f64) -> Result<HypothesisReport> {
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be > 0"));
    }
    let profile = &term.profile;
    let sup_m = profile.sup_m();
    let outside_sup = profile.far_field_bound(radius);
    let saturation = term.saturation();
    let mut failures = Vec::new();

    let bfz = outside_sup < 0.0;
    if !bfz {
        failures.push(format!(
            "bounded favorable zone: sup of m outside radius {radius} is {outside_sup} >= 0"
        ));
    }

    // Sample points in the half-disk of radius 2 * radius.
    let reach = 2.0 * radius;
    let mut saturation_ok = true;
    let mut kpp_ok = true;
    let levels = [0.25, 0.5, 1.0, 2.0, 4.0];
    for a in 0..=8 {
        for b in 0..=4 {
            let x = -reach + reach * a as f64 / 4.0;
            let y = reach * b as f64 / 4.0;
            let m = match profile.try_m(x, y) {
                Ok(m) => m,
                Err(_) => continue,
            };
            for v in [saturation, 1.5 * saturation, 3.0 * saturation] {
                if m * v - v * v >= 0.0 {
                    saturation_ok = false;
                }
            }
            let ratios: Vec<f64> = levels.iter().map(|&v| (m * v - v * v) / v).collect();
            if ratios.windows(2).any(|w| w[1] >= w[0]) {
                kpp_ok = false;
            }
        }
    }
    if !saturation_ok {
        failures.push(format!("saturation: f(x, y, v) >= 0 for some v >= {saturation}"));
    }
    if !kpp_ok {
        failures.push("KPP: f(x, y, v) / v not strictly decreasing on samples".into());
    }

    Ok(HypothesisReport {
        radius,
        sup_m,
        outside_sup,
        saturation,
        bounded_favorable_zone: bfz,
        saturation_ok,
        kpp_ok,
        failures,
    })
}
