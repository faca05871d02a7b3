//! Run configuration: TOML file, `key=value` overrides, validation and
//! default expansion.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{Axis, DynamicsSettings};
use crate::eigen::{ExhaustConfig, SpacingRule};
use crate::error::{Error, Result};
use crate::model::{NicheProfile, Parameters, Table};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out: Option<PathBuf>,
    #[serde(default)]
    parameters: RawParameters,
    #[serde(default)]
    niche: RawNiche,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    command: RawCommand,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    #[serde(rename = "D")]
    road_diffusion: Option<f64>,
    d: Option<f64>,
    mu: Option<f64>,
    nu: Option<f64>,
    c: Option<f64>,
    /// Admit mu = 0 or nu = 0 (decoupling diagnostics).
    allow_decoupled: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNiche {
    kind: Option<String>,
    #[serde(rename = "L")]
    scale: Option<f64>,
    m0: Option<f64>,
    homogeneous: Option<bool>,
    table: Option<PathBuf>,
    clamp: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    h: Option<f64>,
    #[serde(rename = "X0")]
    x0: Option<f64>,
    growth: Option<f64>,
    aspect: Option<f64>,
    stop_tol: Option<f64>,
    max_steps: Option<usize>,
    homogeneous_max_steps: Option<usize>,
    eig_tol: Option<f64>,
    dt: Option<f64>,
    horizon: Option<f64>,
    steady_tol: Option<f64>,
    enlarge: Option<f64>,
    snapshot_every: Option<f64>,
    speed_tol: Option<f64>,
    d_min: Option<f64>,
    d_max: Option<f64>,
    threshold_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    axis: Option<String>,
    values: Option<String>,
    neumann: Option<bool>,
    verdicts: Option<bool>,
    check: Option<Vec<String>>,
}

/// Niche description as resolved from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NicheSpec {
    Radial {
        #[serde(rename = "L")]
        scale: f64,
    },
    Constant {
        m0: f64,
        homogeneous: bool,
    },
    Tabulated {
        table: PathBuf,
        clamp: bool,
    },
}

impl NicheSpec {
    pub fn profile(&self) -> Result<NicheProfile> {
        match self {
            NicheSpec::Radial { scale } => NicheProfile::radial(*scale),
            NicheSpec::Constant { m0, homogeneous } => NicheProfile::constant(*m0, *homogeneous),
            NicheSpec::Tabulated { table, clamp } => Ok(NicheProfile::tabulated(Table::from_csv(table, *clamp)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerics {
    pub h: f64,
    #[serde(rename = "X0")]
    pub x0: f64,
    pub growth: f64,
    pub aspect: f64,
    pub stop_tol: f64,
    pub max_steps: usize,
    /// Ladder cap for the homogeneous speed, whose truncation error decays
    /// only algebraically and so never meets `stop_tol` in practice.
    pub homogeneous_max_steps: usize,
    pub eig_tol: f64,
    pub dt: f64,
    pub horizon: f64,
    pub steady_tol: f64,
    pub enlarge: f64,
    pub snapshot_every: f64,
    pub speed_tol: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub threshold_tol: f64,
}

impl Numerics {
    pub fn exhaust(&self) -> ExhaustConfig {
        ExhaustConfig {
            x0: self.x0,
            growth: self.growth,
            spacing: SpacingRule::Fixed(self.h),
            stop_tol: self.stop_tol,
            max_steps: self.max_steps,
            min_steps: 0,
            aspect: self.aspect,
            eig_tol: self.eig_tol,
        }
    }

    pub fn dynamics(&self) -> DynamicsSettings {
        DynamicsSettings {
            dt: self.dt,
            horizon: self.horizon,
            steady_tol: self.steady_tol,
            enlarge: self.enlarge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandOptions {
    pub axis: Option<Axis>,
    pub values: Option<String>,
    pub neumann: bool,
    pub verdicts: bool,
    pub check: Vec<String>,
}

/// Fully validated configuration with every default expanded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub parameters: Parameters,
    /// Absent when the configuration has no `[niche]` table; commands that
    /// need a niche then fail naming `niche.kind`.
    pub niche: Option<NicheSpec>,
    pub numerics: Numerics,
    pub command: CommandOptions,
}

fn missing_kind() -> Error {
    Error::config("missing `niche.kind` (expected radial, constant or tabulated)")
}

/// Parses `start:stop:count` into `count` evenly spaced values.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::config(format!("command.values `{s}` is not of the form start:stop:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|k| if k + 1 == count { stop } else { start + step * k as f64 })
        .collect())
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::config(format!("empty override key `{key}`")))?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    // Values are read as TOML when they parse, otherwise as bare strings.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    node.insert(leaf.to_string(), value);
    Ok(())
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn strip_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

/// Reads a JSON configuration: either a bare configuration object or a run
/// manifest, whose `config` member is the resolved configuration of that run.
fn json_table(text: &str) -> std::result::Result<toml::Table, String> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let manifest = v.get("config").is_some_and(serde_json::Value::is_object);
    if manifest {
        v = v["config"].take();
    }
    strip_nulls(&mut v);
    let mut table: toml::Table = toml::Value::try_from(v)
        .map_err(|e| e.to_string())?
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())?;
    if manifest {
        // A recorded configuration has already passed validation once.
        if let Some(toml::Value::Table(p)) = table.get_mut("parameters") {
            p.entry("allow_decoupled").or_insert(toml::Value::Boolean(true));
        }
    }
    Ok(table)
}

impl RunConfig {
    /// Loads `path` (if any), applies `key=value` overrides in order and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
                if is_json(p) {
                    json_table(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?
                } else {
                    text.parse::<toml::Table>()
                        .map_err(|e| Error::config(format!("{}: {e}", p.display())))?
                }
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_path(&mut table, k, v)?;
        }
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        // Paths in a manifest were already resolved against the working directory.
        let base = path
            .filter(|p| !is_json(p))
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::resolve(raw, &base)
    }

    fn resolve(raw: RawConfig, base: &Path) -> Result<Self> {
        let rp = raw.parameters;
        let parameters = Parameters::new(
            rp.road_diffusion.unwrap_or(1.0),
            rp.d.unwrap_or(1.0),
            rp.mu.unwrap_or(1.0),
            rp.nu.unwrap_or(1.0),
            rp.c.unwrap_or(0.0),
        )
        .map_err(|e| Error::config(format!("parameters: {e}")))?;
        if !parameters.strict_exchange() && !rp.allow_decoupled.unwrap_or(false) {
            return Err(Error::config(
                "parameters: mu = 0 or nu = 0 decouples road and field; set `parameters.allow_decoupled = true` to run it anyway",
            ));
        }

        let niche = if raw.niche == RawNiche::default() {
            None
        } else {
            Some(Self::resolve_niche(raw.niche, base)?)
        };

        let n = raw.numerics;
        let default_x0 = match niche {
            Some(NicheSpec::Radial { scale }) => (scale + 6.0).max(8.0),
            _ => 8.0,
        };
        let numerics = Numerics {
            h: n.h.unwrap_or(0.25),
            x0: n.x0.unwrap_or(default_x0),
            growth: n.growth.unwrap_or(1.5),
            aspect: n.aspect.unwrap_or(1.0),
            stop_tol: n.stop_tol.unwrap_or(1e-4),
            max_steps: n.max_steps.unwrap_or(6),
            homogeneous_max_steps: n.homogeneous_max_steps.unwrap_or(3),
            eig_tol: n.eig_tol.unwrap_or(1e-9),
            dt: n.dt.unwrap_or(0.02),
            horizon: n.horizon.unwrap_or(500.0),
            steady_tol: n.steady_tol.unwrap_or(1e-6),
            enlarge: n.enlarge.unwrap_or(1.5),
            snapshot_every: n.snapshot_every.unwrap_or(10.0),
            speed_tol: n.speed_tol.unwrap_or(1e-2),
            d_min: n.d_min.unwrap_or(1e-2),
            d_max: n.d_max.unwrap_or(100.0),
            threshold_tol: n.threshold_tol.unwrap_or(1e-2),
        };
        numerics.exhaust().validate()?;
        if numerics.homogeneous_max_steps == 0 {
            return Err(Error::config("`numerics.homogeneous_max_steps` must be >= 1"));
        }
        let positive = [
            ("numerics.eig_tol", numerics.eig_tol),
            ("numerics.dt", numerics.dt),
            ("numerics.horizon", numerics.horizon),
            ("numerics.steady_tol", numerics.steady_tol),
            ("numerics.snapshot_every", numerics.snapshot_every),
            ("numerics.speed_tol", numerics.speed_tol),
            ("numerics.d_min", numerics.d_min),
            ("numerics.threshold_tol", numerics.threshold_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("`{key}` must be a positive number")));
            }
        }
        if !(numerics.d_max > numerics.d_min) {
            return Err(Error::config("`numerics.d_max` must exceed `numerics.d_min`"));
        }
        if !(numerics.enlarge >= 1.0) {
            return Err(Error::config("`numerics.enlarge` must be >= 1"));
        }

        let rc = raw.command;
        let axis = rc.axis.as_deref().map(Axis::parse).transpose()?;
        if let Some(v) = &rc.values {
            parse_range(v)?;
        }
        let command = CommandOptions {
            axis,
            values: rc.values,
            neumann: rc.neumann.unwrap_or(true),
            verdicts: rc.verdicts.unwrap_or(false),
            check: rc.check.unwrap_or_default(),
        };
        Ok(RunConfig {
            out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
            parameters,
            niche,
            numerics,
            command,
        })
    }

    fn resolve_niche(rn: RawNiche, base: &Path) -> Result<NicheSpec> {
        let kind = rn.kind.ok_or_else(missing_kind)?;
        let niche = match kind.as_str() {
            "radial" => NicheSpec::Radial {
                scale: rn.scale.ok_or_else(|| Error::config("`niche.L` is required for a radial niche"))?,
            },
            "constant" => NicheSpec::Constant {
                m0: rn.m0.ok_or_else(|| Error::config("`niche.m0` is required for a constant niche"))?,
                homogeneous: rn.homogeneous.unwrap_or(false),
            },
            "tabulated" => {
                let t = rn
                    .table
                    .ok_or_else(|| Error::config("`niche.table` is required for a tabulated niche"))?;
                NicheSpec::Tabulated {
                    table: if t.is_absolute() { t } else { base.join(t) },
                    clamp: rn.clamp.unwrap_or(true),
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown `niche.kind` `{other}` (expected radial, constant or tabulated)"
                )))
            }
        };
        niche.profile().map_err(|e| Error::config(format!("niche: {e}")))?;
        Ok(niche)
    }

    pub fn profile(&self) -> Result<NicheProfile> {
        self.niche.as_ref().ok_or_else(missing_kind)?.profile()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, overrides: &[(&str, &str)]) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        let o: Vec<(String, String)> = overrides.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        RunConfig::load(Some(&path), &o)
    }

    #[test]
    fn defaults_expand() {
        let c = load_str("[niche]\nkind = \"radial\"\nL = 5\n", &[]).unwrap();
        assert_eq!(c.parameters.mu, 1.0);
        assert_eq!(c.numerics.x0, 11.0);
        assert_eq!(c.numerics.stop_tol, 1e-4);
        assert_eq!(c.niche, Some(NicheSpec::Radial { scale: 5.0 }));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = load_str("[niche]\nkind = \"radial\"\nL = 5\n[numerics]\nhh = 0.1\n", &[]).unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("hh"), "{e}");
    }

    #[test]
    fn missing_kind_names_key() {
        let c = load_str("[parameters]\nd = 1.0\n", &[]).unwrap();
        assert!(c.profile().unwrap_err().to_string().contains("niche.kind"));
        let e = load_str("[niche]\nL = 1.0\n", &[]).unwrap_err();
        assert!(e.to_string().contains("niche.kind"));
    }

    #[test]
    fn overrides_win() {
        let c = load_str(
            "[niche]\nkind = \"radial\"\nL = 5\n",
            &[("parameters.D", "10"), ("niche.L", "2.5"), ("command.axis", "L")],
        )
        .unwrap();
        assert_eq!(c.parameters.road_diffusion, 10.0);
        assert_eq!(c.niche, Some(NicheSpec::Radial { scale: 2.5 }));
        assert_eq!(c.command.axis, Some(Axis::L));
    }

    #[test]
    fn range_syntax() {
        let v = parse_range("-2:8:21").unwrap();
        assert_eq!(v.len(), 21);
        assert_eq!(v[0], -2.0);
        assert_eq!(v[20], 8.0);
        assert!((v[1] + 1.5).abs() < 1e-15);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("2:1:3").is_err());
    }

    #[test]
    fn zero_exchange_needs_the_flag() {
        let e = load_str("[parameters]\nmu = 0\n", &[]).unwrap_err();
        assert!(e.to_string().contains("allow_decoupled"), "{e}");
        let c = load_str("[parameters]\nmu = 0\nallow_decoupled = true\n", &[]).unwrap();
        assert_eq!(c.parameters.mu, 0.0);
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let e = load_str("[parameters]\nd = -1\n[niche]\nkind = \"radial\"\nL = 1\n", &[]).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn resolved_config_round_trips_through_a_manifest() {
        let text = "[parameters]\nmu = 0\nallow_decoupled = true\n[niche]\nkind = \"constant\"\nm0 = -1\n[command]\naxis = \"L\"\n";
        let c = load_str(text, &[("numerics.h", "0.25")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let manifest = serde_json::json!({ "version": "x", "config": c });
        std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert_eq!(RunConfig::load(Some(&path), &[]).unwrap(), c);
        let bare = dir.path().join("bare.json");
        std::fs::write(&bare, serde_json::to_string(&c).unwrap()).unwrap();
        let e = RunConfig::load(Some(&bare), &[]).unwrap_err();
        assert!(e.to_string().contains("allow_decoupled"), "{e}");
        let c = RunConfig {
            parameters: Parameters { mu: 1.0, ..c.parameters },
            ..c
        };
        std::fs::write(&bare, serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(RunConfig::load(Some(&bare), &[]).unwrap(), c);
    }
}
