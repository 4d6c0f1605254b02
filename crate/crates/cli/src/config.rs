use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use foliation_core::diffusion::ReferenceKind;
use foliation_core::models::{self, CustomSurface, NamedSurface};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Contents of a `--config` file. Every section is optional and command-line
/// flags take precedence over it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: Option<SurfaceConfig>,
    pub output_dir: Option<PathBuf>,
    pub master_seed: Option<u64>,
    pub trace: Option<TraceSection>,
    pub ops: Option<OpsSection>,
    pub curvature: Option<CurvatureSection>,
    pub sim: Option<SimSection>,
    pub boundary: Option<BoundarySection>,
}

/// Either a registry surface (`name` plus `params`) or a `custom` one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub custom: Option<CustomSurface>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    /// Number of starts placed on a ring around the first characteristic point.
    pub leaves: Option<usize>,
    pub radius: Option<f64>,
    pub step: Option<f64>,
    pub max_length: Option<f64>,
    pub direction: Option<i8>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpsSection {
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    pub n_points: Option<usize>,
    /// Center of the bump test function; defaults to a point near the first
    /// characteristic point.
    pub bump_center: Option<Vec<f64>>,
    pub bump_radius: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSection {
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    pub n_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// `bessel3`, `legendre3`, `hyperbolic-bessel3` or `bessel:<nu>`.
    pub process: Option<String>,
    pub k: Option<f64>,
    pub leaf: Option<String>,
    pub start: Option<Vec<f64>>,
    pub leaf_distance: Option<f64>,
    pub s0: Option<f64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub n_paths: Option<usize>,
    pub kill_radius: Option<f64>,
    pub hit_times: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub leaf: Option<String>,
    pub start: Option<Vec<f64>>,
    pub leaf_distance: Option<f64>,
    pub delta: Option<f64>,
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
    Ok(cfg)
}

impl SurfaceConfig {
    pub fn build(&self) -> Result<NamedSurface> {
        match (&self.name, &self.custom) {
            (Some(name), None) => models::build(name, &self.params).map_err(|e| UsageError(e.to_string()).into()),
            (None, Some(def)) => {
                if !self.params.is_empty() {
                    return Err(UsageError("custom surfaces take params inside the custom block".into()).into());
                }
                models::custom_surface(def).with_context(|| "building custom surface")
            }
            (Some(_), Some(_)) => Err(UsageError("surface: give either name or custom, not both".into()).into()),
            (None, None) => Err(UsageError("no surface given (use --surface or a config surface)".into()).into()),
        }
    }
}

/// Parses a process name as accepted by `--process`.
pub fn parse_process(s: &str) -> Result<ReferenceKind> {
    Ok(match s {
        "bessel3" => ReferenceKind::Bessel3,
        "legendre3" => ReferenceKind::Legendre3,
        "hyperbolic-bessel3" => ReferenceKind::HyperbolicBessel3,
        other => match other.strip_prefix("bessel:").map(str::parse::<f64>) {
            Some(Ok(nu)) => ReferenceKind::BesselOrder { nu },
            _ => {
                return Err(UsageError(format!(
                    "unknown process '{other}' (expected bessel3, legendre3, hyperbolic-bessel3 or bessel:<nu>)"
                ))
                .into())
            }
        },
    })
}

/// Parses `x,y,z[,w]`.
pub fn parse_coords(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| UsageError(format!("bad coordinate '{t}' in '{s}': {e}")).into()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"surface": {"name": "paraboloid"}, "colour": 1}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"sim": {"paths": 10}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn full_config_parses() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "surface": {"name": "hyperbolic-paraboloid", "params": {"a": 0.25}},
                "output_dir": "out",
                "master_seed": 7,
                "trace": {"starts": [[1, 0, 0]], "step": 0.02},
                "ops": {"eps": [0.1, 0.01], "n_points": 4},
                "curvature": {"n_points": 3},
                "sim": {"process": "bessel:1.5", "n_paths": 10},
                "boundary": {"leaf": "x-axis", "delta": 0.05}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.master_seed, Some(7));
        let s = cfg.surface.unwrap().build().unwrap();
        assert_eq!(s.name, "hyperbolic-paraboloid");
        assert_eq!(s.params["a"], 0.25);
    }

    #[test]
    fn processes_parse() {
        assert_eq!(parse_process("bessel3").unwrap(), ReferenceKind::Bessel3);
        assert_eq!(parse_process("bessel:2.5").unwrap(), ReferenceKind::BesselOrder { nu: 2.5 });
        assert!(parse_process("bessel:x").is_err());
        assert!(parse_process("ou").is_err());
    }
}
