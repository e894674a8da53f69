//! JSON run configuration.

use std::path::{Path, PathBuf};

use boussinesq::hydro::CFL_STABILITY_LIMIT;
use log::warn;
use serde::Deserialize;

/// A configuration problem, prefixed with the offending key path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_b_disp", rename = "B_disp")]
    pub b_disp: f64,
    #[serde(default)]
    pub c_f: f64,
    /// Depth floor; scaled to the deepest water when absent.
    #[serde(default)]
    pub h_eps: Option<f64>,
}

fn default_g() -> f64 {
    9.81
}

fn default_b_disp() -> f64 {
    1.0 / 15.0
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { g: default_g(), b_disp: default_b_disp(), c_f: 0.0, h_eps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverConfig {
    Thomas,
    Cr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossTermConfig {
    Lagged,
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioGuardConfig {
    Clamp,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_cfl")]
    pub cfl_target: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    /// Defaults to ten times `dt_init`.
    #[serde(default)]
    pub dt_max: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: ModeConfig,
    #[serde(default = "default_solver")]
    pub tridiag_solver: SolverConfig,
    #[serde(default = "default_cross")]
    pub cross_term: CrossTermConfig,
    #[serde(default = "default_guard")]
    pub ratio_guard: RatioGuardConfig,
}

fn default_theta() -> f64 {
    1.5
}
fn default_cfl() -> f64 {
    0.125
}
fn default_alpha() -> f64 {
    0.2
}
fn default_dt_min() -> f64 {
    1e-7
}
fn default_mode() -> ModeConfig {
    ModeConfig::Adaptive
}
fn default_solver() -> SolverConfig {
    SolverConfig::Thomas
}
fn default_cross() -> CrossTermConfig {
    CrossTermConfig::Lagged
}
fn default_guard() -> RatioGuardConfig {
    RatioGuardConfig::Clamp
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Wall,
    Sponge {
        width: f64,
        #[serde(default = "default_lambda")]
        lambda_max: f64,
    },
    Sine {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    Irregular {
        hs: f64,
        tp: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_components")]
        n_components: usize,
        #[serde(default = "default_df")]
        df: f64,
    },
}

fn default_lambda() -> f64 {
    5.0
}
fn default_gamma() -> f64 {
    3.3
}
fn default_components() -> usize {
    68
}
fn default_df() -> f64 {
    0.01
}

fn wall() -> BoundaryConfig {
    BoundaryConfig::Wall
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundariesConfig {
    #[serde(default = "wall")]
    pub west: BoundaryConfig,
    #[serde(default = "wall")]
    pub east: BoundaryConfig,
    #[serde(default = "wall")]
    pub south: BoundaryConfig,
    #[serde(default = "wall")]
    pub north: BoundaryConfig,
}

impl Default for BoundariesConfig {
    fn default() -> Self {
        Self { west: wall(), east: wall(), south: wall(), north: wall() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingConfig {
    East,
    West,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Still,
    Solitary {
        height: f64,
        x0: f64,
        #[serde(default = "default_heading")]
        heading: HeadingConfig,
        /// Ambient depth; the still-water depth at the crest when absent.
        #[serde(default)]
        depth: Option<f64>,
    },
}

fn default_heading() -> HeadingConfig {
    HeadingConfig::East
}

fn still() -> InitialConfig {
    InitialConfig::Still
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum BedConfig {
    Flat {
        depth: f64,
    },
    /// Gaussian hump of height `height` and e-folding radius `radius` on a
    /// flat floor.
    GaussianHump {
        depth: f64,
        height: f64,
        center: [f64; 2],
        radius: f64,
    },
    ConicalIsland {
        #[serde(default = "default_center")]
        center: [f64; 2],
        #[serde(default = "default_base")]
        base_radius: f64,
        #[serde(default = "default_slope")]
        slope: f64,
        #[serde(default = "default_crest")]
        crest_height: f64,
        #[serde(default = "default_island_depth")]
        depth: f64,
    },
    Hamm,
    File {
        path: PathBuf,
        ws: f64,
    },
}

fn default_center() -> [f64; 2] {
    [15.0, 15.0]
}
fn default_base() -> f64 {
    3.6
}
fn default_slope() -> f64 {
    0.25
}
fn default_crest() -> f64 {
    0.625
}
fn default_island_depth() -> f64 {
    0.32
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bathymetry: BedConfig,
    #[serde(default = "still")]
    pub initial: InitialConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub record_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum FieldName {
    W,
    P,
    Q,
    MaxW,
}

impl FieldName {
    pub fn label(self) -> &'static str {
        match self {
            FieldName::W => "w",
            FieldName::P => "P",
            FieldName::Q => "Q",
            FieldName::MaxW => "max_w",
        }
    }
}

fn all_fields() -> Vec<FieldName> {
    vec![FieldName::W, FieldName::P, FieldName::Q, FieldName::MaxW]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunupConfig {
    #[serde(default = "default_azimuths")]
    pub azimuths: usize,
}

fn default_azimuths() -> usize {
    72
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: PathBuf,
    /// Seconds between field snapshots; 0 writes only the final fields.
    #[serde(default)]
    pub snapshot_interval: f64,
    #[serde(default = "all_fields")]
    pub fields: Vec<FieldName>,
    /// Runup profile around a conical island.
    #[serde(default)]
    pub runup: Option<RunupConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub boundaries: BoundariesConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub gauges: Vec<GaugeConfig>,
    pub outputs: OutputsConfig,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Largest tolerated surface deviation (m).
    #[serde(default)]
    pub blowup_bound: Option<f64>,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub duration: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub mode: Option<ModeConfig>,
    pub cfl: Option<f64>,
    pub fixed_dt: Option<f64>,
}

impl RunConfig {
    /// Parses and validates a configuration document. Relative file paths
    /// are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            err(if path == "." { "<root>" } else { &path }, e.inner())
        })?;
        if let BedConfig::File { path, .. } = &mut cfg.scenario.bathymetry {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if cfg.outputs.directory.is_relative() {
            cfg.outputs.directory = base.join(&cfg.outputs.directory);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(&path.display().to_string(), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(d) = o.duration {
            self.duration = d;
        }
        if let Some(dir) = &o.output_dir {
            self.outputs.directory = dir.clone();
        }
        if let Some(m) = o.mode {
            self.numerics.mode = m;
        }
        if let Some(c) = o.cfl {
            self.numerics.cfl_target = c;
        }
        if let Some(dt) = o.fixed_dt {
            self.numerics.mode = ModeConfig::Fixed;
            self.numerics.dt_init = dt;
            self.numerics.dt_min = self.numerics.dt_min.min(dt);
            if let Some(max) = self.numerics.dt_max {
                self.numerics.dt_max = Some(max.max(dt));
            }
        }
        self.validate()
    }

    pub fn dt_max(&self) -> f64 {
        self.numerics.dt_max.unwrap_or(10.0 * self.numerics.dt_init)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.nx < 5 || g.ny < 5 {
            return Err(err("grid", "needs at least 5x5 cells"));
        }
        for (k, v) in [("grid.dx", g.dx), ("grid.dy", g.dy)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(err(k, format!("must be positive, got {v}")));
            }
        }
        let p = &self.physics;
        if !(p.g > 0.0 && p.g.is_finite()) {
            return Err(err("physics.g", "must be positive"));
        }
        if !(p.c_f >= 0.0 && p.c_f.is_finite()) {
            return Err(err("physics.c_f", "must be >= 0"));
        }
        if let Some(h) = p.h_eps {
            if !(h > 0.0 && h.is_finite()) {
                return Err(err("physics.h_eps", "must be positive"));
            }
        }
        let n = &self.numerics;
        if !(1.0..=2.0).contains(&n.theta) {
            return Err(err("numerics.theta", format!("must lie in [1, 2], got {}", n.theta)));
        }
        if !(n.cfl_target > 0.0 && n.cfl_target < CFL_STABILITY_LIMIT) {
            return Err(err(
                "numerics.cfl_target",
                format!("must lie in (0, {CFL_STABILITY_LIMIT}), the stability bound of the scheme; got {}", n.cfl_target),
            ));
        }
        if !(n.alpha > 0.0 && n.alpha <= 1.0) {
            return Err(err("numerics.alpha", format!("must lie in (0, 1], got {}", n.alpha)));
        }
        if !(0.01..=0.5).contains(&n.alpha) {
            warn!("numerics.alpha = {} is outside the range 0.01..0.5 known to work well", n.alpha);
        }
        let dt_max = self.dt_max();
        if !(n.dt_min > 0.0 && n.dt_min <= n.dt_init && n.dt_init <= dt_max && dt_max.is_finite()) {
            return Err(err(
                "numerics",
                format!("need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {dt_max}", n.dt_min, n.dt_init),
            ));
        }
        for (side, b) in [("west", &self.boundaries.west), ("east", &self.boundaries.east), ("south", &self.boundaries.south), ("north", &self.boundaries.north)] {
            let key = format!("boundaries.{side}");
            match b {
                BoundaryConfig::Wall => {}
                BoundaryConfig::Sponge { width, lambda_max } => {
                    if !(*width > 0.0 && *lambda_max >= 0.0) {
                        return Err(err(&key, "sponge needs width > 0 and lambda_max >= 0"));
                    }
                }
                BoundaryConfig::Sine { amplitude, period, .. } => {
                    if !(*amplitude > 0.0 && *period > 0.0) {
                        return Err(err(&key, "sine maker needs amplitude > 0 and period > 0"));
                    }
                }
                BoundaryConfig::Irregular { hs, tp, gamma, n_components, df } => {
                    if !(*hs > 0.0 && *tp > 0.0 && *gamma >= 1.0 && *n_components >= 1 && *df > 0.0) {
                        return Err(err(&key, "irregular maker needs hs, tp, df > 0, gamma >= 1, n_components >= 1"));
                    }
                }
            }
        }
        if let BedConfig::File { path, .. } = &self.scenario.bathymetry {
            if !path.exists() {
                return Err(err("scenario.bathymetry.path", format!("{} does not exist", path.display())));
            }
        }
        for (k, gauge) in self.gauges.iter().enumerate() {
            let inside = gauge.x >= g.x0 && gauge.x <= g.x0 + g.nx as f64 * g.dx && gauge.y >= g.y0 && gauge.y <= g.y0 + g.ny as f64 * g.dy;
            if !inside {
                return Err(err(&format!("gauges[{k}]"), format!("{} lies outside the domain", gauge.id)));
            }
            if !(gauge.record_interval >= 0.0) {
                return Err(err(&format!("gauges[{k}].record_interval"), "must be >= 0"));
            }
        }
        if !(self.outputs.snapshot_interval >= 0.0) {
            return Err(err("outputs.snapshot_interval", "must be >= 0"));
        }
        if !self.outputs.fields.is_empty() && (g.dx - g.dy).abs() > 1e-12 * g.dx {
            return Err(err("outputs.fields", "raster snapshots need square cells (dx = dy)"));
        }
        if self.outputs.runup.is_some() && !matches!(self.scenario.bathymetry, BedConfig::ConicalIsland { .. }) {
            return Err(err("outputs.runup", "runup profiles need the conical_island bathymetry"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(err("duration", "must be positive"));
        }
        if let Some(b) = self.blowup_bound {
            if !(b > 0.0) {
                return Err(err("blowup_bound", "must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "grid": {"nx": 20, "ny": 10, "dx": 0.1, "dy": 0.1},
        "numerics": {"dt_init": 0.01},
        "scenario": {"bathymetry": {"builtin": "flat", "depth": 0.5}},
        "outputs": {"directory": "out"},
        "duration": 1.0
    }"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.physics.b_disp, 1.0 / 15.0);
        assert_eq!(c.numerics.theta, 1.5);
        assert_eq!(c.numerics.alpha, 0.2);
        assert_eq!(c.numerics.cfl_target, 0.125);
        assert_eq!(c.numerics.mode, ModeConfig::Adaptive);
        assert_eq!(c.boundaries.west, BoundaryConfig::Wall);
        assert_eq!(c.outputs.directory, Path::new("/tmp/out"));
        assert_eq!(c.dt_max(), 0.1);
    }

    #[test]
    fn irregular_defaults_gamma() {
        let text = MINIMAL.replace(
            r#""outputs""#,
            r#""boundaries": {"west": {"kind": "irregular", "hs": 0.1, "tp": 1.6}}, "outputs""#,
        );
        let c = parse(&text).unwrap();
        match c.boundaries.west {
            BoundaryConfig::Irregular { gamma, n_components, df, .. } => {
                assert_eq!(gamma, 3.3);
                assert_eq!(n_components, 68);
                assert_eq!(df, 0.01);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cfl_above_bound_is_rejected() {
        let text = MINIMAL.replace(r#""dt_init": 0.01"#, r#""dt_init": 0.01, "cfl_target": 0.3"#);
        let e = parse(&text).unwrap_err();
        assert!(e.0.starts_with("numerics.cfl_target"), "{e}");
    }

    #[test]
    fn large_alpha_is_accepted() {
        let text = MINIMAL.replace(r#""dt_init": 0.01"#, r#""dt_init": 0.01, "alpha": 0.7"#);
        assert_eq!(parse(&text).unwrap().numerics.alpha, 0.7);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = MINIMAL.replace(r#""dt_init": 0.01"#, r#""dt_init": 0.01, "speed": 3"#);
        let e = parse(&text).unwrap_err();
        assert!(e.0.starts_with("numerics"), "{e}");
        assert!(e.0.contains("speed"), "{e}");
    }

    #[test]
    fn missing_and_mistyped_keys_name_the_path() {
        let e = parse(&MINIMAL.replace(r#""nx": 20, "#, "")).unwrap_err();
        assert!(e.0.contains("nx"), "{e}");
        let e = parse(&MINIMAL.replace(r#""nx": 20"#, r#""nx": "wide""#)).unwrap_err();
        assert!(e.0.starts_with("grid.nx"), "{e}");
        let e = parse(&MINIMAL.replace(r#""flat""#, r#""sandcastle""#)).unwrap_err();
        assert!(e.0.starts_with("scenario.bathymetry"), "{e}");
    }

    #[test]
    fn missing_bathymetry_file_is_rejected() {
        let text = MINIMAL.replace(r#"{"builtin": "flat", "depth": 0.5}"#, r#"{"builtin": "file", "path": "nope.asc", "ws": 0.0}"#);
        assert!(parse(&text).unwrap_err().0.contains("nope.asc"));
    }

    #[test]
    fn gauges_must_be_inside() {
        let text = MINIMAL.replace(r#""duration""#, r#""gauges": [{"id": "a", "x": 5.0, "y": 0.5}], "duration""#);
        assert!(parse(&text).unwrap_err().0.starts_with("gauges[0]"));
    }

    #[test]
    fn fixed_dt_override_switches_mode() {
        let mut c = parse(MINIMAL).unwrap();
        c.apply(&Overrides { fixed_dt: Some(0.02), duration: Some(3.0), ..Default::default() }).unwrap();
        assert_eq!(c.numerics.mode, ModeConfig::Fixed);
        assert_eq!(c.numerics.dt_init, 0.02);
        assert_eq!(c.duration, 3.0);
        assert!(c.apply(&Overrides { cfl: Some(0.25), ..Default::default() }).is_err());
    }
}
