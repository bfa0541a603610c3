//! TOML scenario configuration, with every section defaulted and validated
//! before any computation starts.

use std::fmt;
use std::path::Path;

use dinls_core::gn::{BatterySpec, CheckOptions, InequalityKind};
use dinls_core::model::power_from_sc;
use dinls_core::{EvolveConfig, Grading, ModelParams, ProblemKind, RelaxConfig, ShootingConfig};
use serde::{Deserialize, Serialize};

/// Relative mismatch allowed between `p` and the power implied by `s_c`.
const SC_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub groundstate: GroundStateSection,
    #[serde(default)]
    pub gn: GnSection,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub b: f64,
    pub c: f64,
    /// Either `p` or `s_c` must be given; both are checked for consistency.
    pub p: Option<f64>,
    pub s_c: Option<f64>,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub r_max: f64,
    pub grading: Grading,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            points: 4096,
            r_max: 30.0,
            grading: Grading::LogGraded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Shoot,
    Relax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateSection {
    pub kind: ProblemKind,
    pub method: Method,
    pub pohozaev_tol: f64,
    pub shooting: ShootingConfig,
    pub relax: RelaxConfig,
}

impl Default for GroundStateSection {
    fn default() -> Self {
        GroundStateSection {
            kind: ProblemKind::SingleTerm,
            method: Method::Shoot,
            pohozaev_tol: 1e-5,
            shooting: ShootingConfig::default(),
            relax: RelaxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnSection {
    /// Empty: the sharp inequality matching `groundstate.kind`.
    pub inequalities: Vec<InequalityKind>,
    pub battery: BatterySpec,
    pub check: CheckOptions,
    pub refinement_tol: f64,
    pub tail_refinement_tol: f64,
}

impl Default for GnSection {
    fn default() -> Self {
        GnSection {
            inequalities: Vec::new(),
            battery: BatterySpec::default(),
            check: CheckOptions::default(),
            refinement_tol: dinls_core::gn::REFINEMENT_TOL,
            tail_refinement_tol: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Multiple of the single-term ground state.
    #[default]
    Ground,
    /// `amplitude · e^{-(r/width)²} e^{i chirp r²}`.
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub shape: Shape,
    pub amplitude: f64,
    pub width: f64,
    pub chirp: f64,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            shape: Shape::Ground,
            amplitude: 1.1,
            width: 1.0,
            chirp: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Virial cutoff radius; defaults to `r_max/8`.
    pub virial_radius: Option<f64>,
    pub rho_radius: f64,
    pub m_infty_a: f64,
    /// Concentration is measured in the ball of radius `(T* - t)^exponent`.
    pub concentration_exponent: f64,
    /// Re-run on a grid with twice the nodes and compare the virial constant.
    pub refine: bool,
    pub virial_refinement_tol: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        DiagnoseSection {
            virial_radius: None,
            rho_radius: 1.0,
            m_infty_a: 1.0,
            concentration_exponent: 0.25,
            refine: false,
            virial_refinement_tol: 0.10,
        }
    }
}

/// Axes left out take the value of the base model; an empty list makes the
/// sweep empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub b: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub amplitude: Option<Vec<f64>>,
    pub cap: usize,
    /// Worker threads; 0 uses the global pool.
    pub parallelism: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            b: None,
            c: None,
            p: None,
            amplitude: None,
            cap: 10_000,
            parallelism: 0,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse { line: usize, column: usize, message: String },
    Validation(Vec<String>),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "config_io",
            ConfigError::Parse { .. } => "parse_error",
            ConfigError::Validation(_) => "validation_error",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ConfigError::Io { path, message } => {
                serde_json::json!({ "error": self.code(), "path": path, "message": message })
            }
            ConfigError::Parse { line, column, message } => serde_json::json!({
                "error": self.code(), "line": line, "column": column, "message": message
            }),
            ConfigError::Validation(errors) => serde_json::json!({ "error": self.code(), "errors": errors }),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Validation(errors) => write!(f, "invalid configuration: {}", errors.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(errors))
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_str(&text)
}

impl ModelSection {
    /// The power, from `p` or from `s_c`.
    pub fn power(&self) -> Result<f64, String> {
        match (self.p, self.s_c) {
            (Some(p), None) => Ok(p),
            (None, Some(s_c)) => power_from_sc(s_c, self.n, self.b, self.c).map_err(|e| e.to_string()),
            (Some(p), Some(s_c)) => {
                let implied = power_from_sc(s_c, self.n, self.b, self.c).map_err(|e| e.to_string())?;
                if (p - implied).abs() <= SC_CONSISTENCY_TOL * p.abs().max(1.0) {
                    Ok(p)
                } else {
                    Err(format!(
                        "model.p = {p} and model.s_c = {s_c} are inconsistent: s_c = n/2 - (2-b+c)/p implies p = {implied}"
                    ))
                }
            }
            (None, None) => Err("model: one of p or s_c is required".into()),
        }
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        let p = self.power()?;
        ModelParams::with_gamma(self.n, self.b, self.c, p, self.gamma).map_err(|e| e.to_string())
    }

    fn violations(&self) -> Vec<String> {
        match self.power() {
            Ok(p) => ModelParams {
                n: self.n,
                b: self.b,
                c: self.c,
                p,
                gamma: self.gamma,
            }
            .violations()
            .into_iter()
            .map(|v| format!("model: ModelParams invariant violated: {v}"))
            .collect(),
            Err(e) => vec![e],
        }
    }
}

fn positive(errors: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{name} = {v} must be positive and finite"));
    }
}

impl ScenarioConfig {
    /// Every violated bound, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = self.model.violations();
        let g = &self.grid;
        if g.points < 16 {
            errors.push(format!("grid.points = {} must be at least 16", g.points));
        }
        positive(&mut errors, "grid.r_max", g.r_max);

        let gs = &self.groundstate;
        positive(&mut errors, "groundstate.pohozaev_tol", gs.pohozaev_tol);
        let sh = &gs.shooting;
        if !(sh.a_lo > 0.0 && sh.a_hi > sh.a_lo) {
            errors.push(format!(
                "groundstate.shooting: need 0 < a_lo < a_hi, got a_lo = {}, a_hi = {}",
                sh.a_lo, sh.a_hi
            ));
        }
        if sh.scan_points < 2 {
            errors.push("groundstate.shooting.scan_points must be at least 2".into());
        }
        positive(&mut errors, "groundstate.shooting.residual_tol", sh.residual_tol);
        if gs.relax.max_iter == 0 {
            errors.push("groundstate.relax.max_iter must be positive".into());
        }
        positive(&mut errors, "groundstate.relax.tol", gs.relax.tol);
        if gs.method == Method::Relax && gs.kind != ProblemKind::TwoTerm {
            errors.push("groundstate.method = \"relax\" requires kind = \"TwoTerm\"".into());
        }

        let gn = &self.gn;
        if gn.battery.size < dinls_core::gn::MIN_BATTERY {
            errors.push(format!(
                "gn.battery.size = {} must be at least {}",
                gn.battery.size,
                dinls_core::gn::MIN_BATTERY
            ));
        }
        positive(&mut errors, "gn.battery.length", gn.battery.length);
        positive(&mut errors, "gn.check.eta", gn.check.eta);
        positive(&mut errors, "gn.check.radius", gn.check.radius);
        if gn.check.radius > g.r_max / 2.0 {
            errors.push(format!(
                "gn.check.radius = {} must not exceed r_max/2 = {}",
                gn.check.radius,
                g.r_max / 2.0
            ));
        }
        positive(&mut errors, "gn.refinement_tol", gn.refinement_tol);
        positive(&mut errors, "gn.tail_refinement_tol", gn.tail_refinement_tol);

        let init = &self.initial;
        positive(&mut errors, "initial.amplitude", init.amplitude);
        positive(&mut errors, "initial.width", init.width);
        if !init.chirp.is_finite() {
            errors.push("initial.chirp must be finite".into());
        }
        errors.extend(self.evolve.validate().into_iter().map(|e| format!("evolve: {e}")));

        let d = &self.diagnose;
        if let Some(r) = d.virial_radius {
            positive(&mut errors, "diagnose.virial_radius", r);
            if 4.0 * r > g.r_max {
                errors.push(format!("diagnose.virial_radius = {r} needs 4R <= r_max = {}", g.r_max));
            }
        }
        positive(&mut errors, "diagnose.rho_radius", d.rho_radius);
        if d.rho_radius > g.r_max / 2.0 {
            errors.push(format!("diagnose.rho_radius = {} must not exceed r_max/2", d.rho_radius));
        }
        positive(&mut errors, "diagnose.m_infty_a", d.m_infty_a);
        positive(&mut errors, "diagnose.concentration_exponent", d.concentration_exponent);
        positive(&mut errors, "diagnose.virial_refinement_tol", d.virial_refinement_tol);

        let s = &self.sweep;
        for (name, axis) in [("b", &s.b), ("c", &s.c), ("p", &s.p), ("amplitude", &s.amplitude)] {
            if let Some(values) = axis {
                if values.iter().any(|v| !v.is_finite()) {
                    errors.push(format!("sweep.{name} contains a non-finite value"));
                }
            }
        }
        if let Some(a) = &s.amplitude {
            if a.iter().any(|v| !(*v > 0.0)) {
                errors.push("sweep.amplitude values must be positive".into());
            }
        }
        let size = self.sweep_size();
        if size > s.cap {
            errors.push(format!("sweep has {size} runs, more than sweep.cap = {}", s.cap));
        }
        errors
    }

    pub fn sweep_size(&self) -> usize {
        let s = &self.sweep;
        [&s.b, &s.c, &s.p, &s.amplitude]
            .iter()
            .map(|a| a.as_ref().map_or(1, |v| v.len()))
            .product()
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        self.model.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nn = 3\nb = 0.0\nc = 0.0\np = 2.0\n";

    #[test]
    fn defaults_are_filled() {
        let cfg = parse_str(MINIMAL).unwrap();
        assert_eq!(cfg.grid.points, 4096);
        assert_eq!(cfg.grid.r_max, 30.0);
        assert_eq!(cfg.grid.grading, Grading::LogGraded);
        assert_eq!(cfg.groundstate.kind, ProblemKind::SingleTerm);
    }

    #[test]
    fn negative_power_names_the_invariant() {
        let err = parse_str("[model]\nn = 3\nb = 0.0\nc = 0.0\np = -1.0\n").unwrap_err();
        let ConfigError::Validation(errors) = err else {
            panic!("expected validation error")
        };
        assert!(errors.iter().any(|e| e.contains("ModelParams") && e.contains("p = -1")));
    }

    #[test]
    fn inconsistent_p_and_sc() {
        let err = parse_str("[model]\nn = 3\nb = 0.0\nc = 0.0\np = 2.0\ns_c = 0.0\n").unwrap_err();
        let ConfigError::Validation(errors) = err else {
            panic!("expected validation error")
        };
        assert!(errors[0].contains("inconsistent"));
        // Consistent pair is accepted: s_c = 0 in n = 3 means p = 4/3.
        let cfg = parse_str("[model]\nn = 3\nb = 0.0\nc = 0.0\np = 1.3333333333333333\ns_c = 0.0\n").unwrap();
        assert!((cfg.params().unwrap().p - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "[model]\nn = 3\nb = 0.0\nc = 0.0\np = -1.0\n[grid]\npoints = 4\nr_max = -1.0\n";
        let ConfigError::Validation(errors) = parse_str(text).unwrap_err() else {
            panic!()
        };
        assert!(errors.len() >= 3, "{errors:?}");
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_str("[model]\nn = 3\nb = oops\n").unwrap_err();
        let ConfigError::Parse { line, column, .. } = err else {
            panic!("expected parse error")
        };
        assert_eq!(line, 3);
        assert!(column >= 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_str("[model]\nn = 3\nb = 0.0\nc = 0.0\np = 2.0\n[grid]\npionts = 10\n"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn sweep_cap() {
        let text = format!("{MINIMAL}[sweep]\nb = [0.0, -0.5]\namplitude = [0.9, 1.1]\ncap = 3\n");
        assert!(matches!(parse_str(&text), Err(ConfigError::Validation(_))));
        let ok = parse_str(&format!("{MINIMAL}[sweep]\nb = [0.0, -0.5]\namplitude = [0.9, 1.1]\n")).unwrap();
        assert_eq!(ok.sweep_size(), 4);
    }
}
