//! Experiment configuration files and their diagnostics.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::additive_spectrum::AdditiveModel;
use crate::spectra::{BasisFamily, SpectrumConfig, UnivariateSpectrum};
use crate::tensor_spectrum::CardinalityBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Tensor { d: usize },
    Additive { d: usize, b: usize },
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::Tensor { d: 1 }
    }
}

impl FieldConfig {
    pub fn d(&self) -> usize {
        match *self {
            FieldConfig::Tensor { d } | FieldConfig::Additive { d, .. } => d,
        }
    }

    pub fn default_basis(&self) -> BasisFamily {
        match self {
            FieldConfig::Tensor { .. } => BasisFamily::Sine,
            FieldConfig::Additive { .. } => BasisFamily::Cosine,
        }
    }
}

/// Settings of the iteration; omitted values follow the defaults
/// `m = floor(n/2)`, `Z = 2p + 1`, `k = floor(Z log2 n) + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_cal: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub approx: ApproxSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub top_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<CardinalityBackend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(spectrum: SpectrumConfig) -> Self {
        ExperimentConfig {
            spectrum,
            field: FieldConfig::default(),
            approx: ApproxSection::default(),
            n_grid: None,
            top_n: None,
            eps: None,
            gamma: None,
            reps: None,
            f_grid: None,
            backend: None,
            truncation: None,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn build_spectrum(&self) -> crate::Result<UnivariateSpectrum> {
        self.spectrum.build(self.field.default_basis())
    }

    pub fn additive_model(&self) -> crate::Result<Option<AdditiveModel>> {
        match self.field {
            FieldConfig::Tensor { .. } => Ok(None),
            FieldConfig::Additive { d, b } => {
                Ok(Some(AdditiveModel::new(d, b, self.build_spectrum()?)?))
            }
        }
    }
}

/// One problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Dotted path of the offending field, empty for the whole document.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.path, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "{}: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "spectrum",
    "field",
    "approx",
    "n_grid",
    "N",
    "eps",
    "gamma",
    "reps",
    "f_grid",
    "backend",
    "truncation",
    "seed",
    "output_dir",
];

/// Line of the first occurrence of `"key"` in the source, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

struct Collector<'a> {
    text: &'a str,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        let key = path.rsplit('.').next().unwrap_or(path);
        self.out.push(Diagnostic {
            path: path.to_string(),
            line: if key.is_empty() { None } else { line_of(self.text, key) },
            message: message.into(),
        });
    }

    fn typed<T: DeserializeOwned>(&mut self, obj: &serde_json::Map<String, Value>, key: &str) -> Option<T> {
        let v = obj.get(key)?;
        match serde_json::from_value::<T>(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(key, e.to_string());
                None
            }
        }
    }
}

/// Parses a configuration and lists every problem found, not only the
/// first. Returns the parsed configuration when there are none.
pub fn check_config(text: &str) -> (Option<ExperimentConfig>, Vec<Diagnostic>) {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            return (
                None,
                vec![Diagnostic {
                    path: String::new(),
                    line: Some(e.line()),
                    message: format!("invalid JSON: {e}"),
                }],
            )
        }
    };
    let mut c = Collector {
        text,
        out: Vec::new(),
    };
    let Some(obj) = value.as_object() else {
        c.push("", "top level must be a JSON object");
        return (None, c.out);
    };
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            c.push(key, format!("unknown field, expected one of {}", KNOWN_KEYS.join(", ")));
        }
    }
    if !obj.contains_key("spectrum") {
        c.push("spectrum", "missing field `spectrum`");
    }
    let spectrum: Option<SpectrumConfig> = c.typed(obj, "spectrum");
    let field: Option<FieldConfig> = c.typed(obj, "field");
    let approx: Option<ApproxSection> = c.typed(obj, "approx");
    let n_grid: Option<Vec<usize>> = c.typed(obj, "n_grid");
    let top_n: Option<usize> = c.typed(obj, "N");
    let eps: Option<f64> = c.typed(obj, "eps");
    let gamma: Option<f64> = c.typed(obj, "gamma");
    let reps: Option<usize> = c.typed(obj, "reps");
    let f_grid: Option<Vec<f64>> = c.typed(obj, "f_grid");
    let backend: Option<CardinalityBackend> = c.typed(obj, "backend");
    let truncation: Option<usize> = c.typed(obj, "truncation");
    let seed: Option<u64> = c.typed(obj, "seed");
    let output_dir: Option<PathBuf> = c.typed(obj, "output_dir");

    let field = field.unwrap_or_default();
    match field {
        FieldConfig::Tensor { d } | FieldConfig::Additive { d, .. } if d == 0 => {
            c.push("field.d", "dimension must be at least 1");
        }
        FieldConfig::Additive { d, b } if b == 0 || b > d => {
            c.push("field.b", format!("order must satisfy 1 <= b <= d = {d}, got {b}"));
        }
        _ => {}
    }
    if let Some(s) = &spectrum {
        match s.build(field.default_basis()) {
            Ok(spec) => {
                if let FieldConfig::Additive { .. } = field {
                    if !spec.basis().has_constant() {
                        c.push(
                            "spectrum.basis",
                            "additive fields need a basis containing the constant function (cosine or legendre)",
                        );
                    }
                }
            }
            Err(e) => c.push("spectrum", e.to_string()),
        }
    }
    if let Some(a) = &approx {
        if let Some(n) = a.n {
            let m = a.m.unwrap_or(n / 2);
            if m == 0 || m >= n {
                c.push(
                    "approx.m",
                    format!(
                        "contraction requires 1 <= m < n (m/n < 1), got m = {m}, n = {n}"
                    ),
                );
            }
        } else if a.m.is_some() {
            c.push("approx.n", "`m` is given without `n`");
        }
        if a.k == Some(0) {
            c.push("approx.k", "need k >= 1");
        }
        if a.candidates == Some(0) {
            c.push("approx.candidates", "need at least one candidate design");
        }
        if a.r_cal == Some(0) {
            c.push("approx.r_cal", "need at least one calibration field");
        }
        if let Some(z) = a.z {
            if !(z > 0.0) {
                c.push("approx.z", "Z must be positive");
            }
        }
    }
    if let Some(g) = &n_grid {
        if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
            c.push("n_grid", "must be a non-empty strictly increasing list");
        }
        if g.iter().any(|&n| n < 2) {
            c.push("n_grid", "every n must be at least 2");
        }
    }
    if top_n == Some(0) {
        c.push("N", "must be at least 1");
    }
    if let Some(e) = eps {
        if !(e > 0.0 && e < 1.0) {
            c.push("eps", format!("must lie in (0, 1), got {e}"));
        }
    }
    if let Some(g) = gamma {
        if !(g > 0.0 && g < 1.0) {
            c.push("gamma", format!("must lie in (0, 1), got {g}"));
        }
    }
    if reps == Some(0) {
        c.push("reps", "must be at least 1");
    }
    if let Some(f) = &f_grid {
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
            c.push("f_grid", "every f must lie in [0, 1]");
        }
    }
    if truncation == Some(0) {
        c.push("truncation", "must be at least 1");
    }

    if !c.out.is_empty() {
        return (None, c.out);
    }
    let cfg = ExperimentConfig {
        spectrum: spectrum.expect("checked above"),
        field,
        approx: approx.unwrap_or_default(),
        n_grid,
        top_n,
        eps,
        gamma,
        reps,
        f_grid,
        backend,
        truncation,
        seed: seed.unwrap_or(0),
        output_dir,
    };
    (Some(cfg), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_r_is_named() {
        let (_, d) = check_config(r#"{"spectrum": {"kind": "power_log", "mu": 1.0, "q": 0.0}}"#);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("`r`"), "{}", d[0]);
    }

    #[test]
    fn all_violations_are_listed() {
        let text = r#"{
  "spectrum": {"kind": "brownian_motion"},
  "approx": {"n": 16, "m": 16},
  "eps": 1.5,
  "colour": 3
}"#;
        let (cfg, d) = check_config(text);
        assert!(cfg.is_none());
        assert_eq!(d.len(), 3, "{d:?}");
        let m = d.iter().find(|x| x.path == "approx.m").unwrap();
        assert!(m.message.contains("m < n"));
        assert_eq!(m.line, Some(3));
        assert_eq!(d.iter().find(|x| x.path == "eps").unwrap().line, Some(4));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let (_, d) = check_config("{\n  \"spectrum\": ,\n}");
        assert_eq!(d[0].line, Some(2));
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::new(SpectrumConfig::BrownianMotion {
            lambda0_sq: 0.0,
            basis: None,
        });
        cfg.eps = Some(0.2);
        cfg.top_n = Some(5);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let (back, d) = check_config(&text);
        assert!(d.is_empty());
        assert_eq!(back.unwrap(), cfg);
    }
}
