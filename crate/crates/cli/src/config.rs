//! Experiment configuration files.
//!
//! ```toml
//! seed = 7              # optional, default 0
//! out = "results"       # optional output directory
//!
//! [model]
//! d = 2
//! reference = "fs"      # or a weight expression with slopes (0, d)
//!
//! [grid]                # optional, defaults below
//! s_min = -30.0
//! s_max = 30.0
//! n_nodes = 4001
//!
//! [weights]
//! u = "0.5*(lse(0:0, 2:-2; 1.0) - fs(2))"
//!
//! [[experiment]]        # or a single [experiment] table
//! kind = "quantize"
//! weight = "u"
//! k_list = [4, 8, 16, 32, 64]
//! ```
//!
//! Keys per experiment kind:
//!
//! | kind        | keys |
//! |-------------|------|
//! | quantize    | weight, k_list, m, oracle_refine, rate_k, rate, abs_tol |
//! | bergman     | weight, k_list, ks_limit |
//! | geodesic    | start, end, k_list, m, t_grid, random_configs |
//! | envelope    | weight |
//! | asymptotics | metric, eps, p_list, scan, pairs, stable_p |
//! | morse       | weight, k_list, m |
//! | compare     | weight, k_list, m_list, c_hat |
//! | chain       | weight, k_list, m_list, c_hat |
//!
//! Every kind also accepts `name`. Unknown keys, and keys that the kind
//! does not use, are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use kqlab_core::radial::grid::{DEFAULT_NODES, DEFAULT_S_MAX, DEFAULT_S_MIN};
use kqlab_core::{Grid, GridFunction, PolarizedModel};
use serde::Deserialize;

use crate::error::{LabError, LabResult};
use crate::expr::{parse_weight, WeightExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Quantize,
    Bergman,
    Geodesic,
    Envelope,
    Asymptotics,
    Morse,
    Compare,
    Chain,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Quantize => "quantize",
            Self::Bergman => "bergman",
            Self::Geodesic => "geodesic",
            Self::Envelope => "envelope",
            Self::Asymptotics => "asymptotics",
            Self::Morse => "morse",
            Self::Compare => "compare",
            Self::Chain => "chain",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Quantize => &["weight", "k_list", "m", "oracle_refine", "rate_k", "rate", "abs_tol"],
            Self::Bergman => &["weight", "k_list", "ks_limit"],
            Self::Geodesic => &["start", "end", "k_list", "m", "t_grid", "random_configs"],
            Self::Envelope => &["weight"],
            Self::Asymptotics => &["metric", "eps", "p_list", "scan", "pairs", "stable_p"],
            Self::Morse => &["weight", "k_list", "m"],
            Self::Compare | Self::Chain => &["weight", "k_list", "m_list", "c_hat"],
        }
    }

    fn needs_k(self) -> bool {
        !matches!(self, Self::Envelope | Self::Asymptotics)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Fs,
    Perturbed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out: Option<String>,
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    weights: BTreeMap<String, String>,
    experiment: Vec<Experiment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: u32,
    #[serde(default = "default_reference")]
    reference: String,
}

fn default_reference() -> String {
    "fs".into()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawGrid {
    s_min: f64,
    s_max: f64,
    n_nodes: usize,
}

impl Default for RawGrid {
    fn default() -> Self {
        Self {
            s_min: DEFAULT_S_MIN,
            s_max: DEFAULT_S_MAX,
            n_nodes: DEFAULT_NODES,
        }
    }
}

/// One `[experiment]` table. Unset keys take per-kind defaults through the
/// accessor methods.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub kind: Option<Kind>,
    pub name: Option<String>,
    pub weight: Option<String>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub k_list: Option<Vec<u32>>,
    pub m: Option<u32>,
    pub m_list: Option<Vec<u32>>,
    pub t_grid: Option<Vec<f64>>,
    pub random_configs: Option<usize>,
    pub oracle_refine: Option<usize>,
    pub rate_k: Option<u32>,
    pub rate: Option<f64>,
    pub abs_tol: Option<f64>,
    pub ks_limit: Option<f64>,
    pub metric: Option<MetricKind>,
    pub eps: Option<f64>,
    pub p_list: Option<Vec<u32>>,
    pub scan: Option<Vec<f64>>,
    pub pairs: Option<usize>,
    pub stable_p: Option<Vec<u32>>,
    pub c_hat: Option<f64>,
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        self.kind.expect("validated")
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().expect("validated")
    }

    pub fn k_list(&self) -> &[u32] {
        self.k_list.as_deref().unwrap_or(&[])
    }

    pub fn m(&self) -> u32 {
        self.m.unwrap_or(0)
    }

    pub fn m_list(&self) -> Vec<u32> {
        self.m_list.clone().unwrap_or_else(|| match self.kind() {
            Kind::Compare => vec![1, 2, 4, 8],
            _ => vec![0],
        })
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.t_grid
            .clone()
            .unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect())
    }

    pub fn oracle_refine(&self) -> usize {
        self.oracle_refine.unwrap_or(10)
    }

    pub fn rate_k(&self) -> u32 {
        self.rate_k.unwrap_or(8)
    }

    pub fn rate(&self) -> f64 {
        self.rate.unwrap_or(1.0 / 3.0)
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol.unwrap_or(1e-2)
    }

    pub fn ks_limit(&self) -> f64 {
        self.ks_limit.unwrap_or(0.05)
    }

    pub fn metric(&self) -> MetricKind {
        self.metric.unwrap_or(MetricKind::Fs)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(0.05)
    }

    pub fn p_list(&self) -> Vec<u32> {
        self.p_list.clone().unwrap_or_else(|| match self.metric() {
            MetricKind::Fs => vec![8, 16, 32, 64, 128],
            MetricKind::Perturbed => vec![64, 128, 256, 512],
        })
    }

    pub fn scan(&self) -> Vec<f64> {
        self.scan
            .clone()
            .unwrap_or_else(|| (0..21).map(|i| -5.0 + 0.5 * i as f64).collect())
    }

    pub fn pairs(&self) -> usize {
        self.pairs.unwrap_or(10_000)
    }

    pub fn stable_p(&self) -> Vec<u32> {
        self.stable_p.clone().unwrap_or_else(|| vec![16, 32, 64, 128])
    }

    pub fn c_hat(&self) -> f64 {
        self.c_hat.unwrap_or(0.0)
    }

    fn present_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut note = |set: bool, key: &'static str| {
            if set {
                keys.push(key)
            }
        };
        note(self.weight.is_some(), "weight");
        note(self.start.is_some(), "start");
        note(self.end.is_some(), "end");
        note(self.k_list.is_some(), "k_list");
        note(self.m.is_some(), "m");
        note(self.m_list.is_some(), "m_list");
        note(self.t_grid.is_some(), "t_grid");
        note(self.random_configs.is_some(), "random_configs");
        note(self.oracle_refine.is_some(), "oracle_refine");
        note(self.rate_k.is_some(), "rate_k");
        note(self.rate.is_some(), "rate");
        note(self.abs_tol.is_some(), "abs_tol");
        note(self.ks_limit.is_some(), "ks_limit");
        note(self.metric.is_some(), "metric");
        note(self.eps.is_some(), "eps");
        note(self.p_list.is_some(), "p_list");
        note(self.scan.is_some(), "scan");
        note(self.pairs.is_some(), "pairs");
        note(self.stable_p.is_some(), "stable_p");
        note(self.c_hat.is_some(), "c_hat");
        keys
    }

    fn validate(&self, weights: &BTreeMap<String, Sampled>) -> LabResult<()> {
        let kind = self.kind();
        let ctx = |msg: String| LabError::Config(format!("experiment '{}': {msg}", self.name()));
        for key in self.present_keys() {
            if !kind.keys().contains(&key) {
                return Err(ctx(format!("key '{key}' is not used by kind '{kind}'")));
            }
        }
        if kind.needs_k() {
            let k = self.k_list();
            if k.is_empty() {
                return Err(ctx("k_list must be non-empty".into()));
            }
            if k.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ctx("k_list must be strictly ascending".into()));
            }
            if k[0] == 0 {
                return Err(ctx("k_list entries must be positive".into()));
            }
        }
        let required: &[(&str, &Option<String>)] = match kind {
            Kind::Geodesic => &[("start", &self.start), ("end", &self.end)],
            Kind::Asymptotics => &[],
            _ => &[("weight", &self.weight)],
        };
        for (key, value) in required {
            match value {
                None => return Err(ctx(format!("missing key '{key}'"))),
                Some(name) if !weights.contains_key(name) => {
                    return Err(ctx(format!("{key} '{name}' is not defined in [weights]")))
                }
                _ => {}
            }
        }
        let t = self.t_grid();
        if t.len() < 3 || t.windows(2).any(|w| w[1] <= w[0]) || t[0] < 0.0 || t[t.len() - 1] > 1.0 {
            return Err(ctx("t_grid must be strictly increasing in [0, 1] with at least 3 points".into()));
        }
        if self.oracle_refine() == 0 {
            return Err(ctx("oracle_refine must be positive".into()));
        }
        if kind == Kind::Compare && self.m_list().contains(&0) {
            return Err(ctx("compare needs m >= 1".into()));
        }
        if self.m_list().windows(2).any(|w| w[1] <= w[0]) {
            return Err(ctx("m_list must be strictly ascending".into()));
        }
        let p = self.p_list();
        if p.is_empty() || p.windows(2).any(|w| w[1] <= w[0]) || p[0] == 0 {
            return Err(ctx("p_list must be non-empty, positive and strictly ascending".into()));
        }
        Ok(())
    }
}

/// Reference potential of the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    FubiniStudy,
    Expr(WeightExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub d: u32,
    pub reference: Reference,
    pub reference_text: String,
}

impl ModelSpec {
    /// The model on `grid`; an expression reference is sampled exactly and
    /// carries its exact curvature.
    pub fn build(&self, grid: Grid) -> LabResult<PolarizedModel> {
        match &self.reference {
            Reference::FubiniStudy => Ok(PolarizedModel::fubini_study(grid, self.d)?),
            Reference::Expr(e) => {
                let d = self.d as f64;
                let phi0 = GridFunction::from_fn(grid, |s| e.eval(s), 0.0, d)?;
                let curvature = grid.nodes().map(|s| e.jet(s).0[2]).collect();
                Ok(PolarizedModel::new(self.d, phi0, self.reference_text.clone())?.with_curvature(curvature)?)
            }
        }
    }
}

/// A named weight: its source text and syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub text: String,
    pub expr: WeightExpr,
    pub slopes: (f64, f64),
}

impl Sampled {
    pub fn sample(&self, grid: Grid) -> LabResult<GridFunction> {
        Ok(GridFunction::from_fn(grid, |s| self.expr.eval(s), self.slopes.0, self.slopes.1)?)
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub seed: u64,
    pub out: Option<String>,
    pub model: ModelSpec,
    pub grid: Grid,
    pub weights: BTreeMap<String, Sampled>,
    pub experiments: Vec<Experiment>,
}

fn parse_named(name: &str, text: &str) -> LabResult<(WeightExpr, (f64, f64))> {
    let expr = parse_weight(text).map_err(|source| LabError::Weight {
        name: name.to_string(),
        source,
    })?;
    let slopes = expr
        .slopes()
        .ok_or_else(|| LabError::Config(format!("weight '{name}': asymptotic slopes cannot be inferred from '{text}'")))?;
    Ok((expr, slopes))
}

impl Config {
    pub fn from_toml(text: &str) -> LabResult<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        // A single [experiment] table is shorthand for a one-element array.
        if let Some(toml::Value::Table(t)) = table.get("experiment") {
            let one = toml::Value::Array(vec![toml::Value::Table(t.clone())]);
            table.insert("experiment".into(), one);
        }
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;

        if raw.model.d == 0 {
            return Err(LabError::Config("model.d must be positive".into()));
        }
        let reference = if raw.model.reference.trim() == "fs" {
            Reference::FubiniStudy
        } else {
            let (e, slopes) = parse_named("model.reference", &raw.model.reference)?;
            if slopes != (0.0, raw.model.d as f64) {
                return Err(LabError::Config(format!(
                    "model.reference has slopes {slopes:?}, expected (0, {})",
                    raw.model.d
                )));
            }
            Reference::Expr(e)
        };
        let model = ModelSpec {
            d: raw.model.d,
            reference,
            reference_text: raw.model.reference.trim().to_string(),
        };
        let grid = Grid::new(raw.grid.s_min, raw.grid.s_max, raw.grid.n_nodes)?;

        let mut weights = BTreeMap::new();
        for (name, text) in &raw.weights {
            let (expr, slopes) = parse_named(name, text)?;
            weights.insert(
                name.clone(),
                Sampled {
                    text: text.clone(),
                    expr,
                    slopes,
                },
            );
        }

        if raw.experiment.is_empty() {
            return Err(LabError::Config("no experiments".into()));
        }
        let mut experiments = raw.experiment;
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in experiments.iter_mut().enumerate() {
            let kind = e
                .kind
                .ok_or_else(|| LabError::Config(format!("experiment {}: missing key 'kind'", i + 1)))?;
            let name = e.name.get_or_insert_with(|| format!("{kind}{}", i + 1)).clone();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(LabError::Config(format!("experiment name '{name}' must be [A-Za-z0-9_-]+")));
            }
            if !seen.insert(name.clone()) {
                return Err(LabError::Config(format!("duplicate experiment name '{name}'")));
            }
            e.validate(&weights)?;
        }
        Ok(Self {
            seed: raw.seed.unwrap_or(0),
            out: raw.out,
            model,
            grid,
            weights,
            experiments,
        })
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn weight(&self, name: &str) -> &Sampled {
        &self.weights[name]
    }
}
