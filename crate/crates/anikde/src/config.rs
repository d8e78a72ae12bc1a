//! Declarative run configuration.
//!
//! A run is described by one TOML document. Every section is optional and
//! every key has a default, so the parsed value is already fully resolved;
//! the manifest stores it as JSON and either form can drive a re-run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anikde_core::densities::{
    build_perturbed, flat_top_density, smooth_product_density, BumpProfile, FTheta, SmoothKind, SmoothParams,
};
use anikde_core::math::TensorGrid;
use anikde_core::regimes::ClassSpec;
use anikde_core::SeparableDensity;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub class: Option<ClassConfig>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub risk: RiskConfig,
    #[serde(default)]
    pub lowerbound: LowerBoundConfig,
    #[serde(default)]
    pub output: OutputConfig,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub ell: usize,
    pub table_size: usize,
    /// Convolution-table cache file; regenerated when missing or corrupt.
    pub cache: Option<PathBuf>,
    /// Largest bandwidth exponent examined by `kernel-check`.
    pub max_exponent: u8,
    /// Dimensions examined by `kernel-check`.
    pub dims: Vec<usize>,
    /// Random `(h, eta, t)` triples for the domination check.
    pub triples: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            ell: 2,
            table_size: 4096,
            cache: None,
            max_exponent: 10,
            dims: vec![1, 2],
            triples: 1000,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_dim() -> usize {
    1
}

/// The true density, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    RaisedCosine {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default = "one")]
        width: f64,
    },
    SmoothedUniform {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default = "default_half_width")]
        half_width: f64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    BumpMixture {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default = "default_centers")]
        centers: Vec<f64>,
        #[serde(default = "default_widths")]
        widths: Vec<f64>,
        #[serde(default = "default_weights")]
        weights: Vec<f64>,
    },
    FlatTop {
        #[serde(default = "one_dim")]
        dim: usize,
        n: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Flat top plus the perturbation switched on where `w` is true
    /// (all boxes when `w` is absent). The dimension is `sigma.len()`.
    Perturbed {
        n: f64,
        #[serde(default = "one")]
        scale: f64,
        sigma: Vec<f64>,
        amplitude: Option<f64>,
        w: Option<Vec<bool>>,
    },
    FTheta {
        #[serde(default = "one_dim")]
        dim: usize,
        n: f64,
        theta: f64,
    },
}

fn default_half_width() -> f64 {
    SmoothParams::default().half_width
}

fn default_smoothing() -> f64 {
    SmoothParams::default().smoothing
}

fn default_centers() -> Vec<f64> {
    SmoothParams::default().centers
}

fn default_widths() -> Vec<f64> {
    SmoothParams::default().widths
}

fn default_weights() -> Vec<f64> {
    SmoothParams::default().weights
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::RaisedCosine { dim: 1, width: 1.0 }
    }
}

impl DensityConfig {
    pub fn dim(&self) -> usize {
        match self {
            DensityConfig::RaisedCosine { dim, .. }
            | DensityConfig::SmoothedUniform { dim, .. }
            | DensityConfig::BumpMixture { dim, .. }
            | DensityConfig::FlatTop { dim, .. }
            | DensityConfig::FTheta { dim, .. } => *dim,
            DensityConfig::Perturbed { sigma, .. } => sigma.len(),
        }
    }

    pub fn build(&self, bump: Arc<BumpProfile>) -> CliResult<SeparableDensity> {
        let smooth = |kind, dim, params: SmoothParams| -> CliResult<SeparableDensity> {
            Ok(smooth_product_density(kind, dim, &params, bump.clone())?)
        };
        match self {
            DensityConfig::RaisedCosine { dim, width } => smooth(
                SmoothKind::RaisedCosine,
                *dim,
                SmoothParams {
                    width: *width,
                    ..SmoothParams::default()
                },
            ),
            DensityConfig::SmoothedUniform {
                dim,
                half_width,
                smoothing,
            } => smooth(
                SmoothKind::SmoothedUniform,
                *dim,
                SmoothParams {
                    half_width: *half_width,
                    smoothing: *smoothing,
                    ..SmoothParams::default()
                },
            ),
            DensityConfig::BumpMixture {
                dim,
                centers,
                widths,
                weights,
            } => smooth(
                SmoothKind::BumpMixture,
                *dim,
                SmoothParams {
                    centers: centers.clone(),
                    widths: widths.clone(),
                    weights: weights.clone(),
                    ..SmoothParams::default()
                },
            ),
            DensityConfig::FlatTop { dim, n, scale } => Ok(flat_top_density(*n, *dim, *scale, bump)?),
            DensityConfig::Perturbed {
                n,
                scale,
                sigma,
                amplitude,
                w,
            } => {
                let plateau = (scale / n).powi(sigma.len() as i32);
                let counts = anikde_core::densities::perturbation_counts(*n, *scale, sigma);
                let total: usize = counts.iter().product();
                let w = w.clone().unwrap_or_else(|| vec![true; total]);
                let p = build_perturbed(*n, *scale, sigma, amplitude.unwrap_or(plateau), &w, bump)?;
                Ok(p.into_density())
            }
            DensityConfig::FTheta { dim, n, theta } => Ok(FTheta::new(*n, *theta).build(*dim, bump)?),
        }
    }
}

/// Smoothness class; `r` entries may be `inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub beta: Vec<f64>,
    #[serde(with = "extended_reals")]
    pub r: Vec<f64>,
    pub l: Vec<f64>,
    pub m: f64,
    pub theta: Option<f64>,
    pub radius: Option<f64>,
}

impl ClassConfig {
    pub fn spec(&self) -> CliResult<ClassSpec> {
        Ok(ClassSpec::new(self.beta.clone(), self.r.clone(), self.l.clone(), self.m)?)
    }
}

/// Reals that may be infinite, written as the string `"inf"` so that JSON
/// can carry them.
mod extended_reals {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Value {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Value> = values
            .iter()
            .map(|&v| {
                if v == f64::INFINITY {
                    Value::Text("inf".into())
                } else {
                    Value::Number(v)
                }
            })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Value>::deserialize(d)?;
        raw.into_iter()
            .map(|v| match v {
                Value::Number(x) => Ok(x),
                Value::Text(t) if t == "inf" || t == "infinity" => Ok(f64::INFINITY),
                Value::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub p: f64,
    /// Overrides the default threshold constant.
    pub kappa: Option<f64>,
    /// Clamp written estimates at zero; the raw estimator is never clamped.
    pub clamp: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            p: 2.0,
            kappa: None,
            clamp: false,
        }
    }
}

/// A box with a node count per coordinate. A zero count gives an empty
/// grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl GridConfig {
    pub fn is_empty(&self) -> bool {
        self.nodes.contains(&0)
    }

    pub fn tensor(&self) -> CliResult<TensorGrid> {
        Ok(TensorGrid::new(self.lo.clone(), self.hi.clone(), self.nodes.clone())?)
    }

    /// Flattened nodes, last coordinate fastest; empty for an empty grid.
    pub fn points(&self) -> CliResult<Vec<f64>> {
        if self.is_empty() {
            if self.lo.len() != self.hi.len() || self.lo.len() != self.nodes.len() {
                return Err(CliError::Config("grid: lo, hi and nodes must have equal lengths".into()));
            }
            return Ok(Vec::new());
        }
        Ok(self.tensor()?.points())
    }

    /// `bbox` inflated by `margin` with `nodes` per coordinate.
    pub fn around(lo: &[f64], hi: &[f64], margin: f64, nodes: usize) -> Self {
        GridConfig {
            lo: lo.iter().map(|v| v - margin).collect(),
            hi: hi.iter().map(|v| v + margin).collect(),
            nodes: vec![nodes; lo.len()],
        }
    }
}

/// Nodes per coordinate of default evaluation grids.
pub fn default_nodes(dim: usize) -> usize {
    match dim {
        1 => 241,
        2 => 61,
        3 => 21,
        _ => 11,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Sample file: one point per line, comma separated.
    pub data: Option<PathBuf>,
    /// The sample file starts with a header line.
    pub header: bool,
    /// Evaluation grid; defaults to the sample's range inflated by one.
    pub grid: Option<GridConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n: usize,
    pub instances: usize,
    /// Gauss nodes per kernel-table cell in the exact expectations.
    pub cell_nodes: usize,
    /// Sample sizes for the residual decay series; empty skips it.
    pub residual_schedule: Vec<usize>,
    pub residual_replicates: usize,
    /// Evaluation nodes per coordinate over the density's box.
    pub residual_nodes: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n: 256,
            instances: 200,
            cell_nodes: anikde_core::oracle::DEFAULT_CELL_NODES,
            residual_schedule: Vec::new(),
            residual_replicates: 20,
            residual_nodes: 31,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub n_schedule: Vec<usize>,
    pub replicates: usize,
    /// Quadrature grid; defaults to the density's box inflated by one.
    pub grid: Option<GridConfig>,
    /// Caps the bandwidth grid at `2^-max_exponent`.
    pub max_exponent: Option<u8>,
    /// Sample size for the oracle gap; absent skips it.
    pub gap_n: Option<usize>,
    pub gap_replicates: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            n_schedule: vec![256, 512, 1024],
            replicates: 10,
            grid: None,
            max_exponent: None,
            gap_n: None,
            gap_replicates: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub n: f64,
    pub scale: f64,
    /// Perturbation widths, one per coordinate.
    pub sigma: Vec<f64>,
    /// Defaults to the largest admissible value `(scale/n)^d`.
    pub amplitude: Option<f64>,
    /// Random member pairs checked against the separation identity.
    pub pairs: usize,
    /// Members whose values are written to disk.
    pub write_members: usize,
    /// Total node budget of the non-negativity grid.
    pub check_nodes: usize,
    /// Also build the heavy-tailed mixture with this `theta`.
    pub theta: Option<f64>,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        LowerBoundConfig {
            n: 40.0,
            scale: 1.0,
            sigma: vec![0.04],
            amplitude: None,
            pairs: 10,
            write_members: 2,
            check_nodes: 100_000,
            theta: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Dat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("runs/default"),
            formats: vec![Format::Csv, Format::Json, Format::Dat],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Where a configuration came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Default,
    Toml(PathBuf),
    /// A previous run's manifest, with the subcommand it recorded.
    Manifest { path: PathBuf, command: String },
}

#[derive(Deserialize)]
struct ManifestView {
    command: String,
    config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string() + &span_hint(text, e.span())))
    }

    /// Reads a TOML config, or a JSON manifest of an earlier run.
    pub fn load(path: &Path) -> CliResult<(Self, Source)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let view: ManifestView = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok((
                view.config,
                Source::Manifest {
                    path: path.to_path_buf(),
                    command: view.command,
                },
            ));
        }
        let cfg = Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, Source::Toml(path.to_path_buf())))
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    /// Checks cross-section constraints that the per-type parsers cannot.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("`{key}`: {why}")));
        if self.kernel.ell == 0 {
            return bad("kernel.ell", "must be at least 1");
        }
        if !(self.estimator.p >= 1.0 && self.estimator.p.is_finite()) {
            return bad("estimator.p", "must be a finite number >= 1");
        }
        if let Some(k) = self.estimator.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return bad("estimator.kappa", "must be positive");
            }
        }
        if self.output.formats.is_empty() {
            return bad("output.formats", "needs at least one format");
        }
        let d = self.dim();
        if d == 0 || d > anikde_core::MAX_DIM {
            return bad("density.dim", "must be in 1..=4");
        }
        for (key, g) in [("risk.grid", &self.risk.grid), ("estimate.grid", &self.estimate.grid)] {
            if let Some(g) = g {
                if g.lo.len() != d || g.hi.len() != d || g.nodes.len() != d {
                    return bad(key, "lo, hi and nodes need one entry per coordinate");
                }
            }
        }
        Ok(())
    }

    pub fn bump() -> Arc<BumpProfile> {
        Arc::new(BumpProfile::new())
    }
}

/// ` (line L, column C)` for a byte span of `text`.
fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let before = &text[..r.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.rsplit('\n').next().map_or(0, str::len) + 1;
            format!(" (line {line}, column {col})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_named() {
        for (doc, key) in [
            ("sede = 1", "sede"),
            ("[kernel]\nel = 2", "el"),
            ("[density]\nkind = \"raised_cosine\"\nwidht = 2.0", "widht"),
            ("[risk]\nreplicate = 3", "replicate"),
        ] {
            let e = ExperimentConfig::from_toml_str(doc).unwrap_err();
            assert_eq!(e.exit_code(), 1);
            assert!(e.to_string().contains(key), "{e}");
        }
        let e = ExperimentConfig::from_toml_str("[density]\nkind = \"gaussian\"").unwrap_err();
        assert!(e.to_string().contains("gaussian"), "{e}");
    }

    #[test]
    fn json_round_trip_is_identity() {
        let doc = r#"
            seed = 9
            [density]
            kind = "perturbed"
            n = 12.0
            sigma = [0.04, 0.045]
            [class]
            beta = [1.0, 2.0]
            r = [2.0, inf]
            l = [1.0, 1.0]
            m = 2.0
            [risk]
            n_schedule = [64, 128, 256]
            grid = { lo = [-7.0, -7.0], hi = [7.0, 7.0], nodes = [5, 5] }
        "#;
        let c = ExperimentConfig::from_toml_str(doc).unwrap();
        assert_eq!(c.class.as_ref().unwrap().r[1], f64::INFINITY);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"inf\""));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn densities_build() {
        let b = ExperimentConfig::bump();
        for doc in [
            "kind = \"raised_cosine\"\ndim = 2",
            "kind = \"smoothed_uniform\"",
            "kind = \"bump_mixture\"",
            "kind = \"flat_top\"\nn = 20.0",
            "kind = \"perturbed\"\nn = 12.0\nsigma = [0.04]",
            "kind = \"f_theta\"\nn = 16.0\ntheta = 0.5",
        ] {
            let d: DensityConfig = toml::from_str(doc).unwrap();
            let f = d.build(b.clone()).unwrap();
            assert_eq!(f.dim(), d.dim());
            assert!((f.total_mass() - 1.0).abs() < 1e-9, "{doc}");
        }
        let bad: DensityConfig = toml::from_str("kind = \"flat_top\"\nn = 4.0").unwrap();
        assert_eq!(bad.build(b).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn validation_names_keys() {
        let mut c = ExperimentConfig::default();
        c.estimator.p = 0.5;
        assert!(c.validate().unwrap_err().to_string().contains("estimator.p"));
        let mut c = ExperimentConfig::default();
        c.risk.grid = Some(GridConfig::around(&[0.0, 0.0], &[1.0, 1.0], 0.0, 3));
        assert!(c.validate().unwrap_err().to_string().contains("risk.grid"));
    }

    #[test]
    fn empty_grid_has_no_points() {
        let g = GridConfig {
            lo: vec![0.0],
            hi: vec![1.0],
            nodes: vec![0],
        };
        assert!(g.points().unwrap().is_empty());
    }
}
