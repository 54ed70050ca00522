//! Run configuration: one TOML file (key = value / nested tables) drives
//! every stage. Unknown keys are hard errors, so typos never pass silently.
//! Numeric fields that feed the exact derivation accept rational strings
//! such as `"28/45"` alongside plain numbers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{GeneralKernel, JumpKernel, MomentSpec};
use crate::micro::{Boundary, InitialCondition, MicroGrid, MicroRunConfig};
use crate::poly::YPolynomial;
use crate::profile::{CrossSection, VelocityProfile};
use crate::rational::{parse_rational, rat_from_f64, rat_int, Rat};

/// A number that may be written exactly: integer, float, or `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatSpec {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RatSpec {
    pub fn to_rat(&self) -> Result<Rat> {
        match self {
            RatSpec::Int(i) => Ok(rat_int(*i)),
            RatSpec::Float(f) => rat_from_f64(*f),
            RatSpec::Text(s) => parse_rational(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MomentValueSpec {
    /// Polynomial in y, ascending coefficients.
    Coeffs(Vec<RatSpec>),
    /// Values at the quadrature nodes.
    Nodes { nodes: Vec<f64> },
    /// The literal string "divergent".
    Marker(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_n_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_boundary")]
    pub boundary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcConfig {
    #[serde(default = "default_ic_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_output_times")]
    pub output_times: Vec<f64>,
    #[serde(default = "default_ic")]
    pub ic: IcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub t: f64,
    pub x_bins: usize,
    pub y_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_n_particles")]
    pub n_particles: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_t_outputs")]
    pub t_outputs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    #[serde(default = "default_macro_method")]
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_derive_method")]
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<RatSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<RatSpec>>,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Vec<(usize, MomentValueSpec)>>,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    #[serde(default = "default_micro")]
    pub micro: MicroConfig,
    #[serde(default = "default_mc")]
    pub mc: McSection,
    #[serde(rename = "macro", default = "default_macro")]
    pub macroscale: MacroConfig,
    #[serde(default = "default_derive")]
    pub derive: DeriveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_profile() -> String {
    "parabolic".into()
}
fn default_kernel() -> String {
    "exponential".into()
}
fn default_length() -> f64 {
    400.0
}
fn default_nx() -> usize {
    1024
}
fn default_n_nodes() -> usize {
    16
}
fn default_boundary() -> String {
    "periodic".into()
}
fn default_grid() -> GridConfig {
    GridConfig {
        length: default_length(),
        nx: default_nx(),
        n_nodes: default_n_nodes(),
        boundary: default_boundary(),
    }
}
fn default_dt() -> f64 {
    0.05
}
fn default_t_end() -> f64 {
    50.0
}
fn default_output_times() -> Vec<f64> {
    vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]
}
fn default_ic_kind() -> String {
    "gaussian".into()
}
fn default_ic() -> IcConfig {
    IcConfig {
        kind: default_ic_kind(),
        center: Some(200.0),
        sigma: Some(20.0),
        x_values: None,
        y_coeffs: None,
    }
}
fn default_micro() -> MicroConfig {
    MicroConfig {
        dt: default_dt(),
        t_end: default_t_end(),
        output_times: default_output_times(),
        ic: default_ic(),
    }
}
fn default_n_particles() -> usize {
    100_000
}
fn default_seed() -> u64 {
    20260811
}
fn default_t_outputs() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * 25.0).collect()
}
fn default_mc() -> McSection {
    McSection {
        n_particles: default_n_particles(),
        seed: default_seed(),
        t_outputs: default_t_outputs(),
        initial_y: None,
        histogram: None,
    }
}
fn default_macro_method() -> String {
    "spectral".into()
}
fn default_macro() -> MacroConfig {
    MacroConfig {
        method: default_macro_method(),
        dt: None,
    }
}
fn default_order() -> usize {
    2
}
fn default_derive_method() -> String {
    "hierarchy".into()
}
fn default_derive() -> DeriveConfig {
    DeriveConfig {
        order: default_order(),
        method: default_derive_method(),
    }
}

impl Default for RunConfig {
    /// The reference setup: parabolic shear, exponential jumps, periodic
    /// L = 400 with 1024 cells and 16 cross-channel nodes.
    fn default() -> Self {
        Self {
            profile: default_profile(),
            c: None,
            coeffs: None,
            kernel: default_kernel(),
            moments: None,
            grid: default_grid(),
            micro: default_micro(),
            mc: default_mc(),
            macroscale: default_macro(),
            derive: default_derive(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Layered parse: built-in defaults, then the file content key-by-key,
    /// then dotted-path overrides (`grid.nx=2048`). Unknown keys from any
    /// layer are rejected at the final deserialization.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let defaults = toml::to_string(&RunConfig::default())
            .map_err(|e| Error::Config(format!("internal default serialization: {e}")))?;
        let mut doc: toml::Table =
            toml::from_str(&defaults).map_err(|e| Error::Config(e.message().to_string()))?;
        let file_doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        merge_tables(&mut doc, file_doc);
        for entry in overrides {
            let (path, raw) = entry.split_once('=').ok_or_else(|| {
                Error::Config(format!("override {entry:?} is not of the form key=value"))
            })?;
            let value = parse_toml_value(raw.trim())?;
            let segments: Vec<&str> = path.trim().split('.').collect();
            if segments.iter().any(|s| s.is_empty()) {
                return Err(Error::Config(format!("bad override path {path:?}")));
            }
            let mut node = &mut doc;
            for seg in &segments[..segments.len() - 1] {
                node = node
                    .entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| {
                        Error::Config(format!("override path {path:?} crosses a non-table"))
                    })?;
            }
            node.insert(segments[segments.len() - 1].to_string(), value);
        }
        let cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks beyond what the schema can express.
    pub fn validate(&self) -> Result<()> {
        match self.profile.as_str() {
            "parabolic" => {
                if self.c.is_some() || self.coeffs.is_some() {
                    return Err(Error::Config(
                        "profile \"parabolic\" takes neither c nor coeffs".into(),
                    ));
                }
            }
            "constant" => {
                if self.c.is_none() {
                    return Err(Error::Config("profile \"constant\" needs c".into()));
                }
                if self.coeffs.is_some() {
                    return Err(Error::Config("profile \"constant\" takes no coeffs".into()));
                }
            }
            "poly" => {
                if self.coeffs.as_ref().is_none_or(|c| c.is_empty()) {
                    return Err(Error::Config(
                        "profile \"poly\" needs a non-empty coeffs list".into(),
                    ));
                }
                if self.c.is_some() {
                    return Err(Error::Config("profile \"poly\" takes no c".into()));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown profile {other:?}; use parabolic, constant, or poly"
                )))
            }
        }
        match self.kernel.as_str() {
            "exponential" => {
                if self.moments.is_some() {
                    return Err(Error::Config(
                        "kernel \"exponential\" takes no moment table".into(),
                    ));
                }
            }
            "general" => {
                if self.moments.as_ref().is_none_or(|m| m.is_empty()) {
                    return Err(Error::Config(
                        "kernel \"general\" needs a moment table".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel {other:?}; use exponential or general"
                )))
            }
        }
        if !(self.grid.length > 0.0) {
            return Err(Error::Config("grid.length must be positive".into()));
        }
        if self.grid.nx < 8 || self.grid.nx > (1 << 22) {
            return Err(Error::Config("grid.nx must be in 8..=4194304".into()));
        }
        if self.grid.n_nodes < 2 || self.grid.n_nodes > 1024 {
            return Err(Error::Config("grid.n_nodes must be in 2..=1024".into()));
        }
        if !matches!(self.grid.boundary.as_str(), "periodic" | "inflow-zero") {
            return Err(Error::Config(format!(
                "unknown boundary {:?}; use periodic or inflow-zero",
                self.grid.boundary
            )));
        }
        if !(self.micro.dt > 0.0) || self.micro.dt > 0.1 {
            return Err(Error::Config("micro.dt must lie in (0, 0.1]".into()));
        }
        if self.micro.t_end < 0.0 {
            return Err(Error::Config("micro.t_end must be non-negative".into()));
        }
        if self.micro.output_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "micro.output_times must be strictly ascending".into(),
            ));
        }
        if let (Some(first), Some(last)) = (
            self.micro.output_times.first(),
            self.micro.output_times.last(),
        ) {
            if *first < 0.0 || *last > self.micro.t_end {
                return Err(Error::Config(
                    "micro.output_times must lie within [0, t_end]".into(),
                ));
            }
        }
        match self.micro.ic.kind.as_str() {
            "gaussian" => {
                if self.micro.ic.center.is_none() || self.micro.ic.sigma.is_none() {
                    return Err(Error::Config("gaussian ic needs center and sigma".into()));
                }
            }
            "step" | "point" => {
                if self.micro.ic.center.is_none() {
                    return Err(Error::Config(format!(
                        "{} ic needs center",
                        self.micro.ic.kind
                    )));
                }
            }
            "table" => {
                if self.micro.ic.x_values.is_none() && self.micro.ic.y_coeffs.is_none() {
                    return Err(Error::Config(
                        "table ic needs x_values and/or y_coeffs".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown ic kind {other:?}; use gaussian, step, point, or table"
                )))
            }
        }
        if self.mc.n_particles == 0 || self.mc.n_particles > 1_000_000_000 {
            return Err(Error::Config("mc.n_particles must be in 1..=1e9".into()));
        }
        if self.mc.t_outputs.is_empty()
            || self.mc.t_outputs[0] < 0.0
            || self.mc.t_outputs.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "mc.t_outputs must be non-empty, non-negative, strictly ascending".into(),
            ));
        }
        if let Some(h) = &self.mc.histogram {
            if h.x_bins == 0 || h.y_bins == 0 {
                return Err(Error::Config("mc.histogram bins must be positive".into()));
            }
            if !self
                .mc
                .t_outputs
                .iter()
                .any(|&t| (t - h.t).abs() <= 1e-12 * t.abs().max(1.0))
            {
                return Err(Error::Config(
                    "mc.histogram.t must be one of mc.t_outputs".into(),
                ));
            }
        }
        match self.macroscale.method.as_str() {
            "spectral" => {}
            "fd" => {
                if !self.macroscale.dt.is_some_and(|dt| dt > 0.0) {
                    return Err(Error::Config(
                        "macro.method=\"fd\" needs a positive macro.dt".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown macro method {other:?}; use spectral or fd"
                )))
            }
        }
        if self.derive.order == 0 || self.derive.order > 32 {
            return Err(Error::Config("derive.order must be in 1..=32".into()));
        }
        if !matches!(
            self.derive.method.as_str(),
            "hierarchy" | "eigenspace" | "closed-form"
        ) {
            return Err(Error::Config(format!(
                "unknown derive method {:?}; use hierarchy, eigenspace, or closed-form",
                self.derive.method
            )));
        }
        if self.derive.method == "closed-form" && self.derive.order != 2 {
            return Err(Error::Config(
                "closed-form derivation is fixed at order 2".into(),
            ));
        }
        Ok(())
    }

    pub fn build_profile(&self) -> Result<VelocityProfile> {
        match self.profile.as_str() {
            "parabolic" => Ok(VelocityProfile::parabolic()),
            "constant" => {
                let c = self.c.as_ref().expect("validated").to_rat()?;
                Ok(VelocityProfile::constant(c))
            }
            "poly" => {
                let coeffs = self
                    .coeffs
                    .as_ref()
                    .expect("validated")
                    .iter()
                    .map(|r| r.to_rat())
                    .collect::<Result<Vec<_>>>()?;
                Ok(VelocityProfile::Polynomial(YPolynomial::new(coeffs)))
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn build_kernel(&self) -> Result<JumpKernel> {
        match self.kernel.as_str() {
            "exponential" => Ok(JumpKernel::Exponential),
            "general" => {
                let table = self.moments.as_ref().expect("validated");
                let max_order = table.iter().map(|(n, _)| *n).max().unwrap_or(0);
                let mut moments = vec![MomentSpec::Divergent; max_order + 1];
                let mut seen = vec![false; max_order + 1];
                for (n, value) in table {
                    if seen[*n] {
                        return Err(Error::Config(format!("moment order {n} given twice")));
                    }
                    seen[*n] = true;
                    moments[*n] = match value {
                        MomentValueSpec::Coeffs(coeffs) => {
                            let coeffs = coeffs
                                .iter()
                                .map(|r| r.to_rat())
                                .collect::<Result<Vec<_>>>()?;
                            MomentSpec::Poly(YPolynomial::new(coeffs))
                        }
                        MomentValueSpec::Nodes { nodes } => MomentSpec::Nodes(nodes.clone()),
                        MomentValueSpec::Marker(m) if m == "divergent" => MomentSpec::Divergent,
                        MomentValueSpec::Marker(m) => {
                            return Err(Error::Config(format!(
                                "unknown moment marker {m:?}; only \"divergent\" is recognized"
                            )))
                        }
                    };
                }
                Ok(JumpKernel::GeneralOneSided(GeneralKernel::new(
                    moments, None,
                )?))
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn build_cross_section(&self) -> Result<CrossSection> {
        CrossSection::gauss_legendre(self.grid.n_nodes)
    }

    pub fn build_grid(&self) -> Result<MicroGrid> {
        let boundary = match self.grid.boundary.as_str() {
            "periodic" => Boundary::Periodic,
            _ => Boundary::InflowZero,
        };
        MicroGrid::new(
            self.grid.length,
            self.grid.nx,
            boundary,
            self.build_cross_section()?,
        )
    }

    pub fn build_ic(&self) -> Result<InitialCondition> {
        Ok(match self.micro.ic.kind.as_str() {
            "gaussian" => InitialCondition::Gaussian {
                center: self.micro.ic.center.expect("validated"),
                sigma: self.micro.ic.sigma.expect("validated"),
            },
            "step" => InitialCondition::Step {
                center: self.micro.ic.center.expect("validated"),
            },
            "point" => InitialCondition::Point {
                center: self.micro.ic.center.expect("validated"),
            },
            _ => InitialCondition::Table {
                x_values: self.micro.ic.x_values.clone(),
                y_coeffs: self.micro.ic.y_coeffs.clone(),
            },
        })
    }

    pub fn micro_run_config(&self) -> MicroRunConfig {
        MicroRunConfig {
            dt: self.micro.dt,
            t_end: self.micro.t_end,
            output_times: self.micro.output_times.clone(),
        }
    }

    pub fn mc_config(&self) -> crate::mc::McConfig {
        crate::mc::McConfig {
            n_particles: self.mc.n_particles,
            seed: self.mc.seed,
            t_outputs: self.mc.t_outputs.clone(),
            initial_y: self.mc.initial_y,
            keep_ensemble: self.mc.histogram.is_some(),
        }
    }

    /// SHA-256 of the canonical JSON form; recorded in every output file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Key-wise recursive overlay: tables merge, everything else replaces.
fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(bt)), toml::Value::Table(ot)) => merge_tables(bt, ot),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn parse_toml_value(raw: &str) -> Result<toml::Value> {
    let wrapped = format!("v = {raw}");
    if let Ok(table) = toml::from_str::<toml::Table>(&wrapped) {
        if let Some(v) = table.get("v") {
            return Ok(v.clone());
        }
    }
    // Bare words become strings: --set profile=constant.
    Ok(toml::Value::String(raw.to_string()))
}
