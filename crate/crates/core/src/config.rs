//! Run configuration: one TOML file plus `section.key=value` overrides.
//!
//! File layout (every key optional, defaults shown by `cvwaves show-config`):
//!
//! ```toml
//! policy = "warn"            # warn | halt
//! [physics]                  # g, k, h, upsilon
//! [grid]                     # modes, nodes (omit nodes for the default)
//! [continuation]             # step control, tolerances, sign, fd_jacobian
//! [kernel]                   # max_terms, tail_tol
//! [output]                   # dir, render
//! [kernel_study]             # depths, scan_min, scan_max, scan_count
//! [bifurcate]                # half_width, samples
//! [reconstruct]              # point, heights, height_fraction
//! [sweep]                    # upsilons, workers
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::continuation::{ContinuationConfig, EnforcementPolicy};
use crate::equations::PhysicalParams;
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, DEFAULT_LEMMA_GRID};

/// Code version recorded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Kernel series settings; the strip height follows from the physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSettings {
    pub max_terms: usize,
    pub tail_tol: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            max_terms: KernelConfig::DEFAULT_MAX_TERMS,
            tail_tol: KernelConfig::DEFAULT_TAIL_TOL,
        }
    }
}

impl KernelSettings {
    pub fn for_depth(&self, d: f64) -> KernelConfig {
        KernelConfig {
            d,
            max_terms: self.max_terms,
            tail_tol: self.tail_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Also write PNG images next to the plot data.
    pub render: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            render: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelStudySettings {
    /// Strip heights for the lemma checks.
    pub depths: Vec<f64>,
    /// Logarithmic range of the exploratory scan.
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_count: usize,
}

impl Default for KernelStudySettings {
    fn default() -> Self {
        Self {
            depths: DEFAULT_LEMMA_GRID.to_vec(),
            scan_min: 1e-2,
            scan_max: 1e4,
            scan_count: 49,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcateSettings {
    /// Table covers `m* - half_width ..= m* + half_width`.
    pub half_width: f64,
    pub samples: usize,
}

impl Default for BifurcateSettings {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            samples: 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSettings {
    /// Branch point index; `None` selects the last point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    /// Number of heights in the current profile.
    pub heights: usize,
    /// Highest profile height as a fraction of the trough height.
    pub height_fraction: f64,
}

impl Default for ReconstructSettings {
    fn default() -> Self {
        Self {
            point: None,
            heights: 9,
            height_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub upsilons: Vec<f64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            upsilons: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            workers: 0,
        }
    }
}

/// Complete configuration of one run.
///
/// In memory the grid and policy live inside `continuation`; on disk they are
/// the `[grid]` table and the top-level `policy` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicalParams,
    pub continuation: ContinuationConfig,
    pub kernel: KernelSettings,
    pub output: OutputSettings,
    pub kernel_study: KernelStudySettings,
    pub bifurcate: BifurcateSettings,
    pub reconstruct: ReconstructSettings,
    pub sweep: SweepSettings,
}

const GRID_KEYS: [&str; 2] = ["modes", "nodes"];

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

fn table_mut<'a>(root: &'a mut Table, name: &str) -> Result<&'a mut Table> {
    root.entry(name.to_string())
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .ok_or_else(|| config_err(format!("`{name}` must be a table")))
}

/// Move `[grid]` and `policy` into the continuation table.
fn to_memory_layout(mut root: Table) -> Result<Table> {
    let grid = match root.remove("grid") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(config_err("`grid` must be a table")),
        None => Table::new(),
    };
    let policy = root.remove("policy");
    let cont = table_mut(&mut root, "continuation")?;
    for key in GRID_KEYS.iter().chain(&["policy"]) {
        if cont.contains_key(*key) {
            return Err(config_err(format!(
                "`continuation.{key}` is not a key; use `{}`",
                if *key == "policy" {
                    "policy".to_string()
                } else {
                    format!("grid.{key}")
                }
            )));
        }
    }
    for (k, v) in grid {
        if !GRID_KEYS.contains(&k.as_str()) {
            return Err(config_err(format!("unknown key `grid.{k}`")));
        }
        cont.insert(k, v);
    }
    if let Some(p) = policy {
        cont.insert("policy".into(), p);
    }
    Ok(root)
}

fn to_file_layout(mut root: Table) -> Table {
    let mut grid = Table::new();
    let mut policy = None;
    if let Some(Value::Table(cont)) = root.get_mut("continuation") {
        for key in GRID_KEYS {
            if let Some(v) = cont.remove(key) {
                grid.insert(key.into(), v);
            }
        }
        policy = cont.remove("policy");
    }
    root.insert("grid".into(), Value::Table(grid));
    if let Some(p) = policy {
        root.insert("policy".into(), p);
    }
    root
}

/// Parse the right-hand side of an override as a TOML value, falling back to a string.
fn parse_value(text: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Apply `path = value` where `path` is `key` or `section.key`.
fn apply_override(root: &mut Table, path: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        [key] if !key.is_empty() => {
            root.insert((*key).to_string(), parse_value(value));
        }
        [section, key] if !section.is_empty() && !key.is_empty() => {
            table_mut(root, section)?.insert((*key).to_string(), parse_value(value));
        }
        _ => return Err(config_err(format!("malformed override key `{path}`"))),
    }
    Ok(())
}

impl RunConfig {
    /// Parse file-layout TOML with overrides applied on top; overrides win.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut root: Table =
            toml::from_str(text).map_err(|e| config_err(format!("malformed config: {e}")))?;
        for (k, v) in overrides {
            apply_override(&mut root, k, v)?;
        }
        let root = to_memory_layout(root)?;
        let cfg: RunConfig = Value::Table(root)
            .try_into()
            .map_err(|e| config_err(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Load an optional file; a missing path means all defaults.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    /// Canonical file-layout TOML; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        let table = Table::try_from(self).expect("config serialises");
        toml::to_string(&to_file_layout(table)).expect("config serialises")
    }

    /// Version line followed by the canonical config.
    pub fn provenance(&self) -> String {
        format!("cvwaves {VERSION}\n{}", self.to_toml())
    }

    pub fn kernel_config(&self) -> KernelConfig {
        self.kernel.for_depth(self.physics.depth())
    }

    pub fn policy(&self) -> EnforcementPolicy {
        self.continuation.policy
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.continuation.validate()?;
        self.kernel_config().validate()?;
        let ks = &self.kernel_study;
        if ks.depths.is_empty() {
            return Err(config_err("kernel_study.depths must not be empty"));
        }
        if !(ks.scan_min > 0.0 && ks.scan_max >= ks.scan_min && ks.scan_count > 0) {
            return Err(config_err(
                "kernel_study scan range must satisfy 0 < scan_min <= scan_max",
            ));
        }
        if !(self.bifurcate.half_width > 0.0) || self.bifurcate.samples < 2 {
            return Err(config_err(
                "bifurcate needs half_width > 0 and at least 2 samples",
            ));
        }
        let r = &self.reconstruct;
        if r.heights < 2 || !(r.height_fraction > 0.0 && r.height_fraction <= 1.0) {
            return Err(config_err(
                "reconstruct needs at least 2 heights and height_fraction in (0, 1]",
            ));
        }
        if self.sweep.upsilons.is_empty() {
            return Err(config_err("sweep.upsilons must not be empty"));
        }
        Ok(())
    }
}

/// Split `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{arg}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::BranchSign;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn canonical_echo_is_stable() {
        let c = RunConfig::from_toml_with(
            "policy = \"halt\"\n[physics]\nupsilon = 1.0\n[grid]\nmodes = 64\nnodes = 300\n",
            &[("continuation.sign".into(), "plus".into())],
        )
        .unwrap();
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(c.continuation.modes, 64);
        assert_eq!(c.continuation.nodes, Some(300));
        assert_eq!(c.policy(), EnforcementPolicy::Halt);
        assert_eq!(c.continuation.sign, BranchSign::Plus);
        assert!(c.provenance().starts_with("cvwaves "));
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::from_toml_with(
            "[physics]\nupsilon = 1.0\n",
            &[
                ("physics.upsilon".into(), "2.5".into()),
                ("grid.modes".into(), "32".into()),
                ("output.dir".into(), "results".into()),
                ("policy".into(), "halt".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.physics.upsilon, 2.5);
        assert_eq!(c.continuation.modes, 32);
        assert_eq!(c.output.dir, PathBuf::from("results"));
        assert_eq!(c.policy(), EnforcementPolicy::Halt);
    }

    #[test]
    fn rejects_malformed() {
        assert!(RunConfig::from_toml("[physics\n").is_err());
        assert!(RunConfig::from_toml("[physics]\ngravity = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[continuation]\nmodes = 32\n").is_err());
        assert!(RunConfig::from_toml("[grid]\nmodes = 32\nnodes = 100\n").is_err());
        assert!(RunConfig::from_toml("policy = \"maybe\"\n").is_err());
        assert!(RunConfig::from_toml("[physics]\nk = -1.0\n").is_err());
        assert!(parse_override("novalue").is_err());
    }
}
