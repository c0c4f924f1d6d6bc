use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cqnls_core::io::{DataGenSpec, DataKind};
use cqnls_core::normal_form::NFConfig;
use cqnls_core::propagators::FlowKind;
use cqnls_core::scattering::{Seed, DEFAULT_ETA};
use cqnls_core::{GammaModel, Grid, PhysParams, Variant};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub scattering: ScatteringSection,
    #[serde(default)]
    pub normal_form: NFConfig,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dim: 2,
            n: 64,
            length: 32.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Raw `[alpha1, alpha3, alpha5]`, normalized on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 3]>,
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_gamma: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            gamma: None,
            alpha: None,
            variant: Variant::CubicQuintic,
            delta_gamma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    pub filter_radius_fraction: f64,
    pub monitor_stride: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            dt: 1e-2,
            t_end: 1.0,
            filter_radius_fraction: 1.0 / 3.0,
            monitor_stride: 10,
        }
    }
}

/// Initial data; the seed lives in `[io]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub kind: DataKind,
    pub amplitude: f64,
    pub width: f64,
    pub imag_ratio: f64,
    pub band: [f64; 2],
    pub modes: usize,
    pub cutoff_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DataGenSpec::default();
        DataSection {
            kind: d.kind,
            amplitude: d.amplitude,
            width: d.width,
            imag_ratio: d.imag_ratio,
            band: d.band,
            modes: d.modes,
            cutoff_fraction: d.cutoff_fraction,
            path: d.path,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringSection {
    pub t_start: f64,
    pub eta: f64,
    pub t_max: f64,
    /// Geometric node ratio and step cap of the Duhamel grid.
    pub grid_ratio: f64,
    pub max_step: f64,
    pub anchors: Vec<f64>,
    /// Smallness gate samples; empty means quarter octaves in `[1, t_max]`.
    pub gate_window: Vec<f64>,
    pub tail_tol: f64,
    pub fp_tol: f64,
    pub max_outer_iters: usize,
    pub seed: Seed,
    /// Rerun from the other seed and compare traces.
    pub check_uniqueness: bool,
    pub fit_window: [f64; 2],
    pub t_list: Vec<f64>,
    pub t_eval: f64,
    pub window_radius: f64,
    pub probe_times: Vec<f64>,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        ScatteringSection {
            t_start: 4.0,
            eta: DEFAULT_ETA,
            t_max: 64.0,
            grid_ratio: 1.05,
            max_step: 0.2,
            anchors: vec![8.0, 16.0, 32.0],
            gate_window: Vec::new(),
            tail_tol: 1e-3,
            fp_tol: 1e-12,
            max_outer_iters: 60,
            seed: Seed::Linear,
            check_uniqueness: false,
            fit_window: [4.0, 32.0],
            t_list: vec![4.0, 8.0, 16.0],
            t_eval: 0.0,
            window_radius: 12.0,
            probe_times: vec![2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub flow: FlowKind,
    /// Exponents `r` of the `L^r` decay fits.
    pub r: Vec<f64>,
    pub times: Vec<f64>,
    /// Times for the `e^{-itH}` against `e^{-it(gamma - Delta)}` comparison; empty skips it.
    pub hvs_times: Vec<f64>,
    pub hvs_constant: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            flow: FlowKind::DiagonalH,
            r: vec![2.0, 6.0, f64::INFINITY],
            times: vec![2.0, 3.0, 4.0, 6.0, 8.0],
            hvs_times: Vec::new(),
            hvs_constant: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: PathBuf,
    /// Snapshot every this many diagnostic rows (0: final state only).
    pub snapshot_stride: usize,
    pub seed: u64,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            out_dir: PathBuf::from("out"),
            snapshot_stride: 0,
            seed: 0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            grid: GridSection::default(),
            model: ModelSection::default(),
            integrator: IntegratorSection::default(),
            data: DataSection::default(),
            scattering: ScatteringSection::default(),
            normal_form: NFConfig::default(),
            probe: ProbeSection::default(),
            io: IoSection::default(),
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Ok(Grid::cube(g.dim, g.n, g.length)?)
    }

    pub fn model(&self) -> Result<GammaModel> {
        let s = &self.model;
        let m = match s.variant {
            Variant::GrossPitaevskii => {
                if s.gamma.is_some() || s.alpha.is_some() {
                    bail!("model.gamma and model.alpha do not apply to the gross-pitaevskii variant");
                }
                GammaModel::gross_pitaevskii()
            }
            Variant::CubicQuintic => {
                let m = match (s.gamma, s.alpha) {
                    (Some(g), None) => GammaModel::new(g)?,
                    (None, Some([alpha1, alpha3, alpha5])) => GammaModel::from_params(&PhysParams {
                        alpha1,
                        alpha3,
                        alpha5,
                    })?,
                    (None, None) => GammaModel::new(0.5)?,
                    (Some(_), Some(_)) => bail!("give model.gamma or model.alpha, not both"),
                };
                match s.delta_gamma {
                    Some(d) => m.with_delta(d),
                    None => m,
                }
            }
        };
        m.validate()?;
        Ok(m)
    }

    pub fn data_spec(&self) -> DataGenSpec {
        let d = &self.data;
        DataGenSpec {
            kind: d.kind,
            amplitude: d.amplitude,
            width: d.width,
            imag_ratio: d.imag_ratio,
            band: d.band,
            modes: d.modes,
            seed: self.io.seed,
            cutoff_fraction: d.cutoff_fraction,
            path: d.path.clone(),
        }
    }

    /// Checks everything that does not need a computation.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        self.grid()?;
        self.model()?;
        self.data_spec().validate()?;
        self.normal_form.validate()?;
        let i = &self.integrator;
        if !(i.dt > 0.0 && i.dt.is_finite()) {
            bail!("integrator.dt must be positive");
        }
        if !(i.t_end >= 0.0 && i.t_end.is_finite()) {
            bail!("integrator.t_end must be finite and >= 0");
        }
        if !(i.filter_radius_fraction > 0.0 && i.filter_radius_fraction <= 1.0) {
            bail!("integrator.filter_radius_fraction must lie in (0, 1]");
        }
        if i.monitor_stride == 0 {
            bail!("integrator.monitor_stride must be >= 1");
        }
        let s = &self.scattering;
        if !(s.grid_ratio > 1.0 && s.max_step > 0.0) {
            bail!("scattering.grid_ratio must exceed 1 and scattering.max_step must be positive");
        }
        if !(s.t_max > s.t_start && s.t_start >= 1.0) {
            bail!("scattering needs 1 <= t_start < t_max");
        }
        if !(s.fit_window[1] > s.fit_window[0]) {
            bail!("scattering.fit_window must be increasing");
        }
        if s.t_list.iter().any(|&t| !(t > s.t_eval)) {
            bail!("scattering.t_list entries must exceed t_eval");
        }
        if !(s.window_radius > 0.0) {
            bail!("scattering.window_radius must be positive");
        }
        let p = &self.probe;
        if p.r.iter().any(|&r| !(r >= 1.0)) {
            bail!("probe.r entries must be >= 1");
        }
        if !(p.hvs_constant > 0.0) {
            bail!("probe.hvs_constant must be positive");
        }
        Ok(())
    }
}

/// Parses `key=value`, reading the value as TOML and falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("override {s:?} is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override {s:?} has an empty key");
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

pub fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key {key:?}: {p} is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

pub fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn from_table(table: toml::Table) -> Result<RunConfig> {
    let mut table = table;
    table
        .entry("schema_version")
        .or_insert(toml::Value::Integer(SCHEMA_VERSION as i64));
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .context("invalid configuration")?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t: toml::Table = toml::from_str("schema_version = 1\n[grid]\nnn = 3\n").unwrap();
        assert!(from_table(t).is_err());
        let t: toml::Table = toml::from_str("schema_version = 1\ncolour = 3\n").unwrap();
        assert!(from_table(t).is_err());
    }

    #[test]
    fn overrides_parse_as_toml() {
        let mut t = toml::Table::new();
        for o in ["grid.n=32", "model.gamma = 0.3", "data.kind=random_band_limited", "probe.r=[2, 6]"] {
            let (k, v) = parse_override(o).unwrap();
            set_path(&mut t, &k, v).unwrap();
        }
        let cfg = from_table(t).unwrap();
        assert_eq!(cfg.grid.n, 32);
        assert_eq!(cfg.model.gamma, Some(0.3));
        assert_eq!(cfg.data.kind, DataKind::RandomBandLimited);
        assert_eq!(cfg.probe.r, vec![2.0, 6.0]);
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model.gamma = Some(2.0 / 3.0);
        cfg.integrator.dt = 0.1 + 0.2;
        let text = toml::to_string(&cfg).unwrap();
        let back = from_table(toml::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn model_choices() {
        let mut cfg = RunConfig::default();
        cfg.model.alpha = Some([1.0, 3.0, 1.0]);
        let m = cfg.model().unwrap();
        assert!(m.gamma > 0.0 && m.gamma < 1.0);
        cfg.model.gamma = Some(0.5);
        assert!(cfg.model().is_err());
        cfg.model = ModelSection {
            variant: Variant::GrossPitaevskii,
            ..ModelSection::default()
        };
        assert!(cfg.model().unwrap().is_gp());
    }
}
