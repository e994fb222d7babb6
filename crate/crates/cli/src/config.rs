//! `RunConfig`: the TOML run description, resolved against CLI flags.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use stellar_match::eos::{EosSpec, LightSpeed, PolytropeIndex};
use stellar_match::matching::{PressureGrid, Sampler, ScanSettings, SweepRegion, SweepSettings};
use stellar_match::tov::TovSettings;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub eos: EosSection,
    pub tov: TovSettings,
    pub shoot: ShootSection,
    pub sweep: SweepSection,
    pub distortion: DistortionSection,
    pub output: OutputSection,
}

/// `𝖼` as written in the config: a positive number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LightValue {
    Finite(f64),
    Symbolic(Symbolic),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symbolic {
    Inf,
    Nonrelativistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EosSection {
    pub gamma: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c: LightValue,
    pub lambda: Vec<f64>,
    /// Upper end of the density range `eos-check` must certify.
    pub check_rho: Option<f64>,
}

impl Default for EosSection {
    fn default() -> Self {
        Self { gamma: 5.0 / 3.0, a: 1.0, c: LightValue::Finite(1.0), lambda: Vec::new(), check_rho: None }
    }
}

impl EosSection {
    pub fn build(&self) -> Result<EosSpec, CliError> {
        let light = match self.c {
            LightValue::Finite(c) => LightSpeed::Finite(c),
            LightValue::Symbolic(_) => LightSpeed::Nonrelativistic,
        };
        EosSpec::new(self.gamma, self.a, light, self.lambda.clone()).map_err(|e| CliError::Schema(format!("[eos] {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootSection {
    pub p_center: Option<f64>,
    pub radius: Option<f64>,
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Random,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub p_min: f64,
    pub p_max: f64,
    pub per_decade: usize,
    pub scan: ScanSettings,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub count: usize,
    pub grid_nr: usize,
    pub grid_nq: usize,
    pub on_curve: usize,
    pub delta: f64,
    pub exclude_within: f64,
    /// Widening of the box around the curves when `region` is absent.
    pub region_factor: f64,
    pub region: Option<SweepRegion>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            p_min: 1e-6,
            p_max: 1e-1,
            per_decade: 4,
            scan: ScanSettings::default(),
            sampler: SamplerKind::Random,
            seed: 0,
            count: 200,
            grid_nr: 10,
            grid_nq: 10,
            on_curve: 20,
            delta: 1e-4,
            exclude_within: 0.0,
            region_factor: 1.5,
            region: None,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> Result<PressureGrid, CliError> {
        PressureGrid::new(self.p_min, self.p_max, self.per_decade).map_err(|e| CliError::Schema(format!("[sweep] {e}")))
    }

    pub fn sampler(&self) -> Sampler {
        match self.sampler {
            SamplerKind::Random => Sampler::Random { seed: self.seed, count: self.count },
            SamplerKind::Grid => Sampler::Grid { nr: self.grid_nr, nq: self.grid_nq },
        }
    }

    pub fn settings(&self) -> SweepSettings {
        SweepSettings { delta: self.delta, exclude_within: self.exclude_within, on_curve: self.on_curve }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionSection {
    pub n: Option<f64>,
    /// Take `n = 1/(γ−1)` from `[eos]`. Defaults to true when `n` is absent.
    pub from_gamma: Option<bool>,
    pub b: Vec<f64>,
    pub zeta_points: usize,
    pub levels: Vec<f64>,
    /// Rotation strength used for the level-surface report.
    pub level_b: f64,
    pub tol: f64,
}

impl Default for DistortionSection {
    fn default() -> Self {
        Self {
            n: None,
            from_gamma: None,
            b: vec![1e-4, 10f64.powf(-3.5), 1e-3, 10f64.powf(-2.5), 1e-2],
            zeta_points: 201,
            levels: vec![0.2, 0.5, 0.8],
            level_b: 1e-2,
            tol: 1e-12,
        }
    }
}

impl DistortionSection {
    pub fn index(&self, eos: &EosSection) -> Result<f64, CliError> {
        let from_gamma = self.from_gamma.unwrap_or(self.n.is_none());
        match (self.n, from_gamma) {
            (Some(n), true) => {
                let idx = PolytropeIndex::new(n).map_err(|e| CliError::Schema(format!("[distortion] {e}")))?;
                if !idx.consistent_with_gamma(eos.gamma) {
                    return Err(CliError::Schema(format!(
                        "[distortion] n = {n} contradicts gamma = {} (n(γ−1) must be 1)",
                        eos.gamma
                    )));
                }
                Ok(n)
            }
            (Some(n), false) => Ok(n),
            (None, true) => Ok(1.0 / (eos.gamma - 1.0)),
            (None, false) => Err(CliError::Schema("[distortion] from_gamma = false requires n".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub p_center: Option<f64>,
    pub radius: Option<f64>,
    pub mass: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.sweep.seed = s;
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if o.p_center.is_some() {
            self.shoot.p_center = o.p_center;
        }
        if o.radius.is_some() {
            self.shoot.radius = o.radius;
        }
        if o.mass.is_some() {
            self.shoot.mass = o.mass;
        }
    }

    /// Cross-field checks that the TOML schema alone cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if let LightValue::Finite(c) = self.eos.c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CliError::Schema(format!("[eos] c must be positive or \"inf\", got {c}")));
            }
        }
        self.eos.build()?;
        self.distortion.index(&self.eos)?;
        if self.distortion.zeta_points < 3 {
            return Err(CliError::Schema("[distortion] zeta_points must be at least 3".into()));
        }
        if self.distortion.b.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(CliError::Schema("[distortion] b values must be finite and non-negative".into()));
        }
        let t = &self.tov;
        let positive = [t.rtol, t.atol, t.center_offset, t.surface_offset, t.r_max_factor, t.r_floor_factor];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Schema("[tov] tolerances, offsets and factors must be positive".into()));
        }
        Ok(())
    }
}
