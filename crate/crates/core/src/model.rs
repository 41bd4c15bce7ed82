//! Physical constants, unit conventions and shared domain types.
//!
//! Canonical internal units are nm, µs, kHz and Gauss. Every frequency is an
//! ordinary frequency (Hz or kHz), never an angular one; formulas written with
//! ω are converted where they enter the crate.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant in J·s.
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
/// μ₀/4π in T·m/A.
pub const MU0_OVER_4PI: f64 = 1.0e-7;

/// ¹H gyromagnetic ratio, ordinary frequency, kHz/G.
pub const GAMMA_1H_KHZ_PER_GAUSS: f64 = 4.25;
/// ¹³C gyromagnetic ratio, ordinary frequency, kHz/G (standard tables).
pub const GAMMA_13C_KHZ_PER_GAUSS: f64 = 1.0705;

pub const GAUSS_PER_TESLA: f64 = 1.0e4;

pub fn nm_to_m(x: f64) -> f64 {
    x * 1e-9
}

pub fn m_to_nm(x: f64) -> f64 {
    x * 1e9
}

pub fn ms_to_s(x: f64) -> f64 {
    x * 1e-3
}

pub fn s_to_ms(x: f64) -> f64 {
    x * 1e3
}

pub fn us_to_s(x: f64) -> f64 {
    x * 1e-6
}

pub fn s_to_us(x: f64) -> f64 {
    x * 1e6
}

pub fn gauss_to_tesla(b: f64) -> f64 {
    b / GAUSS_PER_TESLA
}

pub fn tesla_to_gauss(b: f64) -> f64 {
    b * GAUSS_PER_TESLA
}

/// One invariant violation, named by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<Issue> for Error {
    fn from(issue: Issue) -> Self {
        Error::Config {
            field: issue.field,
            message: issue.message,
        }
    }
}

/// Types whose fields carry invariants.
pub trait Validate {
    /// Appends every violation found, with field names prefixed by `path`.
    fn check(&self, path: &str, issues: &mut Vec<Issue>);

    /// Fails with the first violation, if any.
    fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        self.check(type_path::<Self>(), &mut issues);
        match issues.into_iter().next() {
            Some(issue) => Err(issue.into()),
            None => Ok(()),
        }
    }
}

fn type_path<T: ?Sized>() -> &'static str {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full)
}

pub(crate) fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

pub(crate) fn require(
    ok: bool,
    path: &str,
    field: &str,
    message: impl FnOnce() -> String,
    issues: &mut Vec<Issue>,
) {
    if !ok {
        issues.push(Issue::new(join(path, field), message()));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NucleusSpec {
    pub name: String,
    /// Gyromagnetic ratio in kHz/G (ordinary frequency).
    pub gamma_khz_per_gauss: f64,
}

impl NucleusSpec {
    pub fn new(name: impl Into<String>, gamma_khz_per_gauss: f64) -> Result<Self> {
        let n = NucleusSpec {
            name: name.into(),
            gamma_khz_per_gauss,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn proton() -> Self {
        NucleusSpec {
            name: "1H".into(),
            gamma_khz_per_gauss: GAMMA_1H_KHZ_PER_GAUSS,
        }
    }

    pub fn carbon13() -> Self {
        NucleusSpec {
            name: "13C".into(),
            gamma_khz_per_gauss: GAMMA_13C_KHZ_PER_GAUSS,
        }
    }

    /// Looks a nucleus up in the built-in table.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "1H" | "H1" | "proton" => Some(Self::proton()),
            "13C" | "C13" | "carbon13" => Some(Self::carbon13()),
            _ => None,
        }
    }

    /// ħ·γ_angular in J/T, which equals h times the ordinary-frequency γ.
    pub fn h_gamma_j_per_t(&self) -> f64 {
        PLANCK_J_S * self.gamma_khz_per_gauss * 1e3 * GAUSS_PER_TESLA
    }
}

impl Validate for NucleusSpec {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.gamma_khz_per_gauss.is_finite() && self.gamma_khz_per_gauss > 0.0,
            path,
            "gamma_khz_per_gauss",
            || format!("must be > 0, got {}", self.gamma_khz_per_gauss),
            issues,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NvSensor {
    pub depth_nm: f64,
    pub t1_ms: f64,
    pub t2_us: f64,
}

impl NvSensor {
    pub fn new(depth_nm: f64, t1_ms: f64, t2_us: f64) -> Result<Self> {
        let s = NvSensor {
            depth_nm,
            t1_ms,
            t2_us,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn t1_us(&self) -> f64 {
        self.t1_ms * 1e3
    }
}

impl Validate for NvSensor {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        require(
            pos(self.depth_nm),
            path,
            "depth_nm",
            || format!("must be > 0, got {}", self.depth_nm),
            issues,
        );
        require(
            pos(self.t1_ms),
            path,
            "t1_ms",
            || format!("must be > 0, got {}", self.t1_ms),
            issues,
        );
        require(
            pos(self.t2_us),
            path,
            "t2_us",
            || format!("must be > 0, got {}", self.t2_us),
            issues,
        );
        require(
            !(pos(self.t1_ms) && pos(self.t2_us)) || self.t2_us <= 1000.0 * self.t1_ms,
            path,
            "t2_us",
            || {
                format!(
                    "T2 ({} us) cannot exceed T1 ({} ms)",
                    self.t2_us, self.t1_ms
                )
            },
            issues,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SampleModel {
    pub nucleus: NucleusSpec,
    pub density_per_nm3: f64,
    pub diffusion_nm2_per_us: f64,
    #[serde(default)]
    pub intrinsic_linewidth_hz: f64,
}

impl SampleModel {
    /// Proton-rich oil: 50 spins/nm³.
    pub fn oil(diffusion_nm2_per_us: f64) -> Self {
        SampleModel {
            nucleus: NucleusSpec::proton(),
            density_per_nm3: 50.0,
            diffusion_nm2_per_us,
            intrinsic_linewidth_hz: 40.0,
        }
    }
}

impl Validate for SampleModel {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.nucleus.check(&join(path, "nucleus"), issues);
        require(
            self.density_per_nm3.is_finite() && self.density_per_nm3 > 0.0,
            path,
            "density_per_nm3",
            || format!("must be > 0, got {}", self.density_per_nm3),
            issues,
        );
        require(
            self.diffusion_nm2_per_us.is_finite() && self.diffusion_nm2_per_us >= 0.0,
            path,
            "diffusion_nm2_per_us",
            || format!("must be >= 0, got {}", self.diffusion_nm2_per_us),
            issues,
        );
        require(
            self.intrinsic_linewidth_hz.is_finite() && self.intrinsic_linewidth_hz >= 0.0,
            path,
            "intrinsic_linewidth_hz",
            || format!("must be >= 0, got {}", self.intrinsic_linewidth_hz),
            issues,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FieldConfig {
    pub b_gauss: f64,
}

impl FieldConfig {
    pub fn gauss(b_gauss: f64) -> Self {
        FieldConfig { b_gauss }
    }

    pub fn tesla(b_tesla: f64) -> Self {
        FieldConfig {
            b_gauss: tesla_to_gauss(b_tesla),
        }
    }
}

impl Validate for FieldConfig {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.b_gauss.is_finite() && self.b_gauss >= 0.0,
            path,
            "b_gauss",
            || format!("must be >= 0, got {}", self.b_gauss),
            issues,
        );
    }
}

/// Larmor precession frequency γ·B in Hz (ordinary frequency).
pub fn larmor_frequency(nucleus: &NucleusSpec, field: FieldConfig) -> f64 {
    nucleus.gamma_khz_per_gauss * field.b_gauss * 1e3
}
