//! Scenario configuration, validation and the figure presets.
//!
//! A scenario is a set of optional stage blocks. The presets fill in the
//! blocks for one figure each; any block present in the user config replaces
//! the preset's. Everything is computed in memory first so a failing stage
//! leaves no partial output behind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

use crate::chemshift::{line_frequencies, resolvable_with, synth_spectrum, MoleculeSpec};
use crate::correlation::{synthesize_timeseries, CorrelationConfig};
use crate::diffusion::{
    combined_linewidth, fit_diffusion, synthetic_depth_series, DepthBroadeningPoint,
    DiffusionFitOptions,
};
use crate::error::{Error, Result};
use crate::io::{
    to_json, write_columns, write_depth_csv, write_spectrum_csv, write_timeseries_csv,
};
use crate::model::{join, require, FieldConfig, Issue, NvSensor, SampleModel, Validate};
use crate::pulse_filter::{brms_at_depth, effective_linewidth, filter_function, PulseSequence};
use crate::sampling::SamplingPlan;
use crate::spectral::{
    fit_exp_envelope, fit_line, lifetime_fwhm_hz, periodogram, rectangular_window_fwhm_hz, LineFit,
    Lineshape, TimeSeries,
};
use crate::spin_bath::{
    autocorrelation, msd_decay_time, one_over_e_time, simulate_bath, BathConfig,
};

pub const DEFAULT_SEED: u64 = 2015;
/// Largest lag written to the autocorrelation output.
pub const AUTOCORR_OUTPUT_LAG_US: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    Fig2Generator,
    Fig3Chemshift,
    Fig4Proton,
    Custom,
}

impl ScenarioId {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Fig2Generator => "fig2-generator",
            ScenarioId::Fig3Chemshift => "fig3-chemshift",
            ScenarioId::Fig4Proton => "fig4-proton",
            ScenarioId::Custom => "custom",
        }
    }
}

/// Synthetic generator signal, sampled and analysed spectrally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GeneratorBlock {
    pub correlation: CorrelationConfig,
    pub plan: SamplingPlan,
    #[serde(default = "default_zero_pad")]
    pub zero_pad: usize,
    #[serde(default)]
    pub lineshape: Lineshape,
}

fn default_zero_pad() -> usize {
    8
}

impl Validate for GeneratorBlock {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.correlation.check("CorrelationConfig", issues);
        self.plan.check("SamplingPlan", issues);
        let f = self.correlation.signal_freq_hz;
        require(
            !(f < self.plan.f_low_hz || f > self.plan.f_high_hz),
            "CorrelationConfig",
            "signal_freq_hz",
            || {
                format!(
                    "{f} Hz lies outside the plan band [{}, {}] Hz",
                    self.plan.f_low_hz, self.plan.f_high_hz
                )
            },
            issues,
        );
        require(
            (1..=64).contains(&self.zero_pad),
            path,
            "zero_pad",
            || format!("must lie in 1..=64, got {}", self.zero_pad),
            issues,
        );
    }
}

/// XY8 filter scans and effective linewidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FilterBlock {
    pub sensor: NvSensor,
    pub tau_us: f64,
    pub repeats: Vec<u32>,
    #[serde(default = "default_half_span")]
    pub half_span_hz: f64,
    #[serde(default = "default_n_freqs")]
    pub n_freqs: usize,
}

fn default_half_span() -> f64 {
    300e3
}

fn default_n_freqs() -> usize {
    601
}

impl Validate for FilterBlock {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.sensor.check(&join(path, "sensor"), issues);
        require(
            self.tau_us.is_finite() && self.tau_us > 0.0,
            path,
            "tau_us",
            || format!("must be > 0, got {}", self.tau_us),
            issues,
        );
        require(
            !self.repeats.is_empty() && self.repeats.iter().all(|&n| n >= 1),
            path,
            "repeats",
            || "needs at least one repeat count, each >= 1".into(),
            issues,
        );
        require(
            self.half_span_hz.is_finite() && self.half_span_hz > 0.0,
            path,
            "half_span_hz",
            || format!("must be > 0, got {}", self.half_span_hz),
            issues,
        );
        require(
            self.n_freqs >= 2,
            path,
            "n_freqs",
            || "must be >= 2".into(),
            issues,
        );
    }
}

/// A built-in molecule by name or a full inline spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum MoleculeEntry {
    Builtin { molecule: String, nucleus: String },
    Inline(MoleculeSpec),
}

impl MoleculeEntry {
    pub fn resolve(&self) -> Option<MoleculeSpec> {
        match self {
            MoleculeEntry::Builtin { molecule, nucleus } => {
                MoleculeSpec::builtin(molecule, nucleus)
            }
            MoleculeEntry::Inline(spec) => Some(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChemshiftBlock {
    pub molecules: Vec<MoleculeEntry>,
    pub fields_tesla: Vec<f64>,
    pub resolutions_hz: Vec<f64>,
    #[serde(default)]
    pub lineshape: Lineshape,
}

impl Validate for ChemshiftBlock {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            !self.molecules.is_empty(),
            path,
            "molecules",
            || "needs at least one molecule".into(),
            issues,
        );
        for (i, m) in self.molecules.iter().enumerate() {
            let p = format!("{}[{i}]", join(path, "molecules"));
            match m.resolve() {
                Some(spec) => spec.check(&p, issues),
                None => issues.push(Issue::new(p, format!("unknown built-in molecule {m:?}"))),
            }
        }
        require(
            !self.fields_tesla.is_empty()
                && self.fields_tesla.iter().all(|b| b.is_finite() && *b > 0.0),
            path,
            "fields_tesla",
            || "needs at least one field, each > 0".into(),
            issues,
        );
        require(
            !self.resolutions_hz.is_empty()
                && self
                    .resolutions_hz
                    .iter()
                    .all(|w| w.is_finite() && *w > 0.0),
            path,
            "resolutions_hz",
            || "needs at least one resolution, each > 0".into(),
            issues,
        );
    }
}

/// Depth series generated from a known diffusivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SyntheticDepthData {
    pub diffusion_nm2_per_us: f64,
    pub depths_nm: Vec<f64>,
    #[serde(default)]
    pub relative_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticDepthData {
    pub fn generate(&self) -> Result<Vec<DepthBroadeningPoint>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        synthetic_depth_series(
            self.diffusion_nm2_per_us,
            &self.depths_nm,
            self.relative_noise,
            &mut rng,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DiffusionBlock {
    #[serde(default)]
    pub points: Option<Vec<DepthBroadeningPoint>>,
    #[serde(default)]
    pub synthetic: Option<SyntheticDepthData>,
    #[serde(default)]
    pub fit: DiffusionFitOptions,
}

impl Validate for DiffusionBlock {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.points.is_some() != self.synthetic.is_some(),
            path,
            "points",
            || "give exactly one of points or synthetic".into(),
            issues,
        );
        if let Some(points) = &self.points {
            for (i, p) in points.iter().enumerate() {
                p.check(&format!("{}[{i}]", join(path, "points")), issues);
            }
        }
        if let Some(s) = &self.synthetic {
            let p = join(path, "synthetic");
            require(
                s.diffusion_nm2_per_us.is_finite() && s.diffusion_nm2_per_us >= 0.0,
                &p,
                "diffusion_nm2_per_us",
                || "must be >= 0".into(),
                issues,
            );
            require(
                !s.depths_nm.is_empty() && s.depths_nm.iter().all(|d| d.is_finite() && *d > 0.0),
                &p,
                "depths_nm",
                || "needs at least one depth, each > 0".into(),
                issues,
            );
            require(
                s.relative_noise.is_finite() && s.relative_noise >= 0.0,
                &p,
                "relative_noise",
                || "must be >= 0".into(),
                issues,
            );
        }
        self.fit.check(&join(path, "fit"), issues);
    }
}

/// Linewidth budget for one sensor and sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LinewidthBlock {
    pub sensor: NvSensor,
    pub sample: SampleModel,
}

impl Validate for LinewidthBlock {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.sensor.check(&join(path, "sensor"), issues);
        self.sample.check(&join(path, "sample"), issues);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioId>,
    /// Overrides every block seed when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorBlock>,
    #[serde(default)]
    pub filter: Option<FilterBlock>,
    #[serde(default)]
    pub chemshift: Option<ChemshiftBlock>,
    #[serde(default)]
    pub bath: Option<BathConfig>,
    #[serde(default)]
    pub diffusion: Option<DiffusionBlock>,
    #[serde(default)]
    pub linewidth: Option<LinewidthBlock>,
}

fn proton_tau_us() -> f64 {
    PulseSequence::resonant_tau_us(1.7e6)
}

/// 1.7 MHz generator, T₁ = 1.7 ms, sampled every ≈58.86 µs.
pub fn fig2_generator() -> ScenarioConfig {
    let sensor = NvSensor {
        depth_nm: 5.0,
        t1_ms: 1.7,
        t2_us: 10.0,
    };
    let plan = SamplingPlan::upper_edge(1.699e6, 1.704e6, 201, 512).expect("preset plan");
    ScenarioConfig {
        scenario: Some(ScenarioId::Fig2Generator),
        generator: Some(GeneratorBlock {
            correlation: CorrelationConfig::ideal(sensor, 1.7e6, 0.5),
            plan,
            zero_pad: default_zero_pad(),
            lineshape: Lineshape::Lorentzian,
        }),
        ..Default::default()
    }
}

/// Acetic acid and methyl formate at 1 T and 5 T, correlation- versus
/// phase-spectroscopy resolution, plus the XY8-4/XY8-8 filter widths.
pub fn fig3_chemshift() -> ScenarioConfig {
    let molecules = ["acetic-acid", "methyl-formate"]
        .iter()
        .flat_map(|m| {
            ["1H", "13C"].iter().map(move |n| MoleculeEntry::Builtin {
                molecule: m.to_string(),
                nucleus: n.to_string(),
            })
        })
        .collect();
    ScenarioConfig {
        scenario: Some(ScenarioId::Fig3Chemshift),
        chemshift: Some(ChemshiftBlock {
            molecules,
            fields_tesla: vec![1.0, 5.0],
            resolutions_hz: vec![470.0, 110e3],
            lineshape: Lineshape::Lorentzian,
        }),
        filter: Some(FilterBlock {
            sensor: NvSensor {
                depth_nm: 5.0,
                t1_ms: 2.1,
                t2_us: 10.0,
            },
            tau_us: proton_tau_us(),
            repeats: vec![4, 8],
            half_span_hz: default_half_span(),
            n_freqs: default_n_freqs(),
        }),
        ..Default::default()
    }
}

/// Proton bath in oil at 5 nm, diffusion fit on a synthetic depth series and
/// the linewidth budget.
pub fn fig4_proton() -> ScenarioConfig {
    ScenarioConfig {
        scenario: Some(ScenarioId::Fig4Proton),
        bath: Some(BathConfig::oil(5.0, 0.19, 20_000.0, DEFAULT_SEED)),
        diffusion: Some(DiffusionBlock {
            points: None,
            synthetic: Some(SyntheticDepthData {
                diffusion_nm2_per_us: 0.15,
                depths_nm: vec![2.0, 3.0, 4.0, 5.0, 7.0, 10.0],
                relative_noise: 0.2,
                seed: DEFAULT_SEED,
            }),
            fit: DiffusionFitOptions {
                seed: DEFAULT_SEED,
                ..Default::default()
            },
        }),
        linewidth: Some(LinewidthBlock {
            sensor: NvSensor {
                depth_nm: 3.9,
                t1_ms: 2.1,
                t2_us: 10.0,
            },
            sample: SampleModel::oil(0.15),
        }),
        ..Default::default()
    }
}

impl ScenarioConfig {
    pub fn preset(id: ScenarioId) -> Self {
        match id {
            ScenarioId::Fig2Generator => fig2_generator(),
            ScenarioId::Fig3Chemshift => fig3_chemshift(),
            ScenarioId::Fig4Proton => fig4_proton(),
            ScenarioId::Custom => ScenarioConfig {
                scenario: Some(ScenarioId::Custom),
                ..Default::default()
            },
        }
    }

    /// Preset blocks overlaid with the blocks given here, seeds applied.
    pub fn resolved(&self) -> ScenarioConfig {
        let Some(id) = self.scenario else {
            return self.clone();
        };
        let base = ScenarioConfig::preset(id);
        let mut out = ScenarioConfig {
            scenario: Some(id),
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            generator: self.generator.clone().or(base.generator),
            filter: self.filter.clone().or(base.filter),
            chemshift: self.chemshift.clone().or(base.chemshift),
            bath: self.bath.clone().or(base.bath),
            diffusion: self.diffusion.clone().or(base.diffusion),
            linewidth: self.linewidth.clone().or(base.linewidth),
        };
        if let Some(seed) = self.seed {
            if let Some(g) = out.generator.as_mut() {
                g.correlation.seed = seed;
            }
            if let Some(b) = out.bath.as_mut() {
                b.seed = seed;
            }
            if let Some(d) = out.diffusion.as_mut() {
                if let Some(s) = d.synthetic.as_mut() {
                    s.seed = seed;
                }
                d.fit.seed = seed.wrapping_add(1);
            }
        }
        out
    }

    fn has_stage(&self) -> bool {
        self.generator.is_some()
            || self.filter.is_some()
            || self.chemshift.is_some()
            || self.bath.is_some()
            || self.diffusion.is_some()
            || self.linewidth.is_some()
    }
}

/// Every invariant violation in the config, after preset resolution.
pub fn validate_config(cfg: &ScenarioConfig) -> Vec<Issue> {
    let mut issues = Vec::new();
    if cfg.scenario.is_none() {
        issues.push(Issue::new(
            "scenario",
            "missing; expected one of fig2-generator, fig3-chemshift, fig4-proton, custom",
        ));
    }
    let r = cfg.resolved();
    if cfg.scenario.is_some() && !r.has_stage() {
        issues.push(Issue::new("scenario", "no stage blocks configured"));
    }
    if let Some(g) = &r.generator {
        g.check("GeneratorBlock", &mut issues);
    }
    if let Some(f) = &r.filter {
        f.check("FilterBlock", &mut issues);
    }
    if let Some(c) = &r.chemshift {
        c.check("ChemshiftBlock", &mut issues);
    }
    if let Some(b) = &r.bath {
        b.check("BathConfig", &mut issues);
    }
    if let Some(d) = &r.diffusion {
        d.check("DiffusionBlock", &mut issues);
    }
    if let Some(l) = &r.linewidth {
        l.check("LinewidthBlock", &mut issues);
    }
    issues
}

/// One derived number with its unit and the module that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub module: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Summary {
    pub scenario: String,
    /// Text, so that every JSON number in the summary is a quantity value.
    pub seed: String,
    pub quantities: Vec<Quantity>,
}

impl Summary {
    pub fn get(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    fn push(&mut self, name: impl Into<String>, value: f64, unit: &str, module: &str) {
        self.quantities.push(Quantity {
            name: name.into(),
            value,
            unit: unit.into(),
            module: module.into(),
        });
    }
}

/// JSON Schema of the scenario configuration file.
pub fn config_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(ScenarioConfig)).expect("schema serializes")
}

/// JSON Schema of `summary.json`.
pub fn summary_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(Summary)).expect("schema serializes")
}

/// Checks that every number in a summary document is the `value` of a
/// `{name, value, unit, module}` object with a non-empty unit.
pub fn check_summary_schema(doc: &Value) -> std::result::Result<(), Vec<String>> {
    fn walk(v: &Value, path: &str, errs: &mut Vec<String>) {
        match v {
            Value::Number(_) => errs.push(format!("{path}: number without a unit")),
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    walk(item, &format!("{path}[{i}]"), errs);
                }
            }
            Value::Object(map) if map.contains_key("value") => {
                let keys: Vec<&str> = map.keys().map(String::as_str).collect();
                let mut sorted = keys.clone();
                sorted.sort_unstable();
                if sorted != ["module", "name", "unit", "value"] {
                    errs.push(format!(
                        "{path}: quantity keys must be name, value, unit, module"
                    ));
                }
                if !map["value"].is_number() {
                    errs.push(format!("{path}.value: not a number"));
                }
                match map.get("unit").and_then(Value::as_str) {
                    Some(u) if !u.trim().is_empty() => {}
                    _ => errs.push(format!("{path}.unit: missing or empty")),
                }
                for key in ["name", "module"] {
                    if !map.get(key).is_some_and(Value::is_string) {
                        errs.push(format!("{path}.{key}: not a string"));
                    }
                }
            }
            Value::Object(map) => {
                for (k, item) in map {
                    walk(item, &join(path, k), errs);
                }
            }
            _ => {}
        }
    }
    let mut errs = Vec::new();
    walk(doc, "", &mut errs);
    if doc.get("quantities").is_none_or(|q| !q.is_array()) {
        errs.push("quantities: missing array".into());
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Result of the generator analysis chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GeneratorAnalysis {
    pub folded_peak_hz: f64,
    pub dealiased_hz: f64,
    pub bin_hz: f64,
    pub fit: LineFit,
    pub envelope_ms: f64,
    pub lifetime_fwhm_hz: f64,
    pub window_fwhm_hz: f64,
}

/// Periodogram, line fit, de-aliasing and envelope fit of a sampled signal.
pub fn analyze_generator(
    ts: &TimeSeries,
    plan: &SamplingPlan,
    t1_ms: f64,
    zero_pad: usize,
    lineshape: Lineshape,
) -> Result<(GeneratorAnalysis, crate::spectral::Spectrum)> {
    let spec = periodogram(ts, zero_pad);
    let fit = fit_line(&spec, lineshape)?;
    let dealiased_hz = plan.unalias(fit.f0_hz)?;
    let envelope_ms = fit_exp_envelope(ts)?;
    let analysis = GeneratorAnalysis {
        folded_peak_hz: fit.f0_hz,
        dealiased_hz,
        bin_hz: ts.bin_hz(),
        fit,
        envelope_ms,
        lifetime_fwhm_hz: lifetime_fwhm_hz(t1_ms),
        window_fwhm_hz: rectangular_window_fwhm_hz(ts),
    };
    Ok((analysis, spec))
}

fn tag(v: f64) -> String {
    // compact, filename-safe
    let s = format!("{v}");
    s.replace('.', "p")
}

/// Output files (name, bytes) plus the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Summary,
}

impl Bundle {
    /// Writes every file and `summary.json` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes)?;
            written.push(p);
        }
        let p = dir.join("summary.json");
        std::fs::write(&p, to_json(&self.summary)?)?;
        written.push(p);
        Ok(written)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Validates and computes the whole scenario in memory.
pub fn compute_scenario(cfg: &ScenarioConfig) -> Result<Bundle> {
    let issues = validate_config(cfg);
    if !issues.is_empty() {
        return Err(Error::Invalid { issues });
    }
    let r = cfg.resolved();
    let id = r.scenario.expect("validated");
    let mut files = Vec::new();
    let mut summary = Summary {
        scenario: id.as_str().into(),
        seed: cfg.seed.map_or_else(|| "preset".into(), |s| s.to_string()),
        quantities: Vec::new(),
    };

    if let Some(g) = &r.generator {
        let ts = synthesize_timeseries(&g.correlation, &g.plan)?;
        let (a, spec) = analyze_generator(
            &ts,
            &g.plan,
            g.correlation.sensor.t1_ms,
            g.zero_pad,
            g.lineshape,
        )?;
        files.push((
            "timeseries.csv".into(),
            csv_bytes(|b| write_timeseries_csv(b, &ts, "signal"))?,
        ));
        files.push((
            "spectrum.csv".into(),
            csv_bytes(|b| write_spectrum_csv(b, &spec))?,
        ));
        files.push(("fit.json".into(), to_json(&a)?.into_bytes()));
        summary.push("sampling_rate", g.plan.fs_hz, "Hz", "sampling");
        summary.push("sample_interval", g.plan.dt_us(), "us", "sampling");
        summary.push("folded_peak", a.folded_peak_hz, "Hz", "spectral");
        summary.push("dealiased_frequency", a.dealiased_hz, "Hz", "sampling");
        summary.push("fft_bin", a.bin_hz, "Hz", "spectral");
        summary.push("fitted_fwhm", a.fit.fwhm_hz, "Hz", "spectral");
        summary.push("lifetime_fwhm", a.lifetime_fwhm_hz, "Hz", "spectral");
        summary.push("window_fwhm", a.window_fwhm_hz, "Hz", "spectral");
        summary.push("envelope_decay", a.envelope_ms, "ms", "spectral");
    }

    if let Some(f) = &r.filter {
        let seqs: Vec<PulseSequence> = f
            .repeats
            .iter()
            .map(|&n| PulseSequence::xy8(n, f.tau_us))
            .collect::<Result<_>>()?;
        let center = seqs[0].center_hz();
        let step = 2.0 * f.half_span_hz / (f.n_freqs - 1) as f64;
        let freqs: Vec<f64> = (0..f.n_freqs)
            .map(|i| center - f.half_span_hz + i as f64 * step)
            .collect();
        let mut cols = vec![freqs.clone()];
        let mut headers = vec!["f_hz".to_string()];
        for (seq, &n) in seqs.iter().zip(&f.repeats) {
            cols.push(freqs.iter().map(|&fr| filter_function(seq, fr)).collect());
            headers.push(format!("xy8_{n}"));
            summary.push(
                format!("effective_linewidth.xy8_{n}"),
                effective_linewidth(seq, &f.sensor),
                "Hz",
                "pulse_filter",
            );
        }
        let h: Vec<&str> = headers.iter().map(String::as_str).collect();
        let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        files.push((
            "filter.csv".into(),
            csv_bytes(|b| write_columns(b, &h, &c))?,
        ));
    }

    if let Some(c) = &r.chemshift {
        let mut table = Vec::new();
        for entry in &c.molecules {
            let mol = entry.resolve().expect("validated");
            for &b in &c.fields_tesla {
                let field = FieldConfig::tesla(b);
                let lines = line_frequencies(&mol, field)?;
                for &w in &c.resolutions_hz {
                    let key = format!("{}.{}.{}T.{}Hz", mol.name, mol.nucleus.name, tag(b), tag(w));
                    let spec = synth_spectrum(&mol, field, w, c.lineshape)?;
                    files.push((
                        format!("chemshift_{key}.csv"),
                        csv_bytes(|buf| write_spectrum_csv(buf, &spec))?,
                    ));
                    let pairs = resolvable_with(&mol, field, w, c.lineshape)?;
                    let all = pairs.iter().all(|p| p.resolvable);
                    summary.push(
                        format!("resolvable.{key}"),
                        f64::from(u8::from(all)),
                        "boolean",
                        "chemshift",
                    );
                    table.push(serde_json::json!({
                        "molecule": mol.name,
                        "nucleus": mol.nucleus.name,
                        "field_tesla": b,
                        "resolution_hz": w,
                        "line_frequencies_hz": lines.iter().map(|l| l.0).collect::<Vec<_>>(),
                        "pairs": pairs,
                    }));
                }
                if lines.len() >= 2 {
                    let lo = lines.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
                    let hi = lines.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
                    summary.push(
                        format!("line_spread.{}.{}.{}T", mol.name, mol.nucleus.name, tag(b)),
                        hi - lo,
                        "Hz",
                        "chemshift",
                    );
                }
            }
        }
        files.push(("resolvability.json".into(), to_json(&table)?.into_bytes()));
    }

    if let Some(b) = &r.bath {
        let trace = simulate_bath(b)?;
        let corr = autocorrelation(&trace)?;
        let keep = corr
            .t_us
            .iter()
            .take_while(|&&t| t <= AUTOCORR_OUTPUT_LAG_US + 1e-9)
            .count();
        files.push((
            "autocorrelation.csv".into(),
            csv_bytes(|buf| {
                write_columns(
                    buf,
                    &["lag_us", "correlation"],
                    &[&corr.t_us[..keep], &corr.values[..keep]],
                )
            })?,
        ));
        let brms = brms_at_depth(&b.sample, b.sensor_depth_nm)?;
        summary.push("bath.brms_analytic", brms, "G", "pulse_filter");
        summary.push(
            "bath.mean_square_field",
            trace.mean_square(),
            "G^2",
            "spin_bath",
        );
        summary.push(
            "bath.variance_ratio",
            trace.mean_square() / (brms * brms),
            "1",
            "spin_bath",
        );
        summary.push(
            "bath.trace_samples",
            trace.values.len() as f64,
            "count",
            "spin_bath",
        );
        if let Some(t) = one_over_e_time(&corr) {
            summary.push("bath.decay_1e", t, "us", "spin_bath");
        }
        let msd = msd_decay_time(b.sample.diffusion_nm2_per_us, b.sensor_depth_nm)?;
        if msd.is_finite() {
            summary.push("bath.msd_decay", msd, "us", "spin_bath");
        }
    }

    if let Some(d) = &r.diffusion {
        let points = match (&d.points, &d.synthetic) {
            (Some(p), _) => p.clone(),
            (None, Some(s)) => s.generate()?,
            (None, None) => unreachable!("validated"),
        };
        let fit = fit_diffusion(&points, &d.fit)?;
        files.push((
            "depth.csv".into(),
            csv_bytes(|b| write_depth_csv(b, &points))?,
        ));
        files.push(("diffusion_fit.json".into(), to_json(&fit)?.into_bytes()));
        summary.push(
            "diffusion.coefficient",
            fit.diffusion_nm2_per_us,
            "nm^2/us",
            "diffusion",
        );
        summary.push("diffusion.ci_low", fit.ci_low, "nm^2/us", "diffusion");
        summary.push("diffusion.ci_high", fit.ci_high, "nm^2/us", "diffusion");
        summary.push(
            "diffusion.points_fitted",
            fit.n_fitted as f64,
            "count",
            "diffusion",
        );
        summary.push(
            "diffusion.points_censored",
            fit.n_censored as f64,
            "count",
            "diffusion",
        );
    }

    if let Some(l) = &r.linewidth {
        let budget = combined_linewidth(&l.sensor, &l.sample)?;
        summary.push(
            "linewidth.intrinsic",
            budget.intrinsic_hz,
            "Hz",
            "diffusion",
        );
        summary.push(
            "linewidth.diffusion",
            budget.diffusion_hz,
            "Hz",
            "diffusion",
        );
        summary.push("linewidth.lifetime", budget.lifetime_hz, "Hz", "diffusion");
        summary.push("linewidth.total", budget.total_hz, "Hz", "diffusion");
    }

    if summary.quantities.iter().any(|q| !q.value.is_finite()) {
        return Err(Error::Degenerate("non-finite derived quantity".into()));
    }
    Ok(Bundle { files, summary })
}

/// Computes the scenario and writes the bundle into `out_dir`. Nothing is
/// written unless every stage succeeds.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Bundle> {
    let bundle = compute_scenario(cfg)?;
    bundle.write(out_dir)?;
    Ok(bundle)
}
