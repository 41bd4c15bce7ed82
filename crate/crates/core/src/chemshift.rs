//! Chemical-shift stick spectra, instrument broadening and line-pair
//! resolvability.
//!
//! Shifts use `f = f_ref·(1 + δ·10⁻⁶)`. The built-in shift table holds
//! textbook liquid-state values (SDBS / common NMR reference tables); they
//! are reference data, not fitted quantities.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{join, larmor_frequency, require, FieldConfig, Issue, NucleusSpec, Validate};
use crate::spectral::{Lineshape, Spectrum};

/// Fraction of the smaller maximum the valley between two lines must stay
/// at or below for the pair to count as resolved.
pub const RESOLVED_DIP_RATIO: f64 = 0.9;
/// Synthesized spectra extend this many FWHM beyond the outermost lines.
const SPECTRUM_MARGIN_FWHMS: f64 = 20.0;
/// Grid points per FWHM in synthesized spectra.
const POINTS_PER_FWHM: f64 = 32.0;
const MAX_GRID_POINTS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ShiftLine {
    pub shift_ppm: f64,
    /// Number of equivalent nuclei.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MoleculeSpec {
    pub name: String,
    pub nucleus: NucleusSpec,
    pub lines: Vec<ShiftLine>,
}

/// Built-in (molecule, nucleus, [(δ ppm, weight)]) table.
const SHIFT_TABLE: &[(&str, &str, &[(f64, f64)])] = &[
    ("acetic-acid", "1H", &[(2.10, 3.0), (11.4, 1.0)]),
    ("acetic-acid", "13C", &[(20.8, 1.0), (178.1, 1.0)]),
    ("methyl-formate", "1H", &[(3.77, 3.0), (8.08, 1.0)]),
    ("methyl-formate", "13C", &[(50.5, 1.0), (161.8, 1.0)]),
];

impl MoleculeSpec {
    /// Built-in molecule, e.g. `("acetic-acid", "13C")`.
    pub fn builtin(molecule: &str, nucleus: &str) -> Option<Self> {
        let nuc = NucleusSpec::builtin(nucleus)?;
        SHIFT_TABLE
            .iter()
            .find(|(m, n, _)| *m == molecule && *n == nuc.name)
            .map(|(m, _, lines)| MoleculeSpec {
                name: m.to_string(),
                nucleus: nuc,
                lines: lines
                    .iter()
                    .map(|&(shift_ppm, weight)| ShiftLine { shift_ppm, weight })
                    .collect(),
            })
    }

    pub fn builtin_names() -> Vec<(&'static str, &'static str)> {
        SHIFT_TABLE.iter().map(|(m, n, _)| (*m, *n)).collect()
    }
}

impl Validate for MoleculeSpec {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.nucleus.check(&join(path, "nucleus"), issues);
        require(
            !self.lines.is_empty(),
            path,
            "lines",
            || "needs at least one line".into(),
            issues,
        );
        for (i, l) in self.lines.iter().enumerate() {
            let p = format!("{}[{i}]", join(path, "lines"));
            require(
                l.shift_ppm.is_finite(),
                &p,
                "shift_ppm",
                || "must be finite".into(),
                issues,
            );
            require(
                l.weight.is_finite() && l.weight > 0.0,
                &p,
                "weight",
                || format!("must be > 0, got {}", l.weight),
                issues,
            );
        }
    }
}

fn check_inputs(mol: &MoleculeSpec, field: FieldConfig, fwhm_hz: Option<f64>) -> Result<()> {
    mol.validate()?;
    if !(field.b_gauss.is_finite() && field.b_gauss > 0.0) {
        return Err(Error::config("FieldConfig.b_gauss", "must be > 0"));
    }
    if let Some(w) = fwhm_hz {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!(
                "resolution FWHM must be > 0, got {w}"
            )));
        }
    }
    Ok(())
}

/// `(frequency Hz, weight)` for every line.
pub fn line_frequencies(mol: &MoleculeSpec, field: FieldConfig) -> Result<Vec<(f64, f64)>> {
    check_inputs(mol, field, None)?;
    let f_ref = larmor_frequency(&mol.nucleus, field);
    Ok(mol
        .lines
        .iter()
        .map(|l| (f_ref * (1.0 + l.shift_ppm * 1e-6), l.weight))
        .collect())
}

/// Weight-scaled lines of the given FWHM on a uniform grid.
///
/// Each line is normalized by its own discrete sum over the grid, so the
/// spectrum integrates (rectangle rule) exactly to the total weight whatever the
/// truncation of the Lorentzian tails.
pub fn synth_spectrum(
    mol: &MoleculeSpec,
    field: FieldConfig,
    resolution_fwhm_hz: f64,
    lineshape: Lineshape,
) -> Result<Spectrum> {
    check_inputs(mol, field, Some(resolution_fwhm_hz))?;
    let lines = line_frequencies(mol, field)?;
    let lo = lines.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    let hi = lines.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    let margin = SPECTRUM_MARGIN_FWHMS * resolution_fwhm_hz;
    let span = hi - lo + 2.0 * margin;
    let mut step = resolution_fwhm_hz / POINTS_PER_FWHM;
    if span / step > MAX_GRID_POINTS as f64 {
        step = span / MAX_GRID_POINTS as f64;
    }
    let n = (span / step).ceil() as usize + 1;
    let f_hz: Vec<f64> = (0..n).map(|i| lo - margin + i as f64 * step).collect();
    let mut power = vec![0.0; n];
    let mut profile = vec![0.0; n];
    for &(f0, w) in &lines {
        for (p, &f) in profile.iter_mut().zip(&f_hz) {
            *p = lineshape.value(f, 1.0, f0, resolution_fwhm_hz);
        }
        let area: f64 = profile.iter().sum::<f64>() * step;
        for (acc, p) in power.iter_mut().zip(&profile) {
            *acc += w * p / area;
        }
    }
    Spectrum::new(f_hz, power)
}

/// Rectangle-rule area of a uniformly gridded spectrum.
pub fn spectrum_area(spec: &Spectrum) -> f64 {
    if spec.f_hz.len() < 2 {
        return 0.0;
    }
    let step = spec.f_hz[1] - spec.f_hz[0];
    spec.total_power() * step
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PairResolution {
    pub first: usize,
    pub second: usize,
    pub separation_hz: f64,
    pub resolvable: bool,
}

/// Whether a two-line profile shows two maxima with a deep enough valley.
fn pair_resolved(
    (fa, wa): (f64, f64),
    (fb, wb): (f64, f64),
    fwhm: f64,
    lineshape: Lineshape,
) -> bool {
    let (lo, hi) = (fa.min(fb), fa.max(fb));
    let sep = hi - lo;
    if sep <= 0.0 {
        return false;
    }
    // equal widths, so peak heights scale with the weights
    let eval =
        |f: f64| wa * lineshape.value(f, 1.0, fa, fwhm) + wb * lineshape.value(f, 1.0, fb, fwhm);
    let start = lo - fwhm;
    let step = (sep.min(fwhm) / 256.0).max((sep + 2.0 * fwhm) / MAX_GRID_POINTS as f64);
    let n = ((sep + 2.0 * fwhm) / step).ceil() as usize + 1;
    let y: Vec<f64> = (0..n).map(|i| eval(start + i as f64 * step)).collect();
    let maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .collect();
    if maxima.len() < 2 {
        return false;
    }
    let (i, j) = (maxima[0], *maxima.last().unwrap());
    let valley = y[i..=j].iter().cloned().fold(f64::INFINITY, f64::min);
    valley <= RESOLVED_DIP_RATIO * y[i].min(y[j])
}

/// Resolvability of every line pair at the given instrument FWHM.
pub fn resolvable(
    mol: &MoleculeSpec,
    field: FieldConfig,
    resolution_fwhm_hz: f64,
) -> Result<Vec<PairResolution>> {
    resolvable_with(mol, field, resolution_fwhm_hz, Lineshape::Lorentzian)
}

pub fn resolvable_with(
    mol: &MoleculeSpec,
    field: FieldConfig,
    resolution_fwhm_hz: f64,
    lineshape: Lineshape,
) -> Result<Vec<PairResolution>> {
    check_inputs(mol, field, Some(resolution_fwhm_hz))?;
    let lines = line_frequencies(mol, field)?;
    let mut out = Vec::new();
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            out.push(PairResolution {
                first: a,
                second: b,
                separation_hz: (lines[b].0 - lines[a].0).abs(),
                resolvable: pair_resolved(lines[a], lines[b], resolution_fwhm_hz, lineshape),
            });
        }
    }
    Ok(out)
}

/// True when every line pair is resolvable.
pub fn fully_resolvable(
    mol: &MoleculeSpec,
    field: FieldConfig,
    resolution_fwhm_hz: f64,
) -> Result<bool> {
    Ok(resolvable(mol, field, resolution_fwhm_hz)?
        .iter()
        .all(|p| p.resolvable))
}
