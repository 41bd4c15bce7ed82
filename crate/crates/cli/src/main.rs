use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use nvnmr::chemshift::{resolvable_with, synth_spectrum};
use nvnmr::correlation::synthesize_timeseries;
use nvnmr::diffusion::{fit_diffusion, DiffusionFitOptions};
use nvnmr::io::{
    from_json, read_depth_csv, read_timeseries_csv, to_json, write_columns, write_spectrum_csv,
    write_timeseries_csv,
};
use nvnmr::pulse_filter::{effective_linewidth, filter_function, filter_peak, PulseSequence};
use nvnmr::sampling::{max_fold_index, valid_rate_interval, FoldLimit, SamplingPlan};
use nvnmr::scenario::{
    compute_scenario, config_schema, fig2_generator, fig3_chemshift, summary_schema,
    ChemshiftBlock, FilterBlock, GeneratorBlock, ScenarioConfig, ScenarioId,
};
use nvnmr::spectral::{fit_exp_envelope, fit_line, periodogram, Lineshape};
use nvnmr::spin_bath::{autocorrelation, one_over_e_time, simulate_bath, BathConfig};
use nvnmr::{Error, FieldConfig};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nvnmr",
    version,
    about = "NV-centre correlation-spectroscopy NMR toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration for the subcommand; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: the scenario's out_dir, else ./out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// XY8 filter functions and effective linewidths.
    Filter,
    /// Sampled correlation signal.
    Correlate,
    /// Monte Carlo bath field trace and its autocorrelation.
    Bath,
    /// Bandpass sampling plan.
    Plan,
    /// Periodogram and line fit of a time-series CSV.
    Spectrum {
        /// Time series CSV with columns t_us,<value>.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        zero_pad: usize,
        #[arg(long, value_enum, default_value_t = Shape::Lorentzian)]
        lineshape: Shape,
    },
    /// Chemical-shift spectra and resolvability.
    Chemshift,
    /// Fit a diffusion coefficient to broadening-vs-depth data.
    DiffusionFit {
        /// CSV with columns depth_nm,broadening_hz[,broadening_err_hz].
        #[arg(long)]
        input: PathBuf,
    },
    /// Full figure scenario.
    Scenario {
        /// Preset to run when no --config is given.
        #[arg(long)]
        preset: Option<String>,
    },
    /// JSON Schemas of the scenario configuration and the summary.
    Schema,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Shape {
    Lorentzian,
    Gaussian,
}

impl From<Shape> for Lineshape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Lorentzian => Lineshape::Lorentzian,
            Shape::Gaussian => Lineshape::Gaussian,
        }
    }
}

/// Request for `plan`: omitted fold index means the largest feasible one,
/// omitted rate means the upper edge of the window.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRequest {
    f_low_hz: f64,
    f_high_hz: f64,
    #[serde(default)]
    fold_index: Option<u32>,
    #[serde(default)]
    fs_hz: Option<f64>,
    n_samples: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Config { .. }
        | Error::Invalid { .. }
        | Error::InfeasibleFold { .. }
        | Error::Parse(_) => EXIT_VALIDATION,
        Error::Domain(_)
        | Error::Ambiguous { .. }
        | Error::FitRejected(_)
        | Error::NonConvergence { .. }
        | Error::Degenerate(_) => EXIT_NUMERIC,
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> nvnmr::Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json(&bytes)
}

fn load_or<T: serde::de::DeserializeOwned>(
    path: Option<&Path>,
    default: impl FnOnce() -> T,
) -> nvnmr::Result<T> {
    path.map_or_else(|| Ok(default()), load)
}

/// Files are staged in memory and only written once everything succeeded.
struct Output {
    files: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn new() -> Self {
        Output { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> nvnmr::Result<()> {
        self.add(name, to_json(value)?.into_bytes());
        Ok(())
    }

    fn write(self, dir: &Path) -> nvnmr::Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in self.files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            println!("{}", p.display());
        }
        Ok(())
    }
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> nvnmr::Result<()>) -> nvnmr::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn run(cli: &Cli) -> nvnmr::Result<(Output, Option<PathBuf>)> {
    let cfg = cli.config.as_deref();
    let mut out = Output::new();
    let mut out_dir = None;
    match &cli.command {
        Command::Filter => {
            let block: FilterBlock = load_or(cfg, || fig3_chemshift().filter.expect("preset"))?;
            let issues = validate(&block, "FilterBlock");
            if !issues.is_empty() {
                return Err(Error::Invalid { issues });
            }
            let seqs = block
                .repeats
                .iter()
                .map(|&n| PulseSequence::xy8(n, block.tau_us))
                .collect::<nvnmr::Result<Vec<_>>>()?;
            let center = seqs[0].center_hz();
            let step = 2.0 * block.half_span_hz / (block.n_freqs - 1) as f64;
            let freqs: Vec<f64> = (0..block.n_freqs)
                .map(|i| center - block.half_span_hz + i as f64 * step)
                .collect();
            let mut widths = Vec::new();
            let mut cols = vec![freqs.clone()];
            let mut headers = vec!["f_hz".to_string()];
            for (seq, n) in seqs.iter().zip(&block.repeats) {
                cols.push(freqs.iter().map(|&f| filter_function(seq, f)).collect());
                headers.push(format!("xy8_{n}"));
                let peak = filter_peak(seq);
                widths.push(json!({
                    "repeats": n,
                    "center_hz": peak.center_hz,
                    "bare_fwhm_hz": peak.fwhm_hz,
                    "effective_linewidth_hz": effective_linewidth(seq, &block.sensor),
                }));
            }
            match cli.format {
                Format::Csv => {
                    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
                    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
                    out.add("filter.csv", csv(|b| write_columns(b, &h, &c))?);
                    out.add_json("linewidths.json", &widths)?;
                }
                Format::Json => {
                    let table: serde_json::Map<_, _> = headers
                        .iter()
                        .zip(&cols)
                        .map(|(h, c)| (h.clone(), json!(c)))
                        .collect();
                    out.add_json("filter.json", &json!({"scan": table, "linewidths": widths}))?;
                }
            }
        }
        Command::Correlate => {
            let mut block: GeneratorBlock =
                load_or(cfg, || fig2_generator().generator.expect("preset"))?;
            if let Some(s) = cli.seed {
                block.correlation.seed = s;
            }
            let issues = validate(&block, "GeneratorBlock");
            if !issues.is_empty() {
                return Err(Error::Invalid { issues });
            }
            let ts = synthesize_timeseries(&block.correlation, &block.plan)?;
            match cli.format {
                Format::Csv => out.add(
                    "correlation.csv",
                    csv(|b| write_timeseries_csv(b, &ts, "signal"))?,
                ),
                Format::Json => out.add_json(
                    "correlation.json",
                    &json!({"t_us": ts.t_us, "signal": ts.values}),
                )?,
            }
        }
        Command::Bath => {
            let mut bath: BathConfig = load_or(cfg, || BathConfig::oil(5.0, 0.19, 2000.0, 2015))?;
            if let Some(s) = cli.seed {
                bath.seed = s;
            }
            let trace = simulate_bath(&bath)?;
            let corr = autocorrelation(&trace)?;
            let times = trace.times_us();
            let summary = json!({
                "mean_square_field_g2": trace.mean_square(),
                "decay_1e_us": one_over_e_time(&corr),
                "samples": trace.values.len(),
            });
            match cli.format {
                Format::Csv => {
                    out.add(
                        "trace.csv",
                        csv(|b| write_columns(b, &["t_us", "field_g"], &[&times, &trace.values]))?,
                    );
                    out.add(
                        "autocorrelation.csv",
                        csv(|b| {
                            write_columns(
                                b,
                                &["lag_us", "correlation"],
                                &[&corr.t_us, &corr.values],
                            )
                        })?,
                    );
                    out.add_json("bath.json", &summary)?;
                }
                Format::Json => out.add_json(
                    "bath.json",
                    &json!({
                        "summary": summary,
                        "trace": {"t_us": times, "field_g": trace.values},
                        "autocorrelation": {"lag_us": corr.t_us, "correlation": corr.values},
                    }),
                )?,
            }
        }
        Command::Plan => {
            let path = cfg.ok_or_else(|| {
                Error::config(
                    "config",
                    "plan needs --config with the band and sample count",
                )
            })?;
            let req: PlanRequest = load(path)?;
            let fold = match req.fold_index {
                Some(n) => n,
                None => match max_fold_index(req.f_low_hz, req.f_high_hz)? {
                    FoldLimit::Finite(n) => n,
                    FoldLimit::Unbounded => {
                        return Err(Error::config(
                            "fold_index",
                            "band has no finite largest fold index; give one",
                        ))
                    }
                },
            };
            let plan = match req.fs_hz {
                Some(fs) => {
                    let plan = SamplingPlan {
                        f_low_hz: req.f_low_hz,
                        f_high_hz: req.f_high_hz,
                        fold_index: fold,
                        fs_hz: fs,
                        n_samples: req.n_samples,
                        t0_us: 0.0,
                    };
                    let issues = validate(&plan, "SamplingPlan");
                    if !issues.is_empty() {
                        return Err(Error::Invalid { issues });
                    }
                    plan
                }
                None => SamplingPlan::upper_edge(req.f_low_hz, req.f_high_hz, fold, req.n_samples)?,
            };
            let iv = valid_rate_interval(plan.f_low_hz, plan.f_high_hz, plan.fold_index)?;
            out.add_json(
                "plan.json",
                &json!({
                    "plan": plan,
                    "interval_low_hz": iv.low_hz,
                    "interval_high_hz": if iv.high_hz.is_finite() { Some(iv.high_hz) } else { None },
                    "sample_interval_us": plan.dt_us(),
                }),
            )?;
        }
        Command::Spectrum {
            input,
            zero_pad,
            lineshape,
        } => {
            let file = fs::File::open(input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            let ts = read_timeseries_csv(file)?;
            let spec = periodogram(&ts, *zero_pad);
            let fit = fit_line(&spec, (*lineshape).into())?;
            let mut report = json!({"fit": fit, "bin_hz": ts.bin_hz()});
            if let Ok(ms) = fit_exp_envelope(&ts) {
                report["envelope_ms"] = json!(ms);
            }
            if let Some(path) = cfg {
                // a plan in --config de-aliases the fitted peak
                let plan: SamplingPlan = load(path)?;
                report["dealiased_hz"] = json!(plan.unalias(fit.f0_hz)?);
            }
            out.add_json("fit.json", &report)?;
            match cli.format {
                Format::Csv => out.add("spectrum.csv", csv(|b| write_spectrum_csv(b, &spec))?),
                Format::Json => out.add_json("spectrum.json", &spec)?,
            }
        }
        Command::Chemshift => {
            let block: ChemshiftBlock =
                load_or(cfg, || fig3_chemshift().chemshift.expect("preset"))?;
            let issues = validate(&block, "ChemshiftBlock");
            if !issues.is_empty() {
                return Err(Error::Invalid { issues });
            }
            let mut table = Vec::new();
            for entry in &block.molecules {
                let mol = entry.resolve().expect("validated");
                for &b in &block.fields_tesla {
                    for &w in &block.resolutions_hz {
                        let field = FieldConfig::tesla(b);
                        let spec = synth_spectrum(&mol, field, w, block.lineshape)?;
                        let pairs = resolvable_with(&mol, field, w, block.lineshape)?;
                        let stem = format!(
                            "chemshift_{}_{}_{}T_{}Hz",
                            mol.name,
                            mol.nucleus.name,
                            fmt_tag(b),
                            fmt_tag(w)
                        );
                        match cli.format {
                            Format::Csv => out.add(
                                &format!("{stem}.csv"),
                                csv(|buf| write_spectrum_csv(buf, &spec))?,
                            ),
                            Format::Json => out.add_json(&format!("{stem}.json"), &spec)?,
                        }
                        table.push(json!({
                            "molecule": mol.name,
                            "nucleus": mol.nucleus.name,
                            "field_tesla": b,
                            "resolution_hz": w,
                            "pairs": pairs,
                        }));
                    }
                }
            }
            out.add_json("resolvability.json", &table)?;
        }
        Command::DiffusionFit { input } => {
            let mut opts: DiffusionFitOptions = load_or(cfg, DiffusionFitOptions::default)?;
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            let file = fs::File::open(input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            let points = read_depth_csv(file)?;
            let fit = fit_diffusion(&points, &opts)?;
            out.add_json("diffusion_fit.json", &fit)?;
        }
        Command::Scenario { preset } => {
            let mut sc: ScenarioConfig = match (cfg, preset) {
                (Some(path), _) => load(path)?,
                (None, Some(name)) => {
                    let id: ScenarioId = serde_json::from_value(json!(name))
                        .map_err(|_| Error::config("preset", format!("unknown preset {name:?}")))?;
                    ScenarioConfig::preset(id)
                }
                (None, None) => {
                    return Err(Error::config(
                        "config",
                        "scenario needs --config or --preset",
                    ))
                }
            };
            if cli.seed.is_some() {
                sc.seed = cli.seed;
            }
            out_dir = sc.out_dir.clone();
            let bundle = compute_scenario(&sc)?;
            for (name, bytes) in bundle.files {
                out.add(&name, bytes);
            }
            out.add_json("summary.json", &bundle.summary)?;
        }
        Command::Schema => {
            out.add_json("scenario-config.schema.json", &config_schema())?;
            out.add_json("summary.schema.json", &summary_schema())?;
        }
    }
    Ok((out, out_dir))
}

fn validate<T: nvnmr::Validate>(value: &T, path: &str) -> Vec<nvnmr::Issue> {
    let mut issues = Vec::new();
    value.check(path, &mut issues);
    issues
}

fn fmt_tag(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(out, config_dir)| {
        let dir = cli
            .out
            .clone()
            .or(config_dir)
            .unwrap_or_else(|| PathBuf::from("out"));
        out.write(&dir)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Invalid { issues } => {
                    eprintln!("error: invalid configuration");
                    for i in issues {
                        eprintln!("  {}: {}", i.field, i.message);
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
