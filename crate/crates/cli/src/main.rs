//! `photomac`: design tables, power reports, calibration and bit-true
//! simulation from the command line.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use photomac_core::attention::{attention_head, fidelity_report, AttentionWeights, Backend, SoftmaxLut};
use photomac_core::eo::{
    build_calibration, calibrate_curve, calibrated_transfer, dnl_inl, extended_transfer, uncalibrated_transfer,
};
use photomac_core::mmm::{dmmm_oracle, dmmm_simulate};
use photomac_core::mvm::{error_stats, mvm_oracle};
use photomac_core::power::perf_report;
use photomac_core::resonator::{calibrate_dispersion, plan_wavelengths, Design, TABLE_I_CASES};
use photomac_core::{
    AccelConfig, CalibrationMap, Error, MmmStrategy, MvmEngine, Nonlinearity, NoiseMode, QuantizedMatrix,
    QuantizedVector, R2rStatic, SimFlags,
};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "photomac", version, about = "WDM photonic MAC accelerator: design, power and bit-true simulation")]
struct Cli {
    /// TOML config; keys are the AccelConfig fields in SI units. Unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the vector width d (power of two).
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Override the code width B.
    #[arg(long, global = true)]
    bits: Option<u32>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wavelength plan, ring radii and racetrack geometry.
    Design(DesignArgs),
    /// Power, area, throughput and energy per MAC for a list of d.
    Perf(PerfArgs),
    /// Build the DAC linearizing map and report DNL/INL.
    Calibrate(CalibrateArgs),
    /// One matrix-vector product through the optical chain.
    SimulateMvm(MvmArgs),
    /// Double product X·Y·Z with a single optical-to-electrical conversion.
    SimulateDmmm(DmmmArgs),
    /// One attention head on the engine or a reference backend.
    SimulateAttention(AttentionArgs),
}

#[derive(Args)]
struct DesignArgs {
    /// Emit the three reference design cases instead of the configured one.
    #[arg(long)]
    table_i: bool,
    /// Waveguide dispersion data set (1..=3) for the configured design.
    #[arg(long, default_value_t = 1)]
    dispersion_case: usize,
}

#[derive(Args)]
struct PerfArgs {
    /// Vector widths, comma separated.
    #[arg(long = "d-list", value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128, 256])]
    d_list: Vec<usize>,
    /// R-2R unit resistances in ohm, comma separated; each charges the solved ladder power.
    #[arg(long, value_delimiter = ',')]
    r_u: Vec<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Laser wavelength in nm; the ring is parked on it.
    #[arg(long, default_value_t = 1534.5)]
    lambda_nm: f64,
    /// Measured (B+1)-bit transfer curve (CSV or JSON list) to calibrate instead of the ring model.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Also write per-level DNL/INL as CSV here.
    #[arg(long)]
    linearity_csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ChainArgs {
    #[arg(long, value_enum, default_value_t = NonlinearityArg::Ideal)]
    nonlinearity: NonlinearityArg,
    /// Enable receiver noise with this seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    crosstalk: bool,
    #[arg(long)]
    absorption_weighting: bool,
    /// Include the per-stage power trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum NonlinearityArg {
    Ideal,
    Uncalibrated,
    Calibrated,
}

impl ChainArgs {
    fn flags(&self) -> SimFlags {
        SimFlags {
            nonlinearity: match self.nonlinearity {
                NonlinearityArg::Ideal => Nonlinearity::Ideal,
                NonlinearityArg::Uncalibrated => Nonlinearity::Uncalibrated,
                NonlinearityArg::Calibrated => Nonlinearity::Calibrated,
            },
            noise: self.noise_seed.map_or(NoiseMode::Off, |seed| NoiseMode::Gaussian { seed }),
            crosstalk: self.crosstalk,
            absorption_weighting: self.absorption_weighting,
            record_trace: self.trace,
        }
    }
}

#[derive(Args)]
struct MvmArgs {
    /// Weight matrix Y (CSV rows or JSON list of rows).
    #[arg(long)]
    y: PathBuf,
    /// Input vector Z (one CSV row/column or a JSON list).
    #[arg(long)]
    z: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Parallel,
    TimeMultiplexed,
    Hybrid,
}

#[derive(Args)]
struct DmmmArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    z: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Parallel)]
    strategy: StrategyArg,
    /// Units for the hybrid schedule.
    #[arg(long, default_value_t = 2)]
    units: usize,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Oracle,
    Simulated,
}

#[derive(Args)]
struct AttentionArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    w_q: PathBuf,
    #[arg(long)]
    w_k: PathBuf,
    #[arg(long)]
    w_v: PathBuf,
    /// Score right shift m (scale 2^-m).
    #[arg(long, default_value_t = 1)]
    shift: u32,
    #[arg(long, value_enum, default_value_t = BackendArg::Simulated)]
    backend: BackendArg,
    #[arg(long, default_value_t = 1024)]
    exp_entries: usize,
    /// Exponent table covers [-range, 0].
    #[arg(long, default_value_t = 8.0)]
    exp_range: f64,
    #[arg(long, default_value_t = 256)]
    log_entries: usize,
    #[command(flatten)]
    chain: ChainArgs,
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_solver() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type Out<T> = std::result::Result<T, Failure>;

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Validation(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => match emit(cli.out.as_deref(), &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(f) => report(f),
        },
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let (kind, msg, code) = match f {
        Failure::Validation(m) => ("validation", m, 2),
        Failure::Solver(m) => ("solver", m, 3),
    };
    eprintln!("{}", json!({ "error": kind, "message": msg }));
    ExitCode::from(code)
}

fn emit(path: Option<&Path>, text: &str) -> Out<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(invalid),
    }
}

fn load_config(cli: &Cli) -> Out<AccelConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            AccelConfig::from_toml_str(&text)?
        }
        None => AccelConfig::default(),
    };
    if let Some(d) = cli.d {
        cfg.d = d;
    }
    if let Some(b) = cli.bits {
        cfg.bits = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Out<String> {
    let cfg = load_config(cli)?;
    match &cli.cmd {
        Cmd::Design(a) => cmd_design(&cfg, a, cli.format),
        Cmd::Perf(a) => cmd_perf(&cfg, a, cli.format),
        Cmd::Calibrate(a) => cmd_calibrate(&cfg, a, cli.format),
        Cmd::SimulateMvm(a) => cmd_mvm(cfg, a, cli.format),
        Cmd::SimulateDmmm(a) => cmd_dmmm(cfg, a, cli.format),
        Cmd::SimulateAttention(a) => cmd_attention(cfg, a, cli.format),
    }
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Out<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(invalid)?;
    s.push('\n');
    Ok(s)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Out<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(invalid)?;
    }
    String::from_utf8(w.into_inner().map_err(invalid)?).map_err(invalid)
}

fn matrix_csv(m: &QuantizedMatrix) -> String {
    let mut s = String::new();
    for row in m.to_rows() {
        let cells: Vec<String> = row.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn read_rows(path: &Path) -> Out<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        r.records()
            .map(|rec| {
                let rec = rec.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                rec.iter()
                    .map(|c| c.parse::<f64>().map_err(|e| invalid(format!("{}: {c:?}: {e}", path.display()))))
                    .collect()
            })
            .collect()
    } else {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let bad = || invalid(format!("{}: expected a list of numbers or a list of rows", path.display()));
        let arr = v.as_array().ok_or_else(bad)?;
        if arr.iter().all(|x| x.is_number()) {
            Ok(vec![arr.iter().map(|x| x.as_f64().unwrap()).collect()])
        } else {
            arr.iter()
                .map(|row| row.as_array().ok_or_else(bad)?.iter().map(|x| x.as_f64().ok_or_else(bad)).collect())
                .collect()
        }
    }
}

fn read_matrix(path: &Path, bits: u32) -> Out<QuantizedMatrix> {
    let rows = read_rows(path)?;
    let codes = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|v| {
                    if v.fract() == 0.0 && (0.0..=f64::from(u32::MAX)).contains(&v) {
                        Ok(v as u32)
                    } else {
                        Err(invalid(format!("{}: {v} is not an unsigned code", path.display())))
                    }
                })
                .collect::<Out<Vec<u32>>>()
        })
        .collect::<Out<Vec<_>>>()?;
    QuantizedMatrix::from_rows(bits, &codes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn read_vector(path: &Path, bits: u32) -> Out<QuantizedVector> {
    let m = read_matrix(path, bits)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(invalid(format!("{}: expected one row or one column", path.display())));
    }
    Ok(QuantizedVector::new(bits, m.codes().to_vec())?)
}

/// Engine whose comb is planned on the first dispersion data set.
fn build_engine(cfg: &AccelConfig) -> Out<MvmEngine> {
    let disp = calibrate_dispersion(&TABLE_I_CASES[0].2)?;
    let plan = plan_wavelengths(cfg.d, cfg.lambda_max_nm, cfg.spacing_nm, &disp)?;
    Ok(MvmEngine::new(cfg, &plan)?)
}

fn cmd_design(cfg: &AccelConfig, a: &DesignArgs, fmt: Format) -> Out<String> {
    if a.table_i {
        let rows = TABLE_I_CASES
            .iter()
            .map(|(d, spacing, samples)| {
                let disp = calibrate_dispersion(samples)?;
                Ok(Design::solve(*d, cfg.lambda_max_nm, *spacing, disp, cfg.rtr_bend_radius_um)?.summary())
            })
            .collect::<Out<Vec<_>>>()?;
        return match fmt {
            Format::Json => to_json(&rows),
            Format::Csv => to_csv(&rows),
        };
    }
    let case = a
        .dispersion_case
        .checked_sub(1)
        .and_then(|i| TABLE_I_CASES.get(i))
        .ok_or_else(|| invalid(format!("dispersion case {} not in 1..={}", a.dispersion_case, TABLE_I_CASES.len())))?;
    let disp = calibrate_dispersion(&case.2)?;
    let design = Design::solve(cfg.d, cfg.lambda_max_nm, cfg.spacing_nm, disp, cfg.rtr_bend_radius_um)?;
    match fmt {
        Format::Json => to_json(&json!({ "summary": design.summary(), "design": design })),
        Format::Csv => to_csv(&[design.summary()]),
    }
}

#[derive(Serialize)]
struct PerfRow {
    d: usize,
    r_u_ohm: Option<f64>,
    laser_mw: f64,
    heater_mw: f64,
    soc_mw: f64,
    area_mm2: f64,
    throughput_tmac_s: f64,
    density_tmac_s_mm2: f64,
    energy_fj_mac: f64,
}

fn cmd_perf(cfg: &AccelConfig, a: &PerfArgs, fmt: Format) -> Out<String> {
    let sweep: Vec<Option<f64>> = if a.r_u.is_empty() {
        vec![None]
    } else {
        a.r_u.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for r_u in sweep {
        for &d in &a.d_list {
            let mut c = AccelConfig { d, ..cfg.clone() };
            if let Some(r) = r_u {
                c.r_u_ohm = r;
                c.r2r_static_w = R2rStatic::LADDER;
            }
            c.validate()?;
            let p = perf_report(&c)?;
            rows.push(PerfRow {
                d,
                r_u_ohm: r_u,
                laser_mw: p.laser_w * 1e3,
                heater_mw: p.heater_w * 1e3,
                soc_mw: p.soc_w * 1e3,
                area_mm2: p.area_mm2,
                throughput_tmac_s: p.throughput_tmac_s(),
                density_tmac_s_mm2: p.density_tmac_s_mm2,
                energy_fj_mac: p.energy_fj_mac,
            });
        }
    }
    match fmt {
        Format::Json => to_json(&rows),
        Format::Csv => to_csv(&rows),
    }
}

#[derive(Serialize)]
struct LevelRow {
    level: usize,
    uncalibrated_dnl: Option<f64>,
    uncalibrated_inl: Option<f64>,
    calibrated_dnl: f64,
    calibrated_inl: f64,
}

fn cmd_calibrate(cfg: &AccelConfig, a: &CalibrateArgs, fmt: Format) -> Out<String> {
    let bits = cfg.bits;
    let (map, raw, cal) = match &a.curve {
        Some(path) => {
            let values: Vec<f64> = read_rows(path)?.into_iter().flatten().collect();
            if values.len() != 1usize << (bits + 1) {
                return Err(invalid(format!(
                    "{}: expected {} levels for a {}-bit extended DAC, got {}",
                    path.display(),
                    1usize << (bits + 1),
                    bits + 1,
                    values.len()
                )));
            }
            let picks = calibrate_curve(&values, 1usize << bits)?;
            let levels: Vec<f64> = picks.iter().map(|&c| values[c]).collect();
            let map = CalibrationMap {
                bits,
                mapping: picks.iter().map(|&c| c as u32).collect(),
            };
            map.validate()?;
            (map, None, dnl_inl(&levels)?)
        }
        None => {
            let m = cfg.mrm_model(a.lambda_nm)?;
            let raw = dnl_inl(&uncalibrated_transfer(&m, a.lambda_nm, bits, cfg.vddh_v)?)?;
            let map = build_calibration(&m, a.lambda_nm, bits, cfg.vddh_v)?;
            let ext = extended_transfer(&m, a.lambda_nm, bits, cfg.vddh_v)?;
            let cal = dnl_inl(&calibrated_transfer(&map, &ext))?;
            (map, Some(raw), cal)
        }
    };
    let levels: Vec<LevelRow> = (0..cal.inl.len())
        .map(|k| LevelRow {
            level: k,
            uncalibrated_dnl: raw.as_ref().and_then(|r| r.dnl.get(k).copied()),
            uncalibrated_inl: raw.as_ref().map(|r| r.inl[k]),
            calibrated_dnl: cal.dnl.get(k).copied().unwrap_or(0.0),
            calibrated_inl: cal.inl[k],
        })
        .collect();
    let linearity_csv = to_csv(&levels)?;
    if let Some(p) = &a.linearity_csv {
        fs::write(p, &linearity_csv).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
    }
    match fmt {
        Format::Csv => Ok(linearity_csv),
        Format::Json => to_json(&json!({
            "map": map,
            "within_half_lsb": cal.max_abs_dnl() <= 0.5 && cal.max_abs_inl() <= 0.5,
            "calibrated": { "max_abs_dnl": cal.max_abs_dnl(), "max_abs_inl": cal.max_abs_inl(), "dnl": cal.dnl, "inl": cal.inl },
            "uncalibrated": raw.as_ref().map(|r| json!({
                "max_abs_dnl": r.max_abs_dnl(), "max_abs_inl": r.max_abs_inl(), "dnl": r.dnl, "inl": r.inl
            })),
        })),
    }
}

fn cmd_mvm(mut cfg: AccelConfig, a: &MvmArgs, fmt: Format) -> Out<String> {
    let y = read_matrix(&a.y, cfg.bits)?;
    let z = read_vector(&a.z, cfg.bits)?;
    cfg.d = y.cols();
    cfg.validate()?;
    let engine = build_engine(&cfg)?;
    let r = engine.simulate(&y, &z, &a.chain.flags())?;
    let oracle = mvm_oracle(&y, &z)?;
    let stats = error_stats(r.codes.codes(), oracle.codes(), cfg.bits)?;
    match fmt {
        Format::Csv => {
            let cells: Vec<String> = r.codes.codes().iter().map(u32::to_string).collect();
            Ok(format!("{}\n", cells.join(",")))
        }
        Format::Json => to_json(&json!({
            "codes": r.codes.codes(),
            "oracle": oracle.codes(),
            "error": stats,
            "saturated": r.saturated,
            "analog_lsb": r.analog_lsb,
            "trace": r.trace,
        })),
    }
}

fn cmd_dmmm(mut cfg: AccelConfig, a: &DmmmArgs, fmt: Format) -> Out<String> {
    let x = read_matrix(&a.x, cfg.bits)?;
    let y = read_matrix(&a.y, cfg.bits)?;
    let z = read_matrix(&a.z, cfg.bits)?;
    cfg.d = y.cols();
    cfg.validate()?;
    let engine = build_engine(&cfg)?;
    let strategy = match a.strategy {
        StrategyArg::Parallel => MmmStrategy::Parallel,
        StrategyArg::TimeMultiplexed => MmmStrategy::TimeMultiplexed,
        StrategyArg::Hybrid => MmmStrategy::Hybrid { units: a.units },
    };
    let r = dmmm_simulate(&engine, &x, &y, &z, strategy, &a.chain.flags())?;
    let oracle = dmmm_oracle(&x, &y, &z)?;
    let stats = error_stats(r.codes.codes(), oracle.codes(), cfg.bits)?;
    match fmt {
        Format::Csv => Ok(matrix_csv(&r.codes)),
        Format::Json => to_json(&json!({
            "codes": r.codes.to_rows(),
            "oracle": oracle.to_rows(),
            "analog_lsb": r.analog_lsb,
            "error": stats,
            "saturated": r.saturated,
            "schedule": r.schedule,
            "trace": r.trace,
        })),
    }
}

fn cmd_attention(mut cfg: AccelConfig, a: &AttentionArgs, fmt: Format) -> Out<String> {
    let x = read_matrix(&a.x, cfg.bits)?;
    let w = AttentionWeights::new(
        read_matrix(&a.w_q, cfg.bits)?,
        read_matrix(&a.w_k, cfg.bits)?,
        read_matrix(&a.w_v, cfg.bits)?,
        a.shift,
    )?;
    let lut = SoftmaxLut::new(a.exp_entries, a.exp_range, a.log_entries)?;
    cfg.d = w.d();
    cfg.validate()?;
    let engine;
    let backend = match a.backend {
        BackendArg::Exact => Backend::Exact,
        BackendArg::Oracle => Backend::Oracle,
        BackendArg::Simulated => {
            engine = build_engine(&cfg)?;
            Backend::Simulated {
                engine: &engine,
                flags: a.chain.flags(),
            }
        }
    };
    let head = attention_head(&x, &w, backend, &lut)?;
    let exact = attention_head(&x, &w, Backend::Exact, &lut)?;
    let fidelity = fidelity_report(&exact, &head)?;
    match fmt {
        Format::Csv => {
            let mut s = String::new();
            for row in head.output.chunks(head.d) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            Ok(s)
        }
        Format::Json => to_json(&json!({
            "head": head,
            "fidelity": fidelity,
            "softmax_error_bound": lut.error_bound(head.n),
        })),
    }
}
