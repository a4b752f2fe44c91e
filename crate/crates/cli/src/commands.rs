use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use qengine::correlators::{
    integrate_correlation, integrate_correlation_quadrature, oscillation_contrast, stroke_series,
    Correlator, StrokePanel, TauGrid,
};
use qengine::liouville::DensityMatrix;
use qengine::model::{parse_value, FrequencyConvention};
use qengine::statistics::{
    finite_window_counting, report_for, sweep_with, EngineModel, Execution, Spacing, SweepAxis,
    SweepParam,
};
use qengine::trajectories::{default_dt, ensemble_counts, ensemble_records, CountingStatistics};
use qengine::{load_params, EngineError, EngineParams, EngineReport};

use crate::args::{Command, Common};
use crate::error::{CliError, CliResult};
use crate::manifest::OutputDir;
use crate::output::{csv_field, fmt_num, fmt_opt};
use crate::units::{self, ConventionComparison, SiReport};

/// Window of the counting statistics reported by `steady`, in units of 1/E_J.
pub const COUNTING_WINDOW_EJ: f64 = 100.0;

/// Default correlator couplings as multiples of E_J.
pub const DEFAULT_KAPPA_RATIOS: [f64; 5] = [0.02, 0.1, 0.5, 1.0, 2.0];

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "kappa,lambda,power_fW,current_A,fano,heat_cold_fW,heat_hot_fW,error";
pub const CORRELATE_HEADER: &str = "tau_over_EJ,raw_re,raw_im,connected_re,normalized_re";

/// Parsed config plus the command-independent flags.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config_text: String,
    pub params: EngineParams,
    pub out: PathBuf,
    pub cross_check: bool,
    pub started: Instant,
}

impl Setup {
    pub fn load(common: &Common) -> CliResult<Self> {
        let started = Instant::now();
        let config_text = fs::read_to_string(&common.config).map_err(|source| CliError::Read {
            path: common.config.clone(),
            source,
        })?;
        let mut params = load_params(&config_text)?;
        if let Some(name) = &common.convention {
            let convention: FrequencyConvention = name.parse()?;
            params = params.reinterpret(convention);
            params.validate()?;
        }
        Ok(Self {
            config_text,
            params,
            out: common.out.clone(),
            cross_check: common.cross_check,
            started,
        })
    }

    fn convention(&self) -> &'static str {
        self.params.frequency_convention.as_str()
    }

    fn scale(&self) -> f64 {
        self.params.frequency_convention.to_angular()
    }
}

/// Runs a parsed command; returns the written paths, manifest last.
pub fn run(command: &Command) -> CliResult<Vec<PathBuf>> {
    let setup = Setup::load(command.common())?;
    match command {
        Command::Steady { .. } => cmd_steady(&setup),
        Command::Sweep { axes, serial, .. } => cmd_sweep(&setup, axes, *serial),
        Command::Correlate {
            which,
            kappa_list,
            tau_max,
            tau_points,
            ..
        } => cmd_correlate(&setup, which, kappa_list.as_deref(), *tau_max, *tau_points),
        Command::Trajectories {
            n,
            t,
            dt,
            seed,
            dump_jumps,
            ..
        } => cmd_trajectories(
            &setup,
            &TrajectoryOptions {
                n: *n,
                t: *t,
                dt: *dt,
                seed: *seed,
                dump_jumps: *dump_jumps,
            },
        ),
    }
}

#[derive(Debug, Serialize)]
struct SteadyOutput<'a> {
    frequency_convention: &'static str,
    internal: &'a EngineReport,
    si: SiReport,
    checks: BalanceChecks,
    counting_window: Option<CountingWindow>,
    power_by_convention: ConventionComparison,
    cross_check: Option<SteadyCrossCheck>,
}

#[derive(Debug, Serialize)]
struct BalanceChecks {
    energy_balance_rel_error: f64,
    quanta_rate_rel_error: f64,
    analytic_current_rel_error: Option<f64>,
}

/// Cold-emission counts over `100/E_J`, from the long-time rates and from
/// the exact finite-window expression.
#[derive(Debug, Serialize)]
struct CountingWindow {
    window_ns: f64,
    mean_quanta: f64,
    long_time_variance: f64,
    long_time_fano: f64,
    finite_window_variance: f64,
    finite_window_fano: f64,
}

#[derive(Debug, Serialize)]
struct SteadyCrossCheck {
    current_noise_resolvent: f64,
    current_noise_quadrature: f64,
    g2_integral_resolvent: Option<f64>,
    g2_integral_quadrature: Option<f64>,
    max_rel_deviation: f64,
    alternate_row_trace_distance: f64,
}

fn rel_dev(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

pub fn cmd_steady(setup: &Setup) -> CliResult<Vec<PathBuf>> {
    let model = EngineModel::new(setup.params)?;
    let report = report_for(&model)?;
    let p = &setup.params;

    let counting_window = match (report.heat_variance_rate, report.fano_cold) {
        (Some(q_var), Some(fano)) => {
            let t = COUNTING_WINDOW_EJ / p.e_j;
            let (mean, var) = finite_window_counting(&model, t)?;
            let long_var = q_var / p.omega_c.powi(2) * t;
            Some(CountingWindow {
                window_ns: t,
                mean_quanta: mean,
                long_time_variance: long_var,
                long_time_fano: fano,
                finite_window_variance: var,
                finite_window_fano: var / mean,
            })
        }
        _ => None,
    };

    let cross_check = if setup.cross_check {
        Some(steady_cross_check(&model)?)
    } else {
        None
    };

    let out = SteadyOutput {
        frequency_convention: setup.convention(),
        internal: &report,
        si: SiReport::from_internal(&report),
        checks: BalanceChecks {
            energy_balance_rel_error: report.energy_balance_error(),
            quanta_rate_rel_error: report.quanta_rate_error(),
            analytic_current_rel_error: report.analytic_current.map(|a| rel_dev(a, report.mean_current)),
        },
        counting_window,
        power_by_convention: ConventionComparison::for_params(p)?,
        cross_check,
    };
    let mut dir = OutputDir::create(&setup.out, setup.started)?;
    dir.write_json("report.json", &out)?;
    dir.finish("steady", &setup.config_text, setup.convention(), Vec::new())
}

fn steady_cross_check(model: &EngineModel) -> CliResult<SteadyCrossCheck> {
    let l = &model.liouvillian;
    let ops = &model.ops;
    let rho = l.steady_state()?;
    let current = Correlator::TwoPoint {
        x: &ops.current_op,
        y: &ops.current_op,
    };
    let a = integrate_correlation(l, rho, current, true)?.re;
    let b = integrate_correlation_quadrature(l, rho, current, true)?.re;
    let mut dev = rel_dev(a, b);
    let (g_a, g_b) = if model.params.n_c == 0.0 {
        let g2 = StrokePanel::G2.correlator(ops);
        let ga = integrate_correlation(l, rho, g2, true)?.re;
        let gb = integrate_correlation_quadrature(l, rho, g2, true)?.re;
        dev = dev.max(rel_dev(ga, gb));
        (Some(ga), Some(gb))
    } else {
        (None, None)
    };
    let dim = l.dim();
    let alt: DensityMatrix = l.steady_state_replacing(dim + 1)?;
    Ok(SteadyCrossCheck {
        current_noise_resolvent: a,
        current_noise_quadrature: b,
        g2_integral_resolvent: g_a,
        g2_integral_quadrature: g_b,
        max_rel_deviation: dev,
        alternate_row_trace_distance: alt.trace_distance(rho)?,
    })
}

/// Parses `NAME:MIN:MAX:COUNT[:log|linear]`; κ bounds are in config units.
pub fn parse_axis(text: &str, frequency_scale: f64) -> CliResult<SweepAxis> {
    let bad = |msg: &str| CliError::Usage(format!("axis `{text}`: {msg}"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(bad("expected NAME:MIN:MAX:COUNT[:log|linear]"));
    }
    let (param, scale) = match parts[0] {
        "kappa" => (SweepParam::Kappa, frequency_scale),
        "lambda" => (SweepParam::Lambda, 1.0),
        other => return Err(bad(&format!("unsupported parameter `{other}` (kappa or lambda)"))),
    };
    let min = parse_value(parts[1]).map_err(|m| bad(&m))?;
    let max = parse_value(parts[2]).map_err(|m| bad(&m))?;
    let count: usize = parts[3].parse().map_err(|_| bad("COUNT must be a positive integer"))?;
    let spacing = match parts.get(4).copied() {
        None | Some("linear") => Spacing::Linear,
        Some("log") => Spacing::Log,
        Some(other) => return Err(bad(&format!("unknown spacing `{other}`"))),
    };
    let axis = SweepAxis {
        param,
        min: min * scale,
        max: max * scale,
        count,
        spacing,
    };
    axis.values().map_err(|e| bad(&e.to_string()))?;
    Ok(axis)
}

/// κ over `[0.05, 3]·E_J` (60 log-spaced) and λ on multiples of π/80 up to
/// π/2 (40 points).
pub fn default_axes(p: &EngineParams) -> Vec<SweepAxis> {
    vec![
        SweepAxis {
            param: SweepParam::Kappa,
            min: 0.05 * p.e_j,
            max: 3.0 * p.e_j,
            count: 60,
            spacing: Spacing::Log,
        },
        SweepAxis {
            param: SweepParam::Lambda,
            min: std::f64::consts::PI / 80.0,
            max: std::f64::consts::PI / 2.0,
            count: 40,
            spacing: Spacing::Linear,
        },
    ]
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    kappa: f64,
    lambda: f64,
    kappa_over_ej: f64,
    power_fw: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    cells: usize,
    failed_cells: usize,
    argmax: Option<SweepPoint>,
    refined: Option<SweepPoint>,
    power_by_convention: Option<ConventionComparison>,
}

pub fn cmd_sweep(setup: &Setup, axis_specs: &[String], serial: bool) -> CliResult<Vec<PathBuf>> {
    let p = setup.params;
    let axes = if axis_specs.is_empty() {
        default_axes(&p)
    } else {
        let axes: Vec<SweepAxis> = axis_specs
            .iter()
            .map(|s| parse_axis(s, setup.scale()))
            .collect::<CliResult<_>>()?;
        if axes.len() > 2 || (axes.len() == 2 && axes[0].param == axes[1].param) {
            return Err(CliError::Usage("at most one kappa and one lambda axis".into()));
        }
        axes
    };
    let exec = if serial { Execution::Serial } else { Execution::Parallel };
    let grid = sweep_with(&p, &axes, exec)?;

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for cell in &grid.cells {
        let q = &cell.params;
        let _ = write!(csv, "{},{},", fmt_num(q.to_config_units(q.kappa_h)), fmt_num(q.lambda_h));
        match &cell.report {
            Ok(r) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},",
                    fmt_num(units::power_fw(r.power)),
                    fmt_num(units::current_a(r.mean_current)),
                    fmt_opt(r.fano_cold),
                    fmt_num(units::power_fw(r.heat_rate_cold)),
                    fmt_num(units::power_fw(r.heat_rate_hot)),
                );
            }
            Err(e) => {
                let _ = writeln!(csv, ",,,,,{}", csv_field(&e.to_string()));
            }
        }
    }

    let point = |q: &EngineParams, power: f64| SweepPoint {
        kappa: q.to_config_units(q.kappa_h),
        lambda: q.lambda_h,
        kappa_over_ej: q.kappa_h / q.e_j,
        power_fw: units::power_fw(power),
    };
    let argmax = grid
        .argmax()
        .map(|c| point(&c.params, c.report.as_ref().map(|r| r.power).unwrap_or(f64::NAN)));
    let refined = grid.refine_kappa()?;
    let best_params = refined.as_ref().map(|o| o.params).or(grid.argmax().map(|c| c.params));
    let summary = SweepSummary {
        cells: grid.cells.len(),
        failed_cells: grid.cells.iter().filter(|c| c.report.is_err()).count(),
        argmax,
        refined: refined.as_ref().map(|o| point(&o.params, o.power)),
        power_by_convention: best_params.map(|q| ConventionComparison::for_params(&q)).transpose()?,
    };

    let mut dir = OutputDir::create(&setup.out, setup.started)?;
    dir.write(SWEEP_CSV, csv.as_bytes())?;
    dir.write_json("sweep_argmax.json", &summary)?;
    dir.finish("sweep", &setup.config_text, setup.convention(), Vec::new())
}

pub fn parse_panels(which: &str) -> CliResult<Vec<StrokePanel>> {
    if which.trim() == "all" {
        return Ok(StrokePanel::ALL.to_vec());
    }
    which
        .split(',')
        .map(|s| s.trim().parse::<StrokePanel>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// File-name form of a coupling: at most six decimals, no trailing zeros.
pub fn kappa_tag(kappa: f64) -> String {
    let s = format!("{kappa:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Serialize)]
struct CorrelationFile {
    file: String,
    panel: &'static str,
    kappa: f64,
    factorized_re: f64,
    factorized_im: f64,
    jump_norm: Option<f64>,
    oscillation_contrast: f64,
    normalized_available: bool,
    rk4_max_rel_deviation: Option<f64>,
}

pub fn cmd_correlate(
    setup: &Setup,
    which: &str,
    kappa_list: Option<&[String]>,
    tau_max: f64,
    tau_points: usize,
) -> CliResult<Vec<PathBuf>> {
    let p = setup.params;
    let panels = parse_panels(which)?;
    let kappas_cfg: Vec<f64> = match kappa_list {
        Some(list) if !list.is_empty() => list
            .iter()
            .map(|s| parse_value(s).map_err(|m| CliError::Usage(format!("kappa-list entry `{s}`: {m}"))))
            .collect::<CliResult<_>>()?,
        _ => DEFAULT_KAPPA_RATIOS.iter().map(|r| r * p.to_config_units(p.e_j)).collect(),
    };
    if p.e_j <= 0.0 {
        return Err(EngineError::Invalid {
            field: "E_J".into(),
            message: "delays are measured in 1/E_J, which needs E_J > 0".into(),
        }
        .into());
    }
    let grid = TauGrid::uniform(tau_max / p.e_j, tau_points)?;

    let mut dir = OutputDir::create(&setup.out, setup.started)?;
    let mut files = Vec::new();
    for &k_cfg in &kappas_cfg {
        let q = p.with_kappa(k_cfg * setup.scale());
        let model = EngineModel::new(q)?;
        let l = &model.liouvillian;
        let rho = l.steady_state()?;
        for &panel in &panels {
            let series = stroke_series(l, rho, &q, &model.ops, panel, &grid)?;
            let normalized = match series.normalized() {
                Ok(v) => Some(v),
                Err(EngineError::NullEvent(norm)) => {
                    eprintln!(
                        "warning: {} at kappa {}: jump norm {norm:e}, normalized column left empty",
                        panel.name(),
                        kappa_tag(k_cfg)
                    );
                    None
                }
                Err(_) => None,
            };
            let connected = series.connected();
            let mut csv = String::from(CORRELATE_HEADER);
            csv.push('\n');
            for (i, t) in series.scaled_tau().iter().enumerate() {
                let v = series.values[i];
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    fmt_num(*t),
                    fmt_num(v.re),
                    fmt_num(v.im),
                    fmt_num(connected[i].re),
                    fmt_opt(normalized.as_ref().map(|n| n[i].re)),
                );
            }
            let name = format!("{}_kappa_{}.csv", panel.name(), kappa_tag(k_cfg));
            dir.write(&name, csv.as_bytes())?;

            let rk4 = if setup.cross_check {
                Some(rk4_deviation(&model, panel, &grid)?)
            } else {
                None
            };
            let raw: Vec<f64> = series.values.iter().map(|v| v.re).collect();
            files.push(CorrelationFile {
                file: name,
                panel: panel.name(),
                kappa: k_cfg,
                factorized_re: series.factorized.re,
                factorized_im: series.factorized.im,
                jump_norm: series.jump_norm.map(|z| z.re),
                oscillation_contrast: oscillation_contrast(&raw),
                normalized_available: normalized.is_some(),
                rk4_max_rel_deviation: rk4,
            });
        }
    }
    dir.write_json("correlate_summary.json", &files)?;
    dir.finish("correlate", &setup.config_text, setup.convention(), Vec::new())
}

/// Largest deviation between the exponential propagator and RK4 integration
/// of the same correlator at a handful of delays, relative to the largest
/// value.
fn rk4_deviation(model: &EngineModel, panel: StrokePanel, grid: &TauGrid) -> CliResult<f64> {
    let l = &model.liouvillian;
    let rho = l.steady_state()?;
    let corr = panel.correlator(&model.ops);
    let seed = DensityMatrix::new_unchecked(corr.seed(rho));
    let y = corr.observable();
    let taus = grid.taus();
    let picks: Vec<f64> = (1..=4).map(|i| taus[(taus.len() - 1) * i / 4]).collect();
    let step_scale = l.matrix().norm_1();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for tau in picks {
        let exact = l.propagate_vec(&seed.vectorize(), tau)?;
        let steps = ((tau * step_scale / 0.05).ceil() as usize).max(1);
        let ode = l.propagate_rk4(&seed, tau, steps);
        let a = qengine::liouville::DensityMatrix::from_vectorized(&exact, l.dim()).expectation(y);
        let b = ode.expectation(y);
        worst = worst.max((a - b).norm());
        scale = scale.max(a.norm());
    }
    Ok(if scale == 0.0 { worst } else { worst / scale })
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub n: usize,
    pub t: Option<f64>,
    pub dt: Option<f64>,
    pub seed: u64,
    pub dump_jumps: bool,
}

#[derive(Debug, Serialize)]
struct TrajectoryOutput<'a> {
    frequency_convention: &'static str,
    seed_rule: &'static str,
    statistics: &'a CountingStatistics,
    master_equation: ExpectedCounts,
    work_from_cold_counts: WorkMoments,
}

/// Master-equation predictions for the same window.
#[derive(Debug, Serialize)]
struct ExpectedCounts {
    net_cold_mean: f64,
    cold_emission_variance_long_time: Option<f64>,
    cold_emission_variance_finite_window: Option<f64>,
    fano_long_time: Option<f64>,
}

#[derive(Debug, Serialize)]
struct WorkMoments {
    mean_internal: f64,
    variance_internal: f64,
    mean_j: f64,
    variance_j2: f64,
}

pub fn cmd_trajectories(setup: &Setup, opts: &TrajectoryOptions) -> CliResult<Vec<PathBuf>> {
    if opts.n == 0 {
        return Err(CliError::Usage("--traj-N must be at least 1".into()));
    }
    let p = setup.params;
    let t = opts.t.unwrap_or(COUNTING_WINDOW_EJ / p.e_j);
    let dt = match opts.dt {
        Some(dt) => dt,
        None => default_dt(&p)?,
    };
    let (stats, events) = if opts.dump_jumps {
        let (s, e) = ensemble_records(&p, t, opts.n, opts.seed, dt)?;
        (s, Some(e))
    } else {
        (ensemble_counts(&p, t, opts.n, opts.seed, dt)?, None)
    };

    let model = EngineModel::new(p)?;
    let report = report_for(&model)?;
    let finite = if p.n_c == 0.0 {
        Some(finite_window_counting(&model, t)?.1)
    } else {
        None
    };
    let (w_mean, w_var) = stats.work_moments(p.pair_energy());
    let out = TrajectoryOutput {
        frequency_convention: setup.convention(),
        seed_rule: "trajectory i uses base_seed + i",
        statistics: &stats,
        master_equation: ExpectedCounts {
            net_cold_mean: report.cold_emission_rate * t,
            cold_emission_variance_long_time: report.heat_variance_rate.map(|v| v / p.omega_c.powi(2) * t),
            cold_emission_variance_finite_window: finite,
            fano_long_time: report.fano_cold,
        },
        work_from_cold_counts: WorkMoments {
            mean_internal: w_mean,
            variance_internal: w_var,
            mean_j: units::energy_j(w_mean),
            variance_j2: units::energy_j(1.0).powi(2) * w_var,
        },
    };

    let mut dir = OutputDir::create(&setup.out, setup.started)?;
    dir.write_json("counts.json", &out)?;
    if let Some(events) = events {
        let mut csv = String::from("time,channel,trajectory_index\n");
        for (i, e) in events {
            let label = e.engine_channel().map(|c| c.label()).unwrap_or("unknown");
            let _ = writeln!(csv, "{},{label},{i}", fmt_num(e.time));
        }
        dir.write("jumps.csv", csv.as_bytes())?;
    }
    dir.finish("trajectories", &setup.config_text, setup.convention(), vec![opts.seed])
}
