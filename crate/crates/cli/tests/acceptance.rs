//! Exit criteria for the engine, one test per criterion. Each test writes a
//! `criterion N: PASS|FAIL` line straight to stderr so the verdicts show up
//! in `cargo test` output without `--nocapture`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qengine::correlators::{first_local_max, integrate_correlation, integrate_correlation_quadrature, oscillation_contrast, stroke_series};
use qengine::statistics::{sweep_with, Execution, SweepGrid};
use qengine::trajectories::{default_dt, ensemble_average_state, ensemble_counts};
use qengine::{Channel, Correlator, DensityMatrix, EngineModel, EngineParams, StrokePanel, TauGrid, C64};
use qengine_cli::commands::{self, default_axes, Setup, TrajectoryOptions, DEFAULT_KAPPA_RATIOS};
use qengine_cli::manifest::{RunManifest, MANIFEST_NAME};
use qengine_cli::units::ConventionComparison;
use qengine_cli::Common;

fn verdict(n: u32, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {word} | {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn baseline() -> EngineParams {
    EngineParams::baseline()
}

/// `count` log-spaced values over `[lo, hi]`.
fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Ten couplings spanning `[0.1, 2]·E_J'`.
fn fluctuation_kappas(p: &EngineParams) -> Vec<f64> {
    log_space(0.1, 2.0, 10).into_iter().map(|r| r * p.e_j_prime()).collect()
}

/// Closed-form current for equal bath couplings, written out independently
/// of the engine.
fn closed_form_current(p: &EngineParams) -> f64 {
    let ep = p.e_j * (2.0 * p.lambda_h).sin() * (2.0 * p.lambda_c).sin();
    let k = p.kappa_h;
    (p.n_h - p.n_c) / (p.n_h + p.n_c + 1.0) / (1.0 / k + k / (ep * ep) * (2.0 * p.n_c + 1.0) * (2.0 * p.n_h + 1.0))
}

#[test]
fn criterion_01_closed_form_current() {
    let started = Instant::now();
    let base = baseline();
    let ep = base.e_j_prime();
    let mut worst = 0.0f64;
    for &kappa in &log_space(0.01 * ep, 10.0 * ep, 20) {
        for i in 0..20 {
            let mut p = base.with_kappa(kappa);
            p.n_h = 0.05 + 0.25 * i as f64;
            let numeric = EngineModel::new(p).and_then(|m| qengine::statistics::report_for(&m)).unwrap();
            worst = worst.max(rel(numeric.mean_current, closed_form_current(&p)));
        }
    }
    let elapsed = started.elapsed();
    verdict(
        1,
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        &format!("400 cells, worst relative error {worst:.2e} (<= 1e-10), {:.2} s (< 10 s)", elapsed.as_secs_f64()),
    );
}

struct DefaultSweep {
    grid: SweepGrid,
    elapsed: Duration,
}

fn default_sweep() -> &'static DefaultSweep {
    static SWEEP: OnceLock<DefaultSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let p = baseline();
        let started = Instant::now();
        let grid = sweep_with(&p, &default_axes(&p), Execution::Parallel).unwrap();
        let _ = grid.refine_kappa().unwrap();
        DefaultSweep {
            grid,
            elapsed: started.elapsed(),
        }
    })
}

#[test]
fn criterion_02_max_power_location() {
    let sweep = default_sweep();
    let grid = &sweep.grid;
    assert_eq!(grid.cells.len(), 60 * 40);
    let best = grid.argmax().unwrap();
    let refined = grid.refine_kappa().unwrap().unwrap();
    let lambda = best.params.lambda_h;
    let ratio = refined.params.kappa_h / refined.params.e_j;
    let pass = (lambda - FRAC_PI_4).abs() < 1e-12
        && (refined.params.lambda_h - FRAC_PI_4).abs() < 1e-12
        && (ratio - 0.503).abs() <= 0.01
        && sweep.elapsed < Duration::from_secs(60);
    verdict(
        2,
        pass,
        &format!(
            "argmax lambda = {:.6} (pi/4 = {:.6}), refined kappa/E_J = {ratio:.4} (0.503 +/- 0.01), 60x40 grid in {:.2} s (< 60 s)",
            lambda,
            FRAC_PI_4,
            sweep.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_max_power_value() {
    let refined = default_sweep().grid.refine_kappa().unwrap().unwrap();
    let c = ConventionComparison::for_params(&refined.params).unwrap();
    let matching = c.matching(0.16, 0.10);
    verdict(
        3,
        matching.len() == 1,
        &format!(
            "P_max: cycles {:.4} fW, angular {:.4} fW (target 0.16 fW +/- 10% under exactly one); matching: {:?}; \
             cycle rates with pair energy h_bar*(f_h - f_c) give {:.4} fW",
            c.cycles_fw, c.angular_fw, matching, c.mixed_fw
        ),
    );
}

#[test]
fn criterion_04_balances_on_sweep_grid() {
    let grid = &default_sweep().grid;
    let mut failed = 0;
    let (mut energy, mut quanta) = (0.0f64, 0.0f64);
    for cell in &grid.cells {
        match &cell.report {
            Ok(r) => {
                energy = energy.max(r.energy_balance_error());
                quanta = quanta.max(r.quanta_rate_error());
            }
            Err(_) => failed += 1,
        }
    }
    verdict(
        4,
        failed == 0 && energy <= 1e-10 && quanta <= 1e-10,
        &format!(
            "{} cells, {failed} failed, worst energy balance {energy:.2e}, worst quanta-rate mismatch {quanta:.2e} (<= 1e-10)",
            grid.cells.len()
        ),
    );
}

#[test]
fn criterion_05_work_and_heat_variances() {
    let base = baseline();
    let mut worst = 0.0f64;
    for kappa in fluctuation_kappas(&base) {
        let p = base.with_kappa(kappa);
        let r = qengine::engine_report(&p).unwrap();
        let work = r.work_variance_rate / p.pair_energy().powi(2);
        let heat = r.heat_variance_rate.unwrap() / p.omega_c.powi(2);
        worst = worst.max(rel(work, heat));
    }
    verdict(
        5,
        worst <= 1e-6,
        &format!("10 kappa in [0.1, 2] E_J', worst relative gap {worst:.2e} (<= 1e-6)"),
    );
}

/// Trajectory couplings in units of `E_J'`: every other value of the
/// ten-point fluctuation grid plus its upper end.
const TRAJECTORY_KAPPA_INDICES: [usize; 6] = [0, 2, 4, 6, 8, 9];
const TRAJECTORIES: usize = 10_000;

#[test]
fn criterion_06_sub_poissonian_counting() {
    let started = Instant::now();
    let base = baseline();
    let kappas = fluctuation_kappas(&base);
    let mut lines = Vec::new();
    let mut pass = true;
    for &kappa in &kappas {
        let f = qengine::engine_report(&base.with_kappa(kappa)).unwrap().fano_cold.unwrap();
        pass &= f < 1.0;
    }
    let max_formula = kappas
        .iter()
        .map(|&k| qengine::engine_report(&base.with_kappa(k)).unwrap().fano_cold.unwrap())
        .fold(f64::MIN, f64::max);
    lines.push(format!("formula max Fano {max_formula:.4} over 10 kappa"));
    for (k, &idx) in TRAJECTORY_KAPPA_INDICES.iter().enumerate() {
        let p = base.with_kappa(kappas[idx]);
        let window = 200.0 / kappas[idx];
        let seed = 1_000_000 * (k as u64 + 1);
        let stats = ensemble_counts(&p, window, TRAJECTORIES, seed, default_dt(&p).unwrap()).unwrap();
        let m = stats.channel(Channel::ColdEmit);
        let (fano, se) = (m.fano.unwrap(), m.fano_stderr.unwrap());
        let formula = qengine::engine_report(&p).unwrap().fano_cold.unwrap();
        let ok = fano < 1.0 && (fano - formula).abs() <= 3.0 * se;
        pass &= ok;
        lines.push(format!(
            "kappa/E_J' {:.3}: traj {fano:.4} +/- {se:.4} vs formula {formula:.4}",
            kappas[idx] / base.e_j_prime()
        ));
    }
    let elapsed = started.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    lines.push(format!("{:.1} s (< 300 s)", elapsed.as_secs_f64()));
    verdict(6, pass, &lines.join("; "));
}

/// First maximum of the partner population for two levels exchanging an
/// excitation with amplitude `g`, from RK4 integration of the closed
/// Schrödinger equation.
fn two_level_first_max(g: C64) -> f64 {
    let h = 1e-4 / g.norm();
    let rhs = |psi: [C64; 2]| {
        let i = C64::new(0.0, 1.0);
        [-i * g.conj() * psi[1], -i * g * psi[0]]
    };
    let step = |psi: [C64; 2]| {
        let add = |a: [C64; 2], b: [C64; 2], s: f64| [a[0] + b[0] * s, a[1] + b[1] * s];
        let k1 = rhs(psi);
        let k2 = rhs(add(psi, k1, h / 2.0));
        let k3 = rhs(add(psi, k2, h / 2.0));
        let k4 = rhs(add(psi, k3, h));
        [
            psi[0] + (k1[0] + k2[0] * 2.0 + k3[0] * 2.0 + k4[0]) * (h / 6.0),
            psi[1] + (k1[1] + k2[1] * 2.0 + k3[1] * 2.0 + k4[1]) * (h / 6.0),
        ]
    };
    let mut psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut history = [0.0; 3];
    let mut t = 0.0;
    loop {
        psi = step(psi);
        t += h;
        history = [history[1], history[2], psi[1].norm_sqr()];
        if t > 2.0 * h && history[2] < history[1] {
            let [a, b, c] = history;
            return t - h + 0.5 * h * (a - c) / (a - 2.0 * b + c);
        }
    }
}

#[test]
fn criterion_07_antibunching_and_strokes() {
    let started = Instant::now();
    let base = baseline();
    let ep = base.e_j_prime();
    let mut notes = Vec::new();

    let mut g2_zero = 0.0f64;
    let mut contrasts = Vec::new();
    for ratio in DEFAULT_KAPPA_RATIOS {
        let p = base.with_kappa(ratio * base.e_j);
        let m = EngineModel::new(p).unwrap();
        let rho = m.steady_state().unwrap();
        let grid = TauGrid::uniform(30.0 / p.e_j, 3001).unwrap();
        let s = stroke_series(&m.liouvillian, rho, &p, &m.ops, StrokePanel::G2, &grid).unwrap();
        g2_zero = g2_zero.max(s.values[0].norm());
        let raw: Vec<f64> = s.values.iter().map(|v| v.re).collect();
        contrasts.push(oscillation_contrast(&raw));
    }
    let contrast_ok = contrasts.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    notes.push(format!("max |G2(0)| {g2_zero:.1e} (<= 1e-12)"));
    notes.push(format!("contrast over kappa/E_J {DEFAULT_KAPPA_RATIOS:?}: {contrasts:.3?}"));

    // Rabi oracle at vanishing bath coupling.
    let coupling = base_two_level_coupling(&base);
    let oracle = two_level_first_max(coupling) * ep;
    let p = base.with_kappa(ep / 50.0);
    let m = EngineModel::new(p).unwrap();
    let rho = m.steady_state().unwrap();
    let points = 6001;
    let grid = TauGrid::uniform(6.0 * PI / ep, points).unwrap();
    let s = stroke_series(&m.liouvillian, rho, &p, &m.ops, StrokePanel::G2, &grid).unwrap();
    let raw: Vec<f64> = s.values.iter().map(|v| v.re).collect();
    let first = first_local_max(&raw).unwrap();
    let second = (first + 1..raw.len() - 1)
        .find(|&i| raw[i] > raw[i - 1] && raw[i] >= raw[i + 1])
        .unwrap();
    let first_max = s.tau[first] * ep;
    let period = (s.tau[second] - s.tau[first]) * ep;
    let position_ok = (first_max / oracle - 1.0).abs() <= 0.05;
    let period_ok = (period / (2.0 * PI) - 1.0).abs() <= 0.05;
    notes.push(format!(
        "kappa = E_J'/50: first G2 max at tau*E_J' = {first_max:.4}, two-level oracle {oracle:.4} (+/- 5%), \
         stated 2*pi = {:.4} {}, spacing to next max {period:.4} vs 2*pi (+/- 5%)",
        2.0 * PI,
        if (first_max / (2.0 * PI) - 1.0).abs() <= 0.05 { "matches" } else { "does not match" }
    ));

    let elapsed = started.elapsed();
    notes.push(format!("{:.2} s (< 30 s)", elapsed.as_secs_f64()));
    verdict(
        7,
        g2_zero <= 1e-12 && contrast_ok && position_ok && period_ok && elapsed < Duration::from_secs(30),
        &notes.join("; "),
    );
}

/// `⟨g_h e_c|H|e_h g_c⟩`, the exchange amplitude within the
/// single-excitation pair.
fn base_two_level_coupling(p: &EngineParams) -> C64 {
    let ops = qengine::OperatorSet::new(p);
    ops.hamiltonian[(1, 2)]
}

#[test]
fn criterion_08_resolvent_matches_quadrature() {
    let base = baseline();
    let mut worst = 0.0f64;
    let mut count = 0;
    for kappa in fluctuation_kappas(&base).into_iter().chain([base.kappa_h]) {
        let p = base.with_kappa(kappa);
        let m = EngineModel::new(p).unwrap();
        let l = &m.liouvillian;
        let rho = m.steady_state().unwrap();
        let mut correlators: Vec<Correlator<'_>> = StrokePanel::ALL.iter().map(|s| s.correlator(&m.ops)).collect();
        correlators.push(Correlator::TwoPoint {
            x: &m.ops.current_op,
            y: &m.ops.current_op,
        });
        for corr in correlators {
            let a = integrate_correlation(l, rho, corr, true).unwrap();
            let b = integrate_correlation_quadrature(l, rho, corr, true).unwrap();
            let scale = a.norm().max(b.norm());
            if scale > 0.0 {
                worst = worst.max((a - b).norm() / scale);
            }
            count += 1;
        }
    }
    verdict(
        8,
        worst <= 1e-6,
        &format!("{count} integrals, worst relative gap {worst:.2e} (<= 1e-6, quadrature to 50/gap)"),
    );
}

#[test]
fn criterion_09_unraveling_matches_master_equation() {
    let p = baseline();
    let m = EngineModel::new(p).unwrap();
    let mut psi0 = [C64::new(0.0, 0.0); 4];
    psi0[2] = C64::new(1.0, 0.0);
    let times: Vec<f64> = (0..=10).map(|i| i as f64 * 2.0 / p.kappa_h).collect();
    let averaged = ensemble_average_state(&p, &psi0, &times, TRAJECTORIES, 77, default_dt(&p).unwrap()).unwrap();
    let start = DensityMatrix::pure(&psi0);
    let mut worst = 0.0f64;
    for (t, avg) in times.iter().zip(&averaged) {
        let exact = m.liouvillian.propagate(&start, *t).unwrap();
        worst = worst.max(avg.trace_distance(&exact).unwrap());
    }
    let bound = 5.0 / (TRAJECTORIES as f64).sqrt();
    verdict(
        9,
        worst < bound,
        &format!("{} times up to 20/kappa from |e_h g_c>, worst trace distance {worst:.4} (< {bound})", times.len()),
    );
}

fn config_file(dir: &Path) -> PathBuf {
    let path = dir.join("engine.cfg");
    fs::write(
        &path,
        "frequency_convention = cycles\nomega_h = 13.5\nomega_c = 3.0\nE_J = 0.3\nlambda_h = pi/4\nlambda_c = pi/4\n\
         kappa_h = 0.151\nkappa_c = 0.151\nn_h = 1.5\nn_c = 0\n",
    )
    .unwrap();
    path
}

fn run_all_commands(config: &Path, out: &Path) {
    let common = |name: &str| Common {
        config: config.to_path_buf(),
        out: out.join(name),
        convention: None,
        cross_check: true,
    };
    commands::cmd_steady(&Setup::load(&common("steady")).unwrap()).unwrap();
    commands::cmd_sweep(&Setup::load(&common("sweep")).unwrap(), &[], false).unwrap();
    commands::cmd_correlate(&Setup::load(&common("correlate")).unwrap(), "all", None, 30.0, 300).unwrap();
    let opts = TrajectoryOptions {
        n: 200,
        t: Some(50.0),
        dt: None,
        seed: 42,
        dump_jumps: true,
    };
    commands::cmd_trajectories(&Setup::load(&common("trajectories")).unwrap(), &opts).unwrap();
}

/// Every file below `root` as (relative path, bytes), sorted.
fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in fs::read_dir(root).unwrap() {
        let sub = sub.unwrap().path();
        for f in fs::read_dir(&sub).unwrap() {
            let f = f.unwrap().path();
            let name = f.strip_prefix(root).unwrap().display().to_string();
            files.push((name, fs::read(&f).unwrap()));
        }
    }
    files.sort();
    files
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_all_commands(&config, &a);
    run_all_commands(&config, &b);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        assert_eq!(na, nb);
        if na.ends_with(MANIFEST_NAME) {
            // wall-clock differs; the recorded checksums must not
            let ma: RunManifest = serde_json::from_slice(ba).unwrap();
            let mb: RunManifest = serde_json::from_slice(bb).unwrap();
            if ma.outputs != mb.outputs || ma.seeds != mb.seeds || ma.config != mb.config {
                mismatched.push(na.clone());
            }
        } else if ba != bb {
            mismatched.push(na.clone());
        }
        compared += 1;
    }
    let same_listing = sa.len() == sb.len();

    let p = baseline();
    let axes = default_axes(&p);
    let serial = sweep_with(&p, &axes, Execution::Serial).unwrap();
    let parallel = pool(4).install(|| sweep_with(&p, &axes, Execution::Parallel).unwrap());
    let grid_json = |g: &SweepGrid| -> Vec<String> {
        g.cells
            .iter()
            .map(|c| match &c.report {
                Ok(r) => serde_json::to_string(r).unwrap(),
                Err(e) => e.to_string(),
            })
            .collect()
    };
    let grids_equal = grid_json(&serial) == grid_json(&parallel);

    let dt = default_dt(&p).unwrap();
    let one = pool(1).install(|| ensemble_counts(&p, 40.0, 64, 9, dt).unwrap());
    let four = pool(4).install(|| ensemble_counts(&p, 40.0, 64, 9, dt).unwrap());
    let ensembles_equal = one == four;

    verdict(
        10,
        same_listing && mismatched.is_empty() && grids_equal && ensembles_equal,
        &format!(
            "{compared} output files across two runs, mismatched {mismatched:?}; serial vs parallel sweep grids equal: {grids_equal}; \
             1 vs 4 worker ensembles equal: {ensembles_equal}"
        ),
    );
}
