//! One function per subcommand. Each writes its outputs and returns whether
//! the command's validation criterion passed.

use std::path::Path;

use liouville_core::algebra::{self, CouplingMatrix, Gamma1Report, H1Report, H2Report, RhoVector};
use liouville_core::bubbling::{self, BubbleScenario, LeadingTermReport, LocationSolution, ScenarioOptions, TorusGeometry};
use liouville_core::fit::{order_fit, OrderFit};
use liouville_core::linearized::{self, ModeSystem, Mode1Decay, UniquenessReport};
use liouville_core::radial::{self, CConstants, DecayFit, EnergySummary, PohozaevDecay, RadialOptions, RadialProfile};
use liouville_core::table::CsvTable;
use liouville_core::torus_green::{tail_coefficient, TailCoefficientInput, TailCoefficientReport, TorusGreen};
use liouville_core::exec;
use serde::Serialize;

use crate::config::{self, MatrixConfig, ProfileConfig, ProfileOverrides, ScenarioConfig, SeriesConfig, TorusConfig, P2};
use crate::error::CliError;
use crate::output::Output;

/// Pohozaev residual accepted by `solve-entire` and `pohozaev-check`.
pub const POHOZAEV_ACCEPT: f64 = 1e-4;
/// Slack allowed above `−(m − 2)` for the fitted finite-R decay.
pub const DECAY_SLACK: f64 = 0.2;
/// Known-kernel residual accepted by `kernel`.
pub const KERNEL_ACCEPT: f64 = 1e-6;
/// Ewald-independence tolerance of `green-torus`.
pub const EWALD_ACCEPT: f64 = 1e-10;

// ---------------------------------------------------------------- check-matrix

#[derive(Serialize)]
struct MatrixReport {
    n: usize,
    h1: H1Report,
    h1_holds: bool,
    h2: Option<H2Report>,
    h2_holds: Option<bool>,
    condition_number: f64,
    q: Option<Vec<f64>>,
    q_over_pi: Option<Vec<f64>>,
    q_error: Option<String>,
    gamma1: Option<Gamma1Report>,
}

pub fn check_matrix(path: Option<&Path>, out: &Output) -> Result<bool, CliError> {
    let cfg = config::load::<MatrixConfig>(path)?.resolve()?;
    let a = CouplingMatrix::from_rows(&cfg.matrix)?;
    let h1 = algebra::check_h1(&a);
    let h2 = algebra::check_h2(&a).ok();
    let (q, q_error) = match algebra::find_q(&a) {
        Ok(q) => (Some(q.values().to_vec()), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let gamma1 = match &cfg.rho {
        Some(r) => {
            let rho = RhoVector::new(r.clone())?;
            Some(algebra::gamma1_report(&a, &rho, algebra::default_gamma1_tolerance(&rho))?)
        }
        None => None,
    };
    let report = MatrixReport {
        n: a.n(),
        h1,
        h1_holds: h1.holds(),
        h2_holds: h2.map(|h| h.holds()),
        h2,
        condition_number: a.condition_number(),
        q_over_pi: q.as_ref().map(|q| q.iter().map(|v| v / std::f64::consts::PI).collect()),
        q,
        q_error,
        gamma1,
    };
    let passed = report.h1_holds;
    out.json("check-matrix", "check-matrix", passed, &cfg, &report)?;
    Ok(passed)
}

// ------------------------------------------------------------- profile helpers

fn load_profile_config(path: Option<&Path>, o: ProfileOverrides) -> Result<ProfileConfig, CliError> {
    config::load::<ProfileConfig>(path)?.resolve(o)
}

fn build_profile(cfg: &ProfileConfig) -> Result<RadialProfile, CliError> {
    let a = CouplingMatrix::from_rows(cfg.matrix.as_ref().expect("resolved"))?;
    let h = cfg.h.as_ref().expect("resolved");
    let opts = RadialOptions::default()
        .with_r_max(cfg.r_max.expect("resolved"))
        .with_tol(cfg.tol.expect("resolved"));
    let p = match &cfg.target_sigma {
        Some(t) => radial::shoot_for_energies(&a, h, t, cfg.shoot_tol.expect("resolved"), opts)?,
        None => radial::integrate_entire(&a, h, cfg.u0.as_ref().expect("resolved"), opts)?,
    };
    Ok(p)
}

// ---------------------------------------------------------------- solve-entire

#[derive(Serialize)]
struct SolveReport {
    mode: &'static str,
    center: Vec<f64>,
    summary: EnergySummary,
    c_routes: CConstants,
    decay: DecayFit,
    grid_points: usize,
    max_local_error: f64,
    invariants: Result<(), String>,
}

pub fn solve_entire(path: Option<&Path>, o: ProfileOverrides, out: &Output) -> Result<bool, CliError> {
    let cfg = load_profile_config(path, o)?;
    let p = build_profile(&cfg)?;
    let summary = radial::energy_total(&p)?;
    let report = SolveReport {
        mode: if cfg.target_sigma.is_some() { "shoot" } else { "integrate" },
        center: p.center().to_vec(),
        c_routes: radial::c_constants(&p)?,
        decay: radial::decay_fit(&p)?,
        grid_points: p.len(),
        max_local_error: p.max_local_error(),
        invariants: p.check_invariants(),
        summary,
    };
    let passed = report.summary.pohozaev_residual.abs() <= POHOZAEV_ACCEPT;
    out.csv("profile", &p.to_csv())?;
    out.json("solve-entire", "solve-entire", passed, &cfg, &report)?;
    Ok(passed)
}

// -------------------------------------------------------------- pohozaev-check

#[derive(Serialize)]
struct PohozaevReport {
    sigma: Vec<f64>,
    masses: Vec<f64>,
    pohozaev_residual: f64,
    decay: PohozaevDecay,
    residual_ok: bool,
    decay_ok: bool,
}

pub fn pohozaev_check(path: Option<&Path>, o: ProfileOverrides, out: &Output) -> Result<bool, CliError> {
    let cfg = load_profile_config(path, o)?;
    let p = build_profile(&cfg)?;
    let summary = radial::energy_total(&p)?;
    let decay = radial::pohozaev_decay(&p, &summary)?;
    let report = PohozaevReport {
        residual_ok: summary.pohozaev_residual.abs() <= POHOZAEV_ACCEPT,
        decay_ok: decay.exponent <= decay.bound + DECAY_SLACK,
        sigma: summary.sigma.clone(),
        masses: summary.l_direct.clone(),
        pohozaev_residual: summary.pohozaev_residual,
        decay,
    };
    let mut t = CsvTable::new(&["r", "residual"]);
    for (r, v) in &report.decay.series {
        t.row(&[*r, *v]);
    }
    let passed = report.residual_ok && report.decay_ok;
    out.csv("pohozaev-series", &t.finish())?;
    out.json("pohozaev-check", "pohozaev-check", passed, &cfg, &report)?;
    Ok(passed)
}

// ---------------------------------------------------------------------- kernel

#[derive(Serialize)]
struct KernelSummary {
    residual: f64,
    check_radius: f64,
    endpoint: Vec<f64>,
    decay: Option<Mode1Decay>,
}

#[derive(Serialize)]
struct KernelReport {
    sigma: Vec<f64>,
    masses: Vec<f64>,
    modes: Vec<UniquenessReport>,
    dimensions: Vec<usize>,
    mode0_kernel: KernelSummary,
    mode1_kernel: Option<KernelSummary>,
    dimensions_ok: bool,
    residuals_ok: bool,
}

pub fn kernel(path: Option<&Path>, o: ProfileOverrides, out: &Output) -> Result<bool, CliError> {
    let cfg = load_profile_config(path, o)?;
    let p = build_profile(&cfg)?;
    let summary = radial::energy_total(&p)?;
    let max_mode = cfg.max_mode.expect("resolved");
    let ells: Vec<u32> = (0..=max_mode).collect();
    let modes = exec::map(&ells, |&ell| linearized::uniqueness_probe(&ModeSystem::new(&p, ell), p.r_max()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let dimensions: Vec<usize> = modes.iter().map(|m| m.bounded_dimension).collect();
    let dimensions_ok = dimensions.iter().enumerate().all(|(ell, &d)| match ell {
        0 => d >= 1,
        1 => d == 1,
        _ => d == 0,
    });

    let k0 = linearized::known_kernel_mode0(&p)?;
    out.csv("kernel-mode0", &k0.solution.to_csv())?;
    let mode0_kernel = KernelSummary { residual: k0.residual, check_radius: k0.check_radius, endpoint: k0.endpoint, decay: None };
    let mode1_kernel = if max_mode >= 1 {
        let k1 = linearized::known_kernel_mode1(&p)?;
        let decay = linearized::decay_check_mode1(&k1.solution)?;
        out.csv("kernel-mode1", &k1.solution.to_csv())?;
        Some(KernelSummary { residual: k1.residual, check_radius: k1.check_radius, endpoint: k1.endpoint, decay: Some(decay) })
    } else {
        None
    };
    let residuals_ok = mode0_kernel.residual <= KERNEL_ACCEPT
        && mode1_kernel.as_ref().is_none_or(|k| k.residual <= KERNEL_ACCEPT);
    let report = KernelReport {
        sigma: summary.sigma,
        masses: summary.l_direct,
        modes,
        dimensions,
        mode0_kernel,
        mode1_kernel,
        dimensions_ok,
        residuals_ok,
    };
    let passed = dimensions_ok && residuals_ok;
    out.json("kernel", "kernel", passed, &cfg, &report)?;
    Ok(passed)
}

// ----------------------------------------------------------------- green-torus

#[derive(Serialize)]
struct PairEvaluation {
    x: P2,
    y: P2,
    /// Absent when the points coincide modulo the lattice.
    green: Option<f64>,
    gamma: f64,
    grad_gamma: P2,
}

#[derive(Serialize)]
struct TorusReport {
    dual: [P2; 2],
    gamma_diagonal: f64,
    grad1_gamma: P2,
    ewald_alternate_alpha: f64,
    ewald_max_difference: f64,
    pairs: Vec<PairEvaluation>,
    tail: Vec<TailCoefficientReport>,
}

pub fn green_torus(path: Option<&Path>, out: &Output) -> Result<bool, CliError> {
    let cfg = config::load::<TorusConfig>(path)?.resolve()?;
    let [a1, a2] = cfg.lattice.expect("resolved");
    let alpha = cfg.alpha.expect("resolved");
    let tg = TorusGreen::with_alpha(a1, a2, alpha)?;
    let alt = TorusGreen::with_alpha(a1, a2, 2.0 * alpha)?;
    let mut ewald = (tg.gamma_diagonal() - alt.gamma_diagonal()).abs();
    let mut pairs = Vec::with_capacity(cfg.pairs.len());
    for &[x, y] in &cfg.pairs {
        let green = tg.green(x, y).ok();
        if let (Some(g), Ok(g2)) = (green, alt.green(x, y)) {
            ewald = ewald.max((g - g2).abs());
        }
        ewald = ewald.max((tg.gamma_reg(x, y) - alt.gamma_reg(x, y)).abs());
        pairs.push(PairEvaluation { x, y, green, gamma: tg.gamma_reg(x, y), grad_gamma: tg.grad_gamma(x, y) });
    }
    let tail = match &cfg.tail {
        Some(t) => {
            let h = t.h.clone().expect("resolved");
            t.m.iter()
                .map(|&m| tail_coefficient(&TailCoefficientInput::new(m, t.p, h.clone()), &tg))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => Vec::new(),
    };
    let (b1, b2) = tg.dual();
    let report = TorusReport {
        dual: [b1, b2],
        gamma_diagonal: tg.gamma_diagonal(),
        grad1_gamma: tg.grad1_gamma([0.0, 0.0]),
        ewald_alternate_alpha: 2.0 * alpha,
        ewald_max_difference: ewald,
        pairs,
        tail,
    };
    let passed = report.ewald_max_difference <= EWALD_ACCEPT;
    out.json("green-torus", "green-torus", passed, &cfg, &report)?;
    Ok(passed)
}

// ---------------------------------------------------------------- leading-term

#[derive(Serialize)]
struct LeadingTermOutput {
    report: LeadingTermReport,
    location: Option<LocationSolution>,
    rho_sequence_checked: bool,
}

pub fn leading_term(
    path: &Path,
    eps: Option<Vec<f64>>,
    r_max: Option<f64>,
    out: &Output,
) -> Result<bool, CliError> {
    let cfg = config::load::<ScenarioConfig>(Some(path))?.resolve(eps, r_max)?;
    let a = CouplingMatrix::from_rows(&cfg.matrix)?;
    let rho = RhoVector::new(cfg.rho.clone().expect("resolved"))?;
    let [a1, a2] = cfg.lattice.expect("resolved");
    let tg = TorusGreen::with_alpha(a1, a2, cfg.alpha.expect("resolved"))?;
    let geometry = TorusGeometry::new(tg, cfg.h.clone().expect("resolved"), cfg.p)
        .with_curvature(cfg.curvature.expect("resolved"));
    let options = ScenarioOptions {
        radial: RadialOptions::default()
            .with_r_max(cfg.r_max.expect("resolved"))
            .with_tol(cfg.tol.expect("resolved")),
        shoot_tol: cfg.shoot_tol.expect("resolved"),
        ..ScenarioOptions::default()
    };
    let sc = BubbleScenario::new(a, rho, geometry, cfg.eps_list.clone().expect("resolved"), options)?;
    eprintln!("regime: {:?} (masses {:?}, minimal set {:?})", sc.regime(), sc.masses(), sc.minimal_set());
    if let Some(seq) = &cfg.rho_sequence {
        sc.check_rho_sequence(seq)?;
    }
    let report = bubbling::scenario_report(&sc)?;
    let location = cfg.seed.map(|s| bubbling::location_solve(&sc, s)).transpose()?;
    let name = cfg.name.clone().expect("resolved");
    out.csv(&format!("{name}-series"), &report.series_csv())?;
    let doc = LeadingTermOutput { report, location, rho_sequence_checked: cfg.rho_sequence.is_some() };
    out.json(&name, "leading-term", true, &cfg, &doc)?;
    Ok(true)
}

// ------------------------------------------------------------------- order-fit

#[derive(Serialize)]
struct OrderFitOutput {
    series: Vec<P2>,
    fit: OrderFit,
}

fn read_series_csv(path: &Path) -> Result<Vec<P2>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut series = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let field = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Config(format!("{}: row {} needs two numeric columns", path.display(), line + 1)))
        };
        series.push([field(0)?, field(1)?]);
    }
    Ok(series)
}

pub fn order_fit_cmd(
    config_path: Option<&Path>,
    input: Option<&Path>,
    log_correction: bool,
    out: &Output,
) -> Result<bool, CliError> {
    let mut cfg = config::load::<SeriesConfig>(config_path)?;
    if let Some(csv) = input {
        cfg.series = read_series_csv(csv)?;
    }
    cfg.log_correction |= log_correction;
    let pairs: Vec<(f64, f64)> = cfg.series.iter().map(|p| (p[0], p[1])).collect();
    let fit = order_fit(&pairs, cfg.log_correction)?;
    if fit.sign_change {
        eprintln!("warning: the series changes sign; fitted |value|");
    }
    let doc = OrderFitOutput { series: cfg.series.clone(), fit };
    out.json("order-fit", "order-fit", true, &cfg, &doc)?;
    Ok(true)
}
