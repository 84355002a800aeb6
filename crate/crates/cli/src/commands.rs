use chern_interferometer::analysis::{detect, robustness_sweep, FringeFit};
use chern_interferometer::lattice::{bloch_components, Band};
use chern_interferometer::protocol::{plan_site_with, validate_plan, ProtocolStep, Site};
use chern_interferometer::sim::{phi_mw_grid, run_fringe, PhaseLedger, TdseDiagnostics};
use chern_interferometer::topology::{berry_curvature_fhs, chern_from_field, chern_from_zak, converged_zak, Closure};
use chern_interferometer::{ModelParams, Vec2};
use serde::Serialize;

use crate::{num, record, CliError, Output, RunConfig, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Band energies along Γ–K–M–K′–Γ.
    Bands,
    /// Plaquette Berry flux over the Brillouin zone.
    Curvature,
    /// Chern number of the lower band.
    Chern,
    /// Open-path geometric phases of the site trajectories.
    Zak,
    /// Pulse and force sequences with validation diagnostics.
    Protocol,
    /// Simulated fringes for the configured sites.
    Fringe,
    /// Full detection pipeline for both sites.
    Detect,
    /// Endpoint-error robustness sweep.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Curvature => "curvature",
            Command::Chern => "chern",
            Command::Zak => "zak",
            Command::Protocol => "protocol",
            Command::Fringe => "fringe",
            Command::Detect => "detect",
            Command::Sweep => "sweep",
        }
    }
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<Output, CliError> {
    let p = cfg.model_params()?;
    let (record, table, extra) = match cmd {
        Command::Bands => bands(cfg, &p)?,
        Command::Curvature => curvature(cfg, &p)?,
        Command::Chern => chern(cfg, &p)?,
        Command::Zak => zak(cfg, &p)?,
        Command::Protocol => protocol(cfg, &p)?,
        Command::Fringe => fringe(cfg, &p)?,
        Command::Detect => detect_cmd(cfg, &p)?,
        Command::Sweep => sweep(cfg, &p)?,
    };
    Ok(Output { command: cmd.name().to_string(), record, table, extra })
}

type Parts = (String, Table, Vec<Table>);

fn bands(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    let g = &p.geometry;
    // K' here is the corner adjacent to K; M is the centre of their shared edge.
    let kp_adj = Vec2::new(g.k.x / 2.0, g.b1.y / 2.0);
    let m = g.k.lerp(kp_adj, 0.5);
    let corners = [("G", Vec2::zero()), ("K", g.k), ("M", m), ("K'", kp_adj), ("G", Vec2::zero())];
    let n = cfg.oracle.band_points.max(2);
    let mut table = Table::new("bands", &["s", "kx", "ky", "e_lower", "e_upper", "gap", "label"]);
    let mut s = 0.0;
    let mut min_gap = f64::INFINITY;
    for (seg, w) in corners.windows(2).enumerate() {
        let (a, b) = (w[0].1, w[1].1);
        let len = (b - a).norm();
        let first = if seg == 0 { 0 } else { 1 };
        for j in first..=n {
            let f = j as f64 / n as f64;
            let k = a.lerp(b, f);
            let h = bloch_components(k, p);
            let d = h.magnitude();
            min_gap = min_gap.min(2.0 * d);
            let label = if j == 0 { w[0].0 } else if j == n { w[1].0 } else { "" };
            table.push(vec![
                num(s + f * len),
                num(k.x),
                num(k.y),
                num(h.h0 - d),
                num(h.h0 + d),
                num(2.0 * d),
                label.to_string(),
            ]);
        }
        s += len;
    }
    #[derive(Serialize)]
    struct R {
        points: usize,
        path_length: f64,
        min_gap_on_path: f64,
    }
    let rec = record("bands", cfg, R { points: table.rows.len(), path_length: s, min_gap_on_path: min_gap })?;
    Ok((rec, table, vec![]))
}

fn curvature(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    let field = berry_curvature_fhs(p, cfg.oracle.grid, Band::Lower)?;
    let cell = p.geometry.bz_area() / (field.n * field.n) as f64;
    let mut table = Table::new("curvature", &["kx", "ky", "flux", "density"]);
    for (k, f) in field.rows() {
        table.push(vec![num(k.x), num(k.y), num(f), num(f / cell)]);
    }
    #[derive(Serialize)]
    struct R {
        n: usize,
        band: Band,
        total_flux: f64,
        chern_estimate: f64,
        max_abs_plaquette_flux: f64,
    }
    let rec = record(
        "curvature",
        cfg,
        R {
            n: field.n,
            band: field.band,
            total_flux: field.total,
            chern_estimate: field.chern_estimate(),
            max_abs_plaquette_flux: field.plaquette_flux.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        },
    )?;
    Ok((rec, table, vec![]))
}

fn chern(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    let field = berry_curvature_fhs(p, cfg.oracle.grid, Band::Lower)?;
    let c = chern_from_field(&field)?;
    let mut table = Table::new("chern", &["n", "value", "residual", "total_flux"]);
    table.push(vec![c.n.to_string(), c.value.to_string(), num(c.residual), num(c.total)]);
    let rec = record("chern", cfg, c)?;
    Ok((rec, table, vec![]))
}

fn zak(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    #[derive(Serialize)]
    struct SitePhase {
        site: Site,
        closure: Closure,
        phase: f64,
        points_per_leg: usize,
    }
    #[derive(Serialize)]
    struct R {
        sites: Vec<SitePhase>,
        #[serde(skip_serializing_if = "Option::is_none")]
        c_estimate_geodesic: Option<f64>,
    }
    let mut table = Table::new("zak", &["site", "closure", "phase", "points_per_leg"]);
    let mut sites = Vec::new();
    let mut geodesic = Vec::new();
    for &site in &cfg.protocol.sites {
        let plan = plan_site_with(site, p, &cfg.plan_options())?;
        for closure in [Closure::Geodesic, Closure::Sublattice] {
            let (phase, n) = converged_zak(
                p,
                |n| plan.zak_path(&p.geometry, n),
                Band::Lower,
                closure,
                cfg.simulation.points_per_leg,
                1e-3,
                4,
            )?;
            if closure == Closure::Geodesic {
                geodesic.push(phase);
            }
            table.push(vec![site.to_string(), closure_name(closure).into(), num(phase), n.to_string()]);
            sites.push(SitePhase { site, closure, phase, points_per_leg: n });
        }
    }
    let c = (geodesic.len() == 2).then(|| chern_from_zak(geodesic[0], geodesic[1]));
    let rec = record("zak", cfg, R { sites, c_estimate_geodesic: c })?;
    Ok((rec, table, vec![]))
}

fn closure_name(c: Closure) -> &'static str {
    match c {
        Closure::Geodesic => "geodesic",
        Closure::Sublattice => "sublattice",
    }
}

fn protocol(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    #[derive(Serialize)]
    struct SitePlan {
        plan: chern_interferometer::protocol::ProtocolPlan<f64>,
        diagnostics: chern_interferometer::protocol::PlanDiagnostics<f64>,
    }
    #[derive(Serialize)]
    struct R {
        sites: Vec<SitePlan>,
    }
    let mut table = Table::new(
        "protocol",
        &["site", "index", "kind", "duration", "lattice_fx", "lattice_fy", "gradient_fx", "gradient_fy", "flip", "phi_mw"],
    );
    let mut sites = Vec::new();
    for &site in &cfg.protocol.sites {
        let plan = plan_site_with(site, p, &cfg.plan_options())?;
        let diagnostics = validate_plan(&plan, p)?;
        for (i, step) in plan.steps.iter().enumerate() {
            let e = String::new;
            let row = match *step {
                ProtocolStep::Transport { duration, velocity } => {
                    vec!["transport".into(), num(duration), num(-velocity.x), num(-velocity.y), e(), e(), e(), e()]
                }
                ProtocolStep::Pi2Pulse { phi_mw } => vec!["pi2_pulse".into(), e(), e(), e(), e(), e(), e(), num(phi_mw)],
                ProtocolStep::PiPulse => vec!["pi_pulse".into(), e(), e(), e(), e(), e(), e(), e()],
                ProtocolStep::ForceLeg { duration, force, gradient_direction_flip } => vec![
                    "force_leg".into(),
                    num(duration),
                    num(force.lattice_force.x),
                    num(force.lattice_force.y),
                    num(force.gradient_force.x),
                    num(force.gradient_force.y),
                    gradient_direction_flip.to_string(),
                    e(),
                ],
            };
            let mut full = vec![site.to_string(), i.to_string()];
            full.extend(row);
            table.push(full);
        }
        sites.push(SitePlan { plan, diagnostics });
    }
    let rec = record("protocol", cfg, R { sites })?;
    Ok((rec, table, vec![]))
}

#[derive(Serialize)]
struct SiteFringe {
    site: Site,
    fit: FringeFit<f64>,
    interference_phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ledger: Option<PhaseLedger<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tdse: Option<TdseDiagnostics<f64>>,
}

fn fringe(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    #[derive(Serialize)]
    struct R {
        mode: chern_interferometer::sim::Mode,
        sites: Vec<SiteFringe>,
    }
    let grid = phi_mw_grid(cfg.scan.phi_mw_points);
    let mut table = Table::new("fringe", &["site", "phi_mw", "n_down", "n_up"]);
    let mut sites = Vec::new();
    for &site in &cfg.protocol.sites {
        let plan = plan_site_with(site, p, &cfg.plan_options())?;
        let run = run_fringe(p, &plan, &grid, &cfg.sim_options())?;
        for (m, d, u) in run.scan.rows() {
            table.push(vec![site.to_string(), num(m), num(d), num(u)]);
        }
        let fit = chern_interferometer::analysis::fit_fringe(&run.scan)?;
        sites.push(SiteFringe { site, fit, interference_phase: run.phase, ledger: run.ledger, tdse: run.tdse });
    }
    let rec = record("fringe", cfg, R { mode: cfg.simulation.mode, sites })?;
    Ok((rec, table, vec![]))
}

fn detect_cmd(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    #[derive(Serialize)]
    struct R {
        report: chern_interferometer::analysis::ChernReport<f64>,
        agrees_with_oracle: bool,
        sites: Vec<SiteFringe>,
    }
    let det = detect(p, &cfg.detect_options())?;
    let mut table = Table::new("detect", &["site", "phi_zak", "contrast", "rms_residual"]);
    let mut sites = Vec::new();
    for (i, site) in Site::BOTH.into_iter().enumerate() {
        let f = det.fits[i];
        table.push(vec![site.to_string(), num(f.phi_zak), num(f.contrast), num(f.rms_residual)]);
        let run = &det.runs[i];
        sites.push(SiteFringe { site, fit: f, interference_phase: run.phase, ledger: run.ledger, tdse: run.tdse });
    }
    let agrees = det.report.c_classified.value().is_some() && det.report.c_classified.value() == det.report.oracle_c;
    let rec = record("detect", cfg, R { report: det.report, agrees_with_oracle: agrees, sites })?;
    Ok((rec, table, vec![]))
}

fn sweep(cfg: &RunConfig, p: &ModelParams) -> Result<Parts, CliError> {
    let t = robustness_sweep(p, &cfg.sweep_options())?;
    let mut rows = Table::new(
        "sweep",
        &[
            "radius",
            "trials",
            "success_rate",
            "ambiguous",
            "max_zak_error",
            "mean_zak_error",
            "max_zak_error_nominal",
            "qualifying",
            "qualifying_successes",
            "mean_n_up_at_zero",
            "mean_n_up_at_nominal",
            "frac_n_up_at_zero_above",
        ],
    );
    for r in &t.rows {
        rows.push(vec![
            num(r.radius),
            r.trials.to_string(),
            num(r.success_rate),
            r.ambiguous.to_string(),
            num(r.max_zak_error),
            num(r.mean_zak_error),
            num(r.max_zak_error_nominal),
            r.qualifying.to_string(),
            r.qualifying_successes.to_string(),
            num(r.mean_n_up_at_zero),
            num(r.mean_n_up_at_nominal),
            num(r.frac_n_up_at_zero_above),
        ]);
    }
    let mut trials = Table::new(
        "sweep_trials",
        &["radius", "trial", "phi_i", "phi_ii", "zak_error", "zak_error_nominal", "c_estimate", "classification", "success"],
    );
    for r in &t.records {
        trials.push(vec![
            num(r.radius),
            r.trial.to_string(),
            num(r.phi_i),
            num(r.phi_ii),
            num(r.zak_error),
            num(r.zak_error_nominal),
            num(r.c_estimate),
            r.classification.to_string(),
            r.success.to_string(),
        ]);
    }
    #[derive(Serialize)]
    struct R {
        oracle_c: i32,
        nominal_phases: [f64; 2],
        rows: Vec<chern_interferometer::analysis::SweepRow<f64>>,
    }
    let rec = record("sweep", cfg, R { oracle_c: t.oracle_c, nominal_phases: t.nominal, rows: t.rows })?;
    Ok((rec, rows, vec![trials]))
}
