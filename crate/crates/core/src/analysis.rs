//! Fringe fitting, Chern classification and robustness sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{eigensystem, ModelParams};
use crate::protocol::{perturb_plan, plan_site_with, random_endpoint_errors, PlanOptions, ProtocolPlan, Site};
use crate::scalar::{wrap_phase, Real};
use crate::sim::{phi_mw_grid, run_fringe, FringeRun, FringeScan, SimOptions};
use crate::topology::{chern_from_zak, chern_number};

/// Half-width, in units of `C`, of the window around an integer that
/// counts as a classification.
pub const CLASSIFY_TOL: f64 = 0.25;

pub const MIN_FRINGE_POINTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct FringeFit<T> {
    pub phi_zak: T,
    pub contrast: T,
    pub rms_residual: T,
}

impl<T: Real> FringeFit<T> {
    /// Fitted `N_↑` at `phi_mw`.
    pub fn n_up(&self, phi_mw: T) -> T {
        T::lit(0.5) * (T::one() - self.contrast * (self.phi_zak - phi_mw).cos())
    }
}

/// Least-squares fit of `N_↑ = ½[1 − c·cos(φ − φ_MW)]`.
///
/// Linear in `(A, B)` after writing `N_↑ − ½ = A cos φ_MW + B sin φ_MW`.
pub fn fit_fringe<T: Real>(scan: &FringeScan<T>) -> Result<FringeFit<T>> {
    let m = scan.phi_mw_values.len();
    if m != scan.n_up.len() {
        return Err(Error::DegenerateScan("phase and population lists differ in length".into()));
    }
    let mut distinct: Vec<T> = scan.phi_mw_values.iter().map(|&x| crate::scalar::wrap_positive(x)).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup_by(|a, b| (*a - *b).abs() < T::lit(1e-12));
    if distinct.len() < MIN_FRINGE_POINTS {
        return Err(Error::DegenerateScan(format!(
            "{} distinct phases, need at least {MIN_FRINGE_POINTS}",
            distinct.len()
        )));
    }
    let half = T::lit(0.5);
    let (mut scc, mut sss, mut scs, mut syc, mut sys) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    let mean = scan.n_up.iter().copied().sum::<T>() / T::lit(m as f64);
    let var = scan.n_up.iter().map(|&y| (y - mean) * (y - mean)).sum::<T>();
    if !(var > T::lit(1e-24)) {
        return Err(Error::DegenerateScan("populations do not vary".into()));
    }
    for (&x, &y) in scan.phi_mw_values.iter().zip(&scan.n_up) {
        let (c, s) = (x.cos(), x.sin());
        let r = y - half;
        scc += c * c;
        sss += s * s;
        scs += c * s;
        syc += r * c;
        sys += r * s;
    }
    let det = scc * sss - scs * scs;
    if !(det.abs() > T::lit(1e-12) * (scc * sss).max(T::one())) {
        return Err(Error::DegenerateScan("phases do not resolve cos and sin".into()));
    }
    let a = (syc * sss - sys * scs) / det;
    let b = (sys * scc - syc * scs) / det;
    let phi = (-b).atan2(-a);
    let raw = T::lit(2.0) * a.hypot(b);
    let rss: T = scan
        .phi_mw_values
        .iter()
        .zip(&scan.n_up)
        .map(|(&x, &y)| {
            let d = y - (half + a * x.cos() + b * x.sin());
            d * d
        })
        .sum();
    Ok(FringeFit {
        phi_zak: wrap_phase(phi),
        contrast: raw.min(T::one()),
        rms_residual: (rss / T::lit(m as f64)).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Chern(i32),
    Ambiguous,
}

impl Classification {
    pub fn value(self) -> Option<i32> {
        match self {
            Classification::Chern(c) => Some(c),
            Classification::Ambiguous => None,
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Chern(c) => write!(f, "{c}"),
            Classification::Ambiguous => f.write_str("ambiguous"),
        }
    }
}

impl Serialize for Classification {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Classification {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "ambiguous" {
            return Ok(Classification::Ambiguous);
        }
        s.parse().map(Classification::Chern).map_err(serde::de::Error::custom)
    }
}

/// Fringe templates: `α_∓ = [1 − cos(π/2 ∓ φ_MW)]/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Fringe of a `+π/2` phase.
    AlphaMinus,
    /// Fringe of a `−π/2` phase.
    AlphaPlus,
    /// Phase at 0 or π, matching neither template.
    Indeterminate,
}

impl Pattern {
    pub fn from_phase<T: Real>(phi: T) -> Self {
        let s = phi.sin();
        if s.abs() < T::lit(1e-9) {
            Pattern::Indeterminate
        } else if s > T::zero() {
            Pattern::AlphaMinus
        } else {
            Pattern::AlphaPlus
        }
    }

    /// Template value at `phi_mw`.
    pub fn template<T: Real>(self, phi_mw: T) -> Option<T> {
        let half = T::lit(0.5);
        match self {
            Pattern::AlphaMinus => Some(half * (T::one() - (T::FRAC_PI_2() - phi_mw).cos())),
            Pattern::AlphaPlus => Some(half * (T::one() - (T::FRAC_PI_2() + phi_mw).cos())),
            Pattern::Indeterminate => None,
        }
    }
}

/// Chern number read from the pair of site patterns: equal patterns give
/// `±1`, opposite patterns give 0.
pub fn pattern_chern(patterns: [Pattern; 2]) -> Option<i32> {
    use Pattern::*;
    match patterns {
        [AlphaMinus, AlphaMinus] => Some(1),
        [AlphaPlus, AlphaPlus] => Some(-1),
        [AlphaMinus, AlphaPlus] | [AlphaPlus, AlphaMinus] => Some(0),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ChernReport<T> {
    pub phi_zak_i: T,
    pub phi_zak_ii: T,
    pub c_estimate: T,
    pub c_classified: Classification,
    pub patterns: [Pattern; 2],
    pub pattern_chern: Option<i32>,
    pub oracle_c: Option<i32>,
}

pub fn classify_phases<T: Real>(phi_i: T, phi_ii: T, oracle_c: Option<i32>) -> ChernReport<T> {
    let c = chern_from_zak(phi_i, phi_ii);
    let nearest = c.round();
    let c_classified = match nearest.to_i32() {
        Some(n) if (-1..=1).contains(&n) && (c - nearest).abs() <= T::lit(CLASSIFY_TOL) => Classification::Chern(n),
        _ => Classification::Ambiguous,
    };
    let patterns = [Pattern::from_phase(phi_i), Pattern::from_phase(phi_ii)];
    ChernReport {
        phi_zak_i: phi_i,
        phi_zak_ii: phi_ii,
        c_estimate: c,
        c_classified,
        patterns,
        pattern_chern: pattern_chern(patterns),
        oracle_c,
    }
}

pub fn classify<T: Real>(fit_i: &FringeFit<T>, fit_ii: &FringeFit<T>, oracle_c: Option<i32>) -> ChernReport<T> {
    classify_phases(fit_i.phi_zak, fit_ii.phi_zak, oracle_c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct DetectOptions<T> {
    pub plan: PlanOptions<T>,
    pub sim: SimOptions<T>,
    pub phi_mw_points: usize,
    /// FHS grid for the oracle comparison; `None` skips it.
    pub oracle_grid: Option<usize>,
}

impl<T: Real> Default for DetectOptions<T> {
    fn default() -> Self {
        DetectOptions {
            plan: PlanOptions::default(),
            sim: SimOptions::default(),
            phi_mw_points: 24,
            oracle_grid: Some(60),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Detection<T> {
    pub report: ChernReport<T>,
    pub fits: [FringeFit<T>; 2],
    pub runs: [FringeRun<T>; 2],
}

/// Runs both sites, fits their fringes and classifies the result.
pub fn detect<T: Real>(p: &ModelParams<T>, opts: &DetectOptions<T>) -> Result<Detection<T>> {
    let plans = [plan_site_with(Site::I, p, &opts.plan)?, plan_site_with(Site::II, p, &opts.plan)?];
    detect_plans(p, &plans, opts)
}

fn detect_plans<T: Real>(p: &ModelParams<T>, plans: &[ProtocolPlan<T>; 2], opts: &DetectOptions<T>) -> Result<Detection<T>> {
    let grid = phi_mw_grid(opts.phi_mw_points);
    let (a, b) = rayon::join(
        || run_fringe(p, &plans[0], &grid, &opts.sim),
        || run_fringe(p, &plans[1], &grid, &opts.sim),
    );
    let runs = [a?, b?];
    let fits = [fit_fringe(&runs[0].scan)?, fit_fringe(&runs[1].scan)?];
    let oracle_c = match opts.oracle_grid {
        Some(n) => Some(chern_number(p, n)?.value),
        None => None,
    };
    Ok(Detection { report: classify(&fits[0], &fits[1], oracle_c), fits, runs })
}

/// `|∫e_lower dt|` mismatch between the two branches of `plan`.
pub fn dynamic_phase_check<T: Real>(plan: &ProtocolPlan<T>, p: &ModelParams<T>, links: usize) -> Result<T> {
    let paths = plan.kpaths(&p.geometry, links)?;
    let mut phase = [T::zero(); 2];
    for (b, path) in paths.iter().enumerate() {
        let pts = path.points();
        let dt = plan.leg_time / T::lit((pts.len() - 1) as f64);
        let energies = pts.iter().map(|&k| eigensystem(k, p).map(|e| e.e_lower)).collect::<Result<Vec<_>>>()?;
        phase[b] = energies.windows(2).map(|w| (w[0] + w[1]) * T::lit(0.5) * dt).sum();
    }
    Ok((phase[0] - phase[1]).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SweepOptions<T> {
    pub radii: Vec<T>,
    pub trials: usize,
    pub seed: u64,
    pub detect: DetectOptions<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrialRecord<T> {
    pub radius: T,
    pub trial: usize,
    pub phi_i: T,
    pub phi_ii: T,
    /// Largest site deviation from the ideal value `sign(C)·π/2`.
    pub zak_error: T,
    /// Largest site deviation from the unperturbed simulated phase.
    pub zak_error_nominal: T,
    pub c_estimate: T,
    pub classification: Classification,
    pub success: bool,
    /// Fitted `N_↑` at `φ_MW = 0`, per site.
    pub n_up_at_zero: [T; 2],
    /// Fitted `N_↑` at `φ_MW` equal to the nominal phase, per site.
    pub n_up_at_nominal: [T; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SweepRow<T> {
    pub radius: T,
    pub trials: usize,
    pub success_rate: T,
    pub ambiguous: usize,
    pub max_zak_error: T,
    pub mean_zak_error: T,
    pub max_zak_error_nominal: T,
    /// Trials with `zak_error <= π/4`.
    pub qualifying: usize,
    pub qualifying_successes: usize,
    pub mean_n_up_at_zero: T,
    pub mean_n_up_at_nominal: T,
    /// Fraction of site readouts with `N_↑(φ_MW = 0) > 1/√2`.
    pub frac_n_up_at_zero_above: T,
}

impl<T: Real> SweepRow<T> {
    /// Success rate among qualifying trials; `None` when there are none.
    pub fn qualifying_success_rate(&self) -> Option<T> {
        (self.qualifying > 0).then(|| T::lit(self.qualifying_successes as f64) / T::lit(self.qualifying as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SweepTable<T> {
    pub oracle_c: i32,
    pub nominal: [T; 2],
    pub rows: Vec<SweepRow<T>>,
    pub records: Vec<TrialRecord<T>>,
}

/// Ideal site phase for Chern number `c`; `None` when `c = 0`.
fn ideal_phase<T: Real>(c: i32) -> Option<T> {
    match c.signum() {
        1 => Some(T::FRAC_PI_2()),
        -1 => Some(-T::FRAC_PI_2()),
        _ => None,
    }
}

/// Endpoint-error Monte Carlo. Trial `j` at radius index `r` draws its
/// errors from the ChaCha stream `(seed, r·2³² + j)`, so tables do not
/// depend on thread scheduling.
pub fn robustness_sweep<T: Real>(p: &ModelParams<T>, opts: &SweepOptions<T>) -> Result<SweepTable<T>> {
    if opts.trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let oracle_c = chern_number(p, opts.detect.oracle_grid.unwrap_or(60))?.value;
    let plans = [plan_site_with(Site::I, p, &opts.detect.plan)?, plan_site_with(Site::II, p, &opts.detect.plan)?];
    let mut nominal_opts = opts.detect.clone();
    nominal_opts.oracle_grid = None;
    let nominal_det = detect_plans(p, &plans, &nominal_opts)?;
    let nominal = [nominal_det.fits[0].phi_zak, nominal_det.fits[1].phi_zak];
    let ideal = match ideal_phase::<T>(oracle_c) {
        Some(x) => [x, x],
        None => [nominal[0].signum() * T::FRAC_PI_2(), nominal[1].signum() * T::FRAC_PI_2()],
    };
    let grid = phi_mw_grid::<T>(opts.detect.phi_mw_points);

    let jobs: Vec<(usize, usize)> =
        (0..opts.radii.len()).flat_map(|r| (0..opts.trials).map(move |j| (r, j))).collect();
    let records = jobs
        .par_iter()
        .map(|&(r, j)| -> Result<TrialRecord<T>> {
            let radius = opts.radii[r];
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(((r as u64) << 32) | j as u64);
            let mut phis = [T::zero(); 2];
            let mut at_zero = [T::zero(); 2];
            let mut at_nominal = [T::zero(); 2];
            for s in 0..2 {
                let errors = random_endpoint_errors(radius, &mut rng);
                let plan = perturb_plan(&plans[s], errors, &p.geometry)?;
                let run = run_fringe(p, &plan, &grid, &opts.detect.sim)?;
                let fit = fit_fringe(&run.scan)?;
                phis[s] = fit.phi_zak;
                at_zero[s] = fit.n_up(T::zero());
                at_nominal[s] = fit.n_up(nominal[s]);
            }
            let report = classify_phases(phis[0], phis[1], Some(oracle_c));
            let err = |target: [T; 2]| {
                wrap_phase(phis[0] - target[0]).abs().max(wrap_phase(phis[1] - target[1]).abs())
            };
            Ok(TrialRecord {
                radius,
                trial: j,
                phi_i: phis[0],
                phi_ii: phis[1],
                zak_error: err(ideal),
                zak_error_nominal: err(nominal),
                c_estimate: report.c_estimate,
                classification: report.c_classified,
                success: report.c_classified == Classification::Chern(oracle_c),
                n_up_at_zero: at_zero,
                n_up_at_nominal: at_nominal,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let quarter = T::FRAC_PI_4();
    let threshold = T::FRAC_1_SQRT_2();
    let rows = opts
        .radii
        .iter()
        .enumerate()
        .map(|(r, &radius)| {
            let rs = &records[r * opts.trials..(r + 1) * opts.trials];
            let n = T::lit(rs.len() as f64);
            let qualifying: Vec<_> = rs.iter().filter(|t| t.zak_error <= quarter).collect();
            let readouts = T::lit(2.0) * n;
            SweepRow {
                radius,
                trials: rs.len(),
                success_rate: T::lit(rs.iter().filter(|t| t.success).count() as f64) / n,
                ambiguous: rs.iter().filter(|t| t.classification == Classification::Ambiguous).count(),
                max_zak_error: rs.iter().map(|t| t.zak_error).fold(T::zero(), T::max),
                mean_zak_error: rs.iter().map(|t| t.zak_error).sum::<T>() / n,
                max_zak_error_nominal: rs.iter().map(|t| t.zak_error_nominal).fold(T::zero(), T::max),
                qualifying: qualifying.len(),
                qualifying_successes: qualifying.iter().filter(|t| t.success).count(),
                mean_n_up_at_zero: rs.iter().map(|t| t.n_up_at_zero[0] + t.n_up_at_zero[1]).sum::<T>() / readouts,
                mean_n_up_at_nominal: rs.iter().map(|t| t.n_up_at_nominal[0] + t.n_up_at_nominal[1]).sum::<T>()
                    / readouts,
                frac_n_up_at_zero_above: T::lit(
                    rs.iter().flat_map(|t| t.n_up_at_zero).filter(|&x| x > threshold).count() as f64,
                ) / readouts,
            }
        })
        .collect();
    Ok(SweepTable { oracle_c, nominal, rows, records })
}
