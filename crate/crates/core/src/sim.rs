//! Two-branch interferometer: pulses, band-following evolution and readout.
//!
//! Each spin label carries a complex amplitude and a normalized sublattice
//! vector. In adiabatic mode the vector is the gauge-fixed lower-band state
//! and all phases are pushed into the amplitude; in TDSE mode the vector is
//! the full two-level state integrated under `H(k(t))`.
//!
//! After the last force leg the two branches sit at different momenta. They
//! are brought to a common basis at the spin-down endpoint by transporting
//! the branch that ran along the planned spin-up path back along the chosen
//! [`Closure`]. The final π/2 pulse then yields
//! `N_↓,↑ = ½[1 ± cos(φ − φ_MW)]` with `φ` the ledger's readout phase.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bandwidth, bloch_components, boundary_phase, eigensystem, ModelParams};
use crate::protocol::{ProtocolPlan, ProtocolStep, DEFAULT_POINTS_PER_LEG, DOWN, UP};
use crate::scalar::{cis, inner, mat_vec, norm_sqr, wrap_phase, Mat2, Real, Spinor, Vec2};
use crate::topology::{segment_points, Closure};

/// Allowed `| |ψ|² − 1 |` in TDSE mode.
pub const NORM_DRIFT_TOL: f64 = 1e-8;

/// Largest TDSE step in units of `1/bandwidth`.
pub const DT_BANDWIDTH_FACTOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Adiabatic,
    Tdse,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adiabatic" => Ok(Mode::Adiabatic),
            "tdse" => Ok(Mode::Tdse),
            other => Err(Error::InvalidParams(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Adiabatic => "adiabatic",
            Mode::Tdse => "tdse",
        })
    }
}

/// Gaussian momentum spread of the cloud, sampled deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CloudSpec<T> {
    pub sigma: T,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SimOptions<T> {
    pub mode: Mode,
    pub closure: Closure,
    /// Differential Zeeman energy between the spin labels.
    pub zeeman_rate: T,
    /// Links per full force leg in adiabatic mode.
    pub points_per_leg: usize,
    /// TDSE step; `None` uses `0.01 / bandwidth`.
    pub dt: Option<T>,
    pub cloud: Option<CloudSpec<T>>,
}

impl<T: Real> Default for SimOptions<T> {
    fn default() -> Self {
        SimOptions {
            mode: Mode::Adiabatic,
            closure: Closure::Geodesic,
            zeeman_rate: T::zero(),
            points_per_leg: DEFAULT_POINTS_PER_LEG,
            dt: None,
            cloud: None,
        }
    }
}

/// Per-label phase accumulators between the two π/2 pulses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Parts<T> {
    geometric: T,
    dynamic: T,
    zeeman: T,
    pulse: T,
}

/// Spinor of the two spin labels. Arrays are indexed by [`DOWN`] / [`UP`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorState<T> {
    pub amp: [Complex<T>; 2],
    pub k: [Vec2<T>; 2],
    pub band: [Spinor<T>; 2],
    /// Upper-band population of each label (TDSE mode).
    pub upper_band_population: [T; 2],
    /// Plan branch carried by each label; swapped by π pulses.
    pub branch: [usize; 2],
    parts: [Parts<T>; 2],
    opened: bool,
}

impl<T: Real> SpinorState<T> {
    /// All atoms in spin down, lower band, at `k`.
    pub fn prepare(k: Vec2<T>, p: &ModelParams<T>) -> Result<Self> {
        let u = eigensystem(k, p)?.u_lower;
        let zero = Complex::new(T::zero(), T::zero());
        Ok(SpinorState {
            amp: [Complex::new(T::one(), T::zero()), zero],
            k: [k, k],
            band: [u, u],
            upper_band_population: [T::zero(); 2],
            branch: [DOWN, UP],
            parts: [Parts::default(); 2],
            opened: false,
        })
    }

    pub fn amp_down(&self) -> Complex<T> {
        self.amp[DOWN]
    }

    pub fn amp_up(&self) -> Complex<T> {
        self.amp[UP]
    }

    pub fn norm_sqr(&self) -> T {
        self.amp[0].norm_sqr() + self.amp[1].norm_sqr()
    }

    /// `arg(a_↑/a_↓) + π/2`, the phase `φ` in `N_↓ = ½[1 + cos(φ − φ_MW)]`
    /// for equal branch weights.
    pub fn interference_phase(&self) -> T {
        wrap_phase((self.amp[UP] / self.amp[DOWN]).arg() + T::FRAC_PI_2())
    }
}

/// `(1/√2)[[1, i e^{−iφ}], [i e^{iφ}, 1]]` on the spin amplitudes.
pub fn pi2_matrix<T: Real>(phi_mw: T) -> Mat2<T> {
    let s = T::FRAC_1_SQRT_2();
    let i = Complex::new(T::zero(), T::one());
    [
        [Complex::new(s, T::zero()), i * cis(-phi_mw) * s],
        [i * cis(phi_mw) * s, Complex::new(s, T::zero())],
    ]
}

pub fn apply_pi2<T: Real>(state: &SpinorState<T>, phi_mw: T) -> SpinorState<T> {
    let mut out = state.clone();
    out.amp = mat_vec(&pi2_matrix(phi_mw), &state.amp);
    out
}

/// Spin flip: exchanges everything carried by the two labels.
pub fn apply_pi<T: Real>(state: &SpinorState<T>) -> SpinorState<T> {
    let mut out = state.clone();
    out.amp.swap(0, 1);
    out.k.swap(0, 1);
    out.band.swap(0, 1);
    out.upper_band_population.swap(0, 1);
    out.branch.swap(0, 1);
    out.parts.swap(0, 1);
    out
}

/// `(N_↓, N_↑)` normalized to the total weight.
pub fn readout<T: Real>(state: &SpinorState<T>) -> (T, T) {
    let (d, u) = (state.amp[DOWN].norm_sqr(), state.amp[UP].norm_sqr());
    (d / (d + u), u / (d + u))
}

/// Differences `φ(↑ label) − φ(↓ label)` accumulated between the pulses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct PhaseLedger<T> {
    /// Geometric part including the closure, in `(−π, π]`.
    pub geometric: T,
    pub dynamic: T,
    pub zeeman: T,
    /// Phase contributed by the pulse sequence itself: 0 with echo, π without.
    pub pulse_offset: T,
}

impl<T: Real> PhaseLedger<T> {
    pub fn total(&self) -> T {
        self.geometric + self.dynamic + self.zeeman
    }

    /// Phase of the fringe `N_↓ = ½[1 + cos(φ − φ_MW)]`.
    pub fn readout_phase(&self) -> T {
        wrap_phase(self.pulse_offset + self.total())
    }

    fn from_state(st: &SpinorState<T>) -> Self {
        let (u, d) = (st.parts[UP], st.parts[DOWN]);
        PhaseLedger {
            geometric: wrap_phase(u.geometric - d.geometric),
            dynamic: u.dynamic - d.dynamic,
            zeeman: u.zeeman - d.zeeman,
            pulse_offset: wrap_phase(u.pulse - d.pulse + T::FRAC_PI_2()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TdseDiagnostics<T> {
    /// Upper-band population at the end of each plan branch (`[down path, up path]`).
    pub leakage: [T; 2],
    /// Interference phase from the lower-band projections.
    pub extracted_phase: T,
    pub max_norm_drift: T,
    pub dt: T,
    pub steps: usize,
}

trait Stepper<T: Real> {
    /// Moves `label` along `k + v·s`, `s ∈ [0, duration]`.
    fn advance(&mut self, st: &mut SpinorState<T>, label: usize, v: Vec2<T>, duration: T) -> Result<()>;
}

struct Adiabatic<'a, T> {
    p: &'a ModelParams<T>,
    links_per_time: T,
}

impl<T: Real> Stepper<T> for Adiabatic<'_, T> {
    fn advance(&mut self, st: &mut SpinorState<T>, label: usize, v: Vec2<T>, duration: T) -> Result<()> {
        let n = (duration * self.links_per_time).round().to_usize().unwrap_or(1).max(1);
        let k0 = st.k[label];
        let dt = duration / T::lit(n as f64);
        let mut prev = eigensystem(k0, self.p)?;
        let (mut geo, mut dynp) = (T::zero(), T::zero());
        for j in 1..=n {
            let s = if j == n { duration } else { dt * T::lit(j as f64) };
            let next = eigensystem(k0 + v.scale(s), self.p)?;
            let link = inner(&prev.u_lower, &next.u_lower);
            if !(link.norm() > T::lit(1e-10)) {
                return Err(Error::InvalidPath("states along a leg became orthogonal".into()));
            }
            geo -= link.arg();
            dynp -= (prev.e_lower + next.e_lower) * T::lit(0.5) * dt;
            prev = next;
        }
        st.amp[label] = st.amp[label] * cis(geo + dynp);
        st.parts[label].geometric += geo;
        st.parts[label].dynamic += dynp;
        st.k[label] = prev.k;
        st.band[label] = prev.u_lower;
        Ok(())
    }
}

struct Tdse<'a, T> {
    p: &'a ModelParams<T>,
    dt: T,
    steps: usize,
    max_drift: T,
}

/// `exp(−i H δ)` for `H = h0 + h·σ`.
fn propagator<T: Real>(k: Vec2<T>, p: &ModelParams<T>, delta: T) -> Mat2<T> {
    let h = bloch_components(k, p);
    let d = h.magnitude();
    let (c, s) = ((d * delta).cos(), (d * delta).sin());
    let (nx, ny, nz) = if d > T::zero() { (h.hx / d, h.hy / d, h.hz / d) } else { (T::zero(), T::zero(), T::zero()) };
    let g = cis(-h.h0 * delta);
    let mi_s = Complex::new(T::zero(), -s);
    [
        [g * (Complex::new(c, T::zero()) + mi_s * nz), g * mi_s * Complex::new(nx, -ny)],
        [g * mi_s * Complex::new(nx, ny), g * (Complex::new(c, T::zero()) - mi_s * nz)],
    ]
}

impl<T: Real> Stepper<T> for Tdse<'_, T> {
    fn advance(&mut self, st: &mut SpinorState<T>, label: usize, v: Vec2<T>, duration: T) -> Result<()> {
        let n = (duration / self.dt).ceil().to_usize().unwrap_or(1).max(1);
        let delta = duration / T::lit(n as f64);
        let k0 = st.k[label];
        let mut psi = st.band[label];
        let half = T::lit(0.5);
        for j in 0..n {
            let km = k0 + v.scale(delta * (T::lit(j as f64) + half));
            psi = mat_vec(&propagator(km, self.p, delta), &psi);
        }
        self.steps += n;
        let drift = (norm_sqr(&psi) - T::one()).abs();
        self.max_drift = self.max_drift.max(drift);
        if drift > T::lit(NORM_DRIFT_TOL) {
            return Err(Error::StepTooLarge { drift: drift.to_f64_lossy() });
        }
        let k1 = k0 + v.scale(duration);
        let es = eigensystem(k1, self.p)?;
        st.upper_band_population[label] = inner(&es.u_upper, &psi).norm_sqr();
        st.k[label] = k1;
        st.band[label] = psi;
        Ok(())
    }
}

fn zeeman_sign<T: Real>(label: usize) -> T {
    if label == UP {
        T::one()
    } else {
        -T::one()
    }
}

/// Runs every step except the closing π/2 pulse, then recombines.
fn drive<T: Real, S: Stepper<T>>(
    mut st: SpinorState<T>,
    plan: &ProtocolPlan<T>,
    p: &ModelParams<T>,
    opts: &SimOptions<T>,
    stepper: &mut S,
) -> Result<SpinorState<T>> {
    validate_plan_structure(plan, p)?;
    let last = plan.steps.len() - 1;
    for step in &plan.steps[..last] {
        match *step {
            ProtocolStep::Transport { duration, velocity } => {
                if st.opened {
                    for label in [DOWN, UP] {
                        stepper.advance(&mut st, label, velocity, duration)?;
                    }
                } else {
                    stepper.advance(&mut st, DOWN, velocity, duration)?;
                    st.k[UP] = st.k[DOWN];
                    st.band[UP] = st.band[DOWN];
                }
            }
            ProtocolStep::Pi2Pulse { phi_mw } => {
                st = apply_pi2(&st, phi_mw);
                st.parts = [Parts::default(); 2];
                st.parts[UP].pulse = T::FRAC_PI_2() + phi_mw;
                st.opened = true;
            }
            ProtocolStep::PiPulse => st = apply_pi(&st),
            ProtocolStep::ForceLeg { duration, force, gradient_direction_flip } => {
                for label in [DOWN, UP] {
                    stepper.advance(&mut st, label, force.velocity(label, gradient_direction_flip), duration)?;
                    let z = -zeeman_sign::<T>(label) * opts.zeeman_rate * T::lit(0.5) * duration;
                    st.amp[label] = st.amp[label] * cis(z);
                    st.parts[label].zeeman += z;
                }
            }
        }
    }
    Ok(st)
}

fn validate_plan_structure<T: Real>(plan: &ProtocolPlan<T>, p: &ModelParams<T>) -> Result<()> {
    if !matches!(plan.steps.last(), Some(ProtocolStep::Pi2Pulse { .. })) || plan.pi2_count() != 2 {
        return Err(Error::MalformedPlan("plan must open and close with a pi/2 pulse".into()));
    }
    let ends = crate::protocol::integrate_endpoints(plan);
    for b in 0..2 {
        if !((ends[b] - plan.targets[b]).norm() < T::lit(crate::protocol::ENDPOINT_TOL)) {
            return Err(Error::MalformedPlan(format!("branch {b} misses its target")));
        }
    }
    p.validate()
}

/// Projects onto the lower band (TDSE) and brings the up-path branch to the
/// down-path endpoint through `closure`.
fn recombine<T: Real>(st: &mut SpinorState<T>, plan: &ProtocolPlan<T>, p: &ModelParams<T>, opts: &SimOptions<T>) -> Result<()> {
    for label in [DOWN, UP] {
        let es = eigensystem(st.k[label], p)?;
        let c = inner(&es.u_lower, &st.band[label]);
        st.amp[label] = st.amp[label] * c;
        st.band[label] = es.u_lower;
    }
    let ld = if st.branch[DOWN] == DOWN { DOWN } else { UP };
    let lu = 1 - ld;
    let (kd, ku) = (st.k[ld], st.k[lu]);
    let theta = match opts.closure {
        Closure::Sublattice => {
            let g = p.geometry.reciprocal_indices(ku - kd).ok_or(Error::NoClosure)?;
            let chi = boundary_phase(p.geometry.reciprocal(g.0, g.1), &p.geometry)?;
            let shifted = crate::lattice::apply_boundary(chi, &st.band[ld]);
            -inner(&st.band[lu], &shifted).arg()
        }
        Closure::Geodesic => {
            if ku == kd {
                T::zero()
            } else {
                let leg = plan.total_displacements[UP].norm().max(plan.total_displacements[DOWN].norm());
                let spacing = leg / T::lit(opts.points_per_leg.max(1) as f64);
                let n = ((ku - kd).norm() / spacing).ceil().to_usize().unwrap_or(1).max(1);
                let pts = segment_points(ku, kd, n + 1)?;
                let mut prev = st.band[lu];
                let mut acc = T::zero();
                for &k in &pts[1..] {
                    let u = eigensystem(k, p)?.u_lower;
                    acc -= inner(&prev, &u).arg();
                    prev = u;
                }
                acc
            }
        }
    };
    st.amp[lu] = st.amp[lu] * cis(theta);
    st.parts[lu].geometric += theta;
    st.k[lu] = kd;
    st.band[lu] = st.band[ld];
    Ok(())
}

fn initial_state<T: Real>(p: &ModelParams<T>) -> Result<SpinorState<T>> {
    SpinorState::prepare(Vec2::zero(), p)
}

/// Lower-band evolution with link-overlap geometric phases, trapezoid
/// dynamic phases and label-fixed Zeeman phases. Returns the state just
/// before the closing π/2 pulse.
pub fn evolve_adiabatic<T: Real>(
    state: SpinorState<T>,
    plan: &ProtocolPlan<T>,
    p: &ModelParams<T>,
    opts: &SimOptions<T>,
) -> Result<(SpinorState<T>, PhaseLedger<T>)> {
    let mut stepper = Adiabatic { p, links_per_time: T::lit(opts.points_per_leg as f64) / plan.leg_time };
    let mut st = drive(state, plan, p, opts, &mut stepper)?;
    recombine(&mut st, plan, p, opts)?;
    let ledger = PhaseLedger::from_state(&st);
    Ok((st, ledger))
}

/// Largest admissible TDSE step for `p`.
pub fn max_tdse_dt<T: Real>(p: &ModelParams<T>) -> T {
    T::lit(DT_BANDWIDTH_FACTOR) / bandwidth(p, 48)
}

/// Full two-level integration with the midpoint exponential step.
pub fn evolve_tdse<T: Real>(
    state: SpinorState<T>,
    plan: &ProtocolPlan<T>,
    p: &ModelParams<T>,
    opts: &SimOptions<T>,
) -> Result<(SpinorState<T>, TdseDiagnostics<T>)> {
    let limit = max_tdse_dt(p);
    let dt = opts.dt.unwrap_or(limit);
    if !(dt > T::zero()) || dt > limit * T::lit(1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!("dt = {dt} must lie in (0, {limit}]")));
    }
    let mut stepper = Tdse { p, dt, steps: 0, max_drift: T::zero() };
    let mut st = drive(state, plan, p, opts, &mut stepper)?;
    let mut leakage = [T::zero(); 2];
    for label in [DOWN, UP] {
        leakage[st.branch[label]] = st.upper_band_population[label];
    }
    recombine(&mut st, plan, p, opts)?;
    let diag = TdseDiagnostics {
        leakage,
        extracted_phase: st.interference_phase(),
        max_norm_drift: stepper.max_drift,
        dt,
        steps: stepper.steps,
    };
    Ok((st, diag))
}

/// Landau–Zener transfer estimate per plan branch:
/// `exp(−π g² / (2α))` with `g` the smallest gap on the branch path and
/// `α = 2 v_D |dk/dt|` the sweep rate of the diabatic splitting.
pub fn landau_zener_estimate<T: Real>(plan: &ProtocolPlan<T>, p: &ModelParams<T>, samples: usize) -> Result<[T; 2]> {
    let mut out = [T::zero(); 2];
    for b in [DOWN, UP] {
        let speed = plan.total_displacements[b].norm() / plan.leg_time;
        let mut g = T::infinity();
        for j in 0..=samples {
            let s = T::lit(j as f64) / T::lit(samples as f64);
            g = g.min(eigensystem(plan.start + plan.total_displacements[b].scale(s), p)?.gap);
        }
        let alpha = T::lit(2.0) * p.dirac_velocity() * speed;
        out[b] = (-T::PI() * g * g / (T::lit(2.0) * alpha)).exp();
    }
    Ok(out)
}

/// `n` equally spaced microwave phases on `[0, 2π)`.
pub fn phi_mw_grid<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|j| T::TAU() * T::lit(j as f64) / T::lit(n as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct FringeScan<T> {
    pub site: crate::protocol::Site,
    pub mode: Mode,
    pub phi_mw_values: Vec<T>,
    pub n_down: Vec<T>,
    pub n_up: Vec<T>,
}

impl<T: Real> FringeScan<T> {
    pub fn rows(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        (0..self.phi_mw_values.len()).map(|j| (self.phi_mw_values[j], self.n_down[j], self.n_up[j]))
    }
}

/// Result of evolving once and scanning the closing pulse phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct FringeRun<T> {
    pub scan: FringeScan<T>,
    /// Adiabatic ledger of the nominal (unsmeared) cloud.
    pub ledger: Option<PhaseLedger<T>>,
    pub tdse: Option<TdseDiagnostics<T>>,
    /// Interference phase of the nominal run before the closing pulse.
    pub phase: T,
}

fn populations<T: Real>(st: &SpinorState<T>, phi_mw: &[T]) -> (Vec<T>, Vec<T>) {
    phi_mw
        .iter()
        .map(|&phi| readout(&apply_pi2(st, phi)))
        .unzip()
}

/// Evolves `plan` once in `opts.mode` and applies the closing pulse at each
/// `phi_mw`. With a cloud spec, populations are averaged over momentum
/// samples shifted by Gaussian offsets.
pub fn run_fringe<T: Real>(
    p: &ModelParams<T>,
    plan: &ProtocolPlan<T>,
    phi_mw: &[T],
    opts: &SimOptions<T>,
) -> Result<FringeRun<T>> {
    let evolve = |plan: &ProtocolPlan<T>| -> Result<(SpinorState<T>, Option<PhaseLedger<T>>, Option<TdseDiagnostics<T>>)> {
        let st0 = initial_state(p)?;
        match opts.mode {
            Mode::Adiabatic => evolve_adiabatic(st0, plan, p, opts).map(|(s, l)| (s, Some(l), None)),
            Mode::Tdse => evolve_tdse(st0, plan, p, opts).map(|(s, d)| (s, None, Some(d))),
        }
    };
    let (st, ledger, tdse) = evolve(plan)?;
    let phase = st.interference_phase();
    let (mut n_down, mut n_up) = populations(&st, phi_mw);
    if let Some(cloud) = opts.cloud.filter(|c| c.samples > 0 && c.sigma > T::zero()) {
        let normal = Normal::new(0.0, cloud.sigma.to_f64_lossy())
            .map_err(|e| Error::InvalidParams(format!("cloud width: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cloud.seed);
        let mut sum_d = vec![T::zero(); phi_mw.len()];
        let mut sum_u = sum_d.clone();
        for _ in 0..cloud.samples {
            let dk = Vec2::new(T::lit(normal.sample(&mut rng)), T::lit(normal.sample(&mut rng)));
            let (s, _, _) = evolve(&plan.shifted(dk))?;
            let (d, u) = populations(&s, phi_mw);
            for j in 0..phi_mw.len() {
                sum_d[j] += d[j];
                sum_u[j] += u[j];
            }
        }
        let m = T::lit(cloud.samples as f64);
        n_down = sum_d.into_iter().map(|x| x / m).collect();
        n_up = sum_u.into_iter().map(|x| x / m).collect();
    }
    Ok(FringeRun {
        scan: FringeScan { site: plan.site, mode: opts.mode, phi_mw_values: phi_mw.to_vec(), n_down, n_up },
        ledger,
        tdse,
        phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{perturb_plan, plan_site, Site};
    use crate::topology::noncyclic_zak;
    use crate::lattice::Band;
    use std::f64::consts::PI;

    fn params(tp: f64, phi: f64) -> ModelParams<f64> {
        ModelParams::new(1.0, tp, phi).unwrap()
    }

    fn down_state() -> SpinorState<f64> {
        SpinorState::prepare(Vec2::new(0.1, 0.2), &params(0.1, PI / 2.0)).unwrap()
    }

    #[test]
    fn pi2_from_down() {
        let s = apply_pi2(&down_state(), 0.0);
        let r = 0.5f64.sqrt();
        assert!((s.amp[DOWN] - Complex::new(r, 0.0)).norm() < 1e-15);
        assert!((s.amp[UP] - Complex::new(0.0, r)).norm() < 1e-15);
        let s2 = apply_pi2(&s, 0.0);
        assert!(s2.amp[DOWN].norm() < 1e-15);
        assert!((s2.amp[UP] - Complex::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pi2_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..100 {
            let mut s = down_state();
            s.amp = [
                Complex::new(n.sample(&mut rng), n.sample(&mut rng)),
                Complex::new(n.sample(&mut rng), n.sample(&mut rng)),
            ];
            let norm = s.norm_sqr().sqrt();
            s.amp = [s.amp[0] / norm, s.amp[1] / norm];
            let phi: f64 = n.sample(&mut rng) * 3.0;
            assert!((apply_pi2(&s, phi).norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pi_swaps_and_is_involutive() {
        let mut s = down_state();
        s.amp = [Complex::new(0.6, 0.0), Complex::new(0.0, 0.8)];
        let f = apply_pi(&s);
        assert_eq!(f.amp, [s.amp[1], s.amp[0]]);
        assert_eq!(apply_pi(&f), s);
    }

    #[test]
    fn readout_examples() {
        // State (i|↓⟩ + e^{iπ/2}|↑⟩)/√2 has interference phase π/2.
        let mut s = down_state();
        let r = 0.5f64.sqrt();
        s.amp = [Complex::new(0.0, r), Complex::new(0.0, r)];
        assert!((s.interference_phase() - PI / 2.0).abs() < 1e-15);
        let (d, u) = readout(&apply_pi2(&s, 0.0));
        assert!((d - 0.5).abs() < 1e-15 && (u - 0.5).abs() < 1e-15);
        let (d, u) = readout(&apply_pi2(&s, PI / 2.0));
        assert!((d - 1.0).abs() < 1e-15 && u.abs() < 1e-15);
    }

    #[test]
    fn ledger_matches_oracle_phase() {
        let p = params(0.1, PI / 2.0);
        let opts = SimOptions::default();
        for site in Site::BOTH {
            let plan = plan_site(site, &p, 200.0, true).unwrap();
            let (st, ledger) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
            let z = noncyclic_zak(&p, &plan.zak_path(&p.geometry, opts.points_per_leg).unwrap(), Band::Lower, Closure::Geodesic)
                .unwrap();
            assert!((ledger.geometric - z).abs() < 1e-9, "{site}: {} vs {z}", ledger.geometric);
            assert!(ledger.dynamic.abs() < 1e-8);
            assert!(ledger.pulse_offset.abs() < 1e-12);
            assert!((ledger.readout_phase() - st.interference_phase()).abs() < 1e-9);
            assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sublattice_closure_ledger_matches_oracle() {
        let p = params(0.1, PI / 2.0);
        let opts = SimOptions { closure: Closure::Sublattice, ..SimOptions::default() };
        let plan = plan_site(Site::II, &p, 200.0, true).unwrap();
        let (_, ledger) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        let z = noncyclic_zak(&p, &plan.zak_path(&p.geometry, opts.points_per_leg).unwrap(), Band::Lower, Closure::Sublattice)
            .unwrap();
        assert!((ledger.geometric - z).abs() < 1e-9);
        let bent = perturb_plan(&plan, [Vec2::new(0.05, 0.0), Vec2::zero()], &p.geometry).unwrap();
        assert_eq!(evolve_adiabatic(initial_state(&p).unwrap(), &bent, &p, &opts).unwrap_err(), Error::NoClosure);
    }

    #[test]
    fn without_echo_phase_is_reflected() {
        let p = params(0.1, PI / 2.0);
        let opts = SimOptions::default();
        let plan = plan_site(Site::I, &p, 200.0, true).unwrap();
        let (_, with) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        let plan = plan_site(Site::I, &p, 200.0, false).unwrap();
        let (_, without) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        assert!((without.pulse_offset.abs() - PI).abs() < 1e-12);
        assert!((without.geometric + with.geometric).abs() < 1e-9);
        assert!((without.readout_phase() - wrap_phase(PI - with.readout_phase())).abs() < 1e-9);
    }

    #[test]
    fn zeeman_cancels_with_echo() {
        let p = params(0.1, PI / 2.0);
        let opts = SimOptions { zeeman_rate: 0.3, ..SimOptions::default() };
        let plan = plan_site(Site::I, &p, 200.0, false).unwrap();
        let (_, off) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        assert!((off.zeeman + 0.3 * 200.0).abs() < 1e-9, "{}", off.zeeman);
        let plan = plan_site(Site::I, &p, 200.0, true).unwrap();
        let (_, on) = evolve_adiabatic(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        assert!(on.zeeman.abs() < 1e-10);
    }

    #[test]
    fn fringe_follows_readout_law() {
        let p = params(0.1, -PI / 2.0);
        let plan = plan_site(Site::II, &p, 200.0, true).unwrap();
        let grid = phi_mw_grid(24);
        let run = run_fringe(&p, &plan, &grid, &SimOptions::default()).unwrap();
        let phi = run.ledger.unwrap().readout_phase();
        for (m, d, u) in run.scan.rows() {
            assert!((d - 0.5 * (1.0 + (phi - m).cos())).abs() < 1e-9);
            assert!((u - 0.5 * (1.0 - (phi - m).cos())).abs() < 1e-9);
            assert!((d + u - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cloud_smearing_is_seeded() {
        let p = params(0.1, PI / 2.0);
        let plan = plan_site(Site::I, &p, 200.0, true).unwrap();
        let opts = SimOptions {
            points_per_leg: 200,
            cloud: Some(CloudSpec { sigma: 0.05, samples: 4, seed: 11 }),
            ..SimOptions::default()
        };
        let grid = phi_mw_grid(8);
        let a = run_fringe(&p, &plan, &grid, &opts).unwrap();
        let b = run_fringe(&p, &plan, &grid, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.scan.n_up.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn tdse_converges_in_dt() {
        let p = params(0.1, PI / 2.0);
        let plan = plan_site(Site::I, &p, 20.0, true).unwrap();
        let dt = max_tdse_dt(&p);
        let run = |dt: f64| {
            let opts = SimOptions { mode: Mode::Tdse, dt: Some(dt), ..SimOptions::default() };
            evolve_tdse(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap().1
        };
        let (a, b) = (run(dt), run(dt / 2.0));
        assert!((a.extracted_phase - b.extracted_phase).abs() < 1e-6);
        assert!(a.max_norm_drift < 1e-10);
        let opts = SimOptions { mode: Mode::Tdse, dt: Some(dt * 2.0), ..SimOptions::default() };
        assert!(evolve_tdse(initial_state(&p).unwrap(), &plan, &p, &opts).is_err());
    }

    #[test]
    fn tdse_fast_legs_leak() {
        let p = params(0.1, PI / 2.0);
        let plan = plan_site(Site::I, &p, 2.0, true).unwrap();
        let opts = SimOptions { mode: Mode::Tdse, ..SimOptions::default() };
        let (_, d) = evolve_tdse(initial_state(&p).unwrap(), &plan, &p, &opts).unwrap();
        assert!(d.leakage.iter().all(|&x| x > 0.05), "{:?}", d.leakage);
    }
}
