//! Force and pulse sequences that steer the two spin branches across the
//! Brillouin zone.
//!
//! A branch obeys `dk/dt = -lattice_force - s·gradient_force` with `s = -1`
//! for spin down and `s = +1` for spin up. Forces are solved from the target
//! displacements, so the planned endpoints are reproduced exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitDisc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{eigensystem, LatticeGeometry, ModelParams};
use crate::scalar::{Real, Vec2};
use crate::topology::{segment_points, KPath};

/// Endpoint residual above which a plan is rejected.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Adiabaticity figure above which `validate_plan` warns.
pub const XI_WARN: f64 = 0.1;

pub const DEFAULT_LEG_TIME: f64 = 200.0;
pub const DEFAULT_POINTS_PER_LEG: usize = 2000;

/// Index of the spin-down branch in per-spin arrays.
pub const DOWN: usize = 0;
/// Index of the spin-up branch in per-spin arrays.
pub const UP: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    I,
    II,
}

impl Site {
    pub const BOTH: [Site; 2] = [Site::I, Site::II];

    pub fn label(self) -> &'static str {
        match self {
            Site::I => "I",
            Site::II => "II",
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Site {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(Site::I),
            "II" | "ii" | "2" => Ok(Site::II),
            other => Err(Error::InvalidParams(format!("unknown site '{other}'"))),
        }
    }
}

/// Spin sign multiplying the gradient force: `-1` down, `+1` up.
pub fn spin_sign<T: Real>(spin: usize) -> T {
    if spin == DOWN {
        -T::one()
    } else {
        T::one()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ForceSpec<T> {
    /// `μ∇B`, momentum per unit time.
    pub gradient_force: Vec2<T>,
    /// `aM` of the accelerated lattice.
    pub lattice_force: Vec2<T>,
}

impl<T: Real> ForceSpec<T> {
    /// Forces producing the per-spin velocities `[v_down, v_up]`.
    pub fn from_velocities(v: [Vec2<T>; 2]) -> Self {
        let half = T::lit(0.5);
        ForceSpec {
            lattice_force: -(v[DOWN] + v[UP]).scale(half),
            gradient_force: (v[DOWN] - v[UP]).scale(half),
        }
    }

    /// `dk/dt` of the given spin label; `flipped` reverses the gradient.
    pub fn velocity(&self, spin: usize, flipped: bool) -> Vec2<T> {
        let dir = if flipped { -T::one() } else { T::one() };
        -self.lattice_force - self.gradient_force.scale(spin_sign::<T>(spin) * dir)
    }

    /// `|lattice_force| / |gradient_force|`.
    pub fn ratio(&self) -> T {
        self.lattice_force.norm() / self.gradient_force.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum ProtocolStep<T> {
    /// Spin-independent drift while only spin down is populated.
    Transport { duration: T, velocity: Vec2<T> },
    Pi2Pulse { phi_mw: T },
    PiPulse,
    ForceLeg { duration: T, force: ForceSpec<T>, gradient_direction_flip: bool },
}

impl<T: Real> ProtocolStep<T> {
    pub fn duration(&self) -> T {
        match *self {
            ProtocolStep::Transport { duration, .. } | ProtocolStep::ForceLeg { duration, .. } => duration,
            _ => T::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct PlanOptions<T> {
    pub leg_time: T,
    pub with_echo: bool,
    /// Exchanges the spin-down and spin-up displacements.
    pub swap_spins: bool,
}

impl<T: Real> Default for PlanOptions<T> {
    fn default() -> Self {
        PlanOptions { leg_time: T::lit(DEFAULT_LEG_TIME), with_echo: true, swap_spins: false }
    }
}

/// An executable sequence for one site.
///
/// Per-spin arrays are indexed by the spin label during the first force leg
/// ([`DOWN`], [`UP`]); after an echo pulse the labels swap but each physical
/// branch keeps following its own path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ProtocolPlan<T> {
    pub site: Site,
    pub with_echo: bool,
    pub leg_time: T,
    /// Where the spin-down cloud is placed before the first pulse.
    pub start: Vec2<T>,
    pub total_displacements: [Vec2<T>; 2],
    pub targets: [Vec2<T>; 2],
    pub steps: Vec<ProtocolStep<T>>,
}

/// Nominal start point and `[down, up]` displacements of a site.
pub fn site_geometry<T: Real>(site: Site, geom: &LatticeGeometry<T>) -> (Vec2<T>, [Vec2<T>; 2]) {
    let half_k = geom.k.scale(T::lit(0.5));
    let sum = geom.b1 + geom.b2;
    match site {
        Site::I => (half_k, [-sum, -geom.b2]),
        Site::II => (-half_k, [sum, geom.b2]),
    }
}

fn build_plan<T: Real>(
    site: Site,
    start: Vec2<T>,
    disp: [Vec2<T>; 2],
    leg_time: T,
    with_echo: bool,
) -> ProtocolPlan<T> {
    let v = [disp[DOWN].scale(T::one() / leg_time), disp[UP].scale(T::one() / leg_time)];
    let force = ForceSpec::from_velocities(v);
    let transport_time = leg_time / T::lit(3.0);
    let mut steps = vec![
        ProtocolStep::Transport { duration: transport_time, velocity: start.scale(T::one() / transport_time) },
        ProtocolStep::Pi2Pulse { phi_mw: T::zero() },
    ];
    if with_echo {
        let half = leg_time * T::lit(0.5);
        steps.push(ProtocolStep::ForceLeg { duration: half, force, gradient_direction_flip: false });
        steps.push(ProtocolStep::PiPulse);
        steps.push(ProtocolStep::ForceLeg { duration: leg_time - half, force, gradient_direction_flip: true });
    } else {
        steps.push(ProtocolStep::ForceLeg { duration: leg_time, force, gradient_direction_flip: false });
    }
    steps.push(ProtocolStep::Pi2Pulse { phi_mw: T::zero() });
    ProtocolPlan {
        site,
        with_echo,
        leg_time,
        start,
        total_displacements: disp,
        targets: [start + disp[DOWN], start + disp[UP]],
        steps,
    }
}

/// Plan for one site with the default options apart from `leg_time` and echo.
pub fn plan_site<T: Real>(site: Site, p: &ModelParams<T>, leg_time: T, with_echo: bool) -> Result<ProtocolPlan<T>> {
    plan_site_with(site, p, &PlanOptions { leg_time, with_echo, swap_spins: false })
}

pub fn plan_site_with<T: Real>(site: Site, p: &ModelParams<T>, opts: &PlanOptions<T>) -> Result<ProtocolPlan<T>> {
    if !(opts.leg_time > T::zero()) || !opts.leg_time.is_finite() {
        return Err(Error::InvalidParams(format!("leg_time {} must be positive", opts.leg_time)));
    }
    let (start, mut disp) = site_geometry(site, &p.geometry);
    if opts.swap_spins {
        disp.swap(0, 1);
    }
    Ok(build_plan(site, start, disp, opts.leg_time, opts.with_echo))
}

/// Momentum of each physical branch after integrating every step.
///
/// Returns `[branch that starts as down, branch that starts as up]`.
pub fn integrate_endpoints<T: Real>(plan: &ProtocolPlan<T>) -> [Vec2<T>; 2] {
    let mut k = [Vec2::zero(); 2];
    // label_of[b] is the current spin label of physical branch b.
    let mut label_of = [DOWN, UP];
    for step in &plan.steps {
        match *step {
            ProtocolStep::Transport { duration, velocity } => {
                for kb in &mut k {
                    *kb += velocity.scale(duration);
                }
            }
            ProtocolStep::ForceLeg { duration, force, gradient_direction_flip } => {
                for b in 0..2 {
                    k[b] += force.velocity(label_of[b], gradient_direction_flip).scale(duration);
                }
            }
            ProtocolStep::PiPulse => label_of.swap(0, 1),
            ProtocolStep::Pi2Pulse { .. } => {}
        }
    }
    k
}

/// Vertices of each physical branch path, from the start point on.
pub fn branch_vertices<T: Real>(plan: &ProtocolPlan<T>) -> [Vec<Vec2<T>>; 2] {
    let mut k = [Vec2::zero(); 2];
    let mut out = [Vec::new(), Vec::new()];
    let mut label_of = [DOWN, UP];
    let mut started = false;
    for step in &plan.steps {
        match *step {
            ProtocolStep::Transport { duration, velocity } => {
                for kb in &mut k {
                    *kb += velocity.scale(duration);
                }
            }
            ProtocolStep::ForceLeg { duration, force, gradient_direction_flip } => {
                if !started {
                    for b in 0..2 {
                        out[b].push(k[b]);
                    }
                    started = true;
                }
                for b in 0..2 {
                    k[b] += force.velocity(label_of[b], gradient_direction_flip).scale(duration);
                    if out[b].last() != Some(&k[b]) {
                        out[b].push(k[b]);
                    }
                }
            }
            ProtocolStep::PiPulse => label_of.swap(0, 1),
            ProtocolStep::Pi2Pulse { .. } => {}
        }
    }
    out
}

impl<T: Real> ProtocolPlan<T> {
    /// Predicted path of each physical branch, `n` links per straight run.
    pub fn kpaths(&self, geom: &LatticeGeometry<T>, n: usize) -> Result<[KPath<T>; 2]> {
        let [a, b] = branch_vertices(self);
        Ok([polyline_merged(&a, n, geom)?, polyline_merged(&b, n, geom)?])
    }

    /// The open path `reverse(down branch) ++ up branch`, from the down
    /// endpoint through the start to the up endpoint. Its geometric phase is
    /// the one read out by the interferometer.
    pub fn zak_path(&self, geom: &LatticeGeometry<T>, n: usize) -> Result<KPath<T>> {
        let [down, up] = self.kpaths(geom, n)?;
        down.reversed(geom).concat(&up, geom)
    }

    /// The same plan with every momentum offset by `dk`.
    pub fn shifted(&self, dk: Vec2<T>) -> Self {
        build_plan(self.site, self.start + dk, self.total_displacements, self.leg_time, self.with_echo)
    }

    pub fn pi2_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, ProtocolStep::Pi2Pulse { .. })).count()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Straight runs with the same direction are merged so that a leg split by
/// the echo is sampled like an unsplit one.
fn polyline_merged<T: Real>(verts: &[Vec2<T>], n: usize, geom: &LatticeGeometry<T>) -> Result<KPath<T>> {
    let mut merged: Vec<Vec2<T>> = Vec::with_capacity(verts.len());
    for &v in verts {
        if merged.len() >= 2 {
            let a = merged[merged.len() - 2];
            let b = merged[merged.len() - 1];
            let (d1, d2) = (b - a, v - b);
            let tol = T::lit(1e-12) * (d1.norm() * d2.norm());
            if d1.cross(d2).abs() <= tol && d1.dot(d2) > T::zero() {
                *merged.last_mut().expect("nonempty") = v;
                continue;
            }
        }
        merged.push(v);
    }
    let mut pts = vec![merged[0]];
    for w in merged.windows(2) {
        let leg = segment_points(w[0], w[1], n + 1)?;
        pts.extend_from_slice(&leg[1..]);
    }
    KPath::open(pts, geom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct PlanDiagnostics<T> {
    pub endpoint_residuals: [T; 2],
    /// Reciprocal indices `(m, n)` of `target_up - target_down`, if any.
    pub endpoint_pair: Option<(i64, i64)>,
    /// `max |dk/dt| / gap²` along both branches.
    pub xi: T,
    pub min_gap: T,
    pub warnings: Vec<String>,
}

/// Checks step structure, endpoint exactness and adiabaticity.
pub fn validate_plan<T: Real>(plan: &ProtocolPlan<T>, p: &ModelParams<T>) -> Result<PlanDiagnostics<T>> {
    if plan.pi2_count() != 2
        || !matches!(plan.steps.iter().find(|s| !matches!(s, ProtocolStep::Transport { .. })), Some(ProtocolStep::Pi2Pulse { .. }))
        || !matches!(plan.steps.last(), Some(ProtocolStep::Pi2Pulse { .. }))
    {
        return Err(Error::MalformedPlan("need exactly one opening and one closing pi/2 pulse".into()));
    }
    for step in &plan.steps {
        let d = step.duration();
        let timed = matches!(step, ProtocolStep::Transport { .. } | ProtocolStep::ForceLeg { .. });
        if timed && !(d > T::zero() && d.is_finite()) {
            return Err(Error::MalformedPlan(format!("non-positive duration {d}")));
        }
    }
    let ends = integrate_endpoints(plan);
    let residuals = [(ends[0] - plan.targets[0]).norm(), (ends[1] - plan.targets[1]).norm()];
    for (b, r) in residuals.iter().enumerate() {
        if !(*r < T::lit(ENDPOINT_TOL)) {
            return Err(Error::MalformedPlan(format!("branch {b} misses its target by {:e}", r.to_f64_lossy())));
        }
    }
    let endpoint_pair = p.geometry.reciprocal_indices(plan.targets[UP] - plan.targets[DOWN]);

    let mut xi = T::zero();
    let mut min_gap = T::infinity();
    let mut k = [Vec2::zero(); 2];
    let mut label_of = [DOWN, UP];
    let samples = 256usize;
    for step in &plan.steps {
        let (dur, vel) = match *step {
            ProtocolStep::Transport { duration, velocity } => (duration, [velocity, velocity]),
            ProtocolStep::ForceLeg { duration, force, gradient_direction_flip: f } => {
                (duration, [force.velocity(label_of[0], f), force.velocity(label_of[1], f)])
            }
            ProtocolStep::PiPulse => {
                label_of.swap(0, 1);
                continue;
            }
            ProtocolStep::Pi2Pulse { .. } => continue,
        };
        for b in 0..2 {
            let speed = vel[b].norm();
            for j in 0..=samples {
                let s = dur * T::lit(j as f64) / T::lit(samples as f64);
                let gap = eigensystem(k[b] + vel[b].scale(s), p)?.gap;
                min_gap = min_gap.min(gap);
                xi = xi.max(speed / (gap * gap));
            }
            k[b] += vel[b].scale(dur);
        }
    }
    let mut warnings = Vec::new();
    if endpoint_pair.is_none() {
        warnings.push("endpoints are not reciprocal-equivalent".to_string());
    }
    if xi > T::lit(XI_WARN) {
        warnings.push(format!("adiabaticity figure xi = {xi:.4} exceeds {XI_WARN}"));
    }
    Ok(PlanDiagnostics { endpoint_residuals: residuals, endpoint_pair, xi, min_gap, warnings })
}

/// Re-solves the forces so that branch endpoints move by `errors`
/// (`[down, up]`). Each error must be shorter than `|b1|/4`.
pub fn perturb_plan<T: Real>(plan: &ProtocolPlan<T>, errors: [Vec2<T>; 2], geom: &LatticeGeometry<T>) -> Result<ProtocolPlan<T>> {
    let limit = geom.b1.norm() / T::lit(4.0);
    if errors.iter().any(|e| !(e.norm() < limit)) {
        return Err(Error::InvalidParams(format!("endpoint error must be shorter than |b1|/4 = {limit}")));
    }
    if errors.iter().all(|e| *e == Vec2::zero()) {
        return Ok(plan.clone());
    }
    let disp = [plan.total_displacements[0] + errors[0], plan.total_displacements[1] + errors[1]];
    Ok(build_plan(plan.site, plan.start, disp, plan.leg_time, plan.with_echo))
}

/// Independent endpoint errors drawn uniformly from a disc of `radius`.
pub fn random_endpoint_errors<T: Real>(radius: T, rng: &mut ChaCha8Rng) -> [Vec2<T>; 2] {
    let mut draw = || {
        let [x, y]: [f64; 2] = UnitDisc.sample(rng);
        Vec2::new(T::lit(x), T::lit(y)).scale(radius)
    };
    [draw(), draw()]
}

/// [`perturb_plan`] with errors drawn from `seed`.
pub fn perturb_plan_seeded<T: Real>(
    plan: &ProtocolPlan<T>,
    radius: T,
    seed: u64,
    geom: &LatticeGeometry<T>,
) -> Result<ProtocolPlan<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_plan(plan, random_endpoint_errors(radius, &mut rng), geom)
}
