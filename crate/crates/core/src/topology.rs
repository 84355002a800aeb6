//! Gauge-invariant geometric phases of the Haldane bands.
//!
//! Everything here is built from link overlaps `⟨u(k_j)|u(k_{j+1})⟩` of
//! gauge-fixed Bloch eigenvectors. A phase is always the argument of a
//! closed product of links, so the arbitrary phase of each stored
//! eigenvector cancels. Sign convention: a counter-clockwise loop around
//! positive Berry flux yields a positive phase, and the lower band of
//! `(t, t', φ) = (1, 0.1, π/2)` has Chern number `+1`.
//!
//! The `*_from_states` functions take precomputed eigenvectors so that the
//! gauge invariance of each construction can be checked directly.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{apply_boundary, boundary_phase, eigensystem, Band, LatticeGeometry, ModelParams};
use crate::scalar::{inner, Real, Spinor, Vec2};

/// Residual above which a Chern number is rejected.
pub const QUANTIZATION_TOL: f64 = 1e-3;

/// Links with modulus below this are treated as a broken path.
const MIN_LINK: f64 = 1e-10;

/// Ordered momentum-space trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct KPath<T> {
    points: Vec<Vec2<T>>,
    closed: bool,
    /// `k_e - k_b` when it is a reciprocal-lattice vector.
    closure_g: Option<Vec2<T>>,
}

impl<T: Real> KPath<T> {
    fn build(points: Vec<Vec2<T>>, closed: bool, geom: &LatticeGeometry<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPath("a path needs at least two points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidPath("non-finite momentum".into()));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPath("consecutive points coincide".into()));
        }
        let delta = points[points.len() - 1] - points[0];
        let closure_g = geom.reciprocal_indices(delta).map(|(m, n)| geom.reciprocal(m, n));
        if closed && closure_g.is_none() {
            return Err(Error::InvalidPath(
                "closed path must end at its start or a reciprocal-equivalent point".into(),
            ));
        }
        Ok(KPath { points, closed, closure_g })
    }

    pub fn open(points: Vec<Vec2<T>>, geom: &LatticeGeometry<T>) -> Result<Self> {
        Self::build(points, false, geom)
    }

    /// A loop; the last point must equal the first up to a reciprocal vector.
    pub fn closed(points: Vec<Vec2<T>>, geom: &LatticeGeometry<T>) -> Result<Self> {
        Self::build(points, true, geom)
    }

    /// Straight segment with `n >= 2` equally spaced points, endpoints included.
    pub fn segment(a: Vec2<T>, b: Vec2<T>, n: usize, geom: &LatticeGeometry<T>) -> Result<Self> {
        Self::open(segment_points(a, b, n)?, geom)
    }

    /// Counter-clockwise circle of `n` links; the start point is repeated at the end.
    pub fn circle(center: Vec2<T>, radius: T, n: usize, geom: &LatticeGeometry<T>) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidPath("a circle needs at least 3 links".into()));
        }
        let mut pts: Vec<_> = (0..n)
            .map(|j| {
                let th = T::TAU() * T::lit(j as f64) / T::lit(n as f64);
                center + Vec2::new(th.cos(), th.sin()).scale(radius)
            })
            .collect();
        pts.push(pts[0]);
        Self::closed(pts, geom)
    }

    /// Straight legs through `vertices`, `n_per_leg` links each.
    pub fn polyline(
        vertices: &[Vec2<T>],
        n_per_leg: usize,
        closed: bool,
        geom: &LatticeGeometry<T>,
    ) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidPath("a polyline needs at least two vertices".into()));
        }
        let mut pts = vec![vertices[0]];
        for w in vertices.windows(2) {
            let leg = segment_points(w[0], w[1], n_per_leg + 1)?;
            pts.extend_from_slice(&leg[1..]);
        }
        Self::build(pts, closed, geom)
    }

    pub fn reversed(&self, geom: &LatticeGeometry<T>) -> Self {
        let mut pts = self.points.clone();
        pts.reverse();
        Self::build(pts, self.closed, geom).expect("reversal preserves validity")
    }

    /// Joins `other` onto the end of `self`; `other` must start where `self` ends.
    pub fn concat(&self, other: &Self, geom: &LatticeGeometry<T>) -> Result<Self> {
        if self.k_e() != other.k_b() {
            return Err(Error::InvalidPath("paths do not join".into()));
        }
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points[1..]);
        Self::open(pts, geom)
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn k_b(&self) -> Vec2<T> {
        self.points[0]
    }

    pub fn k_e(&self) -> Vec2<T> {
        self.points[self.points.len() - 1]
    }

    pub fn closure_g(&self) -> Option<Vec2<T>> {
        self.closure_g
    }

    pub fn length(&self) -> T {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

pub(crate) fn segment_points<T: Real>(a: Vec2<T>, b: Vec2<T>, n: usize) -> Result<Vec<Vec2<T>>> {
    if n < 2 {
        return Err(Error::InvalidPath("a segment needs at least two points".into()));
    }
    let last = T::lit((n - 1) as f64);
    Ok((0..n)
        .map(|j| if j == n - 1 { b } else { a.lerp(b, T::lit(j as f64) / last) })
        .collect())
}

/// How the endpoints of an open path are identified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    /// Endpoints differ by a reciprocal vector; compared through `V(G·e1)`.
    Sublattice,
    /// Endpoints joined by a straight segment back to the start.
    Geodesic,
}

impl std::str::FromStr for Closure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sublattice" => Ok(Closure::Sublattice),
            "geodesic" => Ok(Closure::Geodesic),
            other => Err(Error::InvalidParams(format!("unknown closure '{other}'"))),
        }
    }
}

/// Gauge-fixed eigenvectors of `band` at every point of `path`.
pub fn states_along<T: Real>(p: &ModelParams<T>, points: &[Vec2<T>], band: Band) -> Result<Vec<Spinor<T>>> {
    points
        .par_iter()
        .map(|&k| eigensystem(k, p).map(|es| *es.state(band)))
        .collect()
}

fn normalized_link<T: Real>(a: &Spinor<T>, b: &Spinor<T>) -> Result<Complex<T>> {
    let z = inner(a, b);
    let m = z.norm();
    if !(m > T::lit(MIN_LINK)) {
        return Err(Error::InvalidPath("neighbouring states are orthogonal; refine the path".into()));
    }
    Ok(z / m)
}

/// `Π_j ⟨u_j|u_{j+1}⟩`, each link normalized to unit modulus.
pub fn link_product<T: Real>(states: &[Spinor<T>]) -> Result<Complex<T>> {
    let mut acc = Complex::new(T::one(), T::zero());
    for w in states.windows(2) {
        acc = acc * normalized_link(&w[0], &w[1])?;
    }
    Ok(acc)
}

/// `arg[Π_j ⟨u_j|u_{j+1}⟩ · ⟨u_last|V(χ)|u_first⟩]`: the phase of the loop
/// closed by identifying the last point with the first shifted by a
/// reciprocal vector whose boundary phase is `chi`.
pub fn loop_phase_from_states<T: Real>(states: &[Spinor<T>], chi: T) -> Result<T> {
    let prod = link_product(states)?;
    let first = apply_boundary(chi, &states[0]);
    let close = normalized_link(&states[states.len() - 1], &first)?;
    Ok((prod * close).arg())
}

/// `Σ_j arg⟨u_j|u_{j+1}⟩` in the stored gauge; not gauge invariant.
pub fn connection_from_states<T: Real>(states: &[Spinor<T>]) -> Result<T> {
    let mut acc = T::zero();
    for w in states.windows(2) {
        acc += normalized_link(&w[0], &w[1])?.arg();
    }
    Ok(acc)
}

/// Berry phase of a closed path, in `(-π, π]`.
pub fn berry_phase_loop<T: Real>(p: &ModelParams<T>, path: &KPath<T>, band: Band) -> Result<T> {
    if !path.is_closed() {
        return Err(Error::InvalidPath("berry_phase_loop needs a closed path".into()));
    }
    let g = path.closure_g().expect("closed paths carry a closure vector");
    let chi = boundary_phase(g, &p.geometry)?;
    loop_phase_from_states(&states_along(p, path.points(), band)?, chi)
}

fn geodesic_points<T: Real>(from: Vec2<T>, to: Vec2<T>, path: &KPath<T>) -> Result<Vec<Vec2<T>>> {
    // Match the mean spacing of the open path.
    let spacing = path.length() / T::lit((path.len() - 1) as f64);
    let n = ((to - from).norm() / spacing).ceil().to_usize().unwrap_or(1).max(1);
    segment_points(from, to, n + 1)
}

/// Gauge-invariant phase of an open path in `(-π, π]`.
///
/// With [`Closure::Sublattice`] this is the Pancharatnam phase
/// `arg[Π_j ⟨u_j|u_{j+1}⟩ · ⟨u(k_e)|V(χ)|u(k_b)⟩]`, `χ = (k_e − k_b)·e1`.
/// With [`Closure::Geodesic`] the path is closed by a straight segment from
/// `k_e` back to `k_b`, giving the Berry phase of the enclosed area.
pub fn noncyclic_zak<T: Real>(
    p: &ModelParams<T>,
    path: &KPath<T>,
    band: Band,
    closure: Closure,
) -> Result<T> {
    match closure {
        Closure::Sublattice => {
            let g = path.closure_g().ok_or(Error::NoClosure)?;
            let chi = boundary_phase(g, &p.geometry)?;
            loop_phase_from_states(&states_along(p, path.points(), band)?, chi)
        }
        Closure::Geodesic => {
            let mut pts = path.points().to_vec();
            if path.k_e() != path.k_b() {
                let back = geodesic_points(path.k_e(), path.k_b(), path)?;
                pts.extend_from_slice(&back[1..]);
            }
            loop_phase_from_states(&states_along(p, &pts, band)?, T::zero())
        }
    }
}

/// Re-evaluates `noncyclic_zak` on paths built by `build(n)` with `n`
/// doubling from `n0` until successive phases agree within `tol`.
/// Returns the phase and the resolution used.
pub fn converged_zak<T, F>(
    p: &ModelParams<T>,
    build: F,
    band: Band,
    closure: Closure,
    n0: usize,
    tol: T,
    max_doublings: usize,
) -> Result<(T, usize)>
where
    T: Real,
    F: Fn(usize) -> Result<KPath<T>>,
{
    let mut n = n0.max(2);
    let mut prev = noncyclic_zak(p, &build(n)?, band, closure)?;
    for _ in 0..max_doublings {
        let next_n = n * 2;
        let next = noncyclic_zak(p, &build(next_n)?, band, closure)?;
        let change = crate::scalar::wrap_phase(next - prev).abs();
        n = next_n;
        prev = next;
        if change < tol {
            break;
        }
    }
    Ok((prev, n))
}

/// Discretized `∫⟨u|∂_k|u⟩·dk` along `path` in the module's fixed gauge,
/// as the sum of link-overlap phases.
pub fn connection_integral<T: Real>(p: &ModelParams<T>, path: &KPath<T>, band: Band) -> Result<T> {
    connection_from_states(&states_along(p, path.points(), band)?)
}

/// [`connection_integral`] along the straight segment `a → b` with `n`
/// points. A zero-length segment gives exactly zero.
pub fn connection_integral_segment<T: Real>(
    p: &ModelParams<T>,
    a: Vec2<T>,
    b: Vec2<T>,
    n: usize,
    band: Band,
) -> Result<T> {
    if a == b {
        eigensystem(a, p)?;
        return Ok(T::zero());
    }
    connection_integral(p, &KPath::segment(a, b, n, &p.geometry)?, band)
}

/// Chern-number estimate from the two site phases, `(φ_I + φ_II)/π`.
pub fn chern_from_zak<T: Real>(phi_i: T, phi_ii: T) -> T {
    (phi_i + phi_ii) / T::PI()
}

/// Plaquette Berry fluxes over the Brillouin-zone torus.
#[derive(Clone, Debug, PartialEq)]
pub struct BerryField<T> {
    pub n: usize,
    pub band: Band,
    /// Row-major `n×n`: index `i*n + j` is the plaquette at `(i b1 + j b2)/n`.
    pub plaquette_flux: Vec<T>,
    pub total: T,
    pub geometry: LatticeGeometry<T>,
}

impl<T: Real> BerryField<T> {
    pub fn chern_estimate(&self) -> T {
        self.total / T::TAU()
    }

    /// Plaquette centre of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> Vec2<T> {
        let nf = T::lit(self.n as f64);
        let half = T::lit(0.5);
        self.geometry
            .fractional((T::lit(i as f64) + half) / nf, (T::lit(j as f64) + half) / nf)
    }

    /// Rows of `(kx, ky, flux)` at plaquette centres.
    pub fn rows(&self) -> impl Iterator<Item = (Vec2<T>, T)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).map(move |j| (self.center(i, j), self.plaquette_flux[i * self.n + j]))
        })
    }
}

/// Plaquette fluxes from an `n×n` grid of states at `(i b1 + j b2)/n`.
/// `chi1`/`chi2` are the boundary phases of `b1`/`b2`; `ccw` selects the
/// traversal order that makes each plaquette counter-clockwise.
pub fn fhs_flux_from_states<T: Real>(
    states: &[Spinor<T>],
    n: usize,
    chi1: T,
    chi2: T,
    ccw_b1_first: bool,
) -> Result<Vec<T>> {
    assert_eq!(states.len(), n * n, "state grid must be n×n");
    let at = |i: usize, j: usize| -> Spinor<T> {
        let mut chi = T::zero();
        if i == n {
            chi += chi1;
        }
        if j == n {
            chi += chi2;
        }
        apply_boundary(chi, &states[(i % n) * n + (j % n)])
    };
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let corners = if ccw_b1_first {
                [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]
            } else {
                [at(i, j), at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)]
            };
            let mut prod = Complex::new(T::one(), T::zero());
            for c in 0..4 {
                prod = prod * normalized_link(&corners[c], &corners[(c + 1) % 4])?;
            }
            let flux = prod.arg();
            if flux.abs() >= T::PI() {
                return Err(Error::PlaquetteSaturated { flux: flux.to_f64_lossy() });
            }
            Ok(flux)
        })
        .collect()
}

/// Lattice field-strength Berry curvature on an `n×n` grid.
pub fn berry_curvature_fhs<T: Real>(p: &ModelParams<T>, n: usize, band: Band) -> Result<BerryField<T>> {
    if n < 6 {
        return Err(Error::InvalidParams(format!("curvature grid n = {n} must be >= 6")));
    }
    let g = &p.geometry;
    let nf = T::lit(n as f64);
    let points: Vec<_> = (0..n * n)
        .map(|idx| g.fractional(T::lit((idx / n) as f64) / nf, T::lit((idx % n) as f64) / nf))
        .collect();
    let states = states_along(p, &points, band)?;
    let chi1 = boundary_phase(g.b1, g)?;
    let chi2 = boundary_phase(g.b2, g)?;
    let flux = fhs_flux_from_states(&states, n, chi1, chi2, g.b1.cross(g.b2) > T::zero())?;
    let total = flux.iter().copied().sum();
    Ok(BerryField { n, band, plaquette_flux: flux, total, geometry: *g })
}

/// Integer Chern number of the lower band with its quantization residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ChernNumber<T> {
    pub value: i32,
    pub residual: T,
    pub total: T,
    pub n: usize,
}

pub fn chern_number<T: Real>(p: &ModelParams<T>, n: usize) -> Result<ChernNumber<T>> {
    let field = berry_curvature_fhs(p, n, Band::Lower)?;
    chern_from_field(&field)
}

pub fn chern_from_field<T: Real>(field: &BerryField<T>) -> Result<ChernNumber<T>> {
    let c = field.chern_estimate();
    let value = c.round();
    let residual = (c - value).abs();
    if residual > T::lit(QUANTIZATION_TOL) {
        return Err(Error::NotQuantized { residual: residual.to_f64_lossy() });
    }
    Ok(ChernNumber {
        value: value.to_i32().unwrap_or(i32::MAX),
        residual,
        total: field.total,
        n: field.n,
    })
}
