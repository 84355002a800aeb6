//! Haldane Bloch Hamiltonian on the honeycomb lattice.
//!
//! The Hamiltonian is written in the nearest-neighbour-vector convention,
//!
//! ```text
//! H(k) = h0 I + hx σx + hy σy + hz σz
//! h0 = -2 t' cos φ Σ cos(k·v_i)    hz = -2 t' sin φ Σ sin(k·v_i)
//! hx = -t Σ cos(k·e_i)             hy = -t Σ sin(k·e_i)
//! ```
//!
//! which is periodic in the reciprocal lattice only up to a sublattice
//! unitary: `H(k + G) = V H(k) V†` with `V = diag(1, e^{iχ})`, `χ = G·e1`.
//! [`boundary_phase`] and [`boundary_unitary`] expose that unitary so that
//! states at reciprocal-equivalent momenta can be compared.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{canonical_split, cis, wrap_positive, Mat2, Real, Spinor, Vec2};

/// Tolerance for recognising integer reciprocal-lattice coordinates.
pub const RECIPROCAL_TOL: f64 = 1e-9;

/// Gap below which eigenvectors are considered non-deterministic, in units of `t`.
pub const GAP_TOL: f64 = 1e-9;

/// Honeycomb geometry: nearest-neighbour vectors `e`, next-nearest-neighbour
/// lattice vectors `v`, reciprocal vectors and the two Dirac points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct LatticeGeometry<T> {
    pub a: T,
    pub e: [Vec2<T>; 3],
    pub v: [Vec2<T>; 3],
    pub b1: Vec2<T>,
    pub b2: Vec2<T>,
    /// Dirac point `K = (4π/(3√3a), 0)`.
    pub k: Vec2<T>,
    /// Dirac point `K' = (-4π/(3√3a), 0)`.
    pub kp: Vec2<T>,
}

impl<T: Real> LatticeGeometry<T> {
    pub fn new(a: T) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidParams(format!("lattice length a = {a} must be > 0")));
        }
        let s3 = T::lit(3.0).sqrt();
        let half = T::lit(0.5);
        let pi = T::PI();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        let e = [
            Vec2::new(T::zero(), a),
            Vec2::new(-s3 * a * half, -a * half),
            Vec2::new(s3 * a * half, -a * half),
        ];
        let v = [
            Vec2::new(s3 * a, T::zero()),
            Vec2::new(-s3 * a * half, three * a * half),
            Vec2::new(-s3 * a * half, -three * a * half),
        ];
        let b1 = Vec2::new(T::zero(), four * pi / (three * a));
        let b2 = Vec2::new(two * pi / (s3 * a), -two * pi / (three * a));
        let kd = four * pi / (three * s3 * a);
        Ok(LatticeGeometry {
            a,
            e,
            v,
            b1,
            b2,
            k: Vec2::new(kd, T::zero()),
            kp: Vec2::new(-kd, T::zero()),
        })
    }

    /// Real-space vectors dual to `b1, b2` (`a_i·b_j = 2π δ_ij`).
    pub fn dual_vectors(&self) -> (Vec2<T>, Vec2<T>) {
        let det = self.b1.cross(self.b2);
        let tau = T::TAU();
        let a1 = Vec2::new(self.b2.y, -self.b2.x).scale(tau / det);
        let a2 = Vec2::new(-self.b1.y, self.b1.x).scale(tau / det);
        (a1, a2)
    }

    /// Fractional coordinates `(m, n)` with `q = m b1 + n b2`.
    pub fn reciprocal_coords(&self, q: Vec2<T>) -> (T, T) {
        let (a1, a2) = self.dual_vectors();
        (q.dot(a1) / T::TAU(), q.dot(a2) / T::TAU())
    }

    /// Integer coordinates of `g` if it is a reciprocal-lattice vector.
    pub fn reciprocal_indices(&self, g: Vec2<T>) -> Option<(i64, i64)> {
        let (m, n) = self.reciprocal_coords(g);
        let tol = T::lit(RECIPROCAL_TOL);
        let (mr, nr) = (m.round(), n.round());
        if (m - mr).abs() < tol && (n - nr).abs() < tol {
            Some((mr.to_i64()?, nr.to_i64()?))
        } else {
            None
        }
    }

    pub fn reciprocal(&self, m: i64, n: i64) -> Vec2<T> {
        self.b1.scale(T::lit(m as f64)) + self.b2.scale(T::lit(n as f64))
    }

    /// Momentum at fractional coordinates of the Brillouin-zone torus.
    pub fn fractional(&self, s1: T, s2: T) -> Vec2<T> {
        self.b1.scale(s1) + self.b2.scale(s2)
    }

    /// Area of the Brillouin zone.
    pub fn bz_area(&self) -> T {
        self.b1.cross(self.b2).abs()
    }
}

/// Haldane couplings. Units: ħ = 1; `t` sets the energy scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ModelParams<T> {
    /// Nearest-neighbour hopping.
    pub t: T,
    /// Next-nearest-neighbour hopping t'.
    pub tp: T,
    /// Flux phase φ in radians, `(-2π, 2π]`.
    pub phi: T,
    pub geometry: LatticeGeometry<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(t: T, tp: T, phi: T) -> Result<Self> {
        Self::with_lattice(t, tp, phi, T::one())
    }

    pub fn with_lattice(t: T, tp: T, phi: T, a: T) -> Result<Self> {
        let p = ModelParams { t, tp, phi, geometry: LatticeGeometry::new(a)? };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > T::zero()) || !self.t.is_finite() {
            return Err(Error::InvalidParams(format!("t = {} must be > 0", self.t)));
        }
        if !(self.tp >= T::zero()) || !self.tp.is_finite() {
            return Err(Error::InvalidParams(format!("t' = {} must be >= 0", self.tp)));
        }
        let tau = T::TAU();
        if !(self.phi > -tau && self.phi <= tau) {
            return Err(Error::InvalidParams(format!("phi = {} outside (-2π, 2π]", self.phi)));
        }
        Ok(())
    }

    /// Gap tolerance in energy units.
    pub fn gap_tol(&self) -> T {
        T::lit(GAP_TOL) * self.t
    }

    /// Analytic gap at the Dirac points, `2·3√3·t'·|sin φ|`.
    pub fn dirac_gap(&self) -> T {
        T::lit(6.0) * T::lit(3.0).sqrt() * self.tp * self.phi.sin().abs()
    }

    /// Velocity of the massless Dirac cone, `3ta/2`.
    pub fn dirac_velocity(&self) -> T {
        T::lit(1.5) * self.t * self.geometry.a
    }
}

/// Coefficients of `I, σx, σy, σz` at one momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochComponents<T> {
    pub h0: T,
    pub hx: T,
    pub hy: T,
    pub hz: T,
}

impl<T: Real> BlochComponents<T> {
    /// `|(hx, hy, hz)|`, half the band splitting.
    pub fn magnitude(&self) -> T {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    pub fn matrix(&self) -> Mat2<T> {
        let z = T::zero();
        [
            [Complex::new(self.h0 + self.hz, z), Complex::new(self.hx, -self.hy)],
            [Complex::new(self.hx, self.hy), Complex::new(self.h0 - self.hz, z)],
        ]
    }
}

pub fn bloch_components<T: Real>(k: Vec2<T>, p: &ModelParams<T>) -> BlochComponents<T> {
    let g = &p.geometry;
    let (mut sc, mut ss, mut nc, mut ns) = (T::zero(), T::zero(), T::zero(), T::zero());
    for i in 0..3 {
        let (s, c) = k.dot(g.v[i]).sin_cos();
        sc += c;
        ss += s;
        let (s, c) = k.dot(g.e[i]).sin_cos();
        nc += c;
        ns += s;
    }
    let two = T::lit(2.0);
    let (sphi, cphi) = p.phi.sin_cos();
    BlochComponents {
        h0: -two * p.tp * cphi * sc,
        hz: -two * p.tp * sphi * ss,
        hx: -p.t * nc,
        hy: -p.t * ns,
    }
}

pub fn hamiltonian<T: Real>(k: Vec2<T>, p: &ModelParams<T>) -> Mat2<T> {
    bloch_components(k, p).matrix()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lower,
    Upper,
}

/// Energies and gauge-fixed eigenvectors at one momentum.
///
/// Gauge: the sublattice component of largest modulus is real and positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEigensystem<T> {
    pub k: Vec2<T>,
    pub e_lower: T,
    pub e_upper: T,
    pub u_lower: Spinor<T>,
    pub u_upper: Spinor<T>,
    pub gap: T,
}

impl<T: Real> BandEigensystem<T> {
    pub fn state(&self, band: Band) -> &Spinor<T> {
        match band {
            Band::Lower => &self.u_lower,
            Band::Upper => &self.u_upper,
        }
    }

    pub fn energy(&self, band: Band) -> T {
        match band {
            Band::Lower => self.e_lower,
            Band::Upper => self.e_upper,
        }
    }
}

/// Eigenvector of `h·σ` with eigenvalue `sign·|h|`, gauge fixed.
fn eigenvector<T: Real>(h: &BlochComponents<T>, d: T, upper: bool) -> Spinor<T> {
    let z = T::zero();
    let (hx, hy, hz) = (h.hx, h.hy, h.hz);
    // Two algebraically equivalent null vectors of (h·σ - λ); pick the better conditioned one.
    let cand = if upper {
        if hz >= z {
            [Complex::new(d + hz, z), Complex::new(hx, hy)]
        } else {
            [Complex::new(hx, -hy), Complex::new(d - hz, z)]
        }
    } else if hz >= z {
        [Complex::new(hx, -hy), Complex::new(-(hz + d), z)]
    } else {
        [Complex::new(-(d - hz), z), Complex::new(hx, hy)]
    };
    canonical_split(&cand).1
}

pub fn eigensystem<T: Real>(k: Vec2<T>, p: &ModelParams<T>) -> Result<BandEigensystem<T>> {
    eigensystem_with_tol(k, p, p.gap_tol())
}

pub fn eigensystem_with_tol<T: Real>(
    k: Vec2<T>,
    p: &ModelParams<T>,
    gap_tol: T,
) -> Result<BandEigensystem<T>> {
    let h = bloch_components(k, p);
    let d = h.magnitude();
    let gap = d + d;
    if !(gap >= gap_tol) || gap == T::zero() {
        return Err(Error::GaplessPoint {
            kx: k.x.to_f64_lossy(),
            ky: k.y.to_f64_lossy(),
            gap: gap.to_f64_lossy(),
        });
    }
    Ok(BandEigensystem {
        k,
        e_lower: h.h0 - d,
        e_upper: h.h0 + d,
        u_lower: eigenvector(&h, d, false),
        u_upper: eigenvector(&h, d, true),
        gap,
    })
}

/// Sublattice boundary phase `χ = G·e1 mod 2π`, in `[0, 2π)`.
pub fn boundary_phase<T: Real>(g: Vec2<T>, geom: &LatticeGeometry<T>) -> Result<T> {
    if geom.reciprocal_indices(g).is_none() {
        return Err(Error::NotReciprocal { x: g.x.to_f64_lossy(), y: g.y.to_f64_lossy() });
    }
    Ok(wrap_positive(g.dot(geom.e[0])))
}

/// `V(χ) = diag(1, e^{iχ})`, so that `H(k+G) = V H(k) V†`.
pub fn boundary_unitary<T: Real>(chi: T) -> Mat2<T> {
    let z = Complex::new(T::zero(), T::zero());
    [[Complex::new(T::one(), T::zero()), z], [z, cis(chi)]]
}

/// Applies `V(χ)` to a sublattice spinor.
#[inline]
pub fn apply_boundary<T: Real>(chi: T, u: &Spinor<T>) -> Spinor<T> {
    [u[0], u[1] * cis(chi)]
}

fn gap_at<T: Real>(p: &ModelParams<T>, s1: T, s2: T) -> T {
    let h = bloch_components(p.geometry.fractional(s1, s2), p);
    let d = h.magnitude();
    d + d
}

/// Minimum direct band gap: an `n×n` scan of the Brillouin-zone torus
/// followed by a compass search around the best grid point.
pub fn band_gap_min<T: Real>(p: &ModelParams<T>, n: usize) -> Result<T> {
    if n < 16 {
        return Err(Error::InvalidParams(format!("gap grid n = {n} must be >= 16")));
    }
    let nf = T::lit(n as f64);
    let (mut best, mut s1, mut s2) = (T::infinity(), T::zero(), T::zero());
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (T::lit(i as f64) / nf, T::lit(j as f64) / nf);
            let g = gap_at(p, a, b);
            if g < best {
                best = g;
                s1 = a;
                s2 = b;
            }
        }
    }
    let mut step = T::one() / nf;
    let floor = T::lit(1e-13);
    let dirs: [(f64, f64); 8] =
        [(1., 0.), (-1., 0.), (0., 1.), (0., -1.), (1., 1.), (-1., -1.), (1., -1.), (-1., 1.)];
    while step > floor {
        let mut improved = false;
        for &(dx, dy) in &dirs {
            let (a, b) = (s1 + step * T::lit(dx), s2 + step * T::lit(dy));
            let g = gap_at(p, a, b);
            if g < best {
                best = g;
                s1 = a;
                s2 = b;
                improved = true;
            }
        }
        if !improved {
            step = step * T::lit(0.5);
        }
    }
    Ok(best)
}

/// `max e_upper - min e_lower` over an `n×n` grid.
pub fn bandwidth<T: Real>(p: &ModelParams<T>, n: usize) -> T {
    let nf = T::lit(n as f64);
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for i in 0..n {
        for j in 0..n {
            let k = p.geometry.fractional(T::lit(i as f64) / nf, T::lit(j as f64) / nf);
            let h = bloch_components(k, p);
            let d = h.magnitude();
            lo = lo.min(h.h0 - d);
            hi = hi.max(h.h0 + d);
        }
    }
    hi - lo
}
