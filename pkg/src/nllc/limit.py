"""Limit elastic energy, constrained harmonic minimisation, and convergence checks.

The small-scale problems relax toward fields valued in the vacuum orbit
N = s0 * O; this module provides the quadratic elastic energy with tensor L
on such fields, a projected-gradient minimiser that keeps the constraint
exact per cell, a detector for concentration of the limit Dirichlet density,
and the two-sided convergence diagnostics comparing small-scale energies with
the limit energy on balls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterations, ResolutionMismatch
from .field import Domain, OrderField, ball_mask, local_energy
from .kernel import ElasticTensor, SampledKernel
from .potential import BulkPotential, q_tensor_coords


# ---------------------------------------------------------------------------
# orbit-valued fields


def project_orbit(y: np.ndarray, s0: float, kind: str) -> np.ndarray:
    """Closest point on the s0-orbit, per cell.

    kind "s1": radial projection in the plane.  kind "s2": reconstruct the
    traceless symmetric matrix, keep the top eigenvector n and return the
    uniaxial coordinates s0 * sigma(n).  Cells at y = 0 fall back to the
    first coordinate axis representative.
    """
    y = np.asarray(y, dtype=float)
    if kind == "s1":
        n = np.linalg.norm(y, axis=-1, keepdims=True)
        safe = np.where(n > 1e-300, n, 1.0)
        out = s0 * y / safe
        ref = np.zeros_like(y)
        ref[..., 0] = s0
        return np.where(n > 1e-300, out, ref)
    if kind == "s2":
        from .potential import coords_to_matrix

        Q = coords_to_matrix(y)
        _, vecs = np.linalg.eigh(Q)
        n = vecs[..., :, -1]
        return s0 * q_tensor_coords(n)
    raise ValueError(f"unknown orbit kind {kind!r}")


def _angle_of(values: np.ndarray) -> np.ndarray:
    return np.arctan2(values[..., 1], values[..., 0])


@dataclass
class ManifoldField:
    """Orbit-valued field: parameters per cell plus the common radius s0.

    S1-orbit fields store the planar angle of the order parameter; S2-orbit
    fields store the unit director whose uniaxial coordinates give the value.
    """

    domain: Domain
    s0: float
    kind: str  # "s1" | "s2"
    angle: np.ndarray | None = None  # (Nx,Ny,Nz) for kind == "s1"
    frame: np.ndarray | None = None  # (Nx,Ny,Nz,3) unit vectors for kind == "s2"

    def __post_init__(self):
        if self.kind == "s1":
            if self.angle is None or self.angle.shape != self.domain.shape:
                raise ValueError("s1 orbit field needs an angle array matching the domain")
        elif self.kind == "s2":
            if self.frame is None or self.frame.shape != self.domain.shape + (3,):
                raise ValueError("s2 orbit field needs a frame array matching the domain")
            nrm = np.linalg.norm(self.frame, axis=-1)
            if np.max(np.abs(nrm - 1.0)) > 1e-9:
                raise ValueError("frame vectors must be unit")
        else:
            raise ValueError(f"unknown orbit kind {self.kind!r}")

    @property
    def m(self) -> int:
        return 2 if self.kind == "s1" else 5

    @property
    def values(self) -> np.ndarray:
        if self.kind == "s1":
            return self.s0 * np.stack([np.cos(self.angle), np.sin(self.angle)], axis=-1)
        return self.s0 * q_tensor_coords(self.frame)

    def copy(self) -> "ManifoldField":
        return ManifoldField(
            self.domain,
            self.s0,
            self.kind,
            None if self.angle is None else self.angle.copy(),
            None if self.frame is None else self.frame.copy(),
        )

    @staticmethod
    def from_ambient(domain: Domain, s0: float, kind: str, y: np.ndarray) -> "ManifoldField":
        """Retract an ambient (Nx,Ny,Nz,m) array onto the orbit cellwise."""
        v = project_orbit(y, s0, kind)
        if kind == "s1":
            return ManifoldField(domain, s0, kind, angle=_angle_of(v))
        from .potential import coords_to_matrix

        Q = coords_to_matrix(v)
        _, vecs = np.linalg.eigh(Q)
        return ManifoldField(domain, s0, kind, frame=vecs[..., :, -1])

    def order_field(self, eps: float) -> OrderField:
        return OrderField(self.domain, eps, self.values)


# ---------------------------------------------------------------------------
# limit energy


def _central_gradient(values: np.ndarray, h: float, omega: np.ndarray) -> np.ndarray:
    """(Nx,Ny,Nz,3,m) central differences, zeroed off Omega.

    Every Omega cell has neighbours in the box (the domain keeps a padding
    layer), so the one-cell shifts never wrap meaningful data into Omega.
    """
    g = np.zeros(values.shape[:3] + (3,) + values.shape[3:])
    for i in range(3):
        g[..., i, :] = (np.roll(values, -1, axis=i) - np.roll(values, 1, axis=i)) / (2.0 * h)
    g[~omega] = 0.0
    return g


def limit_energy(mfield: ManifoldField, L: ElasticTensor, region: np.ndarray | None = None) -> float:
    """int_G L grad(u) . grad(u) with central differences and midpoint cells.

    G defaults to Omega; a boolean mask restricts the quadrature to
    G intersect Omega.
    """
    dom = mfield.domain
    omega = dom.omega_mask
    if region is not None:
        omega = omega & np.asarray(region, dtype=bool)
    g = _central_gradient(mfield.values, dom.h, omega)
    e = np.einsum("ijab,xyzia,xyzjb->", L.L, g, g) * dom.cell_volume
    return float(e)


def dirichlet_energy(mfield: ManifoldField, region: np.ndarray | None = None) -> float:
    """int_G |grad u|^2 with the same differencing as limit_energy."""
    dom = mfield.domain
    omega = dom.omega_mask
    if region is not None:
        omega = omega & np.asarray(region, dtype=bool)
    g = _central_gradient(mfield.values, dom.h, omega)
    return float(np.sum(g * g) * dom.cell_volume)


def _forward_objective(values: np.ndarray, L: ElasticTensor, dom: Domain):
    """Forward-difference form of the limit energy and its Euclidean gradient.

    The central-difference quadrature of limit_energy is blind to
    checkerboard modes (odd/even sublattices decouple), so descending on it
    drifts away from the harmonic extension.  The forward-difference form of
    the same quadratic has no null mode, agrees with it to O(h^2) on smooth
    fields, and is what the minimiser descends on; limit_energy stays the
    reporting quadrature.

    Links count when either endpoint lies in Omega; keeping only Omega-based
    links would leave the negative-side boundary trace uncoupled.
    """
    omega = dom.omega_mask
    h = dom.h
    g = np.zeros(values.shape[:3] + (3,) + values.shape[3:])
    for i in range(3):
        live = omega | np.roll(omega, -1, axis=i)
        d = (np.roll(values, -1, axis=i) - values) / h
        g[..., i, :] = np.where(live[..., None], d, 0.0)
    flux = np.einsum("ijab,xyzjb->xyzia", L.L, g)
    energy = float(np.sum(flux * g)) * dom.cell_volume
    grad = np.zeros_like(values)
    for i in range(3):
        grad += (np.roll(flux[..., i, :], 1, axis=i) - flux[..., i, :]) * (2.0 / h)
    return energy, grad


@dataclass
class LimitSolveResult:
    mfield: ManifoldField
    energies: list
    residuals: list
    iterations: int
    reason: str

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def harmonic_minimize(
    boundary: ManifoldField,
    L: ElasticTensor,
    tol: float = 1e-8,
    max_iter: int = 5000,
    step: float | None = None,
    interior_init: np.ndarray | None = None,
) -> LimitSolveResult:
    """Minimise the limit energy over orbit-valued fields with fixed trace.

    Projected gradient descent: Euclidean step on the interior cells followed
    by the closest-point retraction onto the orbit.  The descent objective is
    the forward-difference quadrature (see _forward_objective); recorded
    energies are its values.  Stationarity is measured as the sup-norm of the
    retracted update per unit step.  Raises MaxIterations (with the best
    iterate attached) when the budget runs out.
    """
    dom = boundary.domain
    om = dom.omega_mask
    s0, kind = boundary.s0, boundary.kind
    vals = boundary.values
    if interior_init is not None:
        vals[om] = project_orbit(interior_init[om], s0, kind)
    if step is None:
        # Rayleigh bound: the discrete operator norm is <= lam_max * 24/h^2
        flat = L.L.transpose(0, 2, 1, 3).reshape(3 * boundary.m, 3 * boundary.m)
        lam = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (flat + flat.T)))))
        step = dom.h**2 / (24.0 * max(lam, 1e-300))
    energy, grad = _forward_objective(vals, L, dom)
    energies = [energy]
    residuals: list = []
    reason = "max_iterations"
    it = 0
    tau = step
    # cap per-iteration motion: large retracted steps can wrap around the
    # orbit and settle into rough metastable configurations
    move_cap = 0.2 * s0
    while it < max_iter:
        it += 1
        sup_g = float(np.max(np.linalg.norm(grad[om], axis=-1))) if om.any() else 0.0
        tau_eff = min(tau, move_cap / sup_g) if sup_g > 0 else tau
        trial = vals.copy()
        trial[om] = project_orbit(vals[om] - tau_eff * grad[om], s0, kind)
        res = float(np.max(np.linalg.norm(trial[om] - vals[om], axis=-1))) / tau_eff if om.any() else 0.0
        e_trial, g_trial = _forward_objective(trial, L, dom)
        if e_trial > energies[-1] + 1e-14 * (1.0 + abs(energies[-1])):
            tau *= 0.5
            if tau < 1e-8 * step:
                reason = "step_exhausted"
                break
            continue
        vals, grad = trial, g_trial
        energies.append(e_trial)
        residuals.append(res)
        tau = min(tau * 1.5, 8.0 * step)
        if res <= tol:
            reason = "converged"
            break
    result = LimitSolveResult(ManifoldField.from_ambient(dom, s0, kind, vals), energies, residuals, it, reason)
    if reason == "max_iterations":
        raise MaxIterations(
            f"no stationarity below {tol:g} in {max_iter} iterations", result=result
        )
    return result


def harmonic_multistart(
    boundary: ManifoldField,
    L: ElasticTensor,
    n_random: int = 2,
    seed: int = 0,
    **kwargs,
):
    """harmonic_minimize from the trace extension and seeded random interiors."""
    rng = np.random.default_rng(seed)
    om = boundary.domain.omega_mask
    starts = [("boundary", None)]
    for k in range(n_random):
        y = rng.standard_normal(boundary.values.shape)
        starts.append((f"random{k}", y))
    best = None
    log = []
    for label, init in starts:
        try:
            res = harmonic_minimize(boundary, L, interior_init=init, **kwargs)
        except MaxIterations as exc:
            res = exc.result
        log.append((label, res.energies[-1]))
        if best is None or res.energies[-1] < best.energies[-1]:
            best = res
    return best, log


# ---------------------------------------------------------------------------
# singular-set detector


@dataclass
class SingularSetReport:
    radii: np.ndarray  # decreasing ladder
    densities: np.ndarray  # (n_radii, Nx, Ny, Nz) scaled local energies
    flagged: np.ndarray  # bool (Nx,Ny,Nz), threshold exceeded at smallest rho
    threshold: float

    @property
    def flagged_fraction(self) -> float:
        return float(self.flagged.sum()) / float(max(1, self.flagged.size))

    def flagged_at(self, threshold: float) -> np.ndarray:
        return self.densities[-1] > threshold


def singular_set(
    mfield: ManifoldField,
    radii,
    threshold: float,
) -> SingularSetReport:
    """Scaled Dirichlet densities rho^-1 int_{B_rho(x)} |grad u|^2 per cell.

    Cells whose density at the smallest resolvable rho exceeds the threshold
    are flagged.  Radii below 4h are rejected.
    """
    dom = mfield.domain
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if radii.size == 0:
        raise ValueError("empty radii ladder")
    if radii[-1] < 4.0 * dom.h:
        raise ResolutionMismatch(
            f"smallest radius {radii[-1]:g} below the resolvable scale 4h = {4 * dom.h:g}"
        )
    omega = dom.omega_mask
    g = _central_gradient(mfield.values, dom.h, omega)
    dens = np.sum(g * g, axis=(-2, -1)) * dom.cell_volume  # per-cell energy
    from scipy.signal import fftconvolve

    tables = np.empty((radii.size,) + dom.shape)
    for k, rho in enumerate(radii):
        S = int(np.floor(rho / dom.h + 1e-12))
        idx = np.arange(-S, S + 1) * dom.h
        Z = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1)
        ball = (np.linalg.norm(Z, axis=-1) <= rho).astype(float)
        tables[k] = fftconvolve(dens, ball, mode="same") / rho
    flagged = (tables[-1] > threshold) & omega
    return SingularSetReport(radii, tables, flagged, threshold)


# ---------------------------------------------------------------------------
# two-sided convergence checks


@dataclass
class GammaGapRow:
    eps: float
    f_eps: float
    e_limit: float

    @property
    def gap(self) -> float:
        return self.f_eps - self.e_limit


def gamma_limsup_check(
    v: ManifoldField,
    kernels: list[SampledKernel],
    bulks: list[BulkPotential],
    L: ElasticTensor,
    region: np.ndarray | None = None,
) -> list[GammaGapRow]:
    """F_eps(v, G) against the limit energy on G for an eps ladder.

    kernels and bulks are aligned lists (one entry per eps, common grid).
    The recovery family is the fixed orbit-valued map itself, so the gaps
    measure the upper-bound direction directly.
    """
    dom = v.domain
    if region is None:
        region = dom.omega_mask
    region = np.asarray(region, dtype=bool)
    e0 = limit_energy(v, L, region=region)
    rows = []
    for sk, bulk in zip(kernels, bulks):
        if sk.eps < 4.0 * dom.h:
            raise ResolutionMismatch(
                f"eps = {sk.eps:g} below the resolvable scale 4h = {4 * dom.h:g}"
            )
        u = v.order_field(sk.eps)
        f = local_energy(u, region, sk, bulk)
        rows.append(GammaGapRow(sk.eps, f, e0))
    return rows


@dataclass
class LiminfRow:
    eps: float
    center: tuple
    radius: float
    f_eps: float
    e_limit: float
    l2_half: float  # ||u_eps - u0||_{L^2} on the half-radius ball

    @property
    def gap(self) -> float:
        return self.f_eps - self.e_limit


def gamma_liminf_check(
    fields: list[OrderField],
    kernels: list[SampledKernel],
    bulks: list[BulkPotential],
    u0: ManifoldField,
    L: ElasticTensor,
    balls,
) -> list[LiminfRow]:
    """Per-ball table of F_eps(u_eps, B_s) vs the limit energy and L2 gaps.

    All fields must live on u0's grid; balls is an iterable of (center, s).
    """
    dom = u0.domain
    v0 = u0.values
    rows = []
    for u, sk, bulk in zip(fields, kernels, bulks):
        if u.domain.shape != dom.shape or abs(u.domain.h - dom.h) > 1e-12:
            raise ResolutionMismatch("fields and the limit must share a grid")
        for center, s in balls:
            mask = ball_mask(dom, center, s)
            f = local_energy(u, mask, sk, bulk)
            e0 = limit_energy(u0, L, region=mask)
            half = ball_mask(dom, center, 0.5 * s) & dom.omega_mask
            diff = u.values[half] - v0[half]
            l2 = float(np.sqrt(np.sum(diff * diff) * dom.cell_volume))
            rows.append(LiminfRow(sk.eps, tuple(np.asarray(center, dtype=float)), s, f, e0, l2))
    return rows


# ---------------------------------------------------------------------------
# boundary presets on orbit coordinates


def orbit_boundary(preset: str, domain: Domain, s0: float, kind: str, **params) -> ManifoldField:
    """Orbit-valued analogues of the boundary presets.

    constant: the representative state everywhere.  smooth-angle: ambient
    angle slope * x1 (bounded gradients, degree 0).  vortex: planar argument
    function times the winding (singular along the x3-axis).
    """
    x = domain.cell_centers()
    if preset == "constant":
        phi = np.zeros(domain.shape)
    elif preset == "smooth-angle":
        phi = params.get("slope", 1.0) * x[..., 0]
    elif preset == "vortex":
        phi = params.get("winding", 1.0) * np.arctan2(x[..., 1], x[..., 0])
    else:
        raise ValueError(f"unknown boundary preset {preset!r}")
    if kind == "s1":
        return ManifoldField(domain, s0, kind, angle=phi)
    half = 0.5 * phi
    n = np.stack([np.cos(half), np.sin(half), np.zeros_like(half)], axis=-1)
    return ManifoldField(domain, s0, kind, frame=n)
