"""Microscopic models and the singular / bulk potentials.

The microscopic state space is a compact manifold with a probability
quadrature and an order-parameter map sigma into R^m.  The singular
potential psi_s(u) is the minimum relative entropy over densities with
prescribed sigma-moment u; it is evaluated through its convex dual, the
log-partition function lnZ(b), with Lambda = grad psi_s and
Lambda^{-1} = grad lnZ forming a Legendre pair.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateMinimum, OutsideMomentDomain

# Dual-variable cap: |b| beyond this is treated as "u outside or at the
# boundary of the moment set" (psi_s = +infinity in the continuum model).
DEFAULT_B_CAP = 50.0


def sym0_basis() -> np.ndarray:
    """Frobenius-orthonormal basis of traceless symmetric 3x3 matrices, shape (5, 3, 3)."""
    s2 = 1.0 / np.sqrt(2.0)
    s6 = 1.0 / np.sqrt(6.0)
    E = np.zeros((5, 3, 3))
    E[0] = np.diag([s2, -s2, 0.0])
    E[1] = np.diag([s6, s6, -2.0 * s6])
    E[2, 0, 1] = E[2, 1, 0] = s2
    E[3, 0, 2] = E[3, 2, 0] = s2
    E[4, 1, 2] = E[4, 2, 1] = s2
    return E


_SYM0_BASIS = sym0_basis()


def q_tensor_coords(p: np.ndarray) -> np.ndarray:
    """Coordinates of sqrt(3/2) * (p (x) p - I/3) in the orthonormal basis.

    The sqrt(3/2) scaling makes |sigma(p)| = 1 for every unit vector p, so the
    moment set is ball-like and the vacuum orbit sits at a pure radius.
    """
    p = np.asarray(p, dtype=float)
    Q = p[..., :, None] * p[..., None, :] - np.eye(3) / 3.0
    return np.sqrt(1.5) * np.einsum("aij,...ij->...a", _SYM0_BASIS, Q)


def coords_to_matrix(y: np.ndarray) -> np.ndarray:
    """Inverse of the coordinate map: y in R^5 -> traceless symmetric matrix."""
    return np.einsum("...a,aij->...ij", np.asarray(y, dtype=float) / np.sqrt(1.5), _SYM0_BASIS)


@dataclass(frozen=True)
class MicroModel:
    """Quadrature description of the microscopic manifold."""

    name: str  # "s1" or "s2"
    m: int
    sigma: np.ndarray  # (n_nodes, m) order-parameter samples
    weights: np.ndarray  # (n_nodes,), positive, sums to 1
    sigma_max: float

    def __post_init__(self):
        w = self.weights
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")


def make_s1_model(n_nodes: int = 256) -> MicroModel:
    """Planar nematic: M = S^1, sigma(theta) = (cos 2theta, sin 2theta), m = 2."""
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    sigma = np.stack([np.cos(2 * theta), np.sin(2 * theta)], axis=1)
    w = np.full(n_nodes, 1.0 / n_nodes)
    return MicroModel("s1", 2, sigma, w, 1.0)


def make_s2_model(n_theta: int = 24, n_phi: int = 48) -> MicroModel:
    """Nematic: M = S^2 with product Gauss-Legendre x uniform quadrature, m = 5.

    Node count n_theta * n_phi (default 1152); positive weights, antipodally
    symmetric node set, exact for spherical polynomials up to high degree.
    """
    x, wx = np.polynomial.legendre.leggauss(n_theta)  # x = cos(polar angle)
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    ct = np.repeat(x, n_phi)
    st = np.sqrt(np.clip(1.0 - ct**2, 0.0, None))
    cp = np.tile(np.cos(phi), n_theta)
    sp = np.tile(np.sin(phi), n_theta)
    p = np.stack([st * cp, st * sp, ct], axis=1)
    w = np.repeat(wx, n_phi) / (2.0 * n_phi)
    return MicroModel("s2", 5, q_tensor_coords(p), w, 1.0)


def log_partition(model: MicroModel, b: np.ndarray) -> np.ndarray:
    """lnZ(b) = ln sum_i w_i exp(b . sigma_i), max-shifted for stability.

    Accepts b of shape (..., m); returns shape (...).
    """
    b = np.asarray(b, dtype=float)
    a = b @ model.sigma.T  # (..., n)
    amax = a.max(axis=-1, keepdims=True)
    return (amax[..., 0] + np.log(np.exp(a - amax) @ model.weights))


def lambda_inverse(model: MicroModel, b: np.ndarray) -> np.ndarray:
    """u = grad_b lnZ(b); the mean-field map, the inverse of Lambda."""
    b = np.asarray(b, dtype=float)
    a = b @ model.sigma.T
    amax = a.max(axis=-1, keepdims=True)
    e = np.exp(a - amax) * model.weights
    z = e.sum(axis=-1, keepdims=True)
    return (e / z) @ model.sigma


def covariance(model: MicroModel, b: np.ndarray) -> np.ndarray:
    """Hessian of lnZ: the sigma-covariance under the tilted density, shape (..., m, m)."""
    b = np.asarray(b, dtype=float)
    a = b @ model.sigma.T
    amax = a.max(axis=-1, keepdims=True)
    e = np.exp(a - amax) * model.weights
    f = e / e.sum(axis=-1, keepdims=True)  # (..., n)
    u = f @ model.sigma
    second = np.einsum("...n,na,nb->...ab", f, model.sigma, model.sigma)
    return second - u[..., :, None] * u[..., None, :]


def dual_map(
    model: MicroModel,
    u: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 80,
    b_cap: float = DEFAULT_B_CAP,
    b0: np.ndarray | None = None,
) -> np.ndarray:
    """Lambda(u): the dual variable b with grad lnZ(b) = u, by damped Newton.

    Batched over leading axes.  Raises OutsideMomentDomain if the iteration
    diverges or |b| exceeds the cap anywhere, which is the finite-precision
    image of psi_s blowing up towards the boundary of the moment set.
    """
    u = np.asarray(u, dtype=float)
    if np.any(np.linalg.norm(u, axis=-1) >= model.sigma_max):
        raise OutsideMomentDomain("|u| >= sigma_max")
    b = np.zeros_like(u) if b0 is None else np.array(b0, dtype=float)
    eye = np.eye(model.m)
    for _ in range(max_iter):
        r = lambda_inverse(model, b) - u
        rn = np.linalg.norm(r, axis=-1)
        if rn.max() <= tol:
            return b
        cov = covariance(model, b)
        # tiny Tikhonov guard keeps the batched solve well posed near the cap
        step = np.linalg.solve(cov + 1e-14 * eye, r[..., None])[..., 0]
        sn = np.linalg.norm(step, axis=-1, keepdims=True)
        step = step * np.minimum(1.0, 2.0 / np.maximum(sn, 1e-300))
        b = b - step
        if np.linalg.norm(b, axis=-1).max() > b_cap:
            raise OutsideMomentDomain("dual variable exceeded cap; u near/outside boundary")
    raise OutsideMomentDomain("Newton did not converge; u near/outside boundary")


def psi_s(
    model: MicroModel,
    u: np.ndarray,
    b_cap: float = DEFAULT_B_CAP,
    b0: np.ndarray | None = None,
) -> np.ndarray:
    """Singular potential via duality: psi_s(u) = b.u - lnZ(b) at b = Lambda(u).

    b0 warm-starts the dual Newton solve (e.g. the previous iterate's duals).
    """
    u = np.asarray(u, dtype=float)
    b = dual_map(model, u, b_cap=b_cap, b0=b0)
    return np.einsum("...a,...a->...", b, u) - log_partition(model, b)


def minimal_distribution(model: MicroModel, u: np.ndarray) -> np.ndarray:
    """Density (w.r.t. the probability measure) of the entropy minimiser with moment u."""
    b = dual_map(model, u)
    a = model.sigma @ b
    return np.exp(a - log_partition(model, b))


def psi_s_hessian(model: MicroModel, u: np.ndarray) -> np.ndarray:
    """Hessian of psi_s at u: the inverse of the lnZ covariance at b = Lambda(u)."""
    b = dual_map(model, u)
    return np.linalg.inv(covariance(model, b))


@dataclass(frozen=True)
class VacuumManifold:
    """Descriptor of the zero set of the bulk potential."""

    s0: float
    direction: np.ndarray  # representative unit direction of the orbit
    c0: float
    transverse_curvature: float
    degenerate: bool


@dataclass(frozen=True)
class BulkPotential:
    """psi_b(u) = psi_s(u) - (1/2) (intK u).u + c0, normalised to inf psi_b = 0."""

    model: MicroModel
    intK: np.ndarray  # (m, m) symmetric
    c0: float
    manifold: VacuumManifold


def representative_direction(model: MicroModel) -> np.ndarray:
    """Unit direction of a uniaxial/vacuum state used for radial sweeps."""
    if model.name == "s1":
        return np.array([1.0, 0.0])
    e = q_tensor_coords(np.array([0.0, 0.0, 1.0]))
    return e / np.linalg.norm(e)


def _radial_bulk_derivative(model, e, kappa, s):
    b = dual_map(model, s * e)
    return float(b @ e) - kappa * s


def compute_c0_and_NN(
    model: MicroModel,
    intK: np.ndarray,
    *,
    n_scan: int = 400,
    degeneracy_tol: float = 1e-6,
) -> tuple[float, float, VacuumManifold]:
    """Normalising constant c0 and the vacuum orbit of the bulk potential.

    For equivariant intK = kappa*Id the zero set is found by a radial
    root-solve of d/ds [psi_s(s e) - kappa s^2 / 2] along a representative
    uniaxial direction e; otherwise a direction/radius grid scan followed by
    a radial polish is used and the result is reported per direction sampled.
    """
    intK = np.asarray(intK, dtype=float)
    m = model.m
    kappa = float(np.trace(intK)) / m
    equivariant = np.linalg.norm(intK - kappa * np.eye(m)) <= 1e-8 * max(1.0, abs(kappa))
    e = representative_direction(model)
    if not equivariant:
        # scan a few extra directions and keep the best ray; the radial
        # solve below then runs with the ray's effective kappa
        rng = np.random.default_rng(0)
        cands = [e] + [v / np.linalg.norm(v) for v in rng.standard_normal((16, m))]
        best = None
        for d in cands:
            kd = float(d @ intK @ d)
            val = _radial_ray_minimum(model, d, kd)
            if best is None or val[1] < best[1]:
                best = (d, val[1], val[0], kd)
        e, _, s0, kappa = best
        raw_min = best[1]
    else:
        s0, raw_min = _radial_ray_minimum(model, e, kappa)
    c0 = -raw_min

    # transverse (radial) curvature of psi_b on the orbit
    hs = psi_s_hessian(model, np.atleast_2d(s0 * e))[0] if s0 > 0 else psi_s_hessian(
        model, np.zeros((1, m))
    )[0]
    hb = hs - intK
    curv = float(e @ hb @ e)
    degenerate = curv < degeneracy_tol
    manifold = VacuumManifold(s0, e, c0, curv, degenerate)
    return c0, s0, manifold


def _radial_ray_minimum(model, e, kappa, n_scan: int = 400):
    """Minimise psi_s(s e) - kappa s^2/2 over s in [0, sigma_max)."""
    # back off from the orbit-boundary until the dual Newton solve converges;
    # psi_s blows up there, so the minimum cannot hide beyond this point
    smax = 0.995 * model.sigma_max
    for _ in range(60):
        try:
            dual_map(model, smax * e)
            break
        except OutsideMomentDomain:
            smax *= 0.97
    grid = np.linspace(0.0, smax, n_scan)
    crit = [0.0]
    d_prev = _radial_bulk_derivative(model, e, kappa, grid[1])
    for a, bnd in zip(grid[1:-1], grid[2:]):
        d_next = _radial_bulk_derivative(model, e, kappa, bnd)
        if d_prev == 0.0:
            crit.append(a)
        elif d_prev * d_next < 0:
            crit.append(brentq(lambda s: _radial_bulk_derivative(model, e, kappa, s), a, bnd, xtol=1e-12))
        d_prev = d_next

    def raw(s):
        if s == 0.0:
            return 0.0
        return float(psi_s(model, s * e)) - 0.5 * kappa * s * s

    vals = [raw(s) for s in crit]
    i = int(np.argmin(vals))
    return crit[i], vals[i]


def make_bulk_potential(model: MicroModel, intK: np.ndarray) -> BulkPotential:
    c0, _, manifold = compute_c0_and_NN(model, intK)
    return BulkPotential(model, np.asarray(intK, dtype=float), c0, manifold)


def psi_b(bulk: BulkPotential, u: np.ndarray, b0: np.ndarray | None = None) -> np.ndarray:
    """Bulk potential; nonnegative on the moment set and zero on the vacuum orbit."""
    u = np.asarray(u, dtype=float)
    quad = 0.5 * np.einsum("...a,ab,...b->...", u, bulk.intK, u)
    return psi_s(bulk.model, u, b0=b0) - quad + bulk.c0


@dataclass(frozen=True)
class HessianReport:
    c_est: float  # min over sampled moment set of lambda_min(Hess psi_s)
    cov_norm_max: float  # max operator norm of Hess lnZ over the b-sample
    transverse_curvature: float
    inverse_identity_error: float  # max |Hess psi_s . Hess lnZ - Id|


def hessian_diagnostics(
    model: MicroModel,
    bulk: BulkPotential,
    n_samples: int = 200,
    radius: float = 0.9,
    seed: int = 0,
) -> HessianReport:
    """Sampled curvature diagnostics for psi_s and psi_b."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_samples, model.m))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * model.sigma_max * rng.random(n_samples) ** (1.0 / model.m)
    u = v * r[:, None]
    b = dual_map(model, u)
    cov = covariance(model, b)
    hess = np.linalg.inv(cov)
    c_est = float(np.linalg.eigvalsh(hess)[:, 0].min())
    cov_norm = float(np.linalg.eigvalsh(cov)[:, -1].max())
    ident = np.einsum("nab,nbc->nac", hess, cov) - np.eye(model.m)
    err = float(np.abs(ident).max())
    return HessianReport(c_est, cov_norm, bulk.manifold.transverse_curvature, err)


def check_nondegenerate(bulk: BulkPotential) -> None:
    """Raise DegenerateMinimum if the vacuum orbit fails the curvature condition."""
    if bulk.manifold.degenerate:
        raise DegenerateMinimum(
            f"transverse curvature {bulk.manifold.transverse_curvature:.3e} below tolerance"
        )
