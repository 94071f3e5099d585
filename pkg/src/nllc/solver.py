"""Minimisation of the non-local energy on the admissible lattice class.

Two independent solvers are provided: the damped Euler-Lagrange
self-consistency iteration u <- (1-alpha) u + alpha Lambda^{-1}(K_eps * u),
whose iterates stay strictly inside the moment set automatically, and a
projected gradient descent used as a cross-check.  Both monitor the
oscillation-form energy and only accept non-increasing steps.
"""

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterations
from .field import OrderField, ball_mask, convolve, energy_oscillation
from .kernel import SampledKernel
from .potential import BulkPotential, dual_map, lambda_inverse


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.5
    tol: float = 1e-8
    max_iter: int = 2000
    alpha_min: float = 1e-3
    descent_step: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.tol <= 0 or self.max_iter <= 0 or self.descent_step <= 0:
            raise ValueError("tolerances, step and iteration budget must be positive")


@dataclass
class SolveResult:
    field: OrderField
    residuals: list
    energies: list
    margin: float
    lipschitz: float
    iterations: int
    reason: str
    method: str

    @property
    def converged(self):
        return self.reason == "converged"

    def log_text(self) -> str:
        lines = [
            f"method = {self.method}",
            f"iterations = {self.iterations}",
            f"reason = {self.reason}",
            f"final_residual = {self.residuals[-1]!r}",
            f"final_energy = {self.energies[-1]!r}",
            f"physicality_margin = {self.margin!r}",
            f"lipschitz_estimate = {self.lipschitz!r}",
        ]
        return "\n".join(lines) + "\n"


def physicality_margin(field: OrderField, sigma_max: float) -> float:
    """Radial distance of the interior values from the moment-set boundary."""
    om = field.domain.omega_mask
    if not om.any():
        return sigma_max
    return float(sigma_max - np.linalg.norm(field.values[om], axis=-1).max())


def lipschitz_estimate(field: OrderField) -> float:
    """Max difference quotient |u(x)-u(y)|/h over adjacent interior cell pairs."""
    om = field.domain.omega_mask
    u = field.values
    worst = 0.0
    for axis in range(3):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        both = om[tuple(sl_a)] & om[tuple(sl_b)]
        if not both.any():
            continue
        d = np.linalg.norm(u[tuple(sl_a)] - u[tuple(sl_b)], axis=-1)
        worst = max(worst, float(d[both].max()))
    return worst / field.domain.h


def _residual(field: OrderField, v: np.ndarray, bulk: BulkPotential, b_warm=None):
    """sup-norm of Lambda(u) - K_eps*u over interior cells; returns (res, b)."""
    om = field.domain.omega_mask
    b = dual_map(bulk.model, field.values[om], b0=b_warm)
    r = np.linalg.norm(b - v[om], axis=-1)
    return float(r.max()) if r.size else 0.0, b


def el_fixed_point(
    init: OrderField,
    sampled: SampledKernel,
    bulk: BulkPotential,
    config: SolverConfig = SolverConfig(),
) -> SolveResult:
    """Damped Euler-Lagrange self-consistency iteration.

    Every iterate lies strictly inside the moment set because the update
    target Lambda^{-1}(K_eps*u) is a mean of micro-states.  Steps that raise
    the oscillation energy are rejected and the damping halved; running out
    of damping or iterations raises MaxIterations with the best result
    attached.
    """
    u = init.copy()
    om = u.domain.omega_mask
    alpha = config.alpha
    v = convolve(sampled, u.values, u.domain.h)
    res, b_warm = _residual(u, v, bulk, None)
    residuals = [res]
    energies = [energy_oscillation(u, sampled, bulk, b0=b_warm).total]
    reason = "max_iterations"
    it = 0
    while it < config.max_iter:
        if residuals[-1] <= config.tol:
            reason = "converged"
            break
        it += 1
        target = lambda_inverse(bulk.model, v[om])
        trial = u.copy()
        trial.values[om] = (1.0 - alpha) * u.values[om] + alpha * target
        e_trial = energy_oscillation(trial, sampled, bulk, b0=b_warm).total
        if e_trial > energies[-1] + 1e-12 * (1.0 + abs(energies[-1])):
            alpha *= 0.5
            if alpha < config.alpha_min:
                result = _finish(u, residuals, energies, it, "damping_exhausted",
                                 "el_fixed_point", bulk)
                raise MaxIterations(
                    f"damping exhausted at residual {residuals[-1]:g}", result=result
                )
            continue
        u = trial
        energies.append(e_trial)
        v = convolve(sampled, u.values, u.domain.h)
        res, b_warm = _residual(u, v, bulk, b_warm)
        residuals.append(res)
    else:
        result = _finish(u, residuals, energies, it, reason, "el_fixed_point", bulk)
        raise MaxIterations(
            f"no convergence in {config.max_iter} iterations "
            f"(residual {residuals[-1]:g})",
            result=result,
        )
    return _finish(u, residuals, energies, it, reason, "el_fixed_point", bulk)


def _finish(u, residuals, energies, it, reason, method, bulk):
    return SolveResult(
        field=u,
        residuals=residuals,
        energies=energies,
        margin=physicality_margin(u, bulk.model.sigma_max),
        lipschitz=lipschitz_estimate(u),
        iterations=it,
        reason=reason,
        method=method,
    )


def energy_gradient(field: OrderField, sampled: SampledKernel, bulk: BulkPotential):
    """(Lambda(u) - K_eps*u)/eps^2 on interior cells, zero elsewhere.

    The variation of the primal energy in an interior cell is h^3 times this
    vector, so it matches finite differences of energy_primal up to the cell
    volume factor.
    """
    om = field.domain.omega_mask
    v = convolve(sampled, field.values, field.domain.h)
    b = dual_map(bulk.model, field.values[om])
    g = np.zeros_like(field.values)
    g[om] = (b - v[om]) / field.eps**2
    return g


def gradient_descent(
    init: OrderField,
    sampled: SampledKernel,
    bulk: BulkPotential,
    config: SolverConfig = SolverConfig(),
) -> SolveResult:
    """Projected gradient descent with backtracking; independent of the EL path.

    Steps that would leave the moment set are clipped radially to a safe
    interior radius; the clip is inactive at strictly physical minimisers.
    """
    u = init.copy()
    om = u.domain.omega_mask
    model = bulk.model
    safe = 0.995 * model.sigma_max
    step = config.descent_step
    v = convolve(sampled, u.values, u.domain.h)
    res, b_warm = _residual(u, v, bulk)
    residuals = [res]
    energies = [energy_oscillation(u, sampled, bulk, b0=b_warm).total]
    reason = "max_iterations"
    it = 0
    while it < config.max_iter:
        if residuals[-1] <= config.tol:
            reason = "converged"
            break
        it += 1
        g = (b_warm - v[om]) / u.eps**2
        trial = u.copy()
        cand = u.values[om] - step * g
        norms = np.linalg.norm(cand, axis=-1, keepdims=True)
        cand = np.where(norms > safe, cand * (safe / norms), cand)
        trial.values[om] = cand
        e_trial = energy_oscillation(trial, sampled, bulk, b0=b_warm).total
        if e_trial > energies[-1] + 1e-12 * (1.0 + abs(energies[-1])):
            step *= 0.5
            if step < 1e-12:
                result = _finish(u, residuals, energies, it, "step_exhausted",
                                 "gradient_descent", bulk)
                raise MaxIterations(
                    f"step size exhausted at residual {residuals[-1]:g}", result=result
                )
            continue
        step *= 1.1
        u = trial
        energies.append(e_trial)
        v = convolve(sampled, u.values, u.domain.h)
        res, b_warm = _residual(u, v, bulk, b_warm)
        residuals.append(res)
    else:
        result = _finish(u, residuals, energies, it, reason, "gradient_descent", bulk)
        raise MaxIterations(
            f"no convergence in {config.max_iter} iterations "
            f"(residual {residuals[-1]:g})",
            result=result,
        )
    return _finish(u, residuals, energies, it, reason, "gradient_descent", bulk)


def minimize_multistart(
    boundary_init: OrderField,
    sampled: SampledKernel,
    bulk: BulkPotential,
    config: SolverConfig = SolverConfig(),
    n_random: int = 2,
) -> tuple:
    """Run the EL iteration from the boundary-datum init plus random starts.

    Returns (best result, list of (label, energy) for every start).
    """
    rng = np.random.default_rng(config.seed)
    om = boundary_init.domain.omega_mask
    starts = [("boundary", boundary_init)]
    for k in range(n_random):
        f = boundary_init.copy()
        r = rng.standard_normal((int(om.sum()), f.m))
        r *= 0.5 * bulk.model.sigma_max / np.maximum(
            np.linalg.norm(r, axis=-1, keepdims=True), 1e-12
        )
        f.values[om] = r * rng.random((int(om.sum()), 1))
        starts.append((f"random{k}", f))
    best = None
    log = []
    for label, f0 in starts:
        try:
            res = el_fixed_point(f0, sampled, bulk, config)
        except MaxIterations as exc:
            res = exc.result
        log.append((label, res.energies[-1]))
        if best is None or res.energies[-1] < best.energies[-1]:
            best = res
    return best, log


def omega_minimality_probe(
    field: OrderField,
    center,
    rho: float,
    sampled: SampledKernel,
    bulk: BulkPotential,
    n_trials: int = 50,
    seed: int = 0,
    amplitude: float = 0.05,
) -> float:
    """Worst energy decrease over structured competitors supported in a ball.

    Competitors agree with the field off B_rho(center) and replace it inside
    by a local constant, a neighbour-smoothed version, or seeded random
    physical perturbations.  Positive return = an improving competitor found.
    """
    dom = field.domain
    mask = ball_mask(dom, center, rho) & dom.omega_mask
    if not mask.any():
        return 0.0
    om_all = dom.omega_mask
    b_warm = dual_map(bulk.model, field.values[om_all])
    e0 = energy_oscillation(field, sampled, bulk, b0=b_warm).total
    model = bulk.model
    safe = 0.98 * model.sigma_max
    rng = np.random.default_rng(seed)
    worst = -np.inf

    def energy_of(vals):
        trial = OrderField(dom, field.eps, vals)
        return energy_oscillation(trial, sampled, bulk, b0=b_warm).total

    # local constant replacement
    mean = field.values[mask].mean(axis=0)
    nm = np.linalg.norm(mean)
    if nm > safe:
        mean *= safe / nm
    vals = field.values.copy()
    vals[mask] = mean
    worst = max(worst, e0 - energy_of(vals))

    # neighbour-smoothed replacement
    sm = field.values.copy()
    for _ in range(2):
        acc = np.zeros_like(sm)
        for axis in range(3):
            acc += np.roll(sm, 1, axis=axis) + np.roll(sm, -1, axis=axis)
        sm = np.where(mask[..., None], acc / 6.0, sm)
    worst = max(worst, e0 - energy_of(sm))

    # random physical perturbations
    for _ in range(max(0, n_trials - 2)):
        scale = amplitude * rng.random()
        vals = field.values.copy()
        pert = rng.standard_normal((int(mask.sum()), field.m))
        cand = vals[mask] + scale * pert
        norms = np.linalg.norm(cand, axis=-1, keepdims=True)
        cand = np.where(norms > safe, cand * (safe / norms), cand)
        vals[mask] = cand
        worst = max(worst, e0 - energy_of(vals))
    return float(worst)
