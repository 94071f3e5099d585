"""Experiment orchestration: config parsing, pipelines, and artifact emission.

Configs are plain INI files (key = value with [sections]).  Every pipeline is
deterministic for a fixed (config, seed) pair: randomness is drawn from one
seeded generator with a named stream per module, outputs carry no timestamps,
and floats are written with repr round-trip precision.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, field as field_mod, kernel as kernel_mod, limit as limit_mod
from . import potential as potential_mod, solver as solver_mod
from .errors import ConfigError, MaxIterations, NllcError

SUBCOMMANDS = (
    "kernel-report",
    "potential-report",
    "minimize",
    "eps-sweep",
    "limit-solve",
    "gamma-check",
    "holder-probe",
)

_KERNEL_PARAM_KEYS = (
    "strength", "width", "cut", "f2", "f3",
    "k", "rho1", "rho2",
    "amplitude", "r_on", "r_full",
    "q", "tau",
)


@dataclass
class ExperimentConfig:
    subcommand: str
    kernel_preset: str
    kernel_params: dict
    model: str  # "s1" | "s2"
    n: int
    h: float
    omega_radius: float | None
    layer: float  # physical layer thickness; inf = prescribe everything outside
    boundary: str
    boundary_params: dict
    eps_list: list
    solver: solver_mod.SolverConfig
    out_dir: Path
    seed: int
    workers: int
    ball_radius: float | None  # probe ball for gamma/holder pipelines

    @property
    def m(self) -> int:
        return 2 if self.model == "s1" else 5


def _get(parser, section, key, cast, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] {key}", "missing required key")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}", f"cannot parse {raw!r}: {exc}") from exc


def load_config(path, subcommand: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError("config", f"cannot read {path}")

    preset = _get(parser, "kernel", "preset", str, required=True)
    if preset not in ("zero", "annulus", "gaussian", "gaussian-nematic", "inverse6"):
        raise ConfigError("[kernel] preset", f"unknown preset {preset!r}")
    params = {}
    if parser.has_section("kernel"):
        for key in parser.options("kernel"):
            if key in _KERNEL_PARAM_KEYS:
                params[key] = _get(parser, "kernel", key, float)

    model = _get(parser, "model", "name", str, default="s1")
    if model not in ("s1", "s2"):
        raise ConfigError("[model] name", f"unknown micro-model {model!r}")

    n = _get(parser, "domain", "n", int, required=True)
    h = _get(parser, "domain", "h", float, required=True)
    if n < 4 or h <= 0:
        raise ConfigError("[domain] n/h", "need n >= 4 and h > 0")
    omega_radius = _get(parser, "domain", "omega_radius", float)
    layer = _get(parser, "domain", "layer", float, default=float("inf"))

    boundary = _get(parser, "boundary", "preset", str, default="constant")
    if boundary not in ("constant", "smooth-angle", "vortex"):
        raise ConfigError("[boundary] preset", f"unknown preset {boundary!r}")
    bparams = {}
    for key in ("slope", "winding"):
        val = _get(parser, "boundary", key, float)
        if val is not None:
            bparams[key] = val

    eps_raw = _get(parser, "sweep", "eps", str, required=True)
    try:
        eps_list = [float(tok) for tok in eps_raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError("[sweep] eps", f"cannot parse {eps_raw!r}") from exc
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigError("[sweep] eps", "entries must be positive")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("[sweep] eps", "entries must be strictly descending")

    seed = _get(parser, "solver", "seed", int, default=0)
    solver_cfg = solver_mod.SolverConfig(
        alpha=_get(parser, "solver", "alpha", float, default=0.5),
        tol=_get(parser, "solver", "tol", float, default=1e-8),
        max_iter=_get(parser, "solver", "max_iter", int, default=2000),
        descent_step=_get(parser, "solver", "descent_step", float, default=0.1),
        seed=seed,
    )

    out_dir = Path(_get(parser, "output", "dir", str, default="out"))
    workers = int(os.environ.get("NLLC_WORKERS", _get(parser, "output", "workers", int, default=1)))
    ball_radius = _get(parser, "probe", "ball_radius", float)

    return ExperimentConfig(
        subcommand=subcommand,
        kernel_preset=preset,
        kernel_params=params,
        model=model,
        n=n,
        h=h,
        omega_radius=omega_radius,
        layer=layer,
        boundary=boundary,
        boundary_params=bparams,
        eps_list=eps_list,
        solver=solver_cfg,
        out_dir=out_dir,
        seed=seed,
        workers=workers,
        ball_radius=ball_radius,
    )


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _spec(cfg: ExperimentConfig):
    return kernel_mod.kernel_preset(cfg.kernel_preset, cfg.m, cfg.kernel_params)


def _sampled_ladder(cfg: ExperimentConfig, spec):
    """One sampled kernel + bulk potential per eps, all on the common grid."""
    model = potential_mod.make_s1_model() if cfg.model == "s1" else potential_mod.make_s2_model()
    out = []
    for eps in cfg.eps_list:
        sk = kernel_mod.sample_on_lattice(spec, eps, cfg.h)
        bulk = potential_mod.make_bulk_potential(model, sk.intK_disc)
        out.append((eps, sk, bulk))
    return model, out


def _domain(cfg: ExperimentConfig, max_stencil: int):
    radius = cfg.omega_radius
    if radius is None:
        radius = (cfg.n / 2.0 - max_stencil - 0.6) * cfg.h
    if radius <= 0:
        raise ConfigError(
            "[domain] n", f"grid too small for the eps = {cfg.eps_list[0]:g} stencil"
        )
    return field_mod.ball_domain(cfg.n, cfg.h, omega_radius=radius, layer_thickness=cfg.layer)


def _boundary_field(cfg: ExperimentConfig, dom, s0, eps):
    bd = field_mod.boundary_values(cfg.boundary, dom, s0, cfg.m, **cfg.boundary_params)
    return field_mod.make_field(dom, eps, bd)


def _write_kv(path: Path, rows):
    with open(path, "w") as fh:
        for key, value in rows:
            fh.write(f"{key} = {value!r}\n" if isinstance(value, str) else f"{key} = {value}\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def _solve(cfg, init, sk, bulk):
    try:
        return solver_mod.el_fixed_point(init, sk, bulk, cfg.solver)
    except MaxIterations as exc:
        if exc.result is None:
            raise
        return exc.result


# ---------------------------------------------------------------------------
# pipelines


def _run_kernel_report(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    report = kernel_mod.check_assumptions(spec)
    tensor = kernel_mod.elastic_tensor(spec)
    bounds = kernel_mod.ellipticity_bounds(spec, tensor, report.moments)
    rows = [
        ("preset", cfg.kernel_preset),
        ("assumptions_passed", report.all_pass()),
        ("annulus", tuple(report.annulus)),
        ("m2", report.moments.m2),
        ("mq", report.moments.mq),
        ("isotropic_lambda", tensor.isotropic_constant()),
        ("ellipticity_lower", bounds.lower),
        ("ellipticity_lower_quoted", bounds.lower_quoted),
        ("ellipticity_upper", bounds.upper),
        ("rayleigh_min", bounds.rayleigh_min),
        ("rayleigh_max", bounds.rayleigh_max),
        ("jacobian_discrepancy", bounds.jacobian_discrepancy),
    ]
    _write_kv(cfg.out_dir / "kernel_report.txt", rows)
    with open(cfg.out_dir / "kernel_assumptions.txt", "w") as fh:
        fh.write(report.to_text())


def _run_potential_report(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    _, sk, bulk = ladder[0]
    diag = potential_mod.hessian_diagnostics(model, bulk)
    rows = [
        ("model", cfg.model),
        ("sigma_max", model.sigma_max),
        ("s0", bulk.manifold.s0),
        ("c0", bulk.c0),
        ("transverse_curvature", bulk.manifold.transverse_curvature),
        ("degenerate", bulk.manifold.degenerate),
        ("intK_disc_norm", float(np.linalg.norm(sk.intK_disc))),
        ("hessian_c_est", diag.c_est),
        ("hessian_cov_norm_max", diag.cov_norm_max),
        ("hessian_inverse_identity_error", diag.inverse_identity_error),
    ]
    _write_kv(cfg.out_dir / "potential_report.txt", rows)


def _run_minimize(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    eps, sk, bulk = ladder[0]
    dom = _domain(cfg, max(s.radius_cells for _, s, _ in ladder))
    init = _boundary_field(cfg, dom, bulk.manifold.s0, eps)
    best, log = solver_mod.minimize_multistart(init, sk, bulk, cfg.solver)
    field_mod.write_nllc1(cfg.out_dir / "minimizer.nllc1", best.field)
    rows = [
        ("eps", eps),
        ("energy", best.energies[-1]),
        ("residual", best.residuals[-1]),
        ("iterations", best.iterations),
        ("reason", best.reason),
        ("margin", best.margin),
        ("lipschitz", best.lipschitz),
    ] + [(f"start_{label}", energy) for label, energy in log]
    _write_kv(cfg.out_dir / "minimize_report.txt", rows)


def _limit_reference(cfg: ExperimentConfig, dom, s0, spec):
    boundary = limit_mod.orbit_boundary(cfg.boundary, dom, s0, cfg.model, **cfg.boundary_params)
    tensor = kernel_mod.elastic_tensor(spec)
    try:
        res = limit_mod.harmonic_minimize(boundary, tensor, tol=1e-5, max_iter=4000)
    except MaxIterations as exc:
        res = exc.result
    return tensor, res


def _run_eps_sweep(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    dom = _domain(cfg, max(s.radius_cells for _, s, _ in ladder))
    _, limit_res = _limit_reference(cfg, dom, ladder[0][2].manifold.s0, spec)
    v0 = limit_res.mfield.values
    rows = []
    for eps, sk, bulk in ladder:
        init = _boundary_field(cfg, dom, bulk.manifold.s0, eps)
        res = _solve(cfg, init, sk, bulk)
        primal = field_mod.energy_primal(res.field, sk, bulk)
        om = dom.omega_mask
        diff = res.field.values[om] - v0[om]
        l2 = float(np.sqrt(np.sum(diff * diff) * dom.cell_volume))
        rows.append(
            (
                eps,
                primal.total,
                primal.interaction,
                primal.bulk,
                primal.c_eps,
                res.residuals[-1],
                res.margin,
                res.lipschitz,
                l2,
            )
        )
        field_mod.write_nllc1(cfg.out_dir / f"minimizer_eps_{eps:g}.nllc1", res.field)
    _write_csv(
        cfg.out_dir / "sweep.csv",
        ["eps", "E_total", "E_interaction", "E_bulk", "C_eps", "residual", "margin", "lipschitz", "l2_to_limit"],
        rows,
    )


def _run_limit_solve(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    dom = _domain(cfg, max(s.radius_cells for _, s, _ in ladder))
    tensor, res = _limit_reference(cfg, dom, ladder[0][2].manifold.s0, spec)
    field_mod.write_nllc1(cfg.out_dir / "limit.nllc1", res.mfield.order_field(cfg.eps_list[-1]))
    rows = [
        ("energy_descent", res.energies[-1]),
        ("energy_central", limit_mod.limit_energy(res.mfield, tensor)),
        ("iterations", res.iterations),
        ("reason", res.reason),
        ("isotropic_lambda", tensor.isotropic_constant()),
    ]
    _write_kv(cfg.out_dir / "limit_report.txt", rows)


def _probe_radius(cfg: ExperimentConfig, dom) -> float:
    if cfg.ball_radius is not None:
        return cfg.ball_radius
    return 0.7 * dom.omega_radius


def _run_gamma_check(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    dom = _domain(cfg, max(s.radius_cells for _, s, _ in ladder))
    s0 = ladder[0][2].manifold.s0
    v = limit_mod.orbit_boundary(cfg.boundary, dom, s0, cfg.model, **cfg.boundary_params)
    tensor = kernel_mod.elastic_tensor(spec)
    region = field_mod.ball_mask(dom, np.zeros(3), _probe_radius(cfg, dom))
    rows = limit_mod.gamma_limsup_check(
        v, [sk for _, sk, _ in ladder], [b for _, _, b in ladder], tensor, region=region
    )
    _write_csv(
        cfg.out_dir / "gamma.csv",
        ["eps", "F_eps", "E_limit", "gap"],
        [(r.eps, r.f_eps, r.e_limit, r.gap) for r in rows],
    )


def _run_holder_probe(cfg: ExperimentConfig) -> None:
    spec = _spec(cfg)
    model, ladder = _sampled_ladder(cfg, spec)
    dom = _domain(cfg, max(s.radius_cells for _, s, _ in ladder))
    rho = _probe_radius(cfg, dom)
    radii = [rho * f for f in (1.0, 0.85, 0.7, 0.55) if rho * f >= 4.0 * dom.h]
    if len(radii) < 2:
        raise ConfigError(
            "[probe] ball_radius",
            f"ladder under {rho:g} leaves fewer than two radii above 4h = {4 * dom.h:g}",
        )
    rows = []
    for eps, sk, bulk in ladder:
        init = _boundary_field(cfg, dom, bulk.manifold.s0, eps)
        res = _solve(cfg, init, sk, bulk)
        prof = analysis.campanato_profile(res.field, np.zeros(3), radii, sk, bulk)
        mu = max(prof.mu, 0.0)
        semi = analysis.holder_seminorm(res.field, np.zeros(3), 0.5 * rho, mu, seed=cfg.seed)
        try:
            decay = analysis.decay_lemma_check(
                res.field, np.zeros(3), rho, sk, bulk, thetas=(0.25,), eta=np.inf, eps_star=1.0
            )
            ratio = decay[0][1]
        except NllcError:
            ratio = float("nan")
        for rad, osc, en in zip(prof.radii, prof.mean_osc, prof.scaled_energy):
            rows.append((eps, rad, osc, en, prof.mu, semi, ratio))
    _write_csv(
        cfg.out_dir / "holder.csv",
        ["eps", "rho", "mean_osc", "scaled_F", "mu_fit", "holder_seminorm", "decay_ratio"],
        rows,
    )


_PIPELINES = {
    "kernel-report": _run_kernel_report,
    "potential-report": _run_potential_report,
    "minimize": _run_minimize,
    "eps-sweep": _run_eps_sweep,
    "limit-solve": _run_limit_solve,
    "gamma-check": _run_gamma_check,
    "holder-probe": _run_holder_probe,
}


def run(cfg: ExperimentConfig) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _PIPELINES[cfg.subcommand](cfg)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nllc", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the INI experiment config")
        p.add_argument("--out", help="override the output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand)
        if args.out:
            cfg.out_dir = Path(args.out)
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc.tag}: {exc}", file=sys.stderr)
        return 2
    except NllcError as exc:
        print(f"error: {exc.tag}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
