"""Lattice domains, order fields, boundary data, and the discrete energies.

The computational box is a uniform cubic lattice of cell centres.  Each cell
carries a region tag: interior (the minimisation domain Omega), layer (the
finite-thickness boundary collar Omega_eps \\ Omega), or exterior.  Boundary
data occupies the layer and exterior cells and is never modified by energy
evaluation or solving.

Energies follow the midpoint rule: a double lattice sum weighted h^6 for the
interaction and h^3 for the bulk term.  The primal and oscillation forms are
related by an exact algebraic identity through the constant C_eps, which the
code reproduces at round-off when the interior padding covers the stencil.
"""

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft
import scipy.ndimage

from .errors import LayerTooThin, OutsideMomentDomain, ResolutionMismatch
from .kernel import KernelSpec, SampledKernel, max_eigen
from .potential import (
    BulkPotential,
    make_bulk_potential,
    psi_b,
    psi_s,
    q_tensor_coords,
)

INTERIOR, LAYER, EXTERIOR = 0, 1, 2


# ---------------------------------------------------------------------------
# domains


@dataclass
class Domain:
    """Cubic lattice of cell centres with a region tag per cell."""

    h: float
    region: np.ndarray  # (Nx, Ny, Nz) uint8
    geometry: str = "ball"
    omega_radius: float = 0.0

    @property
    def shape(self):
        return self.region.shape

    @property
    def cell_volume(self):
        return self.h**3

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return (np.arange(n) - (n - 1) / 2.0) * self.h

    def cell_centers(self) -> np.ndarray:
        grids = np.meshgrid(*(self.axis_coords(a) for a in range(3)), indexing="ij")
        return np.stack(grids, axis=-1)

    @property
    def omega_mask(self):
        return self.region == INTERIOR

    @property
    def layer_mask(self):
        return self.region == LAYER

    @property
    def exterior_mask(self):
        return self.region == EXTERIOR

    @property
    def omega_eps_mask(self):
        return self.region != EXTERIOR

    @property
    def n_omega(self):
        return int(self.omega_mask.sum())

    def padding_cells(self) -> int:
        """Minimum cell distance from any interior cell to the box faces."""
        idx = np.nonzero(self.omega_mask)
        pad = min(
            min(int(ix.min()), self.shape[a] - 1 - int(ix.max())) for a, ix in enumerate(idx)
        )
        return pad

    def layer_thickness(self) -> float:
        """Smallest distance from Omega to the exterior region (inf if no exterior)."""
        if not self.exterior_mask.any():
            return np.inf
        x = self.cell_centers()
        if self.geometry == "ball":
            r_ext = np.linalg.norm(x[self.exterior_mask], axis=-1).min()
            r_om = np.linalg.norm(x[self.omega_mask], axis=-1).max()
            return float(r_ext - r_om)
        d_ext = np.max(np.abs(x[self.exterior_mask]), axis=-1).min()
        d_om = np.max(np.abs(x[self.omega_mask]), axis=-1).max()
        return float(d_ext - d_om)


def ball_domain(n: int, h: float, omega_radius: float, layer_thickness: float = np.inf) -> Domain:
    """Ball Omega of the given radius centred in an n^3 box; the collar out to
    omega_radius + layer_thickness is tagged as layer, the rest exterior."""
    c = (np.arange(n) - (n - 1) / 2.0) * h
    r = np.sqrt(c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2)
    region = np.full((n, n, n), EXTERIOR, dtype=np.uint8)
    region[r <= omega_radius + layer_thickness] = LAYER
    region[r <= omega_radius] = INTERIOR
    if not (region == INTERIOR).any():
        raise ValueError("omega_radius too small: no interior cells")
    return Domain(h, region, "ball", omega_radius)


def cube_domain(n: int, h: float, omega_half_width: float, layer_thickness: float = np.inf) -> Domain:
    c = (np.arange(n) - (n - 1) / 2.0) * h
    d = np.maximum.reduce(
        np.meshgrid(np.abs(c), np.abs(c), np.abs(c), indexing="ij")
    )
    region = np.full((n, n, n), EXTERIOR, dtype=np.uint8)
    region[d <= omega_half_width + layer_thickness] = LAYER
    region[d <= omega_half_width] = INTERIOR
    if not (region == INTERIOR).any():
        raise ValueError("omega_half_width too small: no interior cells")
    return Domain(h, region, "cube", omega_half_width)


def ball_mask(domain: Domain, center, radius: float) -> np.ndarray:
    """Boolean cell mask of the ball B_radius(center)."""
    x = domain.cell_centers()
    return np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1) <= radius


# ---------------------------------------------------------------------------
# order fields and boundary data


@dataclass
class OrderField:
    domain: Domain
    eps: float
    values: np.ndarray  # (Nx, Ny, Nz, m)

    @property
    def m(self):
        return self.values.shape[-1]

    def copy(self) -> "OrderField":
        return OrderField(self.domain, self.eps, self.values.copy())


def boundary_values(
    preset: str, domain: Domain, s0: float, m: int, **params
) -> np.ndarray:
    """Boundary-datum presets evaluated on the full box.

    constant       u = s0 * direction (default first manifold coordinate)
    smooth-angle   degree-0 angle field phi = slope * x1 on the S^1 orbit
    vortex         phi = winding * atan2(x2, x1): a singular line along x3
    """
    x = domain.cell_centers()
    if preset == "constant":
        e = np.asarray(params.get("direction", [1.0] + [0.0] * (m - 1)), dtype=float)
        e = e / np.linalg.norm(e)
        return np.broadcast_to(s0 * e, domain.shape + (m,)).copy()
    if preset == "smooth-angle":
        slope = float(params.get("slope", 1.0))
        phi = slope * x[..., 0]
        return _orbit_field(phi, s0, m)
    if preset == "vortex":
        w = float(params.get("winding", 1.0))
        phi = w * np.arctan2(x[..., 1], x[..., 0])
        return _orbit_field(phi, s0, m)
    raise ValueError(f"unknown boundary preset {preset!r}")


def _orbit_field(phi: np.ndarray, s0: float, m: int) -> np.ndarray:
    """Map an angle field onto the s0-orbit: planar rotation of the reference state."""
    if m == 2:
        return s0 * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    if m == 5:
        half = 0.5 * phi
        n = np.stack([np.cos(half), np.sin(half), np.zeros_like(half)], axis=-1)
        return s0 * q_tensor_coords(n)
    raise ValueError(f"no orbit parametrization for m = {m}")


def make_field(domain: Domain, eps: float, boundary: np.ndarray, interior=None) -> OrderField:
    """Assemble a field equal to the boundary datum off Omega.

    interior may be None (datum everywhere), a constant vector, or a full
    (Nx,Ny,Nz,m) array from which interior cells are taken.
    """
    vals = np.array(boundary, dtype=float, copy=True)
    if interior is not None:
        interior = np.asarray(interior, dtype=float)
        mask = domain.omega_mask
        if interior.ndim == 1:
            vals[mask] = interior
        else:
            vals[mask] = interior[mask]
    return OrderField(domain, eps, vals)


def check_admissible(field: OrderField, sigma_max: float, tol: float = 0.0):
    norms = np.linalg.norm(field.values, axis=-1)
    worst = float(norms.max())
    if worst > sigma_max + tol:
        raise OutsideMomentDomain(f"|u| reaches {worst:g} > sigma_max = {sigma_max:g}")


# ---------------------------------------------------------------------------
# convolution


def _check_kernel_grid(sampled: SampledKernel, domain: Domain):
    if not np.isclose(sampled.h, domain.h, rtol=1e-12, atol=0.0):
        raise ResolutionMismatch(
            f"kernel stencil spacing {sampled.h:g} != domain spacing {domain.h:g}"
        )


def require_padding(domain: Domain, sampled: SampledKernel):
    _check_kernel_grid(sampled, domain)
    pad = domain.padding_cells()
    if pad < sampled.radius_cells:
        raise ResolutionMismatch(
            f"interior padding {pad} cells < stencil radius {sampled.radius_cells}"
        )


def _padded_shape(shape, radius):
    return tuple(scipy.fft.next_fast_len(n + 2 * radius) for n in shape)


def _kernel_fft(sampled: SampledKernel, pshape):
    key = ("kfft", pshape)
    if key not in sampled._cache:
        S = sampled.radius_cells
        m = sampled.m
        kern = np.zeros(pshape + (m, m))
        idx = np.arange(-S, S + 1)
        wrapped = [np.mod(idx, p) for p in pshape]
        kern[np.ix_(*wrapped)] = sampled.values
        sampled._cache[key] = scipy.fft.rfftn(kern, axes=(0, 1, 2))
    return sampled._cache[key]


def convolve(sampled: SampledKernel, field_values: np.ndarray, h: float, method: str = "fft"):
    """(K_eps * u)(x) = sum_z K_eps(z) u(x - z) h^3 with zero extension off the box."""
    u = np.asarray(field_values, dtype=float)
    shape = u.shape[:3]
    m = sampled.m
    if u.shape[-1] != m:
        raise ResolutionMismatch(f"field has {u.shape[-1]} components, kernel expects {m}")
    if method == "direct":
        out = np.zeros_like(u)
        for a in range(m):
            for b in range(m):
                stencil = sampled.values[..., a, b]
                if not stencil.any():
                    continue
                out[..., a] += scipy.ndimage.correlate(
                    u[..., b], stencil, mode="constant", cval=0.0
                )
        return out * h**3
    if method != "fft":
        raise ValueError(f"unknown convolution method {method!r}")
    pshape = _padded_shape(shape, sampled.radius_cells)
    kf = _kernel_fft(sampled, pshape)
    uf = scipy.fft.rfftn(u, s=pshape, axes=(0, 1, 2))
    outf = np.einsum("...ab,...b->...a", kf, uf)
    out = scipy.fft.irfftn(outf, s=pshape, axes=(0, 1, 2))
    return out[: shape[0], : shape[1], : shape[2]] * h**3


def convolve_mask(sampled: SampledKernel, mask: np.ndarray, h: float) -> np.ndarray:
    """(K_eps * 1_G)(x) h^3 as an (Nx,Ny,Nz,m,m) matrix field."""
    shape = mask.shape
    pshape = _padded_shape(shape, sampled.radius_cells)
    kf = _kernel_fft(sampled, pshape)
    mf = scipy.fft.rfftn(mask.astype(float), s=pshape, axes=(0, 1, 2))
    outf = kf * mf[..., None, None]
    out = scipy.fft.irfftn(outf, s=pshape, axes=(0, 1, 2))
    return out[: shape[0], : shape[1], : shape[2]] * h**3


def box_moment_field(sampled: SampledKernel, domain: Domain) -> np.ndarray:
    """S_B(x) = sum_{y in box} K_eps(x-y) h^3; equals the stencil moment deep inside."""
    key = ("sbox", domain.shape)
    if key not in sampled._cache:
        sampled._cache[key] = convolve_mask(
            sampled, np.ones(domain.shape, dtype=bool), domain.h
        )
    return sampled._cache[key]


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyBreakdown:
    form: str  # "primal", "oscillation", or "finite-thickness"
    interaction: float
    bulk: float
    c_eps: float
    total: float
    region_bulk: dict = dc_field(default_factory=dict)

    def csv_row(self, eps: float) -> str:
        return f"{eps!r},{self.total!r},{self.interaction!r},{self.bulk!r},{self.c_eps!r}"


def _quadratic_sum(u: np.ndarray, S: np.ndarray, mask=None) -> float:
    """sum over cells of u(x) . S(x) u(x), optionally restricted to a mask."""
    if mask is None:
        mask = np.ones(u.shape[:-1], dtype=bool)
    return float(np.einsum("nab,na,nb->", S[mask], u[mask], u[mask]))


def c_eps_constant(field: OrderField, sampled: SampledKernel, bulk: BulkPotential) -> float:
    """The additive constant linking primal and oscillation forms on the box.

    C_eps = (c0/eps^2)|Omega| + (1/2eps^2) sum_{x off Omega} u(x).S_B(x)u(x) h^3
            + (1/2eps^2) sum_{x in Omega} u(x).(S_B(x) - intK_disc)u(x) h^3,
    where S_B is the box moment field.  The Omega correction vanishes
    identically when the padding invariant holds (S_B = intK_disc on Omega);
    it keeps the primal/oscillation identity exact on under-padded boxes.
    """
    dom = field.domain
    _check_kernel_grid(sampled, dom)
    S_B = box_moment_field(sampled, dom)
    om = dom.omega_mask
    quad_off = _quadratic_sum(field.values, S_B, ~om)
    quad_corr = _quadratic_sum(field.values, S_B - sampled.intK_disc, om)
    h3 = dom.cell_volume
    return (
        bulk.c0 / field.eps**2 * dom.n_omega * h3
        + (quad_off + quad_corr) * h3 / (2 * field.eps**2)
    )


def energy_primal(
    field: OrderField, sampled: SampledKernel, bulk: BulkPotential
) -> EnergyBreakdown:
    """-(1/2eps^2) double-sum u.K_eps u + (1/eps^2) sum_Omega psi_s + C_eps."""
    dom = field.domain
    require_padding(dom, sampled)
    eps2 = field.eps**2
    h3 = dom.cell_volume
    v = convolve(sampled, field.values, dom.h)
    interaction = -0.5 / eps2 * float(np.sum(field.values * v)) * h3
    om = dom.omega_mask
    bulk_term = float(np.sum(psi_s(bulk.model, field.values[om]))) * h3 / eps2
    c = c_eps_constant(field, sampled, bulk)
    total = interaction + bulk_term + c
    return EnergyBreakdown(
        "primal", interaction, bulk_term, c, total, {"omega": bulk_term}
    )


def _pairwise_interaction(
    values: np.ndarray, sampled: SampledKernel, h: float, mask=None
) -> float:
    """(1/4) sum over stencil pairs of K_eps(x-y)(u(x)-u(y)).(u(x)-u(y)) h^6.

    Direct shift-based evaluation of the definition; with a mask, both cells
    of every counted pair must lie in the mask.
    """
    S = sampled.radius_cells
    n = values.shape[:3]
    acc = 0.0
    for di in range(-S, S + 1):
        for dj in range(-S, S + 1):
            for dk in range(-S, S + 1):
                kern = sampled.values[di + S, dj + S, dk + S]
                if not kern.any():
                    continue
                sl_x, sl_y = [], []
                ok = True
                for d, nn in zip((di, dj, dk), n):
                    if abs(d) >= nn:
                        ok = False
                        break
                    sl_x.append(slice(max(0, -d), min(nn, nn - d)))
                    sl_y.append(slice(max(0, d), min(nn, nn + d)))
                if not ok:
                    continue
                du = values[tuple(sl_x)] - values[tuple(sl_y)]
                if mask is not None:
                    pm = mask[tuple(sl_x)] & mask[tuple(sl_y)]
                    du = du * pm[..., None]
                acc += float(np.einsum("xyza,ab,xyzb->", du, kern, du))
    return 0.25 * acc * h**6


def energy_oscillation(
    field: OrderField,
    sampled: SampledKernel,
    bulk: BulkPotential,
    method: str = "fast",
    b0: np.ndarray | None = None,
) -> EnergyBreakdown:
    """(1/4eps^2) double-sum K_eps (u(x)-u(y))^tensor2 + (1/eps^2) sum_Omega psi_b.

    method "fast" expands the square through two convolutions; "pairwise"
    evaluates the defining double sum shift by shift.
    """
    dom = field.domain
    require_padding(dom, sampled)
    eps2 = field.eps**2
    h3 = dom.cell_volume
    if method == "pairwise":
        pair = _pairwise_interaction(field.values, sampled, dom.h) / eps2
    elif method == "fast":
        S_B = box_moment_field(sampled, dom)
        v = convolve(sampled, field.values, dom.h)
        quad = _quadratic_sum(field.values, S_B) * h3
        cross = float(np.sum(field.values * v)) * h3
        pair = 0.5 * (quad - cross) / eps2
    else:
        raise ValueError(f"unknown oscillation method {method!r}")
    om = dom.omega_mask
    bulk_term = float(np.sum(psi_b(bulk, field.values[om], b0=b0))) * h3 / eps2
    total = pair + bulk_term
    return EnergyBreakdown(
        "oscillation", pair, bulk_term, 0.0, total, {"omega": bulk_term}
    )


def local_form(
    field: OrderField,
    region: np.ndarray,
    sampled: SampledKernel,
    method: str = "fast",
) -> float:
    """Interaction part of F_eps(u, G): (1/4eps^2) double sum over G x G."""
    dom = field.domain
    _check_kernel_grid(sampled, dom)
    region = np.asarray(region, dtype=bool)
    if region.shape != dom.shape:
        raise ResolutionMismatch("region mask shape differs from the domain box")
    eps2 = field.eps**2
    h3 = dom.cell_volume
    if method == "pairwise":
        return _pairwise_interaction(field.values, sampled, dom.h, mask=region) / eps2
    S_G = convolve_mask(sampled, region, dom.h)
    uG = np.where(region[..., None], field.values, 0.0)
    vG = convolve(sampled, uG, dom.h)
    quad = _quadratic_sum(field.values, S_G, region) * h3
    cross = float(np.einsum("na,na->", field.values[region], vG[region])) * h3
    return 0.5 * (quad - cross) / eps2


def local_energy(
    field: OrderField,
    region: np.ndarray,
    sampled: SampledKernel,
    bulk: BulkPotential,
    method: str = "fast",
) -> float:
    """F_eps(u, G): interaction over G x G plus bulk over G intersect Omega.

    No padding requirement: pairs are restricted to G x G inside the box, so
    the zero-extended transforms are exact regardless of stencil overhang.
    """
    dom = field.domain
    _check_kernel_grid(sampled, dom)
    region = np.asarray(region, dtype=bool)
    if region.shape != dom.shape:
        raise ResolutionMismatch("region mask shape differs from the domain box")
    pair = local_form(field, region, sampled, method=method)
    gm = region & dom.omega_mask
    h3 = dom.cell_volume
    eps2 = field.eps**2
    bulk_term = float(np.sum(psi_b(bulk, field.values[gm]))) * h3 / eps2 if gm.any() else 0.0
    return pair + bulk_term


# ---------------------------------------------------------------------------
# scaling


def trilinear_sample(values: np.ndarray, domain: Domain, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a lattice field at physical points.

    Points that land exactly on lattice sites (within 1e-12 cells) take the
    stored values bitwise; points outside the box clamp to the nearest face.
    """
    pts = np.asarray(points, dtype=float)
    n = np.array(domain.shape)
    # fractional index coordinates
    f = pts / domain.h + (n - 1) / 2.0
    f = np.clip(f, 0.0, n - 1)
    i0 = np.floor(f).astype(int)
    i0 = np.minimum(i0, n - 2)
    t = f - i0
    on_site = np.all(np.abs(f - np.rint(f)) < 1e-12, axis=-1)
    out = np.zeros(pts.shape[:-1] + (values.shape[-1],))
    for corner in range(8):
        d = np.array([(corner >> a) & 1 for a in range(3)])
        w = np.prod(np.where(d, t, 1.0 - t), axis=-1)
        idx = i0 + d
        out += w[..., None] * values[idx[..., 0], idx[..., 1], idx[..., 2]]
    if on_site.any():
        ri = np.rint(f[on_site]).astype(int)
        out[on_site] = values[ri[:, 0], ri[:, 1], ri[:, 2]]
    return out


def scaling_check(
    field: OrderField,
    center,
    rho: float,
    sampled: SampledKernel,
    bulk: BulkPotential,
) -> tuple:
    """Compare rho^-1 F_eps(u, B_rho(center)) with F_{eps/rho}(u_rho, B_1(0)).

    The rescaled problem lives on an index-aligned lattice of spacing h/rho,
    so u_rho is sampled exactly at original lattice sites whenever center is a
    lattice vector and by trilinear interpolation otherwise.
    """
    dom = field.domain
    c = np.asarray(center, dtype=float)
    lhs = local_energy(field, ball_mask(dom, c, rho), sampled, bulk) / rho

    # rescaled lattice: same index grid, spacing h/rho; values pulled back
    x_src = dom.cell_centers() + c
    # every cell of the unit ball on the rescaled grid must resample from
    # inside the original box
    ball_src = x_src[np.linalg.norm(dom.cell_centers(), axis=-1) <= rho]
    half = (np.array(dom.shape) - 1) / 2.0 * dom.h
    if ball_src.size and np.any(np.abs(ball_src) > half + 1e-9 * dom.h):
        raise ResolutionMismatch("rescaled ball resamples from outside the box")
    vals = trilinear_sample(field.values, dom, x_src.reshape(-1, 3)).reshape(
        dom.shape + (field.m,)
    )
    # Omega of the rescaled problem is the pre-image of the original Omega:
    # pull the region tags back by nearest-neighbour lookup
    n = np.array(dom.shape)
    src_idx = np.clip(
        np.rint(x_src / dom.h + (n - 1) / 2.0).astype(int), 0, n - 1
    )
    region = dom.region[src_idx[..., 0], src_idx[..., 1], src_idx[..., 2]]
    sdom = Domain(dom.h / rho, region, dom.geometry, dom.omega_radius / rho)
    skernel = SampledKernel(
        sampled.spec,
        sampled.eps / rho,
        sampled.h / rho,
        sampled.radius_cells,
        sampled.values * rho**3,
        sampled.r_trunc / rho,
        sampled.trunc_error,
    )
    sbulk = make_bulk_potential(bulk.model, skernel.intK_disc)
    sfield = OrderField(sdom, field.eps / rho, vals)
    rhs = local_energy(sfield, ball_mask(sdom, np.zeros(3), 1.0), skernel, sbulk)
    return lhs, rhs, rhs - lhs


# ---------------------------------------------------------------------------
# finite thickness


def check_layer(domain: Domain, eps: float, q: float, tau: float):
    need = tau * eps ** (1.0 - 2.0 / q)
    have = domain.layer_thickness()
    if have < need:
        raise LayerTooThin(
            f"layer thickness {have:g} < required tau*eps^(1-2/q) = {need:g}"
        )


def finite_thickness_energy(
    field: OrderField, sampled: SampledKernel, bulk: BulkPotential
) -> EnergyBreakdown:
    """Primal energy with the interaction restricted to Omega_eps x Omega_eps."""
    dom = field.domain
    require_padding(dom, sampled)
    check_layer(dom, field.eps, sampled.spec.q, sampled.spec.tau)
    eps2 = field.eps**2
    h3 = dom.cell_volume
    oe = dom.omega_eps_mask
    u_oe = np.where(oe[..., None], field.values, 0.0)
    v = convolve(sampled, u_oe, dom.h)
    interaction = -0.5 / eps2 * float(np.einsum("na,na->", field.values[oe], v[oe])) * h3
    om = dom.omega_mask
    bulk_term = float(np.sum(psi_s(bulk.model, field.values[om]))) * h3 / eps2
    c = c_eps_constant(field, sampled, bulk)
    total = interaction + bulk_term + c
    return EnergyBreakdown(
        "finite-thickness", interaction, bulk_term, c, total, {"omega": bulk_term}
    )


def h_eps_profile(domain: Domain, spec: KernelSpec, eps: float) -> tuple:
    """Per-cell tail bound ||H_eps(x)|| on Omega and its supremum.

    H_eps(x) = eps^-2 * integral of ||K|| over the complement of the rescaled
    layer neighbourhood; bounded here through the radial tail beyond
    dist(x, exterior)/eps, which is exact for radially dominated kernels.
    """
    x = domain.cell_centers()
    om = domain.omega_mask
    if not domain.exterior_mask.any():
        dist = np.full(om.sum(), np.inf)
    else:
        if domain.geometry == "ball":
            r_ext = np.linalg.norm(x[domain.exterior_mask], axis=-1).min()
            dist = r_ext - np.linalg.norm(x[om], axis=-1)
        else:
            d_ext = np.max(np.abs(x[domain.exterior_mask]), axis=-1).min()
            dist = d_ext - np.max(np.abs(x[om]), axis=-1)
    tail_fn = _radial_tail_table(spec)
    vals = tail_fn(np.maximum(dist, 0.0) / eps) / eps**2
    field = np.zeros(domain.shape)
    field[om] = vals
    return field, float(vals.max())


def _radial_tail_table(spec: KernelSpec):
    """Interpolant of r -> integral_{|z| > r} lambda_max(K(z)) dz."""
    R = spec.support_radius
    if np.isfinite(R):
        r_hi = R
    else:
        r_hi = 64.0 * max(b for p in spec.profiles for b in p.breakpoints())
    rs = np.linspace(0.0, r_hi, 2049)
    mid = 0.5 * (rs[:-1] + rs[1:])
    dirs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                     [0.577350269189626, 0.577350269189626, 0.577350269189626]])
    lam = np.max(
        [max_eigen(spec, mid[:, None] * d[None, :]) for d in dirs], axis=0
    )
    dens = 4.0 * np.pi * mid**2 * lam * np.diff(rs)
    cum = np.concatenate([[0.0], np.cumsum(dens)])
    total = cum[-1]
    if not np.isfinite(R):
        extra = spec.f1.tail_radial_moment(2, r_hi)
        tail_beyond = 4.0 * np.pi * extra if extra is not None and np.isfinite(extra) else 0.0
    else:
        tail_beyond = 0.0

    def tail(r):
        r = np.asarray(r, dtype=float)
        inside = np.interp(np.minimum(r, r_hi), rs, total - cum)
        if np.isfinite(R):
            return np.where(r >= R, 0.0, inside)
        beyond = np.zeros_like(r)
        over = r > r_hi
        if np.any(over):
            t = np.array(
                [spec.f1.tail_radial_moment(2, float(ri)) for ri in np.atleast_1d(r)[over]]
            )
            beyond[over] = 4.0 * np.pi * t - tail_beyond
        return inside + tail_beyond + beyond

    return tail


# ---------------------------------------------------------------------------
# NLLC1 field dumps

_MAGIC = b"NLLC1"


def write_nllc1(path, field: OrderField):
    dom = field.domain
    nx, ny, nz = dom.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4I", nx, ny, nz, field.m))
        fh.write(struct.pack("<2d", dom.h, field.eps))
        fh.write(dom.region.astype(np.uint8).tobytes(order="C"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))


def read_nllc1(path) -> OrderField:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}: not an NLLC1 dump")
        nx, ny, nz, m = struct.unpack("<4I", fh.read(16))
        h, eps = struct.unpack("<2d", fh.read(16))
        region = np.frombuffer(fh.read(nx * ny * nz), dtype=np.uint8).reshape(nx, ny, nz)
        raw = fh.read(nx * ny * nz * m * 8)
        values = np.frombuffer(raw, dtype="<f8").reshape(nx, ny, nz, m).copy()
    dom = Domain(h, region.copy(), "ball", 0.0)
    return OrderField(dom, eps, values)
