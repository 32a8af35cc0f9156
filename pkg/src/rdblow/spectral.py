"""Spatial side of the theory: domains, Dirichlet eigenpairs, heat semigroup.

Domains are intervals and axis-aligned rectangles so the Dirichlet
spectrum is analytic and can serve as an honest oracle. The principal
eigenfunction is stored twice: mass-normalized (integral 1 under the
grid quadrature, the convention every bound constant uses) and
L2-normalized (the convention the two-sided heat-kernel envelope is
stated in); ``principal_mode`` is the single conversion point.

The heat semigroup acts by spectral synthesis with the analytic
eigenvalues of -Laplace (killed driving process with variance parameter
2, so no factor 1/2 anywhere).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._util import format_float
from .errors import ConfigurationError, DomainError

__all__ = [
    "DomainSpec",
    "SpectralBasis",
    "KernelBoundFit",
    "build_basis",
    "integrate",
    "apply_semigroup",
    "semigroup_sup_norm",
    "semigroup_sup_norm_profile",
    "heat_kernel_matrix",
    "fit_kernel_bound",
    "semigroup_decay_bound",
    "principal_mode",
    "basis_to_csv",
]


@dataclass(frozen=True)
class DomainSpec:
    """Bounded box domain with homogeneous Dirichlet boundary."""

    shape: str                    # "interval" | "rectangle"
    lengths: tuple[float, ...]
    n_cells: tuple[int, ...]

    def __post_init__(self):
        if self.shape not in ("interval", "rectangle"):
            raise DomainError(f"unsupported domain shape {self.shape!r}")
        expected = 1 if self.shape == "interval" else 2
        if len(self.lengths) != expected or len(self.n_cells) != expected:
            raise DomainError(f"{self.shape} needs {expected} length(s) and cell count(s)")
        if any(l <= 0 for l in self.lengths):
            raise DomainError("domain lengths must be positive")
        if any(n < 2 for n in self.n_cells):
            raise DomainError("need at least 2 cells per axis")

    @staticmethod
    def interval(length: float, n_cells: int) -> "DomainSpec":
        return DomainSpec("interval", (float(length),), (int(n_cells),))

    @staticmethod
    def rectangle(lx: float, ly: float, nx: int, ny: int) -> "DomainSpec":
        return DomainSpec("rectangle", (float(lx), float(ly)), (int(nx), int(ny)))

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis_nodes(self) -> list[np.ndarray]:
        return [np.linspace(0.0, l, n + 1) for l, n in zip(self.lengths, self.n_cells)]

    def spacings(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.n_cells))


def _trapezoid_weights(axis_nodes: list[np.ndarray]) -> np.ndarray:
    ws = []
    for nodes in axis_nodes:
        dx = nodes[1] - nodes[0]
        w = np.full(nodes.shape, dx)
        w[0] = w[-1] = 0.5 * dx
        ws.append(w)
    if len(ws) == 1:
        return ws[0]
    return np.multiply.outer(ws[0], ws[1]).ravel()


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Dirichlet eigenpairs of -Laplace sampled on the grid.

    ``eigenfunctions[k]`` is L2-normalized under the grid quadrature
    (discrete sine orthogonality makes the Gram matrix the identity to
    machine precision). ``phi`` is the principal eigenfunction rescaled
    so the grid quadrature of phi is exactly 1.
    """

    domain: DomainSpec
    eigenvalues: np.ndarray       # (n_modes,), ascending
    eigenfunctions: np.ndarray    # (n_modes, n_nodes) flattened nodes
    phi: np.ndarray               # mass-normalized principal eigenfunction
    phi_sup: float
    weights: np.ndarray           # quadrature weights, flattened
    nodes: np.ndarray             # (n_nodes, dim) coordinates
    mode_indices: tuple

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def second_gap(self) -> float:
        return self.lambda2 - self.lambda1

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def grid_shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.domain.n_cells)


def build_basis(domain: DomainSpec, n_modes: int) -> SpectralBasis:
    """Analytic Dirichlet eigenpairs on the node grid, sorted ascending.

    Interval of length L: lambda_k = (k pi / L)^2 with sine modes.
    Rectangle: tensor products of the axis modes.
    """
    axis_nodes = domain.axis_nodes()
    if domain.dim == 1:
        available = domain.n_cells[0] - 1
    else:
        available = (domain.n_cells[0] - 1) * (domain.n_cells[1] - 1)
    if not (1 <= n_modes <= available):
        raise ConfigurationError(
            f"n_modes must be in [1, {available}] for this grid, got {n_modes}"
        )

    if domain.dim == 1:
        (length,) = domain.lengths
        x = axis_nodes[0]
        ks = np.arange(1, n_modes + 1)
        lams = (ks * np.pi / length) ** 2
        funcs = np.sin(np.outer(ks * np.pi / length, x))
        indices = tuple((int(k),) for k in ks)
        nodes = x[:, None]
    else:
        lx, ly = domain.lengths
        kx_max, ky_max = domain.n_cells[0] - 1, domain.n_cells[1] - 1
        pairs = [
            ((kx * np.pi / lx) ** 2 + (ky * np.pi / ly) ** 2, kx, ky)
            for kx in range(1, kx_max + 1)
            for ky in range(1, ky_max + 1)
        ]
        pairs.sort(key=lambda t: (t[0], t[1], t[2]))
        pairs = pairs[:n_modes]
        x, y = axis_nodes
        lams = np.array([p[0] for p in pairs])
        funcs = np.stack([
            np.outer(np.sin(kx * np.pi * x / lx), np.sin(ky * np.pi * y / ly)).ravel()
            for _, kx, ky in pairs
        ])
        indices = tuple((kx, ky) for _, kx, ky in pairs)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])

    weights = _trapezoid_weights(axis_nodes)
    norms = np.sqrt((funcs * funcs) @ weights)
    funcs = funcs / norms[:, None]
    phi_mass = funcs[0] @ weights
    phi = funcs[0] / phi_mass
    return SpectralBasis(
        domain=domain,
        eigenvalues=lams,
        eigenfunctions=funcs,
        phi=phi,
        phi_sup=float(phi.max()),
        weights=weights,
        nodes=nodes,
        mode_indices=indices,
    )


def principal_mode(basis: SpectralBasis, normalization: str = "mass") -> np.ndarray:
    """The one conversion point between the two phi normalizations."""
    if normalization == "mass":
        return basis.phi
    if normalization == "l2":
        return basis.eigenfunctions[0]
    raise DomainError(f"unknown normalization {normalization!r}")


def integrate(basis: SpectralBasis, f: np.ndarray) -> float:
    """Composite trapezoid quadrature of a node function over the domain."""
    return float(np.ravel(f) @ basis.weights)


def apply_semigroup(basis: SpectralBasis, f: np.ndarray, t: float) -> np.ndarray:
    """Heat semigroup by spectral synthesis; exact identity at t = 0."""
    if t < 0:
        raise DomainError("semigroup time must be non-negative")
    flat = np.ravel(np.asarray(f, dtype=float))
    if t == 0.0:
        return flat.copy().reshape(np.shape(f))
    coeffs = (basis.eigenfunctions * basis.weights) @ flat
    damped = np.exp(-basis.eigenvalues * t) * coeffs
    out = damped @ basis.eigenfunctions
    return out.reshape(np.shape(f))


def _indicator_coeffs(basis: SpectralBasis) -> np.ndarray:
    return basis.eigenfunctions @ basis.weights


def semigroup_sup_norm_profile(basis: SpectralBasis, gamma: float,
                               times: np.ndarray) -> np.ndarray:
    """exp(gamma t) * sup_x (T_t 1)(x) for each requested time (t = 0 gives 1)."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("semigroup times must be non-negative")
    coeffs = _indicator_coeffs(basis)
    damp = np.exp(-np.outer(times, basis.eigenvalues))
    fields = (damp * coeffs) @ basis.eigenfunctions
    sups = fields.max(axis=1)
    sups[times == 0.0] = 1.0
    return np.exp(gamma * times) * sups


def semigroup_sup_norm(basis: SpectralBasis, gamma: float, t: float) -> float:
    """Scalar convenience wrapper around the profile evaluator."""
    return float(semigroup_sup_norm_profile(basis, gamma, np.array([t]))[0])


def heat_kernel_matrix(basis: SpectralBasis, t: float,
                       idx: Sequence[int] | None = None) -> np.ndarray:
    """Transition kernel p_t on the sampled nodes (symmetric by construction)."""
    if t <= 0:
        raise DomainError("heat kernel needs t > 0")
    modes = basis.eigenfunctions if idx is None else basis.eigenfunctions[:, idx]
    damped = np.exp(-basis.eigenvalues * t)[:, None] * modes
    raw = modes.T @ damped
    return 0.5 * (raw + raw.T)


@dataclass
class KernelBoundFit:
    """Smallest constant making the two-sided kernel envelope hold on samples.

    ``residuals`` rows are (t, ratio_sup, lower_requirement, upper_envelope);
    ``feasible`` is False when no constant works, in which case
    ``violations`` holds the offending sample tuples as a falsification
    finding rather than an exception.
    """

    c: float
    residuals: np.ndarray
    feasible: bool
    violations: list[tuple]
    normalization: str = "l2"


def _interior_indices(basis: SpectralBasis, per_axis: int) -> np.ndarray:
    shape = basis.grid_shape()
    if basis.domain.dim == 1:
        cand = np.linspace(1, shape[0] - 2, per_axis).round().astype(int)
        return np.unique(cand)
    ix = np.linspace(1, shape[0] - 2, per_axis).round().astype(int)
    iy = np.linspace(1, shape[1] - 2, per_axis).round().astype(int)
    return np.unique([i * shape[1] + j for i in ix for j in iy])


def fit_kernel_bound(basis: SpectralBasis, t_samples: Sequence[float],
                     xy_indices: Sequence[int] | None = None,
                     per_axis: int = 10, tol: float = 1e-3,
                     round_tol: float = 1e-9) -> KernelBoundFit:
    """Bisection fit of the constant in the two-sided heat-kernel envelope.

    For each t the kernel ratio exp(lambda1 t) p_t(x,y) / (phi~(x) phi~(y))
    is maximized over the sampled node pairs (phi~ L2-normalized, which is
    the convention under which the long-time limit of the ratio is 1); the
    fit then finds the smallest c with
        max(1, t^-(d+2)/2 / c) <= ratio_sup(t)
        ratio_sup(t) <= 1 + c (1 min t)^-(d+2)/2 exp(-(lambda2-lambda1) t)
    at every sampled t. ``round_tol`` is an additive allowance on the
    ratio: eigensum roundoff of order 1e-13 would otherwise be amplified
    by exp((lambda2-lambda1) t) at long times and fake a violation.
    """
    t_samples = np.asarray(t_samples, dtype=float)
    if np.any(t_samples <= 0):
        raise DomainError("kernel bound samples need t > 0")
    if xy_indices is None:
        xy_indices = _interior_indices(basis, per_axis)
    xy_indices = np.asarray(xy_indices, dtype=int)
    phi_t = basis.eigenfunctions[0][xy_indices]
    d = basis.domain.dim
    power = (d + 2) / 2.0
    gap = basis.second_gap

    ratio_sup = np.empty(len(t_samples))
    for i, t in enumerate(t_samples):
        p = heat_kernel_matrix(basis, t, xy_indices)
        ratio = np.exp(basis.lambda1 * t) * p / np.outer(phi_t, phi_t)
        ratio_sup[i] = ratio.max()

    lower_const_ok = ratio_sup >= 1.0 - round_tol
    violations: list[tuple] = []
    if not np.all(lower_const_ok):
        for i in np.flatnonzero(~lower_const_ok):
            violations.append(("lower", float(t_samples[i]), float(ratio_sup[i])))

    def feasible(c: float) -> bool:
        low = np.maximum(1.0, t_samples ** (-power) / c)
        high = 1.0 + c * np.minimum(1.0, t_samples) ** (-power) * np.exp(-gap * t_samples)
        return bool(np.all(low <= ratio_sup + round_tol)
                    and np.all(ratio_sup <= high + round_tol))

    if violations:
        resid = np.column_stack([t_samples, ratio_sup, np.ones_like(t_samples),
                                 np.full_like(t_samples, np.nan)])
        return KernelBoundFit(c=float("nan"), residuals=resid, feasible=False,
                              violations=violations)

    hi = 1.0
    while not feasible(hi):
        hi *= 2.0
        if hi > 1e12:
            return KernelBoundFit(
                c=float("nan"),
                residuals=np.column_stack([t_samples, ratio_sup,
                                           np.ones_like(t_samples),
                                           np.full_like(t_samples, np.nan)]),
                feasible=False,
                violations=[("no-constant", float("inf"))],
            )
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    c = hi
    lower_req = np.maximum(1.0, t_samples ** (-power) / c)
    upper_env = 1.0 + c * np.minimum(1.0, t_samples) ** (-power) * np.exp(-gap * t_samples)
    resid = np.column_stack([t_samples, ratio_sup, lower_req, upper_env])
    return KernelBoundFit(c=float(c), residuals=resid, feasible=True, violations=[])


def semigroup_decay_bound(basis: SpectralBasis, c0: float, gamma: float,
                          c: float, t) -> np.ndarray | float:
    """Analytic sup-norm envelope C0 * sup(phi)^2 * (1+c) * exp(-(lambda1-gamma) t)."""
    if c0 <= 0:
        raise DomainError("C0 must be positive")
    t = np.asarray(t, dtype=float)
    val = c0 * basis.phi_sup ** 2 * (1.0 + c) * np.exp(-(basis.lambda1 - gamma) * t)
    return float(val) if val.ndim == 0 else val


def basis_to_csv(basis: SpectralBasis, fname) -> None:
    """Inspection export with columns (node coords, phi, first two L2 modes)."""
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        coord_names = ["x"] if basis.domain.dim == 1 else ["x", "y"]
        writer.writerow(coord_names + ["phi", "e1", "e2"])
        e2 = basis.eigenfunctions[1] if basis.n_modes > 1 else np.zeros_like(basis.phi)
        for i in range(basis.nodes.shape[0]):
            row = [format_float(float(v)) for v in basis.nodes[i]]
            row += [format_float(float(basis.phi[i])),
                    format_float(float(basis.eigenfunctions[0][i])),
                    format_float(float(e2[i]))]
            writer.writerow(row)
