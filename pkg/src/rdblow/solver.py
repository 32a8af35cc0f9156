"""Pathwise integration of the transformed random PDE.

The stochastic equation is solved per noise path through the random
field ``v = exp(-eta*B(t)) * u``: method of lines with second-order
central differences, composite trapezoid for the non-local integrals,
and explicit Euler whose step tracks both the diffusion CFL limit and
the instantaneous reaction stiffness. Step collapse doubles as a
blow-up signal.

For Hurst index exactly 1/2 the drift picks up the Ito correction
-eta^2/2, i.e. the linear part becomes (Laplace + gamma - eta^2/2).

The hot 1D loop lives in the compiled extension ``_stepper`` when the
build produced it; ``_stepper_py`` is the bit-compatible numpy fallback
and the only backend for rectangles.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _stepper_py
from ._util import format_float
from .errors import ConfigurationError, DomainError, NumericalError, SolverFault
from .fbm import FbmPath, HurstParameter
from .spectral import SpectralBasis, integrate

try:
    from . import _stepper
    HAVE_COMPILED = True
except ImportError:  # extension not built
    _stepper = None
    HAVE_COMPILED = False

__all__ = [
    "ModelParams",
    "LambdaShift",
    "InitialDatum",
    "SolverControls",
    "SolutionTrace",
    "ComparisonVerdict",
    "HAVE_COMPILED",
    "lambda_shift",
    "transform",
    "mass_functional",
    "solve",
    "comparison_probe",
    "trace_to_csv",
    "snapshot_to_csv",
]


@dataclass(frozen=True)
class ModelParams:
    """Full coefficient set of the model, with the standing sign constraints."""

    gamma: float
    k: float
    delta: float
    eta: float
    p: float
    q: float
    m: float
    n: float
    hurst: HurstParameter

    def __post_init__(self):
        problems = []
        if self.k <= 0:
            problems.append(f"k must be positive, got {self.k}")
        if self.gamma < 0:
            problems.append(f"gamma must be non-negative, got {self.gamma}")
        if self.delta < 0:
            problems.append(f"delta must be non-negative, got {self.delta}")
        if self.eta < 0:
            problems.append(f"eta must be non-negative, got {self.eta}")
        for name in ("p", "q", "n"):
            if getattr(self, name) <= 1:
                problems.append(f"p,q,n>1 violated: {name}={getattr(self, name)}")
        if self.m < 0:
            problems.append(f"m must be non-negative, got {self.m}")
        if not (self.m + self.n >= self.q >= self.p):
            problems.append(
                f"m+n >= q >= p violated: m+n={self.m + self.n}, q={self.q}, p={self.p}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems), violations=problems)

    @property
    def mu(self) -> float:
        return self.m + self.n


@dataclass(frozen=True)
class LambdaShift:
    """Drift shift eta^2/2 - gamma absorbed by the Brownian (H = 1/2) regime."""

    value: float


def lambda_shift(params: ModelParams) -> LambdaShift:
    return LambdaShift(0.5 * params.eta ** 2 - params.gamma)


@dataclass(frozen=True)
class InitialDatum:
    """Non-negative initial condition, zero on the boundary, not identically 0."""

    kind: str                       # "multiple_of_phi" | "custom"
    b: float | None = None
    values: np.ndarray | None = None

    @staticmethod
    def multiple_of_phi(b: float) -> "InitialDatum":
        if b <= 0:
            raise DomainError("phi multiple must be positive")
        return InitialDatum(kind="multiple_of_phi", b=float(b))

    @staticmethod
    def custom(values: np.ndarray) -> "InitialDatum":
        return InitialDatum(kind="custom", values=np.asarray(values, dtype=float))

    def resolve(self, basis: SpectralBasis) -> np.ndarray:
        shape = basis.grid_shape()
        if self.kind == "multiple_of_phi":
            return (self.b * basis.phi).reshape(shape)
        if self.kind != "custom":
            raise DomainError(f"unknown datum kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=float).reshape(shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError("initial datum must be finite")
        if np.any(vals < 0):
            raise DomainError("initial datum must be non-negative")
        if not np.any(vals > 0):
            raise DomainError("initial datum must not be identically zero")
        bmask = _boundary_mask(shape)
        if np.any(vals[bmask] != 0.0):
            raise DomainError("initial datum must vanish on the boundary")
        return vals


def _boundary_mask(shape: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if len(shape) == 1:
        mask[0] = mask[-1] = True
    else:
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
    return mask


@dataclass(frozen=True)
class SolverControls:
    """Numerical knobs; the defaults are the calibrated production values."""

    v_max: float = 1e8
    dt_min: float = 1e-12
    cfl: float = 0.8
    safety: float = 0.1
    output_times: np.ndarray | None = None
    store_fields: bool = True
    max_path_coarseness: float = 4.0
    max_steps: int = 50_000_000
    backend: str = "auto"           # "auto" | "compiled" | "python"


@dataclass
class SolutionTrace:
    """Recorded time series of one pathwise solve."""

    times: np.ndarray
    J: np.ndarray
    sup_norm: np.ndarray
    verdict: str                    # global_until_horizon | blew_up | step_collapse
    tau_num: float | None
    fields: np.ndarray | None
    n_clips: int
    n_deep_clips: int
    n_steps: int
    backend: str
    seed: int | None = None


@dataclass
class ComparisonVerdict:
    """Outcome of an ordered-initial-data comparison check."""

    ok: bool
    first_violation: tuple[float, float] | None = None   # (time, worst gap)
    n_times_checked: int = 0


_OVERFLOW_EXP = 700.0


def transform(u_or_v: np.ndarray, path_value: float, eta: float,
              direction: str = "forward") -> np.ndarray:
    """Multiply nodewise by exp(-eta*B) (forward, u -> v) or exp(+eta*B) (inverse).

    Switches to log-space per node when the scalar factor alone would
    overflow; the round trip is an identity to 1e-14.
    """
    if not math.isfinite(path_value):
        raise DomainError("path value must be finite")
    if direction not in ("forward", "inverse"):
        raise DomainError(f"unknown direction {direction!r}")
    expo = -eta * path_value if direction == "forward" else eta * path_value
    arr = np.asarray(u_or_v, dtype=float)
    if abs(expo) <= _OVERFLOW_EXP:
        return arr * math.exp(expo)
    warnings.warn("transform factor overflows double range; using log-space route",
                  RuntimeWarning, stacklevel=2)
    out = np.zeros_like(arr)
    nz = arr != 0.0
    with np.errstate(over="ignore"):
        out[nz] = np.sign(arr[nz]) * np.exp(np.log(np.abs(arr[nz])) + expo)
    return out


def mass_functional(v: np.ndarray, basis: SpectralBasis) -> float:
    """Composite-trapezoid mass functional: quadrature of v * phi."""
    return integrate(basis, np.ravel(v) * basis.phi)


def _select_backend(controls: SolverControls, dim: int) -> str:
    if controls.backend == "python":
        return "python"
    if controls.backend == "compiled":
        if not HAVE_COMPILED:
            raise ConfigurationError("compiled stepper requested but not built")
        if dim != 1:
            raise ConfigurationError("compiled stepper only covers interval domains")
        return "compiled"
    if HAVE_COMPILED and dim == 1:
        return "compiled"
    return "python"


def solve(params: ModelParams, basis: SpectralBasis, datum: InitialDatum,
          path: FbmPath, controls: SolverControls | None = None) -> SolutionTrace:
    """Integrate the pathwise PDE along one noise path.

    Records the mass functional and sup-norm on the output grid (the
    path grid unless overridden), declares ``blew_up`` when the sup-norm
    crosses ``v_max`` and ``step_collapse`` when the stable step falls
    under ``dt_min``; the first such time is ``tau_num``.
    """
    controls = controls or SolverControls()
    if params.hurst.value != path.hurst.value:
        raise ConfigurationError(
            f"params.hurst={params.hurst.value} but path.hurst={path.hurst.value}")

    if controls.output_times is None:
        out_times = path.times()
    else:
        out_times = np.asarray(controls.output_times, dtype=float)
        if out_times[0] != 0.0 or np.any(np.diff(out_times) <= 0):
            raise ConfigurationError("output times must start at 0 and increase")
    horizon = float(out_times[-1])
    if path.grid.t_max < horizon - 1e-12:
        raise ConfigurationError(
            f"path covers [0, {path.grid.t_max}] but horizon is {horizon}")
    min_out = float(np.min(np.diff(out_times)))
    if path.grid.dt > controls.max_path_coarseness * min_out:
        raise ConfigurationError(
            "path grid is more than "
            f"{controls.max_path_coarseness:g}x coarser than the output grid "
            f"(path dt {path.grid.dt:g} vs output dt {min_out:g})")

    dim = basis.domain.dim
    backend = _select_backend(controls, dim)
    kernel = _stepper if backend == "compiled" else _stepper_py

    lin = params.gamma
    if params.hurst.value == 0.5:
        lin = params.gamma - 0.5 * params.eta ** 2
    aq = (params.q - 1.0) * params.eta
    ap = (params.p - 1.0) * params.eta
    amn = (params.m + params.n - 1.0) * params.eta

    v = np.ascontiguousarray(datum.resolve(basis), dtype=float)
    work = np.empty_like(v)
    spacings = basis.domain.spacings()

    rec_times: list[float] = []
    rec_j: list[float] = []
    rec_sup: list[float] = []
    rec_fields: list[np.ndarray] = []

    def record(t: float) -> None:
        rec_times.append(t)
        rec_j.append(mass_functional(v, basis))
        rec_sup.append(float(v.max()))
        if controls.store_fields:
            rec_fields.append(v.copy())

    record(float(out_times[0]))
    total_steps = clips = deep = 0
    verdict = "global_until_horizon"
    tau_num = None
    t = float(out_times[0])
    budget = controls.max_steps

    for t_next in out_times[1:]:
        if dim == 1:
            status, t, steps, c, d = kernel.run_block_1d(
                v, work, spacings[0], lin, params.k, params.delta,
                params.p, params.q, params.m, params.n, aq, ap, amn,
                path.grid.dt, path.values, t, float(t_next),
                controls.cfl, controls.safety, controls.v_max,
                controls.dt_min, budget - total_steps)
        else:
            status, t, steps, c, d = _stepper_py.run_block_2d(
                v, work, spacings[0], spacings[1], lin, params.k, params.delta,
                params.p, params.q, params.m, params.n, aq, ap, amn,
                path.grid.dt, path.values, t, float(t_next),
                controls.cfl, controls.safety, controls.v_max,
                controls.dt_min, budget - total_steps)
        total_steps += steps
        clips += c
        deep += d
        if status == _stepper_py.DONE:
            record(float(t_next))
            continue
        if status == _stepper_py.BLOWUP:
            verdict = "blew_up"
            tau_num = float(t)
            record(tau_num)
            break
        if status == _stepper_py.COLLAPSE:
            verdict = "step_collapse"
            tau_num = float(t)
            record(tau_num)
            break
        if status == _stepper_py.FAULT:
            raise SolverFault(
                f"non-finite state at t={t:.6g}", t=float(t), snapshot=v.copy())
        if status == _stepper_py.BUDGET:
            raise NumericalError(
                f"step budget {controls.max_steps} exhausted at t={t:.6g}")

    return SolutionTrace(
        times=np.array(rec_times),
        J=np.array(rec_j),
        sup_norm=np.array(rec_sup),
        verdict=verdict,
        tau_num=tau_num,
        fields=np.stack(rec_fields) if controls.store_fields else None,
        n_clips=clips,
        n_deep_clips=deep,
        n_steps=total_steps,
        backend=backend,
        seed=path.seed,
    )


def comparison_probe(trace_low: SolutionTrace, trace_high: SolutionTrace,
                     atol: float = 1e-8, rtol: float = 1e-8) -> ComparisonVerdict:
    """Check ordered initial data stayed ordered on the common lifetime.

    Both traces must carry stored fields from the same grid and output
    times; the check stops at the first blow-up on either side.
    """
    if trace_low.fields is None or trace_high.fields is None:
        raise ConfigurationError("comparison_probe needs traces with stored fields")
    n = min(len(trace_low.times), len(trace_high.times))
    cut = n
    for tr in (trace_low, trace_high):
        if tr.tau_num is not None:
            cut = min(cut, int(np.searchsorted(tr.times[:n], tr.tau_num)))
    worst = (None, 0.0)
    for i in range(cut):
        if trace_low.times[i] != trace_high.times[i]:
            raise ConfigurationError("traces do not share output times")
        gap = float((trace_high.fields[i] - trace_low.fields[i]).min())
        tol = atol + rtol * float(np.abs(trace_high.fields[i]).max())
        if gap < -tol and (worst[0] is None or gap < worst[1]):
            worst = (float(trace_low.times[i]), gap)
    if worst[0] is None:
        return ComparisonVerdict(ok=True, n_times_checked=cut)
    return ComparisonVerdict(ok=False, first_violation=worst, n_times_checked=cut)


def trace_to_csv(trace: SolutionTrace, fname) -> None:
    """Trace export with columns (t, J, sup_norm)."""
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "J", "sup_norm"])
        for t, j, s in zip(trace.times, trace.J, trace.sup_norm):
            writer.writerow([format_float(float(t)), format_float(float(j)),
                             format_float(float(s))])


def snapshot_to_csv(basis: SpectralBasis, v: np.ndarray, fname) -> None:
    """Snapshot export with columns (node coords, v)."""
    flat = np.ravel(v)
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        coord_names = ["x"] if basis.domain.dim == 1 else ["x", "y"]
        writer.writerow(coord_names + ["v"])
        for i in range(basis.nodes.shape[0]):
            row = [format_float(float(c)) for c in basis.nodes[i]]
            row.append(format_float(float(flat[i])))
            writer.writerow(row)
