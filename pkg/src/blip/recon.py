"""Projected Landweber recovery on the Bloch cone, and the matched-filter baseline.

Each iteration takes a gradient step on ``|Y - h(X)|^2`` and projects every
voxel back onto the dictionary cone::

    X <- P[X + mu * h^H(Y - h(X))]

starting from ``X = 0``.  The matched-filter (MRF) reconstruction is a
single such iteration with ``mu = N / M``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import ser_db
from .bloch import BlochDictionary
from .errors import ConfigurationError, DimensionError, DivergenceError, DomainError, StagnationError
from .projection import ParameterMaps, maps_from_match, match
from .sampling import KSpaceData, SamplingPlan, adjoint_array, forward_array

logger = logging.getLogger(__name__)

__all__ = ["ReconConfig", "IterationRecord", "ReconTrace", "blip", "mrf_baseline", "adaptive_step"]

# Stop once the residual is at rounding level relative to the data.
_RESIDUAL_FLOOR = 1e-13
_MU_MIN_FACTOR = 1e-8


@dataclass(frozen=True)
class ReconConfig:
    """Iteration controls.

    ``mode="fixed"`` uses ``mu`` (``N/M`` when ``mu`` is None) at every
    iteration.  ``mode="adaptive"`` recomputes the step each iteration and
    halves it until the residual does not increase.
    """

    max_iters: int = 300
    mode: str = "adaptive"
    mu: float | None = None
    halt_tol: float = 1e-6

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be a positive integer, got {self.max_iters}", "max_iters")
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigurationError(f"mode must be 'fixed' or 'adaptive', got {self.mode!r}", "mode")
        if self.mu is not None and not (math.isfinite(self.mu) and self.mu > 0):
            raise ConfigurationError(f"mu must be positive, got {self.mu}", "mu")
        if not self.halt_tol >= 0:
            raise ConfigurationError(f"halt_tol must be >= 0, got {self.halt_tol}", "halt_tol")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    residual: float
    stepsize: float
    ser_db: float | None = None


@dataclass
class ReconTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def residuals(self):
        return np.array([r.residual for r in self.records])

    @property
    def stepsizes(self):
        return np.array([r.stepsize for r in self.records])


def _norm(a):
    return math.sqrt(float((a.real * a.real + a.imag * a.imag).sum()))


def _restrict(x_current, g):
    """Project each gradient row onto the real span of the current row.

    Rows where the iterate is zero keep the raw gradient.
    """
    x_current = np.asarray(x_current)
    g = np.asarray(g)
    energy = (x_current.real * x_current.real + x_current.imag * x_current.imag).sum(axis=1)
    corr = (x_current.real * g.real + x_current.imag * g.imag).sum(axis=1)
    on = energy > 0
    coef = np.divide(corr, energy, out=np.zeros_like(corr), where=on)
    return np.where(on[:, None], coef[:, None] * x_current, g)


def adaptive_step(x_current, gradient, plan: SamplingPlan) -> float:
    """Normalized step ``|g~|^2 / |h(g~)|^2`` on the current model support.

    ``g~`` is the gradient restricted, voxel by voxel, to the real span of
    the current iterate row (its selected atom); voxels that are currently
    zero use the raw gradient row.

    Raises
    ------
    DomainError
        If the gradient is identically zero.
    """
    gradient = np.asarray(gradient)
    if not np.any(gradient):
        raise DomainError("gradient is identically zero")
    g_model = _restrict(x_current, gradient)
    num = _norm(g_model) ** 2
    den = _norm(forward_array(g_model, plan)) ** 2
    if num == 0 or den == 0:
        # restricted gradient vanishes or lies in the null space of h
        return plan.N / plan.M
    return num / den


def _project(z, dictionary, plan):
    idx, rho = match(z, dictionary)
    return rho[:, None] * dictionary.atoms[idx], idx, rho


def _validate(y, dictionary, plan):
    if plan is None:
        plan = y.plan
    elif plan != y.plan:
        raise DimensionError("sampling plan does not match the plan of the k-space data")
    if dictionary.length != plan.L:
        raise DimensionError(f"dictionary length {dictionary.length} does not match plan length {plan.L}")
    return plan


def mrf_baseline(y: KSpaceData, dictionary: BlochDictionary, plan: SamplingPlan | None = None):
    """Back-project, scale by ``N/M`` and project every voxel once."""
    plan = _validate(y, dictionary, plan)
    z = (plan.N / plan.M) * adjoint_array(y.samples, plan)
    x, idx, rho = _project(z, dictionary, plan)
    return x, maps_from_match(idx, rho, dictionary, plan.grid_dims)


def blip(
    y: KSpaceData,
    dictionary: BlochDictionary,
    plan: SamplingPlan | None = None,
    cfg: ReconConfig | None = None,
    ground_truth=None,
) -> tuple[np.ndarray, ParameterMaps, ReconTrace]:
    """Iterated projection onto the Bloch cone.

    Parameters
    ----------
    y : KSpaceData
        Measurements.
    dictionary : BlochDictionary
        Discretized response manifold; its length must match the plan.
    plan : SamplingPlan, optional
        Defaults to ``y.plan``; a different plan is rejected.
    cfg : ReconConfig, optional
    ground_truth : ndarray, shape (N, L), optional
        When given, the trace records the image-sequence SER per iteration.

    Returns
    -------
    x : ndarray, shape (N, L)
        Final iterate; every row is ``rho * atom``.
    maps : ParameterMaps
    trace : ReconTrace

    Notes
    -----
    Iteration stops after ``cfg.max_iters`` iterations, when the relative
    change of the residual norm drops below ``cfg.halt_tol``, when the
    gradient vanishes, or when the residual reaches rounding level.
    """
    cfg = cfg or ReconConfig()
    plan = _validate(y, dictionary, plan)
    if ground_truth is not None and np.shape(ground_truth) != (plan.N, plan.L):
        raise DimensionError(f"ground truth shape {np.shape(ground_truth)} != ({plan.N}, {plan.L})")

    ratio = plan.N / plan.M
    mu_fixed = cfg.mu if cfg.mu is not None else ratio
    mu_min = _MU_MIN_FACTOR * ratio

    data = y.samples
    data_norm = _norm(data)
    x = np.zeros((plan.N, plan.L), dtype=complex)
    idx = np.zeros(plan.N, dtype=np.intp)
    rho = np.zeros(plan.N)
    residual = data - forward_array(x, plan)
    res_norm = _norm(residual)
    trace = ReconTrace()

    for n in range(1, cfg.max_iters + 1):
        if res_norm <= _RESIDUAL_FLOOR * data_norm:
            break
        grad = adjoint_array(residual, plan)
        if not np.any(grad):
            break
        mu = adaptive_step(x, grad, plan) if cfg.mode == "adaptive" else mu_fixed
        while True:
            # overflow is caught by the finiteness checks and reported as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                z = x + mu * grad
                if not np.isfinite(z).all():
                    raise DivergenceError(f"non-finite iterate at iteration {n}", iteration=n)
                x_new, idx_new, rho_new = _project(z, dictionary, plan)
                residual_new = data - forward_array(x_new, plan)
                res_new = _norm(residual_new)
            if not math.isfinite(res_new):
                raise DivergenceError(f"non-finite iterate at iteration {n}", iteration=n)
            if cfg.mode == "fixed" or res_new <= res_norm:
                break
            mu *= 0.5
            if mu < mu_min:
                raise StagnationError(f"step size fell below {mu_min:.3g} at iteration {n}")

        change = abs(res_norm - res_new) / res_norm
        x, idx, rho, residual, res_norm = x_new, idx_new, rho_new, residual_new, res_new
        ser = ser_db(ground_truth, x) if ground_truth is not None else None
        trace.records.append(IterationRecord(n, res_norm, mu, ser))
        logger.debug("iteration %d residual %.6g step %.6g", n, res_norm, mu)
        if change < cfg.halt_tol:
            break

    return x, maps_from_match(idx, rho, dictionary, plan.grid_dims), trace
