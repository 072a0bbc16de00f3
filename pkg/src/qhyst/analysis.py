"""Turn traces and samples into the numbers the hysteresis claims rest on.

Physics-facing helpers are plain functions. The two fitters and the
structure-factor map are also exposed as scikit-learn estimators so they
compose with pipelines and grid searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (ContractViolation, IncompleteLoopError, InsufficientDataError, OutOfRangeError,
                     RankError, ValidationError)
from .exact import basis_spins
from .trace import HysteresisTrace

ALPHA_RANGE = (0.5, 4.0)
ALPHA_GRID = 351
Q_GRID_SIZE = 200
Q_RANGE = (-2.0 * math.pi, 2.0 * math.pi)


# ---------------------------------------------------------------- loops


@dataclass(frozen=True)
class LoopArea:
    area: float
    signed: float


def _loop_points(trace: HysteresisTrace):
    tags = set(trace.segments)
    missing = [tag for tag in ("backward", "forward") if tag not in tags]
    if missing:
        raise IncompleteLoopError(f"trace has no {' or '.join(missing)} segment")
    keep = ~trace.mask("ramp")
    return trace.h[keep], trace.mz[keep]


def loop_area(trace: HysteresisTrace) -> LoopArea:
    """``oint m_z dh`` over the backward and forward sweeps.

    Ramp records are skipped. The remaining points are taken in time order
    and the path is closed back to its first point, so the trapezoid sum is
    exact for piecewise-linear loops. The usual clockwise loop (high ``m``
    on the way down) has a negative signed value.
    """
    h, m = _loop_points(trace)
    h = np.append(h, h[0])
    m = np.append(m, m[0])
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(m))):
        raise ValidationError("loop contains non-finite h or m_z values")
    signed = float(np.sum(0.5 * (m[1:] + m[:-1]) * np.diff(h)))
    return LoopArea(abs(signed), signed)


def max_kink_density(trace: HysteresisTrace, segment: str = "backward") -> float:
    """Largest mean per-bond kink density within ``segment``."""
    mask = trace.mask(segment)
    if not mask.any():
        raise IncompleteLoopError(f"trace has no {segment} segment")
    return float(np.nanmax(trace.kink_total[mask]))


def ensemble_kink_density(traces, segment: str = "backward") -> float:
    """Max over ``segment`` of the seed-averaged kink density.

    All traces must share one time grid (same protocol, ``dt`` and stride).
    """
    traces = list(traces)
    if not traces:
        raise InsufficientDataError("no traces to average")
    lengths = {len(tr) for tr in traces}
    if len(lengths) != 1:
        raise ValidationError("traces have different lengths; they must share one time grid")
    mean = np.mean([tr.kink_total for tr in traces], axis=0)
    mask = traces[0].mask(segment)
    if not mask.any():
        raise IncompleteLoopError(f"trace has no {segment} segment")
    return float(np.nanmax(mean[mask]))


def reversal_onset(trace: HysteresisTrace, threshold: float = 0.9, segment: str = "backward"):
    """Field at which ``m_z`` first drops below ``threshold`` in ``segment``.

    Returns ``None`` when it never does.
    """
    mask = trace.mask(segment)
    if not mask.any():
        raise IncompleteLoopError(f"trace has no {segment} segment")
    below = np.flatnonzero(trace.mz[mask] < threshold)
    return float(trace.h[mask][below[0]]) if below.size else None


def upturns(trace: HysteresisTrace, segment: str = "backward", tol: float = 1e-9):
    """``(h_start, h_end, rise)`` for each run where ``m_z`` climbs as ``h`` falls."""
    mask = trace.mask(segment)
    h, m = trace.h[mask], trace.mz[mask]
    rising = (np.diff(m) > tol) & (np.diff(h) < 0)
    runs, start = [], None
    for k, up in enumerate(rising):
        if up and start is None:
            start = k
        if start is not None and (not up or k == len(rising) - 1):
            end = k + 1 if up else k
            runs.append((float(h[start]), float(h[end]), float(m[end] - m[start])))
            start = None
    return runs


def has_upturn(trace: HysteresisTrace, segment: str = "backward", tol: float = 1e-9) -> bool:
    return bool(upturns(trace, segment, tol))


def theoretical_kink_slope(gamma: float, hbar: float = 1.0) -> float:
    """Slope of ``ln(1 - n_d)`` against ``1/hdot`` predicted by the crossing model.

    With the device factors folded into natural units the prefactor is
    ``25 gamma^2 / (2 hbar)``. Defects are created by adiabatic passage, so
    ``1 - n_d`` shrinks as the sweep slows and the slope is negative.
    """
    return -12.5 * gamma ** 2 / hbar


# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def predict(self, xs):
        return self.slope * np.asarray(xs, float) + self.intercept


def _sorted_pairs(xs, ys):
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"x and y lengths differ ({x.size} vs {y.size})")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("fit input contains non-finite values")
    # sorting makes the floating-point sums independent of input order
    order = np.lexsort((y, x))
    return x[order], y[order]


def linear_fit(xs, ys) -> FitResult:
    """Ordinary least squares ``y = slope x + intercept``.

    ``r_squared`` is 1 when the targets have zero variance (the fit is then
    exact).
    """
    x, y = _sorted_pairs(xs, ys)
    if x.size < 3:
        raise InsufficientDataError(f"linear_fit needs at least 3 points, got {x.size}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0 or np.ptp(x) == 0.0:
        raise RankError("all x values are equal; slope is undetermined")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(slope, intercept, r2, int(x.size))


@dataclass(frozen=True)
class PowerLawFit:
    a: float
    alpha: float
    c: float
    residual: float

    def predict(self, gammas):
        return self.a * np.asarray(gammas, float) ** self.alpha + self.c


def _linear_subproblem(g, y, alpha):
    basis = g ** alpha
    design = np.column_stack([basis, np.ones_like(basis)])
    (a, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sum((design @ (a, c) - y) ** 2))
    return float(a), float(c), resid


def power_law_fit(gammas, areas, alpha_range=ALPHA_RANGE, grid_points: int = ALPHA_GRID) -> PowerLawFit:
    """Fit ``A = a gamma**alpha + c``.

    For any fixed ``alpha`` the model is linear in ``(a, c)``, so the search
    is one-dimensional: a uniform ``alpha`` grid picks a bracket and a
    bounded scalar minimization polishes the optimum inside it.
    """
    g, y = _sorted_pairs(gammas, areas)
    if g.size < 4:
        raise InsufficientDataError(f"power_law_fit needs at least 4 points, got {g.size}")
    if np.any(g <= 0):
        raise OutOfRangeError("gamma values must be positive")
    if np.unique(g).size != g.size:
        raise RankError("gamma values must be distinct")
    lo, hi = alpha_range
    grid = np.linspace(lo, hi, grid_points)
    scores = np.array([_linear_subproblem(g, y, a)[2] for a in grid])
    k = int(np.argmin(scores))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    polished = minimize_scalar(lambda a: _linear_subproblem(g, y, a)[2], bounds=(left, right),
                               method="bounded", options={"xatol": 1e-12})
    alpha = float(polished.x) if polished.fun <= scores[k] else float(grid[k])
    a, c, resid = _linear_subproblem(g, y, alpha)
    return PowerLawFit(a, alpha, c, max(resid, 0.0))


class LinearFitRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`linear_fit` for one feature."""

    def fit(self, X, y):
        X = np.asarray(X, float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValidationError("LinearFitRegressor takes a single feature")
            X = X[:, 0]
        self.result_ = linear_fit(X, y)
        self.slope_ = self.result_.slope
        self.intercept_ = self.result_.intercept
        self.r_squared_ = self.result_.r_squared
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = np.asarray(X, float)
        return self.result_.predict(X[:, 0] if X.ndim == 2 else X)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`power_law_fit`; ``X`` holds gamma."""

    def __init__(self, alpha_range=ALPHA_RANGE, grid_points=ALPHA_GRID):
        self.alpha_range = alpha_range
        self.grid_points = grid_points

    def fit(self, X, y):
        X = np.asarray(X, float)
        self.result_ = power_law_fit(X.ravel(), y, self.alpha_range, self.grid_points)
        self.a_, self.alpha_, self.c_ = self.result_.a, self.result_.alpha, self.result_.c
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_.predict(np.asarray(X, float).ravel())


# ---------------------------------------------------------------- samples


@dataclass
class SampleEntry:
    """Projective z-basis samples taken at one field value."""

    h: float
    segment: str
    configs: np.ndarray  # (count, n_spins) of +-1

    def __post_init__(self):
        self.configs = np.atleast_2d(np.asarray(self.configs, dtype=np.int8))
        if self.configs.size and not np.all(np.abs(self.configs) == 1):
            raise ValidationError("configurations must contain only +1 / -1")

    @property
    def n_spins(self):
        return self.configs.shape[1]

    @property
    def magnetization(self):
        return float(self.configs.mean())


@dataclass
class SampleSet:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        sizes = {e.n_spins for e in self.entries}
        if len(sizes) > 1:
            raise ValidationError(f"configurations have mixed lengths {sorted(sizes)}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]


def sample_configurations(state, count: int, seed: int, h: float = float("nan"), segment: str = "",
                          readout_signs=None) -> SampleEntry:
    """Draw ``count`` basis states with Born-rule weights ``|psi_i|^2``."""
    psi = np.asarray(state)
    if count < 1:
        raise ValidationError("count must be >= 1")
    probs = np.abs(psi) ** 2
    total = probs.sum()
    if abs(total - 1.0) > 1e-8:
        raise ContractViolation(f"state is not normalized (|psi|^2 sums to {total:.12g})")
    n = int(round(math.log2(psi.size)))
    if 2 ** n != psi.size:
        raise ContractViolation("state length is not a power of two")
    rng = np.random.default_rng(seed)
    picks = rng.choice(psi.size, size=count, p=probs / total)
    configs = basis_spins(n)[picks]
    if readout_signs is not None:
        configs = configs * np.asarray(readout_signs, dtype=np.int8)[None, :]
    return SampleEntry(h, segment, configs)


def sampleset_trace(samples: SampleSet, bonds=None) -> HysteresisTrace:
    """Empirical magnetization trace (one record per entry, ``t`` = entry index).

    ``bonds`` defaults to a ring; kink densities come from the sampled
    configurations.
    """
    trace = HysteresisTrace.empty()
    nan = float("nan")
    for k, entry in enumerate(samples):
        cfg = entry.configs.astype(np.int16)
        pairs = np.asarray(bonds if bonds is not None else
                           [(i, (i + 1) % entry.n_spins) for i in range(entry.n_spins)])
        a, b = cfg[:, pairs[:, 0]], cfg[:, pairs[:, 1]]
        nplus = float(np.mean((a > 0) & (b < 0)))
        nminus = float(np.mean((a < 0) & (b > 0)))
        trace.append(entry.segment, t=float(k), s=nan, h=entry.h, hdot=nan, mx=nan, my=nan,
                     mz=entry.magnetization, kink_total=nplus + nminus, nplus=nplus, nminus=nminus,
                     energy=nan)
    return trace


# ---------------------------------------------------------------- structure factor


def q_grid(size: int = Q_GRID_SIZE, q_range=Q_RANGE) -> np.ndarray:
    """Axis values shared by ``q_x`` and ``q_y``."""
    return np.linspace(q_range[0], q_range[1], size)


def structure_factor(configs, positions, size: int = Q_GRID_SIZE, q_range=Q_RANGE) -> np.ndarray:
    """Mean over configurations of ``|S(q)|`` on a square q grid.

    ``S(q) = sum_ij exp(i q.(r_i - r_j)) s_i s_j = |sum_i s_i exp(i q.r_i)|^2``.
    The result is indexed ``[iy, ix]``; both axes are :func:`q_grid`.
    Positions may be 1D (``q_y`` is then ignored).
    """
    cfg = np.atleast_2d(np.asarray(configs, dtype=float))
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = np.column_stack([pos, np.zeros_like(pos)])
    if pos.shape[0] != cfg.shape[1]:
        raise ValidationError(f"{pos.shape[0]} positions for configurations of length {cfg.shape[1]}")
    axis = q_grid(size, q_range)
    # separable phases: exp(i qx x) exp(i qy y)
    px = np.exp(1j * np.outer(pos[:, 0], axis))  # (n, size)
    py = np.exp(1j * np.outer(pos[:, 1], axis))
    amp = np.einsum("cn,ny,nx->cyx", cfg.astype(complex), py, px, optimize=True)
    return np.mean(np.abs(amp) ** 2, axis=0)


class StructureFactorTransformer(TransformerMixin, BaseEstimator):
    """Map a batch of configurations to its averaged ``|S(q)|`` heatmap.

    ``transform`` returns a ``(1, size*size)`` row so the output slots into
    a pipeline; :attr:`heatmap_` keeps the 2D form of the last call.
    """

    def __init__(self, positions=None, size=Q_GRID_SIZE, q_range=Q_RANGE, max_configs=None):
        self.positions = positions
        self.size = size
        self.q_range = q_range
        self.max_configs = max_configs

    def fit(self, X, y=None):
        X = np.atleast_2d(np.asarray(X))
        self.n_features_in_ = X.shape[1]
        self.positions_ = (np.arange(X.shape[1], dtype=float) if self.positions is None
                           else np.asarray(self.positions, float))
        self.q_axis_ = q_grid(self.size, self.q_range)
        return self

    def transform(self, X):
        check_is_fitted(self, "positions_")
        X = np.atleast_2d(np.asarray(X))
        if self.max_configs is not None:
            X = X[: self.max_configs]
        self.heatmap_ = structure_factor(X, self.positions_, self.size, self.q_range)
        return self.heatmap_.reshape(1, -1)
