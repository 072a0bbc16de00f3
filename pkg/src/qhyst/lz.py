"""Landau-Zener transition probabilities and a two-level numerical oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdiabaticLimitError, NonConvergedError, OutOfRangeError

# Fraction of the window past ``t_edge`` over which the final survival is averaged.
TAIL_FRACTION = 0.5
CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class LzParams:
    """Two-level crossing ``H(t) = [[b1 t, a], [a, b2 t]]``.

    ``a`` is the off-diagonal coupling and ``b1``, ``b2`` the diabatic slopes.
    """

    a: float
    b1: float
    b2: float

    def __post_init__(self):
        if self.b1 == self.b2:
            raise OutOfRangeError("b1 == b2: diabatic levels never cross")

    @classmethod
    def from_tfim(cls, gamma: float, hdot: float, slope_factor: float = 4.0) -> "LzParams":
        """Crossing of the aligned state with a one-spin-flip state.

        ``slope_factor`` sets ``|b2 - b1| = slope_factor * hdot``. The default 4
        makes :func:`transition_probability` agree with :func:`lz_probability`.
        """
        half = 0.5 * slope_factor * hdot
        return cls(a=float(gamma), b1=-half, b2=half)

    @property
    def slope_gap(self) -> float:
        return abs(self.b2 - self.b1)

    def exponent(self, hbar: float = 1.0) -> float:
        return 2.0 * np.pi * self.a ** 2 / (hbar * self.slope_gap)


def transition_probability(params: LzParams, hbar: float = 1.0) -> float:
    """Diabatic passage probability ``exp(-2 pi a^2 / (hbar |b2 - b1|))``."""
    return float(np.exp(-params.exponent(hbar)))


def lz_probability(gamma: float, hdot: float, hbar: float = 1.0, allow_adiabatic_limit: bool = False):
    """Return ``(p, q)``: diabatic and adiabatic passage probabilities for a sweep.

    ``p = exp(-pi gamma^2 / (2 hbar hdot))``. A zero sweep rate is the adiabatic
    limit; it raises unless ``allow_adiabatic_limit`` is set, in which case
    ``(0.0, 1.0)`` is returned.
    """
    if gamma < 0:
        raise OutOfRangeError(f"gamma must be non-negative, got {gamma}")
    if hbar <= 0:
        raise OutOfRangeError(f"hbar must be positive, got {hbar}")
    if hdot == 0:
        if allow_adiabatic_limit:
            return 0.0, 1.0
        raise AdiabaticLimitError("hdot = 0 is the adiabatic limit; p is 0 only by convention")
    if hdot < 0:
        raise OutOfRangeError(f"hdot must be positive, got {hdot}")
    if gamma == 0:
        return 1.0, 0.0
    p = float(np.exp(-np.pi * gamma ** 2 / (2.0 * hbar * hdot)))
    return p, 1.0 - p


def _survival(a, b1, b2, t_edge, dt, hbar):
    """Batched fixed-step RK4 over ``[-t_edge, (1 + TAIL_FRACTION) t_edge]``.

    All arguments except ``hbar`` are arrays of equal length. Each system
    starts in its lower diabatic level; the returned survival probability is
    averaged over the tail beyond ``+t_edge`` so that the oscillating
    interference left by the finite window cancels.
    """
    a = np.asarray(a, float)
    # Subtract the mean slope: a global phase that only costs resolution.
    mean = 0.5 * (b1 + b2)
    d1 = (b1 - mean) / hbar
    d2 = (b2 - mean) / hbar
    g = a / hbar
    # Start in the lower adiabatic eigenvector at -t_edge. It coincides with the
    # lower diabatic level up to O(a / (b t_edge)) and, unlike the bare diabatic
    # state, leaves no admixture of the upper branch to interfere at the end.
    start_in_2 = b2 > b1
    t0 = -np.asarray(t_edge, float)
    half_split = 0.5 * (d1 - d2) * t0
    mix = 0.5 * np.arctan2(g, half_split)
    lower_1 = -np.sin(mix)
    lower_2 = np.cos(mix)
    # sign convention: make the dominant component positive
    flip = np.where(start_in_2, np.sign(lower_2), np.sign(lower_1))
    flip = np.where(flip == 0, 1.0, flip)
    c1 = (flip * lower_1).astype(np.complex128)
    c2 = (flip * lower_2).astype(np.complex128)

    def rhs(t, x1, x2):
        return -1j * (d1 * t * x1 + g * x2), -1j * (g * x1 + d2 * t * x2)

    n_main = np.max(np.ceil(2.0 * t_edge / dt)).astype(int)
    n_tail = np.max(np.ceil(TAIL_FRACTION * t_edge / dt)).astype(int)
    # each system uses its own step so that all finish together
    step_main = 2.0 * t_edge / n_main
    step_tail = TAIL_FRACTION * t_edge / n_tail
    t = -np.asarray(t_edge, float).copy()
    acc = np.zeros_like(t)
    for k in range(n_main + n_tail):
        h = step_main if k < n_main else step_tail
        k1a, k1b = rhs(t, c1, c2)
        k2a, k2b = rhs(t + h / 2, c1 + h / 2 * k1a, c2 + h / 2 * k1b)
        k3a, k3b = rhs(t + h / 2, c1 + h / 2 * k2a, c2 + h / 2 * k2b)
        k4a, k4b = rhs(t + h, c1 + h * k3a, c2 + h * k3b)
        c1 = c1 + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        c2 = c2 + h / 6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        t = t + h
        if k >= n_main:
            acc += np.where(start_in_2, np.abs(c2) ** 2, np.abs(c1) ** 2)
    return acc / n_tail


def default_window(params: LzParams, hbar: float = 1.0):
    """``(t_edge, dt)`` wide enough that ``|slope * t_edge| >> a`` and fine enough
    that ``dt * max|E| <= 0.1``."""
    gap = params.slope_gap
    t_edge = max(30.0 * params.a / gap, 30.0 * np.sqrt(hbar / gap))
    e_max = 0.5 * gap * (1.0 + TAIL_FRACTION) * t_edge + abs(params.a)
    return t_edge, 0.1 * hbar / e_max


def lz_numeric_oracle(params, t_edge=None, dt=None, hbar: float = 1.0, check_convergence: bool = True):
    """Integrate the two-level Schrodinger equation and return the diabatic survival.

    ``params`` may be a single :class:`LzParams` or a sequence of them; a
    sequence is integrated as one batch and an array is returned. With
    ``check_convergence`` the run is repeated at ``2 * t_edge`` and a change
    larger than 1e-3 raises :class:`NonConvergedError`.
    """
    single = isinstance(params, LzParams)
    plist = [params] if single else list(params)
    if not plist:
        return np.empty(0)
    windows = [default_window(p, hbar) for p in plist]
    edges = np.array([t_edge if t_edge is not None else w[0] for w in windows], float)
    steps = np.array([dt if dt is not None else w[1] for w in windows], float)
    a = np.array([p.a for p in plist])
    b1 = np.array([p.b1 for p in plist])
    b2 = np.array([p.b2 for p in plist])
    result = np.where(a == 0, 1.0, _survival(a, b1, b2, edges, steps, hbar))
    if check_convergence:
        # halve dt too so the wider window keeps dt * max|E| fixed
        wide = np.where(a == 0, 1.0, _survival(a, b1, b2, 2 * edges, steps / 2, hbar))
        worst = float(np.max(np.abs(wide - result)))
        if worst >= CONVERGENCE_TOL:
            raise NonConvergedError(
                f"survival changed by {worst:.2e} when t_edge was doubled; widen the window"
            )
    return float(result[0]) if single else result
