"""Lattices, anneal schedules, longitudinal drive protocols and unit handling.

Every object here is immutable after construction. Energies are in units of
``|J|`` with ``hbar = 1`` unless a :class:`UnitSystem` in device mode says
otherwise (GHz energies, ns times).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    GaugeInfeasibleError,
    InvalidLatticeError,
    OutOfRangeError,
    ScheduleError,
    ValidationError,
)

TOPOLOGIES = ("ring-PBC", "grid-OBC", "custom")


@dataclass(frozen=True)
class LatticeSpec:
    """Ising graph with per-site field multipliers.

    ``bonds`` holds ``(site_a, site_b, J_ab)``; the order of the two sites
    fixes the bond orientation used to tell a ``+`` kink (up then down) from a
    ``-`` kink. ``readout_signs`` is +1 everywhere except on sites whose
    measured spin must be flipped to undo a gauge transform.
    """

    n_spins: int
    bonds: tuple
    local_fields: tuple
    positions: tuple
    topology: str = "custom"
    readout_signs: tuple = None
    shape: tuple = None

    def __post_init__(self):
        if self.n_spins < 1:
            raise InvalidLatticeError("n_spins must be positive")
        bonds = tuple((int(a), int(b), float(j)) for a, b, j in self.bonds)
        seen = set()
        for a, b, _ in bonds:
            if a == b or not (0 <= a < self.n_spins and 0 <= b < self.n_spins):
                raise InvalidLatticeError(f"bad bond ({a}, {b}) for {self.n_spins} spins")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InvalidLatticeError(f"duplicate bond {key}")
            seen.add(key)
        object.__setattr__(self, "bonds", bonds)
        fields = tuple(float(h) for h in self.local_fields)
        if len(fields) != self.n_spins:
            raise InvalidLatticeError("local_fields must have one entry per spin")
        object.__setattr__(self, "local_fields", fields)
        positions = tuple(tuple(float(c) for c in p) for p in self.positions)
        if len(positions) != self.n_spins:
            raise InvalidLatticeError("positions must have one entry per spin")
        object.__setattr__(self, "positions", positions)
        if self.topology not in TOPOLOGIES:
            raise InvalidLatticeError(f"unknown topology {self.topology!r}")
        signs = self.readout_signs
        if signs is None:
            signs = (1,) * self.n_spins
        signs = tuple(int(s) for s in signs)
        if len(signs) != self.n_spins or any(s not in (1, -1) for s in signs):
            raise InvalidLatticeError("readout_signs must be +-1 per spin")
        object.__setattr__(self, "readout_signs", signs)

    @property
    def n_bonds(self):
        return len(self.bonds)

    @property
    def bond_array(self):
        """``(n_bonds, 2)`` integer array of bond endpoints."""
        return np.array([(a, b) for a, b, _ in self.bonds], dtype=np.intp).reshape(-1, 2)

    @property
    def couplings(self):
        return np.array([j for _, _, j in self.bonds], dtype=float)

    @property
    def is_ring(self):
        return self.topology == "ring-PBC"


def build_ring(n: int, coupling: float = 1.0) -> LatticeSpec:
    """Periodic chain with bonds ``(i, i+1 mod n)``."""
    if n < 2:
        raise InvalidLatticeError(f"a ring needs at least 2 spins, got {n}")
    if n == 2:
        # Both neighbours of site 0 are site 1; keep a single bond.
        bonds = [(0, 1, coupling)]
    else:
        bonds = [(i, (i + 1) % n, coupling) for i in range(n)]
    return LatticeSpec(
        n_spins=n,
        bonds=tuple(bonds),
        local_fields=(1.0,) * n,
        positions=tuple((float(i), 0.0) for i in range(n)),
        topology="ring-PBC",
        shape=(n,),
    )


def build_grid(width: int, height: int, coupling: float = 1.0) -> LatticeSpec:
    """Open-boundary square grid; site ``(x, y)`` has index ``y * width + x``."""
    if width < 2 or height < 2:
        raise InvalidLatticeError(f"grid dimensions must be >= 2, got {width}x{height}")
    bonds = []
    for y in range(height):
        for x in range(width):
            i = y * width + x
            if x + 1 < width:
                bonds.append((i, i + 1, coupling))
            if y + 1 < height:
                bonds.append((i, i + width, coupling))
    n = width * height
    return LatticeSpec(
        n_spins=n,
        bonds=tuple(bonds),
        local_fields=(1.0,) * n,
        positions=tuple((float(i % width), float(i // width)) for i in range(n)),
        topology="grid-OBC",
        shape=(width, height),
    )


def apply_afm_gauge(lattice: LatticeSpec) -> LatticeSpec:
    """Antiferromagnetic gauge of an even ring.

    Couplings are negated, the field multipliers alternate ``+1, -1, ...``
    and the odd sites are marked for a readout flip, so observables measured
    on the transformed problem read back as the ferromagnetic ones.
    """
    if not lattice.is_ring:
        raise GaugeInfeasibleError("the staggered gauge is only defined for rings")
    if lattice.n_spins % 2:
        raise GaugeInfeasibleError(f"odd ring ({lattice.n_spins} spins) cannot host the staggered gauge")
    stagger = tuple(1 if i % 2 == 0 else -1 for i in range(lattice.n_spins))
    return LatticeSpec(
        n_spins=lattice.n_spins,
        bonds=tuple((a, b, -j) for a, b, j in lattice.bonds),
        local_fields=tuple(h * s for h, s in zip(lattice.local_fields, stagger)),
        positions=lattice.positions,
        topology=lattice.topology,
        readout_signs=tuple(r * s for r, s in zip(lattice.readout_signs, stagger)),
        shape=lattice.shape,
    )


@dataclass(frozen=True)
class Schedule:
    """Anneal schedule table of ``(s, A, B)`` rows, energies in GHz."""

    s: tuple
    a: tuple
    b: tuple

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if not (s.ndim == a.ndim == b.ndim == 1) or not (len(s) == len(a) == len(b)):
            raise ScheduleError("schedule columns must be 1-D and equally long")
        if len(s) < 2:
            raise ScheduleError("schedule needs at least two rows")
        if np.any(s < 0) or np.any(s > 1):
            raise ScheduleError("s values must lie in [0, 1]")
        if np.any(np.diff(s) <= 0):
            raise ScheduleError("s must be strictly increasing")
        if np.any(np.diff(a) > 0):
            raise ScheduleError("A(s) must be non-increasing")
        if np.any(np.diff(b) < 0):
            raise ScheduleError("B(s) must be non-decreasing")
        object.__setattr__(self, "s", tuple(s.tolist()))
        object.__setattr__(self, "a", tuple(a.tolist()))
        object.__setattr__(self, "b", tuple(b.tolist()))

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows), tuple(r[2] for r in rows))

    @property
    def rows(self):
        return list(zip(self.s, self.a, self.b))


def schedule_lookup(schedule: Schedule, s: float) -> tuple[float, float]:
    """Linearly interpolated ``(A, B)`` at anneal fraction ``s``."""
    if not (schedule.s[0] <= s <= schedule.s[-1]) or not (0.0 <= s <= 1.0):
        raise OutOfRangeError(f"s={s} outside schedule range [{schedule.s[0]}, {schedule.s[-1]}]")
    a = float(np.interp(s, schedule.s, schedule.a))
    b = float(np.interp(s, schedule.s, schedule.b))
    return a, b


def device_energies(schedule, s, gamma_prime=1.0, j_prime=1.0, h_prime=1.0):
    """Map programmed device parameters to physical energies at fixed ``s``.

    Returns ``(gamma, J, h)`` in GHz with the factor 1/2 that the device
    Hamiltonian carries in front of both schedule functions.
    """
    a, b = schedule_lookup(schedule, s)
    return a * gamma_prime / 2.0, b * j_prime / 2.0, b * h_prime / 2.0


SEGMENT_TAGS = ("ramp", "backward", "forward")


@dataclass(frozen=True)
class DriveProtocol:
    """Piecewise-linear longitudinal field ``h(t)``.

    ``segments`` holds ``(fraction of t_total, h_start, h_end)``. The default
    is the polarisation ramp ``0 -> +h_max`` over one fifth of the time,
    followed by the backward and forward sweeps over two fifths each.
    """

    h_max: float
    t_total: float
    segments: tuple = None
    s_pause: float = None

    def __post_init__(self):
        if self.t_total <= 0:
            raise ValidationError("t_total must be positive")
        if self.h_max <= 0:
            raise ValidationError("h_max must be positive")
        segs = self.segments
        if segs is None:
            h = float(self.h_max)
            segs = ((0.2, 0.0, h), (0.4, h, -h), (0.4, -h, h))
        segs = tuple((float(f), float(a), float(b)) for f, a, b in segs)
        if not segs:
            raise ValidationError("at least one drive segment is required")
        if any(f <= 0 for f, _, _ in segs):
            raise ValidationError("segment fractions must be positive")
        if abs(sum(f for f, _, _ in segs) - 1.0) > 1e-9:
            raise ValidationError(f"segment fractions sum to {sum(f for f, _, _ in segs)}, expected 1")
        for (_, _, end), (_, start, _) in zip(segs[:-1], segs[1:]):
            if abs(end - start) > 1e-12:
                raise ValidationError(f"h jumps from {end} to {start} across a segment boundary")
        object.__setattr__(self, "segments", segs)

    @property
    def boundaries(self):
        """Segment end times, including ``t_total`` as the last entry."""
        return np.cumsum([f for f, _, _ in self.segments]) * self.t_total

    @property
    def tags(self):
        tags = []
        for k, (_, a, b) in enumerate(self.segments):
            if k == 0 and a == 0.0 and b != 0.0:
                tags.append("ramp")
            elif b < a:
                tags.append("backward")
            else:
                tags.append("forward")
        return tuple(tags)

    @property
    def sweep_rate(self):
        """Largest ``|dh/dt|`` over the non-ramp segments."""
        rates = [abs(b - a) / (f * self.t_total)
                 for (f, a, b), tag in zip(self.segments, self.tags) if tag != "ramp"]
        return max(rates) if rates else 0.0

    def segment_index(self, t):
        """Index of the segment active at ``t`` (a boundary belongs to the earlier one)."""
        if t < 0 or t > self.t_total * (1 + 1e-12):
            raise OutOfRangeError(f"t={t} outside [0, {self.t_total}]")
        ends = self.boundaries
        idx = int(np.searchsorted(ends, t, side="left"))
        return min(idx, len(self.segments) - 1)

    def segment_tag(self, t):
        return self.tags[self.segment_index(t)]


def drive_value(protocol: DriveProtocol, t: float) -> tuple[float, float]:
    """Field and ramp rate at ``t``; the rate is left-continuous at boundaries."""
    k = protocol.segment_index(t)
    frac, h0, h1 = protocol.segments[k]
    start = protocol.boundaries[k] - frac * protocol.t_total
    duration = frac * protocol.t_total
    rate = (h1 - h0) / duration
    u = min(max(t - start, 0.0), duration)
    return h0 + rate * u, rate


def drive_integral(protocol: DriveProtocol, t: float) -> float:
    """Exact ``int_0^t h(t') dt'`` of the piecewise-linear drive."""
    total = 0.0
    start = 0.0
    for frac, h0, h1 in protocol.segments:
        duration = frac * protocol.t_total
        if t <= start:
            break
        u = min(t - start, duration)
        total += h0 * u + 0.5 * (h1 - h0) / duration * u * u
        start += duration
    return total


@dataclass(frozen=True)
class UnitSystem:
    """``natural``: ``|J| = hbar = 1``. ``device``: GHz energies and ns times.

    In device mode a level at ``E`` GHz accumulates phase ``2*pi*E*dt`` over
    ``dt`` ns, i.e. the effective ``hbar`` is ``1 / (2*pi)``.
    """

    energy_unit: str = "natural"
    hbar: float = 1.0

    def __post_init__(self):
        if self.energy_unit not in ("natural", "device"):
            raise ValidationError(f"unknown energy unit {self.energy_unit!r}")
        if self.hbar <= 0:
            raise ValidationError("hbar must be positive")

    @property
    def effective_hbar(self):
        if self.energy_unit == "device":
            return 1.0 / (2.0 * math.pi)
        return self.hbar

    def phase(self, energy, dt):
        return energy * dt / self.effective_hbar
