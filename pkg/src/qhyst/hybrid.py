"""Interleaved quantum / semiclassical hysteresis driver.

Each quantum slice propagates the state with the Hamiltonian frozen at the
slice's left endpoint. Every ``k_sc`` slices the driver measures the per-bond
kink densities, advances a semiclassical kink field (advection at a velocity
proportional to the field plus pairwise annihilation), and reweights the basis
amplitudes so that the state's kink marginals move toward that field.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CapacityError,
    ContractViolation,
    InconclusiveScanError,
    QHystError,
    StabilityError,
    UpdateCollapseError,
    ValidationError,
)
from .exact import (
    MAX_SPINS,
    adiabatic_populations,
    all_up_state,
    build_hamiltonian,
    diagonal_energies,
    eigendecompose,
    kink_indicators,
    min_gap_scan,
    observe,
    propagate_step,
    readout_spins,
)
from .spin_model import DriveProtocol, LatticeSpec, UnitSystem, drive_value
from .trace import HysteresisTrace

MODES = ("hybrid", "unitary-only")
DT_WARN_RATIO = 1e-2
DT_ABORT_RATIO = 1e-1


@dataclass(frozen=True)
class KinkField:
    """Per-bond densities of ``+`` (up-down) and ``-`` (down-up) kinks on a ring."""

    n_plus: np.ndarray
    n_minus: np.ndarray

    def __post_init__(self):
        plus = np.array(self.n_plus, dtype=float)
        minus = np.array(self.n_minus, dtype=float)
        if plus.ndim != 1 or plus.shape != minus.shape:
            raise ContractViolation("n_plus and n_minus must be 1-D arrays of equal length")
        if plus.size and (plus.min() < 0 or minus.min() < 0 or plus.max() > 1 or minus.max() > 1):
            raise ContractViolation("kink densities must lie in [0, 1]")
        object.__setattr__(self, "n_plus", plus)
        object.__setattr__(self, "n_minus", minus)

    @classmethod
    def zeros(cls, n_bonds: int) -> "KinkField":
        return cls(np.zeros(n_bonds), np.zeros(n_bonds))

    @property
    def total(self) -> np.ndarray:
        return self.n_plus + self.n_minus

    @property
    def winding(self) -> float:
        """``sum(n_plus - n_minus)``; conserved by pure advection."""
        return float(np.sum(self.n_plus - self.n_minus))

    @property
    def mass(self) -> float:
        return float(np.sum(self.total))


def _upwind(n, courant):
    # courant > 0 moves mass toward higher bond index
    if courant >= 0:
        return n - courant * (n - np.roll(n, 1))
    return n - courant * (np.roll(n, -1) - n)


def _pair_products(n_plus, n_minus, drift):
    """Overlap of each ``+`` wall with the ``-`` wall it is about to meet.

    On the bond lattice a ``+`` and a ``-`` wall never share a bond in any spin
    configuration; they annihilate by closing a one-site island of the
    minority spin. With ``drift < 0`` that is ``+`` on bond ``i`` and ``-`` on
    ``i - 1``; with ``drift > 0`` it is ``-`` on ``i + 1``. Without drift the
    product is taken on the same bond.
    Returns ``(loss_plus, loss_minus)`` per unit ``omega * dt``.
    """
    if drift < 0:
        pairs = n_plus * np.roll(n_minus, 1)
        return pairs, np.roll(pairs, -1)
    if drift > 0:
        pairs = n_plus * np.roll(n_minus, -1)
        return pairs, np.roll(pairs, 1)
    pairs = n_plus * n_minus
    return pairs, pairs


def kinetics_step(kinks: KinkField, h: float, dt: float, v0: float = 1.0, omega: float = 0.1) -> KinkField:
    """One explicit-Euler upwind step of the kink transport equations.

    ``+`` kinks move with velocity ``+v0 h`` and ``-`` kinks with ``-v0 h``
    (bonds per unit time, periodic), so the domain aligned with the field
    grows. Approaching ``+``/``-`` pairs are removed at rate ``omega`` times
    their product (see :func:`_pair_products`). Results are clamped to ``[0, 1]``.
    """
    courant = v0 * h * dt
    if abs(courant) > 1.0 + 1e-12:
        raise StabilityError(f"CFL ratio |v0 h dt| = {abs(courant):.3g} exceeds 1", ratio=abs(courant))
    courant = float(np.clip(courant, -1.0, 1.0))
    loss_plus, loss_minus = _pair_products(kinks.n_plus, kinks.n_minus, courant)
    # remove the pairs before moving; at CFL 1 this annihilates where walls meet
    plus = _upwind(kinks.n_plus - omega * dt * loss_plus, courant)
    minus = _upwind(kinks.n_minus - omega * dt * loss_minus, -courant)
    return KinkField(np.clip(plus, 0.0, 1.0), np.clip(minus, 0.0, 1.0))


def ipf_weight(target, measured, alpha0: float = 0.05, kappa: float = 0.5) -> float:
    """Update strength ``alpha0 + kappa / (2 n_bonds) * sum |target - measured|``."""
    target = np.asarray(target, float)
    measured = np.asarray(measured, float)
    if target.size == 0:
        return float(alpha0)
    return float(alpha0 + kappa / (2.0 * target.size) * np.sum(np.abs(target - measured)))


def ipf_update(state, target: KinkField, measured: KinkField, indicators, alpha0: float = 0.05,
               kappa: float = 0.5, epsilon_floor: float = 1e-8, alpha: float | None = None):
    """Reweight basis amplitudes toward target per-bond kink densities.

    ``indicators`` is the ``(plus, minus)`` pair from
    :func:`~qhyst.exact.kink_indicators`. Each amplitude is multiplied by
    ``prod_a (t_a / m_a) ** (alpha * k_ia)`` over both kink species, with the
    densities floored at ``epsilon_floor``, and the state is renormalized.
    Keeping the species apart matters: totals alone cannot tell a domain from
    its spin-flipped image. Plain arrays of per-bond totals are accepted
    too, in which case both species share the total ratio. ``alpha``
    overrides the adaptive weight.
    """
    def log_ratio(t, m):
        return np.log(np.maximum(t, epsilon_floor)) - np.log(np.maximum(m, epsilon_floor))

    plus, minus = indicators
    if isinstance(target, KinkField) and isinstance(measured, KinkField):
        totals = target.total, measured.total
        lr_plus = log_ratio(target.n_plus, measured.n_plus)
        lr_minus = log_ratio(target.n_minus, measured.n_minus)
    else:
        # plain per-bond totals: both species share one ratio
        totals = np.asarray(target, float), np.asarray(measured, float)
        lr_plus = lr_minus = log_ratio(*totals)
    if alpha is None:
        alpha = ipf_weight(*totals, alpha0, kappa)
    if alpha == 0.0 or not (np.any(lr_plus) or np.any(lr_minus)):
        return np.array(state, dtype=np.complex128, copy=True)
    exponent = alpha * (np.asarray(plus, float) @ lr_plus + np.asarray(minus, float) @ lr_minus)
    # shift for overflow safety; the constant cancels on renormalization
    exponent -= exponent.max()
    updated = np.asarray(state, dtype=np.complex128) * np.exp(exponent)
    norm = np.linalg.norm(updated)
    if not np.isfinite(norm) or norm == 0.0:
        raise UpdateCollapseError("every amplitude vanished during the IPF update")
    return updated / norm


@dataclass(frozen=True)
class HybridConfig:
    """Everything :func:`run_protocol` needs.

    ``gamma`` is the transverse field in the same energy units as the lattice
    couplings. ``gamma_sync`` is the rate (per unit time) at which the
    semiclassical field is pulled back toward the measured densities.
    """

    lattice: LatticeSpec
    protocol: DriveProtocol
    gamma: float
    dt: float
    k_sc: int = 1
    v0: float = 1.0
    omega: float = 0.1
    alpha0: float = 0.05
    kappa: float = 0.5
    epsilon_floor: float = 1e-8
    gamma_sync: float = 0.1
    mode: str = "hybrid"
    record_stride: int = 1
    seed: int = 0
    units: UnitSystem = field(default_factory=UnitSystem)
    s_value: float = float("nan")
    record_populations: bool = False
    max_spins: int = MAX_SPINS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.gamma < 0:
            raise ValidationError("gamma must be non-negative")
        if self.k_sc < 1 or self.record_stride < 1:
            raise ValidationError("k_sc and record_stride must be >= 1")
        if not 0.0 <= self.gamma_sync <= 1.0:
            raise ValidationError("gamma_sync must lie in [0, 1]")
        if self.omega < 0 or self.alpha0 < 0 or self.kappa < 0 or self.epsilon_floor <= 0:
            raise ValidationError("omega, alpha0, kappa must be >= 0 and epsilon_floor > 0")
        if self.mode == "hybrid" and not self.lattice.is_ring:
            raise ValidationError("hybrid kink transport is defined on rings only; use unitary-only")

    @property
    def n_steps(self) -> int:
        return int(round(self.protocol.t_total / self.dt))


def lz_gap_estimate(lattice: LatticeSpec, gamma: float) -> float:
    """Smallest spin-flip gap a sweep has to cross.

    Uniform rings use the tracked branch gap from :func:`min_gap_scan`; other
    lattices fall back to the isolated-spin gap ``2 gamma``.
    """
    if gamma == 0:
        return 0.0
    couplings = lattice.couplings
    uniform_ring = (lattice.is_ring and lattice.n_spins >= 3 and np.allclose(couplings, couplings[0])
                    and np.allclose(lattice.local_fields, 1.0) and np.all(np.asarray(lattice.readout_signs) == 1))
    if uniform_ring:
        j = float(couplings[0])
        try:
            _, gap = min_gap_scan(lattice.n_spins, gamma / j, np.linspace(-3.0, -1.0, 201))
            return gap * j
        except InconclusiveScanError:
            pass
    return 2.0 * gamma


def check_time_step(config: HybridConfig) -> float:
    """Return ``dt / tau_LZ`` with ``tau_LZ = gap / hdot``; warn or abort when too coarse."""
    rate = config.protocol.sweep_rate
    gap = lz_gap_estimate(config.lattice, config.gamma)
    if rate == 0 or gap == 0:
        return 0.0
    ratio = config.dt * rate / gap
    if ratio > DT_ABORT_RATIO:
        raise StabilityError(f"dt/tau_LZ = {ratio:.3g} exceeds {DT_ABORT_RATIO}", ratio=ratio)
    if ratio > DT_WARN_RATIO:
        warnings.warn(f"dt/tau_LZ = {ratio:.3g} exceeds {DT_WARN_RATIO}; LZ transitions may be mis-resolved",
                      RuntimeWarning, stacklevel=2)
    return ratio


EMPTY_FIELD_MASS = 1e-3


def _island_sites(lattice):
    """``(2**n, n)`` mask: site differs from every bond neighbour (readout frame)."""
    spins = readout_spins(lattice)
    island = np.ones(spins.shape, dtype=bool)
    has_neighbour = np.zeros(lattice.n_spins, dtype=bool)
    for a, b in lattice.bond_array:
        differs = spins[:, a] != spins[:, b]
        island[:, a] &= differs
        island[:, b] &= differs
        has_neighbour[[a, b]] = True
    return island & has_neighbour


class _Semiclassical:
    """Semiclassical kink field coupled to the quantum state.

    The field starts from the first measured marginals, then evolves on its
    own and is blended toward each new measurement at rate ``gamma_sync`` per
    unit time.

    Before a domain exists, the weight sitting on favourable configurations
    (kink-bearing, classically cheaper than the most probable one, and
    reachable from it by locally unstable flips) is compared against a
    uniform threshold drawn once per epoch. Crossing it is a Born-rule
    nucleation: the state collapses onto one favourable configuration drawn
    by weight, and the field is reset to its walls. Until then the IPF
    target keeps only the marginals of favourable configurations (with a
    resonance-width margin), which relaxes stray kinks without undoing what
    a crossing has transferred.

    Once localized, walls move in whole-bond upwind shifts (CFL ratio 1)
    each time the accumulated displacement ``v0 * h * t`` reaches a bond.
    The target in between shows the fractional position, except that pairs
    due to meet at the next shift fade in place. Each shift also closes
    energetically unstable one-site islands in the state, moving their
    probability to the relaxed configuration. When the field empties the
    epoch ends and a new threshold is drawn.
    """

    def __init__(self, config, lattice, plus, minus, rng):
        self.config = config
        self.lattice = lattice
        self.plus = plus.astype(float)
        self.minus = minus.astype(float)
        self.kinked = (plus + minus).any(axis=1)
        self.rng = rng
        self.field = None
        self.localized = False
        self.offsets = np.zeros(2)
        self.shifts = 0
        self.threshold = rng.uniform()
        self.islands = _island_sites(lattice)

    def _measure(self, probs):
        return KinkField(np.clip(probs @ self.plus, 0, 1), np.clip(probs @ self.minus, 0, 1))

    def _favourable(self, probs, h, margin=0.0):
        """Kinked configurations a domain may nucleate into.

        They are classically cheaper than the most probable configuration and
        differ from it on at least one site whose single flip already lowers
        its energy. A positive ``margin`` (energy) widens both tests, which
        admits configurations still inside an avoided crossing.
        """
        energies = diagonal_energies(self.lattice, h)
        major = int(np.argmax(probs))
        ceiling = energies[major] + margin
        n = self.lattice.n_spins
        unstable = 0
        for site in range(n):
            bit = 1 << (n - 1 - site)
            if energies[major ^ bit] < ceiling:
                unstable |= bit
        index = np.arange(probs.size)
        return self.kinked & (energies < ceiling) & (((index ^ major) & unstable) != 0)

    def _nucleate(self, probs, favourable):
        """Pick a configuration once the favourable weight passes the threshold.

        The threshold is a uniform draw per epoch, so a domain nucleates with
        probability equal to the weight transferred (one Born-rule measurement).
        """
        weight = float(probs[favourable].sum())
        if weight <= self.threshold:
            return None
        choices = np.flatnonzero(favourable)
        k = int(self.rng.choice(choices, p=probs[choices] / weight))
        return k, KinkField(self.plus[k], self.minus[k])

    def _annihilate(self, state, h):
        """Close every one-site island whose flip lowers the classical energy.

        This is the state-side image of walls meeting in the field: the
        probability of each such configuration moves to its relaxed partner.
        The partner keeps its own phase (or inherits the donor's when empty).
        """
        energies = diagonal_energies(self.lattice, h)
        n = self.lattice.n_spins
        index = np.arange(energies.size)
        partner = index.copy()
        for site in range(n):
            bit = 1 << (n - 1 - site)
            closes = self.islands[:, site] & (energies[partner ^ bit] < energies[partner])
            partner = np.where(closes, partner ^ bit, partner)
        # a partner may itself be an island: follow the map to its end
        while True:
            hop = partner[partner]
            if np.array_equal(hop, partner):
                break
            partner = hop
        movers = partner != index
        if not movers.any():
            return state
        probs = np.abs(state) ** 2
        pooled = np.bincount(partner, weights=probs, minlength=probs.size)
        phases = np.where(np.abs(state) > 0, state / np.where(np.abs(state) > 0, np.abs(state), 1), 0)
        donor_phase = np.zeros_like(state)
        donor_phase[partner[movers]] = phases[movers]
        phase = np.where(np.abs(state) > 0, phases, donor_phase)
        phase[movers] = 0
        return np.sqrt(pooled) * phase

    def _advance(self, field, h, elapsed):
        """Pair annihilation plus transport of the reference field.

        The two species carry opposite fractional offsets; whenever they reach
        one bond the reference shifts by a whole bond (an exact upwind step at
        CFL 1). Walls that meet during a shift annihilate outright; ``omega``
        adds a continuous loss of approaching pairs in between.
        """
        cfg = self.config
        step = cfg.v0 * h * elapsed
        self.offsets += (step, -step)
        loss_plus, loss_minus = _pair_products(field.n_plus, field.n_minus, step)
        plus = np.clip(field.n_plus - cfg.omega * elapsed * loss_plus, 0.0, 1.0)
        minus = np.clip(field.n_minus - cfg.omega * elapsed * loss_minus, 0.0, 1.0)
        while abs(self.offsets[0]) >= 1.0:
            direction = np.sign(self.offsets[0])
            met_plus, met_minus = _pair_products(plus, minus, direction)
            plus = _upwind(np.clip(plus - met_plus, 0.0, 1.0), direction)
            minus = _upwind(np.clip(minus - met_minus, 0.0, 1.0), -direction)
            self.offsets -= (direction, -direction)
            self.shifts += 1
        return KinkField(plus, minus)

    def target(self) -> KinkField:
        """The reference field displaced by the fractional offset.

        Each species is interpolated toward its next whole-bond position;
        pairs that annihilate at that shift fade out in place instead of
        sliding through each other.
        """
        offset = self.offsets[0]
        if offset == 0.0:
            return self.field
        direction = np.sign(offset)
        weight = abs(offset)
        plus, minus = self.field.n_plus, self.field.n_minus
        met_plus, met_minus = _pair_products(plus, minus, direction)
        shifted_plus = np.roll(np.clip(plus - met_plus, 0.0, 1.0), int(direction))
        shifted_minus = np.roll(np.clip(minus - met_minus, 0.0, 1.0), -int(direction))
        return KinkField((1 - weight) * plus + weight * shifted_plus,
                         (1 - weight) * minus + weight * shifted_minus)

    def _resonance_width(self, hdot):
        # energy a sweep traverses in one LZ time; transfer inside the
        # crossing itself is left to the unitary step
        hbar = self.config.units.effective_hbar
        return np.sqrt(2.0 * hbar * abs(hdot))

    def couple(self, state, h, hdot, elapsed):
        cfg = self.config
        probs = np.abs(state) ** 2
        measured = self._measure(probs)
        if self.field is None:
            self.field = measured
        else:
            favourable = None if self.localized else self._favourable(probs, h)
            seeded = None if self.localized else self._nucleate(probs, favourable)
            if seeded is not None:
                k, self.field = seeded
                self.localized = True
                self.offsets = np.zeros(2)
                # nucleation is a projective event: keep only the sampled configuration
                collapsed = np.zeros_like(state)
                collapsed[k] = state[k] / abs(state[k])
                return collapsed
            moved = self._advance(self.field, h, elapsed)
            if self.shifts:
                self.shifts = 0
                state = self._annihilate(state, h)
                probs = np.abs(state) ** 2
                measured = self._measure(probs)
            w = 1.0 - np.exp(-cfg.gamma_sync * elapsed)
            self.field = KinkField((1 - w) * moved.n_plus + w * measured.n_plus,
                                   (1 - w) * moved.n_minus + w * measured.n_minus)
            if self.localized and self.field.mass < EMPTY_FIELD_MASS * measured.n_plus.size:
                self.localized = False
                self.threshold = self.rng.uniform()
        if self.localized:
            goal = self.target()
        else:
            # No domain yet: relax only the kinks that cannot seed one, keeping
            # the weight a crossing has transferred toward favourable configurations.
            keep = probs * self._favourable(probs, h, self._resonance_width(hdot))
            goal = KinkField(keep @ self.plus, keep @ self.minus)
        return ipf_update(state, goal, measured, (self.plus, self.minus),
                          cfg.alpha0, cfg.kappa, cfg.epsilon_floor)


def run_protocol(config: HybridConfig, observer=None) -> HysteresisTrace:
    """Simulate the hysteresis protocol described by ``config``.

    The state starts in the all-up product state. Errors raised mid-run carry
    the partial trace as ``err.trace`` with ``trace.partial`` set.
    ``observer(t, h, segment, state)``, if given, is called at every recorded
    point (for example to draw measurement samples).
    """
    lattice = config.lattice
    if lattice.n_spins > config.max_spins:
        raise CapacityError(f"{lattice.n_spins} spins exceeds the dense limit of {config.max_spins}")
    ratio = check_time_step(config)
    hbar = config.units.effective_hbar
    state = all_up_state(lattice.n_spins)
    plus, minus = kink_indicators(lattice)
    rng = np.random.default_rng(config.seed)
    semi = _Semiclassical(config, lattice, plus, minus, rng) if config.mode == "hybrid" else None
    trace = HysteresisTrace.empty()
    trace.meta.update(dt_over_tau_lz=ratio, mode=config.mode, gamma=config.gamma, seed=config.seed)
    if config.record_populations:
        trace.populations = []
    protocol = config.protocol
    n_steps = config.n_steps
    dt = protocol.t_total / n_steps

    def record(t, h, hdot, spectrum, H):
        obs = observe(state, lattice, H)
        trace.append(protocol.segment_tag(t), t=t, s=config.s_value, h=h, hdot=hdot,
                     mx=obs.m_x, my=obs.m_y, mz=obs.m_z, kink_total=obs.kink_total,
                     nplus=float(np.sum(obs.kinks_plus)), nminus=float(np.sum(obs.kinks_minus)),
                     energy=obs.energy)
        if config.record_populations:
            trace.populations.append(adiabatic_populations(state, spectrum)[0])
        if observer is not None:
            observer(t, h, trace.segments[-1], state)

    try:
        for step in range(n_steps):
            t = step * dt
            h, hdot = drive_value(protocol, t)
            H = build_hamiltonian(lattice, config.gamma, h, config.max_spins)
            spectrum = eigendecompose(H)
            if step % config.record_stride == 0:
                record(t, h, hdot, spectrum, H)
            state = propagate_step(state, spectrum, dt, hbar)
            if semi is not None and (step + 1) % config.k_sc == 0:
                state = semi.couple(state, h, hdot, config.k_sc * dt)
        t = protocol.t_total
        h, hdot = drive_value(protocol, t)
        H = build_hamiltonian(lattice, config.gamma, h, config.max_spins)
        record(t, h, hdot, eigendecompose(H), H)
    except QHystError as err:
        trace.partial = True
        err.trace = trace
        raise
    return trace


def with_overrides(config: HybridConfig, **changes) -> HybridConfig:
    return replace(config, **changes)
