"""Mean-field magnetization dynamics with bath relaxation, and the
non-interacting interaction-picture baseline.

The mean field ``h_eff = h(t) + c J m_z`` is evaluated with the current
``m_z`` (explicit coupling, no inner self-consistency loop). Both variants
integrate the lab-frame vector ``(m_x, m_y, m_z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError, StabilityError, ValidationError
from .spin_model import DriveProtocol, drive_integral, drive_value
from .trace import HysteresisTrace

VARIANTS = ("weak-gamma", "full")
NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SinusoidalDrive:
    """``h(t) = h1 sin(omega t)``.

    A lead-in of a quarter period brings the field to ``+h1``; ``periods``
    full cycles follow, so ``t_total = (pi/2 + 2 pi periods) / omega``.
    """

    h1: float
    omega: float
    periods: int = 1

    def __post_init__(self):
        if self.h1 <= 0 or self.omega <= 0:
            raise ValidationError("h1 and omega must be positive")
        if self.periods < 1:
            raise ValidationError("periods must be >= 1")

    @property
    def lead_in(self):
        return 0.5 * math.pi / self.omega

    @property
    def period(self):
        return 2.0 * math.pi / self.omega

    @property
    def t_total(self):
        return self.lead_in + self.periods * self.period

    @property
    def sweep_rate(self):
        return self.h1 * self.omega

    def value(self, t):
        return self.h1 * math.sin(self.omega * t), self.h1 * self.omega * math.cos(self.omega * t)

    def integral(self, t):
        return self.h1 * (1.0 - math.cos(self.omega * t)) / self.omega

    def segment_tag(self, t):
        if t <= self.lead_in:
            return "ramp"
        return "backward" if math.cos(self.omega * t) < 0 else "forward"


def drive_at(drive, t):
    """``(h, hdot)`` for either drive type."""
    if isinstance(drive, SinusoidalDrive):
        return drive.value(t)
    return drive_value(drive, t)


def field_integral(drive, t):
    if isinstance(drive, SinusoidalDrive):
        return drive.integral(t)
    return drive_integral(drive, t)


@dataclass(frozen=True)
class MfaParams:
    """Mean-field run parameters. ``lam`` is the bath relaxation rate."""

    gamma: float
    drive: DriveProtocol | SinusoidalDrive
    j: float = 1.0
    coordination: int = 1
    lam: float = 1.0
    beta: float = 1.0
    dt: float = 1e-2
    variant: str = "weak-gamma"
    record_stride: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        if self.beta <= 0 or self.dt <= 0:
            raise ValidationError("beta and dt must be positive")
        if self.gamma < 0:
            raise ValidationError("gamma must be non-negative")
        if self.coordination < 0 or self.record_stride < 1:
            raise ValidationError("coordination must be >= 0 and record_stride >= 1")


def effective_field(m, h, params: MfaParams) -> float:
    return h + params.coordination * params.j * m[2]


def _signed_h0(h_eff, gamma):
    h0 = math.hypot(h_eff, gamma)
    # sign(0) is taken as +1
    return h0 if h_eff >= 0 else -h0


def tilt_angle(h_eff: float, gamma: float, strict: bool = True) -> float:
    """``arctan(gamma / h_eff)``, the angle of the rotating frame.

    At ``h_eff = 0`` the limit is ``pi/2`` for ``gamma > 0``. With ``gamma``
    also zero the direction is undefined: ``strict`` raises, otherwise the
    same limit is substituted.
    """
    if h_eff == 0.0:
        if gamma == 0.0 and strict:
            raise SingularityError("h_eff = 0 with gamma = 0: rotation angle undefined")
        return 0.5 * math.pi
    return math.atan(gamma / h_eff)


def interaction_expectations(m, h_eff, gamma, t, strict=True):
    """Interaction-picture ``(<sx>, <sy>, <sz>)`` from the lab-frame vector."""
    mx, my, mz = m
    theta = tilt_angle(h_eff, gamma, strict)
    s, c = math.sin(theta), math.cos(theta)
    phase = _signed_h0(h_eff, gamma) * t
    sx = mx * math.cos(phase) * c + my * math.sin(phase)
    sy = my * math.cos(phase) - mz * math.sin(phase) * s
    sz = mz * c + mx * s
    return sx, sy, sz


def mfa_derivatives(m, t: float, params: MfaParams, strict: bool = True) -> np.ndarray:
    """``dm/dt`` for the selected variant.

    ``weak-gamma`` is the LLG-like form: precession about ``(gamma, 0, h_eff)``
    plus relaxation of ``m_z`` toward ``tanh(beta h0')`` and phase-modulated
    damping of the transverse components. ``full`` keeps the frame angle
    ``arctan(gamma/h_eff)``, the interaction-picture expectations and the
    frame-rotation terms proportional to ``gamma hdot / (gamma^2 + h_eff^2)``.
    """
    mx, my, mz = (float(v) for v in m)
    h, hdot = drive_at(params.drive, t)
    gamma, lam = params.gamma, params.lam
    h_eff = effective_field((mx, my, mz), h, params)
    h0p = _signed_h0(h_eff, gamma)
    target = math.tanh(params.beta * h0p)
    phase = h0p * t
    cos_p, sin_p = math.cos(phase), math.sin(phase)
    if params.variant == "weak-gamma":
        return np.array([
            -lam * mx * cos_p + 2.0 * h_eff * my,
            -lam * (my * cos_p - mx * sin_p) - 2.0 * h_eff * mx + 2.0 * gamma * mz,
            -2.0 * lam * (mz - target) - 2.0 * gamma * my,
        ])
    theta = tilt_angle(h_eff, gamma, strict)
    s, c = math.sin(theta), math.cos(theta)
    sx, sy, _ = interaction_expectations((mx, my, mz), h_eff, gamma, t, strict)
    denom = gamma * gamma + h_eff * h_eff
    # 2 i g(h) with g = (i/2) gamma hdot / (gamma^2 + h_eff^2) is real
    frame = -gamma * hdot / denom if denom > 0 else 0.0
    dmz = (-2.0 * h0p * my * s
           + lam * (2.0 * (target - mz) * c + sx * cos_p * s + sy * sin_p * s)
           + frame * (2.0 * mx * c + mz * s))
    dmx = (2.0 * h0p * my * c
           + lam * (2.0 * (target - mz) * s - sx * cos_p * c - sy * sin_p * c)
           + frame * (-mz * c + mx * s))
    # precession about the tilted field keeps the gamma m_z term of the weak form
    dmy = 2.0 * h0p * (mz * s - mx * c) + lam * (-sy * cos_p + sx * sin_p)
    return np.array([dmx, dmy, dmz])


def _record(trace, params, t, m):
    h, hdot = drive_at(params.drive, t)
    trace.append(params.drive.segment_tag(t), t=t, s=float("nan"), h=h, hdot=hdot,
                 mx=m[0], my=m[1], mz=m[2], kink_total=float("nan"),
                 nplus=float("nan"), nminus=float("nan"), energy=float("nan"))


def run_mfa(params: MfaParams, m0=(0.0, 0.0, 1.0)) -> HysteresisTrace:
    """Fixed-step RK4 integration from ``m0`` over the whole drive.

    The norm of ``m`` is monitored; leaving the unit ball by more than
    ``NORM_TOLERANCE`` raises :class:`StabilityError` with the partial trace
    attached as ``err.trace``.
    """
    drive = params.drive
    n_steps = max(1, int(round(drive.t_total / params.dt)))
    dt = drive.t_total / n_steps
    m = np.asarray(m0, dtype=float)
    trace = HysteresisTrace.empty()
    trace.meta.update(model="mfa", variant=params.variant, gamma=params.gamma)

    def f(t, v):
        return mfa_derivatives(v, t, params, strict=False)

    for step in range(n_steps):
        t = step * dt
        if step % params.record_stride == 0:
            _record(trace, params, t, m)
        k1 = f(t, m)
        k2 = f(t + dt / 2, m + dt / 2 * k1)
        k3 = f(t + dt / 2, m + dt / 2 * k2)
        k4 = f(t + dt, m + dt * k3)
        m = m + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = float(np.linalg.norm(m))
        if not np.isfinite(norm) or norm > 1.0 + NORM_TOLERANCE:
            trace.partial = True
            err = StabilityError(f"|m| = {norm:.8f} left the unit ball at t = {t + dt:.6g}; reduce dt",
                                 ratio=norm)
            err.trace = trace
            raise err
    _record(trace, params, drive.t_total, m)
    return trace


def interaction_picture_mz(gamma: float, field_integral_value: float, elapsed: float) -> float:
    """Closed-form ``<sigma^z>`` of a single spin started up.

    ``m_z = cos(theta) + cos(a) (1 - cos(theta))`` with
    ``a = 2 sqrt((gamma dt)^2 + I^2)`` and ``theta = arctan(gamma dt / I)``,
    ``I`` being the accumulated field integral.
    """
    x = gamma * elapsed
    integral = field_integral_value
    a = 2.0 * math.hypot(x, integral)
    theta = 0.5 * math.pi if integral == 0.0 else math.atan(x / integral)
    if x == 0.0:
        theta = 0.0
    cos_t = math.cos(theta)
    return cos_t + math.cos(a) * (1.0 - cos_t)


def interaction_picture_trace(gamma: float, drive, dt: float) -> HysteresisTrace:
    """Sample the interaction-picture magnetization on a uniform time grid."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    n_steps = max(1, int(round(drive.t_total / dt)))
    step = drive.t_total / n_steps
    trace = HysteresisTrace.empty()
    trace.meta.update(model="interaction-picture", gamma=gamma)
    nan = float("nan")
    for k in range(n_steps + 1):
        t = k * step
        h, hdot = drive_at(drive, t)
        mz = interaction_picture_mz(gamma, field_integral(drive, t), t)
        trace.append(drive.segment_tag(t), t=t, s=nan, h=h, hdot=hdot, mx=nan, my=nan, mz=mz,
                     kink_total=nan, nplus=nan, nminus=nan, energy=nan)
    return trace
