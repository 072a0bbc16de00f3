"""Run configuration documents and the CSV formats for schedules, traces and samples."""

from __future__ import annotations

import csv
import io as _stdio
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .analysis import SampleEntry, SampleSet
from .errors import ConfigError, ParseError, ScheduleError, ValidationError
from .trace import TRACE_COLUMNS, HysteresisTrace

TRACE_HEADER = TRACE_COLUMNS + ("segment",)
SCHEDULE_HEADER = ("s", "A_GHz", "B_GHz")
SAMPLE_HEADER = ("h", "segment", "config")

# ---------------------------------------------------------------- config schema

_REQUIRED = object()


@dataclass(frozen=True)
class _Key:
    kind: type
    default: object = None
    choices: tuple | None = None
    check: object = None  # callable(value) -> error message or None


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _at_least(n):
    return lambda v: None if v >= n else f"must be >= {n}"


def _fraction(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


SCHEMA = {
    "lattice": {
        "kind": _Key(str, _REQUIRED, ("ring", "grid")),
        "n": _Key(int, None, check=_at_least(2)),
        "width": _Key(int, None, check=_at_least(2)),
        "height": _Key(int, None, check=_at_least(2)),
        "coupling": _Key(float, 1.0),
        "afm_gauge": _Key(bool, False),
    },
    "drive": {
        "kind": _Key(str, "triangular", ("triangular", "sinusoidal")),
        "h_max": _Key(float, None, check=_positive),
        "t_total": _Key(float, None, check=_positive),
        "segments": _Key(list, None),
        "h1": _Key(float, None, check=_positive),
        "omega": _Key(float, None, check=_positive),
        "periods": _Key(int, 1, check=_at_least(1)),
    },
    "schedule": {
        "gamma": _Key(float, None, check=_non_negative),
        "j_over_gamma": _Key(float, None, check=_positive),
        "file": _Key(str, None),
        "s_pause": _Key(float, None, check=_fraction),
        "gamma_prime": _Key(float, 1.0),
        "j_prime": _Key(float, 1.0),
    },
    "hybrid": {
        "dt": _Key(float, 0.02, check=_positive),
        "k_sc": _Key(int, 1, check=_at_least(1)),
        "v0": _Key(float, 1.0),
        "omega": _Key(float, 0.1, check=_non_negative),
        "alpha0": _Key(float, 0.05, check=_non_negative),
        "kappa": _Key(float, 0.5, check=_non_negative),
        "epsilon_floor": _Key(float, 1e-8, check=_positive),
        "gamma_sync": _Key(float, 0.1, check=_fraction),
        "mode": _Key(str, "hybrid", ("hybrid", "unitary-only")),
        "record_stride": _Key(int, 1, check=_at_least(1)),
        "seed": _Key(int, 0),
        "record_populations": _Key(bool, False),
    },
    "mfa": {
        "lam": _Key(float, 0.5, check=_non_negative),
        "beta": _Key(float, 0.3, check=_positive),
        "dt": _Key(float, 0.005, check=_positive),
        "variant": _Key(str, "weak-gamma", ("weak-gamma", "full")),
        "coordination": _Key(int, 1, check=_non_negative),
        "record_stride": _Key(int, 1, check=_at_least(1)),
        "gammas": _Key(list, None),
    },
    "output": {
        "dir": _Key(str, "out"),
        "trace": _Key(str, "trace.csv"),
        "samples": _Key(int, 0, check=_non_negative),
        "sample_seed": _Key(int, 0),
    },
}


def _coerce(path, key_def: _Key, value):
    if key_def.kind is bool:
        ok = isinstance(value, bool)
    elif key_def.kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif key_def.kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, key_def.kind)
    if not ok:
        raise ConfigError(path, f"expected {key_def.kind.__name__}, got {type(value).__name__}")
    if key_def.choices is not None and value not in key_def.choices:
        raise ConfigError(path, f"must be one of {', '.join(key_def.choices)}; got {value!r}")
    if key_def.check is not None:
        problem = key_def.check(value)
        if problem:
            raise ConfigError(path, problem)
    return value


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: one plain dict per section, defaults filled."""

    sections: dict

    def __getitem__(self, section):
        return self.sections[section]

    def to_dict(self):
        """Nested dict without unset (``None``) entries, ready for TOML."""
        return {name: {k: v for k, v in body.items() if v is not None}
                for name, body in self.sections.items()}


def _validate_sections(doc):
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a table of sections")
    sections = {}
    for name in doc:
        if name not in SCHEMA:
            raise ConfigError(name, f"unknown section; expected one of {', '.join(SCHEMA)}")
    for name, keys in SCHEMA.items():
        body = doc.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(name, "must be a table")
        for key in body:
            if key not in keys:
                raise ConfigError(f"{name}.{key}", "unknown key")
        values = {}
        for key, key_def in keys.items():
            path = f"{name}.{key}"
            if key in body:
                values[key] = _coerce(path, key_def, body[key])
            elif key_def.default is _REQUIRED:
                raise ConfigError(path, "required key is missing")
            else:
                values[key] = key_def.default
        sections[name] = values
    return sections


def _require(sections, section, key, why):
    if sections[section][key] is None:
        raise ConfigError(f"{section}.{key}", f"required {why}")


def _cross_check(sections):
    lat = sections["lattice"]
    if lat["kind"] == "ring":
        _require(sections, "lattice", "n", "for a ring lattice")
    else:
        _require(sections, "lattice", "width", "for a grid lattice")
        _require(sections, "lattice", "height", "for a grid lattice")
    drv = sections["drive"]
    if drv["kind"] == "triangular":
        _require(sections, "drive", "h_max", "for a triangular drive")
        _require(sections, "drive", "t_total", "for a triangular drive")
        if drv["segments"] is not None:
            segs = drv["segments"]
            for k, seg in enumerate(segs):
                if (not isinstance(seg, list) or len(seg) != 3
                        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in seg)):
                    raise ConfigError(f"drive.segments[{k}]", "expected [fraction, h_start, h_end]")
            drv["segments"] = [[float(x) for x in seg] for seg in segs]
            total = sum(seg[0] for seg in drv["segments"])
            if abs(total - 1.0) > 1e-9:
                raise ConfigError("drive.segments", f"fractions sum to {total:g}, expected 1")
    else:
        _require(sections, "drive", "h1", "for a sinusoidal drive")
        _require(sections, "drive", "omega", "for a sinusoidal drive")
    sch = sections["schedule"]
    sources = [sch["gamma"] is not None, sch["j_over_gamma"] is not None, sch["file"] is not None]
    if sum(sources) != 1:
        raise ConfigError("schedule", "give exactly one of gamma, j_over_gamma, or file with s_pause")
    if sch["file"] is not None:
        _require(sections, "schedule", "s_pause", "with a schedule file")
    elif sch["s_pause"] is not None:
        raise ConfigError("schedule.s_pause", "only meaningful together with schedule.file")
    gammas = sections["mfa"]["gammas"]
    if gammas is not None:
        if not gammas or not all(isinstance(g, (int, float)) and not isinstance(g, bool) and g > 0
                                 for g in gammas):
            raise ConfigError("mfa.gammas", "expected a non-empty list of positive numbers")
        sections["mfa"]["gammas"] = [float(g) for g in gammas]


def parse_config(document: str) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Unknown sections and keys are rejected, every value is type-checked, and
    diagnostics name the offending key path.
    """
    try:
        doc = tomli.loads(document)
    except tomli.TOMLDecodeError as err:
        raise ParseError(str(err), getattr(err, "lineno", None)) from None
    sections = _validate_sections(doc)
    _cross_check(sections)
    return RunConfig(sections)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(config: RunConfig) -> str:
    """TOML text that parses back to an equal :class:`RunConfig`."""
    return tomli_w.dumps(config.to_dict())


# ---------------------------------------------------------------- physics from config


@dataclass(frozen=True)
class Physics:
    """Energies derived from a configuration, in the units the simulators use."""

    gamma: float
    j: float
    h_scale: float
    energy_unit: str


def derive_physics(config: RunConfig, base_dir=".") -> Physics:
    """Resolve ``gamma``, ``J`` and the drive scale.

    With a schedule file the device mapping applies: ``gamma = A(s) gamma'/2``,
    ``J = B(s) J'/2``, and drive amplitudes are read as programmed values
    scaled by ``B(s)/2``.
    """
    from .spin_model import device_energies

    sch = config["schedule"]
    coupling = config["lattice"]["coupling"]
    if sch["gamma"] is not None:
        return Physics(sch["gamma"], coupling, 1.0, "natural")
    if sch["j_over_gamma"] is not None:
        return Physics(abs(coupling) / sch["j_over_gamma"], coupling, 1.0, "natural")
    path = Path(sch["file"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    schedule = load_schedule_csv(path)
    gamma, j, h_scale = device_energies(schedule, sch["s_pause"], sch["gamma_prime"],
                                        sch["j_prime"] * coupling, 1.0)
    return Physics(gamma, j, h_scale, "device")


# ---------------------------------------------------------------- CSV helpers


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _read_rows(path, header):
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(_stdio.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("file is empty", 1) from None
    if tuple(c.strip() for c in first) != tuple(header):
        raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
        yield reader.line_num, [c.strip() for c in row]


def _float(text, line, name):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{name}: cannot parse {text!r} as a number", line) from None


def load_schedule_csv(path):
    """Read an anneal schedule table with header ``s,A_GHz,B_GHz``."""
    from .spin_model import Schedule

    rows, lines = [], []
    for line, row in _read_rows(path, SCHEDULE_HEADER):
        rows.append(tuple(_float(v, line, n) for v, n in zip(row, SCHEDULE_HEADER)))
        lines.append(line)
    if len(rows) < 2:
        raise ScheduleError("schedule needs at least two rows")
    for k in range(1, len(rows)):
        (s0, a0, b0), (s1, a1, b1) = rows[k - 1], rows[k]
        if s1 <= s0:
            raise ParseError("s must be strictly increasing", lines[k])
        if a1 > a0:
            raise ParseError("A_GHz must be non-increasing in s", lines[k])
        if b1 < b0:
            raise ParseError("B_GHz must be non-decreasing in s", lines[k])
    return Schedule.from_rows(rows)


def write_schedule_csv(schedule, path):
    lines = [",".join(SCHEDULE_HEADER)]
    lines += [",".join(_fmt(v) for v in row) for row in schedule.rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def trace_to_csv(trace: HysteresisTrace) -> str:
    out = [",".join(TRACE_HEADER)]
    cols = [trace.columns[name] for name in TRACE_COLUMNS]
    for k, tag in enumerate(trace.segments):
        out.append(",".join([_fmt(float(c[k])) for c in cols] + [tag]))
    return "\n".join(out) + "\n"


def write_trace_csv(trace: HysteresisTrace, path):
    """Write a trace with 17 significant digits so values round-trip exactly."""
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace_csv(path) -> HysteresisTrace:
    trace = HysteresisTrace.empty()
    for line, row in _read_rows(path, TRACE_HEADER):
        values = {name: _float(v, line, name) for name, v in zip(TRACE_COLUMNS, row)}
        trace.append(row[-1], **values)
    return trace


def parse_config_string(text: str, line=None) -> np.ndarray:
    """Spin string to +-1 values.

    Accepts ``+``/``-`` characters, ``0``/``1`` bits (0 is spin up), or
    whitespace/semicolon separated ``+1``/``-1`` tokens.
    """
    text = text.strip()
    if not text:
        raise ParseError("empty configuration", line)
    if set(text) <= {"+", "-"}:
        return np.array([1 if c == "+" else -1 for c in text], dtype=np.int8)
    if set(text) <= {"0", "1"}:
        return np.array([1 if c == "0" else -1 for c in text], dtype=np.int8)
    tokens = text.replace(";", " ").split()
    try:
        spins = np.array([int(t) for t in tokens], dtype=np.int8)
    except ValueError:
        raise ParseError(f"cannot read configuration {text!r}", line) from None
    if not np.all(np.abs(spins) == 1):
        raise ParseError(f"configuration {text!r} has entries other than +1/-1", line)
    return spins


def format_config_string(spins) -> str:
    return "".join("+" if s > 0 else "-" for s in spins)


def load_sampleset_csv(path) -> SampleSet:
    """Read ``h,segment,config`` rows; consecutive rows sharing ``(h, segment)``
    form one entry."""
    entries, current, key = [], [], None
    width = None
    for line, (h_text, segment, config) in _read_rows(path, SAMPLE_HEADER):
        h = _float(h_text, line, "h")
        spins = parse_config_string(config, line)
        if width is None:
            width = spins.size
        elif spins.size != width:
            raise ParseError(f"configuration length {spins.size} differs from {width}", line)
        if key is not None and (h, segment) != key:
            entries.append(SampleEntry(key[0], key[1], np.array(current)))
            current = []
        key = (h, segment)
        current.append(spins)
    if key is not None:
        entries.append(SampleEntry(key[0], key[1], np.array(current)))
    return SampleSet(entries)


def write_sampleset_csv(samples: SampleSet, path):
    lines = [",".join(SAMPLE_HEADER)]
    for entry in samples:
        for cfg in entry.configs:
            lines.append(f"{_fmt(entry.h)},{entry.segment},{format_config_string(cfg)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_table_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(float(v)) if not isinstance(v, str) else v for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table_csv(path, header):
    """Numeric table with a fixed header; returns one float array per column."""
    rows = [[_float(v, line, name) for v, name in zip(row, header)] for line, row in _read_rows(path, header)]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return [np.array(col) for col in zip(*rows)]
