"""Line-oriented problem and solution files.

Each non-blank line is ``key = value``; ``#`` starts a comment.  Repeated
keys (``egg``, ``pose``) build lists in order.  Floats are written with 17
significant digits so a write/read round trip is exact.

Problem file::

    m = 3
    egg = 1 1 2 0          # a b p t
    egg = 0.5 0.25 2 0.5
    epsilon = 0            # optional
    lb = -2                # optional centre bounds
    ub = 2
    starts = 50            # optional solver overrides
    seed = 0

Solution file::

    d = 1.7071067811865475
    pose = -0.70710678118654746 0.70710678118654757 0
    ...
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .geometry import EggShape, GeometryError, Pose
from .model import PackingInstance
from .solver import SolverConfig

__all__ = ["FormatError", "ProblemFile", "SolutionFile", "read_problem", "write_problem", "read_solution", "write_solution"]

_CONFIG_KEYS = {
    "starts": int,
    "seed": int,
    "max_outer": int,
    "max_inner": int,
    "feas_tol": float,
    "opt_tol": float,
    "verify_tol": float,
}


class FormatError(ValueError):
    """Malformed input; the message names the file, line and field."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _lines(path):
    with open(path) as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise FormatError(f"{path}:{no}: expected 'key = value', got {text!r}")
            key, value = (s.strip() for s in text.split("=", 1))
            yield no, key.lower(), value


def _number(path, no, key, text, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise FormatError(f"{path}:{no}: field '{key}': cannot parse {text!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise FormatError(f"{path}:{no}: field '{key}': value must be finite")
    return value


def _numbers(path, no, key, text, count):
    parts = text.split()
    if len(parts) != count:
        raise FormatError(f"{path}:{no}: field '{key}': expected {count} numbers, got {len(parts)}")
    return [_number(path, no, key, p) for p in parts]


@dataclass
class ProblemFile:
    m: int
    eggs: list
    epsilon: float = 0.0
    lb: float | None = None
    ub: float | None = None
    overrides: dict = field(default_factory=dict)

    def instance(self) -> PackingInstance:
        return PackingInstance(self.m, tuple(self.eggs), self.epsilon, self.lb, self.ub)

    def config(self, **changes) -> SolverConfig:
        opts = dict(self.overrides)
        opts.update({k: v for k, v in changes.items() if v is not None})
        return SolverConfig(**opts)


def read_problem(path) -> ProblemFile:
    """Parse a problem file; raises :class:`FormatError` naming the bad line/field."""
    m = None
    eggs = []
    extra = {}
    overrides = {}
    for no, key, value in _lines(path):
        if key == "m":
            m = _number(path, no, key, value, int)
        elif key == "egg":
            a, b, p, t = _numbers(path, no, key, value, 4)
            if p != int(p):
                raise FormatError(f"{path}:{no}: field 'egg': exponent {p} is not an integer")
            try:
                eggs.append(EggShape(a, b, int(p), t))
            except (GeometryError, ValueError) as exc:
                raise FormatError(f"{path}:{no}: field 'egg': {exc}") from None
        elif key in ("epsilon", "lb", "ub"):
            extra[key] = _number(path, no, key, value)
        elif key in _CONFIG_KEYS:
            overrides[key] = _number(path, no, key, value, _CONFIG_KEYS[key])
        else:
            raise FormatError(f"{path}:{no}: unknown field '{key}'")
    if m is None:
        raise FormatError(f"{path}: missing field 'm'")
    if not eggs:
        raise FormatError(f"{path}: field 'egg': egg list is empty")
    prob = ProblemFile(m, eggs, extra.get("epsilon", 0.0), extra.get("lb"), extra.get("ub"), overrides)
    try:
        prob.instance()
        prob.config()
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return prob


def write_problem(path, instance: PackingInstance, overrides: dict | None = None) -> None:
    lines = [f"m = {instance.m}"]
    lines += [f"egg = {fmt(s.a)} {fmt(s.b)} {s.p} {fmt(s.t)}" for s in instance.eggs]
    lines += [f"epsilon = {fmt(instance.epsilon)}", f"lb = {fmt(instance.lb)}", f"ub = {fmt(instance.ub)}"]
    lines += [f"{k} = {v}" for k, v in (overrides or {}).items()]
    _write(path, lines)


@dataclass
class SolutionFile:
    d: float
    poses: list
    objective: float
    area: float
    fraction: float
    certified: bool
    min_pair_margin: float = math.inf
    min_containment_margin: float = math.inf
    tol: float = 1e-6
    status: str = ""
    seed: int = 0
    starts: int = 0
    time_sec: float = 0.0


_SOLUTION_FLOATS = ("d", "objective", "area", "fraction", "min_pair_margin", "min_containment_margin", "tol", "time_sec")


def write_solution(path, sol: SolutionFile) -> None:
    lines = [f"d = {fmt(sol.d)}"]
    lines += [f"pose = {fmt(q.xc)} {fmt(q.yc)} {fmt(q.theta)}" for q in sol.poses]
    lines += [
        f"objective = {fmt(sol.objective)}",
        f"area = {fmt(sol.area)}",
        f"fraction = {fmt(sol.fraction)}",
        f"certified = {str(bool(sol.certified)).lower()}",
        f"min_pair_margin = {fmt(sol.min_pair_margin)}",
        f"min_containment_margin = {fmt(sol.min_containment_margin)}",
        f"tol = {fmt(sol.tol)}",
        f"status = {sol.status}",
        f"seed = {sol.seed}",
        f"starts = {sol.starts}",
        f"time_sec = {sol.time_sec:.3f}",
    ]
    _write(path, lines)


def read_solution(path) -> SolutionFile:
    values = {}
    poses = []
    for no, key, value in _lines(path):
        if key == "pose":
            xc, yc, th = _numbers(path, no, key, value, 3)
            try:
                poses.append(Pose(xc, yc, th))
            except (GeometryError, ValueError) as exc:
                raise FormatError(f"{path}:{no}: field 'pose': {exc}") from None
        elif key in ("min_pair_margin", "min_containment_margin"):
            values[key] = float(value) if value.lower() in ("inf", "-inf") else _number(path, no, key, value)
        elif key in _SOLUTION_FLOATS:
            values[key] = _number(path, no, key, value)
        elif key in ("seed", "starts"):
            values[key] = _number(path, no, key, value, int)
        elif key == "certified":
            values[key] = value.lower() == "true"
        elif key == "status":
            values[key] = value
        else:
            raise FormatError(f"{path}:{no}: unknown field '{key}'")
    if "d" not in values:
        raise FormatError(f"{path}: missing field 'd'")
    if not poses:
        raise FormatError(f"{path}: no 'pose' lines")
    d = values.pop("d")
    return SolutionFile(
        d=d,
        poses=poses,
        objective=values.pop("objective", d),
        area=values.pop("area", math.nan),
        fraction=values.pop("fraction", math.nan),
        certified=values.pop("certified", False),
        **values,
    )


def _write(path, lines) -> None:
    text = "\n".join(lines) + "\n"
    if path in ("-", None):
        print(text, end="")
        return
    with open(os.fspath(path), "w") as fh:
        fh.write(text)
