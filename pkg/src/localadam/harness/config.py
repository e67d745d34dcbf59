"""Experiment configuration files.

The format is INI as read by :mod:`configparser`. Lists are comma separated.
Every grid key accepts a list, and the experiment runs the Cartesian
product. Example::

    [experiment]
    name = compare
    output_dir = out
    seed_count = 20        ; or: seeds = 0, 1, 2
    seed_base = 0
    families = LocalSGDM, MinibatchSGDM
    metric = xhat_gap      ; summary metric, see FINAL_METRICS
    quantile = 0.9
    tuning = median        ; median | quantile | none
    jobs = 1               ; runs executed concurrently
    threads = 0            ; worker threads inside a run, 0 = vectorized

    [objective]
    kind = quadratic       ; quadratic | geman_mcclure | counter_example
    a = 0.1, 0.5, 1.0      ; or: d, mu, L for an evenly spaced spectrum
    b = 0, 0, 0            ; optional, default zero
    x0 = 1.0               ; scalar or one value per coordinate

    [noise]
    kind = gaussian        ; gaussian | three_point | student_t
    sigma = 1.0            ; scalar or per-coordinate
    alpha = 4
    spike = 2
    dof = 10
    batch = 1

    [optimizer]
    eta = 0.01, 0.03
    beta1 = 0.9
    beta2 = 0.999
    lambda = 1.0
    clip_placement = average

    [clip]
    mode = coordinate      ; coordinate | global | off
    rho = inf, 5.0

    [topology]
    M = 8
    K = 32
    R = 16

Geman-McClure objectives take ``c`` (list) or ``d`` plus scalar ``c``; the
counterexample takes ``L``. Inline comments start with ``;``.
"""

from __future__ import annotations

import configparser
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..clipping import ClipMode, ClipRule
from ..diagnostics import METRICS
from ..noise import NoiseModel
from ..objectives import GemanMcClure, Objective, Quadratic, counter_example
from ..optim import Family, OptimizerConfig

FINAL_METRICS = METRICS + ("xhat_gap", "best_gap", "peak_consensus")
TUNING_RULES = ("median", "quantile", "none")
OBJECTIVE_KINDS = ("quadratic", "geman_mcclure", "counter_example")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _floats(text: str, where: str) -> tuple[float, ...]:
    try:
        out = tuple(float(t) for t in text.replace("\n", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(where, f"expected numbers, got {text!r}") from exc
    if not out:
        raise ConfigError(where, "empty list")
    return out


def _ints(text: str, where: str) -> tuple[int, ...]:
    vals = _floats(text, where)
    if any(v != int(v) for v in vals):
        raise ConfigError(where, f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _fmt(vals) -> str:
    return ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals)


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()
    c: tuple[float, ...] = ()
    L: float = 1.0

    @property
    def dim(self) -> int:
        if self.kind == "counter_example":
            return 1
        return len(self.a) if self.kind == "quadratic" else len(self.c)

    def build(self) -> Objective:
        if self.kind == "quadratic":
            return Quadratic(np.array(self.a), np.array(self.b))
        if self.kind == "geman_mcclure":
            return GemanMcClure(np.array(self.c))
        return counter_example(self.L)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    sigma: tuple[float, ...]
    alpha: float = 4.0
    spike: float = 2.0
    dof: float = 10.0
    batch: int = 1

    def build(self) -> NoiseModel:
        return NoiseModel(self.kind, np.array(self.sigma), alpha=self.alpha,
                          spike=self.spike, dof=self.dof)


@dataclass(frozen=True)
class GridSpec:
    eta: tuple[float, ...]
    rho: tuple[float, ...] = (math.inf,)
    beta1: tuple[float, ...] = (0.9,)
    beta2: tuple[float, ...] = (0.999,)
    lam: tuple[float, ...] = (1.0,)
    M: tuple[int, ...] = (1,)
    K: tuple[int, ...] = (1,)
    R: tuple[int, ...] = (1,)
    clip_mode: str = "coordinate"
    clip_placement: str = "average"

    def points(self) -> list[dict]:
        """Grid points in a fixed order: topology varies slowest, ``lam`` fastest."""
        keys = ("M", "K", "R", "eta", "rho", "beta1", "beta2", "lam")
        return [dict(zip(keys, vals)) for vals in itertools.product(*(getattr(self, k) for k in keys))]

    def optimizer(self, point: dict, family: str) -> OptimizerConfig:
        mode = ClipMode(self.clip_mode)
        rule = ClipRule(mode, point["rho"]) if mode is not ClipMode.OFF else ClipRule.off()
        return OptimizerConfig(
            eta=point["eta"], beta1=point["beta1"], beta2=point["beta2"], lam=point["lam"],
            clip=rule, M=point["M"], K=point["K"], R=point["R"], family=family,
            clip_placement=self.clip_placement,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce an experiment's output files."""

    name: str
    objective: ObjectiveSpec
    noise: NoiseSpec
    grid: GridSpec
    x0: tuple[float, ...]
    seeds: tuple[int, ...]
    families: tuple[str, ...] = ("LocalAdam",)
    output_dir: str = "out"
    metric: str = "f_gap"
    quantile: float = 0.9
    tuning: str = "median"
    jobs: int = 1
    threads: int = 0

    def __post_init__(self):
        validate(self)

    @property
    def dim(self) -> int:
        return self.objective.dim


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` on the first invalid field."""
    if not cfg.name or any(ch in cfg.name for ch in "/\\"):
        raise ConfigError("experiment.name", "must be a non-empty plain file name")
    if not cfg.seeds:
        raise ConfigError("experiment.seeds", "no seeds given")
    if any(s < 0 for s in cfg.seeds) or len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("experiment.seeds", "seeds must be distinct and nonnegative")
    if not cfg.families:
        raise ConfigError("experiment.families", "no optimizer families given")
    for fam in cfg.families:
        try:
            Family(fam)
        except ValueError:
            raise ConfigError("experiment.families", f"unknown family {fam!r}") from None
    if cfg.metric not in FINAL_METRICS:
        raise ConfigError("experiment.metric", f"choose from {', '.join(FINAL_METRICS)}")
    if not 0.0 < cfg.quantile < 1.0:
        raise ConfigError("experiment.quantile", "must lie in (0, 1)")
    if cfg.tuning not in TUNING_RULES:
        raise ConfigError("experiment.tuning", f"choose from {', '.join(TUNING_RULES)}")
    if cfg.jobs < 1:
        raise ConfigError("experiment.jobs", "must be >= 1")
    if cfg.threads < 0:
        raise ConfigError("experiment.threads", "must be >= 0")

    o = cfg.objective
    if o.kind not in OBJECTIVE_KINDS:
        raise ConfigError("objective.kind", f"choose from {', '.join(OBJECTIVE_KINDS)}")
    if o.kind == "quadratic":
        if not o.a or any(not (v >= 0 and math.isfinite(v)) for v in o.a) or max(o.a) <= 0:
            raise ConfigError("objective.a", "curvatures must be finite, nonnegative, not all zero")
        if len(o.b) != len(o.a):
            raise ConfigError("objective.b", f"needs {len(o.a)} values")
    elif o.kind == "geman_mcclure":
        if not o.c or any(not (v > 0 and math.isfinite(v)) for v in o.c):
            raise ConfigError("objective.c", "weights must be positive and finite")
    elif not o.L > 0:
        raise ConfigError("objective.L", "must be positive")
    if len(cfg.x0) != cfg.dim or not all(math.isfinite(v) for v in cfg.x0):
        raise ConfigError("objective.x0", f"needs {cfg.dim} finite values")

    n = cfg.noise
    if len(n.sigma) != cfg.dim:
        raise ConfigError("noise.sigma", f"needs 1 or {cfg.dim} values")
    if n.batch < 1:
        raise ConfigError("noise.batch", "must be >= 1")
    try:
        n.build()
    except ValueError as exc:
        raise ConfigError(f"noise.{n.kind}", str(exc)) from None

    g = cfg.grid
    checks = (
        ("optimizer.eta", g.eta, lambda v: 0 <= v < math.inf),
        ("clip.rho", g.rho, lambda v: v > 0),
        ("optimizer.beta1", g.beta1, lambda v: 0 <= v < 1),
        ("optimizer.beta2", g.beta2, lambda v: 0 < v <= 1),
        ("optimizer.lambda", g.lam, lambda v: 0 < v < math.inf),
        ("topology.M", g.M, lambda v: v >= 1),
        ("topology.K", g.K, lambda v: v >= 1),
        ("topology.R", g.R, lambda v: v >= 1),
    )
    for where, vals, ok in checks:
        if not vals:
            raise ConfigError(where, "empty grid")
        bad = [v for v in vals if not ok(v)]
        if bad:
            raise ConfigError(where, f"value {bad[0]!r} out of range")
    try:
        ClipMode(g.clip_mode)
    except ValueError:
        raise ConfigError("clip.mode", "choose coordinate, global or off") from None
    if g.clip_placement not in ("average", "each"):
        raise ConfigError("optimizer.clip_placement", "choose average or each")


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def _broadcast(vals, d, where):
    if len(vals) == 1:
        return vals * d
    if len(vals) != d:
        raise ConfigError(where, f"needs 1 or {d} values, got {len(vals)}")
    return vals


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text. Raises :class:`ConfigError` on bad input."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    for sec in ("experiment", "objective", "noise", "optimizer", "topology"):
        if not cp.has_section(sec):
            raise ConfigError(sec, "missing section")
    known = {"experiment", "objective", "noise", "optimizer", "clip", "topology"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")

    ex, ob, no, op, cl, to = (_section(cp, s) for s in
                              ("experiment", "objective", "noise", "optimizer", "clip", "topology"))

    def get(sec, secname, key, conv, default=None):
        if key not in sec:
            if default is None:
                raise ConfigError(f"{secname}.{key}", "missing")
            return default
        where = f"{secname}.{key}"
        if conv is float:
            vals = _floats(sec[key], where)
            if len(vals) != 1:
                raise ConfigError(where, "expected one number")
            return vals[0]
        if conv is int:
            vals = _ints(sec[key], where)
            if len(vals) != 1:
                raise ConfigError(where, "expected one integer")
            return vals[0]
        return conv(sec[key], where) if conv in (_floats, _ints) else sec[key].strip()

    if "seeds" in ex:
        seeds = _ints(ex["seeds"], "experiment.seeds") if ex["seeds"].strip() else ()
    elif "seed_count" in ex:
        count = get(ex, "experiment", "seed_count", int)
        base = get(ex, "experiment", "seed_base", int, 0)
        seeds = tuple(range(base, base + count))
    else:
        raise ConfigError("experiment.seeds", "give seeds or seed_count")

    kind = get(ob, "objective", "kind", str)
    if kind == "quadratic":
        if "a" in ob:
            a = _floats(ob["a"], "objective.a")
        else:
            d = get(ob, "objective", "d", int)
            a = tuple(np.linspace(get(ob, "objective", "mu", float), get(ob, "objective", "L", float), d).tolist())
        b = _broadcast(_floats(ob["b"], "objective.b"), len(a), "objective.b") if "b" in ob else (0.0,) * len(a)
        objective = ObjectiveSpec(kind, a=a, b=b)
    elif kind == "geman_mcclure":
        c = _floats(ob["c"], "objective.c") if "c" in ob else None
        if c is None:
            raise ConfigError("objective.c", "missing")
        if "d" in ob:
            c = _broadcast(c, get(ob, "objective", "d", int), "objective.c")
        objective = ObjectiveSpec(kind, c=c)
    elif kind == "counter_example":
        objective = ObjectiveSpec(kind, L=get(ob, "objective", "L", float, 1.0))
    else:
        raise ConfigError("objective.kind", f"choose from {', '.join(OBJECTIVE_KINDS)}")
    d = objective.dim
    x0 = _broadcast(_floats(ob.get("x0", "0"), "objective.x0"), d, "objective.x0")

    noise = NoiseSpec(
        kind=get(no, "noise", "kind", str),
        sigma=_broadcast(_floats(no.get("sigma", "0"), "noise.sigma"), d, "noise.sigma"),
        alpha=get(no, "noise", "alpha", float, 4.0),
        spike=get(no, "noise", "spike", float, 2.0),
        dof=get(no, "noise", "dof", float, 10.0),
        batch=get(no, "noise", "batch", int, 1),
    )
    grid = GridSpec(
        eta=get(op, "optimizer", "eta", _floats),
        beta1=get(op, "optimizer", "beta1", _floats, (0.9,)),
        beta2=get(op, "optimizer", "beta2", _floats, (0.999,)),
        lam=get(op, "optimizer", "lambda", _floats, (1.0,)),
        clip_placement=get(op, "optimizer", "clip_placement", str, "average"),
        rho=get(cl, "clip", "rho", _floats, (math.inf,)),
        clip_mode=get(cl, "clip", "mode", str, "coordinate"),
        M=get(to, "topology", "M", _ints),
        K=get(to, "topology", "K", _ints),
        R=get(to, "topology", "R", _ints),
    )
    return ExperimentConfig(
        name=get(ex, "experiment", "name", str, "experiment"),
        objective=objective, noise=noise, grid=grid, x0=x0, seeds=seeds,
        families=_words(ex.get("families", "LocalAdam")),
        output_dir=get(ex, "experiment", "output_dir", str, "out"),
        metric=get(ex, "experiment", "metric", str, "f_gap"),
        quantile=get(ex, "experiment", "quantile", float, 0.9),
        tuning=get(ex, "experiment", "tuning", str, "median"),
        jobs=get(ex, "experiment", "jobs", int, 1),
        threads=get(ex, "experiment", "threads", int, 0),
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    o, n, g = cfg.objective, cfg.noise, cfg.grid
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {
        "name": cfg.name, "output_dir": cfg.output_dir, "seeds": _fmt(cfg.seeds),
        "families": ", ".join(cfg.families), "metric": cfg.metric,
        "quantile": repr(cfg.quantile), "tuning": cfg.tuning,
        "jobs": str(cfg.jobs), "threads": str(cfg.threads),
    }
    obj = {"kind": o.kind}
    if o.kind == "quadratic":
        obj.update(a=_fmt(o.a), b=_fmt(o.b))
    elif o.kind == "geman_mcclure":
        obj["c"] = _fmt(o.c)
    else:
        obj["L"] = repr(o.L)
    obj["x0"] = _fmt(cfg.x0)
    cp["objective"] = obj
    cp["noise"] = {"kind": n.kind, "sigma": _fmt(n.sigma), "alpha": repr(n.alpha),
                   "spike": repr(n.spike), "dof": repr(n.dof), "batch": str(n.batch)}
    cp["optimizer"] = {"eta": _fmt(g.eta), "beta1": _fmt(g.beta1), "beta2": _fmt(g.beta2),
                       "lambda": _fmt(g.lam), "clip_placement": g.clip_placement}
    cp["clip"] = {"mode": g.clip_mode, "rho": _fmt(g.rho)}
    cp["topology"] = {"M": _fmt(g.M), "K": _fmt(g.K), "R": _fmt(g.R)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
