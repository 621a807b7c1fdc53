"""Run configuration: one JSON document per experiment.

Every validation error is a :class:`ConfigError` whose message starts with
the dotted path of the offending field (``prices.p: ...``), so a bad
config can be fixed without reading code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .market import AssumptionViolation, MarketPrices
from .storage import StorageType
from .wind_process import WindProcessSpec, marginal_from_dict, read_trace_csv

__all__ = ["ConfigError", "McConfig", "RunConfig", "load_config", "parse_config"]

PROCESS_KINDS = ("iid", "nonstationary", "empirical")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field."""


@dataclass(frozen=True)
class McConfig:
    paths: int = 10_000
    seed: int = 0
    tol: float = 1e-4

    def to_dict(self) -> dict:
        return {"paths": self.paths, "seed": self.seed, "tol": self.tol}


@dataclass(frozen=True)
class RunConfig:
    horizon: int
    process: WindProcessSpec
    prices: MarketPrices
    storage: StorageType = StorageType()
    mc: McConfig = McConfig()
    options: dict = field(default_factory=dict)

    def option(self, name: str, default: Any = None) -> Any:
        return self.options.get(name, default)

    def with_mc(self, paths: int | None = None, seed: int | None = None) -> "RunConfig":
        mc = McConfig(
            self.mc.paths if paths is None else _count("--paths", paths, 2),
            self.mc.seed if seed is None else _seed("--seed", seed),
            self.mc.tol,
        )
        return RunConfig(self.horizon, self.process, self.prices, self.storage, mc, self.options)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "process": self.process.to_dict(),
            "prices": self.prices.to_dict(),
            "storage": self.storage.to_dict(),
            "mc": self.mc.to_dict(),
            "options": dict(self.options),
        }


# ---------------------------------------------------------------------------
# field readers
# ---------------------------------------------------------------------------


def _section(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(f"{name}: missing required section")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be an object")
    return sec


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    return v


def _count(name: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def _seed(name: str, value: Any) -> int:
    return _count(name, value, 0)


def _reject_unknown(name: str, sec: dict, allowed: tuple[str, ...]) -> None:
    extra = sorted(set(sec) - set(allowed))
    if extra:
        prefix = f"{name}." if name else ""
        raise ConfigError(f"{prefix}{extra[0]}: unknown field (allowed: {', '.join(allowed)})")


def _marginal(name: str, d: Any):
    if not isinstance(d, dict):
        raise ConfigError(f"{name}: must be an object with a 'family' field")
    try:
        return marginal_from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"{name}.{exc.args[0]}: missing parameter") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _process(doc: dict, base_dir: Path) -> WindProcessSpec:
    sec = _section(doc, "process")
    kind = sec.get("kind")
    if kind not in PROCESS_KINDS:
        raise ConfigError(f"process.kind: must be one of {', '.join(PROCESS_KINDS)}, got {kind!r}")
    sources = [k for k in ("marginal", "marginals", "regimes", "trace_file") if k in sec]
    if len(sources) != 1:
        raise ConfigError(
            "process: give exactly one of marginal (iid), marginals or regimes (nonstationary), "
            f"trace_file (empirical); found {sources or 'none'}"
        )
    horizon = doc.get("horizon")
    if horizon is not None:
        horizon = _count("horizon", horizon, 1)

    if kind == "empirical":
        _reject_unknown("process", sec, ("kind", "trace_file"))
        if "trace_file" not in sec:
            raise ConfigError("process.trace_file: required for kind 'empirical'")
        path = Path(sec["trace_file"])
        if not path.is_absolute():
            path = base_dir / path
        try:
            traces = read_trace_csv(path)
        except OSError as exc:
            raise ConfigError(f"process.trace_file: cannot read {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(f"process.trace_file: {path}: {exc}") from None
        if horizon is not None and traces.shape[1] != horizon:
            raise ConfigError(f"horizon: {horizon} does not match the {traces.shape[1]} trace columns")
        return WindProcessSpec.empirical(traces)

    if horizon is None:
        raise ConfigError("horizon: required for parametric processes")
    if kind == "iid":
        _reject_unknown("process", sec, ("kind", "marginal"))
        if "marginal" not in sec:
            raise ConfigError("process.marginal: required for kind 'iid'")
        return WindProcessSpec.iid(_marginal("process.marginal", sec["marginal"]), horizon)

    _reject_unknown("process", sec, ("kind", "marginals", "regimes"))
    if "marginals" in sec:
        ms = sec["marginals"]
        if not isinstance(ms, list) or len(ms) != horizon:
            raise ConfigError(f"process.marginals: need a list of {horizon} marginals")
        marginals = [_marginal(f"process.marginals[{k}]", m) for k, m in enumerate(ms)]
    elif "regimes" in sec:
        regimes = sec["regimes"]
        if not isinstance(regimes, list) or not regimes:
            raise ConfigError("process.regimes: need a nonempty list of {periods, marginal} objects")
        marginals = []
        for i, reg in enumerate(regimes):
            where = f"process.regimes[{i}]"
            if not isinstance(reg, dict):
                raise ConfigError(f"{where}: must be an object")
            n = _count(f"{where}.periods", reg.get("periods"), 1)
            marginals += [_marginal(f"{where}.marginal", reg.get("marginal"))] * n
        if len(marginals) != horizon:
            raise ConfigError(f"process.regimes: periods add up to {len(marginals)}, horizon is {horizon}")
    else:
        raise ConfigError("process.marginals: required for kind 'nonstationary'")
    return WindProcessSpec.nonstationary(marginals)


def _prices(doc: dict) -> MarketPrices:
    sec = _section(doc, "prices")
    _reject_unknown("prices", sec, ("p", "m_alpha", "m_beta"))
    vals = {}
    for name in ("p", "m_alpha", "m_beta"):
        if name not in sec:
            raise ConfigError(f"prices.{name}: missing")
        v = _number(f"prices.{name}", sec[name])
        if v < 0:
            raise ConfigError(f"prices.{name}: must be >= 0, got {v}")
        vals[name] = v
    prices = MarketPrices(**vals)
    try:
        prices.check()
        prices.gamma
    except AssumptionViolation as exc:
        raise ConfigError(f"prices: {exc}") from None
    return prices


def _storage(doc: dict) -> StorageType:
    sec = _section(doc, "storage", required=False)
    _reject_unknown("storage", sec, ("b", "r", "lambda", "eta_in", "eta_out"))
    b = _number("storage.b", sec.get("b", 0.0))
    r = _number("storage.r", sec.get("r", 0.0))
    for name, v in (("b", b), ("r", r)):
        if v < 0:
            raise ConfigError(f"storage.{name}: must be >= 0, got {v}")
    losses = {}
    for key, attr in (("lambda", "lam"), ("eta_in", "eta_in"), ("eta_out", "eta_out")):
        v = _number(f"storage.{key}", sec.get(key, 1))
        if not 0 < v <= 1:
            raise ConfigError(f"storage.{key}: must lie in (0, 1], got {v}")
        # keep exact integer ones so ideal storage stays ideal bit for bit
        losses[attr] = 1 if v == 1 else v
    return StorageType(b, r, **losses)


def _mc(doc: dict) -> McConfig:
    sec = _section(doc, "mc", required=False)
    _reject_unknown("mc", sec, ("paths", "seed", "tol"))
    d = McConfig()
    tol = _number("mc.tol", sec.get("tol", d.tol))
    if tol <= 0:
        raise ConfigError(f"mc.tol: must be > 0, got {tol}")
    return McConfig(
        paths=_count("mc.paths", sec.get("paths", d.paths), 2),
        seed=_seed("mc.seed", sec.get("seed", d.seed)),
        tol=tol,
    )


def parse_config(doc: Any, base_dir: str | Path = ".") -> RunConfig:
    """Validate a decoded JSON document and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    _reject_unknown("", doc, ("horizon", "process", "prices", "storage", "mc", "options"))
    process = _process(doc, Path(base_dir))
    options = _section(doc, "options", required=False)
    return RunConfig(
        horizon=process.horizon,
        process=process,
        prices=_prices(doc),
        storage=_storage(doc),
        mc=_mc(doc),
        options=dict(options),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON (line {exc.lineno}: {exc.msg})") from None
    return parse_config(doc, path.parent)
