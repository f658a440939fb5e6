"""Input parsing, pipeline orchestration and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .baseline import first_stage, monotonicity_shares
from .bootstrap import bootstrap_se
from .estimators import Estimate, EstimatorConfig, EstimatorKind, run_estimator
from .least_squares import LsSolution
from .model import TYPE_NAMES, DesignParams, GroupedData, PMode, TypeVector, check_p

SCHEMA_VERSION = "1.0"
BUNDLED_DATASET = "sibling_sex_mix.json"
MAX_LISTED_TIES = 20


class InputError(ValueError):
    """Malformed or invalid grouped-data input."""


def _as_count(value, where: str) -> int:
    if isinstance(value, bool):
        raise InputError(f"{where}: expected an integer count, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise InputError(f"{where}: expected an integer count, got {value!r}")
    if value < 0:
        raise InputError(f"{where}: counts must be nonnegative, got {value}")
    return value


def _parse_json(text: str) -> GroupedData:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict) or "g" not in doc:
        raise InputError('JSON input must be an object with a "g" array')
    g = doc["g"]
    if not isinstance(g, list) or len(g) != 4:
        raise InputError(f'"g" must be an array of 4 counts, got {g!r}')
    return GroupedData(*(_as_count(v, f"g{j + 1}") for j, v in enumerate(g)))


_CELL = {(1, 1): 0, (1, 0): 1, (0, 1): 2, (0, 0): 3}


def _parse_csv(text: str) -> GroupedData:
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip().lower() for h in (reader.fieldnames or [])]
    if sorted(header) != ["count", "d", "z"]:
        raise InputError(f"CSV header must be z,d,count; got {reader.fieldnames}")
    reader.fieldnames = header
    cells: dict[int, int] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            z, d = int(row["z"]), int(row["d"])
            count = int(row["count"])
        except (TypeError, ValueError):
            raise InputError(f"line {lineno}: z, d and count must be integers") from None
        if (z, d) not in _CELL:
            raise InputError(f"line {lineno}: z and d must be 0 or 1, got ({z},{d})")
        j = _CELL[(z, d)]
        if j in cells:
            raise InputError(f"line {lineno}: duplicate row for z={z}, d={d}")
        cells[j] = _as_count(count, f"line {lineno}")
    missing = [zd for zd, j in _CELL.items() if j not in cells]
    if missing:
        raise InputError(f"missing (z,d) rows: {missing}")
    return GroupedData(*(cells[j] for j in range(4)))


def parse_input(data: bytes | str) -> GroupedData:
    """Parse a JSON ``{"g": [g1, g2, g3, g4]}`` document or a ``z,d,count`` CSV."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError:
            raise InputError("input is not valid UTF-8") from None
    text = data.strip()
    if not text:
        raise InputError("input is empty")
    g = _parse_json(text) if text.startswith("{") else _parse_csv(text)
    if g.n == 0:
        raise InputError("all four counts are zero")
    return g


def load_input(path: str | Path) -> GroupedData:
    return parse_input(Path(path).read_bytes())


def bundled_dataset_text() -> str:
    return resources.files("defiers").joinpath("data", BUNDLED_DATASET).read_text()


def bundled_dataset() -> GroupedData:
    """Grouped counts for the sibling sex-mix sample (third child vs same-sex pair)."""
    return parse_input(bundled_dataset_text())


def format_grouped(g: GroupedData) -> str:
    """One JSON document in the format ``parse_input`` reads."""
    return json.dumps({"g": list(g)})


def parse_p_mode(text: str) -> DesignParams:
    """``fixed=<v>``, ``empirical`` or ``estimate``."""
    text = text.strip().lower()
    if text.startswith("fixed="):
        try:
            value = float(text.split("=", 1)[1])
        except ValueError:
            raise ValueError(f"bad fixed p in {text!r}") from None
        return DesignParams(p=check_p(value), mode=PMode.FIXED)
    if text in ("empirical", "estimate"):
        return DesignParams(mode=PMode(text))
    raise ValueError(f"p mode must be fixed=<value>, empirical or estimate; got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    input_path: str | None = None
    counts: tuple[int, int, int, int] | None = None
    estimator: str = "ls"
    p_mode: str = "empirical"
    bootstrap: int = 0
    seed: int = 0
    restarts: int | None = None
    output: str | None = None
    format: str = "json"

    def __post_init__(self):
        if (self.input_path is None) == (self.counts is None):
            raise ValueError("give exactly one of an input path or inline counts")
        if self.estimator not in ("ls", "mle", "both"):
            raise ValueError(f"estimator must be ls, mle or both; got {self.estimator!r}")
        parse_p_mode(self.p_mode)
        if self.bootstrap < 0:
            raise ValueError(f"bootstrap replications must be >= 0, got {self.bootstrap}")
        if self.bootstrap == 1:
            raise ValueError("bootstrap needs at least 2 replications (or 0 to disable)")
        if self.format not in ("json", "text"):
            raise ValueError(f"format must be json or text; got {self.format!r}")

    def grouped(self) -> GroupedData:
        if self.counts is not None:
            g = GroupedData.of(self.counts)
            if g.n == 0:
                raise InputError("all four counts are zero")
            return g
        return load_input(self.input_path)

    def estimator_configs(self) -> list[EstimatorConfig]:
        kinds = ["ls", "mle"] if self.estimator == "both" else [self.estimator]
        design = parse_p_mode(self.p_mode)
        return [EstimatorConfig(EstimatorKind(k), design, self.restarts) for k in kinds]


def _named(values, digits: int | None = None) -> dict:
    if digits is None:
        return {name: v for name, v in zip(TYPE_NAMES, values)}
    return {name: round(float(v), digits) for name, v in zip(TYPE_NAMES, values)}


def _shares(t: TypeVector) -> dict:
    shares = t.shares()
    assert math.isclose(sum(shares), 1.0, abs_tol=1e-9)
    return _named(shares, 4)


def _baseline_block(g: GroupedData) -> dict:
    if g.n_intervention == 0 or g.n_control == 0:
        return {"available": False, "reason": "one arm is empty"}
    b = monotonicity_shares(g)
    return {
        "available": True,
        "first_stage": first_stage(g),
        "p_empirical": b.p_empirical,
        "monotonicity_violated": b.monotonicity_violated,
        "shares": _named(b.shares(), 4),
    }


def _estimator_block(cfg: EstimatorConfig, est: Estimate) -> dict:
    res = est.result
    block = {
        "estimator": cfg.kind.value,
        "p_mode": cfg.design.mode.value,
        "p_used": est.p_used,
        "t_hat": _named(tuple(est.t_hat)),
        "shares": _shares(est.t_hat),
    }
    if isinstance(res, LsSolution):
        block["objective"] = res.objective
        block["n_hat"] = res.n_hat.tolist()
        ties = [m.type_vector() for m in res.ties]
        block["ties"] = {
            "count": len(ties),
            "t_hat": [list(t) for t in ties[:MAX_LISTED_TIES]],
        }
    else:
        block["log_likelihood"] = res.log_likelihood
        block["method"] = res.method.value
        block["ties"] = {
            "count": len(res.ties),
            "t_hat": [list(t) for t in res.ties[:MAX_LISTED_TIES]],
        }
    block["diagnostics"] = dict(res.diagnostics)
    return block


@dataclass
class EstimateReport:
    input: dict
    baseline: dict
    estimators: list[dict]
    seed: int
    bootstrap: list[dict] | None = None
    schema_version: str = SCHEMA_VERSION
    software: dict = field(default_factory=lambda: {"name": "defiers", "version": __version__})

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "software": self.software,
            "seed": self.seed,
            "input": self.input,
            "baseline": self.baseline,
            "estimators": self.estimators,
        }
        if self.bootstrap is not None:
            out["bootstrap"] = self.bootstrap
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = []
        g = self.input["g"]
        lines.append(f"defiers {self.software['version']}  seed={self.seed}")
        lines.append(f"data g = {g}  n = {self.input['n']}")
        b = self.baseline
        if b.get("available"):
            lines.append("")
            lines.append("baseline (no defiers)")
            lines.append(f"  first stage      {b['first_stage']:.4f}")
            lines.append(f"  empirical p      {b['p_empirical']:.6f}")
            for name, v in b["shares"].items():
                lines.append(f"  {name:<16} {v:.4f}")
            if b["monotonicity_violated"]:
                lines.append("  warning: negative first stage, monotonicity untenable")
        for block in self.estimators:
            lines.append("")
            lines.append(f"{block['estimator']} estimator, p {block['p_mode']} = {block['p_used']:.6f}")
            if "objective" in block:
                lines.append(f"  objective        {block['objective']:.6g}")
            else:
                lines.append(f"  log-likelihood   {block['log_likelihood']:.6f} ({block['method']})")
            for name in TYPE_NAMES:
                lines.append(
                    f"  {name:<16} {block['t_hat'][name]:>10d}  {block['shares'][name]:.4f}"
                )
            if block["ties"]["count"] > 1:
                lines.append(f"  ties             {block['ties']['count']}")
        for bs in self.bootstrap or []:
            lines.append("")
            lines.append(
                f"bootstrap {bs['estimator']}: {bs['replications']} replications, "
                f"{bs['failures']} excluded"
            )
            for name, se, ses in zip(TYPE_NAMES, bs["se_t"], bs["se_shares"]):
                lines.append(f"  se {name:<13} {se:>10.1f}  {ses:.4f}")
            lines.append(f"  se p             {bs['se_p']:.6f}")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str = "json") -> str:
        return self.to_json() if fmt == "json" else self.to_text()


def run_pipeline(cfg: RunConfig) -> EstimateReport:
    """Baseline, the selected estimators and, if requested, the bootstrap."""
    g = cfg.grouped()
    estimators = []
    boot = [] if cfg.bootstrap else None
    for ecfg in cfg.estimator_configs():
        try:
            est = run_estimator(ecfg, g, seed=cfg.seed)
        except ValueError as exc:
            raise ValueError(f"{ecfg.name} estimator failed: {exc}") from exc
        estimators.append(_estimator_block(ecfg, est))
        if cfg.bootstrap:
            rep = bootstrap_se(g, ecfg, replications=cfg.bootstrap, seed=cfg.seed)
            boot.append(rep.to_dict())
    return EstimateReport(
        input={"g": list(g), "n": g.n, "source": cfg.input_path or "inline"},
        baseline=_baseline_block(g),
        estimators=estimators,
        seed=cfg.seed,
        bootstrap=boot,
    )
