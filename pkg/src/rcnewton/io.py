"""Problem configuration parsing and CSV/JSON emission.

A solve configuration is a JSON object::

    {
      "schema_version": 1,
      "plant": {"A": [[...]], "B": [[...]], "Q": [[...]], "R": [[...]],
                "Sigma1": [[...]], "Sigma2": [[...]], "C": [[...]]},
      "constraint": {"kind": "sparsity", "support": [[0, 0], [1, 1]]},
      "K0": [[...]],
      "method": "rcn_riemannian",
      "settings": {"grad_tol": 1e-10, "max_iters": 500},
      "seed": 0
    }

``plant`` may instead be ``{"random": {"n": 6, "m": 3, "index": 0,
"A_target_radius": 0.9}}``, drawn from the ensemble generator with the
config ``seed``. ``Sigma2`` and ``C`` are optional. Constraint kinds are
``unconstrained``, ``sparsity`` (0-based ``support`` pairs) and
``output_feedback`` (``C``, defaulting to the plant's ``C``). Output-feedback
problems may give ``L0`` instead of ``K0``; the default start is zero.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .constraints import Constraint
from .errors import ContractError, RCNewtonError
from .kernels import Plant
from .optimizer import IterationTrace, Method, RunSettings

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ProblemConfig",
    "parse_config",
    "load_json",
    "format_real",
    "trace_csv",
    "trace_summary",
    "rows_csv",
    "write_text",
    "write_json",
]

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("t", "cost", "grad_norm_riem", "certificate", "stepsize", "hessian_min_eig")


class ConfigError(ContractError):
    """A configuration field is missing or invalid; ``field`` names it."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _matrix(value, name: str, shape: Optional[tuple] = None) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(name, "must be a nonempty array of row arrays")
    widths = {len(r) for r in value}
    if len(widths) != 1 or 0 in widths:
        raise ConfigError(name, "rows must be nonempty and of equal length")
    for r in value:
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(name, "entries must be numbers")
    M = np.array(value, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ConfigError(name, "entries must be finite")
    if shape is not None and M.shape != shape:
        raise ConfigError(name, f"expected shape {shape[0]}x{shape[1]}, got {M.shape[0]}x{M.shape[1]}")
    return M


def _int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}")
    return value


def _parse_plant(data, seed: int) -> Plant:
    if not isinstance(data, dict):
        raise ConfigError("plant", "must be an object")
    if "random" in data:
        from .bench import EnsembleSpec, random_plant

        spec = data["random"]
        if not isinstance(spec, dict):
            raise ConfigError("plant.random", "must be an object")
        extra = set(spec) - {"n", "m", "index", "A_target_radius"}
        if extra:
            raise ConfigError("plant.random", f"unknown field(s) {', '.join(sorted(extra))}")
        n = _int(spec.get("n", 6), "plant.random.n", 1)
        m = _int(spec.get("m", 3), "plant.random.m", 1)
        index = _int(spec.get("index", 0), "plant.random.index")
        radius = spec.get("A_target_radius", 0.9)
        try:
            es = EnsembleSpec(n=n, m=m, d=1, count=1, seed=seed, A_target_radius=float(radius))
        except (ContractError, TypeError, ValueError) as exc:
            raise ConfigError("plant.random", str(exc)) from exc
        return random_plant(es, index)

    for key in ("A", "B", "Q", "R", "Sigma1"):
        if key not in data:
            raise ConfigError(f"plant.{key}", "is required")
    extra = set(data) - {"A", "B", "Q", "R", "Sigma1", "Sigma2", "C"}
    if extra:
        raise ConfigError("plant", f"unknown field(s) {', '.join(sorted(extra))}")
    A = _matrix(data["A"], "plant.A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError("plant.A", f"must be square, got {A.shape[0]}x{A.shape[1]}")
    B = _matrix(data["B"], "plant.B")
    if B.shape[0] != n:
        raise ConfigError("plant.B", f"must have {n} rows, got {B.shape[0]}")
    m = B.shape[1]
    mats = {
        "A": A,
        "B": B,
        "Q": _matrix(data["Q"], "plant.Q", (n, n)),
        "R": _matrix(data["R"], "plant.R", (m, m)),
        "Sigma1": _matrix(data["Sigma1"], "plant.Sigma1", (n, n)),
    }
    if data.get("Sigma2") is not None:
        mats["Sigma2"] = _matrix(data["Sigma2"], "plant.Sigma2", (m, m))
    if data.get("C") is not None:
        C = _matrix(data["C"], "plant.C")
        if C.shape[1] != n:
            raise ConfigError("plant.C", f"must have {n} columns, got {C.shape[1]}")
        mats["C"] = C
    try:
        return Plant(**mats)
    except RCNewtonError as exc:
        raise ConfigError("plant", str(exc)) from exc


def _parse_constraint(data, plant: Plant) -> Constraint:
    if data is None:
        return Constraint.unconstrained((plant.m, plant.n))
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("constraint", "must be an object with a 'kind'")
    kind = data["kind"]
    try:
        if kind == "unconstrained":
            return Constraint.unconstrained((plant.m, plant.n))
        if kind == "sparsity":
            support = data.get("support")
            if not isinstance(support, list) or not all(
                isinstance(p, list) and len(p) == 2 and all(isinstance(i, int) and not isinstance(i, bool) for i in p)
                for p in support
            ):
                raise ConfigError("constraint.support", "must be a list of [row, col] integer pairs")
            return Constraint.sparsity(support, (plant.m, plant.n))
        if kind == "output_feedback":
            if data.get("C") is not None:
                C = _matrix(data["C"], "constraint.C")
            elif plant.C is not None:
                C = plant.C
            else:
                raise ConfigError("constraint.C", "is required when the plant has no C")
            if C.shape[1] != plant.n:
                raise ConfigError("constraint.C", f"must have {plant.n} columns, got {C.shape[1]}")
            return Constraint.output_feedback(C, plant.m)
    except ConfigError:
        raise
    except RCNewtonError as exc:
        raise ConfigError("constraint", str(exc)) from exc
    raise ConfigError("constraint.kind", f"unknown kind {kind!r}")


def _parse_settings(data, method) -> RunSettings:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("settings", "must be an object")
    allowed = {f.name for f in fields(RunSettings)} - {"method"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError("settings", f"unknown field(s) {', '.join(sorted(extra))}")
    try:
        return RunSettings(method=method, **data)
    except (ValueError, TypeError) as exc:
        raise ConfigError("settings", str(exc)) from exc


@dataclass(frozen=True)
class ProblemConfig:
    plant: Plant
    constraint: Constraint
    K0: np.ndarray
    settings: RunSettings
    seed: int = 0
    source: Optional[dict] = None


def parse_config(data: dict, seed: Optional[int] = None, method: Optional[str] = None,
                 max_iters: Optional[int] = None, tol: Optional[float] = None) -> ProblemConfig:
    """Validate a configuration object; keyword overrides mirror the CLI flags."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    extra = set(data) - {"schema_version", "plant", "constraint", "K0", "L0", "method", "settings", "seed"}
    if extra:
        raise ConfigError("<root>", f"unknown field(s) {', '.join(sorted(extra))}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    cfg_seed = _int(data.get("seed", 0), "seed")
    if seed is not None:
        cfg_seed = _int(seed, "--seed")
    if "plant" not in data:
        raise ConfigError("plant", "is required")
    plant = _parse_plant(data["plant"], cfg_seed)
    constraint = _parse_constraint(data.get("constraint"), plant)

    if "K0" in data and "L0" in data:
        raise ConfigError("K0", "give either K0 or L0, not both")
    if "L0" in data:
        if constraint.kind != "output_feedback":
            raise ConfigError("L0", "only applies to output_feedback constraints")
        L0 = _matrix(data["L0"], "L0", constraint.coord_shape)
        K0 = constraint.embed(L0)
    elif "K0" in data:
        K0 = _matrix(data["K0"], "K0", (plant.m, plant.n))
    else:
        K0 = np.zeros((plant.m, plant.n))

    name = method if method is not None else data.get("method", Method.RCN_RIEMANNIAN.value)
    try:
        method_enum = Method(name)
    except ValueError:
        raise ConfigError("method", f"unknown method {name!r}; choose from {', '.join(m.value for m in Method)}")
    settings = _parse_settings(data.get("settings"), method_enum)
    overrides = {}
    if max_iters is not None:
        overrides["max_iters"] = max_iters
    if tol is not None:
        overrides["grad_tol"] = tol
    if overrides:
        try:
            settings = settings.replace(**overrides)
        except ValueError as exc:
            raise ConfigError("settings", str(exc)) from exc
    return ProblemConfig(plant, constraint, K0, settings, cfg_seed, data)


def format_real(x) -> str:
    """17 significant digits; ``nan``/``inf``/``-inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def trace_csv(trace: IterationTrace, shape: tuple) -> str:
    m, n = shape
    header = list(TRACE_COLUMNS) + [f"K_{i}_{j}" for i in range(m) for j in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in trace.records:
        w.writerow([r.t] + [format_real(v) for v in (r.cost, r.grad_norm, r.certificate, r.stepsize,
                                                      r.hessian_min_eig)]
                   + [format_real(v) for v in np.asarray(r.K).ravel()])
    return buf.getvalue()


def _json_real(x):
    x = float(x)
    return x if math.isfinite(x) else None


def trace_summary(trace: IterationTrace, config: ProblemConfig) -> dict:
    final = trace.final
    return {
        "schema_version": SCHEMA_VERSION,
        "method": trace.method.value,
        "status": trace.status.value,
        "message": trace.message,
        "iterations": trace.iterations,
        "final_cost": _json_real(final.cost) if final else None,
        "final_grad_norm": _json_real(final.grad_norm) if final else None,
        "final_K": np.asarray(final.K).tolist() if final else None,
        "constraint": config.constraint.to_dict(),
        "seed": config.seed,
    }


def rows_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        out = []
        for v in row:
            if isinstance(v, (bool, np.bool_)):
                out.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                out.append(format_real(v))
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_json(path: Path, obj: dict) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
