"""Run reports, deterministic serialization and the output manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .mc import MCEstimate, sigma_distance


def to_jsonable(x):
    """Plain-JSON form: complex -> [re, im], numpy scalars/arrays unwrapped."""
    if isinstance(x, MCEstimate):
        return x.to_json()
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_num(x.real), _num(x.imag)]
    if isinstance(x, (float, np.floating)):
        return _num(float(x))
    return x


def _num(v: float):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format: sha1(b"blob <len>\\0" + data)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class Check:
    check_id: str
    params: dict
    passed: bool
    lhs: object = None
    rhs: object = None
    combined_se: object = None
    sigma_distance: float | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {"check_id": self.check_id, "params": self.params, "lhs": self.lhs, "rhs": self.rhs,
             "combined_se": self.combined_se, "sigma_distance": self.sigma_distance,
             "pass": bool(self.passed)}
        if self.details:
            d["details"] = self.details
        return to_jsonable(d)


def mc_check(check_id: str, params: dict, lhs, rhs, nsigma: float = 3.0, **details) -> Check:
    """Pass when lhs and rhs agree within nsigma combined SEs (componentwise)."""
    dist, se = sigma_distance(lhs, rhs)
    return Check(check_id, params, dist <= nsigma, lhs, rhs, se, dist, details)


def value_check(check_id: str, params: dict, value, bound, ok: bool, **details) -> Check:
    return Check(check_id, params, ok, value, bound, None, None, details)


@dataclass
class RunReport:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    data: object = None
    table: list | None = None          # rows for CSV output
    columns: tuple | None = None

    def add(self, check: Check):
        if any(c.check_id == check.check_id for c in self.checks):
            raise ValueError(f"duplicate check id {check.check_id}")
        self.checks.append(check)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {"checks": len(self.checks), "passed": sum(c.passed for c in self.checks),
                "pass": self.passed}

    def report_json(self) -> dict:
        return {"command": self.command, "version": __version__,
                "checks": [c.to_json() for c in self.checks], "summary": self.summary()}

    def data_bytes(self, fmt: str) -> bytes:
        if fmt == "json":
            return dumps({"command": self.command, "data": self.data}).encode()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.table is not None:
            w.writerow(self.columns)
            for row in self.table:
                w.writerow([_csv_cell(v) for v in row])
        else:
            w.writerow(("check_id", "pass", "lhs", "rhs", "combined_se", "sigma_distance", "params"))
            for c in self.checks:
                j = c.to_json()
                w.writerow([j["check_id"], j["pass"], _csv_cell(j["lhs"]), _csv_cell(j["rhs"]),
                            _csv_cell(j["combined_se"]), _csv_cell(j["sigma_distance"]),
                            json.dumps(j["params"], sort_keys=True)])
        return buf.getvalue().encode()


def _csv_cell(v):
    v = to_jsonable(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else v
