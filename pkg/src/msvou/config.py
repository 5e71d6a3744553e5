"""Text formats: ``key = value`` parameter/config files and quote CSVs."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .ou_wishart import OUW2Params

SCALAR_KEYS = ("a1", "a2", "rho1", "rho2", "rho12", "rho21", "gamma1", "gamma2", "lam", "n",
               "r_dom", "r_for1", "r_for2", "spot1", "spot2")
MATRIX_KEYS = {"Theta": ("Theta11", "Theta12", "Theta22"),
               "Sigma0": ("Sigma011", "Sigma012", "Sigma022")}
OPTIONAL_KEYS = ("mu1", "mu2")
REQUIRED_KEYS = ("a1", "a2", "rho1", "rho2", "lam") + MATRIX_KEYS["Theta"] + MATRIX_KEYS["Sigma0"]
PARAM_KEYS = SCALAR_KEYS + MATRIX_KEYS["Theta"] + MATRIX_KEYS["Sigma0"] + OPTIONAL_KEYS


def fmt(x: float) -> str:
    """Locale-independent number with 15 significant digits."""
    return format(float(x), ".15g")


def read_kv(path) -> dict[str, tuple[str, int]]:
    """Parse a ``key = value`` file into {key: (raw value, line number)}.

    ``#`` starts a comment; blank lines are ignored.
    """
    out: dict[str, tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
            key, value = (part.strip() for part in text.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r} (first on line {out[key][1]})")
            out[key] = (value, lineno)
    return out


def parse_float(path, key: str, entry: tuple[str, int]) -> float:
    raw, lineno = entry
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {key} is not a number: {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{path}:{lineno}: {key} must be finite")
    return v


def params_from_mapping(values: dict[str, float]) -> OUW2Params:
    kw = {k: values[k] for k in SCALAR_KEYS + OPTIONAL_KEYS if k in values}
    for name, (k11, k12, k22) in MATRIX_KEYS.items():
        kw[name] = np.array([[values[k11], values[k12]], [values[k12], values[k22]]])
    return OUW2Params(**kw)


def params_to_mapping(p: OUW2Params) -> dict[str, float]:
    out = {k: float(getattr(p, k)) for k in SCALAR_KEYS}
    for name, (k11, k12, k22) in MATRIX_KEYS.items():
        M = getattr(p, name)
        out[k11], out[k12], out[k22] = M[0, 0], M[0, 1], M[1, 1]
    for k in OPTIONAL_KEYS:
        if getattr(p, k) is not None:
            out[k] = float(getattr(p, k))
    return out


def load_params(path) -> OUW2Params:
    """Read and validate a parameter file.

    Drifts are derived from the martingale condition unless both ``mu1`` and
    ``mu2`` are given.
    """
    entries = read_kv(path)
    unknown = [k for k in entries if k not in PARAM_KEYS]
    if unknown:
        k = unknown[0]
        raise ConfigError(f"{path}:{entries[k][1]}: unknown key {k!r}")
    missing = [k for k in REQUIRED_KEYS if k not in entries]
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {', '.join(missing)}")
    if ("mu1" in entries) != ("mu2" in entries):
        raise ConfigError(f"{path}: give both mu1 and mu2 or neither")
    values = {k: parse_float(path, k, e) for k, e in entries.items()}
    return params_from_mapping(values)


def save_params(p: OUW2Params, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in params_to_mapping(p).items():
            fh.write(f"{k} = {fmt(v)}\n")


# Quotes -----------------------------------------------------------------

QUOTE_HEADER = ("pair", "maturity_years", "strike", "type", "bid", "ask", "spot", "r_dom", "r_for")


@dataclass(frozen=True)
class OptionQuote:
    pair: str
    T: float
    K: float
    bid: float
    ask: float
    spot: float
    r_dom: float
    r_for: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("maturity must be positive")
        if not self.K > 0:
            raise ValueError("strike must be positive")
        if not self.spot > 0:
            raise ValueError("spot must be positive")
        if not self.bid <= self.ask:
            raise ValueError("bid exceeds ask")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


def read_quotes(path) -> list[OptionQuote]:
    quotes = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = None
        for lineno, row in enumerate(rows, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            row = [c.strip() for c in row]
            if header is None:
                if tuple(row) != QUOTE_HEADER:
                    raise ConfigError(f"{path}:{lineno}: expected header {','.join(QUOTE_HEADER)}")
                header = row
                continue
            if len(row) != len(QUOTE_HEADER):
                raise ConfigError(f"{path}:{lineno}: expected {len(QUOTE_HEADER)} fields, got {len(row)}")
            rec = dict(zip(QUOTE_HEADER, row))
            if rec["type"].lower() != "call":
                raise ConfigError(f"{path}:{lineno}: unsupported option type {rec['type']!r}")
            try:
                nums = {k: float(rec[k]) for k in QUOTE_HEADER if k not in ("pair", "type")}
                quotes.append(OptionQuote(rec["pair"], nums["maturity_years"], nums["strike"],
                                          nums["bid"], nums["ask"], nums["spot"],
                                          nums["r_dom"], nums["r_for"]))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if header is None:
        raise ConfigError(f"{path}: empty quote file")
    return quotes


def write_quotes(quotes, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(QUOTE_HEADER)
        for q in quotes:
            w.writerow([q.pair, fmt(q.T), fmt(q.K), "call", repr(q.bid), repr(q.ask),
                        fmt(q.spot), fmt(q.r_dom), fmt(q.r_for)])


# Calibration config -----------------------------------------------------

@dataclass
class CalibFile:
    variant: str
    init: dict[str, float]
    lb: dict[str, float]
    ub: dict[str, float]
    fix: dict[str, bool]
    max_evals: int | None
    tol_obj: float | None
    seed: int


_FLAG = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def read_calib_config(path) -> CalibFile:
    entries = read_kv(path)
    init, lb, ub, fix = {}, {}, {}, {}
    variant, max_evals, tol_obj, seed = "A", None, None, 0
    for key, (raw, lineno) in entries.items():
        head, _, name = key.partition(".")
        if key == "variant":
            variant = raw.upper()
            if variant not in ("A", "B", "C", "D"):
                raise ConfigError(f"{path}:{lineno}: variant must be A, B, C or D")
        elif key in ("max_evals", "seed"):
            try:
                v = int(raw)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: {key} must be an integer") from None
            if key == "max_evals":
                max_evals = v
            else:
                seed = v
        elif key == "tol_obj":
            tol_obj = parse_float(path, key, (raw, lineno))
        elif head in ("init", "lb", "ub") and name:
            if name not in PARAM_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown parameter {name!r}")
            {"init": init, "lb": lb, "ub": ub}[head][name] = parse_float(path, key, (raw, lineno))
        elif head == "fix" and name:
            if raw.lower() not in _FLAG:
                raise ConfigError(f"{path}:{lineno}: {key} must be a boolean")
            fix[name] = _FLAG[raw.lower()]
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return CalibFile(variant, init, lb, ub, fix, max_evals, tol_obj, seed)
