"""Command-line front end.

    privleak bound       config.json [-o out.csv]
    privleak directions  config.json [-o out.csv]
    privleak optimize    config.json [-o out.csv]
    privleak simulate    config.json [-o out.csv]
    privleak zero-check  config.json [-o out.csv]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a trade-off certificate failed in ``optimize``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from .bound import bound, s_matrix
from .directions import ZeroDirection, fully_private_directions, most_private_direction, verify_zero_direction
from .lti import ShapeError, StepScenario, SystemModel
from .montecarlo import run_trials
from .numerics import TOL, NumericalError, cholesky
from .tradeoff import SteadyStateProgram, mu_for_budget, solve_nominal, tradeoff_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CERTIFICATE = 0, 2, 3, 4
SUBCOMMANDS = ("bound", "directions", "optimize", "simulate", "zero-check")
TOLERANCE_KEYS = ("rank", "zero")


class ParseError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    model: SystemModel
    scenario: StepScenario | None = None
    program: SteadyStateProgram | None = None
    epsilon_bar: float | None = None
    zero: ZeroDirection | None = None
    norm: float = 1.0
    trials: int | None = None
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)

    def tol(self, key: str) -> float:
        return self.tolerances.get(key, {"rank": TOL.rank, "zero": 1e-9}[key])


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not allowed")


class _Doc:
    """Parsed JSON plus enough of the source text to point at lines."""

    def __init__(self, text: str, data: dict):
        self.text = text
        self.data = data

    def where(self, key: str) -> str:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return f"{key!r} (line {self.text.count(chr(10), 0, m.start()) + 1})" if m else repr(key)

    def array(self, key: str, ndim: int, required: bool = True):
        if key not in self.data:
            if required:
                raise ValueError(f"missing required key {key!r}")
            return None
        try:
            a = np.array(self.data[key], dtype=float)
        except (TypeError, ValueError):
            raise ValueError(f"{self.where(key)} must be a (nested) array of numbers") from None
        if a.ndim == 0:
            a = a.reshape((1,) * ndim)
        if a.ndim != ndim:
            raise ShapeError(f"{self.where(key)} must be {ndim}-D, got shape {a.shape}")
        if a.size == 0:
            raise ShapeError(f"{self.where(key)} is empty")
        return a

    def number(self, key: str, kind=float, default=None):
        if key not in self.data:
            return default
        v = self.data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{self.where(key)} must be a number")
        if kind is int and v != int(v):
            raise ValueError(f"{self.where(key)} must be an integer")
        return kind(v)

    def clash(self, a: str, b: str, detail: str) -> ShapeError:
        return ShapeError(f"{self.where(a)} and {self.where(b)} are inconsistent: {detail}")


def _spd(doc: _Doc, key: str, M: np.ndarray) -> None:
    try:
        cholesky(M)
    except NumericalError as exc:
        raise ValueError(f"{doc.where(key)} is not symmetric positive definite ({exc})") from None


def _complex_vector(doc: _Doc, key: str) -> np.ndarray:
    v = doc.data.get(key)
    if v is None:
        raise ValueError(f"missing required key {key!r}")
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"{doc.where(key)} must be an array of numbers or [re, im] pairs") from None
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    if arr.ndim != 1:
        raise ShapeError(f"{doc.where(key)} must be a vector, got shape {arr.shape}")
    return arr.astype(complex)


def parse_config(path) -> AnalysisConfig:
    """Load and validate a JSON analysis description."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 at byte {exc.start}") from None
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"{path}: {exc.msg} at byte {offset} (line {exc.lineno}, column {exc.colno})") from None
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    doc = _Doc(text, data)

    A, B, C, S = (doc.array(k, 2) for k in ("A", "B", "C", "sigma_e"))
    n = A.shape[0]
    if A.shape[1] != n:
        raise ShapeError(f"{doc.where('A')} must be square, got {A.shape}")
    if B.shape[0] != n:
        raise doc.clash("A", "B", f"B has {B.shape[0]} rows, A is {n}x{n}")
    if C.shape[1] != n:
        raise doc.clash("A", "C", f"C has {C.shape[1]} columns, A is {n}x{n}")
    m, p = C.shape[0], B.shape[1]
    if S.shape != (m, m):
        raise doc.clash("C", "sigma_e", f"sigma_e must be {m}x{m}, got {S.shape}")
    _spd(doc, "sigma_e", S)
    model = SystemModel(A, B, C, S)

    cfg = AnalysisConfig(model)
    cfg.seed = doc.number("seed", int, 0)
    cfg.trials = doc.number("trials", int)
    if cfg.trials is not None and cfg.trials < 2:
        raise ValueError(f"{doc.where('trials')} must be at least 2")
    cfg.norm = doc.number("norm", float, 1.0)
    if not cfg.norm > 0:
        raise ValueError(f"{doc.where('norm')} must be positive")

    k_star, N = doc.number("k_star", int), doc.number("N", int)
    if (k_star is None) != (N is None):
        raise ValueError("'k_star' and 'N' must be given together")
    if k_star is not None:
        if k_star < 0 or N < k_star:
            raise ValueError(f"{doc.where('N')} must be >= {doc.where('k_star')} >= 0")
        u = doc.array("u", 1, required=False)
        if u is None:
            u = np.zeros(p)
        elif u.shape != (p,):
            raise doc.clash("B", "u", f"u must have {p} entries, got {u.size}")
        x0 = doc.array("x0", 1, required=False)
        if x0 is not None and x0.shape != (n,):
            raise doc.clash("A", "x0", f"x0 must have {n} entries, got {x0.size}")
        cfg.scenario = StepScenario(u, k_star, N, x0)

    if any(k in data for k in ("Q", "R", "C1", "r")):
        Q, R, C1 = doc.array("Q", 2), doc.array("R", 2), doc.array("C1", 2)
        r = doc.array("r", 1)
        if Q.shape != (n, n):
            raise doc.clash("A", "Q", f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (p, p):
            raise doc.clash("B", "R", f"R must be {p}x{p}, got {R.shape}")
        if C1.shape[1] != n:
            raise doc.clash("A", "C1", f"C1 must have {n} columns, got {C1.shape[1]}")
        if r.shape != (C1.shape[0],):
            raise doc.clash("C1", "r", f"r must have {C1.shape[0]} entries, got {r.size}")
        _spd(doc, "Q", Q)
        _spd(doc, "R", R)
        if C1.shape[0] >= p:
            raise ValueError(f"{doc.where('C1')} must have fewer rows (q={C1.shape[0]}) than inputs (p={p})")
        mu = doc.number("mu", float, 0.0)
        if mu < 0:
            raise ValueError(f"{doc.where('mu')} must be non-negative")
        cfg.program = SteadyStateProgram(Q, R, C1, r, mu)
        cfg.epsilon_bar = doc.number("epsilon_bar", float)
        if cfg.epsilon_bar is not None and "mu" in data:
            raise ValueError(f"give either {doc.where('mu')} or {doc.where('epsilon_bar')}, not both")

    if "z0" in data:
        z = data["z0"]
        if isinstance(z, list) and len(z) == 2:
            z0 = complex(float(z[0]), float(z[1]))
        elif isinstance(z, (int, float)) and not isinstance(z, bool):
            z0 = complex(z)
        else:
            raise ValueError(f"{doc.where('z0')} must be a number or an [re, im] pair")
        x_zero, u_zero = _complex_vector(doc, "x_zero"), _complex_vector(doc, "u_zero")
        if x_zero.shape != (n,):
            raise doc.clash("A", "x_zero", f"x_zero must have {n} entries")
        if u_zero.shape != (p,):
            raise doc.clash("B", "u_zero", f"u_zero must have {p} entries")
        cfg.zero = ZeroDirection(z0, x_zero, u_zero)

    tol = data.get("tolerances", {})
    if not isinstance(tol, dict) or any(k not in TOLERANCE_KEYS for k in tol):
        raise ValueError(f"{doc.where('tolerances')} may only set {', '.join(TOLERANCE_KEYS)}")
    for k, v in tol.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
            raise ValueError(f"tolerance {k!r} must be a number in (0, 1)")
        cfg.tolerances[k] = float(v)
    return cfg


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def _writer(buf):
    return csv.writer(buf, lineterminator="\n")


def _need(cfg: AnalysisConfig, attr: str, sub: str):
    value = getattr(cfg, attr)
    if value is None:
        raise ValueError(f"'{sub}' needs the {attr} section in the config")
    return value


def _cmd_bound(cfg, out, summary):
    sc = _need(cfg, "scenario", "bound")
    res = bound(cfg.model, sc)
    w = _writer(out)
    w.writerow(["tau", "exponent", "candidate"])
    for c in res.per_tau:
        w.writerow([c.tau, fmt(c.exponent), fmt(c.candidate)])
    summary(f"tau_star={res.tau_star} bound={fmt(res.bound)}")
    return EXIT_OK


def _cmd_directions(cfg, out, summary):
    sc = _need(cfg, "scenario", "directions")
    res = most_private_direction(cfg.model, sc.k_star, sc.N, cfg.norm)
    basis = fully_private_directions(cfg.model, sc.N, cfg.tol("rank"))
    w = _writer(out)
    w.writerow(["quantity", "index", "component", "value"])
    for row in res.per_tau_eigs:
        w.writerow(["lambda_min", row.tau, "", fmt(row.smallest_eigenvalue)])
        w.writerow(["candidate", row.tau, "", fmt(row.candidate)])
    for i, v in enumerate(res.u_star):
        w.writerow(["u_star", 0, i, fmt(v)])
    for j in range(basis.shape[1]):
        for i, v in enumerate(basis[:, j]):
            w.writerow(["fully_private_basis", j, i, fmt(v)])
    summary(f"tau_star={res.tau_star} lambda_min={fmt(res.lambda_min)} norm={fmt(res.norm)} "
            f"bound={fmt(res.bound_at_norm)} fully_private={fmt(res.fully_private)} "
            f"null_dim={basis.shape[1]}")
    return EXIT_OK


def _cmd_optimize(cfg, out, summary, report_fn=None):
    sc = _need(cfg, "scenario", "optimize")
    program = _need(cfg, "program", "optimize")
    if cfg.epsilon_bar is not None:
        nominal = solve_nominal(program, cfg.model)
        tau = bound(cfg.model, StepScenario(nominal.u, sc.k_star, sc.N)).tau_star
        mu = mu_for_budget(cfg.epsilon_bar, s_matrix(cfg.model, tau, sc.k_star, sc.N), nominal.u)
        program = program.with_mu(mu)
    rep = (report_fn or tradeoff_report)(cfg.model, program, sc.k_star, sc.N)
    checks = rep.certificates()
    cols = {
        "mu": rep.mu, "epsilon": rep.epsilon, "delta": rep.delta, "epsilon_over_delta": rep.tradeoff_ratio,
        "privacy_cost": rep.privacy_cost, "J_star": rep.J_star, "J_p": rep.J_p,
        "tau_star_nominal": rep.tau_star_nominal, "tau_star_private": rep.tau_star_private,
        "bound_nominal": rep.bound_nominal, "bound_private_fixed_tau": rep.bound_private_fixed_tau,
        "bound_private_full_search": rep.bound_private_full_search,
    }
    for name, vec in (("u_star", rep.u_star), ("u_p", rep.u_p), ("x_star", rep.x_star), ("x_p", rep.x_p)):
        for i, v in enumerate(vec):
            cols[f"{name}_{i}"] = v
    w = _writer(out)
    w.writerow(list(cols) + list(checks))
    w.writerow([fmt(v) for v in cols.values()] + ["pass" if ok else "fail" for ok in checks.values()])
    summary(f"mu={fmt(rep.mu)} epsilon={fmt(rep.epsilon)} delta={fmt(rep.delta)} "
            f"bound_nominal={fmt(rep.bound_nominal)} bound_private={fmt(rep.bound_private_full_search)} "
            f"certificates={'pass' if all(checks.values()) else 'FAIL'}")
    if not all(checks.values()):
        failed = ",".join(k for k, ok in checks.items() if not ok)
        raise CertificateViolation(f"trade-off certificate failed: {failed}")
    return EXIT_OK


def _threads() -> int:
    raw = os.environ.get("PRIVLEAK_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ValueError(f"PRIVLEAK_THREADS must be a positive integer, got {raw!r}")
    return value


def _cmd_simulate(cfg, out, summary):
    sc = _need(cfg, "scenario", "simulate")
    trials = _need(cfg, "trials", "simulate")
    rep = run_trials(cfg.model, sc, trials, cfg.seed, workers=_threads())
    w = _writer(out)
    w.writerow(["trial", "k_hat", "tie"])
    for i, (k, tie) in enumerate(zip(rep.estimates, rep.ties)):
        w.writerow([i, int(k), fmt(bool(tie))])
    summary(f"trials={rep.trials} k_star={sc.k_star} empirical_variance={fmt(rep.empirical_variance)} "
            f"empirical_bias={fmt(rep.empirical_bias)} mse={fmt(rep.mse)} tie_count={rep.tie_count} "
            f"bound={fmt(rep.bound)}")
    return EXIT_OK


def _cmd_zero_check(cfg, out, summary):
    zd = _need(cfg, "zero", "zero-check")
    res = verify_zero_direction(cfg.model, zd, cfg.tol("zero"))
    w = _writer(out)
    w.writerow(list(res._fields))
    w.writerow([fmt(v) for v in res])
    note = ""
    if cfg.scenario is not None and cfg.scenario.N - cfg.scenario.k_star <= cfg.model.n:
        note = " (horizon N - k_star <= n: full privacy not implied)"
    summary(f"is_zero_direction={fmt(res.is_zero_direction)} is_fully_private={fmt(res.is_fully_private)}{note}")
    return EXIT_OK


COMMANDS = {
    "bound": _cmd_bound,
    "directions": _cmd_directions,
    "optimize": _cmd_optimize,
    "simulate": _cmd_simulate,
    "zero-check": _cmd_zero_check,
}


class CertificateViolation(RuntimeError):
    pass


def _error(kind: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split())
    print(f"privleak: error: {kind}: {type(exc).__name__}: {msg}", file=sys.stderr)


def run(subcommand: str, config, output=None) -> int:
    """Run one analysis; ``config`` is a path or an :class:`AnalysisConfig`.

    CSV goes to ``output`` (stdout when ``None`` or ``"-"``); the one-line
    summary goes to stdout, or to stderr when the CSV itself is on stdout.
    """
    if subcommand not in COMMANDS:
        _error("config", ValueError(f"unknown subcommand {subcommand!r}"))
        return EXIT_CONFIG
    try:
        cfg = config if isinstance(config, AnalysisConfig) else parse_config(config)
    except (OSError, ValueError) as exc:
        _error("config", exc)
        return EXIT_CONFIG
    to_stdout = output in (None, "-")
    stream = sys.stderr if to_stdout else sys.stdout
    buf = io.StringIO()
    try:
        code = COMMANDS[subcommand](cfg, buf, lambda line: print(line, file=stream))
    except CertificateViolation as exc:
        code = EXIT_CERTIFICATE
        _error("certificate", exc)
    except NumericalError as exc:
        _error("numerical", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        _error("config", exc)
        return EXIT_CONFIG
    if to_stdout:
        sys.stdout.write(buf.getvalue())
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="privleak", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="JSON file describing the system and the analysis")
    parser.add_argument("-o", "--output", default="-", help="CSV destination (default: stdout)")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.output)


if __name__ == "__main__":
    sys.exit(main())
