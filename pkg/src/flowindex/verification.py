"""Run every applicable index route on a system and collect residual checks."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import classical, qca, walk, walk_ti
from .errors import FlowIndexError, ValidationError
from .linalg import unitarity_residual
from .tolerances import DEFAULT, Tolerances


RATIONAL_KINDS = ("qca", "classical")


def _fraction_text(v, rational: bool = False) -> str:
    """Integers print bare unless ``rational``; automaton indices always print as ``p/q``."""
    v = Fraction(v)
    if v.denominator == 1 and not rational:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


@dataclass
class VerificationReport:
    name: str
    kind: str
    digest: str = ""
    routes: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    index: Fraction | None = None
    wall_time: float = 0.0

    @property
    def routes_agree(self) -> bool:
        return len({Fraction(v) for v in self.routes.values()}) <= 1

    @property
    def passed(self) -> bool:
        return self.routes_agree and all(self.checks.values()) and not self.errors

    def residual(self, name: str, value: float, tol: float) -> None:
        self.residuals[name] = float(value)
        self.checks[f"{name} <= {tol:g}"] = bool(value <= tol)

    def _text(self, v) -> str:
        return _fraction_text(v, self.kind in RATIONAL_KINDS)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "digest": self.digest,
            "index": None if self.index is None else self._text(self.index),
            "routes": {k: self._text(v) for k, v in self.routes.items()},
            "residuals": self.residuals,
            "checks": self.checks,
            "errors": self.errors,
            "passed": self.passed,
            "wall_time": round(self.wall_time, 4),
        }

    def summary(self) -> str:
        routes = ", ".join(f"{k}={self._text(v)}" for k, v in self.routes.items())
        status = "PASS" if self.passed else "FAIL"
        idx = "?" if self.index is None else self._text(self.index)
        lines = [f"{status} {self.name} [{self.kind}] index {idx} ({routes})"]
        lines += [f"  failed check: {k}" for k, ok in self.checks.items() if not ok]
        lines += [f"  error: {e}" for e in self.errors]
        return "\n".join(lines)


def kind_of(obj) -> str:
    if isinstance(obj, walk.BandedUnitary):
        return "walk"
    if isinstance(obj, walk_ti.LaurentUnitary):
        return "ti_walk"
    if isinstance(obj, qca.QcaSystem):
        return "qca"
    if isinstance(obj, classical.ClassicalRule):
        return "classical"
    raise ValidationError(f"unsupported object {type(obj).__name__}")


def _route(report: VerificationReport, name: str, fn):
    try:
        report.routes[name] = fn()
    except FlowIndexError as exc:
        report.errors.append(f"{name}: {exc}")


def _walk(report, u: walk.BandedUnitary, tol: Tolerances, rng, grid, cut):
    report.residual("unitarity", unitarity_residual(u.matrix), tol.unitarity)
    raw = walk.index_raw(u, cut)
    report.residual("integrality", abs(raw - round(raw)), tol.integrality)
    _route(report, "trace_formula", lambda: walk.index(u, cut, tol.integrality))
    cuts = walk.all_cut_indices(u, tol.integrality)
    report.checks["cut invariance"] = len(set(cuts)) == 1
    width = max(u.band, 1)
    if 3 * width + u.band <= u.M:
        _route(report, "rank_form", lambda: walk.index_rank_form(
            u, (cut - width, width), (cut, width), (cut + width, width), tol.integrality))


def _ti(report, u: walk_ti.LaurentUnitary, tol: Tolerances, rng, grid, cut):
    report.residual("paraunitarity", u.paraunitarity_residual(), tol.unitarity * 100)
    _route(report, "coefficients", lambda: walk_ti.index_coefficient(u, tol.integrality))
    _route(report, "determinant", lambda: walk_ti.index_determinant(u, tol.integrality)[0])
    g = max(2048, 8 * max(u.degree, 1))
    q = walk_ti.index_winding_quadrature(u, g)
    report.residual("quadrature_integrality", abs(q - round(q)), tol.quadrature)
    report.routes["quadrature"] = int(round(q))
    _route(report, "dispersion_winding", lambda: walk_ti.dispersion(u, grid).winding_sum)


def _automorphism_residual(system: qca.QcaSystem, rng, samples: int = 4) -> float:
    worst = 0.0
    for _ in range(samples):
        x = int(rng.integers(system.N))
        d = system.cell_dim(x)
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        ia, ib = system.heisenberg(qca.cell_operator(x, a)), system.heisenberg(qca.cell_operator(x, b))
        iab = system.heisenberg(qca.cell_operator(x, a @ b))
        lo = min(ia.start, ib.start, iab.start)
        hi = max(ia.stop, ib.stop, iab.stop)
        wd = system.window_dims(lo, hi)
        lhs = iab.in_window(lo, wd)
        rhs = ia.in_window(lo, wd) @ ib.in_window(lo, wd)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def _qca(report, system: qca.QcaSystem, tol: Tolerances, rng, grid, cut):
    report.residual("automorphism", _automorphism_residual(system, rng), tol.reconstruction)
    support = {}

    def run_support():
        ind, rep = qca.index_support(system)
        support["report"] = rep
        return ind

    _route(report, "support_algebras", run_support)
    if "report" in support:
        report.residual("support_commutation", support["report"].max_commutator, tol.commutation)
    _route(report, "three_cell", lambda: qca.index_three_cell(system))
    _route(report, "overlap", lambda: qca.index_overlap(system, cut))
    if isinstance(system, qca.CircuitQca) and len(set(system.dims)) == 1:
        _route(report, "shift_content", system.shift_content)


def _classical(report, rule: classical.ClassicalRule, tol: Tolerances, rng, grid, cut):
    r = max(1, rule.band)
    _route(report, "welch", lambda: classical.welch_index(rule, r).index)
    try:
        report.checks["welch stability"] = classical.welch_stability(rule, r)
    except ValidationError:
        pass
    n = 2 * rule.band + 4
    if rule.q**n <= qca.MONOMIAL_DIM_LIMIT:
        _route(report, "quantized_support", lambda: qca.index_support(classical.quantize(rule, n))[0])


_ANALYZERS = {"walk": _walk, "ti_walk": _ti, "qca": _qca, "classical": _classical}


def verify(obj, name: str = "input", *, expected=None, tol: Tolerances = DEFAULT, seed: int = 0,
           grid: int = 256, cut: int = 0, digest: str = "") -> VerificationReport:
    kind = kind_of(obj)
    report = VerificationReport(name, kind, digest)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    try:
        _ANALYZERS[kind](report, obj, tol, rng, grid, cut)
    except FlowIndexError as exc:
        report.errors.append(str(exc))
    if report.routes:
        report.index = Fraction(next(iter(report.routes.values())))
    if expected is not None:
        report.checks[f"expected index {_fraction_text(expected)}"] = report.index == Fraction(expected)
    report.wall_time = time.perf_counter() - start
    return report
