"""Bernstein-type deviation bounds for DCP sums and DCP point processes.

Bounds
------
``bound_thm31``
    Sum of independent finite-order DCP variables with total variance ``V``
    and largest order ``r``: ``P(S - ES >= sqrt(2xV) + r x) <= exp(-x)``, the
    matching lower tail without the ``r x`` term, and ``2 exp(-x)`` two-sided.
``bound_thm32``
    Stochastic integral of ``f >= 0`` against a DCP point process:
    ``P(int f d(CP - m1 lam) >= m1 (sqrt(2 y V_f) + y/3 |f|_inf)) <= exp(-y)``
    with ``m1 = sum_k k a_k`` and ``V_f = int f**2 lam``.
``bound_corollary31``
    ``n`` independent processes: thresholds add up, bound ``exp(-n y)``.

Every bound can be checked against simulation with :func:`empirical_tail`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .core import DcpParams, NbParams, jump_mean, moments, nb_to_dcp
from .rng import RngLike, RngStream, as_generator
from .sampler import (
    Alphas,
    CellFunction,
    Region,
    _cell_values,
    _run_chunks,
    layer_weights,
    sample_dcp_rv,
    sample_layer_counts,
)

__all__ = [
    "KINDS",
    "TailBoundSpec",
    "TailReport",
    "bound_thm31",
    "bound_thm32",
    "bound_corollary31",
    "bound_remark",
    "empirical_tail",
    "wilson_interval",
    "reports_to_csv",
    "grid_fixture",
    "dominance_cases",
    "dominance_suite",
]

KINDS = ("thm31_upper", "thm31_lower", "thm31_twosided", "thm32", "corollary31", "remark_indicator")
CONFIDENCE = 0.99


@dataclass(frozen=True)
class TailBoundSpec:
    """A deviation threshold ``t`` and the probability bound for exceeding it.

    The bounded event depends on ``kind``: ``stat <= -t`` for ``thm31_lower``,
    ``|stat| >= t`` for ``thm31_twosided`` and ``stat >= t`` otherwise, where
    ``stat`` is the centred statistic.
    """

    kind: str
    threshold: float
    bound: float
    inputs_digest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}")

    def exceeds(self, stat: np.ndarray) -> np.ndarray:
        stat = np.asarray(stat, dtype=float)
        if self.kind == "thm31_lower":
            return stat <= -self.threshold
        if self.kind == "thm31_twosided":
            return np.abs(stat) >= self.threshold
        return stat >= self.threshold


@dataclass(frozen=True)
class TailReport:
    spec: TailBoundSpec
    empirical: float
    ci_low: float
    ci_high: float
    trials: int
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "kind": self.spec.kind,
            "inputs_digest": self.spec.inputs_digest,
            "threshold": self.spec.threshold,
            "bound": self.spec.bound,
            "empirical": self.empirical,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "trials": self.trials,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


CSV_COLUMNS = ("kind", "threshold", "bound", "empirical", "ci_low", "ci_high", "trials", "verdict", "inputs_digest")


def reports_to_csv(reports: Sequence[TailReport]) -> str:
    """One CSV row per report; ``inputs_digest`` is embedded as compact JSON."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        d = rep.to_dict()
        d["inputs_digest"] = json.dumps(d["inputs_digest"], sort_keys=True, separators=(",", ":"))
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _check_level(v: float, name: str) -> float:
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"{name} must be positive (pass e.g. 1e-15 for the vacuous case), got {v}")
    return v


# ---------------------------------------------------------------------------
# finite-order sums
# ---------------------------------------------------------------------------

def bound_thm31(
    params_list: Sequence[DcpParams],
    x: float,
    allow_truncated: bool = False,
) -> tuple[TailBoundSpec, TailBoundSpec, TailBoundSpec]:
    """Upper, lower and two-sided bounds for ``sum_i (Y_i - E Y_i)``.

    ``V`` is the sum of the variances ``lam_i sum_k k**2 a_k(i)`` and ``r`` the
    largest order. Truncated infinite-order laws are rejected unless
    ``allow_truncated`` is set, in which case the bound applies to the
    truncated law.
    """
    x = _check_level(x, "x")
    params_list = list(params_list)
    if not params_list:
        raise ValueError("need at least one DcpParams")
    for p in params_list:
        if p.truncated and p.tail_mass > 0 and not allow_truncated:
            raise ValueError(
                "bound_thm31 needs finite-order laws; this one is a truncation with "
                f"tail mass {p.tail_mass:.3g} (pass allow_truncated=True to accept)"
            )
    V = math.fsum(moments(p).variance for p in params_list)
    r = max(p.order for p in params_list)
    root = math.sqrt(2.0 * x * V)
    digest = {
        "x": x,
        "n": len(params_list),
        "variance_sum": V,
        "order": r,
        "variance_convention": "sum of Var(Y_i)",
        "truncated_tail_mass": max(p.tail_mass for p in params_list),
    }
    bound = math.exp(-x)
    return (
        TailBoundSpec("thm31_upper", root + r * x, bound, digest),
        TailBoundSpec("thm31_lower", root, bound, digest),
        TailBoundSpec("thm31_twosided", root + r * x, min(1.0, 2.0 * bound), digest),
    )


# ---------------------------------------------------------------------------
# point-process integrals
# ---------------------------------------------------------------------------

def _process_term(region: Region, alphas: Alphas, f: CellFunction, y: float, f_sup: float | None = None):
    """``(m1, V_f, |f|_inf, threshold term)`` for one process; ``f_sup`` overrides ``|f|_inf``."""
    fv = _cell_values(f, region)
    if (fv < 0).any():
        raise ValueError("f must be nonnegative on every cell")
    W = layer_weights(alphas, len(region))
    m1s = {jump_mean(row) for row in W} if len(region) else {jump_mean(_flat_alphas(alphas))}
    if len(m1s) != 1:
        raise ValueError("a single process must use the same weights on every cell")
    m1 = m1s.pop()
    V = float(np.sum(fv * fv * region.masses()))
    sup = float(fv.max()) if f_sup is None else f_sup
    return m1, V, sup, m1 * (math.sqrt(2.0 * y * V) + y / 3.0 * sup)


def _flat_alphas(alphas: Alphas):
    return alphas.weights() if isinstance(alphas, DcpParams) else np.asarray(alphas, dtype=float)


def bound_thm32(region: Region, alphas: Alphas, f: CellFunction, y: float) -> TailBoundSpec:
    """Threshold ``m1 (sqrt(2 y V_f) + y/3 |f|_inf)`` with bound ``exp(-y)``.

    ``f`` gives one nonnegative value per cell of ``region``.
    """
    y = _check_level(y, "y")
    m1, V, sup, thr = _process_term(region, alphas, f, y)
    digest = {"y": y, "jump_mean": m1, "V_f": V, "f_sup": sup, "total_mass": region.total_mass}
    return TailBoundSpec("thm32", thr, math.exp(-y), digest)


def bound_corollary31(
    regions: Sequence[Region],
    alphas_list: Sequence[Alphas],
    f: Sequence[CellFunction] | CellFunction,
    y: float,
) -> TailBoundSpec:
    """Sum over ``n`` independent processes: threshold ``sum_i m1_i (sqrt(2 y V_if) + y/3 |f|_inf)``.

    ``f`` is either one per-cell array per region or a single callable shared by
    all regions; ``|f|_inf`` is the supremum over all of them. Bound ``exp(-n y)``.
    """
    y = _check_level(y, "y")
    regions = list(regions)
    alphas_list = list(alphas_list)
    n = len(regions)
    if n < 1 or len(alphas_list) != n:
        raise ValueError("need one weight sequence per region (n >= 1)")
    fs = [f] * n if callable(f) else list(f)
    if len(fs) != n:
        raise ValueError("need one f per region")
    vals = [_cell_values(fi, reg) for fi, reg in zip(fs, regions)]
    sup = max((float(v.max()) for v in vals if v.size), default=0.0)
    threshold = 0.0
    m1s, Vs = [], []
    for reg, al, fi in zip(regions, alphas_list, fs):
        m1, V, _, term = _process_term(reg, al, fi, y, f_sup=sup)
        threshold += term
        m1s.append(m1)
        Vs.append(V)
    digest = {"y": y, "n": n, "jump_means": m1s, "V_if": Vs, "f_sup": sup}
    return TailBoundSpec("corollary31", threshold, math.exp(-n * y), digest)


def bound_remark(params: DcpParams, y: float) -> TailBoundSpec:
    """Indicator specialisation ``P(Y - EY >= (EY/lam)(sqrt(2 y lam) + y/3)) <= exp(-y)``.

    ``EY / lam`` is the mean jump size, evaluated as ``sum_k k a_k``.
    """
    y = _check_level(y, "y")
    ey_over_lam = jump_mean(params)
    thr = ey_over_lam * (math.sqrt(2.0 * y * params.lam) + y / 3.0)
    digest = {"y": y, "lam": params.lam, "jump_mean": ey_over_lam}
    return TailBoundSpec("remark_indicator", thr, math.exp(-y), digest)


# ---------------------------------------------------------------------------
# Monte Carlo verification
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def empirical_tail(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    spec: TailBoundSpec,
    trials: int,
    rng: RngLike,
    workers: int = 1,
) -> TailReport:
    """Estimate ``P(event)`` for ``spec`` by simulation.

    ``draw(gen, size)`` must return ``size`` independent realisations of the
    centred statistic. The verdict is ``"pass"`` when the lower end of the
    Wilson 99% interval does not exceed ``spec.bound``.
    """
    if trials < 1000:
        raise ValueError("empirical_tail needs trials >= 1000")

    def chunk(size, stream):
        gen = as_generator(stream)
        return int(np.count_nonzero(spec.exceeds(draw(gen, size))))

    hits = sum(_run_chunks(chunk, trials, rng, workers))
    lo, hi = wilson_interval(hits, trials)
    return TailReport(spec, hits / trials, lo, hi, int(trials), "pass" if lo <= spec.bound else "fail")


# ---------------------------------------------------------------------------
# fixture grid
# ---------------------------------------------------------------------------

FIXTURES = ("poisson", "two_point", "nb")
GRID_MASSES = (0.5, 1.0, 5.0)
GRID_LEVELS = (0.25, 0.5, 1.0, 2.0, 4.0)
NB_Q = 0.3
NB_TOL = 1e-12


def grid_fixture(name: str, mass: float) -> DcpParams:
    """Grid laws with DCP rate ``mass``: Poisson, ``a = (1/2, 1/2)``, truncated NB(q=0.3)."""
    if name == "poisson":
        return DcpParams.poisson(mass)
    if name == "two_point":
        return DcpParams(mass, (0.5, 0.5))
    if name == "nb":
        r = mass / -math.log1p(-NB_Q)
        return nb_to_dcp(NbParams(r, NB_Q), NB_TOL)
    raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")


def _rv_draw(params: DcpParams, n_copies: int = 1):
    mean = moments(params).mean * n_copies

    def draw(gen, size):
        return sample_dcp_rv(params, size * n_copies, gen).reshape(size, n_copies).sum(axis=1) - mean

    return draw


def _process_draw(region: Region, alphas, fv: np.ndarray):
    W = layer_weights(alphas, len(region))
    k = np.arange(1, W.shape[1] + 1)
    centre = float(np.sum(fv * region.masses()) * jump_mean(W[0]))

    def draw(gen, size):
        counts = sample_layer_counts(region, W, size, gen)
        return np.einsum("tck,k,c->t", counts, k, fv) - centre

    return draw


def dominance_cases(
    fixtures: Sequence[str] = FIXTURES,
    masses: Sequence[float] = GRID_MASSES,
    levels: Sequence[float] = GRID_LEVELS,
    n_processes: int = 3,
):
    """``(label, spec, draw)`` for every (fixture, mass, level) cell of the grid.

    Each cell contributes the three finite-order bounds (on the truncated law
    for ``nb``), the point-process bound for ``f = 1`` on a unit cell, and the
    ``n_processes``-fold corollary bound.
    """
    cases = []
    for name in fixtures:
        for mass in masses:
            params = grid_fixture(name, mass)
            region = Region.unit_cell(mass)
            one = np.ones(1)
            for level in levels:
                label = {"fixture": name, "mass": mass, "level": level}
                for spec in bound_thm31([params], level, allow_truncated=True):
                    cases.append((label, spec, _rv_draw(params)))
                spec = bound_thm32(region, params, one, level)
                cases.append((label, spec, _process_draw(region, params, one)))
                spec = bound_corollary31([region] * n_processes, [params] * n_processes, [one] * n_processes, level)
                big = Region.from_masses([mass] * n_processes)
                cases.append((label, spec, _process_draw(big, params, np.ones(n_processes))))
    return cases


def dominance_suite(
    trials: int,
    rng: RngLike,
    workers: int = 1,
    **grid,
) -> list[TailReport]:
    """Run :func:`empirical_tail` on every case of :func:`dominance_cases`.

    Case ``i`` uses child stream ``i`` of ``rng``; the fixture label is merged
    into each report's ``inputs_digest``.
    """
    base = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
    reports = []
    for i, (label, spec, draw) in enumerate(dominance_cases(**grid)):
        spec = TailBoundSpec(spec.kind, spec.threshold, spec.bound, {**label, **spec.inputs_digest})
        reports.append(empirical_tail(draw, spec, trials, base.child(i), workers))
    return reports
