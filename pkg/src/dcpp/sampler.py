"""Simulation of DCP random variables and marked DCP point patterns.

Point patterns live on a :class:`Region`: finitely many disjoint axis-aligned
boxes, each with a constant intensity. Layer ``k`` of the pattern is a Poisson
process with intensity ``a_k * intensity`` and every one of its points carries
mark ``k``; the weighted count ``CP(A) = sum_k k N_k(A)`` is DCP distributed.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .core import DcpParams, NbParams
from .rng import RngLike, RngStream, as_generator, split_trials

__all__ = [
    "Cell",
    "Region",
    "PointPattern",
    "CampbellResult",
    "layer_weights",
    "sample_dcp_rv",
    "sample_nb_direct",
    "sample_layer_counts",
    "sample_dcpp",
    "stochastic_integral",
    "campbell_closed_form",
    "campbell_check",
]

_EXP_LIMIT = 700.0

Alphas = Union[DcpParams, Sequence[float], Sequence[Sequence[float]], np.ndarray]
CellFunction = Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Cell:
    """Axis-aligned box ``[lower, upper)`` with constant intensity."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    intensity: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same dimension")
        if any(not (h > l) for l, h in zip(lo, hi)):
            raise ValueError(f"cell {lo}..{hi} has non-positive volume")
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise ValueError(f"intensity must be finite and >= 0, got {self.intensity}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "intensity", float(self.intensity))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return math.prod(h - l for l, h in zip(self.lower, self.upper))

    @property
    def mass(self) -> float:
        return self.intensity * self.volume


@dataclass(frozen=True)
class Region:
    """Disjoint union of boxes carrying a piecewise-constant intensity."""

    cells: tuple[Cell, ...]
    dim: int = 1

    def __post_init__(self):
        cells = tuple(self.cells)
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        if any(c.dim != self.dim for c in cells):
            raise ValueError(f"every cell must have dimension {self.dim}")
        object.__setattr__(self, "cells", cells)
        if len(cells) > 1:
            lo = np.array([c.lower for c in cells])
            hi = np.array([c.upper for c in cells])
            # boxes i, j overlap iff they overlap on every axis
            overlap = np.all(
                np.maximum(lo[:, None, :], lo[None, :, :])
                < np.minimum(hi[:, None, :], hi[None, :, :]),
                axis=2,
            )
            np.fill_diagonal(overlap, False)
            if overlap.any():
                i, j = np.argwhere(overlap)[0]
                raise ValueError(f"cells {i} and {j} overlap")

    def __len__(self) -> int:
        return len(self.cells)

    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.cells], dtype=float)

    def volumes(self) -> np.ndarray:
        return np.array([c.volume for c in self.cells], dtype=float)

    def intensities(self) -> np.ndarray:
        return np.array([c.intensity for c in self.cells], dtype=float)

    @property
    def total_mass(self) -> float:
        return float(self.masses().sum())

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point, ``-1`` if none."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=int)
        for i, c in enumerate(self.cells):
            inside = np.all((pts >= c.lower) & (pts < c.upper), axis=1)
            out[inside & (out < 0)] = i
        return out

    @classmethod
    def from_masses(cls, masses: Sequence[float], dim: int = 1) -> "Region":
        """Equal-width slabs along the first axis partitioning ``[0, 1]**dim``.

        Cell ``i`` gets intensity ``masses[i] / volume`` so its mass is ``masses[i]``.
        """
        m = np.asarray(masses, dtype=float)
        edges = np.linspace(0.0, 1.0, m.size + 1)
        cells = []
        for i, mass in enumerate(m):
            lo = (edges[i],) + (0.0,) * (dim - 1)
            hi = (edges[i + 1],) + (1.0,) * (dim - 1)
            vol = edges[i + 1] - edges[i]
            cells.append(Cell(lo, hi, mass / vol))
        return cls(tuple(cells), dim)

    @classmethod
    def unit_cell(cls, mass: float, dim: int = 1) -> "Region":
        return cls((Cell((0.0,) * dim, (1.0,) * dim, mass),), dim)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "cells": [
                {"lower": list(c.lower), "upper": list(c.upper), "intensity": c.intensity}
                for c in self.cells
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        cells = tuple(Cell(c["lower"], c["upper"], c["intensity"]) for c in d["cells"])
        return cls(cells, int(d.get("dim", len(cells[0].lower) if cells else 1)))


@dataclass(frozen=True)
class PointPattern:
    """Marked point set: ``locations`` is ``(m, d)``, ``marks`` are jump sizes ``>= 1``."""

    locations: np.ndarray
    marks: np.ndarray
    cell_index: np.ndarray
    region: Region
    seed_record: RngStream | None = None

    def __len__(self) -> int:
        return len(self.marks)

    def weighted_count(self, cells: Sequence[int] | None = None) -> int:
        """``CP(A) = sum of marks`` over ``A`` = union of ``cells`` (default: all)."""
        if cells is None:
            return int(self.marks.sum())
        return int(self.marks[np.isin(self.cell_index, list(cells))].sum())

    def counts_per_cell(self) -> np.ndarray:
        """Weighted count ``CP(S_i)`` for every cell."""
        return np.bincount(self.cell_index, weights=self.marks, minlength=len(self.region)).astype(int)

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        """CSV with header ``x1..xd,mark``; writes ``path`` if given and returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.region.dim)] + ["mark"])
        for loc, mark in zip(self.locations, self.marks):
            w.writerow([repr(float(v)) for v in loc] + [int(mark)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source: str | os.PathLike, region: Region) -> "PointPattern":
        """Read a pattern written by :meth:`to_csv` (path or CSV text)."""
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rows = [r for r in csv.reader(lines) if r]
        header, body = rows[0], rows[1:]
        d = len(header) - 1
        if header != [f"x{i + 1}" for i in range(d)] + ["mark"]:
            raise ValueError(f"unexpected point pattern header {header}")
        locs = np.array([[float(v) for v in r[:d]] for r in body], dtype=float).reshape(-1, d)
        marks = np.array([int(r[d]) for r in body], dtype=int)
        idx = region.locate(locs) if len(locs) else np.zeros(0, dtype=int)
        if (idx < 0).any():
            raise ValueError("pattern contains points outside the region")
        return cls(locs, marks, idx, region)


class CampbellResult(NamedTuple):
    mc_estimate: float
    closed_form: float
    std_error: float


# ---------------------------------------------------------------------------
# random variables
# ---------------------------------------------------------------------------

def sample_dcp_rv(params: DcpParams, n: int, rng: RngLike) -> np.ndarray:
    """``n`` i.i.d. draws of ``sum_i i * Po(lam a_i)`` with independent layers."""
    gen = as_generator(rng)
    layers = gen.poisson(params.levy(), size=(int(n), params.order))
    return layers @ np.arange(1, params.order + 1)


def sample_nb_direct(nb: NbParams, n: int, rng: RngLike) -> np.ndarray:
    """Negative binomial draws via the gamma-Poisson mixture.

    ``G ~ Gamma(shape=r, scale=q/(1-q))`` then ``Po(G)``.
    """
    gen = as_generator(rng)
    g = gen.gamma(nb.r, nb.q / (1.0 - nb.q), size=int(n))
    return gen.poisson(g)


# ---------------------------------------------------------------------------
# point patterns
# ---------------------------------------------------------------------------

def layer_weights(alphas: Alphas, n_cells: int) -> np.ndarray:
    """Per-cell layer weights as an ``(n_cells, R)`` array.

    ``alphas`` may be a :class:`DcpParams`, one weight sequence shared by all
    cells, or one sequence per cell (ragged rows are zero-padded). Rows may sum
    to less than one; they then act as thinning fractions of the intensity.
    """
    if isinstance(alphas, DcpParams):
        rows = [alphas.weights()] * n_cells
    else:
        seq = list(alphas) if not isinstance(alphas, np.ndarray) else alphas
        if isinstance(seq, np.ndarray) and seq.ndim == 2:
            rows = list(seq)
        elif len(seq) and isinstance(seq[0], (DcpParams, Sequence, np.ndarray)):
            rows = [r.weights() if isinstance(r, DcpParams) else np.asarray(r, float) for r in seq]
        else:
            rows = [np.asarray(seq, dtype=float)] * n_cells
    if len(rows) != n_cells:
        raise ValueError(f"got {len(rows)} weight rows for {n_cells} cells")
    R = max((len(r) for r in rows), default=1)
    W = np.zeros((n_cells, max(R, 1)))
    for i, r in enumerate(rows):
        W[i, : len(r)] = r
    if (W < 0).any() or not np.isfinite(W).all():
        raise ValueError("layer weights must be finite and nonnegative")
    if n_cells and (W.sum(axis=1) > 1.0 + 1e-12).any():
        raise ValueError("layer weights of a cell must sum to at most 1")
    return W


def sample_layer_counts(region: Region, alphas: Alphas, size: int, rng: RngLike) -> np.ndarray:
    """Layer counts ``N_k(S_i)`` for ``size`` independent patterns, shape ``(size, cells, R)``."""
    W = layer_weights(alphas, len(region))
    rates = W * region.masses()[:, None]
    return as_generator(rng).poisson(rates, size=(int(size),) + rates.shape)


def sample_dcpp(region: Region, alphas: Alphas, rng: RngLike) -> PointPattern:
    """One marked DCP point pattern on ``region``.

    Every cell ``S_i`` and layer ``k`` gets ``Po(a_k * intensity_i * vol(S_i))``
    points placed uniformly in ``S_i`` with mark ``k``.
    """
    gen = as_generator(rng)
    d = region.dim
    if len(region) == 0:
        empty = np.zeros((0, d))
        return PointPattern(empty, np.zeros(0, int), np.zeros(0, int), region, _record(rng))
    counts = sample_layer_counts(region, alphas, 1, gen)[0]
    per_cell = counts.sum(axis=1)
    total = int(per_cell.sum())
    lo = np.repeat(np.array([c.lower for c in region.cells]), per_cell, axis=0)
    hi = np.repeat(np.array([c.upper for c in region.cells]), per_cell, axis=0)
    locs = lo + (hi - lo) * gen.random((total, d))
    R = counts.shape[1]
    marks = np.concatenate(
        [np.repeat(np.arange(1, R + 1), row) for row in counts]
    ).astype(int) if total else np.zeros(0, int)
    cell_index = np.repeat(np.arange(len(region)), per_cell)
    return PointPattern(locs, marks, cell_index, region, _record(rng))


def _record(rng: RngLike) -> RngStream | None:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    return None


def _cell_values(f: CellFunction, region: Region) -> np.ndarray:
    """Per-cell values of a per-cell-constant function."""
    if callable(f):
        centres = np.array([(np.array(c.lower) + np.array(c.upper)) / 2 for c in region.cells])
        vals = np.asarray(f(centres.reshape(len(region), region.dim)), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(region), float(vals))
    if vals.shape != (len(region),):
        raise ValueError(f"f must give one value per cell ({len(region)}), got shape {vals.shape}")
    return vals


def stochastic_integral(pattern: PointPattern, f: CellFunction) -> float:
    """``integral f dCP = sum over points of mark * f(location)``.

    ``f`` is either one value per region cell or a callable evaluated at the
    point locations.
    """
    if len(pattern) == 0:
        return 0.0
    if callable(f):
        vals = np.asarray(f(pattern.locations), dtype=float).reshape(-1)
    else:
        vals = _cell_values(f, pattern.region)[pattern.cell_index]
    return float(np.dot(pattern.marks, vals))


def campbell_closed_form(region: Region, alphas: Alphas, f: CellFunction, theta: float) -> float:
    """``E exp(theta * integral f dCP) = exp(sum_k sum_i a_k (exp(theta k f_i) - 1) mass_i)``."""
    W = layer_weights(alphas, len(region))
    fv = _cell_values(f, region)
    _check_exponent(W, fv, theta)
    k = np.arange(1, W.shape[1] + 1)
    expo = np.expm1(theta * fv[:, None] * k[None, :])
    return float(np.exp(np.sum(W * expo * region.masses()[:, None])))


def _check_exponent(W: np.ndarray, fv: np.ndarray, theta: float) -> None:
    if W.size == 0:
        return
    R_eff = np.array([np.flatnonzero(row).max() + 1 if row.any() else 0 for row in W])
    worst = float(np.max(theta * fv * R_eff)) if len(fv) else 0.0
    if worst > _EXP_LIMIT:
        raise OverflowError(f"theta * k * f reaches {worst:.1f} > {_EXP_LIMIT}; exp would overflow")


def campbell_check(
    region: Region,
    alphas: Alphas,
    f: CellFunction,
    theta: float,
    trials: int,
    rng: RngLike,
    workers: int = 1,
) -> CampbellResult:
    """Monte Carlo check of the Laplace functional against its closed form.

    Averages ``exp(theta * S)`` over ``trials`` patterns, ``S = integral f dCP``.
    With ``workers > 1`` the trials are split into chunks drawn from derived
    streams; results are reproducible for a fixed worker count.
    """
    if trials < 1000:
        raise ValueError("campbell_check needs trials >= 1000")
    closed = campbell_closed_form(region, alphas, f, theta)
    W = layer_weights(alphas, len(region))
    fv = _cell_values(f, region)
    k = np.arange(1, W.shape[1] + 1)
    coef = fv[:, None] * k[None, :]

    def chunk(size: int, stream) -> tuple[float, float]:
        counts = sample_layer_counts(region, W, size, stream)
        s = np.einsum("tck,ck->t", counts, coef)
        v = np.exp(theta * s)
        return float(v.sum()), float(np.square(v).sum())

    parts = _run_chunks(chunk, trials, rng, workers)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0) * trials / (trials - 1)
    return CampbellResult(mean, closed, math.sqrt(var / trials))


def _run_chunks(fn, trials: int, rng: RngLike, workers: int):
    """Run ``fn(size, stream)`` over trial chunks; one chunk uses ``rng`` itself."""
    sizes = split_trials(trials, workers)
    if len(sizes) == 1:
        return [fn(sizes[0], rng)]
    base = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
    streams = [base.child(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=len(sizes)) as ex:
        return list(ex.map(fn, sizes, streams))
