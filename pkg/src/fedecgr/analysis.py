"""Numerical checks of the ECGR theory, plus deviation and selection diagnostics.

Vector conventions follow the re-aggregation: ``a`` is the sum of convergent
steps, ``b`` the sum of exploratory steps, ``mu`` the reference (true)
gradient, ``c = a + b`` the plain update and ``v = a + beta * b`` the damped
one, rescaled by ``gamma = |c| / |v|``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ecgr import GradientSet, herding_select, re_aggregate
from .errors import ZeroVectorError
from .linalg import STREAM_THEORY, RngStream, dot, norm
from .model import loss_and_grad

BETA_GRID = tuple(round(0.1 * j, 1) for j in range(11))
SLACK = 1e-12


def align(x, z) -> float:
    """Cosine of the angle between ``x`` and ``z``."""
    nx, nz = norm(x), norm(z)
    if nx == 0.0 or nz == 0.0:
        raise ZeroVectorError("alignment is undefined for a zero vector")
    return min(1.0, max(-1.0, dot(x, z) / (nx * nz)))


def lemma_condition(x, y, z) -> bool:
    """``<x,z>/|x| > <y,z>/|y|``, the hypothesis of the monotonicity lemma."""
    return dot(x, z) / norm(x) > dot(y, z) / norm(y)


def monotonicity_curve(x, y, z, betas=BETA_GRID) -> list:
    """``f(beta) = <x + beta y, z> / |x + beta y|`` on each grid point."""
    x, y, z = (np.asarray(v, dtype=np.float64) for v in (x, y, z))
    out = []
    for b in betas:
        u = x + b * y
        nu = norm(u)
        if nu == 0.0:
            raise ZeroVectorError(f"x + beta*y vanishes at beta={b}")
        out.append(dot(u, z) / nu)
    return out


def strictly_decreasing(values, slack=SLACK) -> bool:
    return all(values[j + 1] < values[j] + slack for j in range(len(values) - 1))


def slope_numerator(x, y, z, beta) -> float:
    """Numerator ``M(beta)`` of ``f'(beta)``; the denominator ``|x+beta y|^3`` is positive.

    The quadratic terms cancel, so ``M`` is affine in ``beta``:
    ``M(beta) = (<y,z>|x|^2 - <x,z><x,y>) + beta (<y,z><x,y> - <x,z>|y|^2)``.
    """
    xy, xz, yz = dot(x, y), dot(x, z), dot(y, z)
    xx, yy = dot(x, x), dot(y, y)
    return (yz * xx - xz * xy) + beta * (yz * xy - xz * yy)


def decreasing_on_unit_interval(x, y, z) -> bool:
    """Exact test that ``f`` is strictly decreasing on [0, 1).

    ``M`` is affine, so it is negative on [0, 1) iff ``M(0) < 0`` and ``M(1) <= 0``.
    """
    return slope_numerator(x, y, z, 0.0) < 0 and slope_numerator(x, y, z, 1.0) <= 0


@dataclass
class TheoryCase:
    a: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    beta: float

    @property
    def assumption_holds(self) -> bool:
        try:
            return align(self.a, self.mu) > align(self.b, self.mu)
        except ZeroVectorError:
            return False


def check_error_reduction(case: TheoryCase) -> tuple:
    """Compare ``|gamma v - mu|^2`` (lhs) with ``|c - mu|^2`` (rhs).

    Returns ``(lhs < rhs, lhs, rhs)``. Whether the superiority assumption
    held is available on ``case.assumption_holds``; it is not enforced here.
    """
    a, b, mu = (np.asarray(v, dtype=np.float64) for v in (case.a, case.b, case.mu))
    c = a + b
    v = a + case.beta * b
    nv = norm(v)
    if nv == 0.0:
        raise ZeroVectorError("a + beta*b vanishes")
    gamma = norm(c) / nv
    lhs = norm(gamma * v - mu) ** 2
    rhs = norm(c - mu) ** 2
    return lhs < rhs, lhs, rhs


def true_gradient(spec, params, ds) -> np.ndarray:
    """Full-dataset mean cross-entropy gradient."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    return loss_and_grad(spec, params, ds.X, ds.y).grad


@dataclass
class DeviationRecord:
    round: int
    client: int
    dev_raw: float
    dev_ecgr: float
    assumption_held: bool


def deviation_record(round_, client, upload, split, reference, cfg) -> DeviationRecord:
    """Distances of one client's raw and re-aggregated sums from ``reference``.

    ``reference`` is the displacement an exact full-gradient client would make
    this round, ``tau * lr * grad F(w_t)``. The ECGR sum is recomputed with the
    configured beta when the run itself has ECGR switched off.
    """
    gs = upload.gradient_set
    raw = upload.raw
    if cfg.ecgr_enabled:
        g_prime = upload.ecgr_sum
    else:
        g_prime = re_aggregate(gs, split).g_prime
    a = gs.subset_sum(split.pi)
    b = gs.subset_sum(split.pi_prime)
    held = TheoryCase(a, b, reference, cfg.beta).assumption_holds
    return DeviationRecord(round_, client, norm(raw - reference) ** 2,
                           norm(g_prime - reference) ** 2, held)


@dataclass
class DeviationSummary:
    pairs: int
    held: int
    reduced_when_held: int

    @property
    def held_fraction(self) -> float:
        return self.held / self.pairs if self.pairs else 0.0

    @property
    def reduced_fraction(self) -> float:
        return self.reduced_when_held / self.held if self.held else 0.0


def summarize_deviations(records) -> DeviationSummary:
    held = [r for r in records if r.assumption_held]
    return DeviationSummary(len(records), len(held),
                            sum(r.dev_ecgr < r.dev_raw for r in held))


def late_half_fraction(selected, tau) -> float:
    """Share of selected step indices that fall in the second half of the epoch."""
    if not selected:
        return 0.0
    return sum(2 * i >= tau for i in selected) / len(selected)


def selection_stats(masks) -> dict:
    """Late-half fraction per ``(round, client)`` plus their means.

    Returns ``{"per_mask": [...], "per_client": {client: mean}, "mean": float}``.
    """
    if not masks:
        raise ValueError("no selection masks")
    per_mask = [late_half_fraction(m.selected_indices, m.tau) for m in masks]
    by_client = {}
    for m, f in zip(masks, per_mask):
        by_client.setdefault(m.client, []).append(f)
    return {
        "per_mask": per_mask,
        "per_client": {c: float(np.mean(v)) for c, v in sorted(by_client.items())},
        "mean": float(np.mean(per_mask)),
    }


# -- randomized theory suites ------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    total: int
    passed: int
    seconds: float = 0.0
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def _gaussian_triple(gen, dim, condition, max_tries=100_000):
    for _ in range(max_tries):
        x, y, z = gen.standard_normal((3, dim))
        if min(norm(x), norm(y), norm(z)) == 0.0:
            continue
        if condition(x, y, z):
            return x, y, z
    raise RuntimeError("rejection sampling did not find a qualifying triple")


def magnitude_suite(samples=1000, dim=16, seed=42, taus=range(2, 11),
                    betas=(0.0, 0.2, 0.5, 1.0), tol=1e-9) -> SuiteResult:
    """Norm of the re-aggregated update equals the norm of the plain sum."""
    gen = RngStream(seed, (STREAM_THEORY, 1)).generator()
    taus, betas = list(taus), list(betas)
    res = SuiteResult("magnitude-preservation", samples, 0)
    t0 = time.perf_counter()
    for n in range(samples):
        tau = taus[gen.integers(len(taus))]
        beta = betas[gen.integers(len(betas))]
        gs = GradientSet(gen.standard_normal((tau, dim)))
        out = re_aggregate(gs, herding_select(gs, beta))
        g_norm = norm(gs.total())
        if not out.degenerate and abs(norm(out.g_prime) - g_norm) <= tol * g_norm:
            res.passed += 1
        else:
            res.counterexamples.append({"case": n, "beta": beta, "steps": gs.steps.tolist()})
    res.seconds = time.perf_counter() - t0
    return res


def monotonicity_suite(samples=1000, dim=16, seed=42, betas=BETA_GRID,
                       slack=SLACK) -> SuiteResult:
    """``f`` strictly decreases on the grid for triples meeting the lemma's hypothesis."""
    gen = RngStream(seed, (STREAM_THEORY, 2)).generator()
    res = SuiteResult("monotonicity", samples, 0)
    t0 = time.perf_counter()
    for n in range(samples):
        x, y, z = _gaussian_triple(gen, dim, lemma_condition)
        curve = monotonicity_curve(x, y, z, betas)
        if strictly_decreasing(curve, slack):
            res.passed += 1
        else:
            res.counterexamples.append({
                "case": n, "x": x.tolist(), "y": y.tolist(), "z": z.tolist(),
                "curve": curve,
            })
    res.seconds = time.perf_counter() - t0
    return res


def error_reduction_suite(samples=1000, dim=16, seed=42, betas=(0.0, 0.2, 0.5, 0.9),
                          slack=SLACK) -> SuiteResult:
    """ECGR moves the update closer to ``mu`` when the superiority assumption holds.

    A case passes when ``lhs < rhs`` (relative slack ``slack``) at every beta
    in ``betas`` and ``|lhs - rhs| <= slack * rhs`` at beta = 1.
    """
    gen = RngStream(seed, (STREAM_THEORY, 3)).generator()
    res = SuiteResult("error-reduction", samples, 0)
    t0 = time.perf_counter()

    def superior(a, b, mu):
        return align(a, mu) > align(b, mu)

    for n in range(samples):
        a, b, mu = _gaussian_triple(gen, dim, superior)
        failures = []
        for beta in betas:
            _, lhs, rhs = check_error_reduction(TheoryCase(a, b, mu, beta))
            if not lhs < rhs + slack * rhs:
                failures.append({"beta": beta, "lhs": lhs, "rhs": rhs})
        _, lhs, rhs = check_error_reduction(TheoryCase(a, b, mu, 1.0))
        if abs(lhs - rhs) > slack * rhs:
            failures.append({"beta": 1.0, "lhs": lhs, "rhs": rhs})
        if failures:
            res.counterexamples.append({
                "case": n, "a": a.tolist(), "b": b.tolist(), "mu": mu.tolist(),
                "failures": failures,
            })
        else:
            res.passed += 1
    res.seconds = time.perf_counter() - t0
    return res


def run_theory_suites(samples=1000, dim=16, seed=42) -> list:
    return [
        magnitude_suite(samples, dim, seed),
        monotonicity_suite(samples, dim, seed),
        error_reduction_suite(samples, dim, seed),
    ]
