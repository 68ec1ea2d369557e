"""Exact and Monte Carlo mean-squared error of the two estimators.

The unmitigated estimator spends the whole budget ``B`` at strength ``eps``:

    bias = mu(eps) - mu(0),        var = v(eps) / B.

The extrapolated estimator splits ``n_j = pi_j B`` shots across the scaled
strengths ``lam_j eps``:

    bias = sum_j c_j mu(lam_j eps) - mu(0),
    var  = (1/B) sum_j c_j^2 v(lam_j eps) / pi_j,

both computed from the exact model curves with no series truncation.  The
quantity of interest is ``delta = MSE_noisy - MSE_zne`` (positive means the
extrapolation helps).

The Monte Carlo engine realizes the same comparison with finite counts.  Raw
data for one experiment lives in a :class:`CountTable`: one binomial
plus-count per (budget, eps, arm, replicate) cell, where arm slot 0 is the
unmitigated arm and slots 1..k+1 the scaled levels.  Every cell's random
stream is derived from the master seed and the cell index by a counter-based
split, so cells can be generated in any order (or in parallel) with
bit-identical results.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllocationError, ModelError
from .models import MonomialBalanceModel, NoiseObservableModel, check_scaled_eps
from .rules import RichardsonRule, optimal_allocation

__all__ = [
    "MseBreakdown",
    "DeltaPoint",
    "CountTable",
    "exact_mse",
    "exact_delta",
    "exact_delta_curve",
    "integerize_allocation",
    "cell_stream",
    "mc_delta",
    "sample_count_table",
    "deltas_from_counts",
]

COUNTS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MseBreakdown:
    """Bias/variance decomposition of one estimator's MSE."""

    bias: float
    bias_sq: float
    variance: float
    mse: float
    estimator_tag: str  # "noisy" or "zne"


@dataclass(frozen=True)
class DeltaPoint:
    """MSE difference at one (eps, budget) cell."""

    eps: float
    budget: float
    delta: float
    source: str  # "exact" or "monte_carlo"
    std_err: float | None = None


def _resolve_alloc(model, rule: RichardsonRule, eps: float, realloc: str) -> np.ndarray:
    if realloc == "fixed":
        return np.asarray(rule.alloc)
    if realloc == "optimal":
        return np.asarray(optimal_allocation(rule, model, eps))
    raise ValueError(f"realloc must be 'fixed' or 'optimal', got {realloc!r}")


def exact_mse(
    model: NoiseObservableModel,
    rule: RichardsonRule | None,
    eps: float,
    budget: float,
    *,
    realloc: str = "fixed",
) -> MseBreakdown:
    """Exact MSE breakdown of the unmitigated (rule=None) or extrapolated estimator."""
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    mu0 = model.mean(0.0)
    if rule is None:
        bias = model.mean(eps) - mu0
        variance = model.variance(eps) / budget
        tag = "noisy"
    else:
        check_scaled_eps(model, eps, rule.scales)
        pi = _resolve_alloc(model, rule, eps, realloc)
        c = np.asarray(rule.coeffs)
        lam = np.asarray(rule.scales)
        means = np.asarray([model.mean(l * eps) for l in lam])
        variances = np.asarray([model.variance(l * eps) for l in lam])
        bias = float(c @ means) - mu0
        variance = float(np.sum(c**2 * variances / pi)) / budget
        tag = "zne"
    bias_sq = bias * bias
    return MseBreakdown(
        bias=bias, bias_sq=bias_sq, variance=variance, mse=bias_sq + variance,
        estimator_tag=tag,
    )


def exact_delta(
    model,
    rule: RichardsonRule | None,
    eps: float,
    budget: float,
    *,
    realloc: str = "fixed",
    excess_variance=None,
) -> DeltaPoint:
    """Exact MSE difference; monomial-balance models return their closed form.

    ``excess_variance`` is the hook for correlated sampling protocols: a
    callable ``A(eps)`` giving the budget-scaled variance excess of the
    extrapolated estimator over the unmitigated one.  When supplied it
    replaces the independent-sampling variance comparison, so the delta is
    the exact squared-bias difference minus ``A(eps)/budget``.  No
    correlation model ships with this package; independence across noise
    levels holds by construction everywhere else.
    """
    if isinstance(model, MonomialBalanceModel):
        return DeltaPoint(eps=eps, budget=budget, delta=model.delta_mse(eps, budget),
                          source="exact")
    if rule is None:  # the estimator compared against itself
        return DeltaPoint(eps=eps, budget=budget, delta=0.0, source="exact")
    noisy = exact_mse(model, None, eps, budget)
    zne = exact_mse(model, rule, eps, budget, realloc=realloc)
    if excess_variance is not None:
        delta = noisy.bias_sq - zne.bias_sq - float(excess_variance(eps)) / budget
    else:
        delta = noisy.mse - zne.mse
    return DeltaPoint(eps=eps, budget=budget, delta=delta, source="exact")


def exact_delta_curve(
    model,
    rule: RichardsonRule | None,
    eps_grid: Sequence[float],
    budget: float,
    *,
    realloc: str = "fixed",
) -> list[DeltaPoint]:
    """Exact delta at every grid point, at one fixed budget."""
    return [exact_delta(model, rule, float(e), budget, realloc=realloc) for e in eps_grid]


def integerize_allocation(alloc: Sequence[float], budget: int) -> np.ndarray:
    """Split an integer budget across levels by largest-remainder rounding.

    Every level gets at least one shot and the total equals the budget
    exactly; the distortion relative to the real-valued split is O(1) shots
    per level, i.e. an O(1/B^2) variance effect.
    """
    pi = np.asarray(alloc, dtype=float)
    budget = int(budget)
    if budget < pi.size:
        raise AllocationError(
            f"budget {budget} too small to give each of {pi.size} levels a shot"
        )
    raw = pi * budget
    shots = np.floor(raw).astype(np.int64)
    remainder = raw - shots
    deficit = budget - int(shots.sum())
    if deficit > 0:
        # ties broken by level index for determinism
        order = np.lexsort((np.arange(pi.size), -remainder))
        shots[order[:deficit]] += 1
    for idx in np.nonzero(shots == 0)[0]:
        shots[int(np.argmax(shots))] -= 1
        shots[idx] = 1
    assert int(shots.sum()) == budget and np.all(shots >= 1)
    return shots


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def cell_stream(
    master_seed: int, budget_idx: int, eps_idx: int, arm_slot: int, rep_idx: int
) -> np.random.Generator:
    """Counter-based random stream for one measurement cell.

    The Philox key is a hash of (master_seed, budget, eps, arm, replicate),
    so streams for distinct cells are independent and the table can be filled
    in any order, or concurrently, with identical results.  Arm slot 0 is the
    unmitigated arm; slot 1+j is scaled level j.
    """
    h = master_seed & _MASK64
    for part in (budget_idx, eps_idx, arm_slot, rep_idx):
        h = _splitmix64(h ^ ((part + 0x1F) & _MASK64))
    key = np.array([h, _splitmix64(h)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class CountTable:
    """Raw plus-counts for a full experiment grid.

    ``shots`` and ``plus`` have shape (n_budgets, n_eps, n_arms, n_reps)
    where arm slot 0 is the unmitigated arm at the base strength and slot
    1+j is the extrapolation level at ``scales[j] * eps``.  Per (budget,
    eps, replicate), the level shots sum to the budget and the unmitigated
    arm holds the full budget.
    """

    budgets: tuple[int, ...]
    eps_grids: tuple[tuple[float, ...], ...]  # one grid per budget, equal lengths
    scales: tuple[float, ...]
    shots: np.ndarray
    plus: np.ndarray
    master_seed: int
    model_spec: dict = field(default_factory=dict)
    rule_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (len(self.budgets), len(self.eps_grids[0]), len(self.scales) + 1)
        if self.shots.shape[:3] != expected or self.plus.shape != self.shots.shape:
            raise ValueError(
                f"count arrays have shape {self.shots.shape}, expected {expected} + reps"
            )
        if np.any(self.shots <= 0):
            raise AllocationError("count table contains cells with zero shots")
        if np.any(self.plus < 0) or np.any(self.plus > self.shots):
            raise ValueError("plus counts must lie in [0, shots]")

    @property
    def n_replicates(self) -> int:
        return self.shots.shape[3]

    def cell(self, budget_idx: int, eps_idx: int, scale_idx: int, rep_idx: int):
        """(shots, plus_count) for one cell; scale_idx -1 is the unmitigated arm."""
        return (
            int(self.shots[budget_idx, eps_idx, scale_idx + 1, rep_idx]),
            int(self.plus[budget_idx, eps_idx, scale_idx + 1, rep_idx]),
        )

    def header(self) -> dict:
        return {
            "schema_version": COUNTS_SCHEMA_VERSION,
            "model": self.model_spec,
            "rule": self.rule_spec,
            "budgets": list(self.budgets),
            "eps_grids": [list(g) for g in self.eps_grids],
            "scales": list(self.scales),
            "replicates": self.n_replicates,
            "master_seed": self.master_seed,
        }

    def write(self, csv_path, header_path) -> None:
        """Persist as a columnar CSV plus a JSON header."""
        with open(csv_path, "w", newline="") as fh:
            fh.write(f"# zneboundary-schema={COUNTS_SCHEMA_VERSION}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["budget_idx", "eps_idx", "scale_idx", "rep_idx", "shots", "plus_count"]
            )
            nb, ne, ns, nr = self.shots.shape
            for b in range(nb):
                for e in range(ne):
                    for s in range(ns):
                        for r in range(nr):
                            writer.writerow(
                                [b, e, s - 1, r,
                                 int(self.shots[b, e, s, r]),
                                 int(self.plus[b, e, s, r])]
                            )
        Path(header_path).write_text(json.dumps(self.header(), indent=2, sort_keys=True))

    @classmethod
    def read(cls, csv_path, header_path) -> "CountTable":
        header = json.loads(Path(header_path).read_text())
        budgets = tuple(int(b) for b in header["budgets"])
        eps_grids = tuple(tuple(float(x) for x in g) for g in header["eps_grids"])
        scales = tuple(float(s) for s in header["scales"])
        shape = (len(budgets), len(eps_grids[0]), len(scales) + 1, int(header["replicates"]))
        shots = np.zeros(shape, dtype=np.int64)
        plus = np.zeros(shape, dtype=np.int64)
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            for row in reader:
                b, e = int(row["budget_idx"]), int(row["eps_idx"])
                s, r = int(row["scale_idx"]) + 1, int(row["rep_idx"])
                shots[b, e, s, r] = int(row["shots"])
                plus[b, e, s, r] = int(row["plus_count"])
        return cls(
            budgets=budgets, eps_grids=eps_grids, scales=scales,
            shots=shots, plus=plus, master_seed=int(header["master_seed"]),
            model_spec=header.get("model", {}), rule_spec=header.get("rule", {}),
        )


def sample_count_table(
    model: NoiseObservableModel,
    rule: RichardsonRule,
    budgets: Sequence[int],
    eps_grids: Sequence[Sequence[float]],
    replicates: int,
    master_seed: int,
    *,
    realloc: str = "fixed",
) -> CountTable:
    """Draw the full raw-count table for an experiment grid."""
    if not isinstance(model, NoiseObservableModel):
        raise ModelError("model has no sampler")
    if replicates < 2:
        raise ValueError(f"need at least 2 replicates, got {replicates}")
    budgets = [int(b) for b in budgets]
    if len(eps_grids) != len(budgets):
        raise ValueError("need one eps grid per budget")
    n_eps = len(eps_grids[0])
    if any(len(g) != n_eps for g in eps_grids):
        raise ValueError("all per-budget eps grids must have equal length")

    n_arms = len(rule.scales) + 1
    shots = np.zeros((len(budgets), n_eps, n_arms, replicates), dtype=np.int64)
    plus = np.zeros_like(shots)
    for b_idx, budget in enumerate(budgets):
        for e_idx, eps in enumerate(eps_grids[b_idx]):
            eps = float(eps)
            check_scaled_eps(model, eps, rule.scales)
            pi = _resolve_alloc(model, rule, eps, realloc)
            level_shots = integerize_allocation(pi, budget)
            cell_shots = np.concatenate(([budget], level_shots))
            strengths = np.concatenate(([eps], np.asarray(rule.scales) * eps))
            for arm in range(n_arms):
                for rep in range(replicates):
                    rng = cell_stream(master_seed, b_idx, e_idx, arm, rep)
                    n = int(cell_shots[arm])
                    shots[b_idx, e_idx, arm, rep] = n
                    plus[b_idx, e_idx, arm, rep] = model.sample_counts(
                        float(strengths[arm]), n, rng
                    )
    return CountTable(
        budgets=tuple(budgets),
        eps_grids=tuple(tuple(float(x) for x in g) for g in eps_grids),
        scales=tuple(rule.scales),
        shots=shots,
        plus=plus,
        master_seed=int(master_seed),
        model_spec=model.spec(),
        rule_spec=rule.spec(),
    )


def deltas_from_counts(
    table: CountTable, coeffs: Sequence[float], mu0: float
) -> tuple[np.ndarray, np.ndarray]:
    """Replicate-averaged MSE differences from raw counts.

    Returns (delta, std_err), each of shape (n_budgets, n_eps).  Squared
    errors are measured against the exact ideal value ``mu0``, so the
    replicate mean is an unbiased estimate of the exact MSE difference.
    """
    mu_hat = 2.0 * table.plus / table.shots - 1.0
    c = np.asarray(coeffs)
    noisy_err = (mu_hat[:, :, 0, :] - mu0) ** 2
    zne_est = np.tensordot(mu_hat[:, :, 1:, :], c, axes=([2], [0]))
    zne_err = (zne_est - mu0) ** 2
    diff = noisy_err - zne_err
    delta = diff.mean(axis=2)
    std_err = diff.std(axis=2, ddof=1) / np.sqrt(table.n_replicates)
    return delta, std_err


def mc_delta(
    model: NoiseObservableModel,
    rule: RichardsonRule,
    eps: float,
    budget: int,
    replicates: int,
    master_seed: int,
    *,
    realloc: str = "fixed",
) -> tuple[DeltaPoint, CountTable]:
    """Monte Carlo MSE difference at a single (eps, budget) cell.

    The drawn counts are returned alongside the estimate so the raw data can
    be persisted and later bootstrap-resampled.
    """
    table = sample_count_table(
        model, rule, [budget], [[eps]], replicates, master_seed, realloc=realloc
    )
    mu0 = model.mean(0.0)
    delta, std_err = deltas_from_counts(table, rule.coeffs, mu0)
    point = DeltaPoint(
        eps=float(eps), budget=float(budget), delta=float(delta[0, 0]),
        source="monte_carlo", std_err=float(std_err[0, 0]),
    )
    return point, table
