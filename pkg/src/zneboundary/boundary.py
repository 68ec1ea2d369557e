"""Locating and classifying the lower help-harm crossing.

The MSE difference of a fixed rule against the unmitigated estimator has the
local balance ``delta(eps, B) = D_p eps^(2p) - K_q eps^q / B + remainders``.
Three regimes follow from the exponents alone:

    q < 2p   subcritical: shrinking boundary eps*(B) ~ C_pq B^(-1/(2p-q)),
             C_pq = (K_q / D_p)^(1/(2p-q));
    q = 2p   critical: a budget threshold B* = K_q / D_p, no shrinking law;
    q > 2p   supercritical: no leading-order shrinking lower boundary.

Crossings are estimated on a pre-specified grid as the first sign change
from strictly negative to positive, interpolated linearly in eps; budgets
without a qualifying sign change are reported as censored, never guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RegimeError
from .models import MonomialBalanceModel, scaled_domain_max
from .mse import DeltaPoint, exact_delta
from .rules import RichardsonRule, variance_penalty

__all__ = [
    "CrossingEstimate",
    "RegimeReport",
    "BudgetBracket",
    "LocalOptimalityResult",
    "find_crossing",
    "find_crossing_arrays",
    "classify_regime",
    "theoretical_boundary",
    "budget_bracket",
    "local_optimality_check",
    "auto_window",
    "geometric_grid",
]

STATUS_CROSSED = "crossed"
STATUS_NO_NEGATIVE = "no_negative_region"
STATUS_NO_CROSSING = "no_crossing_in_window"


@dataclass(frozen=True)
class CrossingEstimate:
    """Lower crossing at one budget, or the censoring status if none."""

    budget: float
    eps_star: float | None
    status: str
    bracket_lo: float | None = None
    bracket_hi: float | None = None

    @property
    def crossed(self) -> bool:
        return self.status == STATUS_CROSSED


@dataclass(frozen=True)
class RegimeReport:
    """(p, q) regime classification with the theory constants it implies."""

    p: float
    q: float
    regime: str  # "subcritical" | "critical" | "supercritical"
    d_p: float
    k_q: float
    c_pq: float | None = None
    exponent: float | None = None  # -1/(2p - q), subcritical only
    b_star: float | None = None    # K_q / D_p, critical only
    eta: float | None = None       # min(delta_b, delta_v)/(2p - q) if declared

    def predicted_eps_star(self, budget: float) -> float:
        if self.regime != "subcritical":
            raise RegimeError(f"no shrinking boundary in the {self.regime} regime")
        return self.c_pq * budget**self.exponent

    def as_dict(self) -> dict:
        return {
            "p": self.p, "q": self.q, "regime": self.regime,
            "d_p": self.d_p, "k_q": self.k_q, "c_pq": self.c_pq,
            "exponent": self.exponent, "b_star": self.b_star, "eta": self.eta,
        }


def find_crossing_arrays(
    eps: np.ndarray, delta: np.ndarray, budget: float
) -> CrossingEstimate:
    """First harm-to-help sign change on a delta curve at fixed budget.

    Requires at least one strictly negative value before the crossing (a
    zero at the origin of zero-variance models is not a boundary).  An exact
    zero at the upper bracket point is treated as the crossing itself.
    """
    eps = np.asarray(eps, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if eps.size != delta.size:
        raise ValueError("eps and delta must have equal length")
    if eps.size < 3:
        raise ValueError(f"need at least 3 grid points, got {eps.size}")
    if np.any(np.diff(eps) <= 0):
        raise ValueError("eps grid must be strictly increasing")

    negative = np.nonzero(delta < 0)[0]
    if negative.size == 0:
        return CrossingEstimate(budget=budget, eps_star=None, status=STATUS_NO_NEGATIVE)
    for i in range(int(negative[0]), eps.size - 1):
        lo, hi = delta[i], delta[i + 1]
        if lo < 0 <= hi:
            if hi == 0.0:
                eps_star = float(eps[i + 1])
            else:
                eps_star = float(eps[i] + (eps[i + 1] - eps[i]) * (-lo) / (hi - lo))
            return CrossingEstimate(
                budget=budget, eps_star=eps_star, status=STATUS_CROSSED,
                bracket_lo=float(eps[i]), bracket_hi=float(eps[i + 1]),
            )
    return CrossingEstimate(budget=budget, eps_star=None, status=STATUS_NO_CROSSING)


def find_crossing(points: Sequence[DeltaPoint]) -> CrossingEstimate:
    """Array wrapper taking the delta curve as DeltaPoint records."""
    if not points:
        raise ValueError("empty delta curve")
    budgets = {p.budget for p in points}
    if len(budgets) != 1:
        raise ValueError(f"delta curve mixes budgets {sorted(budgets)}")
    eps = np.asarray([p.eps for p in points])
    delta = np.asarray([p.delta for p in points])
    return find_crossing_arrays(eps, delta, budget=budgets.pop())


def classify_regime(
    p: float,
    q: float,
    d_p: float,
    k_q: float,
    delta_b: float | None = None,
    delta_v: float | None = None,
) -> RegimeReport:
    """Classify the local regime from the leading-balance constants.

    Criticality compares q against 2p exactly; callers working from fitted
    exponents should round to the intended rational values first.
    """
    if p < 1:
        raise RegimeError(f"bias exponent p must be >= 1, got {p}")
    if q < 0:
        raise RegimeError(f"variance exponent q must be >= 0, got {q}")
    if k_q <= 0:
        raise RegimeError(f"variance penalty K must be positive, got {k_q}")
    if d_p <= 0:
        raise RegimeError(
            f"no leading bias improvement (D_p = {d_p:.6g} <= 0); "
            "the boundary may disappear or reverse at this order"
        )
    eta = None
    if delta_b is not None and delta_v is not None and q < 2 * p:
        eta = min(delta_b, delta_v) / (2 * p - q)
    if q < 2 * p:
        r = 1.0 / (2 * p - q)
        return RegimeReport(
            p=p, q=q, regime="subcritical", d_p=d_p, k_q=k_q,
            c_pq=(k_q / d_p) ** r, exponent=-r, eta=eta,
        )
    if q == 2 * p:
        return RegimeReport(
            p=p, q=q, regime="critical", d_p=d_p, k_q=k_q, b_star=k_q / d_p,
        )
    return RegimeReport(p=p, q=q, regime="supercritical", d_p=d_p, k_q=k_q)


def theoretical_boundary(
    model,
    rule: RichardsonRule | None,
    *,
    allocation: str = "fixed",
) -> RegimeReport:
    """Regime report predicted from a model's declared constants and a rule.

    For sampled models the leading squared-bias improvement is
    ``D_p = A_p^2 (1 - rho_p^2)`` with ``rho_p = sum_j c_j lam_j^p`` (zero
    whenever p <= rule order), and the variance penalty comes from the
    declared (q, nu) via the rule; ``allocation="optimal"`` uses the
    optimal-allocation penalty instead of the rule's own.
    """
    if isinstance(model, MonomialBalanceModel):
        return classify_regime(
            model.p, model.q, model.d_p, model.k_q,
            delta_b=model.delta_b if model.l_b else None,
            delta_v=model.delta_v if model.l_v else None,
        )
    if rule is None:
        raise RegimeError("a rule is required for sampled models")
    p = model.bias_exponent
    amp = model.bias_amplitude
    lam = np.asarray(rule.scales)
    c = np.asarray(rule.coeffs)
    rho_p = float(c @ lam**p)
    if abs(rho_p) >= 1.0:
        raise RegimeError(
            f"no shrinking lower boundary at this order: |rho_p| = {abs(rho_p):.6g} >= 1 "
            f"for p = {p}"
        )
    d_p = amp * amp * (1.0 - rho_p * rho_p)
    pen = variance_penalty(rule, model.variance_exponent, model.variance_level)
    k_q = pen.k_fixed if allocation == "fixed" else pen.k_opt
    return classify_regime(p, model.variance_exponent, d_p, k_q)


@dataclass(frozen=True)
class BudgetBracket:
    """Finite-budget bracket around the subcritical boundary.

    For budgets at or above ``b0`` the exact MSE difference is negative at
    ``eps_lo(B) = (1-rho) C B^(-r)`` and positive at
    ``eps_hi(B) = (1+rho) C B^(-r)``, so a crossing is certified in between.
    """

    rho: float
    r: float
    x_minus: float
    x_plus: float
    m_rho: float
    b0: float

    def eps_lo(self, budget: float) -> float:
        return self.x_minus * budget ** (-self.r)

    def eps_hi(self, budget: float) -> float:
        return self.x_plus * budget ** (-self.r)


def budget_bracket(
    regime: RegimeReport,
    rho: float,
    l_b: float,
    l_v: float,
    delta_b: float,
    delta_v: float,
    eps0: float,
) -> BudgetBracket:
    """Certified bracket from remainder bounds |R| <= l_b eps^(2p+db) + l_v eps^(q+dv)/B."""
    if regime.regime != "subcritical":
        raise RegimeError(f"bracketing requires the subcritical regime, got {regime.regime}")
    if not 0 < rho < 1:
        raise RegimeError(f"rho must lie in (0, 1), got {rho}")
    if l_b < 0 or l_v < 0:
        raise RegimeError("remainder amplitudes must be >= 0")
    if delta_b <= 0 or delta_v <= 0:
        raise RegimeError("remainder exponents must be positive")
    if eps0 <= 0:
        raise RegimeError(f"domain bound eps0 must be positive, got {eps0}")
    p, q, d, k, c = regime.p, regime.q, regime.d_p, regime.k_q, regime.c_pq
    r = -regime.exponent
    x_minus = (1 - rho) * c
    x_plus = (1 + rho) * c
    m_rho = min(
        k * x_minus**q - d * x_minus ** (2 * p),
        d * x_plus ** (2 * p) - k * x_plus**q,
    )
    if m_rho <= 0:
        raise RegimeError(
            f"sign margin is not positive (m_rho = {m_rho:.3e}); increase rho"
        )
    terms = [(x_plus / eps0) ** (1.0 / r)]
    if l_b > 0:
        terms.append((4 * l_b * x_plus ** (2 * p + delta_b) / m_rho) ** (1.0 / (r * delta_b)))
    if l_v > 0:
        terms.append((4 * l_v * x_plus ** (q + delta_v) / m_rho) ** (1.0 / (r * delta_v)))
    return BudgetBracket(
        rho=rho, r=r, x_minus=x_minus, x_plus=x_plus, m_rho=m_rho, b0=max(terms),
    )


@dataclass(frozen=True)
class LocalOptimalityResult:
    """Sign check of the MSE difference along a faster-shrinking schedule."""

    s_prime: float
    passed: bool
    onset_budget: float | None
    budgets: tuple[float, ...]
    deltas: tuple[float, ...]


def local_optimality_check(
    model,
    rule: RichardsonRule | None,
    regime: RegimeReport,
    s_prime: float,
    budgets: Sequence[float],
    *,
    realloc: str = "fixed",
) -> LocalOptimalityResult:
    """Check that eps_B = B^(-s') stays in the harm region for large budgets.

    A schedule shrinking strictly faster than the boundary scale (s' > r)
    must give a negative exact MSE difference for every budget past some
    onset; the result reports that onset and the evaluated deltas.
    """
    if regime.regime != "subcritical":
        raise RegimeError(f"check requires the subcritical regime, got {regime.regime}")
    r = -regime.exponent
    if not s_prime > r:
        raise RegimeError(f"schedule exponent s'={s_prime} must exceed r={r}")
    budgets = sorted(float(b) for b in budgets)
    deltas = []
    for b in budgets:
        eps_b = b ** (-s_prime)
        deltas.append(exact_delta(model, rule, eps_b, b, realloc=realloc).delta)
    onset = None
    for i, d in enumerate(deltas):
        if all(x < 0 for x in deltas[i:]):
            onset = budgets[i]
            break
    return LocalOptimalityResult(
        s_prime=s_prime, passed=onset is not None, onset_budget=onset,
        budgets=tuple(budgets), deltas=tuple(deltas),
    )


def geometric_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """Strictly increasing geometric grid with n points on [lo, hi]."""
    if not 0 < lo < hi:
        raise ValueError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    if n < 3:
        raise ValueError(f"need at least 3 grid points, got {n}")
    return np.geomspace(lo, hi, n)


def auto_window(
    model,
    rule: RichardsonRule | None,
    budget: float,
    *,
    span: tuple[float, float] = (0.1, 10.0),
    points_per_decade: int = 40,
) -> np.ndarray:
    """Per-budget grid centered on the coarse theoretical boundary guess.

    The window is ``[span[0] * C B^(-r), span[1] * C B^(-r)]``, fixed by the
    declared model constants before any data is seen, and truncated to keep
    every scaled level inside the model's domain.  Every budget gets the
    same number of points, so crossings resolve with equal relative
    resolution across the ladder.
    """
    regime = theoretical_boundary(model, rule)
    if regime.regime != "subcritical":
        raise RegimeError(
            f"auto window needs a shrinking boundary; regime is {regime.regime}"
        )
    guess = regime.predicted_eps_star(budget)
    lo, hi = span[0] * guess, span[1] * guess
    scales = rule.scales if rule is not None else (1.0,)
    domain_hi = scaled_domain_max(model, scales) * (1 - 1e-9)
    if math.isfinite(domain_hi):
        hi = min(hi, domain_hi)
    if not lo < hi:
        raise RegimeError(
            f"auto window [{lo:.3e}, {hi:.3e}] collapsed under the domain bound"
        )
    n = max(3, int(round(points_per_decade * math.log10(hi / lo))))
    return geometric_grid(lo, hi, n)
