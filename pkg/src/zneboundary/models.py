"""Exactly solvable noise-observable models.

Each sampled model exposes the true mean curve ``mu(eps)``, the true
single-shot variance ``v(eps)``, and a finite-shot sampler.  All sampled
models are binary (+/-1 outcomes), so ``v = 1 - mu^2`` holds exactly and a
measurement cell reduces to a single plus-count drawn from
``Binomial(shots, (1 + mu)/2)``.

For boundary-theory predictions every model declares its leading small-noise
behavior: the bias exponent ``p`` and signed amplitude ``A`` of
``mu(eps) - mu(0) = A eps^p + ...`` and the variance exponent ``q`` and level
``nu`` of ``v(eps) = nu eps^q + ...``.

Domains are enforced, never clamped: evaluating outside the valid range
raises :class:`~zneboundary.errors.DomainError` naming the violated bound,
since silent clamping would corrupt slope fits downstream.

:class:`MonomialBalanceModel` is different in kind: it has no mean curve or
sampler and instead defines the MSE difference directly as a monomial
balance with tunable remainder terms, so the crossing/fit stack can be
tested against exactly known boundaries.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ModelError

__all__ = [
    "NoiseObservableModel",
    "BinaryObservableModel",
    "LinearBiasBinary",
    "DeterministicLimitBinary",
    "ProductContractionString",
    "PowerLeakageBinary",
    "MonomialBalanceModel",
    "model_from_spec",
]


class NoiseObservableModel(ABC):
    """Behavior contract for sampled noise-observable models."""

    #: largest admissible noise strength (inclusive unless noted by the model)
    eps_max: float

    @abstractmethod
    def mean(self, eps: float) -> float:
        """True expectation of the observable at noise strength ``eps``."""

    @abstractmethod
    def variance(self, eps: float) -> float:
        """True single-shot variance at noise strength ``eps``."""

    @abstractmethod
    def sample_counts(self, eps: float, shots: int, rng: np.random.Generator) -> int:
        """Draw the number of +1 outcomes among ``shots`` single-shot samples."""

    # declared leading-order behavior, used by theory predictions
    @property
    @abstractmethod
    def bias_exponent(self) -> float:
        """Leading power p of mu(eps) - mu(0)."""

    @property
    @abstractmethod
    def bias_amplitude(self) -> float:
        """Signed coefficient A of the leading bias term A * eps^p."""

    @property
    @abstractmethod
    def variance_exponent(self) -> float:
        """Leading power q of v(eps)."""

    @property
    @abstractmethod
    def variance_level(self) -> float:
        """Coefficient nu of the leading variance term nu * eps^q."""

    @property
    def ideal_mean(self) -> float:
        return self.mean(0.0)

    @abstractmethod
    def spec(self) -> dict:
        """Round-trippable configuration spec ``{"type": ..., params...}``."""

    def declared(self) -> dict:
        """Declared leading-order constants, echoed into run reports."""
        return {
            "p": self.bias_exponent,
            "bias_amplitude": self.bias_amplitude,
            "q": self.variance_exponent,
            "nu": self.variance_level,
        }

    def check_eps(self, eps: float) -> None:
        if not (0.0 <= eps <= self.eps_max):
            raise DomainError(
                f"{type(self).__name__}: eps={eps!r} outside valid domain "
                f"[0, {self.eps_max!r}]",
                eps=eps,
            )


class BinaryObservableModel(NoiseObservableModel):
    """Base for +/-1 observables: exact variance identity and binomial sampler."""

    def variance(self, eps: float) -> float:
        mu = self.mean(eps)
        return 1.0 - mu * mu

    def sample_counts(self, eps: float, shots: int, rng: np.random.Generator) -> int:
        if shots < 1 or shots != int(shots):
            raise ModelError(f"shots must be a positive integer, got {shots!r}")
        p_plus = 0.5 * (1.0 + self.mean(eps))
        # guard roundoff at the deterministic endpoints
        p_plus = min(max(p_plus, 0.0), 1.0)
        return int(rng.binomial(int(shots), p_plus))


@dataclass(frozen=True)
class LinearBiasBinary(BinaryObservableModel):
    """Binary observable with exactly linear mean ``mu0 + alpha * eps``.

    Nonzero ideal variance (q = 0, nu = 1 - mu0^2); the stand-in for
    variational-energy style protocols.
    """

    mu0: float
    alpha: float

    def __post_init__(self):
        if not -1.0 < self.mu0 < 1.0:
            raise ConfigError(f"mu0 must lie in (-1, 1), got {self.mu0}")
        if self.alpha == 0.0:
            raise ConfigError("alpha must be nonzero")

    @property
    def eps_max(self) -> float:
        if self.alpha > 0:
            return (1.0 - self.mu0) / self.alpha
        return (-1.0 - self.mu0) / self.alpha

    def mean(self, eps: float) -> float:
        self.check_eps(eps)
        return self.mu0 + self.alpha * eps

    def check_eps(self, eps: float) -> None:
        if eps < 0 or abs(self.mu0 + self.alpha * eps) > 1.0:
            raise DomainError(
                f"LinearBiasBinary: |mu0 + alpha*eps| <= 1 violated at eps={eps!r}",
                eps=eps,
            )

    bias_exponent = property(lambda self: 1.0)
    bias_amplitude = property(lambda self: self.alpha)
    variance_exponent = property(lambda self: 0.0)
    variance_level = property(lambda self: 1.0 - self.mu0**2)

    def spec(self) -> dict:
        return {"type": "linear_bias_binary", "mu0": self.mu0, "alpha": self.alpha}


@dataclass(frozen=True)
class DeterministicLimitBinary(BinaryObservableModel):
    """Binary observable with ``mu(eps) = 1 - kappa * eps`` exactly.

    Deterministic ideal limit, so v(0) = 0 and v(eps) = 2 kappa eps -
    kappa^2 eps^2 gives q = 1 (stabilizer-measurement class).
    """

    kappa: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")

    @property
    def eps_max(self) -> float:
        return 2.0 / self.kappa  # mean reaches -1

    def mean(self, eps: float) -> float:
        self.check_eps(eps)
        return 1.0 - self.kappa * eps

    bias_exponent = property(lambda self: 1.0)
    bias_amplitude = property(lambda self: -self.kappa)
    variance_exponent = property(lambda self: 1.0)
    variance_level = property(lambda self: 2.0 * self.kappa)

    def spec(self) -> dict:
        return {"type": "deterministic_limit_binary", "kappa": self.kappa}


@dataclass(frozen=True)
class ProductContractionString(BinaryObservableModel):
    """Pauli-string observable under per-location contraction.

    ``ell`` active locations each attenuate the measured string by
    ``1 - gamma * eps``, giving ``mu(eps) = (1 - gamma*eps)^ell`` on the
    domain ``gamma * eps < 1``.  Leading leakage rate kappa = gamma * ell,
    so q = 1 with nu = 2 * gamma * ell.
    """

    gamma: float
    ell: int

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.ell < 1 or self.ell != int(self.ell):
            raise ConfigError(f"ell must be a positive integer, got {self.ell}")

    @property
    def eps_max(self) -> float:
        return 1.0 / self.gamma  # exclusive: the contraction must stay positive

    def check_eps(self, eps: float) -> None:
        if eps < 0 or self.gamma * eps >= 1.0:
            raise DomainError(
                f"ProductContractionString: gamma*eps < 1 violated at eps={eps!r} "
                f"(gamma={self.gamma})",
                eps=eps,
            )

    def mean(self, eps: float) -> float:
        self.check_eps(eps)
        return (1.0 - self.gamma * eps) ** self.ell

    bias_exponent = property(lambda self: 1.0)
    bias_amplitude = property(lambda self: -self.gamma * self.ell)
    variance_exponent = property(lambda self: 1.0)
    variance_level = property(lambda self: 2.0 * self.gamma * self.ell)

    def spec(self) -> dict:
        return {"type": "product_contraction_string", "gamma": self.gamma, "ell": self.ell}


@dataclass(frozen=True)
class PowerLeakageBinary(BinaryObservableModel):
    """Binary observable with power-law leakage ``mu = sigma (1 - kappa eps^r)``.

    Generalizes the deterministic-limit case to leading bias order r, giving
    q = r; with r above the rule order it exercises the uncancelled
    higher-order-bias regime.
    """

    sigma: int
    kappa: float
    r: float

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise ConfigError(f"sigma must be +1 or -1, got {self.sigma}")
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.r <= 0:
            raise ConfigError(f"r must be positive, got {self.r}")

    @property
    def eps_max(self) -> float:
        return (2.0 / self.kappa) ** (1.0 / self.r)  # |mean| reaches 1 again

    def mean(self, eps: float) -> float:
        self.check_eps(eps)
        return self.sigma * (1.0 - self.kappa * eps**self.r)

    bias_exponent = property(lambda self: self.r)
    bias_amplitude = property(lambda self: -self.sigma * self.kappa)
    variance_exponent = property(lambda self: self.r)
    variance_level = property(lambda self: 2.0 * self.kappa)

    def spec(self) -> dict:
        return {
            "type": "power_leakage_binary",
            "sigma": self.sigma,
            "kappa": self.kappa,
            "r": self.r,
        }


@dataclass(frozen=True)
class MonomialBalanceModel:
    """Direct monomial MSE-balance model with tunable remainders.

    Bypasses estimators entirely and defines

        delta_mse(eps, B) = d_p eps^(2p) - k_q eps^q / B
                            + l_b eps^(2p + delta_b) + l_v eps^(q + delta_v) / B

    so crossings, regimes, brackets, and convergence rates are exactly
    known.  It has no mean curve and no sampler.
    """

    p: int
    q: float
    d_p: float
    k_q: float
    l_b: float = 0.0
    l_v: float = 0.0
    delta_b: float = 1.0
    delta_v: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.p != int(self.p):
            raise ConfigError(f"p must be a positive integer, got {self.p}")
        if self.q < 0:
            raise ConfigError(f"q must be >= 0, got {self.q}")
        if self.d_p <= 0 or self.k_q <= 0:
            raise ConfigError("d_p and k_q must be positive")
        if self.l_b < 0 or self.l_v < 0:
            raise ConfigError("remainder amplitudes l_b, l_v must be >= 0")
        if self.delta_b <= 0 or self.delta_v <= 0:
            raise ConfigError("remainder exponents delta_b, delta_v must be positive")

    eps_max = float("inf")  # class attribute, not a constructor field

    def delta_mse(self, eps: float, budget: float) -> float:
        """Closed-form MSE difference (noisy minus extrapolated)."""
        bias_part = self.d_p * eps ** (2 * self.p)
        var_part = self.k_q * eps**self.q / budget
        rem = (
            self.l_b * eps ** (2 * self.p + self.delta_b)
            + self.l_v * eps ** (self.q + self.delta_v) / budget
        )
        return bias_part - var_part + rem

    def mean(self, eps: float) -> float:
        raise ModelError("MonomialBalanceModel has no mean curve")

    def variance(self, eps: float) -> float:
        raise ModelError("MonomialBalanceModel has no variance curve")

    def sample_counts(self, eps: float, shots: int, rng) -> int:
        raise ModelError("model has no sampler")

    def crossing(self, budget: float) -> float:
        """Exact leading-balance crossing ``(k_q / (d_p B))^(1/(2p-q))``.

        Only the zero-remainder closed form; with remainders present use the
        crossing finder on the exact curve.
        """
        if self.l_b or self.l_v:
            raise ModelError("closed-form crossing requires zero remainders")
        if self.q >= 2 * self.p:
            raise ModelError("no shrinking crossing for q >= 2p")
        return (self.k_q / (self.d_p * budget)) ** (1.0 / (2 * self.p - self.q))

    def declared(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "d_p": self.d_p,
            "k_q": self.k_q,
            "l_b": self.l_b,
            "l_v": self.l_v,
            "delta_b": self.delta_b,
            "delta_v": self.delta_v,
        }

    def spec(self) -> dict:
        return {"type": "monomial_balance", **self.declared()}


_REGISTRY = {
    "linear_bias_binary": (LinearBiasBinary, ("mu0", "alpha")),
    "deterministic_limit_binary": (DeterministicLimitBinary, ("kappa",)),
    "product_contraction_string": (ProductContractionString, ("gamma", "ell")),
    "power_leakage_binary": (PowerLeakageBinary, ("sigma", "kappa", "r")),
    "monomial_balance": (
        MonomialBalanceModel,
        ("p", "q", "d_p", "k_q", "l_b", "l_v", "delta_b", "delta_v"),
    ),
}

_OPTIONAL_PARAMS = {"l_b", "l_v", "delta_b", "delta_v"}


def model_from_spec(spec: dict):
    """Instantiate a model from its configuration spec."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"model spec must be a mapping with a 'type' key, got {spec!r}")
    kind = spec["type"]
    if kind not in _REGISTRY:
        raise ConfigError(
            f"unknown model type {kind!r}; known: {sorted(_REGISTRY)}"
        )
    cls, params = _REGISTRY[kind]
    given = {k: v for k, v in spec.items() if k != "type"}
    unknown = set(given) - set(params)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)} for model {kind!r}")
    missing = set(params) - set(given) - _OPTIONAL_PARAMS
    if missing:
        raise ConfigError(f"missing parameters {sorted(missing)} for model {kind!r}")
    if "ell" in given:
        given["ell"] = int(given["ell"])
    if "sigma" in given:
        given["sigma"] = int(given["sigma"])
    if "p" in given:
        given["p"] = int(given["p"])
    return cls(**given)


def is_sampled(model) -> bool:
    """True for models with a mean curve and sampler."""
    return isinstance(model, NoiseObservableModel)


def scaled_domain_max(model, scales) -> float:
    """Largest base eps whose scaled levels all stay in the model's domain."""
    lam_max = max(scales) if scales else 1.0
    return model.eps_max / lam_max


def check_scaled_eps(model, eps: float, scales) -> None:
    """Reject eps if any scaled level lies outside the model's domain."""
    for lam in scales:
        try:
            model.check_eps(lam * eps)
        except DomainError as err:
            raise DomainError(
                f"scaled strength lambda*eps out of domain at (eps={eps!r}, "
                f"lambda={lam!r}): {err}",
                eps=eps,
                scale=lam,
            ) from err
