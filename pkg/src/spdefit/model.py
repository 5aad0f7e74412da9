"""Spectral model of a linear diagonalizable parabolic SPDE.

The equation ``du + (theta*A1 + A0) u dt = sigma dW`` is described entirely by
the eigenvalue sequences of the two operators on the shared eigenbasis:
``nu_k`` (eigenvalues of A1, assumed nonnegative), ``rho_k`` (eigenvalues of
A0), and the noise coloring ``lambda_k^{-gamma}`` with
``lambda_k = nu_k^(1/(2m))``.  Mode k then decays at rate
``mu_k(theta) = theta*nu_k + rho_k``.

Two concrete families are provided:

* :func:`fractional_heat_model` - fractional heat equation with the unknown
  coefficient on the leading operator (Dirichlet Laplacian powers).
* :func:`lower_order_model` - heat equation with the unknown coefficient on
  the zero-order term.

For dimensions d >= 2 only the Weyl growth rate of the Laplacian spectrum is
universal, so those models use the surrogate ``|tau_k| = c1 * k^(2/d)`` with a
user-supplied constant c1; for d = 1 the exact Dirichlet spectrum on the unit
interval is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DIVERGES = "diverges"
CONVERGES = "converges"
UNDETERMINED = "undetermined"


class SingularNoiseError(ValueError):
    """Raised when lambda_k^(-gamma) is evaluated with nu_k = 0 and gamma > 0."""


# --------------------------------------------------------------------------
# eigenvalue / initial-condition sequences (picklable callables)


@dataclass(frozen=True)
class ScaledPowerSequence:
    """k -> (scale * k**inner) ** outer, vectorized over integer arrays."""

    scale: float
    inner: float
    outer: float

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = (self.scale * k**self.inner) ** self.outer
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConstantSequence:
    value: float

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return self.value
        return np.full(k.shape, self.value)


@dataclass(frozen=True)
class ZeroInitial:
    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return 0.0 if k.ndim == 0 else np.zeros(k.shape)


@dataclass(frozen=True)
class PowerInitial:
    """u_k(0) = amplitude * k**(-decay); square-summable needs decay > 1/2."""

    amplitude: float
    decay: float

    def __post_init__(self):
        if self.decay <= 0.5:
            raise ValueError("power initial condition needs decay > 1/2")

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = self.amplitude * k ** (-self.decay)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExplicitInitial:
    """Finitely many nonzero initial coefficients, zero beyond."""

    values: tuple

    def __call__(self, k):
        k = np.asarray(k)
        vals = np.asarray(self.values, dtype=float)
        idx = k.astype(int)
        out = np.where((idx >= 1) & (idx <= len(vals)),
                       vals[np.clip(idx - 1, 0, len(vals) - 1)], 0.0)
        return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpdeModel:
    """Everything needed to simulate and estimate one diagonalizable SPDE.

    All fields are immutable and the sequence callables are pure functions of
    the index, so a model can be shared freely between worker processes.
    Evaluating nu(k) twice always yields the identical float.
    """

    nu: Callable
    rho: Callable
    gamma: float
    m: float
    sigma: float
    theta_true: float
    theta_domain: tuple[float, float] = (0.1, 10.0)
    u0: Callable = field(default_factory=ZeroInitial)
    family: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.theta_domain
        if not (0.0 < lo <= hi):
            raise ValueError("theta_domain must satisfy 0 < lo <= hi")
        if self.m <= 0:
            raise ValueError("order parameter m must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.theta_true <= 0:
            raise ValueError("theta_true must be positive")


def sequence_values(fn: Callable, ks: np.ndarray) -> np.ndarray:
    """Evaluate an index sequence over an array of indices.

    The built-in sequences are numpy-polymorphic; scalar-only user callables
    are evaluated pointwise as a fallback.
    """
    try:
        out = np.asarray(fn(ks), dtype=float)
        if out.shape == np.shape(ks):
            return out
        if out.ndim == 0:
            return np.full(np.shape(ks), float(out))
    except Exception:
        pass
    return np.array([float(fn(int(k))) for k in ks])


def mu(model: SpdeModel, k, theta: float):
    """Decay rate of mode k: theta*nu_k + rho_k."""
    return theta * model.nu(k) + model.rho(k)


def lam(model: SpdeModel, k):
    """Noise length scale lambda_k = nu_k**(1/(2m))."""
    return model.nu(k) ** (1.0 / (2.0 * model.m))


def noise_factor(model: SpdeModel, k):
    """lambda_k**(-gamma), the spatial coloring of the noise on mode k."""
    if model.gamma == 0.0:
        k = np.asarray(k, dtype=float)
        return 1.0 if k.ndim == 0 else np.ones(k.shape)
    nu_k = np.asarray(model.nu(k), dtype=float)
    if np.any(nu_k <= 0.0):
        raise SingularNoiseError(
            "lambda_k^(-gamma) is singular: nu_k = 0 with gamma > 0")
    out = nu_k ** (-model.gamma / (2.0 * model.m))
    return float(out) if out.ndim == 0 else out


def noise_scale(model: SpdeModel, k):
    """Per-mode noise amplitude sigma * lambda_k**(-gamma)."""
    return model.sigma * noise_factor(model, k)


# --------------------------------------------------------------------------
# model families


def fractional_heat_model(d: int, beta: float, gamma: float = 0.0,
                          sigma: float = 1.0, theta: float = 1.0,
                          c1: float = 1.0, exact_1d: bool = False,
                          theta_domain: tuple[float, float] = (0.1, 10.0),
                          u0: Callable | None = None) -> SpdeModel:
    """Fractional heat equation: unknown coefficient on (-Laplacian)**beta.

    rho_k = 0 and nu_k = |tau_k|**beta with |tau_k| the Dirichlet Laplacian
    spectrum.  With ``exact_1d`` on the unit interval, tau_k = -(pi*k)**2;
    otherwise the Weyl surrogate |tau_k| = c1 * k**(2/d) is used.  m = beta,
    so lambda_k = sqrt(|tau_k|).
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if exact_1d and d != 1:
        raise ValueError("exact spectrum only available for d = 1")
    if exact_1d:
        nu = ScaledPowerSequence(scale=math.pi, inner=1.0, outer=2.0 * beta)
    else:
        nu = ScaledPowerSequence(scale=c1, inner=2.0 / d, outer=beta)
    return SpdeModel(
        nu=nu, rho=ConstantSequence(0.0), gamma=gamma, m=beta, sigma=sigma,
        theta_true=theta, theta_domain=theta_domain,
        u0=u0 if u0 is not None else ZeroInitial(),
        family="fractional_heat",
        params={"d": d, "beta": beta, "gamma": gamma, "c1": c1,
                "exact_1d": bool(exact_1d)},
    )


def lower_order_model(d: int, sigma: float = 1.0, theta: float = 1.0,
                      c1: float = 1.0, exact_1d: bool = False,
                      theta_domain: tuple[float, float] = (0.1, 10.0),
                      u0: Callable | None = None) -> SpdeModel:
    """Heat equation with the unknown coefficient on the zero-order term.

    nu_k = 1, gamma = 0, and rho_k = |tau_k| so mu_k(theta) = theta + rho_k.
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    if exact_1d and d != 1:
        raise ValueError("exact spectrum only available for d = 1")
    if exact_1d:
        rho = ScaledPowerSequence(scale=math.pi**2, inner=2.0, outer=1.0)
    else:
        rho = ScaledPowerSequence(scale=c1, inner=2.0 / d, outer=1.0)
    return SpdeModel(
        nu=ConstantSequence(1.0), rho=rho, gamma=0.0, m=1.0, sigma=sigma,
        theta_true=theta, theta_domain=theta_domain,
        u0=u0 if u0 is not None else ZeroInitial(),
        family="lower_order",
        params={"d": d, "c1": c1, "exact_1d": bool(exact_1d)},
    )


# --------------------------------------------------------------------------
# structural assumption checks (finite-prefix heuristics, non-fatal)


@dataclass
class AssumptionReport:
    ok: bool
    violations: list[str]
    warnings: list[str]
    sup_nu_over_mu: float
    first_positive_mu_index: int | None
    mu_tail_increasing: bool
    nu_constant: bool
    u0_squared_partial_sum: float
    prefix_length: int


def check_assumptions(model: SpdeModel, K: int,
                      c0_hint: float | None = None) -> AssumptionReport:
    """Check the structural assumptions on the first K modes.

    The checks are finite-prefix heuristics: a clean report cannot prove the
    infinite-sequence assumptions, it only fails to falsify them.  Both
    endpoints of the admissible interval are inspected.
    """
    if K < 2:
        raise ValueError("need K >= 2 modes to check trends")
    ks = np.arange(1, K + 1)
    nu = sequence_values(model.nu, ks)
    rho = sequence_values(model.rho, ks)
    violations: list[str] = []
    warnings: list[str] = []

    if np.any(nu < 0):
        violations.append("nu_k < 0 at k=%d" % int(ks[np.argmax(nu < 0)]))

    sup_ratio = -math.inf
    first_pos: int | None = None
    tail_increasing = True
    for theta in model.theta_domain:
        mu_vals = theta * nu + rho
        nonpos = np.nonzero(mu_vals <= 0)[0]
        j = int(nonpos[-1]) + 2 if nonpos.size else 1
        first_pos = j if first_pos is None else max(first_pos, j)
        if j > K:
            violations.append(
                "mu_k(theta=%g) is nonpositive at the end of the prefix" % theta)
            continue
        tail = mu_vals[max(j - 1, (3 * K) // 4):]
        if tail.size >= 2 and not np.all(np.diff(tail) >= 0):
            tail_increasing = False
            warnings.append(
                "mu_k(theta=%g) is not nondecreasing on the tail of the prefix"
                % theta)
        with np.errstate(divide="ignore"):
            ratios = nu[j - 1:] / mu_vals[j - 1:]
        sup_ratio = max(sup_ratio, float(np.max(ratios)) if ratios.size else -math.inf)

    nu_constant = bool(np.all(nu == nu[0]))
    if nu_constant:
        # Divergence of nu_k is formally assumed but constant-nu models are
        # used in practice; flag softly instead of rejecting.
        warnings.append("nu_k is constant over the prefix (divergence "
                        "assumption not satisfied; treated as a soft warning)")
    elif nu[-1] <= nu[(K - 1) // 2]:
        warnings.append("nu_k shows no growth trend over the prefix")

    if c0_hint is not None and sup_ratio > c0_hint:
        warnings.append("sup nu_k/mu_k = %.6g exceeds the hinted c0 = %.6g"
                        % (sup_ratio, c0_hint))

    u0_vals = sequence_values(model.u0, ks)
    u0_sum = float(np.sum(u0_vals**2))

    return AssumptionReport(
        ok=not violations,
        violations=violations,
        warnings=warnings,
        sup_nu_over_mu=sup_ratio,
        first_positive_mu_index=first_pos,
        mu_tail_increasing=tail_increasing,
        nu_constant=nu_constant,
        u0_squared_partial_sum=u0_sum,
        prefix_length=K,
    )


# --------------------------------------------------------------------------
# divergence conditions for consistency / asymptotic normality


@dataclass
class ExponentVerdict:
    consistency_diverges: bool
    normality_diverges: bool
    note: str


@dataclass
class ConditionReport:
    """Classification of the two series whose divergence drives the limits.

    S1 = sum nu_k^2 lambda_k^(-4 gamma) / mu_k(theta)^2   (consistency)
    S2 = sum nu_k^2 lambda_k^(-8 gamma) / mu_k(theta)^3   (normality)
    """

    consistency_diverges: str
    normality_diverges: str
    partial_sums: list[tuple[int, float, float]]
    exponent_verdict: ExponentVerdict | None


def _analytic_verdict(model: SpdeModel) -> ExponentVerdict | None:
    if model.family == "fractional_heat":
        d = model.params["d"]
        beta = model.params["beta"]
        gamma = model.params["gamma"]
        # series exponents: S1 ~ k^(-4 gamma/d), S2 ~ k^(-(2 beta + 8 gamma)/d);
        # sum k^(-p) diverges iff p <= 1, boundary included
        return ExponentVerdict(
            consistency_diverges=4.0 * gamma <= d,
            normality_diverges=2.0 * beta + 8.0 * gamma <= d,
            note="power-law test: consistency iff 4*gamma <= d, "
                 "normality iff 2*beta + 8*gamma <= d",
        )
    if model.family == "lower_order":
        d = model.params["d"]
        return ExponentVerdict(
            consistency_diverges=d >= 4,
            normality_diverges=d >= 6,
            note="power-law test: consistency iff d >= 4, normality iff d >= 6",
        )
    return None


def check_divergence(model: SpdeModel, theta: float, K: int) -> ConditionReport:
    """Partial sums of the divergence conditions plus, where the model family
    has known power-law spectra, the exact exponent classification."""
    if K < 10:
        raise ValueError("need K >= 10 for meaningful partial sums")
    ks = np.arange(1, K + 1)
    nu = sequence_values(model.nu, ks)
    mu_vals = theta * nu + sequence_values(model.rho, ks)
    lam_neg = np.asarray(noise_factor(model, ks), dtype=float) * np.ones(K)
    s1_terms = nu**2 * lam_neg**4 / mu_vals**2
    s2_terms = nu**2 * lam_neg**8 / mu_vals**3
    s1 = np.cumsum(s1_terms)
    s2 = np.cumsum(s2_terms)

    marks = sorted({max(10, K // 16), max(10, K // 4), max(10, K // 2), K})
    partial = [(int(kk), float(s1[kk - 1]), float(s2[kk - 1])) for kk in marks]

    verdict = _analytic_verdict(model)
    if verdict is not None:
        cons = DIVERGES if verdict.consistency_diverges else CONVERGES
        norm = DIVERGES if verdict.normality_diverges else CONVERGES
    else:
        cons = norm = UNDETERMINED
    return ConditionReport(
        consistency_diverges=cons,
        normality_diverges=norm,
        partial_sums=partial,
        exponent_verdict=verdict,
    )


# --------------------------------------------------------------------------
# JSON config round-trip


def u0_from_config(cfg: dict | None) -> Callable:
    if cfg is None:
        return ZeroInitial()
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        return ZeroInitial()
    if kind == "power":
        return PowerInitial(amplitude=float(cfg.get("amplitude", 1.0)),
                            decay=float(cfg.get("decay", 1.0)))
    if kind == "explicit":
        return ExplicitInitial(values=tuple(float(v) for v in cfg["values"]))
    raise ValueError("unknown u0 kind: %r" % kind)


def u0_to_config(u0: Callable) -> dict:
    if isinstance(u0, ZeroInitial):
        return {"kind": "zero"}
    if isinstance(u0, PowerInitial):
        return {"kind": "power", "amplitude": u0.amplitude, "decay": u0.decay}
    if isinstance(u0, ExplicitInitial):
        return {"kind": "explicit", "values": list(u0.values)}
    raise ValueError("initial condition %r is not JSON-serializable" % (u0,))


def model_from_config(cfg: dict) -> SpdeModel:
    """Build a model from the JSON schema used by configs and the CLI."""
    cfg = dict(cfg)
    family = cfg.pop("family")
    u0 = u0_from_config(cfg.pop("u0", None))
    domain = tuple(cfg.pop("theta_domain", (0.1, 10.0)))
    if family == "fractional_heat":
        return fractional_heat_model(
            d=int(cfg["d"]), beta=float(cfg["beta"]),
            gamma=float(cfg.get("gamma", 0.0)), sigma=float(cfg.get("sigma", 1.0)),
            theta=float(cfg.get("theta", 1.0)), c1=float(cfg.get("c1", 1.0)),
            exact_1d=bool(cfg.get("exact_1d", False)),
            theta_domain=domain, u0=u0)
    if family == "lower_order":
        return lower_order_model(
            d=int(cfg["d"]), sigma=float(cfg.get("sigma", 1.0)),
            theta=float(cfg.get("theta", 1.0)), c1=float(cfg.get("c1", 1.0)),
            exact_1d=bool(cfg.get("exact_1d", False)),
            theta_domain=domain, u0=u0)
    raise ValueError("unknown model family: %r" % family)


def model_to_config(model: SpdeModel) -> dict:
    if model.family not in ("fractional_heat", "lower_order"):
        raise ValueError("only the built-in families are JSON-serializable")
    cfg = {"family": model.family, "sigma": model.sigma,
           "theta": model.theta_true,
           "theta_domain": list(model.theta_domain),
           "u0": u0_to_config(model.u0)}
    cfg.update(model.params)
    if model.family == "fractional_heat":
        cfg.setdefault("gamma", model.gamma)
    return cfg
