"""Epstein-Zin recursive preferences and the Black-Scholes-Merton market.

An agent with Epstein-Zin stochastic differential utility is described by the
parameter vector (b, delta, R, S):

    b     > 0   scale (no effect on preferences, kept for unit conventions)
    delta       subjective discount rate (any sign; accounting units may flip it)
    R     > 0   relative risk aversion, R != 1
    S     > 0   elasticity of intertemporal complementarity, S != 1

with derived quantities

    theta = (1 - R) / (1 - S),        rho = (S - R) / (1 - R) = (theta - 1) / theta.

The utility process V associated with a consumption stream C solves

    V_t = E_t[ integral_t^inf  b e^{-delta s} C_s^{1-S} / (1-S) * ((1-R) V_s)^rho  ds ],

so utility values live in the half-line (1-R)*[0, inf): non-negative for R < 1,
non-positive for R > 1.  The aggregator keeps one sign, which is what makes the
infinite-horizon recursion well-behaved; the sign-indefinite difference form
b c^{1-S}/(1-S) ((1-R)v)^rho - delta*theta*v is provided for the diagnostics
that need it.

The coordinate change W = (1-R) V, U = b*theta*e^{-delta t} C^{1-S} turns the
recursion into W_t = E_t[ integral u w^rho ], with u, w >= 0.  The two-argument
kernel u * w^rho, extended to [0, inf]^2 with the conventions 0^rho = inf and
inf^rho = 0 (rho < 0), is `transformed_aggregator`; the solver module iterates
it on a lattice.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, InvalidParameters

__all__ = [
    "Preferences",
    "Market",
    "Regime",
    "RegimeKind",
    "ValueSign",
    "classify_regime",
    "ez_aggregator",
    "difference_aggregator",
    "transformed_aggregator",
    "transformed_aggregator_grid",
    "transformed_consumption",
    "to_wu_coords",
    "from_wu_coords",
    "discount_transform",
    "numeraire_shift",
]

_CONSISTENCY_TOL = 1e-12


class RegimeKind(enum.Enum):
    """Parameter regimes, classified by theta = (1-R)/(1-S)."""

    CRRA = "crra"                       # R == S, theta == 1: additive utility
    CONTRACTIVE = "contractive"         # theta in (0, 1): unique utility process
    THETA_ABOVE_ONE = "theta_above_one" # theta > 1: uniqueness fails
    THETA_NEGATIVE = "theta_negative"   # theta < 0: no infinite-horizon solution


class ValueSign(enum.Enum):
    """Sign domain (1-R)*[0, inf) of utility values."""

    NON_NEGATIVE = "non_negative"  # R < 1
    NON_POSITIVE = "non_positive"  # R > 1

    def admits(self, v: float) -> bool:
        if self is ValueSign.NON_NEGATIVE:
            return v >= 0.0
        return v <= 0.0


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    solver_supported: bool


@dataclass(frozen=True)
class Preferences:
    """Epstein-Zin preference parameters with derived theta and rho.

    theta and rho are computed once at construction and cross-checked against
    each other so the two parameterisations cannot drift apart.

    Raises
    ------
    InvalidParameters
        If b <= 0, R <= 0, S <= 0, R == 1 or S == 1.
    """

    b: float
    delta: float
    R: float
    S: float
    theta: float = None  # type: ignore[assignment]
    rho: float = None    # type: ignore[assignment]

    def __post_init__(self):
        if not (self.b > 0.0):
            raise InvalidParameters(f"scale b must be positive, got {self.b}")
        for name, val in (("R", self.R), ("S", self.S)):
            if not (val > 0.0) or val == 1.0:
                raise InvalidParameters(
                    f"{name} must lie in (0,1) or (1,inf), got {val}"
                )
        theta = (1.0 - self.R) / (1.0 - self.S)
        rho = (self.S - self.R) / (1.0 - self.R)
        if self.theta is None:
            object.__setattr__(self, "theta", theta)
        if self.rho is None:
            object.__setattr__(self, "rho", rho)
        # Cross-check the stored pair against the (R, S) parameterisation.
        if abs(self.theta - theta) > _CONSISTENCY_TOL * max(1.0, abs(theta)):
            raise InvalidParameters("stored theta inconsistent with (R, S)")
        if abs(self.rho - rho) > _CONSISTENCY_TOL * max(1.0, abs(rho)):
            raise InvalidParameters("stored rho inconsistent with (R, S)")
        residual = (1.0 - self.S) + self.rho * (1.0 - self.R) - (1.0 - self.R)
        if abs(residual) > 1e-10 * max(1.0, abs(1.0 - self.R)):
            raise InvalidParameters("exponent identity 1-S+rho(1-R)=1-R violated")

    @property
    def value_sign(self) -> ValueSign:
        return ValueSign.NON_NEGATIVE if self.R < 1.0 else ValueSign.NON_POSITIVE

    @property
    def needs_chi_splitting(self) -> bool:
        """True when rho <= -1, which selects the nested solver branch."""
        return self.rho <= -1.0


@dataclass(frozen=True)
class Market:
    """Constant-parameter Black-Scholes-Merton market.

    r is the risk-free rate, mu the risky drift, sigma > 0 the volatility;
    sharpe = (mu - r)/sigma is derived.
    """

    r: float
    mu: float
    sigma: float
    sharpe: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise InvalidParameters(f"sigma must be positive, got {self.sigma}")
        sharpe = (self.mu - self.r) / self.sigma
        if self.sharpe is None:
            object.__setattr__(self, "sharpe", sharpe)
        elif abs(self.sharpe - sharpe) > _CONSISTENCY_TOL * max(1.0, abs(sharpe)):
            raise InvalidParameters("stored sharpe inconsistent with (r, mu, sigma)")


def classify_regime(prefs: Preferences) -> Regime:
    """Classify the preference regime by theta.

    R == S is reported as CRRA rather than rejected, so additive-utility
    oracles share the same type surface.  Only CRRA and the contractive
    regime theta in (0, 1) are supported by the fixed-point solver; for
    theta > 1 the utility process is not unique and for theta < 0 no
    infinite-horizon utility process exists, so both are flagged
    solver_supported=False.
    """
    theta = prefs.theta
    if prefs.R == prefs.S:
        return Regime(RegimeKind.CRRA, True)
    if 0.0 < theta < 1.0:
        return Regime(RegimeKind.CONTRACTIVE, True)
    if theta > 1.0:
        return Regime(RegimeKind.THETA_ABOVE_ONE, False)
    return Regime(RegimeKind.THETA_NEGATIVE, False)


def transformed_aggregator(u: float, w: float, rho: float) -> float:
    """Kernel u * w^rho on [0, inf]^2 with explicit boundary conventions.

    For rho < 0 the conventions are 0^rho = inf and inf^rho = 0, and

        u * w^rho            for (u, w) in (0, inf) x (0, inf),
        w^rho                for u in (0, inf), w in {0, inf},
        u                    for u in {0, inf}, any w,

    which makes the kernel continuous in w for every fixed u.  The branches
    are selected explicitly (never by IEEE arithmetic on inf), so the
    boundary values are exact.  rho = 0 degenerates to the additive case and
    returns u for every w.
    """
    if rho > 0.0:
        raise DomainError(f"kernel defined for rho <= 0, got {rho}")
    if u < 0.0 or w < 0.0 or math.isnan(u) or math.isnan(w):
        raise DomainError(f"arguments must lie in [0, inf], got u={u}, w={w}")
    if rho == 0.0 or u == 0.0 or math.isinf(u):
        return u
    if w == 0.0:
        return math.inf
    if math.isinf(w):
        return 0.0
    return u * w**rho


def transformed_aggregator_grid(
    u: np.ndarray, w: np.ndarray, rho: float
) -> np.ndarray:
    """Vectorised `transformed_aggregator` over numpy arrays."""
    if rho > 0.0:
        raise DomainError(f"kernel defined for rho <= 0, got {rho}")
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(u < 0.0) or np.any(w < 0.0):
        raise DomainError("arguments must lie in [0, inf]")
    if rho == 0.0:
        return np.broadcast_to(u, np.broadcast_shapes(u.shape, w.shape)).copy()
    out = np.empty(np.broadcast_shapes(u.shape, w.shape), dtype=float)
    u_b = np.broadcast_to(u, out.shape)
    w_b = np.broadcast_to(w, out.shape)
    u_edge = (u_b == 0.0) | np.isinf(u_b)
    w_zero = ~u_edge & (w_b == 0.0)
    w_inf = ~u_edge & np.isinf(w_b)
    interior = ~(u_edge | w_zero | w_inf)
    out[u_edge] = u_b[u_edge]
    out[w_zero] = np.inf
    out[w_inf] = 0.0
    out[interior] = u_b[interior] * w_b[interior] ** rho
    return out


def _check_sign(prefs: Preferences, v) -> None:
    w = (1.0 - prefs.R) * np.asarray(v, dtype=float)
    if np.any(w < 0.0):
        raise DomainError(
            "utility value outside the sign domain (1-R)*[0, inf)"
        )


def transformed_consumption(prefs: Preferences, t, c):
    """U = b*theta*e^{-delta t} * C^{1-S}, with U = inf when C = 0 and S > 1.

    Accepts scalars or arrays; the boundary C = 0 is handled explicitly so no
    IEEE division warnings leak out.
    """
    t_arr = np.asarray(t, dtype=float)
    c_arr = np.asarray(c, dtype=float)
    if np.any(c_arr < 0.0):
        raise DomainError("consumption must be non-negative")
    scale = prefs.b * prefs.theta * np.exp(-prefs.delta * t_arr)
    with np.errstate(divide="ignore"):
        power = np.where(
            c_arr > 0.0,
            np.power(np.where(c_arr > 0.0, c_arr, 1.0), 1.0 - prefs.S),
            np.inf if prefs.S > 1.0 else 0.0,
        )
    out = scale * power
    if out.ndim == 0:
        return float(out)
    return out


def ez_aggregator(prefs: Preferences, t: float, c: float, v: float) -> float:
    """Discounted-form aggregator b e^{-delta t} c^{1-S}/(1-S) ((1-R)v)^rho.

    Evaluated through the transformed kernel, so the c = 0 and v = 0
    boundaries inherit its conventions.  The result carries the sign of the
    domain (1-R)*[0, inf).

    Raises
    ------
    DomainError
        If (1-R)v < 0.
    """
    _check_sign(prefs, v)
    u = transformed_consumption(prefs, t, c)
    w = (1.0 - prefs.R) * v
    return transformed_aggregator(u, w, prefs.rho) / (1.0 - prefs.R)


def difference_aggregator(prefs: Preferences, c: float, v: float) -> float:
    """Difference-form aggregator b c^{1-S}/(1-S) ((1-R)v)^rho - delta*theta*v.

    Unlike the discounted form this may take either sign; it is used by the
    counterexample and bubble diagnostics, not by the solver.
    """
    _check_sign(prefs, v)
    u0 = transformed_consumption(prefs, 0.0, c)
    w = (1.0 - prefs.R) * v
    kernel = transformed_aggregator(u0, w, prefs.rho) / (1.0 - prefs.R)
    return kernel - prefs.delta * prefs.theta * v


def to_wu_coords(prefs: Preferences, V, C, t):
    """Map (V, C) to the transformed coordinates (W, U).

    W = (1-R) V and U = b*theta*e^{-delta t} C^{1-S} (inf when C = 0, S > 1).
    """
    _check_sign(prefs, V)
    W = (1.0 - prefs.R) * np.asarray(V, dtype=float)
    U = transformed_consumption(prefs, t, C)
    if W.ndim == 0:
        W = float(W)
    return W, U


def from_wu_coords(prefs: Preferences, W, U, t):
    """Inverse of `to_wu_coords`: recover (V, C) from (W, U).

    C is recovered as (U e^{delta t} / (b theta))^{1/(1-S)}, with the U = inf
    (S > 1) and U = 0 (S < 1) boundaries mapping back to C = 0.
    """
    W_arr = np.asarray(W, dtype=float)
    U_arr = np.asarray(U, dtype=float)
    if np.any(W_arr < 0.0):
        raise DomainError("W must be non-negative")
    V = W_arr / (1.0 - prefs.R)
    base = U_arr * np.exp(prefs.delta * np.asarray(t, dtype=float)) / (prefs.b * prefs.theta)
    zero_c = np.isinf(base) if prefs.S > 1.0 else (base == 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        C = np.where(
            zero_c,
            0.0,
            np.power(np.where(zero_c, 1.0, base), 1.0 / (1.0 - prefs.S)),
        )
    if V.ndim == 0:
        return float(V), float(C)
    return V, C


def discount_transform(prefs: Preferences, t, values, direction: str):
    """Rescale utility values between the discounted and difference forms.

    direction="discount_to_difference" multiplies by e^{delta*theta*t};
    "difference_to_discount" divides.  The round trip is the identity.
    """
    t_arr = np.asarray(t, dtype=float)
    vals = np.asarray(values, dtype=float)
    factor = np.exp(prefs.delta * prefs.theta * t_arr)
    if direction == "discount_to_difference":
        out = vals * factor
    elif direction == "difference_to_discount":
        out = vals / factor
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if out.ndim == 0:
        return float(out)
    return out


def numeraire_shift(
    prefs: Preferences, market: Market, chi: float
) -> tuple[Preferences, Market]:
    """Re-unit consumption at rate chi: delta' = delta - chi(1-S), r' = r - chi,
    mu' = mu - chi; sigma, the Sharpe ratio, R, S and b are unchanged.

    chi = delta/(1-S) yields delta' = 0, which removes the aggregator's
    explicit time dependence.  The candidate policy and its value are
    invariant under any chi.
    """
    new_prefs = Preferences(
        b=prefs.b,
        delta=prefs.delta - chi * (1.0 - prefs.S),
        R=prefs.R,
        S=prefs.S,
    )
    new_market = Market(r=market.r - chi, mu=market.mu - chi, sigma=market.sigma)
    return new_prefs, new_market


def replace_delta(prefs: Preferences, delta: float) -> Preferences:
    """Copy of prefs with a different discount rate (theta, rho recomputed)."""
    return replace(prefs, delta=delta, theta=None, rho=None)
