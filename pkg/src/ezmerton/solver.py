"""Fixed-point solver for the utility recursion on the lattice.

Everything here works in the transformed coordinates W = (1-R)V >= 0,
U = b*theta*e^{-delta t} C^{1-S} >= 0, where the recursion reads

    W_t = E_t[ integral_t^inf u(s) W_s^rho ds ]          (rho = (theta-1)/theta).

One application of the right-hand side on the lattice is `apply_recursion`
(per-step trapezoid accumulation of the kernel plus a tail closure beyond the
horizon).  `picard_solve` iterates it.  Measured in the log of the ratio to a
reference process Lambda^theta, the iteration is a sup-norm contraction with
constant |rho| when rho is in (-1, 0); for rho <= -1 the update is split as
w^rho = w^{-chi} * w^{rho+chi} and solved as a nested iteration whose outer
loop contracts with constant chi.

Preconditions are expressed through order certificates: the reference Lambda
must satisfy Lambda^theta comparable to I^Lambda_t = E_t[integral Lambda^theta]
(self-similarity), and the driver U must be comparable to Lambda (or bounded
above by it when an epsilon-perturbation is used).

`check_solution` is a residual falsifier for the sub/supersolution
inequalities over a sampled family of step pairs and hitting times, and
`generalized_utility` evaluates arbitrary consumption grids by monotone
truncation against the candidate optimal stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import closed_form
from .errors import (
    DimensionMismatch,
    InvalidParameters,
    MissingLambda,
    NotConverged,
    NotInClass,
    PreconditionFailed,
    SignDomainViolation,
    UnsupportedRegime,
)
from .lattice import (
    AdaptedGrid,
    Lattice,
    TailClosure,
    step_expectation,
    unconditional_expectation,
)
from .preferences import (
    Market,
    Preferences,
    ValueSign,
    classify_regime,
    transformed_aggregator_grid,
    transformed_consumption,
)

__all__ = [
    "OrderCertificate",
    "SolveReport",
    "ResidualReport",
    "ComparisonVerdict",
    "GeneralizedUtilityReport",
    "DIVERGENCE_THRESHOLD",
    "reference_integral",
    "order_check",
    "apply_recursion",
    "picard_solve",
    "generalized_utility",
    "check_solution",
    "compare",
]

#: Desk-scale proxy for +/- infinity in divergence classifications.
DIVERGENCE_THRESHOLD = 1e6

_LOG_CLAMP = 700.0
_RATIO_GUARD = 1e12


# ---------------------------------------------------------------------------
# Backward accumulation
# ---------------------------------------------------------------------------

def _backward_accumulate(lat: Lattice, f: list[np.ndarray],
                         tail_values: np.ndarray,
                         last_step_rectangle: bool) -> list[np.ndarray]:
    """G_k = E_k[ sum of trapezoid slices of f + tail ], one backward sweep.

    With a zero tail the terminal layer of f would inject the w = 0 boundary
    convention (an infinite kernel value) into the last half-slice, so that
    step uses a left rectangle instead.
    """
    n = lat.n_steps
    dt = lat.dt
    out: list[np.ndarray] = [None] * (n + 1)  # type: ignore[list-item]
    out[n] = np.asarray(tail_values, dtype=float)
    for k in range(n - 1, -1, -1):
        if k == n - 1 and last_step_rectangle:
            out[k] = step_expectation(lat, out[k + 1]) + dt * f[k]
        else:
            out[k] = (
                step_expectation(lat, out[k + 1] + 0.5 * dt * f[k + 1])
                + 0.5 * dt * f[k]
            )
    return out


def _tail_reference(lat: Lattice, tail: TailClosure,
                    lam_theta_terminal: np.ndarray) -> np.ndarray:
    """Tail of I^Lambda: Lambda_T^theta / H under proportional continuation."""
    if tail.mode == "zero":
        return np.zeros_like(lam_theta_terminal)
    return lam_theta_terminal / tail.decay_rate


def _tail_solution(prefs: Preferences, lat: Lattice, tail: TailClosure,
                   u_terminal: np.ndarray, lam_theta_terminal: np.ndarray,
                   epsilon: float) -> np.ndarray:
    """Tail of the W-recursion under the closure.

    Under proportional continuation the fixed point beyond the horizon is the
    strategy's own: W_T = U_T^theta / H^theta, plus the epsilon term's tail
    epsilon * Lambda_T^theta / H.
    """
    if tail.mode == "zero":
        return np.zeros_like(u_terminal)
    w_tail = np.power(u_terminal, prefs.theta) / tail.decay_rate**prefs.theta
    if epsilon > 0.0:
        w_tail = w_tail + epsilon * lam_theta_terminal / tail.decay_rate
    return w_tail


def reference_integral(prefs: Preferences, target: AdaptedGrid, lat: Lattice,
                       tail: TailClosure) -> AdaptedGrid:
    """I^Lambda: backward cumulative expectation of Lambda^theta plus tail."""
    target.check_shape(lat)
    lam_theta = [np.power(v, prefs.theta) for v in target.values]
    tail_vals = _tail_reference(lat, tail, lam_theta[-1])
    vals = _backward_accumulate(lat, lam_theta, tail_vals,
                                last_step_rectangle=tail.mode == "zero")
    return AdaptedGrid(vals, sign_domain=ValueSign.NON_NEGATIVE)


# ---------------------------------------------------------------------------
# Order certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderCertificate:
    """Nodewise bounds k_lower * reference <= target^theta <= K_upper * reference.

    target is the reference process Lambda, reference is I^Lambda; the bounds
    are taken over steps 0..n-1 (the terminal layer is excluded because the
    truncation dominates it).
    """

    k_lower: float
    K_upper: float
    target: AdaptedGrid
    reference: AdaptedGrid


def order_check(prefs: Preferences, target: AdaptedGrid, lat: Lattice,
                tail: TailClosure) -> OrderCertificate:
    """Self-similarity test: is target^theta of the same order as I^target?

    Raises
    ------
    NotInClass
        If target is not strictly positive, if the fitted decay rate of
        E[target^theta] is non-negative (the defining integral diverges when
        the grid is extended), or if the nodewise ratio leaves (0, guard).
    """
    target.check_shape(lat)
    if any(np.any(~(v > 0.0)) or np.any(np.isinf(v)) for v in target.values):
        raise NotInClass("reference process must be strictly positive and finite")
    lam_theta = AdaptedGrid([np.power(v, prefs.theta) for v in target.values])
    trace = unconditional_expectation(lat, lam_theta)
    slope = float(np.polyfit(lat.times, np.log(trace), 1)[0])
    if slope >= -1e-12:
        raise NotInClass(
            f"E[target^theta] decays at rate {-slope:.3e} <= 0; "
            "the defining integral diverges beyond any horizon"
        )
    ref = reference_integral(prefs, target, lat, tail)
    ratios = [lt / iv for lt, iv in zip(lam_theta.values[:-1], ref.values[:-1])]
    k_lower = min(float(np.min(r)) for r in ratios)
    K_upper = max(float(np.max(r)) for r in ratios)
    if not (0.0 < k_lower <= K_upper < _RATIO_GUARD):
        raise NotInClass(
            f"order ratio outside (0, {_RATIO_GUARD:g}): [{k_lower}, {K_upper}]"
        )
    return OrderCertificate(k_lower=k_lower, K_upper=K_upper,
                            target=target, reference=ref)


def _order_ratio_bounds(U: AdaptedGrid, Lambda: AdaptedGrid) -> tuple[float, float]:
    lo, hi = math.inf, 0.0
    for u, lam in zip(U.values, Lambda.values):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = u / lam
        lo = min(lo, float(np.min(r)))
        hi = max(hi, float(np.max(r)))
    return lo, hi


# ---------------------------------------------------------------------------
# The recursion operator
# ---------------------------------------------------------------------------

def apply_recursion(prefs: Preferences, U: AdaptedGrid, W: AdaptedGrid,
                    lat: Lattice, tail: TailClosure, epsilon: float = 0.0,
                    Lambda: AdaptedGrid | None = None) -> AdaptedGrid:
    """One application of W |-> E[ integral (u w^rho + eps Lambda^theta) ].

    Raises
    ------
    MissingLambda
        If epsilon > 0 and no reference grid was supplied.
    DimensionMismatch
        If any grid does not live on the lattice.
    """
    U.check_shape(lat)
    W.check_shape(lat)
    if epsilon < 0.0:
        raise InvalidParameters("epsilon must be >= 0")
    if epsilon > 0.0 and Lambda is None:
        raise MissingLambda("epsilon > 0 requires a reference grid Lambda")
    if Lambda is not None:
        Lambda.check_shape(lat)
        lam_theta = [np.power(v, prefs.theta) for v in Lambda.values]
    else:
        lam_theta = None
    f = []
    for k in range(lat.n_steps + 1):
        fk = transformed_aggregator_grid(U.values[k], W.values[k], prefs.rho)
        if epsilon > 0.0:
            fk = fk + epsilon * lam_theta[k]
        f.append(fk)
    tail_vals = _tail_solution(
        prefs, lat, tail, U.values[-1],
        lam_theta[-1] if lam_theta is not None else U.values[-1],
        epsilon,
    )
    vals = _backward_accumulate(lat, f, tail_vals,
                                last_step_rectangle=tail.mode == "zero")
    return AdaptedGrid(vals, sign_domain=ValueSign.NON_NEGATIVE)


def _log_sup_diff(A: AdaptedGrid, B: AdaptedGrid) -> float:
    """sup over nodes of |log A - log B|, with 0/0 layers counting as equal."""
    worst = 0.0
    for a, b in zip(A.values, B.values):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.log(a) - np.log(b)
        both_zero = (a == b)
        d = np.where(both_zero, 0.0, d)
        if np.any(np.isnan(d)):
            return math.inf
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def _clamped(W: AdaptedGrid) -> tuple[AdaptedGrid, int]:
    lo, hi = math.exp(-_LOG_CLAMP), math.exp(_LOG_CLAMP)
    events = 0
    vals = []
    for v in W.values:
        mask = (v < lo) | (v > hi)
        events += int(np.count_nonzero(mask))
        vals.append(np.clip(v, lo, hi) if mask.any() else v)
    return AdaptedGrid(vals, W.sign_domain), events


@dataclass
class SolveReport:
    """Result of a Picard solve, with per-iteration diagnostics.

    residual is the sup-norm log-space defect |log F(W*) - log W*| of the
    returned solution under one more operator application.
    """

    solution: AdaptedGrid
    iterations: int
    contraction_ratios: list[float]
    converged: bool
    residual: float
    trace: list[tuple[int, float, float]]
    branch: str
    chi: float | None
    clamp_events: int

    def utility_at_zero(self, prefs: Preferences) -> float:
        """Time-0 utility V_0 = W_0 / (1-R)."""
        return float(self.solution.values[0][0]) / (1.0 - prefs.R)

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "branch": self.branch,
            "chi": self.chi,
            "clamp_events": self.clamp_events,
            "contraction_ratios": self.contraction_ratios,
            "w0": float(self.solution.values[0][0]),
        }

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "sup_norm_step", "ratio"])
            for it, step, ratio in self.trace:
                writer.writerow([it, format(step, ".17g"), format(ratio, ".17g")])


def _solve_exponent(prefs: Preferences, u_values: list[np.ndarray],
                    rho: float, W0: AdaptedGrid, lat: Lattice,
                    tail_vals: np.ndarray, last_rect: bool,
                    eps_term: list[np.ndarray] | None,
                    tol: float, max_iter: int):
    """Solve W = Backward(u * W^rho_eff + eps_term) for any rho < 0.

    Direct contraction iteration for rho in (-1, 0); for rho <= -1 the kernel
    is split as w^rho = w^{-chi} w^{rho+chi} and the inner problem (in the
    last factor) is solved to higher accuracy inside an outer loop that
    contracts with constant chi.  Returns (W, trace, converged, clamp_events).
    """

    def one_application(u_vals, rho_x, W: AdaptedGrid) -> AdaptedGrid:
        f = []
        for k in range(lat.n_steps + 1):
            fk = transformed_aggregator_grid(u_vals[k], W.values[k], rho_x)
            if eps_term is not None:
                fk = fk + eps_term[k]
            f.append(fk)
        vals = _backward_accumulate(lat, f, tail_vals, last_rect)
        return AdaptedGrid(vals, sign_domain=ValueSign.NON_NEGATIVE)

    clamp_total = 0
    trace: list[tuple[int, float, float]] = []

    if rho > -1.0:
        W = W0
        prev_step = math.nan
        converged = False
        for it in range(1, max_iter + 1):
            W_new, ev = _clamped(one_application(u_values, rho, W))
            clamp_total += ev
            step = _log_sup_diff(W_new, W)
            ratio = step / prev_step if prev_step and math.isfinite(prev_step) and prev_step > 0 else math.nan
            trace.append((it, step, ratio))
            W = W_new
            if step <= tol * (1.0 - abs(rho)):
                converged = True
                break
            prev_step = step
        return W, trace, converged, clamp_total, None

    # chi-splitting: w^rho = w^{-chi} * w^{rho+chi} with rho+chi in (-1, 0)
    # when reachable in one split, else recurse.
    if -1.5 <= rho:
        chi = -0.5 - rho  # lands the inner exponent at -0.5; 0.5 for rho = -1
    else:
        chi = 0.99
    rho_in = rho + chi
    W = W0
    prev_step = math.nan
    converged = False
    inner_tol = 0.1 * tol
    for it in range(1, max_iter + 1):
        with np.errstate(divide="ignore"):
            u_eff = [u * np.power(w, -chi)
                     for u, w in zip(u_values, W.values)]
        Z, _, inner_ok, ev, _ = _solve_exponent(
            prefs, u_eff, rho_in, W, lat, tail_vals, last_rect,
            eps_term, inner_tol, max_iter,
        )
        clamp_total += ev
        if not inner_ok:
            raise NotConverged("inner solve of the split iteration failed")
        step = _log_sup_diff(Z, W)
        ratio = step / prev_step if prev_step and math.isfinite(prev_step) and prev_step > 0 else math.nan
        trace.append((it, step, ratio))
        W = Z
        if step <= tol * (1.0 - chi):
            converged = True
            break
        prev_step = step
    return W, trace, converged, clamp_total, chi


def picard_solve(prefs: Preferences, U: AdaptedGrid, lat: Lattice,
                 tail: TailClosure, epsilon: float = 0.0,
                 Lambda: AdaptedGrid | None = None, tol: float = 1e-8,
                 max_iter: int = 200, initial_guess: AdaptedGrid | None = None,
                 enforce_order: bool = True) -> SolveReport:
    """Fixed point of the utility recursion for the transformed driver U.

    Lambda defaults to U itself.  The initial guess is I^Lambda, which has the
    right order by construction.  Convergence is declared when the log-space
    sup-norm step falls below tol*(1 - contraction constant), so the returned
    grid is within tol of the fixed point in that metric.

    Raises
    ------
    UnsupportedRegime
        Outside the CRRA and contractive (theta in (0,1]) regimes.
    PreconditionFailed
        If enforce_order is set and U is not of the same order as Lambda
        (for epsilon = 0) or not bounded above by a multiple of Lambda
        (for epsilon > 0).
    NotConverged
        If max_iter is exhausted.
    """
    regime = classify_regime(prefs)
    if not regime.solver_supported:
        raise UnsupportedRegime(
            f"solver supports theta in (0, 1]; regime is {regime.kind.value}"
        )
    U.check_shape(lat)
    if epsilon > 0.0 and Lambda is None:
        raise MissingLambda("epsilon > 0 requires a reference grid Lambda")
    lam_grid = Lambda if Lambda is not None else U
    lam_grid.check_shape(lat)

    if enforce_order:
        try:
            order_check(prefs, lam_grid, lat, tail)
        except NotInClass as exc:
            raise PreconditionFailed(f"reference grid fails order check: {exc}") from exc
        lo, hi = _order_ratio_bounds(U, lam_grid)
        if epsilon == 0.0 and not (0.0 < lo <= hi < math.inf):
            raise PreconditionFailed(
                f"U not of the same order as Lambda: ratio range [{lo}, {hi}]"
            )
        if epsilon > 0.0 and not (0.0 <= lo <= hi < math.inf):
            raise PreconditionFailed(
                f"U not bounded by a multiple of Lambda: ratio range [{lo}, {hi}]"
            )

    lam_theta = [np.power(v, prefs.theta) for v in lam_grid.values]
    eps_term = [epsilon * lt for lt in lam_theta] if epsilon > 0.0 else None
    last_rect = tail.mode == "zero"
    tail_vals = _tail_solution(prefs, lat, tail, U.values[-1],
                               lam_theta[-1], epsilon)

    if initial_guess is not None:
        initial_guess.check_shape(lat)
        W0 = initial_guess.copy()
    else:
        W0 = reference_integral(prefs, lam_grid, lat, tail)

    if prefs.rho == 0.0:
        # Additive utility: the operator does not depend on W.
        W = apply_recursion(prefs, U, W0, lat, tail, epsilon, lam_grid)
        residual = _log_sup_diff(
            apply_recursion(prefs, U, W, lat, tail, epsilon, lam_grid), W
        )
        return SolveReport(solution=W, iterations=1, contraction_ratios=[],
                           converged=True, residual=residual,
                           trace=[(1, residual, math.nan)], branch="additive",
                           chi=None, clamp_events=0)

    W, trace, converged, clamp_events, chi = _solve_exponent(
        prefs, U.values, prefs.rho, W0, lat, tail_vals, last_rect,
        eps_term, tol, max_iter,
    )
    if not converged:
        raise NotConverged(
            f"no convergence after {max_iter} iterations "
            f"(last step {trace[-1][1]:.3e})"
        )
    residual = _log_sup_diff(
        apply_recursion(prefs, U, W, lat, tail, epsilon, lam_grid), W
    )
    ratios = [r for (_, _, r) in trace if math.isfinite(r)]
    return SolveReport(
        solution=W, iterations=len(trace), contraction_ratios=ratios,
        converged=converged, residual=residual, trace=trace,
        branch="direct" if chi is None else "chi_split", chi=chi,
        clamp_events=clamp_events,
    )


# ---------------------------------------------------------------------------
# Generalized utility by monotone truncation
# ---------------------------------------------------------------------------

@dataclass
class GeneralizedUtilityReport:
    """Monotone truncation levels n, their time-0 values, and the limit call."""

    ns: list[int]
    values: list[float]
    classification: str  # "finite" | "diverges_to_plus_inf" | "diverges_to_minus_inf"
    limit: float | None
    threshold: float
    sequence_converged: bool

    def to_json_dict(self) -> dict:
        return {
            "ns": self.ns,
            "values": self.values,
            "classification": self.classification,
            "limit": self.limit,
            "threshold": self.threshold,
            "sequence_converged": self.sequence_converged,
        }


def generalized_utility(C_grid: AdaptedGrid, prefs: Preferences, market: Market,
                        lat: Lattice, tail: TailClosure, n_max: int,
                        tol: float = 1e-8) -> GeneralizedUtilityReport:
    """Evaluate an arbitrary consumption grid by monotone truncation.

    The truncated streams are C^n = C /\\ n*Chat for R < 1 (an increasing
    sequence) and C^n = C \\/ Chat/n for R > 1 (a decreasing one), where
    Chat = eta * X is the candidate optimal consumption read off the lattice.
    Each truncation is solved with `picard_solve`; the time-0 values form a
    monotone sequence whose limit is classified as finite or divergent at the
    desk-scale threshold 1e6.

    The lattice must be bound to the candidate strategy, since Chat is taken
    from its node wealth.

    Raises
    ------
    UnsupportedRegime
        Unless theta lies in (0, 1).
    PreconditionFailed
        If the lattice strategy is not the candidate policy.
    """
    if not (0.0 < prefs.theta < 1.0):
        raise UnsupportedRegime("generalized utility requires theta in (0, 1)")
    C_grid.check_shape(lat)
    if n_max < 1:
        raise InvalidParameters("n_max must be >= 1")
    policy = closed_form.candidate_policy(prefs, market)
    if (abs(lat.strategy.pi - policy.pi_hat) > 1e-9 * max(1.0, abs(policy.pi_hat))
            or abs(lat.strategy.xi - policy.eta) > 1e-9 * max(1.0, policy.eta)):
        raise PreconditionFailed(
            "lattice must be built under the candidate strategy "
            f"(pi={policy.pi_hat}, xi={policy.eta})"
        )
    c_hat = [policy.eta * w for w in lat.node_wealth]
    ns = [1]
    while ns[-1] < n_max:
        ns.append(min(2 * ns[-1], n_max))

    times = lat.times
    values: list[float] = []
    for n in ns:
        if prefs.R < 1.0:
            c_n = [np.minimum(c, n * ch) for c, ch in zip(C_grid.values, c_hat)]
        else:
            c_n = [np.maximum(c, ch / n) for c, ch in zip(C_grid.values, c_hat)]
        u_n = AdaptedGrid([
            np.asarray(transformed_consumption(prefs, times[k], c_n[k]), dtype=float)
            for k in range(lat.n_steps + 1)
        ])
        if all(np.all(np.isfinite(v)) and np.all(v > 0.0) for v in u_n.values):
            lam = u_n
        else:
            lam = AdaptedGrid([
                np.asarray(transformed_consumption(prefs, times[k], ch), dtype=float)
                for k, ch in enumerate(c_hat)
            ])
        report = picard_solve(prefs, u_n, lat, tail, epsilon=0.0, Lambda=lam,
                              tol=tol, enforce_order=False)
        values.append(report.utility_at_zero(prefs))

    last = values[-1]
    if abs(last) > DIVERGENCE_THRESHOLD:
        cls = "diverges_to_plus_inf" if last > 0 else "diverges_to_minus_inf"
        return GeneralizedUtilityReport(ns, values, cls, None,
                                        DIVERGENCE_THRESHOLD, False)
    cauchy = len(values) < 2 or (
        abs(values[-1] - values[-2]) <= 1e-6 * (1.0 + abs(values[-1]))
    )
    return GeneralizedUtilityReport(ns, values, "finite", last,
                                    DIVERGENCE_THRESHOLD, cauchy)


# ---------------------------------------------------------------------------
# Sub/supersolution residual checks
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    """Falsifier verdict for the sub/supersolution inequalities.

    defects collect V_k - E_k[V_k' + integral of the aggregator] over the
    sampled family; positive defects are evidence for a supersolution,
    negative for a subsolution.  The check samples deterministic step pairs
    and wealth-band hitting times; it can refute, not prove.
    """

    classification: str  # "solution" | "subsolution" | "supersolution" | "neither"
    defect_min: float
    defect_max: float
    tol_abs: float
    family_bounds: dict[str, tuple[float, float]]
    worst_negative: tuple[str, int, int] | None
    worst_positive: tuple[str, int, int] | None
    terminal_expectation_trace: np.ndarray
    trace_ok: bool
    trace_slope: float

    def to_json_dict(self) -> dict:
        return {
            "classification": self.classification,
            "defect_min": self.defect_min,
            "defect_max": self.defect_max,
            "tol_abs": self.tol_abs,
            "family_bounds": {k: list(v) for k, v in self.family_bounds.items()},
            "trace_ok": self.trace_ok,
            "trace_slope": self.trace_slope,
        }


def _aggregator_layers(grid: AdaptedGrid, companion: AdaptedGrid,
                       lat: Lattice, prefs: Preferences, space: str):
    """Per-step aggregator values along the grid, in the requested space."""
    if space == "W":
        return [
            transformed_aggregator_grid(u, w, prefs.rho)
            for u, w in zip(companion.values, grid.values)
        ]
    layers = []
    for k in range(lat.n_steps + 1):
        u = np.asarray(
            transformed_consumption(prefs, k * lat.dt, companion.values[k]),
            dtype=float,
        )
        w = (1.0 - prefs.R) * grid.values[k]
        layers.append(transformed_aggregator_grid(u, w, prefs.rho) / (1.0 - prefs.R))
    return layers


def _pair_defects(lat: Lattice, V: list[np.ndarray], f: list[np.ndarray],
                  gap: int):
    """Defects V_k - E_k[V_{k+gap} + trapezoid(f)] for every start k."""
    dt = lat.dt
    n = lat.n_steps
    defects = []
    for k in range(0, n - gap + 1):
        acc = V[k + gap]
        for m in range(k + gap - 1, k - 1, -1):
            acc = step_expectation(lat, acc + 0.5 * dt * f[m + 1]) + 0.5 * dt * f[m]
        defects.append(V[k] - acc)
    return defects


def _hitting_defect(lat: Lattice, V: list[np.ndarray], f: list[np.ndarray],
                    band: float):
    """Defect at step 0 for the first exit of log-wealth from +/- band."""
    dt = lat.dt
    n = lat.n_steps
    logw = [np.log(w / lat.x0) - lat.log_drift * k * lat.dt
            for k, w in enumerate(lat.node_wealth)]
    stopped = [np.abs(lw) >= band for lw in logw]
    acc = V[n]
    for k in range(n - 1, -1, -1):
        interior = step_expectation(lat, acc + 0.5 * dt * f[k + 1]) + 0.5 * dt * f[k]
        acc = np.where(stopped[k], V[k], interior)
    return [V[0] - acc]


def check_solution(grid: AdaptedGrid, companion: AdaptedGrid, lat: Lattice,
                   prefs: Preferences, tol: float,
                   space: str = "W") -> ResidualReport:
    """Classify a grid as sub/supersolution/solution by sampled residuals.

    space "W": grid is a non-negative transformed utility W and companion the
    transformed consumption U.  space "V": grid is a utility process in the
    preference sign domain and companion the consumption grid C.

    The tolerance is relative: defects are compared against tol * sup|grid|.

    Raises
    ------
    SignDomainViolation
        If the grid leaves its sign domain.
    """
    grid.check_shape(lat)
    companion.check_shape(lat)
    if space not in ("W", "V"):
        raise InvalidParameters(f"space must be 'W' or 'V', got {space!r}")
    domain = ValueSign.NON_NEGATIVE if space == "W" else prefs.value_sign
    probe = AdaptedGrid(grid.values, sign_domain=domain)
    if not probe.validate_sign():
        raise SignDomainViolation(f"grid leaves its {domain.value} domain")

    f = _aggregator_layers(grid, companion, lat, prefs, space)
    V = grid.values
    family_bounds: dict[str, tuple[float, float]] = {}
    defect_min, defect_max = math.inf, -math.inf
    worst_neg = worst_pos = None
    families: list[tuple[str, list[np.ndarray], int]] = []
    for gap in (1, 5, 25):
        if gap <= lat.n_steps:
            families.append((f"pairs_gap_{gap}", _pair_defects(lat, V, f, gap), gap))
    sigma_T = lat.log_vol * math.sqrt(max(lat.horizon, lat.dt))
    if sigma_T > 0.0:
        for mult in (1.0, 2.0):
            families.append(
                (f"hitting_band_{mult:g}sigma",
                 _hitting_defect(lat, V, f, mult * sigma_T), 0)
            )
    for label, defect_layers, _ in families:
        lo = min(float(np.min(d)) for d in defect_layers)
        hi = max(float(np.max(d)) for d in defect_layers)
        family_bounds[label] = (lo, hi)
        for k, d in enumerate(defect_layers):
            jmin = int(np.argmin(d))
            jmax = int(np.argmax(d))
            if d[jmin] < defect_min:
                defect_min = float(d[jmin])
                worst_neg = (label, k, jmin)
            if d[jmax] > defect_max:
                defect_max = float(d[jmax])
                worst_pos = (label, k, jmax)

    trace = unconditional_expectation(lat, grid)
    abs_trace = np.abs(trace) + 1e-300
    half = len(trace) // 2
    trace_slope = float(np.polyfit(lat.times[half:], np.log(abs_trace[half:]), 1)[0])
    exploding = (trace_slope > 1e-9
                 and abs_trace[-1] > 10.0 * max(abs_trace[0], 1e-12))
    trace_ok = not exploding

    scale = max(grid.sup_abs(), 1e-12)
    tol_abs = tol * scale
    sub_ineq = defect_max <= tol_abs
    sup_ineq = defect_min >= -tol_abs
    if domain is ValueSign.NON_NEGATIVE:
        sub_ok = sub_ineq and trace_ok
        sup_ok = sup_ineq
    else:
        sub_ok = sub_ineq
        sup_ok = sup_ineq and trace_ok
    if sub_ok and sup_ok:
        classification = "solution"
    elif sup_ok:
        classification = "supersolution"
    elif sub_ok:
        classification = "subsolution"
    else:
        classification = "neither"
    return ResidualReport(
        classification=classification,
        defect_min=defect_min,
        defect_max=defect_max,
        tol_abs=tol_abs,
        family_bounds=family_bounds,
        worst_negative=worst_neg,
        worst_positive=worst_pos,
        terminal_expectation_trace=trace,
        trace_ok=trace_ok,
        trace_slope=trace_slope,
    )


@dataclass
class ComparisonVerdict:
    ordered: bool
    violations: list[tuple[int, int, float, float]]


def compare(v_sub: AdaptedGrid, v_super: AdaptedGrid,
            max_violations: int = 20) -> ComparisonVerdict:
    """Nodewise ordering verdict: is v_sub <= v_super everywhere?

    Violations are reported with their (step, node) coordinates.

    Raises
    ------
    DimensionMismatch
        If the grids have different shapes.
    """
    if len(v_sub.values) != len(v_super.values) or any(
        len(a) != len(b) for a, b in zip(v_sub.values, v_super.values)
    ):
        raise DimensionMismatch("grids must share a lattice")
    violations: list[tuple[int, int, float, float]] = []
    for k, (a, b) in enumerate(zip(v_sub.values, v_super.values)):
        bad = np.nonzero(a > b)[0]
        for j in bad[: max(0, max_violations - len(violations))]:
            violations.append((k, int(j), float(a[j]), float(b[j])))
        if len(violations) >= max_violations:
            break
    return ComparisonVerdict(ordered=len(violations) == 0, violations=violations)
