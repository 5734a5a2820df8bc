"""Increment-based identification of the PLL model.

Both methods sort the state vectors by phase and fit the increments of an
unknown function of phase between neighbours in that order, so the
nonlinearity never has to be parameterised.

* The *direct* (legacy) method fits ``f(phi) = alpha0/y + alpha1*z/y - (dz/dt)/y``
  and needs the second derivative of the observable.
* The *integrated* method fits the time-integrated equation
  ``f4(psi) = beta0*eta + sum_k beta_k t**k - zeta``, which avoids the
  second derivative and keeps the unknown shift out of denominators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .preprocess import StateEnsemble

CONDITION_LIMIT = 1e12
MAX_ORDER = 5


class DegenerateSystem(ValueError):
    """The increment system has too few usable rows."""


@dataclass(frozen=True)
class SortMap:
    """Permutation ordering samples by increasing key.

    ``q_inv[r]`` is the sample of rank ``r``, ``q[n]`` the rank of sample
    ``n`` and ``p[n]`` the sample ranked just below ``n`` (-1 for the
    minimum). ``q`` and ``p`` are derived on first access.
    """

    q_inv: np.ndarray

    @cached_property
    def q(self) -> np.ndarray:
        q = np.empty_like(self.q_inv)
        q[self.q_inv] = np.arange(len(self.q_inv))
        return q

    @cached_property
    def p(self) -> np.ndarray:
        p = np.full(len(self.q_inv), -1, dtype=self.q_inv.dtype)
        p[self.q_inv[1:]] = self.q_inv[:-1]
        return p

    def chain(self):
        """``(n, p_n)`` index pairs for every sample with a predecessor, in rank order."""
        return self.q_inv[1:], self.q_inv[:-1]


@dataclass(frozen=True)
class DeltaSystem:
    rows: np.ndarray
    targets: np.ndarray
    n_terms: int
    method: str
    n_idx: np.ndarray = field(repr=False, default=None)
    p_idx: np.ndarray = field(repr=False, default=None)
    n_total: int = 0

    def __post_init__(self):
        if len(self.rows) != len(self.targets):
            raise ValueError("rows and targets differ in length")

    def __len__(self):
        return len(self.targets)

    def residuals(self, coef) -> np.ndarray:
        """``delta_n`` for the given coefficients."""
        return self.rows @ np.asarray(coef, dtype=float) - self.targets


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    l_value: float
    condition: float
    n_points: int
    valid: bool
    monotonic: bool = False
    method: str = "integrated"

    @property
    def beta0(self) -> float:
        return float(self.beta[0])

    @property
    def beta1(self) -> float:
        return float(self.beta[1])

    def as_dict(self):
        return {
            "method": self.method,
            "beta": [float(b) for b in self.beta],
            "l_value": float(self.l_value),
            "condition": float(self.condition),
            "n_points": int(self.n_points),
            "valid": bool(self.valid),
            "monotonic": bool(self.monotonic),
        }


@dataclass(frozen=True)
class FunctionGraph:
    psi_sorted: np.ndarray
    f4_values: np.ndarray
    source: str = "pointwise"


def build_sort_map(keys) -> SortMap:
    keys = np.asarray(keys, dtype=float)
    if keys.ndim != 1 or len(keys) < 2:
        raise ValueError("need at least 2 keys")
    return SortMap(np.argsort(keys, kind="stable"))


def is_increasing(keys) -> bool:
    """True when ``keys`` is strictly increasing in original order."""
    return bool(np.all(np.diff(keys) > 0))


def build_deltas_integrated(
    ens: StateEnsemble, b_trial: float, sort_map: SortMap | None = None, k_order: int = 1
) -> DeltaSystem:
    """Rows ``(d_eta, h_1 .. h_K)`` and targets ``d_zeta`` along the phase order.

    ``h_k(n) = t_n**k - t_{p_n}**k``; the fitted residual is
    ``beta0*d_eta + sum beta_k*h_k - d_zeta``.
    """
    if not 1 <= k_order <= MAX_ORDER:
        raise ValueError(f"k_order must lie in [1, {MAX_ORDER}]")
    if sort_map is None:
        sort_map = build_sort_map(ens.candidate_phase(b_trial))
    n, p = sort_map.chain()
    # K+2 samples give K+1 increments, one per coefficient
    if len(n) + 1 < k_order + 2:
        raise DegenerateSystem(f"{len(n) + 1} samples for {k_order + 1} coefficients")
    # gathering once in rank order turns every increment into a plain diff
    order = sort_map.q_inv
    ts = ens.t[order]
    rows = np.empty((len(n), k_order + 1), order="F")  # column-major feeds LAPACK directly
    rows[:, 0] = np.diff(ens.eta[order])
    tk = ts.copy()
    for k in range(1, k_order + 1):
        rows[:, k] = np.diff(tk)
        if k < k_order:
            tk *= ts
    return DeltaSystem(
        rows=rows,
        targets=np.diff(ens.zeta[order]),
        n_terms=k_order,
        method="integrated",
        n_idx=n,
        p_idx=p,
        n_total=len(n),
    )


def build_deltas_legacy(
    ens: StateEnsemble, sort_map: SortMap | None = None, y_floor: float | None = None
) -> DeltaSystem:
    """Rows ``(d(1/y), d(z/y))`` and targets ``d(zdot/y)`` along the phase order.

    Pairs with ``|y| < y_floor`` at either end are dropped (default floor:
    5% of ``max|y|``).
    """
    if ens.dzeta is None:
        raise ValueError("legacy method needs the second derivative (dzeta)")
    y, z, zd = ens.eta, ens.zeta, ens.dzeta
    if y_floor is None:
        y_floor = 0.05 * float(np.max(np.abs(y)))
    if sort_map is None:
        sort_map = build_sort_map(ens.phase)
    n, p = sort_map.chain()
    keep = (np.abs(y[n]) >= y_floor) & (np.abs(y[p]) >= y_floor)
    n_all = len(n)
    n, p = n[keep], p[keep]
    if len(n) == 0:
        raise DegenerateSystem("every row excluded by y_floor")
    inv_n, inv_p = 1.0 / y[n], 1.0 / y[p]
    rows = np.column_stack([inv_n - inv_p, z[n] * inv_n - z[p] * inv_p])
    targets = zd[n] * inv_n - zd[p] * inv_p
    return DeltaSystem(
        rows=rows, targets=targets, n_terms=1, method="legacy",
        n_idx=n, p_idx=p, n_total=n_all,
    )


def solve_least_squares(
    sys: DeltaSystem, condition_limit: float = CONDITION_LIMIT
) -> FitResult:
    """Minimise ``L = sum delta_n**2`` by Householder QR.

    Columns are scaled to unit norm before factorising; ``condition`` is the
    2-norm condition number of that scaled matrix. Rank-deficient or
    ill-conditioned systems come back with ``valid=False`` and the
    minimum-norm solution.
    """
    a, y = sys.rows, sys.targets
    m, w = a.shape
    if m < w + 1:
        raise DegenerateSystem(f"{m} rows for {w} coefficients")
    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        coef = np.linalg.lstsq(a, y, rcond=None)[0]
        r = a @ coef - y
        return FitResult(coef, float(r @ r), np.inf, m, False, method=sys.method)
    # factorising [A/norms | y] yields R and Q^T y without forming Q
    aug = np.empty((m, w + 1), order="F")
    np.divide(a, norms, out=aug[:, :w])
    aug[:, w] = y
    r_aug = np.linalg.qr(aug, mode="r")
    r_mat, qty = r_aug[:w, :w], r_aug[:w, w]
    condition = float(np.linalg.cond(r_mat))
    if not np.isfinite(condition) or condition > condition_limit:
        coef = np.linalg.lstsq(aug[:, :w], y, rcond=None)[0] / norms
        valid = False
    else:
        coef = solve_triangular(r_mat, qty) / norms
        valid = True
    resid = a @ coef - y
    return FitResult(
        beta=coef,
        l_value=float(resid @ resid),
        condition=max(condition, 1.0),
        n_points=m,
        valid=valid,
        method=sys.method,
    )


def fit_integrated(ens: StateEnsemble, b_trial: float | None = None, k_order: int = 1) -> FitResult:
    """Integrated-equation fit; ``beta0`` estimates ``alpha1``.

    ``beta1`` estimates ``alpha0`` minus the phase-drift term that vanishes
    only at the true shift.
    """
    if b_trial is None:
        b_trial = ens.b_trial
    keys = ens.candidate_phase(b_trial)
    sort_map = build_sort_map(keys)
    system = build_deltas_integrated(ens, b_trial, sort_map, k_order)
    fit = solve_least_squares(system)
    mono = is_increasing(keys)
    if mono:
        # every predecessor is the previous sample; the ordering carries no information
        return FitResult(fit.beta, fit.l_value, fit.condition, fit.n_points, False, True)
    return fit


def fit_legacy(ens: StateEnsemble, y_floor: float | None = None) -> FitResult:
    """Direct fit; ``beta`` holds ``(alpha0, alpha1)``."""
    system = build_deltas_legacy(ens, None, y_floor)
    return solve_least_squares(system)


def retained_fraction(ens: StateEnsemble, y_floor: float | None = None) -> float:
    """Share of legacy rows surviving the ``y_floor`` exclusion."""
    system = build_deltas_legacy(ens, None, y_floor)
    return len(system) / system.n_total


def f4_pointwise(ens: StateEnsemble, beta) -> np.ndarray:
    """``beta0*eta + sum beta_k t**k - zeta`` in original sample order."""
    beta = np.asarray(beta, dtype=float)
    out = beta[0] * ens.eta - ens.zeta
    tk = np.ones_like(ens.t)
    for b in beta[1:]:
        tk = tk * ens.t
        out = out + b * tk
    return out


def reconstruct_f4(
    ens: StateEnsemble, b_trial: float | None, fit: FitResult, source: str = "pointwise"
) -> FunctionGraph:
    """Graph of the reconstructed nonlinearity against the candidate phase.

    ``source="cumulative"`` sums the fitted increments along the phase order
    starting from 0; it equals the pointwise graph up to one constant.
    """
    if b_trial is None:
        b_trial = ens.b_trial
    keys = ens.candidate_phase(b_trial)
    sort_map = build_sort_map(keys)
    order = sort_map.q_inv
    if source == "pointwise":
        values = f4_pointwise(ens, fit.beta)[order]
    elif source == "cumulative":
        system = build_deltas_integrated(ens, b_trial, sort_map, len(fit.beta) - 1)
        deltas = system.residuals(fit.beta)
        values = np.concatenate([[0.0], np.cumsum(deltas)])
    else:
        raise ValueError(f"unknown source {source!r}")
    return FunctionGraph(psi_sorted=keys[order], f4_values=values, source=source)
