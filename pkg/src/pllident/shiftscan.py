"""Estimate the constant measurement shift by scanning trial values.

For each trial shift the integrated fit is repeated with the candidate
phase ``psi + b_trial*t``. The target ``L`` collapses once the candidate
phase stops revisiting earlier values; trial shifts from that slope on are
discarded and the estimate is the rightmost local minimum of ``|beta1|``
left of it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .identify import DegenerateSystem, fit_integrated, is_increasing
from .preprocess import StateEnsemble, assemble_states
from .series import TimeSeries

DEFAULT_POINTS = 200
DEFAULT_DROP = 100.0


@dataclass(frozen=True)
class ScanGrid:
    b_min: float
    b_max: float
    step: float

    def __post_init__(self):
        if not (self.b_min < self.b_max):
            raise ValueError("b_min must be below b_max")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if len(self) < 10:
            raise ValueError(f"grid has {len(self)} points; at least 10 required")

    def __len__(self):
        return int(math.floor((self.b_max - self.b_min) / self.step + 1e-9)) + 1

    @property
    def values(self) -> np.ndarray:
        return self.b_min + self.step * np.arange(len(self))

    @classmethod
    def around(cls, center: float, half_width: float, points: int = DEFAULT_POINTS) -> "ScanGrid":
        step = 2.0 * half_width / (points - 1)
        return cls(center - half_width, center + half_width, step)

    def as_dict(self):
        return {"b_min": self.b_min, "b_max": self.b_max, "step": self.step, "points": len(self)}


def default_grid(eta: TimeSeries, points: int = DEFAULT_POINTS) -> ScanGrid:
    """``points`` trial shifts centred on ``-mean(eta)``, half-width ``3*std(eta)``."""
    v = eta.values
    return ScanGrid.around(-float(np.mean(v)), 3.0 * float(np.std(v)), points)


@dataclass(frozen=True)
class ShiftChoice:
    b: float | None
    index: int | None
    minima: list = field(default_factory=list)


@dataclass(frozen=True)
class ScanResult:
    b_values: np.ndarray
    l_values: np.ndarray
    beta1_abs: np.ndarray
    beta0: np.ndarray
    monotonic_flags: np.ndarray
    valid_flags: np.ndarray
    slope_index: int | None = None
    chosen_b: float | None = None
    chosen_index: int | None = None
    minima: list = field(default_factory=list)

    def __len__(self):
        return len(self.b_values)

    @property
    def step(self) -> float:
        return float(self.b_values[1] - self.b_values[0])

    def summary(self):
        return {
            "points": len(self),
            "slope_index": self.slope_index,
            "slope_b": None if self.slope_index is None else float(self.b_values[self.slope_index]),
            "chosen_b": self.chosen_b,
            "chosen_index": self.chosen_index,
            "local_minima": [int(i) for i in self.minima],
            "l_drop": l_drop(self),
        }


def _fit_point(ens: StateEnsemble, b_trial: float, k_order: int):
    keys = ens.candidate_phase(b_trial)
    mono = is_increasing(keys)
    try:
        fit = fit_integrated(ens, b_trial, k_order)
    except (DegenerateSystem, np.linalg.LinAlgError):
        return (np.nan, np.nan, np.nan, mono, False)
    ok = np.isfinite(fit.l_value) and np.all(np.isfinite(fit.beta))
    return (fit.l_value, abs(fit.beta[1]), fit.beta[0], mono, bool(ok and fit.condition < np.inf))


def scan(
    eta: TimeSeries,
    grid: ScanGrid | None = None,
    t_renorm: float = 1.0,
    k_order: int = 1,
    workers: int | None = None,
    drop_factor: float = DEFAULT_DROP,
) -> ScanResult:
    """Run the integrated fit at every trial shift of ``grid``.

    Points whose fit fails are kept with NaN entries and ``valid_flags``
    false. ``workers > 1`` evaluates points on a thread pool; the result
    does not depend on the evaluation order.
    """
    if grid is None:
        grid = default_grid(eta)
    ens = assemble_states(eta, 0.0, t_renorm)
    b_values = grid.values
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda b: _fit_point(ens, b, k_order), b_values))
    else:
        rows = [_fit_point(ens, b, k_order) for b in b_values]
    cols = list(zip(*rows))
    partial = ScanResult(
        b_values=b_values,
        l_values=np.array(cols[0], dtype=float),
        beta1_abs=np.array(cols[1], dtype=float),
        beta0=np.array(cols[2], dtype=float),
        monotonic_flags=np.array(cols[3], dtype=bool),
        valid_flags=np.array(cols[4], dtype=bool),
    )
    slope = detect_slope(partial, drop_factor)
    choice = choose_shift(partial, slope)
    return ScanResult(
        **{k: getattr(partial, k) for k in
           ("b_values", "l_values", "beta1_abs", "beta0", "monotonic_flags", "valid_flags")},
        slope_index=slope,
        chosen_b=choice.b,
        chosen_index=choice.index,
        minima=choice.minima,
    )


def _plateau_window(n_points: int) -> int:
    return max(3, n_points // 20)


def detect_slope(result: ScanResult, drop_factor: float = DEFAULT_DROP) -> int | None:
    """First index where ``L`` falls off a cliff.

    Index ``i`` qualifies when ``L[i-1]/L[i] >= sqrt(drop_factor)`` and the
    minimum of ``L`` from ``i`` on is at most the median of the plateau
    just left of ``i`` divided by ``drop_factor``. The plateau is the
    ``max(3, N/20)`` points preceding ``i``.
    """
    L = np.asarray(result.l_values, dtype=float)
    n = len(L)
    steep = math.sqrt(drop_factor)
    window = _plateau_window(n)
    # suffix minima ignoring NaN
    finite = np.where(np.isfinite(L), L, np.inf)
    tail_min = np.minimum.accumulate(finite[::-1])[::-1]
    for i in range(1, n):
        prev, cur = L[i - 1], L[i]
        if not (np.isfinite(prev) and np.isfinite(cur)):
            continue
        if cur > 0 and prev / cur < steep:
            continue
        if cur == 0 and prev == 0:
            continue
        left = L[max(0, i - window):i]
        left = left[np.isfinite(left)]
        if len(left) == 0:
            continue
        if tail_min[i] <= np.median(left) / drop_factor:
            return i
    return None


def l_drop(result: ScanResult) -> float | None:
    """Ratio of the pre-slope plateau median to the minimum ``L`` from the slope on."""
    i = result.slope_index
    if i is None:
        return None
    L = np.asarray(result.l_values, dtype=float)
    left = L[max(0, i - _plateau_window(len(L))):i]
    tail = L[i:][np.isfinite(L[i:])]
    low = float(tail.min())
    med = float(np.median(left[np.isfinite(left)]))
    return math.inf if low == 0 else med / low


def choose_shift(result: ScanResult, slope_index: int | None = None) -> ShiftChoice:
    """Rightmost strict local minimum of ``|beta1|`` left of the slope.

    Boundary points, points with a monotonic candidate phase and failed fits
    are never eligible. When ``slope_index`` is omitted the one stored on
    ``result`` is used.
    """
    if slope_index is None:
        slope_index = result.slope_index
    b1 = np.asarray(result.beta1_abs, dtype=float)
    n = len(b1)
    minima = [
        i for i in range(1, n - 1)
        if np.isfinite(b1[i - 1]) and np.isfinite(b1[i + 1])
        and b1[i] < b1[i - 1] and b1[i] < b1[i + 1]
    ]
    eligible = [
        i for i in minima
        if (slope_index is None or i < slope_index)
        and not result.monotonic_flags[i] and result.valid_flags[i]
    ]
    if not eligible:
        return ShiftChoice(None, None, minima)
    best = eligible[-1]
    return ShiftChoice(float(result.b_values[best]), best, minima)
