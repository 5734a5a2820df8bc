"""From a measured scalar observable to the state ensembles used by the fits.

The observable ``eta`` relates to the model variable through the linear
observation ``y = a*eta + b``. Its integral ``psi`` and derivatives ``zeta``,
``dzeta`` give the remaining state components up to the unknown ``a``, ``b``
and an integration constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.integrate import cumulative_trapezoid

from .series import TimeSeries


@dataclass(frozen=True)
class ObservationModel:
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.a == 0 or not np.isfinite(self.a):
            raise ValueError("observation scale a must be finite and non-zero")


@dataclass(frozen=True)
class StateEnsemble:
    """Aligned state arrays on a common, centred time axis.

    ``t`` is dimensionless model time with ``t = 0`` at the middle of the
    record. ``phase`` is the candidate phase ``psi + b_trial*t`` the
    ensemble was assembled for.

    ``drift`` and ``psi_detrended`` optionally hold the mean of ``eta`` and
    the integral of ``eta - drift``. When present the candidate phase is
    evaluated as ``psi_detrended + (b_trial + drift)*t``, which equals
    ``psi + b_trial*t`` up to a constant but does not accumulate rounding
    error proportional to the mean level.
    """

    t: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    dzeta: np.ndarray | None = None
    b_trial: float = 0.0
    drift: float = 0.0
    psi_detrended: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.t)
        arrays = [self.psi, self.eta, self.zeta]
        arrays += [a for a in (self.dzeta, self.psi_detrended) if a is not None]
        if any(len(a) != n for a in arrays):
            raise ValueError("ensemble arrays must have equal length")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def phase(self) -> np.ndarray:
        return self.candidate_phase(self.b_trial)

    def candidate_phase(self, b_trial: float) -> np.ndarray:
        if self.psi_detrended is not None:
            return self.psi_detrended + (b_trial + self.drift) * self.t
        return self.psi + b_trial * self.t


def lowpass_smooth(series: TimeSeries, cutoff: float, order: int = 4) -> TimeSeries:
    """Zero-phase Butterworth low-pass.

    ``cutoff`` is a fraction of the sampling rate in (0, 0.5). The filter runs
    forward and backward, so the magnitude response is squared: an order-4
    design gives about 48 dB of rejection one octave above the cutoff.
    """
    if not 0.0 < cutoff < 0.5:
        raise ValueError(f"cutoff must lie in (0, 0.5), got {cutoff}")
    sos = signal.butter(order, 2.0 * cutoff, btype="low", output="sos")
    smoothed = signal.sosfiltfilt(sos, series.values)
    return series.replace_values(smoothed)


def parasite_cutoff(parasite_hz: float, dt_seconds: float, fraction: float = 0.1) -> float:
    """Normalised cutoff sitting at ``fraction`` of the parasite frequency."""
    return fraction * parasite_hz * dt_seconds


def differentiate(series: TimeSeries) -> TimeSeries:
    """Central-difference derivative on the interior samples."""
    v = series.values
    if len(v) < 3:
        raise ValueError("differentiation needs at least 3 samples")
    d = (v[2:] - v[:-2]) / (2.0 * series.dt)
    return TimeSeries(series.t0 + series.dt, series.dt, d)


def integrate(series: TimeSeries) -> TimeSeries:
    """Cumulative trapezoidal integral starting from 0."""
    return series.replace_values(
        cumulative_trapezoid(series.values, dx=series.dt, initial=0.0)
    )


def apply_observation(
    series: TimeSeries, model: ObservationModel, inverse: bool = False
) -> TimeSeries:
    """Map ``eta -> a*eta + b``, or ``y -> (y - b)/a`` when ``inverse``."""
    if inverse:
        return series.replace_values((series.values - model.b) / model.a)
    return series.replace_values(model.a * series.values + model.b)


def centered_time(n: int, dt: float) -> np.ndarray:
    """``n`` times spaced ``dt`` and symmetric about 0."""
    return (np.arange(n) - 0.5 * (n - 1)) * dt


def assemble_states(
    eta: TimeSeries,
    b_trial: float = 0.0,
    t_renorm: float = 1.0,
    need_second_derivative: bool = False,
) -> StateEnsemble:
    """Build ``(t, psi, eta, zeta[, dzeta])`` from the observable.

    Laboratory time is multiplied by ``t_renorm``. ``psi`` starts at 0 on the
    first raw sample; one sample per edge is trimmed for ``zeta`` and two
    when ``dzeta`` is requested, so every array shares the same support.
    """
    if not t_renorm > 0:
        raise ValueError("t_renorm must be positive")
    trim = 2 if need_second_derivative else 1
    if len(eta) - 2 * trim < 3:
        raise ValueError(f"record too short: {len(eta)} samples")
    model = TimeSeries(0.0, eta.dt * t_renorm, eta.values)
    psi = integrate(model).values
    drift = float(np.mean(eta.values))
    psi_d = integrate(model.replace_values(eta.values - drift)).values
    zeta = differentiate(model)
    dzeta = differentiate(zeta).values if need_second_derivative else None

    m = len(eta) - 2 * trim
    sl = slice(trim, trim + m)
    zeta_v = zeta.values[trim - 1 : trim - 1 + m]
    return StateEnsemble(
        t=centered_time(m, model.dt),
        psi=psi[sl].copy(),
        eta=np.array(eta.values[sl]),
        zeta=zeta_v.copy(),
        dzeta=None if dzeta is None else dzeta.copy(),
        b_trial=float(b_trial),
        drift=drift,
        psi_detrended=psi_d[sl].copy(),
    )
