"""Model of the PLL generator with a bandpass loop filter.

The generator is described in dimensionless time by

    dphi/dt = y
    dy/dt   = z
    eps1*eps2 * dz/dt = gamma - (eps1 + eps2)*z - (1 + eps1*cos(phi))*y

where ``phi`` is the phase difference between the reference and the VCO.
This module converts circuit values to the model parameters, evaluates the
right-hand side, integrates it with a fixed-step RK4 scheme and labels the
resulting spike trains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _backend
from .series import TimeSeries

TWO_PI = 2.0 * math.pi


class SimulationDiverged(ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, step):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class PhysicalSetup:
    """Circuit-level description of one operating regime.

    Frequencies ``omega_rg`` and ``omega_0`` are cyclic (Hz); the hold band
    ``omega_h`` is angular (rad/s).
    """

    omega_rg: float
    m: int
    omega_0: float
    n: int
    omega_h: float
    r1: float
    c1: float
    r2: float
    c2: float

    def __post_init__(self):
        for name in ("m", "n"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("omega_rg", "omega_0", "omega_h", "r1", "c1", "r2", "c2"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def t1(self) -> float:
        return self.r1 * self.c1

    @property
    def t2(self) -> float:
        return self.r2 * self.c2

    @property
    def parasite_frequency(self) -> float:
        """Frequency (Hz) of the XOR detector's unfiltered component."""
        return self.omega_rg / self.m + self.omega_0 / self.n


@dataclass(frozen=True)
class DimensionlessParams:
    eps1: float
    eps2: float
    gamma: float
    t_renorm: float = 1.0

    def __post_init__(self):
        for name in ("eps1", "eps2", "t_renorm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    def canonical(self) -> "DimensionlessParams":
        """Return the mirror image with ``gamma >= 0``.

        The model is invariant under ``(phi, y, z, gamma) -> -(phi, y, z, gamma)``,
        so flipping the sign of the detuning only reverses the direction
        of phase drift.
        """
        return replace(self, gamma=abs(self.gamma))


@dataclass(frozen=True)
class ModelState:
    phi: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.phi, self.y, self.z)):
            raise ValueError("state components must be finite")

    def as_tuple(self):
        return (self.phi, self.y, self.z)


@dataclass(frozen=True)
class AlphaPair:
    """Effective parameters ``alpha0 = gamma/(e1 e2)``, ``alpha1 = -(e1+e2)/(e1 e2)``."""

    alpha0: float
    alpha1: float


class Trajectory(NamedTuple):
    phi: TimeSeries
    y: TimeSeries
    z: TimeSeries


DEFAULT_INIT = ModelState(0.0, 0.1, 0.0)


def to_dimensionless(setup: PhysicalSetup) -> DimensionlessParams:
    """Convert circuit values to ``(eps1, eps2, gamma, t_renorm)``.

    ``gamma`` keeps the sign of ``omega_rg/m - omega_0/n``; the 2*pi factor
    turns the cyclic detuning into rad/s to match the angular hold band.
    """
    t_renorm = setup.omega_h / setup.n
    detuning = TWO_PI * (setup.omega_rg / setup.m - setup.omega_0 / setup.n)
    return DimensionlessParams(
        eps1=t_renorm * setup.t1,
        eps2=t_renorm * setup.t2,
        gamma=detuning / t_renorm,
        t_renorm=t_renorm,
    )


def recover_circuit(dp: DimensionlessParams, r1: float, c1: float, n: int):
    """Invert :func:`to_dimensionless` for the hold band and detuning.

    Returns ``(omega_h, detuning)`` with both in rad/s.
    """
    t_renorm = dp.eps1 / (r1 * c1)
    return t_renorm * n, dp.gamma * t_renorm


def effective_params(dp: DimensionlessParams) -> AlphaPair:
    product = dp.eps1 * dp.eps2
    return AlphaPair(alpha0=dp.gamma / product, alpha1=-(dp.eps1 + dp.eps2) / product)


def rhs(state, dp: DimensionlessParams):
    """Time derivative ``(dphi, dy, dz)`` of a state ``(phi, y, z)``.

    ``state`` may be a :class:`ModelState` or any 3-sequence; array
    components are evaluated elementwise.
    """
    if isinstance(state, ModelState):
        phi, y, z = state.as_tuple()
    else:
        phi, y, z = state
    dz = (dp.gamma - (dp.eps1 + dp.eps2) * z - (1.0 + dp.eps1 * np.cos(phi)) * y) / (
        dp.eps1 * dp.eps2
    )
    return (y, z, dz)


def simulate(
    dp: DimensionlessParams,
    init: ModelState = DEFAULT_INIT,
    dt: float = 1e-3,
    n_steps: int = 100_000,
    transient: int | None = None,
    stride: int = 1,
) -> Trajectory:
    """Integrate the model with classical fixed-step RK4.

    Sample ``k`` is the state at dimensionless time ``k*dt`` for
    ``k = 0 .. n_steps-1``. The first ``transient`` samples (default: 20% of
    the run) are dropped and every ``stride``-th remaining sample is kept.

    Raises
    ------
    SimulationDiverged
        If the state becomes non-finite; ``exc.step`` holds the step index.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if transient is None:
        transient = n_steps // 5
    if not 0 <= transient < n_steps:
        raise ValueError("transient must lie in [0, n_steps)")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if (n_steps - transient + stride - 1) // stride < 2:
        raise ValueError("run too short: fewer than 2 samples would be kept")
    if not isinstance(init, ModelState):
        init = ModelState(*init)

    samples, failed = _backend.rk4_integrate(
        float(dp.eps1), float(dp.eps2), float(dp.gamma),
        init.phi, init.y, init.z,
        float(dt), int(n_steps), int(transient), int(stride),
    )
    if failed >= 0:
        raise SimulationDiverged(failed)
    t0 = transient * dt
    step = stride * dt
    return Trajectory(
        TimeSeries(t0, step, samples[:, 0]),
        TimeSeries(t0, step, samples[:, 1]),
        TimeSeries(t0, step, samples[:, 2]),
    )


def spike_times(y: TimeSeries, spike_threshold: float | None = None) -> np.ndarray:
    """Sample indices of upward threshold crossings."""
    v = y.values
    if spike_threshold is None:
        spike_threshold = 0.5 * (v.min() + v.max())
    return np.flatnonzero((v[:-1] < spike_threshold) & (v[1:] >= spike_threshold)) + 1


def default_burst_gap(isi: np.ndarray) -> float:
    """Inter-spike interval above which a new burst starts.

    Distinct short and long intervals (ratio >= 3) are split at their
    geometric mean; otherwise the train is treated as tonic spiking and every
    spike forms its own burst.
    """
    lo, hi = float(isi.min()), float(isi.max())
    if hi >= 3.0 * lo:
        return math.sqrt(lo * hi)
    return 0.5 * lo


def count_spikes_per_burst(
    y: TimeSeries,
    spike_threshold: float | None = None,
    burst_gap: float | None = None,
) -> list[int]:
    """Number of spikes in each burst of ``y``.

    Spikes are upward crossings of ``spike_threshold`` (default: midpoint of
    the series range). Consecutive spikes closer than ``burst_gap`` (in the
    series' time units) belong to the same burst.
    """
    idx = spike_times(y, spike_threshold)
    if len(idx) == 0:
        return []
    if len(idx) == 1:
        return [1]
    isi = np.diff(idx) * y.dt
    gap = default_burst_gap(isi) if burst_gap is None else burst_gap
    counts = []
    current = 1
    for interval in isi:
        if interval < gap:
            current += 1
        else:
            counts.append(current)
            current = 1
    counts.append(current)
    return counts
