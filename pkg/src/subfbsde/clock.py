"""Subordinator path sampling and exact inversion into the delayed clock.

The driving noise of every solver in this package is a Brownian motion run on
the inverse of a drift-positive subordinator.  This module samples the
subordinator skeleton (drift kappa plus finitely many jumps on a finite
intrinsic horizon) and inverts it *exactly* at the grid nodes, producing the
delayed clock L_{(t-a)^+} together with the overshoot process R_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SubordinatorSpec",
    "SubordinatorSkeleton",
    "TimeGrid",
    "ClockPath",
    "InsufficientHorizonError",
    "sample_subordinator",
    "invert_clock",
    "sample_clock_ensemble",
]

_JUMP_KINDS = ("none", "exponential", "pareto", "fixed", "truncated_stable")


class InsufficientHorizonError(RuntimeError):
    """The sampled skeleton does not cover the intrinsic times the grid needs."""


@dataclass(frozen=True)
class SubordinatorSpec:
    """Drift-positive subordinator: S_r = kappa*r + compound-Poisson jumps.

    jump_kind selects the jump activity:
      * "none"              -- pure drift, S_r = kappa*r.
      * "exponential"       -- compound Poisson, exponential sizes, jump_param = mean.
      * "pareto"            -- compound Poisson, Pareto sizes, jump_param = (scale, shape).
      * "fixed"             -- compound Poisson, constant sizes, jump_param = size.
      * "truncated_stable"  -- stable index beta = jump_param, jumps below `cutoff`
                               dropped; mapped to the equivalent compound-Poisson
                               process with rate cutoff^(-beta)/Gamma(1-beta) and
                               Pareto(cutoff, beta) sizes.
    """

    kappa: float
    jump_kind: str = "none"
    rate: float = 0.0
    jump_param: object = None
    cutoff: float | None = None

    def __post_init__(self):
        if not (self.kappa > 0.0):
            raise ValueError(f"subordinator drift kappa must be > 0, got {self.kappa}")
        if self.jump_kind not in _JUMP_KINDS:
            raise ValueError(f"unknown jump_kind {self.jump_kind!r}")
        if self.jump_kind == "none":
            return
        if self.jump_kind == "truncated_stable":
            beta = self.jump_param
            if not (isinstance(beta, (int, float)) and 0.0 < beta < 1.0):
                raise ValueError("truncated_stable needs index jump_param in (0,1)")
            if self.cutoff is None or not (self.cutoff > 0.0):
                raise ValueError("truncated_stable needs cutoff > 0")
            return
        if self.rate < 0.0:
            raise ValueError(f"jump rate must be >= 0, got {self.rate}")
        if self.jump_kind == "exponential":
            if not (isinstance(self.jump_param, (int, float)) and self.jump_param > 0):
                raise ValueError("exponential jumps need a positive mean")
        elif self.jump_kind == "fixed":
            if not (isinstance(self.jump_param, (int, float)) and self.jump_param > 0):
                raise ValueError("fixed jumps need a positive size")
        elif self.jump_kind == "pareto":
            try:
                scale, shape = self.jump_param
            except (TypeError, ValueError):
                raise ValueError("pareto jumps need jump_param = (scale, shape)") from None
            if not (scale > 0 and shape > 0):
                raise ValueError("pareto scale and shape must be positive")

    def effective_rate(self) -> float:
        """Poisson intensity of the (possibly truncated) jump stream."""
        if self.jump_kind == "none":
            return 0.0
        if self.jump_kind == "truncated_stable":
            beta = float(self.jump_param)
            return self.cutoff ** (-beta) / math.gamma(1.0 - beta)
        return float(self.rate)

    def sample_jump_sizes(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.jump_kind == "exponential":
            return rng.exponential(float(self.jump_param), size=n)
        if self.jump_kind == "fixed":
            return np.full(n, float(self.jump_param))
        if self.jump_kind == "pareto":
            scale, shape = self.jump_param
            u = 1.0 - rng.random(n)  # in (0, 1]
            return scale * u ** (-1.0 / shape)
        if self.jump_kind == "truncated_stable":
            beta = float(self.jump_param)
            u = 1.0 - rng.random(n)
            return self.cutoff * u ** (-1.0 / beta)
        return np.zeros(n)

    def to_json_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "jump_kind": self.jump_kind,
            "rate": self.rate,
            "jump_param": list(self.jump_param)
            if isinstance(self.jump_param, (tuple, list))
            else self.jump_param,
            "cutoff": self.cutoff,
        }


@dataclass(frozen=True)
class SubordinatorSkeleton:
    """Finite jump skeleton of S on an intrinsic-time horizon.

    S_r = kappa*r + sum of jump_sizes at intrinsic jump_times <= r.
    """

    spec: SubordinatorSpec
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    horizon: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        js = np.asarray(self.jump_sizes, dtype=float)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_sizes", js)
        if jt.shape != js.shape:
            raise ValueError("jump_times and jump_sizes must have equal length")
        if jt.size:
            if np.any(np.diff(jt) <= 0.0):
                raise ValueError("jump_times must be strictly increasing")
            if np.any(jt <= 0.0):
                raise ValueError("jump_times must be positive")
            if np.any(js <= 0.0):
                raise ValueError("jump sizes must be strictly positive")

    def evaluate(self, r) -> np.ndarray:
        """S_r (right-continuous) at intrinsic times r."""
        r = np.asarray(r, dtype=float)
        csum = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        idx = np.searchsorted(self.jump_times, r, side="right")
        return self.spec.kappa * r + csum[idx]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform real-time grid on [0, T] with activation delay a."""

    a: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not (0.0 <= self.a < self.T < math.inf):
            raise ValueError(f"need 0 <= a < T < inf, got a={self.a}, T={self.T}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass
class ClockPath:
    """Delayed inverse subordinator on a grid.

    L[k] = L_{(t_k - a)^+}, R[k] = overshoot at t_k (R[0] = a),
    dL[k] = L[k+1] - L[k] with 0 <= dL[k] <= dt/kappa for every k.
    """

    grid: TimeGrid
    L: np.ndarray
    R: np.ndarray
    dL: np.ndarray


def sample_subordinator(
    spec: SubordinatorSpec, horizon: float, rng: np.random.Generator
) -> SubordinatorSkeleton:
    """Sample the jump skeleton of S on intrinsic times [0, horizon]."""
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    lam = spec.effective_rate()
    if lam == 0.0:
        return SubordinatorSkeleton(spec, np.empty(0), np.empty(0), horizon)
    n = int(rng.poisson(lam * horizon))
    times = np.sort(rng.random(n)) * horizon
    # coincident uniform draws are a probability-zero event but would violate
    # the strict-monotonicity invariant; drop duplicates defensively
    keep = np.concatenate(([True], np.diff(times) > 0.0)) if n else np.empty(0, bool)
    times = times[keep] if n else times
    sizes = spec.sample_jump_sizes(times.size, rng)
    return SubordinatorSkeleton(spec, times, sizes, horizon)


def _invert_at(skeleton: SubordinatorSkeleton, u: np.ndarray):
    """Exact inverse: returns (L_u, S_{L_u}) for nonnegative real times u."""
    kappa = skeleton.spec.kappa
    jt, js = skeleton.jump_times, skeleton.jump_sizes
    csum = np.concatenate(([0.0], np.cumsum(js)))
    s_minus = kappa * jt + csum[:-1]  # S just before each jump
    s_plus = s_minus + js  # S just after each jump
    idx = np.searchsorted(s_plus, u, side="right")  # jumps fully below u
    L = (u - csum[idx]) / kappa
    s_at = u.astype(float).copy()
    if jt.size:
        j = np.minimum(idx, jt.size - 1)
        flat = (idx < jt.size) & (u >= s_minus[j])
        L[flat] = jt[j[flat]]
        s_at[flat] = s_plus[j[flat]]
    return L, s_at


def invert_clock(skeleton: SubordinatorSkeleton, grid: TimeGrid) -> ClockPath:
    """Invert the skeleton into the delayed clock L_{(t-a)^+} and overshoot R.

    Between jumps L grows linearly with slope 1/kappa; across a jump of S at
    intrinsic time r the clock is frozen at r for the whole jump interval.
    The overshoot is R_t = a + S_{L_{(t-a)^+}} - t.
    """
    t = grid.times()
    u = np.maximum(t - grid.a, 0.0)
    L_exact, s_at = _invert_at(skeleton, u)
    if L_exact[-1] > skeleton.horizon:
        raise InsufficientHorizonError(
            f"skeleton horizon {skeleton.horizon} < required intrinsic time {L_exact[-1]}"
        )
    # float guard: the exact increments satisfy 0 <= dL <= dt/kappa; clip the
    # sub-ulp rounding noise so the bound holds as stored
    dL = np.clip(np.diff(L_exact), 0.0, grid.dt / skeleton.spec.kappa)
    L = np.concatenate(([0.0], np.cumsum(dL)))
    R = np.maximum(grid.a + s_at - t, 0.0)
    return ClockPath(grid=grid, L=L, R=R, dL=dL)


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, path_index])


def sample_clock_ensemble(
    spec: SubordinatorSpec, grid: TimeGrid, n_paths: int, seed: int
) -> list[ClockPath]:
    """Independent clock paths, reproducible per (seed, path index)."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    horizon = grid.T / spec.kappa  # drift alone reaches T
    if spec.effective_rate() == 0.0:
        # jump-free clock is deterministic: invert once, share the path
        path = invert_clock(sample_subordinator(spec, horizon, _path_rng(seed, 0)), grid)
        return [path] * n_paths
    out = []
    for i in range(n_paths):
        skel = sample_subordinator(spec, horizon, _path_rng(seed, i))
        out.append(invert_clock(skel, grid))
    return out
