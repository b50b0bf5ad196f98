"""Sub-diffusion path ensembles X_t = x0 + B_{L_{(t-a)^+}}.

Brownian increments are generated conditionally on the clock: given dL[k],
dB[k] ~ N(0, dL[k]), independent across steps and paths.  This matches the
law of the time-changed Brownian motion at the grid nodes without simulating
the inner Brownian path.  The pair (X_t, R_t) is jointly Markov; R is the
feature that restores Markovianity for the regression stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clock import ClockPath, SubordinatorSpec, TimeGrid, sample_clock_ensemble

__all__ = [
    "SubDiffusionPath",
    "MarkovState",
    "PathEnsemble",
    "sample_subdiffusion",
    "markov_state",
    "build_ensemble",
]


@dataclass
class SubDiffusionPath:
    """One sub-diffusion path on the clock's grid."""

    clock: ClockPath
    X: np.ndarray
    dB: np.ndarray


@dataclass
class MarkovState:
    """Augmented Markov state (X_t, R_t); solver iterates ride along in s."""

    x: object  # scalar or per-path array
    r: object
    s: object = None


def sample_subdiffusion(
    clocks: list[ClockPath], x0: float, rng: np.random.Generator
) -> list[SubDiffusionPath]:
    """Brownian increments with variance dL[k] on a shared grid."""
    if not clocks:
        return []
    grid = clocks[0].grid
    for c in clocks[1:]:
        if c.grid != grid:
            raise ValueError("all clocks must share one grid")
    n = grid.n_steps
    Z = rng.standard_normal((len(clocks), n))
    out = []
    for i, c in enumerate(clocks):
        dB = np.sqrt(c.dL) * Z[i]  # exactly zero on frozen steps
        X = x0 + np.concatenate(([0.0], np.cumsum(dB)))
        out.append(SubDiffusionPath(clock=c, X=X, dB=dB))
    return out


def markov_state(path: SubDiffusionPath, k: int) -> MarkovState:
    """State (X[k], R[k]) at grid index k."""
    n = path.clock.grid.n_steps
    if not (0 <= k <= n):
        raise IndexError(f"grid index {k} out of range [0, {n}]")
    return MarkovState(x=float(path.X[k]), r=float(path.clock.R[k]))


@dataclass
class PathEnsemble:
    """Stacked path ensemble used by the solver modules.

    Arrays are (n_paths, n_steps+1) for node values and (n_paths, n_steps)
    for increments.
    """

    grid: TimeGrid
    x0: float
    L: np.ndarray
    R: np.ndarray
    dL: np.ndarray
    X: np.ndarray
    dB: np.ndarray
    kappa: float = 1.0

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def state_at(self, k: int) -> MarkovState:
        return MarkovState(x=self.X[:, k], r=self.R[:, k])

    def features_at(self, k: int, include_r: bool = True) -> np.ndarray:
        cols = [self.X[:, k]]
        if include_r:
            cols.append(self.R[:, k])
        return np.column_stack(cols)


def build_ensemble(
    spec: SubordinatorSpec, grid: TimeGrid, n_paths: int, seed: int, x0: float = 0.0
) -> PathEnsemble:
    """Clock ensemble plus conditional Brownian increments, fully seeded.

    Clock paths use per-path substreams (seed, i); the Gaussian block uses a
    separate stream keyed off (seed, n_paths, 1) so it never collides with a
    clock substream.
    """
    clocks = sample_clock_ensemble(spec, grid, n_paths, seed)
    rng = np.random.default_rng([seed, n_paths, 1])
    paths = sample_subdiffusion(clocks, x0, rng)
    return PathEnsemble(
        grid=grid,
        x0=x0,
        L=np.stack([c.L for c in clocks]),
        R=np.stack([c.R for c in clocks]),
        dL=np.stack([c.dL for c in clocks]),
        X=np.stack([p.X for p in paths]),
        dB=np.stack([p.dB for p in paths]),
        kappa=spec.kappa,
    )
