"""Coefficient bundles, monotonicity checking, and the continuation family.

A bundle carries vectorized evaluators
    b(t, state, x, y), g(t, state, x, y),
    delta(t, state, x, y, z), sigma(t, state, x, y, z), h(t, state, x, y, z),
    phi(state, x)
where `state` is the MarkovState (X_t, R_t) realizing the omega-dependence,
plus a declared Lipschitz constant L >= 1 and monotonicity constant c > 0.

orientation="decreasing" is the standard monotone regime (terminal map
non-decreasing); orientation="increasing" is the sign-flipped mirror regime
(terminal map non-increasing), solved by the same machinery through the
(y, z) -> (-y, -z) change of variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .subdiffusion import MarkovState

__all__ = [
    "CoefficientBundle",
    "HypothesisReport",
    "ContinuationParams",
    "PointCloud",
    "check_hypothesis",
    "continuation_transform",
    "mirror_bundle",
    "eta0",
    "eta0_terms",
    "default_c1",
    "get_bundle",
    "register_bundle",
    "BUNDLE_NAMES",
]

# numeric slack on the monotonicity margins at equality cases
MARGIN_SLACK = 1e-12


@dataclass
class CoefficientBundle:
    b: Callable
    g: Callable
    delta: Callable
    sigma: Callable
    h: Callable
    phi: Callable
    lipschitz: float = 1.0
    monotonicity: float = 1.0
    orientation: str = "decreasing"
    name: str = ""

    def __post_init__(self):
        if self.lipschitz < 1.0:
            raise ValueError("declared Lipschitz constant must be >= 1")
        if not (self.monotonicity > 0.0):
            raise ValueError("declared monotonicity constant must be > 0")
        if self.orientation not in ("decreasing", "increasing"):
            raise ValueError(f"unknown orientation {self.orientation!r}")


@dataclass
class HypothesisReport:
    lipschitz_estimate: float
    m1_margin: float
    m2_margin: float
    phi_monotone: bool
    samples_used: int
    verdict: dict
    violation: dict | None = None

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())

    def to_json_dict(self) -> dict:
        return {
            "lipschitz_estimate": self.lipschitz_estimate,
            "m1_margin": self.m1_margin,
            "m2_margin": self.m2_margin,
            "phi_monotone": self.phi_monotone,
            "samples_used": self.samples_used,
            "verdict": dict(self.verdict),
            "violation": self.violation,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ContinuationParams:
    alpha: float
    c_alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class PointCloud:
    """Sampling box for the hypothesis checker."""

    n_samples: int = 2000
    t_max: float = 1.0
    box: float = 2.0  # x, y, z sampled uniformly in [-box, box]
    r_max: float = 1.0
    state_x_box: float = 2.0


def _sample_cloud(cloud: PointCloud, rng: np.random.Generator):
    m = cloud.n_samples
    t = rng.random(m) * cloud.t_max
    state = MarkovState(
        x=(rng.random(m) * 2.0 - 1.0) * cloud.state_x_box,
        r=rng.random(m) * cloud.r_max,
    )
    pts = (rng.random((6, m)) * 2.0 - 1.0) * cloud.box
    return t, state, pts


def check_hypothesis(
    bundle: CoefficientBundle, sampler: PointCloud, rng: np.random.Generator
) -> HypothesisReport:
    """Sampling falsifier for the monotonicity hypothesis.

    A pass is necessary evidence only; a fail returns a concrete violating
    tuple.  Margins are the worst observed values of
        LHS + c*(|dx|^2 + |dy|^2 [+ |dz|^2])      (decreasing orientation)
        c*(...) - LHS                              (increasing orientation)
    so that <= slack means pass.
    """
    t, state, (x1, x2, y1, y2, z1, z2) = _sample_cloud(sampler, rng)
    c = bundle.monotonicity
    sgn = 1.0 if bundle.orientation == "decreasing" else -1.0

    db = bundle.b(t, state, x1, y1) - bundle.b(t, state, x2, y2)
    dg = bundle.g(t, state, x1, y1) - bundle.g(t, state, x2, y2)
    dd = bundle.delta(t, state, x1, y1, z1) - bundle.delta(t, state, x2, y2, z2)
    ds = bundle.sigma(t, state, x1, y1, z1) - bundle.sigma(t, state, x2, y2, z2)
    dh = bundle.h(t, state, x1, y1, z1) - bundle.h(t, state, x2, y2, z2)
    dphi = bundle.phi(state, x1) - bundle.phi(state, x2)
    for name, arr in (("b", db), ("g", dg), ("delta", dd), ("sigma", ds), ("h", dh)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"coefficient {name} produced non-finite values")

    dx, dy, dz = x1 - x2, y1 - y2, z1 - z2
    m1_lhs = db * dy - dg * dx
    m2_lhs = ds * dz + dd * dy - dh * dx
    m1_vals = sgn * m1_lhs + c * (dx**2 + dy**2)
    m2_vals = sgn * m2_lhs + c * (dx**2 + dy**2 + dz**2)
    m1_margin = float(np.max(m1_vals))
    m2_margin = float(np.max(m2_vals))

    phi_vals = sgn * (-dphi * dx)  # <= slack means monotone in the right direction
    phi_worst = float(np.max(phi_vals))
    phi_ok = phi_worst <= MARGIN_SLACK

    # crude Lipschitz estimate from the sampled difference quotients
    est = 0.0
    n2 = np.sqrt(dx**2 + dy**2)
    n3 = np.sqrt(dx**2 + dy**2 + dz**2)
    for diff, denom in ((db, n2), (dg, n2), (dd, n3), (ds, n3), (dh, n3)):
        mask = denom > 0
        if np.any(mask):
            est = max(est, float(np.max(np.abs(diff[mask]) / denom[mask])))
    mask = np.abs(dx) > 0
    if np.any(mask):
        est = max(est, float(np.max(np.abs(dphi[mask]) / np.abs(dx[mask]))))

    verdict = {
        "m1": m1_margin <= MARGIN_SLACK,
        "m2": m2_margin <= MARGIN_SLACK,
        "phi_monotone": phi_ok,
    }
    violation = None
    if not all(verdict.values()):
        if not verdict["m1"]:
            i, which = int(np.argmax(m1_vals)), "m1"
        elif not verdict["m2"]:
            i, which = int(np.argmax(m2_vals)), "m2"
        else:
            i, which = int(np.argmax(phi_vals)), "phi"
        violation = {
            "condition": which,
            "t": float(t[i]),
            "state_x": float(state.x[i]),
            "state_r": float(state.r[i]),
            "x1": float(x1[i]),
            "x2": float(x2[i]),
            "y1": float(y1[i]),
            "y2": float(y2[i]),
            "z1": float(z1[i]),
            "z2": float(z2[i]),
        }
    return HypothesisReport(
        lipschitz_estimate=est,
        m1_margin=m1_margin,
        m2_margin=m2_margin,
        phi_monotone=phi_ok,
        samples_used=sampler.n_samples,
        verdict=verdict,
        violation=violation,
    )


def continuation_transform(bundle: CoefficientBundle, alpha: float) -> CoefficientBundle:
    """The alpha-interpolated bundle between the explicitly solvable base
    system (alpha = 0) and the target system (alpha = 1):

        b^a = a*b - (1-a)*y     delta^a = a*delta - (1-a)*y
        sigma^a = a*sigma - (1-a)*z
        g^a = a*g + (1-a)*x     h^a = a*h + (1-a)*x
        phi^a = a*phi + (1-a)*x

    The x-direction terms in g, h, phi carry a plus sign: that is what makes
    the alpha = 0 system coincide with the solvable linear base case and what
    preserves both monotonicity conditions with constant c_alpha.
    """
    params = ContinuationParams(alpha, c_alpha=alpha * bundle.monotonicity + (1.0 - alpha))
    a = alpha
    b, g, d, s, h, p = bundle.b, bundle.g, bundle.delta, bundle.sigma, bundle.h, bundle.phi
    return replace(
        bundle,
        b=lambda t, st, x, y: a * b(t, st, x, y) - (1.0 - a) * y,
        g=lambda t, st, x, y: a * g(t, st, x, y) + (1.0 - a) * x,
        delta=lambda t, st, x, y, z: a * d(t, st, x, y, z) - (1.0 - a) * y,
        sigma=lambda t, st, x, y, z: a * s(t, st, x, y, z) - (1.0 - a) * z,
        h=lambda t, st, x, y, z: a * h(t, st, x, y, z) + (1.0 - a) * x,
        phi=lambda st, x: a * p(st, x) + (1.0 - a) * x,
        monotonicity=params.c_alpha,
        lipschitz=max(1.0, a * bundle.lipschitz + (1.0 - a)),
        name=f"{bundle.name}@alpha={alpha:g}" if bundle.name else f"alpha={alpha:g}",
    )


def mirror_bundle(bundle: CoefficientBundle) -> CoefficientBundle:
    """Map a sign-flipped (increasing) bundle to an equivalent decreasing one
    via (y, z) -> (-y, -z); solutions map back by negating y and z."""
    if bundle.orientation != "increasing":
        raise ValueError("mirror_bundle expects an increasing-orientation bundle")
    b, g, d, s, h, p = bundle.b, bundle.g, bundle.delta, bundle.sigma, bundle.h, bundle.phi
    return replace(
        bundle,
        b=lambda t, st, x, y: b(t, st, x, -y),
        g=lambda t, st, x, y: -g(t, st, x, -y),
        delta=lambda t, st, x, y, z: d(t, st, x, -y, -z),
        sigma=lambda t, st, x, y, z: s(t, st, x, -y, -z),
        h=lambda t, st, x, y, z: -h(t, st, x, -y, -z),
        phi=lambda st, x: -p(st, x),
        orientation="decreasing",
        name=f"{bundle.name}#mirrored" if bundle.name else "mirrored",
    )


def default_c1(lipschitz: float) -> float:
    """Fallback for the cross-term constant in the step-size bound; the bound
    only fixes its dependence on (L, c), not its value."""
    return 4.0 * (1.0 + lipschitz) ** 2


def eta0_terms(L: float, c: float, kappa: float, T: float, C1: float):
    if min(L, c, kappa, T, C1) <= 0.0:
        raise ValueError("all step-bound inputs must be positive")
    c_eff = min(c, 1.0)
    time_term = 1.0 / (3.0 * (1.0 + L) * ((1.0 + 1.0 / kappa) * T + 1.0))
    contraction_term = c_eff / (1.0 + 4.0 * C1)
    return time_term, contraction_term


def eta0(L: float, c: float, kappa: float, T: float, C1: float) -> float:
    """Continuation step bound: min of a horizon term and a contraction term."""
    return min(*eta0_terms(L, c, kappa, T, C1))


# ---------------------------------------------------------------------------
# built-in bundle catalog


def _canonical_monotone(c: float = 1.0) -> CoefficientBundle:
    return CoefficientBundle(
        b=lambda t, st, x, y: -c * y,
        g=lambda t, st, x, y: c * x,
        delta=lambda t, st, x, y, z: -c * y,
        sigma=lambda t, st, x, y, z: -c * z,
        h=lambda t, st, x, y, z: c * x,
        phi=lambda st, x: x,
        lipschitz=max(1.0, c),
        monotonicity=c,
        orientation="decreasing",
        name=f"canonical_monotone(c={c:g})",
    )


def _canonical_flipped_hp2(c: float = 1.0) -> CoefficientBundle:
    return CoefficientBundle(
        b=lambda t, st, x, y: c * y,
        g=lambda t, st, x, y: -c * x,
        delta=lambda t, st, x, y, z: c * y,
        sigma=lambda t, st, x, y, z: c * z,
        h=lambda t, st, x, y, z: -c * x,
        phi=lambda st, x: -x,
        lipschitz=max(1.0, c),
        monotonicity=c,
        orientation="increasing",
        name=f"canonical_flipped_hp2(c={c:g})",
    )


def _linear_test() -> CoefficientBundle:
    bundle = _canonical_monotone(1.0)
    bundle.name = "linear_test"
    return bundle


def _riccati_test(c: float = 1.0, eps: float = 0.2) -> CoefficientBundle:
    # mildly nonlinear monotone bundle; tanh keeps everything Lipschitz
    return CoefficientBundle(
        b=lambda t, st, x, y: -c * y - eps * np.tanh(y),
        g=lambda t, st, x, y: c * x + eps * np.tanh(x),
        delta=lambda t, st, x, y, z: -c * y,
        sigma=lambda t, st, x, y, z: -c * z,
        h=lambda t, st, x, y, z: c * x,
        phi=lambda st, x: x + 0.5 * np.tanh(x),
        lipschitz=max(1.5, c + eps),
        monotonicity=c,
        orientation="decreasing",
        name=f"riccati_test(c={c:g},eps={eps:g})",
    )


def _cross_lipschitz(c: float = 1.0, cross: float = 0.4) -> CoefficientBundle:
    # b monotone in y, g monotone in x, cross-coupling with constant < c/2:
    # the pair still satisfies the first monotonicity condition with c/2
    if not (0.0 <= cross < c / 2.0):
        raise ValueError("cross-coupling constant must be < c/2")
    return CoefficientBundle(
        b=lambda t, st, x, y: -c * y + cross * x,
        g=lambda t, st, x, y: c * x - cross * y,
        delta=lambda t, st, x, y, z: -c * y,
        sigma=lambda t, st, x, y, z: -c * z,
        h=lambda t, st, x, y, z: c * x,
        phi=lambda st, x: x,
        lipschitz=max(1.0, c + cross),
        monotonicity=c / 2.0,
        orientation="decreasing",
        name=f"cross_lipschitz(c={c:g},cross={cross:g})",
    )


def _flipped_b_demo(c: float = 1.0) -> CoefficientBundle:
    # wrong-sign b: violates the first monotonicity condition by construction
    bundle = _canonical_monotone(c)
    bundle.b = lambda t, st, x, y: y
    bundle.name = f"flipped_b_demo(c={c:g})"
    return bundle


def _divergence_demo(gain: float = 4.0) -> CoefficientBundle:
    # strongly coupled, non-monotone; Lipschitz alone is not enough and the
    # collapsed-step Picard iteration blows up on it
    return CoefficientBundle(
        b=lambda t, st, x, y: gain * y,
        g=lambda t, st, x, y: -gain * x,
        delta=lambda t, st, x, y, z: gain * y,
        sigma=lambda t, st, x, y, z: 0.0 * z,
        h=lambda t, st, x, y, z: -gain * x,
        phi=lambda st, x: x,
        lipschitz=max(1.0, gain),
        monotonicity=1.0,
        orientation="decreasing",
        name=f"divergence_demo(gain={gain:g})",
    )


_REGISTRY: dict[str, Callable[..., CoefficientBundle]] = {
    "canonical_monotone": _canonical_monotone,
    "canonical_flipped_hp2": _canonical_flipped_hp2,
    "linear_test": _linear_test,
    "riccati_test": _riccati_test,
    "cross_lipschitz": _cross_lipschitz,
    "flipped_b_demo": _flipped_b_demo,
    "divergence_demo": _divergence_demo,
}

BUNDLE_NAMES = tuple(_REGISTRY)


def register_bundle(name: str, factory: Callable[..., CoefficientBundle]) -> None:
    _REGISTRY[name] = factory


def get_bundle(name: str, **params) -> CoefficientBundle:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown bundle {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)
