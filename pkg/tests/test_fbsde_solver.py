import numpy as np
import pytest

from subfbsde import (
    ContinuationConfig,
    DivergedError,
    ForcingSet,
    SolutionTriple,
    continuation_transform,
    eta0,
    get_bundle,
    m_norm,
    picard_forcings,
    solve_fbsde,
    solve_linear,
)
from oracles import canonical_coupled_oracle


def test_config_validation():
    with pytest.raises(ValueError):
        ContinuationConfig(eta=0.0)
    with pytest.raises(ValueError):
        ContinuationConfig(eta=1.5)
    with pytest.raises(ValueError):
        ContinuationConfig(picard_tol=0.0)
    with pytest.raises(ValueError):
        ContinuationConfig(strategy="adaptive")


def test_picard_forcings_eta_zero_is_identity(jump_ensemble):
    m, n = jump_ensemble.n_paths, jump_ensemble.n_steps
    base = ForcingSet.constant(m, n, b0=0.4, phi0=0.2)
    theta = SolutionTriple.zeros(jump_ensemble)
    theta.x += 1.0
    theta.y -= 0.5
    out = picard_forcings(get_bundle("canonical_monotone"), theta, 0.0, base, jump_ensemble)
    for name in ("b0", "g0", "delta0", "h0", "sigma0", "phi0"):
        assert np.array_equal(getattr(out, name), getattr(base, name))


def test_picard_forcings_zero_seed_canonical_vanishes(jump_ensemble):
    m, n = jump_ensemble.n_paths, jump_ensemble.n_steps
    base = ForcingSet.zeros(m, n)
    theta = SolutionTriple.zeros(jump_ensemble)
    out = picard_forcings(get_bundle("canonical_monotone"), theta, 1.0, base, jump_ensemble)
    for name in ("b0", "g0", "delta0", "h0", "sigma0", "phi0"):
        assert np.all(getattr(out, name) == 0.0)


def test_picard_forcings_linear_in_iterate(jump_ensemble):
    m, n = jump_ensemble.n_paths, jump_ensemble.n_steps
    base = ForcingSet.zeros(m, n)
    bundle = get_bundle("canonical_monotone", c=0.5)
    theta = SolutionTriple.zeros(jump_ensemble)
    rng = np.random.default_rng(8)
    theta.x += rng.standard_normal((m, n + 1))
    theta.y += rng.standard_normal((m, n + 1))
    theta.z += rng.standard_normal((m, n + 1))
    f1 = picard_forcings(bundle, theta, 0.7, base, jump_ensemble)
    f2 = picard_forcings(bundle, theta.scaled(2.0), 0.7, base, jump_ensemble)
    for name in ("b0", "g0", "delta0", "h0", "sigma0", "phi0"):
        assert np.allclose(getattr(f2, name), 2.0 * getattr(f1, name), atol=1e-12)


def test_linear_bundle_matches_linear_solver(jump_ensemble):
    m, n = jump_ensemble.n_paths, jump_ensemble.n_steps
    theta, diag = solve_fbsde(get_bundle("linear_test"), 1.0, jump_ensemble)
    direct, _ = solve_linear(ForcingSet.zeros(m, n), 1.0, jump_ensemble)
    assert m_norm(theta.sub(direct)).value <= 1e-10
    assert diag.total_linear_solves == 2  # fixed point reached immediately
    assert diag.levels[0].converged


def test_canonical_drift_only_matches_shooting_oracle(drift_ensemble):
    theta, diag = solve_fbsde(get_bundle("canonical_monotone"), 1.0, drift_ensemble)
    t = drift_ensemble.grid.times()
    x_o, y_o = canonical_coupled_oracle(t, x0=1.0, c=1.0)
    oracle = SolutionTriple(
        x=np.broadcast_to(x_o, theta.x.shape).copy(),
        y=np.broadcast_to(y_o, theta.y.shape).copy(),
        z=np.zeros_like(theta.z),
        dt=theta.dt,
        dL=theta.dL,
    )
    rel = m_norm(theta.sub(oracle)).value / m_norm(oracle).value
    assert rel <= 0.02
    assert not diag.diverged
    assert diag.apriori is not None and np.isfinite(diag.apriori.ratio)


def test_hp2_bundle_solves_via_mirror(drift_ensemble):
    dec, _ = solve_fbsde(get_bundle("canonical_monotone"), 1.0, drift_ensemble)
    inc, _ = solve_fbsde(get_bundle("canonical_flipped_hp2"), 1.0, drift_ensemble)
    assert np.allclose(inc.x, dec.x, atol=1e-10)
    assert np.allclose(inc.y, -dec.y, atol=1e-10)
    assert np.allclose(inc.z, -dec.z, atol=1e-10)


def test_terminal_condition_holds(jump_ensemble):
    bundle = get_bundle("riccati_test", eps=0.05)
    config = ContinuationConfig(picard_tol=1e-5, max_picard=60)
    theta, diag = solve_fbsde(bundle, 1.0, jump_ensemble, config)
    n = jump_ensemble.n_steps
    st = jump_ensemble.state_at(n)
    gap = np.max(np.abs(theta.y[:, n] - bundle.phi(st, theta.x[:, n])))
    # terminal map is enforced through the Picard forcings, so the residual
    # gap is of the order of the stopping threshold
    assert gap <= 10.0 * diag.picard_threshold


def test_divergence_demo_raises(jump_ensemble):
    with pytest.raises(DivergedError) as err:
        solve_fbsde(get_bundle("divergence_demo"), 1.0, jump_ensemble)
    e = err.value
    assert e.alpha == 1.0 and e.eta == 1.0
    assert e.diagnostics is not None and e.diagnostics.diverged
    assert len(e.residuals) >= 2


def test_uniqueness_across_picard_seeds(drift_ensemble, jump_ensemble):
    bundle = get_bundle("canonical_monotone", c=0.5)
    config = ContinuationConfig(picard_tol=1e-5, max_picard=40)
    for ens in (drift_ensemble, jump_ensemble):
        t_zero, d_zero = solve_fbsde(bundle, 1.0, ens, config)
        seed = SolutionTriple.zeros(ens)
        seed.y += 0.5
        seed.x -= 0.25
        t_pert, _ = solve_fbsde(bundle, 1.0, ens, config, theta0=seed)
        assert m_norm(t_zero.sub(t_pert)).value <= 2.0 * d_zero.picard_threshold


def test_nested_agrees_with_flatten(jump_ensemble):
    bundle = get_bundle("canonical_monotone", c=0.5)
    nested_cfg = ContinuationConfig(strategy="nested", eta=0.5, picard_tol=1e-5)
    flat_cfg = ContinuationConfig(picard_tol=1e-7)
    t_nested, d_nested = solve_fbsde(bundle, 1.0, jump_ensemble, nested_cfg)
    t_flat, _ = solve_fbsde(bundle, 1.0, jump_ensemble, flat_cfg)
    rel = m_norm(t_nested.sub(t_flat)).value / m_norm(t_flat).value
    assert rel <= 1e-3
    assert d_nested.total_linear_solves > 2


def test_nested_depth_bound_enforced(jump_ensemble):
    # the derived step bound forces far more levels than the depth cap
    bundle = get_bundle("canonical_monotone")
    config = ContinuationConfig(strategy="nested", nested_max_depth=3)
    assert config.resolved_eta(bundle, 1.0, 1.0) == pytest.approx(eta0(1, 1, 1, 1, 16.0))
    with pytest.raises(ValueError, match="nested_max_depth"):
        solve_fbsde(bundle, 1.0, jump_ensemble, config)


def test_small_step_contracts_fast(jump_ensemble):
    bundle = get_bundle("canonical_monotone", c=0.5)
    step = eta0(1.0, 0.5, 1.0, 1.0, 1.0)
    target = continuation_transform(bundle, step)
    config = ContinuationConfig(picard_tol=1e-12, max_picard=10)
    theta, diag = solve_fbsde(target, 1.0, jump_ensemble, config)
    level = diag.levels[0]
    assert level.ratio is not None and level.ratio <= 0.5


def test_diagnostics_serialization(drift_ensemble):
    _, diag = solve_fbsde(get_bundle("canonical_monotone", c=0.5), 1.0, drift_ensemble)
    doc = diag.to_json_dict()
    assert isinstance(doc["levels"], list) and doc["levels"]
    assert doc["apriori"] is not None
    assert doc["total_linear_solves"] == diag.total_linear_solves


def test_warm_start_toggle(jump_ensemble):
    bundle = get_bundle("canonical_monotone", c=0.5)
    for warm in (True, False):
        cfg = ContinuationConfig(strategy="nested", eta=0.5, picard_tol=1e-4, warm_start=warm)
        theta, _ = solve_fbsde(bundle, 1.0, jump_ensemble, cfg)
        assert np.all(np.isfinite(theta.x))
