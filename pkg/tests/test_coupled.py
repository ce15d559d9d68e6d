import math

import numpy as np
import pytest

from sulfatation.config import default_config
from sulfatation.coupled import (
    B_ERR,
    B_SOL,
    D,
    GAMMA,
    W,
    CoupledState,
    IntegrationError,
    ShiftedJacobian,
    assemble_jacobian,
    global_rhs,
    implicit_step,
    initial_state,
    integrate,
    oracle_run,
    oracle_step,
    solve_linear,
    species_discrepancy,
    system_for,
)
from sulfatation.macro import macro_rhs
from sulfatation.micro import cell_rhs


def small(nx=4, ny=5, **params):
    return default_config().replace(grid={"nx": nx, "ny": ny}, params=params)


def random_state(cfg, rng, t=0.0):
    nx, ny = cfg.grid.nx, cfg.grid.ny
    u1 = rng.uniform(0, 0.02, nx)
    u1[0] = cfg.params.u1_dirichlet
    return CoupledState.from_fields(
        t, u1, rng.uniform(0, 0.01, (nx, ny)), rng.uniform(0, 0.3, (nx, ny)), rng.uniform(0, 0.9, nx)
    )


def reference_rhs(state, cfg):
    """Straight-line nodewise evaluation of the model equations."""
    p = cfg.params
    nx, ny = cfg.grid.nx, cfg.grid.ny
    hx, hy = cfg.hx, cfg.hy
    u1, u2, u3, u4 = state.u1, state.u2, state.u3, state.u4
    f1 = np.zeros(nx)
    f2 = np.zeros((nx, ny))
    f3 = np.zeros((nx, ny))
    f4 = np.zeros(nx)
    for i in range(nx):
        henry = p.B * (p.H * u1[i] - u2[i][0])
        if i > 0:
            left = u1[i - 1]
            right = u1[i + 1] if i < nx - 1 else u1[i - 1]
            f1[i] = p.d1 * (left - 2 * u1[i] + right) / hx**2 - henry
        a, b = u3[i][ny - 1], u4[i]
        rate = a**p.p_order * (p.beta_bar - b) ** p.q_order if (a >= 0 and 0 <= b <= p.beta_bar) else 0.0
        for j in range(ny):
            g2_left = u2[i][j - 1] if j > 0 else u2[i][1] + 2 * hy * henry / p.d2
            g2_right = u2[i][j + 1] if j < ny - 1 else u2[i][ny - 2]
            g3_left = u3[i][j - 1] if j > 0 else u3[i][1]
            g3_right = u3[i][j + 1] if j < ny - 1 else u3[i][ny - 2] - 2 * hy * p.gamma_sw * rate / p.d3
            react = -p.phi2 * p.k2 * u2[i][j] + p.phi3 * p.k3 * u3[i][j]
            f2[i][j] = p.d2 * (g2_left - 2 * u2[i][j] + g2_right) / hy**2 + react / p.beta2
            f3[i][j] = p.d3 * (g3_left - 2 * u3[i][j] + g3_right) / hy**2 - react / p.beta3
        f4[i] = p.phi4 * p.k4 / p.beta4 * rate
    return CoupledState.from_fields(0.0, f1, f2, f3, f4).y


def test_rest_state():
    cfg = small(u1_dirichlet=0.0)
    assert not global_rhs(initial_state(cfg), cfg).any()


@pytest.mark.parametrize("seed", range(4))
def test_rhs_matches_nodewise_reference(seed):
    rng = np.random.default_rng(seed)
    cfg = small(beta2=1.3, beta3=0.7, beta4=2.0, p_order=2.0, q_order=1.5)
    state = random_state(cfg, rng)
    np.testing.assert_allclose(global_rhs(state, cfg), reference_rhs(state, cfg), rtol=1e-11, atol=1e-13)


def test_decoupled_blocks_equal_module_outputs(rng):
    cfg = small(B=0.0)
    state = random_state(cfg, rng)
    f = state.with_y(0.0, global_rhs(state, cfg))
    np.testing.assert_array_equal(f.u1, macro_rhs(state.u1, np.zeros(4), cfg))
    for i in range(4):
        r = cell_rhs(state.cell(i), state.u1[i], cfg)
        np.testing.assert_array_equal(f.u2[i], r.r_u2)
        np.testing.assert_array_equal(f.u3[i], r.r_u3)
        assert f.u4[i] == r.r_u4


def test_state_layout():
    cfg = small(nx=3, ny=4)
    s = initial_state(cfg)
    assert s.size == 3 * (2 * 4 + 2)
    assert s.u1[0] == cfg.params.u1_dirichlet
    with pytest.raises(ValueError):
        s.y[0] = 1.0
    with pytest.raises(ValueError):
        global_rhs(s, small(nx=4, ny=4))


def test_initial_profiles_validated():
    cfg = small().replace(initial={"u2_0": lambda x, y: -1.0 + 0 * x * y})
    with pytest.raises(ValueError):
        initial_state(cfg)


@pytest.mark.parametrize("seed", range(3))
def test_assembled_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = small(nx=3, ny=4)
    state = random_state(cfg, rng)
    jac = assemble_jacobian(state, cfg).toarray()
    h = 1e-7
    fd = np.empty_like(jac)
    for k in range(state.size):
        e = np.zeros(state.size)
        e[k] = h
        fd[:, k] = (global_rhs(state.with_y(0, state.y + e), cfg) - global_rhs(state.with_y(0, state.y - e), cfg)) / (2 * h)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-6 * np.abs(jac).max())


def test_solve_identity(rng):
    cfg = small()
    state = random_state(cfg, rng)
    b = rng.normal(size=state.size)
    np.testing.assert_array_equal(solve_linear(ShiftedJacobian.at(state, cfg, 0.0), b), b)


def test_solve_decoupled_matches_cell_systems(rng):
    cfg = small(nx=3, ny=4, B=0.0)
    state = random_state(cfg, rng)
    s = 0.05
    b = rng.normal(size=state.size)
    x = state.with_y(0, solve_linear(ShiftedJacobian.at(state, cfg, s), b))
    bs = state.with_y(0, b)
    from sulfatation.micro import cell_jacobian

    for i in range(3):
        cj = cell_jacobian(state.cell(i), state.u1[i], cfg).toarray()[:, :-1]
        mat = np.eye(cj.shape[0]) - s * cj
        xi = np.linalg.solve(mat, np.concatenate([bs.u2[i], bs.u3[i], [bs.u4[i]]]))
        np.testing.assert_allclose(np.concatenate([x.u2[i], x.u3[i], [x.u4[i]]]), xi, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_solve_matches_dense_lu(seed):
    rng = np.random.default_rng(seed)
    cfg = small(nx=3, ny=4)
    state = random_state(cfg, rng)
    for s in (1e-3, 0.1, 10.0):
        m = ShiftedJacobian.at(state, cfg, s)
        b = rng.normal(size=state.size)
        dense = np.linalg.solve(m.to_sparse(state).toarray(), b)
        x = solve_linear(m, b)
        assert np.abs(x - dense).max() <= 1e-10 * np.abs(dense).max()


def test_tableau_consistency():
    assert GAMMA == pytest.approx(2 - math.sqrt(2))
    assert sum(B_SOL) == pytest.approx(1.0)
    assert sum(B_ERR) == pytest.approx(0.0, abs=1e-15)
    # second-order conditions of the main weights with nodes (0, GAMMA, 1)
    assert B_SOL[1] * GAMMA + B_SOL[2] == pytest.approx(0.5)


def test_zero_state_stays_zero():
    cfg = small(u1_dirichlet=0.0)
    new, stats = implicit_step(initial_state(cfg), 0.7, cfg)
    assert not new.y.any()
    assert stats.accepted and stats.newton_converged
    assert stats.newton_iterations == 2  # one per implicit stage
    assert new.t == 0.7


def test_step_rejects_bad_dt():
    cfg = small()
    with pytest.raises(ValueError):
        implicit_step(initial_state(cfg), 0.0, cfg)


def _decay_cfg(lam):
    return small(nx=3, ny=4, B=0.0, k2=lam, k3=0.0, k4=0.0, u1_dirichlet=0.0)


def _uniform_u2(cfg, c):
    nx, ny = cfg.grid.nx, cfg.grid.ny
    return CoupledState.from_fields(0.0, np.zeros(nx), np.full((nx, ny), c), np.zeros((nx, ny)), np.zeros(nx))


@pytest.mark.parametrize("lam, dt", [(1.0, 0.1), (1.48, 1.0), (50.0, 0.3), (1e4, 1.0)])
def test_stability_function(lam, dt):
    cfg = _decay_cfg(lam)
    new, _ = implicit_step(_uniform_u2(cfg, 0.5), dt, cfg)
    z = -lam * dt
    r = (1 + W * z + W * z * (1 + D * z) / (1 - D * z)) / (1 - D * z)
    np.testing.assert_allclose(new.u2, 0.5 * r, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("lam", [1e4, 1e6, 1e8])
def test_l_stability(lam):
    cfg = _decay_cfg(lam)
    new, stats = implicit_step(_uniform_u2(cfg, 1.0), 10.0, cfg)
    assert stats.newton_converged
    assert np.abs(new.u2).max() < 1e2 / lam


def test_oracle_zero_state():
    cfg = small(u1_dirichlet=0.0)
    assert not oracle_step(initial_state(cfg), 1e-3, cfg).y.any()


def test_oracle_fourth_order_on_decay():
    cfg = _decay_cfg(1.0)
    s = _uniform_u2(cfg, 1.0)
    errs = [abs(oracle_step(s, dt, cfg).u2[0, 0] - math.exp(-dt)) for dt in (0.2, 0.1, 0.05)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(28 < r < 34 for r in ratios)  # local error O(dt^5)


def test_oracle_run_lands_on_end():
    cfg = _decay_cfg(1.0)
    out = oracle_run(_uniform_u2(cfg, 1.0), 0.95, 0.1, cfg)
    assert out.t == 0.95
    assert out.u2[0, 0] == pytest.approx(math.exp(-0.95), rel=1e-6)


def test_t_end_zero_returns_initial_state():
    cfg = small().replace(time={"t_end": 0.0, "snapshot_times": ()})
    s0 = initial_state(cfg)
    seen = []
    assert integrate(s0, cfg, sink=lambda t, s: seen.append(t)) is s0
    assert seen == []


def _run(cfg, **kw):
    snaps, stats = [], []
    final = integrate(initial_state(cfg), cfg, sink=lambda t, s: snaps.append((t, s)), observer=lambda s, st: stats.append(st), **kw)
    return final, snaps, stats


def reduced(t_end=5.0, **time):
    snaps = tuple(t for t in (0.5, 1.0, 2.5) if t < t_end) + (t_end,)
    return default_config().replace(grid={"nx": 21, "ny": 11}, time={"t_end": t_end, "snapshot_times": snaps, **time})


def test_snapshots_hit_exactly():
    cfg = reduced()
    final, snaps, stats = _run(cfg)
    assert [t for t, _ in snaps] == [0.5, 1.0, 2.5, 5.0]
    assert all(s.t == t for t, s in snaps)
    assert final.t == 5.0
    assert all(st.dt_taken > 0 and st.accepted for st in stats)


def test_tolerance_refinement_is_self_consistent():
    loose = 1e-5
    a, _, _ = _run(reduced(rel_tol=loose))
    b, _, _ = _run(reduced(rel_tol=loose / 2))
    assert max(species_discrepancy(a, b)[k] for k in ("u1", "u2", "u3")) < loose
    assert np.abs(a.u4 - b.u4).max() < loose * max(np.abs(b.u4).max(), 1.0)


def test_deterministic():
    a, _, sa = _run(reduced())
    b, _, sb = _run(reduced())
    assert a.y.tobytes() == b.y.tobytes()
    assert [s.dt_taken for s in sa] == [s.dt_taken for s in sb]


def test_conservation_audit_on_reduced_run():
    cfg = reduced(t_end=50.0)
    sys_ = system_for(cfg)
    s0 = initial_state(cfg)
    total0 = sys_.sulfur_total(s0.y)
    acc = {"src": 0.0, "worst": 0.0}

    def observe(state, stats):
        acc["src"] += stats.net_sulfur_source
        total = sys_.sulfur_total(state.y)
        acc["worst"] = max(acc["worst"], abs(total - total0 - acc["src"]) / total)

    integrate(s0, cfg, observer=observe)
    assert acc["worst"] < 10 * cfg.time.rel_tol
    assert acc["worst"] < 1e-12


def test_source_equals_rate_of_total(rng):
    cfg = small(nx=5, ny=6, beta2=1.4, beta3=0.6)
    sys_ = system_for(cfg)
    state = random_state(cfg, rng)
    f = global_rhs(state, cfg)
    # the total is linear, so its derivative is the total of the derivative
    rate = sys_.sulfur_total(f)
    assert rate == pytest.approx(sys_.sulfur_source(state.y), rel=1e-12)


def test_concentrations_stay_nonnegative():
    cfg = reduced(t_end=200.0)
    lowest = []
    integrate(initial_state(cfg), cfg, observer=lambda s, st: lowest.append(s.y.min()))
    assert min(lowest) >= -10 * cfg.time.rel_tol


def test_step_underflow_is_fatal():
    cfg = reduced(t_end=1.0, rel_tol=1e-300, abs_tol=1e-300)
    with pytest.raises(IntegrationError) as info:
        integrate(initial_state(cfg), cfg)
    assert info.value.state is not None


def test_one_implicit_step_vs_many_oracle_steps():
    cfg = reduced(t_end=5.0, rel_tol=1e-8, abs_tol=1e-12)
    start = integrate(initial_state(cfg), cfg)
    dt = 0.01
    new, stats = implicit_step(start, dt, cfg)
    ref = oracle_run(start, start.t + dt, dt / 100, cfg)
    scale = cfg.time.abs_tol + cfg.time.rel_tol * np.abs(ref.y)
    assert stats.accepted
    assert np.max(np.abs(new.y - ref.y) / scale) < 10.0


@pytest.mark.slow
def test_adaptive_run_matches_oracle_on_reference_grid():
    cfg = default_config().replace(
        time={"t_end": 1e-3, "dt_init": 1e-6, "snapshot_times": (), "rel_tol": 1e-8, "abs_tol": 1e-14, "error_norm": "max"}
    )
    s0 = initial_state(cfg)
    ref = oracle_run(s0, 1e-3, 1e-6, cfg)
    got = integrate(s0, cfg)
    d = species_discrepancy(got, ref)
    assert max(d["u1"], d["u2"], d["u3"]) < 1e-5
    assert np.abs(got.u4 - ref.u4).max() < 1e-12
