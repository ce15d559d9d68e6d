import math

import pytest

from sulfatation.config import (
    ConfigError,
    ConfigParseError,
    RunConfig,
    default_config,
    dump_config,
    load_config,
    parse_config,
)


def test_reference_parameter_values():
    p = default_config().params
    assert (p.d1, p.d2, p.d3) == (0.864, 0.00864, 0.00864)
    assert (p.B, p.H) == (86.4, 0.3)
    assert (p.phi2, p.phi3, p.phi4) == (1.0, 1.0, 1.0)
    assert (p.k2, p.k3, p.k4) == (1.48, 0.0084, 10.0)
    assert (p.beta_bar, p.p_order, p.q_order) == (1.0, 1.0, 1.0)
    assert p.u1_dirichlet == 0.011
    assert (p.beta2, p.beta3, p.beta4, p.k_a) == (1.0, 1.0, 1.0, 1.0)
    g = default_config().geometry
    assert (g.L, g.ell) == (30.0, 1.0)


def test_default_initial_data_is_zero():
    ic = default_config().initial
    assert (ic.u1_0, ic.u2_0, ic.u3_0, ic.u4_0) == (0.0, 0.0, 0.0, 0.0)


def test_default_snapshots_and_grid():
    cfg = default_config()
    assert cfg.time.snapshot_times == (2000.0, 4000.0, 8000.0, 12000.0, 16000.0, 20000.0)
    assert (cfg.grid.nx, cfg.grid.ny) == (301, 41)
    assert cfg.hx == pytest.approx(0.1)
    assert cfg.hy == pytest.approx(0.025)
    assert cfg.epsilon == pytest.approx(0.01)


def test_gamma_sw_resolves_to_phi3_k4_unless_set():
    p = default_config().params
    assert p.gamma_sw == p.phi3 * p.k4
    cfg = default_config().replace(params={"gamma_sw_coeff": 1.0})
    assert cfg.params.gamma_sw == 1.0


def test_file_matching_reference_values_is_accepted():
    text = "[model]\nd1 = 0.864\nB = 86.4\nH = 0.3\n[geometry]\nL = 30\nell = 1\n"
    assert parse_config(text) == default_config()


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    assert load_config(path) == default_config()


def test_negative_beta_bar_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("[model]\nbeta_bar = -1\n")
    assert "beta_bar" in info.value.key


@pytest.mark.parametrize(
    "text, key",
    [
        ("[model]\nnot_a_key = 1\n", "model.not_a_key"),
        ("[bogus]\nx = 1\n", "bogus"),
        ("[grid]\nnx = 2\n", "grid.nx"),
        ("[grid]\nnx = 3.5\n", "grid.nx"),
        ("[time]\nrel_tol = 0\n", "time.rel_tol"),
        ("[time]\nsnapshot_times = 3, 2\n", "time.snapshot_times"),
        ("[time]\nerror_norm = l1\n", "time.error_norm"),
        ("[model]\nd1 = abc\n", "model.d1"),
        ("[model]\nd1 = nan\n", "model.d1"),
        ("[model]\np_order = 0.5\n", "model.p_order"),
        ("[output]\nkink_lo = 0.99\n", "output.kink_lo"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_malformed_file():
    with pytest.raises(ConfigParseError):
        parse_config("no section header\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigParseError):
        load_config(tmp_path / "absent.ini")


def test_epsilon_must_be_below_beta_bar():
    with pytest.raises(ConfigError):
        RunConfig().replace(output={"epsilon": 1.5})


def test_dump_round_trips_exactly():
    cfg = default_config().replace(
        params={"d1": 1 / 3, "gamma_sw_coeff": 0.1},
        time={"rel_tol": 1e-7, "error_norm": "max", "snapshot_times": (0.1, 1 / 7)},
        output={"epsilon": 0.02},
    )
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(default_config())) == default_config()


def test_callable_profiles_are_not_serialized():
    cfg = default_config().replace(initial={"u1_0": lambda x: 0 * x})
    with pytest.raises(ConfigError):
        dump_config(cfg)


def test_coordinates():
    cfg = default_config().replace(grid={"nx": 4, "ny": 3})
    assert list(cfg.x) == [0.0, 10.0, 20.0, 30.0]
    assert list(cfg.y) == [0.0, 0.5, 1.0]
    assert math.isclose(cfg.x[-1], cfg.geometry.L)
