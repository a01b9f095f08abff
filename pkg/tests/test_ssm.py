import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import stationary_cov_vec
from recon.exceptions import InputError
from recon.ssm import (
    ParamVector,
    ReconConfig,
    build_state_space,
    default_params,
    shock_layout,
    simulate,
    state_layout,
    theta_labels,
    theta_pack,
    theta_size,
    theta_unpack,
)


def test_dimensions_l2_p1(base_config, base_params):
    model = build_state_space(base_config, base_params)
    assert model.Z.shape == (4, 9)
    assert model.T.shape == (9, 9)
    assert model.R.shape == (9, 9)
    assert (model.m, model.r) == (9, 9)


def test_news_loading_pattern():
    cfg = ReconConfig(l=2, restrict_final_news=False)
    a, b = 0.7, 0.3
    params = ParamVector([0.4], 1.0, [[a, b], [0.2, 0.1]], np.ones((2, 2)))
    model = build_state_space(cfg, params)
    st_, sh = state_layout(cfg), shock_layout(cfg)
    block = model.R[st_["news_0"], sh["news_0"]]
    np.testing.assert_array_equal(block, [[-a, -b], [0.0, -b]])
    np.testing.assert_array_equal(model.R[0, sh["news_0"]], [a, b])
    np.testing.assert_array_equal(model.R[st_["news_0"], sh["news_1"]], np.zeros((2, 2)))


def test_pure_noise_l1():
    cfg = ReconConfig(l=1)
    params = ParamVector([0.5], 1.0, np.zeros((2, 1)), np.ones((2, 1)))
    model = build_state_space(cfg, params)
    np.testing.assert_array_equal(model.R[0], [1, 0, 0, 0, 0])
    st_, sh = state_layout(cfg), shock_layout(cfg)
    noise = model.R[st_["noise_0"].start:st_["noise_1"].stop, sh["noise_0"].start:sh["noise_1"].stop]
    np.testing.assert_array_equal(noise, np.eye(2))


@pytest.mark.parametrize("l,p", [(1, 1), (2, 3), (3, 2)])
def test_measurement_and_transition_structure(l, p):
    cfg = ReconConfig(l=l, p=p, spillovers=True)
    params = default_params(cfg)
    params.ts_diag = np.linspace(-0.5, 0.5, 4 * l)
    params.rho = np.r_[0.3, np.full(p - 1, 0.1)]
    model = build_state_space(cfg, params)
    Z = model.Z
    assert np.all(Z[:, 0] == 1)
    assert np.all(Z[:, 1:p] == 0)
    np.testing.assert_array_equal(Z[:, p:p + 2 * l], np.eye(2 * l))
    np.testing.assert_array_equal(Z[:, p + 2 * l:], np.eye(2 * l))
    T = model.T
    assert np.all(T[:p, p:] == 0) and np.all(T[p:, :p] == 0)
    np.testing.assert_array_equal(T[p:, p:], np.diag(params.ts_diag))
    np.testing.assert_array_equal(T[0, :p], params.rho)


def test_initial_covariance_is_stationary_law(base_model):
    np.testing.assert_allclose(base_model.P1, stationary_cov_vec(base_model.T, base_model.RRt),
                               atol=1e-12)


def test_cross_loadings_placed():
    cfg = ReconConfig(l=2, cross_news="unrestricted", cross_noise="contemporaneous")
    params = default_params(cfg)
    params.psi = np.array([[0.1, 0.2], [0.3, 0.4]])
    params.phi = np.diag([0.5, 0.6])
    model = build_state_space(cfg, params)
    st_, sh = state_layout(cfg), shock_layout(cfg)
    np.testing.assert_array_equal(model.R[st_["news_0"], sh["news_1"]], params.psi)
    np.testing.assert_array_equal(model.R[st_["noise_0"], sh["noise_1"]], params.phi)


def test_contemporaneous_requires_diagonal():
    cfg = ReconConfig(l=2, cross_news="contemporaneous")
    params = default_params(cfg)
    params.psi = np.ones((2, 2))
    with pytest.raises(InputError, match="diagonal"):
        build_state_space(cfg, params)


def test_build_errors(base_config, base_params):
    bad = base_params.copy()
    bad.rho = np.array([1.0])
    with pytest.raises(InputError, match="stationary"):
        build_state_space(base_config, bad)
    with pytest.raises(InputError, match="sigma_news"):
        build_state_space(ReconConfig(l=3), base_params)
    bad = base_params.copy()
    bad.sigma_e = float("nan")
    with pytest.raises(InputError, match="finite"):
        build_state_space(base_config, bad)
    bad = base_params.copy()
    bad.sigma_noise = -bad.sigma_noise
    with pytest.raises(InputError, match="nonnegative"):
        build_state_space(base_config, bad)


def test_simulate_zero_scales():
    cfg = ReconConfig(l=2, center=True)
    params = ParamVector([0.5], 0.0, np.zeros((2, 2)), np.zeros((2, 2)), mean=1.5)
    _, obs = simulate(build_state_space(cfg, params), 20, 0)
    np.testing.assert_allclose(obs, 1.5, atol=1e-12)
    params.mean = 0.0
    _, obs = simulate(build_state_space(cfg, params), 20, 0)
    assert np.all(obs == 0)


def test_simulate_noise_free_collapse():
    cfg = ReconConfig(l=3)
    params = ParamVector([0.5], 1.0, np.zeros((2, 3)), np.full((2, 3), 0.5))
    states, obs = simulate(build_state_space(cfg, params), 50, 1)
    noise = states[:, state_layout(cfg)["noise_0"].start:]
    # releases differ only through their noise states
    np.testing.assert_allclose(obs - obs[:, :1], noise - noise[:, :1], atol=1e-12)
    params.sigma_noise[:] = 0.0
    _, obs = simulate(build_state_space(cfg, params), 50, 1)
    np.testing.assert_allclose(obs, np.repeat(obs[:, :1], 6, axis=1), atol=1e-12)


def test_simulate_deterministic(base_model):
    a = simulate(base_model, 30, 123)
    b = simulate(base_model, 30, 123)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], simulate(base_model, 30, 124)[1])


def test_simulate_horizon_validation(base_model):
    with pytest.raises(InputError):
        simulate(base_model, 0, 1)
    states, obs = simulate(base_model, 1, 1)
    assert states.shape == (1, 9) and obs.shape == (1, 4)


@given(seed=st.integers(0, 2 ** 31 - 1), l=st.integers(1, 4), p=st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_measurement_identity(seed, l, p):
    cfg = ReconConfig(l=l, p=p, restrict_final_news=False)
    rng = np.random.default_rng(seed)
    params = ParamVector(np.r_[0.4, np.zeros(p - 1)], rng.uniform(0.1, 2),
                         rng.uniform(0, 1, (2, l)), rng.uniform(0, 1, (2, l)))
    states, obs = simulate(build_state_space(cfg, params), 25, seed)
    lay = state_layout(cfg)
    news = np.hstack([states[:, lay["news_0"]], states[:, lay["news_1"]]])
    noise = np.hstack([states[:, lay["noise_0"]], states[:, lay["noise_1"]]])
    resid = obs - states[:, :1] - news - noise
    assert np.max(np.abs(resid)) < 1e-12


def test_news_telescoping():
    cfg = ReconConfig(l=3, restrict_final_news=False)
    sig = np.array([[0.5, 0.4, 0.3], [0.2, 0.6, 0.7]])
    params = ParamVector([0.5], 1.0, sig, np.ones((2, 3)))
    model = build_state_space(cfg, params)
    st_, sh = state_layout(cfg), shock_layout(cfg)
    for s in range(2):
        rows = model.R[st_[f"news_{s}"]]
        last = rows[-1]
        nz = np.flatnonzero(last)
        assert list(nz) == [sh[f"news_{s}"].start + 2]
        for i in range(2):
            diff = rows[i] - rows[i + 1]
            expect = np.zeros(model.r)
            expect[sh[f"news_{s}"].start + i] = -sig[s, i]
            np.testing.assert_array_equal(diff, expect)


def test_news_and_noise_covariance_signs():
    cfg = ReconConfig(l=2)
    params = ParamVector([0.5], 1.0, [[0.8, 0.0], [0.6, 0.0]], [[0.7, 0.5], [0.9, 0.6]])
    states, _ = simulate(build_state_space(cfg, params), 40_000, 7)
    lay = state_layout(cfg)
    surprise = states[1:, 0] - 0.5 * states[:-1, 0]
    for col in range(lay["news_0"].start, lay["news_1"].stop):
        if np.any(states[:, col] != 0):
            assert np.cov(surprise, states[1:, col])[0, 1] < -0.1
    for col in range(lay["noise_0"].start, lay["noise_1"].stop):
        assert abs(np.corrcoef(states[:, 0], states[:, col])[0, 1]) < 0.03


def test_pure_news_revisions_unforecastable():
    cfg = ReconConfig(l=2)
    params = ParamVector([0.6], 1.0, [[0.8, 0.0], [0.5, 0.0]], np.zeros((2, 2)))
    _, obs = simulate(build_state_space(cfg, params), 40_000, 11)
    rev = obs[:, 1] - obs[:, 0]
    slope = np.polyfit(obs[:, 0], rev, 1)[0]
    assert abs(slope) < 0.02
    # noise makes revisions forecastable
    params.sigma_noise[:] = 0.7
    _, obs = simulate(build_state_space(cfg, params), 40_000, 11)
    assert np.polyfit(obs[:, 0], obs[:, 1] - obs[:, 0], 1)[0] < -0.1


def test_theta_sizes():
    assert theta_size(ReconConfig(l=2, p=1)) == 2 * (1 + 2 * 2)
    assert theta_size(ReconConfig(l=2, p=1, spillovers=True)) == 10 + 8
    assert theta_size(ReconConfig(l=2, p=3)) == 12
    assert theta_size(ReconConfig(l=2, cross_news="contemporaneous")) == 12
    assert theta_size(ReconConfig(l=2, cross_news="unrestricted", cross_noise="unrestricted")) == 18


def test_theta_labels_order():
    labels = theta_labels(ReconConfig(l=2))
    assert labels == ["rho_1", "sigma_e", "sigma_news_0_1", "sigma_news_0_2", "sigma_news_1_1",
                      "sigma_news_1_2", "sigma_noise_0_1", "sigma_noise_0_2", "sigma_noise_1_1",
                      "sigma_noise_1_2"]


configs = st.builds(
    ReconConfig,
    l=st.integers(1, 4),
    p=st.integers(1, 3),
    center=st.booleans(),
    spillovers=st.booleans(),
    cross_news=st.sampled_from(["none", "contemporaneous", "unrestricted"]),
    cross_noise=st.sampled_from(["none", "contemporaneous", "unrestricted"]),
)


@given(cfg=configs, data=st.data())
@settings(max_examples=80, deadline=None)
def test_pack_unpack_round_trip(cfg, data):
    n = theta_size(cfg)
    flat = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    again = theta_pack(theta_unpack(flat, cfg), cfg)
    np.testing.assert_array_equal(again, flat)


def test_unpack_length_mismatch():
    with pytest.raises(InputError, match="expected 10"):
        theta_unpack(np.zeros(9), ReconConfig(l=2))


def test_config_files(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("l: 3\np: 2\nspillovers: true\n")
    cfg = ReconConfig.load(path)
    assert (cfg.l, cfg.p, cfg.spillovers) == (3, 2, True)
    jpath = tmp_path / "cfg.json"
    jpath.write_text(json.dumps(cfg.to_dict()))
    assert ReconConfig.load(jpath) == cfg
    path.write_text("l: 2\nbogus: 1\n")
    with pytest.raises(InputError, match="unknown config keys"):
        ReconConfig.load(path)
    with pytest.raises(InputError):
        ReconConfig(l=0)
    with pytest.raises(InputError):
        ReconConfig(cross_news="sometimes")


def test_param_file_round_trip(tmp_path, base_params):
    path = tmp_path / "params.json"
    path.write_text(json.dumps(base_params.to_dict()))
    loaded = ParamVector.load(path)
    np.testing.assert_array_equal(loaded.sigma_noise, base_params.sigma_noise)
    assert loaded.sigma_e == base_params.sigma_e
