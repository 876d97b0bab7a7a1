import numpy as np
import pytest

from csisense.channel import (ArrayGeometry, ChannelRealization, DatasetFormatError,
                              PathSet, ScenarioConfig, array_response,
                              gen_flat_channel, gen_multicarrier_channel,
                              gen_scenario, load_csi_dataset, save_csi_dataset)


def random_pathset(rng, n, bandwidth=1e6, max_taps=3.0):
    return PathSet(powers=rng.uniform(0.1, 1.0, n),
                   phases=rng.uniform(0, 2 * np.pi, n),
                   delays=rng.uniform(0, max_taps, n) / bandwidth,
                   azimuths=rng.uniform(-np.pi / 2, np.pi / 2, n),
                   elevations=rng.uniform(np.pi / 4, 3 * np.pi / 4, n))


def test_array_response_broadside():
    geo = ArrayGeometry(n_horizontal=2, n_vertical=1)
    a = array_response(geo, az=0.0, el=np.pi / 2)
    assert np.allclose(a, np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-12)


def test_array_response_single_element():
    geo = ArrayGeometry(n_horizontal=1, n_vertical=1)
    for az, el in [(0.3, 1.0), (-1.2, 2.0), (0.0, 0.0)]:
        assert np.allclose(array_response(geo, az, el), 1.0)


def test_array_response_matches_element_loop_oracle():
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2, spacing_h=0.5, spacing_v=0.7)
    rng = np.random.default_rng(0)
    for _ in range(20):
        az = rng.uniform(-np.pi, np.pi)
        el = rng.uniform(0, np.pi)
        # element-by-element phase oracle, horizontal index fastest
        oracle = np.zeros(8, dtype=complex)
        for q in range(2):
            for p in range(4):
                phase = 2 * np.pi * (p * 0.5 * np.sin(el) * np.sin(az)
                                     + q * 0.7 * np.cos(el))
                oracle[q * 4 + p] = np.exp(1j * phase)
        oracle /= np.linalg.norm(oracle)
        assert np.max(np.abs(array_response(geo, az, el) - oracle)) < 1e-12


def test_array_response_unit_norm_and_dual_pol():
    geo = ArrayGeometry(n_horizontal=3, n_vertical=2, dual_polarized=True)
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = array_response(geo, rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi))
        assert a.shape == (12,)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-12
        assert np.allclose(a[:6], a[6:])  # two identical stacked blocks


def test_array_response_rejects_nonfinite():
    geo = ArrayGeometry(n_horizontal=2)
    with pytest.raises(ValueError):
        array_response(geo, np.nan, 0.0)


def test_flat_channel_single_path():
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2)
    ps = PathSet(powers=[1.0], phases=[0.0], delays=[0.0],
                 azimuths=[0.3], elevations=[1.2])
    h = gen_flat_channel(geo, ps, normalize=False)
    assert np.allclose(h, array_response(geo, 0.3, 1.2), atol=1e-12)


def test_flat_channel_destructive_cancellation():
    geo = ArrayGeometry(n_horizontal=4)
    ps = PathSet(powers=[1.0, 1.0], phases=[0.0, np.pi], delays=[0.0, 0.0],
                 azimuths=[0.5, 0.5], elevations=[1.0, 1.0])
    h = gen_flat_channel(geo, ps, normalize=False)
    assert np.max(np.abs(h)) < 1e-12


def test_flat_channel_matches_accumulation_oracle():
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2)
    rng = np.random.default_rng(2)
    ps = random_pathset(rng, 5)
    h = gen_flat_channel(geo, ps, normalize=False)
    oracle = np.zeros(8, dtype=complex)
    for i in range(5):
        oracle += (np.sqrt(ps.powers[i]) * np.exp(1j * ps.phases[i])
                   * array_response(geo, ps.azimuths[i], ps.elevations[i]))
    assert np.max(np.abs(h - oracle)) < 1e-12


def test_multicarrier_zero_delay_is_flat():
    geo = ArrayGeometry(n_horizontal=4)
    rng = np.random.default_rng(3)
    ps = random_pathset(rng, 3)
    ps = PathSet(powers=ps.powers, phases=ps.phases, delays=np.zeros(3),
                 azimuths=ps.azimuths, elevations=ps.elevations)
    chan = gen_multicarrier_channel(geo, ps, n_carriers=8, bandwidth=1e6,
                                    normalize=False)
    diffs = chan.matrix - chan.matrix[:, :1]
    assert np.max(np.abs(diffs)) < 1e-12


def test_multicarrier_single_carrier_scaling():
    # with n_C = 1 each path gain carries a 1/sqrt(n_C) = 1 factor, so the
    # column equals the flat channel exactly
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2)
    rng = np.random.default_rng(4)
    ps = random_pathset(rng, 4)
    chan = gen_multicarrier_channel(geo, ps, n_carriers=1, bandwidth=1e6,
                                    normalize=False)
    flat = gen_flat_channel(geo, ps, normalize=False)
    phases = np.exp(-2j * np.pi * np.asarray(ps.delays) * 1e6)  # k=1 delay term
    oracle = np.zeros(8, dtype=complex)
    for i in range(4):
        oracle += (np.sqrt(ps.powers[i]) * np.exp(1j * ps.phases[i]) * phases[i]
                   * array_response(geo, ps.azimuths[i], ps.elevations[i]))
    assert np.max(np.abs(chan.matrix[:, 0] - oracle)) < 1e-12
    # zero delays remove the only difference from the flat model
    ps0 = PathSet(powers=ps.powers, phases=ps.phases, delays=np.zeros(4),
                  azimuths=ps.azimuths, elevations=ps.elevations)
    chan0 = gen_multicarrier_channel(geo, ps0, 1, 1e6, normalize=False)
    assert np.max(np.abs(chan0.matrix[:, 0] - gen_flat_channel(geo, ps0,
                                                               normalize=False))) < 1e-12


def test_multicarrier_matches_double_loop_oracle():
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2)
    rng = np.random.default_rng(5)
    ps = random_pathset(rng, 3)
    n_c, bw = 12, 2e6
    chan = gen_multicarrier_channel(geo, ps, n_c, bw, normalize=False)
    oracle = np.zeros((8, n_c), dtype=complex)
    for k in range(1, n_c + 1):
        for i in range(3):
            gain = np.sqrt(ps.powers[i] / n_c) * np.exp(
                1j * (ps.phases[i] - 2 * np.pi * k * ps.delays[i] * bw / n_c))
            oracle[:, k - 1] += gain * array_response(geo, ps.azimuths[i],
                                                      ps.elevations[i])
    assert np.max(np.abs(chan.matrix - oracle)) < 1e-12


def test_multicarrier_normalized_columns():
    geo = ArrayGeometry(n_horizontal=4)
    ps = random_pathset(np.random.default_rng(6), 4)
    chan = gen_multicarrier_channel(geo, ps, 6, 1e6, normalize=True)
    assert np.allclose(np.linalg.norm(chan.matrix, axis=0), 1.0, atol=1e-12)


def scenario_config(**overrides):
    geo = ArrayGeometry(n_horizontal=4, n_vertical=2, dual_polarized=True)
    kwargs = dict(geometry=geo, n_ru=10, n_paths=6, n_dominant=3)
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


def test_scenario_zero_perturbation_shares_span():
    cfg = scenario_config(angle_jitter_per_m=0.0, n_paths=6, n_ru=10,
                          normalize=False)
    scen = gen_scenario(cfg, seed=11)
    # identical AoDs for every user
    assert np.allclose(scen.tu.pathset.azimuths, scen.rus[0].pathset.azimuths)
    # TU channel lies in the span of the RU channels (n_ru > n_paths)
    ru = scen.ru_matrix()
    q, _ = np.linalg.qr(ru)
    h = scen.tu.channel.vector
    resid = h - q @ (q.conj().T @ h)
    assert np.linalg.norm(resid) / np.linalg.norm(h) < 1e-9


def test_scenario_deterministic():
    cfg = scenario_config()
    a = gen_scenario(cfg, seed=7)
    b = gen_scenario(cfg, seed=7)
    assert np.array_equal(a.tu.channel.matrix, b.tu.channel.matrix)
    assert all(np.array_equal(x.channel.matrix, y.channel.matrix)
               for x, y in zip(a.rus, b.rus))
    c = gen_scenario(cfg, seed=8)
    assert not np.array_equal(a.tu.channel.matrix, c.tu.channel.matrix)


def test_scenario_distances_within_square():
    cfg = scenario_config(area_size=30.0)
    scen = gen_scenario(cfg, seed=3)
    limit = 30.0 * np.sqrt(2)
    for ru in scen.rus:
        assert np.linalg.norm(ru.position - scen.tu.position) <= limit


def test_dataset_round_trip(tmp_path):
    cfg = scenario_config(n_carriers=4)
    scen = gen_scenario(cfg, seed=2)
    path = tmp_path / "scen.csi"
    save_csi_dataset(scen, path)
    loaded = load_csi_dataset(path, cfg.geometry)
    assert np.max(np.abs(loaded.tu.channel.matrix - scen.tu.channel.matrix)) < 1e-9
    assert loaded.n_rus == scen.n_rus
    for a, b in zip(loaded.rus, scen.rus):
        assert np.max(np.abs(a.channel.matrix - b.channel.matrix)) < 1e-9
        assert np.allclose(a.position, b.position, atol=1e-8)


def test_dataset_exact_small_file(tmp_path):
    path = tmp_path / "mini.csi"
    path.write_text(
        "csi v1 M=2 nC=1 nUE=2\n"
        "ue 0 x=1.0 y=2.0\n"
        "1.0+0.5j\n"
        "-0.25-1.0j\n"
        "ue 1 x=0.0 y=0.0\n"
        "0.0+1.0j\n"
        "2.0+0.0j\n")
    scen = load_csi_dataset(path)
    assert np.allclose(scen.tu.channel.matrix[:, 0], [1.0 + 0.5j, -0.25 - 1.0j])
    assert np.allclose(scen.rus[0].channel.matrix[:, 0], [1.0j, 2.0])


@pytest.mark.parametrize("content,fragment", [
    ("csi v2 M=2 nC=1 nUE=1\nue 0 x=0 y=0\n1+0j\n1+0j\n", "header"),
    ("csi v1 M=3 nC=1 nUE=1\nue 0 x=0 y=0\n1+0j\n1+0j\n", "end of file"),
    ("csi v1 M=1 nC=2 nUE=1\nue 0 x=0 y=0\n1+0j\n", "expected 2 entries"),
    ("csi v1 M=1 nC=1 nUE=1\nue 0 x=0 y=0\nnan+0j\n", "non-finite"),
    ("csi v1 M=1 nC=1 nUE=1\nue 0 x=inf y=0\n1+0j\n", "non-finite"),
], ids=["bad-header", "row-shortage", "dim-mismatch", "nan-entry", "inf-pos"])
def test_dataset_rejects_malformed(tmp_path, content, fragment):
    path = tmp_path / "bad.csi"
    path.write_text(content)
    with pytest.raises(DatasetFormatError, match=fragment):
        load_csi_dataset(path)


def test_dataset_geometry_mismatch(tmp_path):
    cfg = scenario_config()
    scen = gen_scenario(cfg, seed=1)
    path = tmp_path / "scen.csi"
    save_csi_dataset(scen, path)
    with pytest.raises(DatasetFormatError, match="ports"):
        load_csi_dataset(path, ArrayGeometry(n_horizontal=3))


def test_pathset_validation():
    with pytest.raises(ValueError):
        PathSet(powers=[], phases=[], delays=[], azimuths=[], elevations=[])
    with pytest.raises(ValueError):
        PathSet(powers=[-1.0], phases=[0.0], delays=[0.0],
                azimuths=[0.0], elevations=[0.0])
    with pytest.raises(ValueError):
        ChannelRealization(matrix=np.ones((2, 2)),
                           geometry=ArrayGeometry(n_horizontal=2)).vector
