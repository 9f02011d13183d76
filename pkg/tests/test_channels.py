import math

import numpy as np
import pytest

from channels import (
    ChannelConfig,
    ChannelError,
    device_rng,
    gen_channels,
    load_channels,
    pathloss_gain,
    rayleigh,
    rician,
    save_channels,
    steering_vector,
)
from model import SystemParams


@pytest.mark.parametrize("d, expected", [(1.0, 1.0), (10.0, 0.01), (20.0, 0.0025)])
def test_pathloss_examples(d, expected):
    assert pathloss_gain(d, ChannelConfig()) == pytest.approx(expected)


def test_pathloss_below_reference_distance():
    with pytest.raises(ChannelError):
        pathloss_gain(0.5, ChannelConfig())


def test_config_validation():
    with pytest.raises(ChannelError):
        ChannelConfig(eh_dist_range_m=(0.5, 2.0))
    with pytest.raises(ChannelError):
        ChannelConfig(id_dist_range_m=(20.0, 15.0))
    with pytest.raises(ChannelError):
        ChannelConfig(rician_k=-1.0)
    with pytest.raises(ChannelError):
        ChannelConfig(seed=-1)


def test_same_seed_same_channels(params):
    a = gen_channels(params, ChannelConfig(seed=7))
    b = gen_channels(params, ChannelConfig(seed=7))
    c = gen_channels(params, ChannelConfig(seed=8))
    for name in ("dl_eh", "dl_id", "ul_eh"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.dl_id, c.dl_id)


def test_device_streams_do_not_shift_with_population(params):
    cfg = ChannelConfig(seed=3)
    small = gen_channels(params, cfg)
    large = gen_channels(params.with_users(4, 3), cfg)
    assert np.array_equal(large.dl_eh[:2], small.dl_eh)
    assert np.array_equal(large.dl_id[:2], small.dl_id)
    first = device_rng(3, 1, 0).standard_normal(4)
    other = device_rng(3, 2, 0).standard_normal(4)
    assert not np.array_equal(first, other)


def test_reciprocity_switch(params):
    same = gen_channels(params, ChannelConfig(seed=1))
    assert np.array_equal(same.ul_eh, same.dl_eh)
    apart = gen_channels(params, ChannelConfig(seed=1, reciprocal=False))
    assert np.array_equal(apart.dl_eh, same.dl_eh)
    assert not np.array_equal(apart.ul_eh, apart.dl_eh)


def test_pure_los_limit(params):
    ch = gen_channels(params, ChannelConfig(seed=5, rician_k=math.inf))
    for h in ch.dl_eh:
        mags = np.abs(h)
        assert np.allclose(mags, mags[0], rtol=1e-12)
        assert 1.0 / 10.0**2 - 1e-12 <= mags[0] ** 2 <= 1.0 / 5.0**2 + 1e-12


def test_steering_vector_unit_modulus():
    a = steering_vector(6, 0.3)
    assert np.allclose(np.abs(a), 1.0)
    assert a[0] == 1.0
    assert np.allclose(steering_vector(4, 0.0), np.ones(4))


def test_fading_normalisation_monte_carlo():
    rng = np.random.default_rng(2024)
    draws = rayleigh(rng, (100_000, 6))
    assert np.mean(np.sum(np.abs(draws) ** 2, axis=1) / 6) == pytest.approx(1.0, rel=0.02)
    los = steering_vector(6, 0.7)
    mixed = rician(rng, los, 3.0, (100_000, 6))
    assert np.mean(np.abs(mixed) ** 2) == pytest.approx(1.0, rel=0.02)
    assert np.allclose(np.mean(mixed, axis=0), math.sqrt(0.75) * los, atol=0.02)


def test_fixture_round_trip(tmp_path, params, channels):
    path = tmp_path / "channels.txt"
    save_channels(channels, path)
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[0] == "# swiptfog channels v1"
    assert text[1] == "# n_antennas=6 n_eh=2 n_id=2"
    loaded = load_channels(path)
    for name in ("dl_eh", "dl_id", "ul_eh"):
        assert np.array_equal(getattr(loaded, name), getattr(channels, name))


def test_fixture_errors(tmp_path):
    with pytest.raises(ChannelError):
        load_channels(tmp_path / "missing.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("# something else\n1 0\n", encoding="utf-8")
    with pytest.raises(ChannelError):
        load_channels(bad)
    short = tmp_path / "short.txt"
    short.write_text(
        "# swiptfog channels v1\n# n_antennas=2 n_eh=1 n_id=1\n1 0\n0 1\n", encoding="utf-8"
    )
    with pytest.raises(ChannelError):
        load_channels(short)


def test_generated_shapes_and_ranges():
    p = SystemParams.defaults(n_antennas=4, n_eh=3, n_id=1)
    ch = gen_channels(p, ChannelConfig(seed=11))
    ch.check(p)
    assert ch.dl_eh.shape == (3, 4) and ch.dl_id.shape == (1, 4)
    assert np.all(ch.ul_gain > 0.0)
