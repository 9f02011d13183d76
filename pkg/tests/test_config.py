import logging
from pathlib import Path

import pytest

from config import AppConfig, ConfigError, effective_values, load_config, merge, read_ini
from model import SystemParams

ROOT = Path(__file__).resolve().parents[1]


def _ini(tmp_path, text: str, name: str = "cfg.ini") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_shipped_defaults_match_builtin():
    cfg = load_config(ROOT / "data" / "config" / "defaults.ini", use_user=False)
    assert cfg.params == SystemParams.defaults()
    assert cfg.channel.eh_dist_range_m == (5.0, 10.0)
    assert cfg.channel.id_dist_range_m == (15.0, 20.0)
    assert cfg.channel.reciprocal is True
    assert cfg.experiment == {"seeds": (0,), "jobs": 1}


def test_no_sources_gives_defaults():
    cfg = load_config(None, use_user=False)
    assert cfg == AppConfig()
    assert cfg.sources == ()


def test_overrides_and_lists(tmp_path):
    path = _ini(
        tmp_path,
        "[system]\nn_eh=3\ntask_bits=\"1e4, 2e4, 3e4\"\nblock_time_s=1\n"
        "[channel]\nseed=5\nrician_k=inf\n"
        "[solver]\ngap_tol=1e-9\ngap_rel=1e-7\n"
        "[experiment]\ngrid=\"0, 3, 6\"\nmodes=partial\n",
    )
    cfg = load_config(path, use_user=False)
    assert cfg.params.n_eh == 3
    assert cfg.params.task_bits == (1e4, 2e4, 3e4)
    assert cfg.params.block_time_s == 1.0
    assert cfg.params.circuit_energy_j == pytest.approx(1e-4)
    assert cfg.channel.seed == 5
    assert (cfg.settings.gap_tol, cfg.settings.gap_rel) == (1e-9, 1e-7)
    assert cfg.experiment["grid"] == (0.0, 3.0, 6.0)
    assert cfg.experiment["modes"] == ("partial",)
    assert cfg.sources == (str(path),)


def test_sinr_in_db(tmp_path):
    cfg = load_config(_ini(tmp_path, "[system]\nsinr_target_db=10\n"), use_user=False)
    assert cfg.params.sinr_target == pytest.approx((10.0, 10.0))
    both = _ini(tmp_path, "[system]\nsinr_target_db=10\nsinr_target=2\n", "both.ini")
    with pytest.raises(ConfigError):
        load_config(both, use_user=False)


def test_unknown_keys_are_warned(tmp_path, caplog):
    path = _ini(tmp_path, "[system]\nantennas=8\n[plots]\ncolor=red\n")
    with caplog.at_level(logging.WARNING, logger="config"):
        cfg = load_config(path, use_user=False)
    assert cfg.params == SystemParams.defaults()
    text = caplog.text
    assert "antennas" in text
    assert "[plots]" in text


@pytest.mark.parametrize(
    "text",
    [
        "[system]\nbandwidth_hz=abc\n",
        "[system]\nconversion_eff=1.5\n",
        "[system]\nn_eh=2\ntask_bits=\"1, 2, 3\"\n",
        "[channel]\neh_dist_range_m=5\n",
        "[channel]\nid_dist_range_m=\"20, 15\"\n",
        "[channel]\nreciprocal=maybe\n",
        "[channel]\nseed=1.5\n",
    ],
)
def test_bad_values(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_ini(tmp_path, text), use_user=False)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_ini(tmp_path / "nope.ini")


def test_merge_later_layer_wins():
    merged = merge({"system": {"n_eh": "1", "n_id": "1"}}, {"system": {"n_eh": "3"}, "solver": {}})
    assert merged == {"system": {"n_eh": "3", "n_id": "1"}, "solver": {}}


def test_effective_values_lists_all_groups():
    pairs = dict(effective_values(AppConfig(experiment={"jobs": 4})))
    assert pairs["system/n_antennas"] == "6"
    assert pairs["channel/seed"] == "0"
    assert "solver/gap_tol" in pairs
    assert pairs["experiment/jobs"] == "4"
