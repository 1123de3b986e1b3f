import copy

import pytest
import yaml

from bhdsim.config import (ConfigError, bundled_config_path, bundled_configs, config_hash,
                           dump_config, load_config, parse_config, validate_config)

MINIMAL = """
schema_version: 1
name: tiny
seed: 1
source: {wavelength_um: 4.72}
chain:
  elements: [{name: isolator, transmissivity: 0.6}]
detectors:
  - {responsivity: 1.24}
  - {responsivity: 1.24}
sweep: {incident_power_w: [1e-3, 2e-3]}
stages: [spectra]
"""


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg["acquisition"]["sample_rate"] == 625e6
    assert cfg["analysis"]["segment_len"] == 16384
    assert cfg["detectors"][0]["bandwidth_hz"] == 120e6
    assert cfg["output_dir"] == "tiny"
    assert cfg["sweep"]["incident_power_w"] == [1e-3, 2e-3]


@pytest.mark.parametrize("name", bundled_configs())
def test_round_trip_fixed_point(name):
    cfg = load_config(bundled_config_path(name))
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)
    assert config_hash(again) == config_hash(cfg)


def test_bundled_set():
    names = bundled_configs()
    for prefix in ("fig3_", "fig4_", "fig5_", "fig6_"):
        assert any(n.startswith(prefix) for n in names)


def _raw():
    return yaml.safe_load(MINIMAL.replace("1e-3", "1.0e-3").replace("2e-3", "2.0e-3"))


def test_unknown_key_rejected():
    raw = _raw()
    raw["detectors"][0]["responsivty"] = 1.0
    with pytest.raises(ConfigError, match="responsivty"):
        validate_config(raw)
    raw = _raw()
    raw["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        validate_config(raw)


def test_empty_sweep_rejected():
    raw = _raw()
    raw["sweep"]["incident_power_w"] = []
    with pytest.raises(ConfigError, match="incident_power_w"):
        validate_config(raw)


def test_missing_seed_rejected():
    raw = _raw()
    del raw["seed"]
    with pytest.raises(ConfigError, match="seed"):
        validate_config(raw)


def test_unresolvable_wavelength():
    raw = _raw()
    raw["detectors"][1]["responsivity"] = [[4.4, 1.5], [4.6, 1.3]]
    with pytest.raises(ConfigError, match="4.72"):
        validate_config(raw)


def test_cmrr_needs_square_wave():
    raw = _raw()
    raw["stages"] = ["cmrr"]
    with pytest.raises(ConfigError, match="square_wave"):
        validate_config(raw)


def test_bad_yaml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("a: [1, 2")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")


def test_hash_is_order_independent():
    cfg = parse_config(MINIMAL)
    shuffled = dict(reversed(list(copy.deepcopy(cfg).items())))
    assert config_hash(shuffled) == config_hash(cfg)
