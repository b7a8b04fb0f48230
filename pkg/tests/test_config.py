"""Scenario config parsing: units, validation aggregation, round trips."""

import math

import numpy as np
import pytest

from nvecho.config import (
    ConfigError,
    ScenarioConfig,
    dump_config,
    load_config,
    parse_config,
    resolve_data_file,
)
from nvecho.noise import NoiseSource
from nvecho.response import LinearResponse, QuasiharmonicSet, default_quasiharmonic_set, save_response_set
from nvecho.spin_model import default_params
from nvecho.units import angular

MINIMAL = """\
schema: nvecho-scenario/1
name: smoke
pipeline: simulate
"""

FULL = """\
schema: nvecho-scenario/1
name: protection-comparison
pipeline: decay_compare
description: compare unprotected and protected decay
spin:
  zfs: 2.87 GHz
  quadrupole: -4.945 MHz
  hyperfine: -2.16 MHz
  field: 239 G
response:
  model: linear
  quadrupole_per_K: 36.924 Hz/K
  hyperfine_per_K: 204 Hz/K
sources:
  - kind: temperature
    distribution: lorentzian
    location: 0 K
    scale: 5 K
  - kind: residual_field
    dq_coherence_time: 1.95 ms
sequence:
  kind: unbalanced_echo
  pair: [0, -1]
  ms_free: 0
  ms_flipped: +1
  flip_fraction: 0.18
  times: {start: 50 us, stop: 15 ms, count: 24, spacing: log}
  compare:
    kind: ramsey
    pair: [0, +1]
    ms: +1
    times: {start: 10 us, stop: 1 ms, count: 24, spacing: linear}
backend:
  method: closed_form
  seed: 12345
output:
  directory: out
  formats: [csv, json]
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.name == "smoke"
    assert cfg.pipeline == "simulate"
    assert cfg.spin_params() == default_params()
    assert cfg.response_model() == LinearResponse()
    assert cfg.noise_sources() == ()
    assert cfg.backend_kwargs() == {
        "backend": "closed_form", "n_samples": 1 << 20, "seed": 12345, "workers": 1,
    }
    assert cfg.times() is None


def test_full_config_builds_models():
    cfg = parse_config(FULL)
    params = cfg.spin_params()
    assert params.zfs == angular(2.87e9)
    assert params.quadrupole == angular(-4.945e6)
    assert params.hyperfine == angular(-2.16e6)
    assert params.field_gauss == 239.0

    resp = cfg.response_model()
    assert resp.quadrupole_per_K == angular(36.924)
    assert resp.hyperfine_per_K == angular(204.0)

    sources = cfg.noise_sources()
    assert len(sources) == 2
    assert sources[0].kind == "temperature"
    assert sources[0].distribution.kind == "lorentzian"
    assert sources[0].distribution.scale == 5.0
    assert sources[0].response == resp
    assert sources[1].kind == "field"
    # sigma_B chosen so the single-quantum residual rate is 1/(2 * 1.95 ms)
    expected_width = 1.0 / (2.0 * abs(params.gamma_n) * 1.95e-3)
    assert sources[1].distribution.scale == pytest.approx(expected_width, rel=1e-12)

    times = cfg.times()
    assert times.shape == (24,)
    assert times[0] == pytest.approx(50e-6, rel=1e-12)
    assert times[-1] == pytest.approx(15e-3, rel=1e-12)
    assert np.allclose(np.diff(np.log(times)), np.diff(np.log(times))[0])

    compare = cfg.sequence["compare"]
    ctimes = cfg.times(compare)
    assert ctimes.shape == (24,)
    assert np.allclose(np.diff(ctimes), np.diff(ctimes)[0])
    assert cfg.sequence["flip_fraction"] == 0.18
    assert cfg.sequence["pair"] == (0, -1)
    assert compare["ms"] == 1


def test_bare_numbers_rejected():
    cfg = dict_minimal()
    cfg["spin"] = {"zfs": 2.87e9}
    with pytest.raises(ConfigError, match="spin.zfs"):
        parse_config(cfg)


def dict_minimal():
    return {"schema": "nvecho-scenario/1", "name": "n", "pipeline": "simulate"}


def test_problems_are_aggregated():
    cfg = dict_minimal()
    cfg["spin"] = {"zfs": "2.87 parsec"}
    cfg["backend"] = {"method": "quantum", "samples": 0}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(cfg)
    err = excinfo.value
    assert len(err.problems) == 3
    text = str(err)
    assert "spin.zfs" in text
    assert "backend.method" in text
    assert "backend.samples" in text


def test_unknown_keys_rejected():
    cfg = dict_minimal()
    cfg["spin"] = {"bogus": "1 Hz"}
    cfg["extra"] = 1
    with pytest.raises(ConfigError) as excinfo:
        parse_config(cfg)
    assert "spin.bogus" in str(excinfo.value)
    assert "extra" in str(excinfo.value)


def test_round_trip_is_fixed_point():
    first = parse_config(FULL)
    text = dump_config(first)
    second = parse_config(text)
    assert second == first
    assert dump_config(second) == text


def test_quasiharmonic_data_file(tmp_path):
    save_response_set(default_quasiharmonic_set(), tmp_path / "set.yaml")
    cfg = dict_minimal()
    cfg["response"] = {"model": "quasiharmonic", "data_file": "set.yaml"}
    parsed = parse_config(cfg, base_dir=tmp_path)
    model = parsed.response_model()
    assert isinstance(model, QuasiharmonicSet)
    assert model.reference_T == 300.0

    missing = dict_minimal()
    missing["response"] = {"model": "quasiharmonic", "data_file": "nope.yaml"}
    with pytest.raises(ConfigError, match="nope.yaml"):
        parse_config(missing, base_dir=tmp_path)


def test_package_data_file_resolves_without_base_dir():
    cfg = dict_minimal()
    cfg["response"] = {"model": "quasiharmonic", "data_file": "quasiharmonic_default.yaml"}
    parsed = parse_config(cfg)
    assert isinstance(parsed.response_model(), QuasiharmonicSet)


def test_env_var_data_dir(tmp_path, monkeypatch):
    save_response_set(default_quasiharmonic_set(), tmp_path / "alt.yaml")
    monkeypatch.setenv("NVECHO_DATA_DIR", str(tmp_path))
    assert resolve_data_file("alt.yaml") == tmp_path / "alt.yaml"
    cfg = dict_minimal()
    cfg["response"] = {"model": "quasiharmonic", "data_file": "alt.yaml"}
    assert isinstance(parse_config(cfg).response_model(), QuasiharmonicSet)


def test_grid_validation():
    cfg = dict_minimal()
    cfg["sequence"] = {"times": {"start": "1 ms", "stop": "2 ms", "count": 0}}
    with pytest.raises(ConfigError, match="count"):
        parse_config(cfg)

    cfg["sequence"] = {"times": {"start": "0 s", "stop": "2 ms", "count": 5, "spacing": "log"}}
    with pytest.raises(ConfigError, match="log"):
        parse_config(cfg)

    cfg["sequence"] = {"times": []}
    with pytest.raises(ConfigError, match="empty"):
        parse_config(cfg)

    cfg["sequence"] = {"times": {"start": "1 ms", "stop": "2 ms", "count": 4, "spacing": "zigzag"}}
    with pytest.raises(ConfigError, match="spacing"):
        parse_config(cfg)

    cfg["sequence"] = {"times": ["1 ms", "2 ms"], "flip_fractions": [0.0, 0.25, 0.5]}
    parsed = parse_config(cfg)
    assert parsed.times().tolist() == [1e-3, 2e-3]
    assert parsed.flip_fractions().tolist() == [0.0, 0.25, 0.5]


def test_script_sequence_block():
    cfg = dict_minimal()
    cfg["sequence"] = {"script": "pair 0 -1\nevolve 1ms ms=0\n"}
    parsed = parse_config(cfg)
    assert "script" in parsed.sequence

    cfg["sequence"] = {"script": "pair 0 -1\nwiggle\n"}
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(cfg)


def test_source_validation():
    cfg = dict_minimal()
    cfg["sources"] = [{"kind": "humidity", "distribution": "lorentzian",
                       "location": "0 K", "scale": "1 K"}]
    with pytest.raises(ConfigError, match="kind"):
        parse_config(cfg)

    cfg["sources"] = [{"kind": "temperature", "distribution": "triangular",
                       "location": "0 K", "scale": "1 K"}]
    with pytest.raises(ConfigError, match="distribution"):
        parse_config(cfg)

    cfg["sources"] = [{"kind": "temperature", "distribution": "lorentzian",
                       "location": "0 K", "scale": "-1 K"}]
    with pytest.raises(ConfigError, match="scale"):
        parse_config(cfg)

    cfg["sources"] = [{"kind": "strain", "distribution": "gaussian",
                       "location": 0.0, "scale": 1e-5}]
    sources = parse_config(cfg).noise_sources()
    assert sources[0].kind == "strain"
    assert sources[0].distribution.scale == 1e-5


def test_quasiharmonic_temperature_source_is_nonlinear():
    cfg = dict_minimal()
    cfg["response"] = {"model": "quasiharmonic", "data_file": "quasiharmonic_default.yaml"}
    cfg["sources"] = [{"kind": "temperature", "distribution": "lorentzian",
                       "location": "300 K", "scale": "25 K"}]
    src = parse_config(cfg).noise_sources()[0]
    assert isinstance(src, NoiseSource)
    assert not src.is_linear
    assert src.distribution.location == 300.0


def test_backend_and_output_validation():
    cfg = dict_minimal()
    cfg["backend"] = {"method": "monte_carlo", "samples": 4096, "workers": 2}
    parsed = parse_config(cfg)
    kwargs = parsed.backend_kwargs()
    assert kwargs["backend"] == "monte_carlo"
    assert kwargs["n_samples"] == 4096
    assert kwargs["workers"] == 2

    cfg["backend"] = {"workers": 0}
    with pytest.raises(ConfigError, match="workers"):
        parse_config(cfg)

    cfg["backend"] = {}
    cfg["output"] = {"formats": ["xml"]}
    with pytest.raises(ConfigError, match="formats"):
        parse_config(cfg)


def test_load_config_sets_base_dir(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(FULL, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.base_dir == tmp_path
    assert cfg == parse_config(FULL)  # base_dir excluded from equality
