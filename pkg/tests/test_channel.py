"""Channel configuration, chip algebra, and simulation tests."""

import numpy as np
import pytest

from photonmux.channel import (
    ChannelConfig,
    chip_count,
    chip_duration,
    chip_durations,
    chip_rate_sequence,
    config_from_dict,
    config_to_dict,
    load_config,
    load_observations,
    sample_observations,
    sample_symbols,
    save_config,
    save_observations,
    state_at_chip,
    state_index,
    state_rate,
    state_rates,
    state_table,
    symbol_index,
    uniform_config,
)
from photonmux.errors import ConfigError


def test_chip_count_formula():
    cfg = uniform_config(2, 3, 1.0, 0.1)
    assert chip_count(cfg) == 3 * 2 + 1
    big = uniform_config(4, 6309, 1.0, 0.1)
    assert chip_count(big) == 6309 * 4 + 3  # 25239 symbols-scale frame: 25239? no
    assert chip_count(big) == 4 * 6309 + 4 - 1


def test_chip_count_aligned():
    cfg = uniform_config(3, 7, 1.0, 0.1, aligned=True)
    assert chip_count(cfg) == 7


def test_symbol_index_basic():
    # L=2: layer 1 starts at chip 1, layer 2 at chip 2
    cfg = uniform_config(2, 3, 1.0, 0.1)
    assert [symbol_index(cfg, 1, t) for t in range(1, 8)] == [1, 1, 2, 2, 3, 3, 4]
    assert [symbol_index(cfg, 2, t) for t in range(1, 8)] == [0, 1, 1, 2, 2, 3, 3]


def test_symbol_index_boundaries_out_of_range():
    cfg = uniform_config(3, 2, 1.0, 0.1)
    T = chip_count(cfg)
    # layer 3 has no live symbol in the first two chips
    assert symbol_index(cfg, 3, 1) <= 0
    assert symbol_index(cfg, 1, T) == cfg.num_symbols + 1


def test_chip_durations_tile_delays():
    cfg = uniform_config(2, 3, 1.0, 0.1, delays=(0.3, 0.7))
    tau = chip_durations(cfg)
    assert np.allclose(tau, [0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3])
    assert chip_duration(cfg, 2) == pytest.approx(0.7)
    # chips tile one symbol duration
    assert tau[:2].sum() == pytest.approx(1.0)


def test_state_table_little_endian():
    tbl = state_table(2)
    assert tbl.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
    assert state_index([1, 0]) == 1
    assert state_index([0, 1]) == 2


def test_state_at_chip_and_rates():
    cfg = uniform_config(2, 2, (2.0, 5.0), 0.5)
    sym = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    # chip 3: layer 1 on symbol 2 (=0), layer 2 on symbol 1 (=0)
    assert state_at_chip(cfg, sym, 3).tolist() == [0, 0]
    assert state_at_chip(cfg, sym, 1).tolist() == [1, 0]
    assert state_rate(cfg, [1, 1]) == pytest.approx(7.5)
    assert np.allclose(state_rates(cfg), [0.5, 2.5, 5.5, 7.5])


def test_chip_rate_sequence_matches_manual():
    cfg = uniform_config(2, 2, (2.0, 5.0), 0.5, delays=(0.4, 0.6))
    sym = np.array([[1, 1], [1, 0]], dtype=np.uint8)
    mu = chip_rate_sequence(cfg, sym)
    tau = chip_durations(cfg)
    manual = [tau[t - 1] * state_rate(cfg, state_at_chip(cfg, sym, t))
              for t in range(1, chip_count(cfg) + 1)]
    assert np.allclose(mu, manual)


def test_validation_errors():
    with pytest.raises(ConfigError):
        uniform_config(0, 3, 1.0, 0.1)
    with pytest.raises(ConfigError):
        uniform_config(2, 3, 1.0, -0.1)
    with pytest.raises(ConfigError):
        uniform_config(2, 3, 1.0, 0.1, delays=(0.2, 0.2))  # does not sum to 1
    with pytest.raises(ConfigError):
        uniform_config(2, 3, 1.0, 0.1, q=1.5)
    with pytest.raises(ConfigError):
        ChannelConfig(2, 3, (0.5, 0.5), (1.0,), 0.1, 0.5)


def test_sampling_reproducible():
    cfg = uniform_config(2, 50, (4.0, 6.0), 0.2)
    s1 = sample_symbols(cfg, 7)
    s2 = sample_symbols(cfg, 7)
    assert np.array_equal(s1, s2)
    o1 = sample_observations(cfg, s1, 9)
    o2 = sample_observations(cfg, s1, 9)
    assert np.array_equal(o1, o2)
    assert o1.shape == (chip_count(cfg),)


def test_sampling_respects_priors():
    cfg = uniform_config(1, 20000, 1.0, 0.0, q=0.2)
    mean = sample_symbols(cfg, 1).mean()
    assert abs(mean - 0.2) < 0.01


def test_config_roundtrip(tmp_path):
    cfg = uniform_config(3, 5, (1.0, 2.0, 3.0), 0.25, q=0.4,
                         delays=(0.2, 0.3, 0.5))
    path = tmp_path / "cfg.yaml"
    save_config(cfg, path)
    back = load_config(path)
    assert back.num_layers == 3 and back.num_symbols == 5
    assert back.delays == cfg.delays
    assert back.layer_rates == cfg.layer_rates
    assert np.allclose(back.priors, cfg.priors)
    assert config_from_dict(config_to_dict(cfg)).background_rate == 0.25


def test_observation_file_roundtrip(tmp_path):
    counts = np.array([0, 3, 1, 7])
    path = tmp_path / "obs.txt"
    save_observations(counts, path)
    assert np.array_equal(load_observations(path), counts)


def test_with_rates_copy():
    cfg = uniform_config(2, 4, (1.0, 2.0), 0.1)
    other = cfg.with_rates(layer_rates=(5.0, 6.0))
    assert other.layer_rates == (5.0, 6.0)
    assert cfg.layer_rates == (1.0, 2.0)
    assert other.delays == cfg.delays
