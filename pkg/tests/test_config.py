import pytest

from crsim.config import ConfigError, build, dump_toml, load_toml, merge, parse_config

DEFAULT_DEVICE = dict(omega1=5.854e9, omega2=5.528e9, T1_1=1.6e-6, T1_2=1.5e-6, m12=0.5, m21=0.5,
                    zeta=200e3, alpha1=224e6, alpha2=255e6, beta=(1.0, 0.77, 0.72, 0.6))


def test_empty_file_gives_default_device(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    cfg = parse_config(path)
    for key, value in DEFAULT_DEVICE.items():
        assert getattr(cfg.device, key) == pytest.approx(value)
    assert cfg.solver.integrator == "fixed"
    assert cfg.experiment["amplitude_mhz"] == 553.0 and cfg.experiment["t_g_ns"] == 220.0


def test_none_gives_defaults():
    assert parse_config(None).device.omega1 == pytest.approx(5.854e9)


def test_units_are_converted():
    cfg = build({"device": {"omega1_ghz": 6.0, "t1_us": [2.0, 3.0], "t2_us": 1.0, "zeta_khz": 50.0},
                 "solver": {"dt_ns": 0.02}})
    assert cfg.device.omega1 == pytest.approx(6e9)
    assert (cfg.device.T1_1, cfg.device.T1_2) == pytest.approx((2e-6, 3e-6))
    assert (cfg.device.T2_1, cfg.device.T2_2) == pytest.approx((1e-6, 1e-6))
    assert cfg.device.zeta == pytest.approx(50e3)
    assert cfg.solver.dt == pytest.approx(0.02e-9)


def test_unphysical_t2_rejected():
    with pytest.raises(ConfigError, match="t2_us"):
        build({"device": {"t1_us": 1.0, "t2_us": 4.0}})


def test_unknown_key_suggests_nearest():
    with pytest.raises(ConfigError, match="'foo'"):
        build({"device": {"foo": 1.0}})
    with pytest.raises(ConfigError, match="omega2_ghz"):
        build({"device": {"omega2_gz": 1.0}})
    with pytest.raises(ConfigError, match="unknown key"):
        build({"bogus": 1})


def test_unit_suffix_mismatch():
    with pytest.raises(ConfigError, match="unit suffix mismatch.*omega1_ghz"):
        build({"device": {"omega1_mhz": 5854.0}})


@pytest.mark.parametrize("data", [
    {"device": {"m12": "half"}},
    {"device": {"zz_enabled": 1}},
    {"device": {"t1_us": [1.0, 2.0, 3.0]}},
    {"solver": {"integrator": "euler"}},
    {"solver": {"dt_ns": -1.0}},
    {"experiment": {"threads": 0}},
    {"device": "not a table"},
])
def test_invalid_values_rejected(data):
    with pytest.raises(ConfigError):
        build(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_toml(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[device\nomega1_ghz = ")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_toml(bad)


def test_effective_config_round_trip(tmp_path):
    cfg = build({"seed": 7, "device": {"j_mhz": 1.2}, "experiment": {"presets_mhz": [100.0]}})
    path = tmp_path / "eff.toml"
    path.write_text(cfg.to_toml())
    again = parse_config(path)
    assert again.effective == cfg.effective
    assert again.digest == cfg.digest
    assert merge(load_toml(path)) == cfg.effective


def test_dump_toml_escapes_strings():
    text = dump_toml({"output_dir": 'a"b\\c', "sec": {"flag": True}})
    assert 'output_dir = "a\\"b\\\\c"' in text
    assert "[sec]\nflag = true" in text
