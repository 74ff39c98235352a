import json

import numpy as np
import pytest

from quditgates import ControlWaveform, DomainError, PlatformParams, build_model
from quditgates.cli import counts_table, main
from quditgates.config import ConfigError, parse_config
from quditgates.controllability import tensor_decompose
from quditgates.io import (dumps_json, read_circuit, read_pair_spectrum, read_ratios,
                           read_spectrum, read_sweep, read_waveform, write_circuit,
                           write_pair_spectrum, write_ratios, write_spectrum, write_sweep,
                           write_waveform)
from quditgates.liegroup import LayeredCircuit

GRAPE_CONFIG = """\
schema_version: 1
engine: grape
platform:
  d_phys: 3
  gamma_r: 0.001
target:
  gate: cphase
  k: 2
grape:
  n_steps: 30
  total_time: 12
  max_iter: 40
seeds: [0, 1]
"""


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestRoundTrips:
    def test_waveform(self, tmp_path, rng):
        w = ControlWaveform(rng.uniform(-1, 1, 25), 0.123)
        write_waveform(tmp_path / "w.csv", w)
        back = read_waveform(tmp_path / "w.csv", dt=0.123)
        np.testing.assert_array_equal(back.phases, w.phases)
        back = read_waveform(tmp_path / "w.csv", total_time=w.total_time)
        assert back.dt == pytest.approx(w.dt)
        with pytest.raises(DomainError):
            read_waveform(tmp_path / "w.csv")

    def test_waveform_bad_header(self, tmp_path):
        (tmp_path / "w.csv").write_text("i,phase\n0,0.1\n")
        with pytest.raises(DomainError):
            read_waveform(tmp_path / "w.csv", dt=1.0)

    def test_circuit(self, tmp_path, rng):
        c = LayeredCircuit(rng.uniform(0, 2, 3), rng.normal(size=(3, 8)), mode="global_sign_flip",
                           d=10)
        write_circuit(tmp_path / "c.json", c)
        back = read_circuit(tmp_path / "c.json")
        np.testing.assert_array_equal(back.alphas, c.alphas)
        assert back.mode == "global_sign_flip" and back.d == 10
        data = json.loads((tmp_path / "c.json").read_text())
        assert set(data["layers"][0]) == {"t", "alpha", "beta"}

    def test_spectrum(self, tmp_path, rng):
        A = rng.normal(size=(4, 4))
        spec = tensor_decompose(A + A.T, 1.5)
        write_spectrum(tmp_path / "s.csv", spec)
        rows = read_spectrum(tmp_path / "s.csv")
        assert rows == [(g, k, q, c) for g, k, q, c in spec.items()]

    def test_sweep(self, tmp_path):
        rows = [{"total_time_over_pi": 10.0, "total_time_over_pi_per_k": 5.0,
                 "infidelity_closed": 0.1, "infidelity_open": 0.2, "status": "ok"},
                {"total_time_over_pi": 20.0, "total_time_over_pi_per_k": 10.0,
                 "infidelity_closed": None, "infidelity_open": None, "status": "error: boom"}]
        write_sweep(tmp_path / "s.csv", rows)
        back = read_sweep(tmp_path / "s.csv")
        assert back[0] == rows[0]
        assert np.isnan(back[1]["infidelity_open"]) and back[1]["status"] == "error: boom"

    def test_pair_spectrum_and_ratios(self, tmp_path):
        model = build_model(PlatformParams.toy(3))
        write_pair_spectrum(tmp_path / "p.csv", model)
        rows = read_pair_spectrum(tmp_path / "p.csv")
        assert [r[0] for r in rows] == list(range(9))
        assert rows[5][3] == model.energies[1, 2]
        write_ratios(tmp_path / "r.csv", 1.0, model.rabi_ratios)
        ratios = read_ratios(tmp_path / "r.csv")
        assert [r[1] for r in ratios] == [1.0, 0.0, -1.0]
        np.testing.assert_array_equal([r[2] for r in ratios], model.rabi_ratios)

    def test_json_is_sorted_and_stable(self):
        a = dumps_json({"b": np.float64(1.5), "a": [np.int64(2), np.arange(2)]})
        assert a == dumps_json({"a": [2, [0, 1]], "b": 1.5})
        assert a.index('"a"') < a.index('"b"')


class TestConfig:
    def test_valid(self):
        cfg = parse_config(GRAPE_CONFIG)
        assert cfg.platform.d_phys == 3
        assert cfg.platform.F_r == 2.0
        assert cfg.grape["total_time_over_pi"] == 12
        assert cfg.seeds == [0, 1]

    def test_lifetime_units(self):
        cfg = parse_config(GRAPE_CONFIG.replace("gamma_r: 0.001", "lifetime_us: 140\n  rf_mhz: 10"))
        assert cfg.platform.gamma_r == pytest.approx((1 / 140) / (2 * np.pi * 10))

    def test_empty_seeds(self):
        with pytest.raises(ConfigError) as info:
            parse_config(GRAPE_CONFIG.replace("seeds: [0, 1]", "seeds: []"), "x.yaml")
        assert "x.yaml:13: seeds: must not be empty" in str(info.value)

    def test_line_numbers(self):
        text = GRAPE_CONFIG.replace("n_steps: 30", "n_steps: -3").replace("k: 2", "k: two")
        with pytest.raises(ConfigError) as info:
            parse_config(text, "bad.yaml")
        msg = str(info.value)
        assert "bad.yaml:8: target.k: must be an integer" in msg
        assert "bad.yaml:10: grape.n_steps: must be >= 1" in msg

    @pytest.mark.parametrize("edit,fragment", [
        (("engine: grape", "engine: quantum"), "engine: must be one of"),
        (("schema_version: 1", "schema_version: 2"), "schema_version"),
        (("  gamma_r: 0.001", "  gamma_r: 0.001\n  lifetime_us: 100"), "not both"),
        (("  n_steps: 30\n", ""), "grape.n_steps: is required"),
        (("target:", "targets:"), "unknown field"),
        (("  k: 2", "  k: 5"), "exceeds"),
        (("gate: cphase", "gate: cphase\n  level_map: [0, 0]"), "distinct"),
    ])
    def test_errors(self, edit, fragment):
        with pytest.raises(ConfigError) as info:
            parse_config(GRAPE_CONFIG.replace(*edit))
        assert fragment in str(info.value)

    def test_syntax_error(self):
        with pytest.raises(ConfigError) as info:
            parse_config("a: [1, 2\n", "s.yaml")
        assert "s.yaml:" in str(info.value)

    def test_sweep_only_for_grape(self):
        text = GRAPE_CONFIG.replace("engine: grape", "engine: liegroup") + \
            "liegroup:\n  n_layers: 2\nsweep:\n  total_times: [1]\n"
        with pytest.raises(ConfigError, match="only defined for engine=grape"):
            parse_config(text)


class TestCli:
    def test_counts(self, capsys):
        assert main(["counts"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].split("\t") == ["k", "K", "D", "n_min", "layers_min"]
        assert [int(line.split("\t")[3]) for line in out[1:]] == [320, 623, 1424, 2295]
        assert [int(line.split("\t")[4]) for line in out[1:]] == [2, 3, 7, 13]

    def test_counts_table_other_d(self):
        assert counts_table([2], 3) == [{"k": 2, "K": 3, "D": 6, "n_min": 26, "layers_min": 2}]

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, GRAPE_CONFIG.replace("seeds: [0, 1]", "seeds: []"))
        assert main(["run", str(path), "-o", str(tmp_path / "out")]) == 2
        assert "seeds: must not be empty" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.yaml")]) == 2

    def test_grape_run_deterministic(self, tmp_path):
        path = write_config(tmp_path, GRAPE_CONFIG)
        for name in ("a", "b"):
            assert main(["run", str(path), "-o", str(tmp_path / name)]) == 0
        a = (tmp_path / "a" / "report.json").read_bytes()
        assert a == (tmp_path / "b" / "report.json").read_bytes()
        report = json.loads(a)
        assert "wall_time" not in a.decode()
        assert report["fidelity_open"] <= report["fidelity_closed"] + 1e-9
        assert report["best_waveform"]["n_steps"] == 30
        assert isinstance(report["converged"], bool)
        w = read_waveform(tmp_path / "a" / "waveform.csv", total_time=12 * np.pi)
        assert w.n_steps == 30
        meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
        assert meta["wall_time"] > 0

    def test_liegroup_run(self, tmp_path):
        text = GRAPE_CONFIG.replace("engine: grape", "engine: liegroup").split("grape:")[0]
        text += "liegroup:\n  n_layers: 1\n  search: true\n  max_layers: 4\nseeds: [0, 1, 2]\n"
        path = write_config(tmp_path, text)
        assert main(["run", str(path), "-o", str(tmp_path / "lg")]) == 0
        report = json.loads((tmp_path / "lg" / "report.json").read_text())
        assert report["converged"]
        c = read_circuit(tmp_path / "lg" / "circuit.json")
        assert str(c.n_layers) in report["layer_search"]

    def test_analyze_run(self, tmp_path):
        text = ("schema_version: 1\nengine: analyze\nplatform:\n  d_phys: 3\n"
                "target:\n  gate: cphase\n  k: 2\nanalyze:\n  lie_closure: true\n"
                "outputs:\n  pair_spectrum: true\n  rabi_ratios: true\n")
        path = write_config(tmp_path, text)
        assert main(["analyze", str(path), "-o", str(tmp_path / "an")]) == 0
        report = json.loads((tmp_path / "an" / "report.json").read_text())
        assert report["controllability"]["verdict"] == "controllable-evidence"
        assert report["lie_closure"]["rank"] == 35
        rows = read_spectrum(tmp_path / "an" / "spectrum.csv")
        assert len(rows) == 81
        assert (tmp_path / "an" / "pair_spectrum.csv").exists()
        assert len(read_ratios(tmp_path / "an" / "rabi_ratios.csv")) == 3

    def test_sweep_without_decay(self, tmp_path):
        text = GRAPE_CONFIG.replace("gamma_r: 0.001", "gamma_r: 0.0")
        text += "sweep:\n  total_times: [6, 12]\n  n_steps: 30\n"
        path = write_config(tmp_path, text)
        assert main(["sweep", str(path), "-o", str(tmp_path / "sw")]) == 0
        rows = read_sweep(tmp_path / "sw" / "sweep.csv")
        assert len(rows) == 2
        for row in rows:
            assert row["status"] == "ok"
            assert row["infidelity_open"] == row["infidelity_closed"]
            assert row["total_time_over_pi_per_k"] == row["total_time_over_pi"] / 2

    def test_single_point_sweep_matches_run(self, tmp_path):
        text = GRAPE_CONFIG + "sweep:\n  total_times: [12]\n  n_steps: 30\n"
        path = write_config(tmp_path, text)
        assert main(["run", str(path), "-o", str(tmp_path / "one")]) == 0
        report = json.loads((tmp_path / "one" / "report.json").read_text())
        point = report["sweep"]["points"][0]
        assert point["infidelity_closed"] == pytest.approx(report["infidelity"], abs=1e-15)
