import numpy as np
import pytest

from simcovert.cli import main
from simcovert.config import ConfigError, profile_config
from simcovert.harness import (RESULT_COLUMNS, SweepSpec, aggregate, emit_plot_data, parse_seeds,
                               parse_values, read_csv, run_sweep)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    spec = SweepSpec(profile_config("desk"), "p_max_dbm", [30.0, 40.0], ["random", "codebook"],
                     [0, 1, 2], out_dir=out, codebook_size=2, tag="pmax")
    rows, summary = run_sweep(spec)
    return spec, rows, summary, out


def test_sweep_outputs(small_sweep):
    spec, rows, summary, out = small_sweep
    assert len(rows) == 12 and len(summary) == 4
    raw = read_csv(out / "pmax.csv")
    assert tuple(raw[0]) == RESULT_COLUMNS
    assert [(r["value"], r["algo"], r["seed"]) for r in raw][:3] == [("30.0", "random", "0"),
                                                                     ("30.0", "random", "1"),
                                                                     ("30.0", "random", "2")]
    assert (out / "pmax_timing.csv").exists()
    lines = (out / "pmax_random.dat").read_text().splitlines()
    assert lines[0] == "x mean std n" and len(lines) == 3


def test_sweep_reproducible_bytes(small_sweep, tmp_path):
    spec, _, _, out = small_sweep
    spec2 = SweepSpec(spec.base, spec.param, spec.values, spec.algorithms, spec.seeds,
                      out_dir=tmp_path, codebook_size=2, tag="pmax")
    run_sweep(spec2)
    for name in ("pmax.csv", "pmax_summary.csv", "pmax_random.dat", "pmax_codebook.dat"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_aggregates_recomputable(small_sweep):
    _, _, _, out = small_sweep
    raw = read_csv(out / "pmax.csv")
    for row in read_csv(out / "pmax_summary.csv"):
        rates = np.array([float(r["sum_rate"]) for r in raw
                          if r["value"] == row["value"] and r["algo"] == row["algo"]])
        assert abs(float(row["mean"]) - rates.mean()) <= 1e-12
        assert abs(float(row["std"]) - rates.std(ddof=1)) <= 1e-12
        assert int(row["n"]) == len(rates)


def test_codebook_not_below_random(small_sweep):
    _, rows, _, _ = small_sweep
    by = {(r["value"], r["algo"], r["seed"]): r["sum_rate"] for r in rows}
    for (value, algo, seed), rate in by.items():
        if algo == "codebook":
            assert rate >= by[(value, "random", seed)]


def test_plot_data_shape_and_idempotence(tmp_path):
    summary = [{"param": "p", "value": x, "algo": a, "mean": x * 0.5, "std": 0.1, "n": 3}
               for a in ("sca", "pga", "random", "codebook") for x in (1.0, 2.0, 3.0, 4.0, 5.0)]
    paths = emit_plot_data(summary, "fig", tmp_path)
    assert len(paths) == 4
    first = {p: p.read_bytes() for p in paths}
    for p in paths:
        assert len(p.read_text().splitlines()) == 6
    emit_plot_data(summary, "fig", tmp_path)
    assert all(p.read_bytes() == b for p, b in first.items())
    with pytest.raises(ValueError):
        emit_plot_data([], "fig", tmp_path)


def test_aggregate_single_run_std_zero():
    rows = [{"param": "p", "value": 1, "algo": "sca", "seed": 0, "sum_rate": 2.0, "feasible": 1}]
    assert aggregate(rows)[0]["std"] == 0.0


def test_spec_validation():
    base = profile_config("desk")
    with pytest.raises(ConfigError, match="seed"):
        SweepSpec(base, "p_max_dbm", [30.0], ["sca"], [])
    with pytest.raises(ConfigError, match="value"):
        SweepSpec(base, "p_max_dbm", [], ["sca"], [0])
    with pytest.raises(ConfigError, match="not a SystemConfig field"):
        SweepSpec(base, "power", [1], ["sca"], [0])
    with pytest.raises(ConfigError, match="unknown algorithms"):
        SweepSpec(base, "p_max_dbm", [30.0], ["greedy"], [0])


def test_invalid_value_recorded_per_row(tmp_path):
    spec = SweepSpec(profile_config("desk"), "num_users", [2, 9], ["random"], [0], out_dir=tmp_path)
    rows, summary = run_sweep(spec)
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("error")
    assert summary[1]["n"] == 0


def test_atom_sweep_keeps_factorisation():
    spec = SweepSpec(profile_config("desk"), "atoms_x", [3, 7], ["random"], [0])
    assert spec.config_for(7).atoms_per_layer == 21


def test_parse_helpers():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,4, 6-7") == [1, 4, 6, 7]
    with pytest.raises(ConfigError):
        parse_seeds(" , ")
    assert parse_values("20, 30.5,40") == [20, 30.5, 40]


# command line -------------------------------------------------------------------
def test_cli_run(tmp_path, capsys):
    assert main(["run", "--algo", "random", "--seed", "2", "--out", str(tmp_path), "--dump-channels"]) == 0
    assert '"algorithm": "random"' in capsys.readouterr().out
    assert (tmp_path / "random_seed2.json").exists() and (tmp_path / "scenario_seed2.bin").exists()


def test_cli_sweep(tmp_path, capsys):
    code = main(["sweep", "--algo", "random", "--param", "covert_eps", "--values", "0.05,0.2",
                 "--seeds", "0-1", "--out", str(tmp_path), "--tag", "eps"])
    assert code == 0
    assert (tmp_path / "eps_random.dat").exists()
    assert "covert_eps=0.05 random" in capsys.readouterr().out


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("num_tx_antennas = 4\nnum_users = 2\nnum_wardens = 1\nnum_layers = 2\n"
                   "atoms_per_layer = 9\natoms_x = 3\natoms_z = 3\n")
    assert main(["run", "--config", str(cfg), "--algo", "random"]) == 0
    cfg.write_text("num_users = 9\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_cli_check_subset(capsys):
    assert main(["check", "--only", "3,5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all(" PASS " in line for line in out)
