import csv
import os
import subprocess
import sys

import pytest

import neuroevo as ne


def test_weight_counts():
    assert ne.count_weights(ne.Arch.I, ne.Mesh.full()) == 21170
    assert ne.count_weights(ne.Arch.II, ne.Mesh.full()) == 21160
    ref = ne.Mesh.reference()
    assert ref.m1_count() == 139
    assert ne.count_weights(ne.Arch.I, ref) == 11810


def test_mesh_text_round_trip():
    mesh = ne.sample_mesh(20, seed=3)
    assert mesh.valid()
    assert 1 <= mesh.m1_count() <= 20
    assert ne.Mesh.from_text(mesh.to_text()) == mesh


def test_errors_carry_a_code():
    with pytest.raises(ne.NeuroevoError) as info:
        ne.Mesh.from_text("0101")
    assert info.value.code == "DimensionMismatch"


def test_crc32_check_value():
    assert ne.crc32(b"123456789") == 0xCBF43926


def test_network_forward():
    net = ne.Network(ne.Arch.I, ne.Mesh.reference(), seed=4)
    assert net.window == 10
    assert net.weight_count() == 11810
    y = net.forward([[0.5] * 8 for _ in range(10)])
    assert y == net.forward([[0.5] * 8 for _ in range(10)])
    # Arch II averages sigmoid activations.
    averaged = ne.Network(ne.Arch.II, seed=4)
    assert 0.0 < averaged.forward([[0.5] * 8 for _ in range(10)]) < 1.0
    with pytest.raises(ne.NeuroevoError):
        net.forward([[0.5] * 8 for _ in range(3)])


def split_corpus(tmp_path, n_train=3, n_test=1):
    files = ne.synth(tmp_path / "all", seed=5, n_flights=n_train + n_test, length=60, n_channels=6)
    (tmp_path / "train").mkdir()
    (tmp_path / "test").mkdir()
    for k, f in enumerate(files):
        dest = tmp_path / ("train" if k < n_train else "test") / f.name
        dest.write_bytes(f.read_bytes())
    return {
        "train_dir": tmp_path / "train",
        "test_dir": tmp_path / "test",
        "n_channels": 4,
        "epochs": 2,
        "seed": 2,
        "n_ants": 6,
        "n_iterations": 4,
        "workers": 2,
        "out_dir": tmp_path / "out",
    }


def test_train_evaluate_evolve_report(tmp_path):
    settings = split_corpus(tmp_path)
    ranking = ne.correlate(tmp_path / "all", tmp_path / "ranking.csv")
    assert len(ranking) == 5
    assert ranking == sorted(ranking, key=lambda e: -e[1])

    r = ne.train(settings)
    assert len(r["cost_history"]) == 2
    ev = ne.evaluate(tmp_path / "out" / "model.neac", settings["test_dir"], tmp_path / "eval")
    assert ev["mae"] == pytest.approx(r["test_mae"], rel=1e-12)
    assert ne.Network.load(tmp_path / "out" / "model.neac").channels[-1] == "Vib"

    assert ne.evolve(settings, "local") == 0
    top = ne.report(tmp_path / "out" / "evolution_log.csv", tmp_path / "top.csv", k=3)
    assert len(top) == 3
    assert [row["fitness"] for row in top] == sorted(row["fitness"] for row in top)


def test_cli_subprocess(tmp_path):
    cli = os.environ.get("NEUROEVO_CLI")
    if not cli:
        pytest.skip("NEUROEVO_CLI is not set")
    run = lambda *args: subprocess.run([cli, *map(str, args)], capture_output=True, text=True)
    assert run("synth", "--out", tmp_path / "data", "--flights", 3, "--length", 50, "--channels", 5).returncode == 0
    out = run("correlate", "--data", tmp_path / "data", "--out", tmp_path / "ranking.csv")
    assert out.returncode == 0, out.stderr
    with open(tmp_path / "ranking.csv") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 4
    assert run("frobnicate").returncode != 0
