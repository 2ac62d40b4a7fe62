import json

import pytest

from app.models import SearchRun

TINY_SPACE = {
    "num_searchable_blocks": 1,
    "kernel_choices": [3],
    "ch2_choices": [8],
    "ch3_choices": [8, 16],
    "header_out_channels": 8,
    "input_resolution": 32,
}


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "search_space": TINY_SPACE,
                "specification": {"timing_constraint_ms": None, "accuracy_constraint": 0.0},
                "controller": {"hidden_dim": 8, "embedding_dim": 4},
                "surrogate": {"noise_amp": 0.01},
                "episodes": 10,
            }
        )
    )
    return path


# ===== BÚSQUEDA =====
def test_search_command_writes_results(runner, tmp_path, run_config):
    out = tmp_path / "out"
    result = runner.invoke(args=["search", "--config", str(run_config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "10 episodios" in result.output
    assert "Tasa de arquitecturas válidas: 100.00%" in result.output
    assert (out / "episodes.csv").is_file()
    assert json.loads((out / "summary.json").read_text())["episodes"] == 10


def test_search_command_can_persist(app, runner, tmp_path, run_config):
    result = runner.invoke(
        args=["search", "--config", str(run_config), "--out", str(tmp_path / "out"), "--persist"]
    )
    assert result.exit_code == 0, result.output
    run = SearchRun.query.one()
    assert run.episodes == 10
    assert len(run.episode_rows) == 10
    assert run.summary["episodes"] == 10


def test_search_command_missing_config_is_io_error(runner, tmp_path):
    result = runner.invoke(args=["search", "--config", str(tmp_path / "nope.json")])
    assert result.exit_code == 3


def test_search_command_rejects_bad_config(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"search_space": TINY_SPACE}))
    result = runner.invoke(args=["search", "--config", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "ConfigError" in result.output


def test_search_command_rejects_non_numeric_seed(runner, tmp_path, run_config):
    data = json.loads(run_config.read_text())
    data["seed"] = "abc"
    run_config.write_text(json.dumps(data))
    result = runner.invoke(args=["search", "--config", str(run_config), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "ConfigError" in result.output


def test_enumerate_command(runner, tmp_path, run_config):
    result = runner.invoke(args=["enumerate", "--config", str(run_config)])
    assert result.exit_code == 0, result.output
    assert "Cardinalidad: 8" in result.output
    assert "Enumeradas: 8" in result.output

    listing = tmp_path / "all.txt"
    result = runner.invoke(args=["enumerate", "--config", str(run_config), "--out", str(listing)])
    assert result.exit_code == 0
    assert listing.read_text().splitlines()[0] == "1-0-0-0-0"


def test_enumerate_command_guards_large_spaces(runner, run_config):
    result = runner.invoke(args=["enumerate", "--config", str(run_config), "--limit", "5"])
    assert result.exit_code == 2
    assert "SpaceTooLarge" in result.output


def test_oracle_command(runner, tmp_path, run_config):
    out = tmp_path / "landscape.csv"
    result = runner.invoke(args=["oracle", "--config", str(run_config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "Arquitecturas evaluadas: 8" in result.output
    assert len(out.read_text().splitlines()) == 9


def test_gen_table_and_latency_commands(runner, tmp_path, run_config):
    table = tmp_path / "table.csv"
    result = runner.invoke(
        args=[
            "gen-table",
            "--config", str(run_config),
            "--ms-per-mac", "0.001",
            "--header-ms", "10",
            "--out", str(table),
        ]
    )
    assert result.exit_code == 0, result.output

    arch = tmp_path / "arch.json"
    arch.write_text(
        json.dumps({"header_out_channels": 8, "blocks": [{"block_type": "CB", "kernel": 3, "ch2": 8, "ch3": 16}]})
    )
    result = runner.invoke(args=["latency", "--arch", str(arch), "--table", str(table), "--resolution", "32"])
    assert result.exit_code == 0, result.output
    assert "Latencia estimada (raspberry): 1189.65 ms" in result.output
    assert "1,152" in result.output


def test_latency_command_missing_entry(runner, tmp_path, run_config):
    table = tmp_path / "table.csv"
    runner.invoke(args=["gen-table", "--config", str(run_config), "--out", str(table)])
    arch = tmp_path / "arch.json"
    arch.write_text(
        json.dumps({"header_out_channels": 8, "blocks": [{"block_type": "CB", "kernel": 7, "ch2": 8, "ch3": 16}]})
    )
    result = runner.invoke(args=["latency", "--arch", str(arch), "--table", str(table), "--resolution", "32"])
    assert result.exit_code == 2
    assert "MissingEntry" in result.output


# ===== ANÁLISIS =====
def test_score_command(runner, replay_dir):
    result = runner.invoke(
        args=["score", "--replay", f"{replay_dir}/table3_g1.csv", "--baseline", "MobileNetV2", "--ac", "0.81"]
    )
    assert result.exit_code == 0, result.output
    line = next(l for l in result.output.splitlines() if l.lstrip().startswith("FaHaNa-Small"))
    for value in ("0.1973", "0.62", "+15.14%", "5.28x", "5.75x", "5.79x"):
        assert value in line


def test_score_command_errors(runner, tmp_path, replay_dir):
    unknown = runner.invoke(
        args=["score", "--replay", f"{replay_dir}/table3_g1.csv", "--baseline", "VGG-16", "--ac", "0.81"]
    )
    assert unknown.exit_code == 2
    missing = runner.invoke(
        args=["score", "--replay", str(tmp_path / "none.csv"), "--baseline", "MobileNetV2", "--ac", "0.81"]
    )
    assert missing.exit_code == 3


def test_pareto_command(runner, tmp_path):
    points = tmp_path / "points.csv"
    points.write_text("id,accuracy,unfairness\nA,0.8128,0.1973\nB,0.8105,0.2325\nC,0.85,0.3\n")
    result = runner.invoke(args=["pareto", "--points", str(points)])
    assert result.exit_code == 0, result.output
    assert result.output.splitlines() == ["C\t0.8500\t0.3000", "A\t0.8128\t0.1973"]

    sized = tmp_path / "sized.csv"
    sized.write_text("id,reward,params\nsmall,0.62,422341\nbig,0.58,2230277\n")
    result = runner.invoke(args=["pareto", "--points", str(sized), "--objective", "reward-size"])
    assert result.output.splitlines() == ["small\t0.6200\t422341"]


def test_gen_trace_and_freeze_commands(runner, tmp_path):
    trace = tmp_path / "trace.jsonl"
    result = runner.invoke(args=["gen-trace", "--out", str(trace), "--layers", "8", "--divergent-from", "6"])
    assert result.exit_code == 0, result.output

    result = runner.invoke(args=["freeze", "--trace", str(trace), "--ratio", "0.5"])
    assert result.exit_code == 0, result.output
    assert "Umbral" in result.output
    assert "Capa de corte: " in result.output
    assert len([l for l in result.output.splitlines() if l.startswith("capa")]) == 8


def test_freeze_command_rejects_bad_ratio(runner, tmp_path):
    trace = tmp_path / "trace.jsonl"
    runner.invoke(args=["gen-trace", "--out", str(trace), "--layers", "4", "--divergent-from", "3"])
    result = runner.invoke(args=["freeze", "--trace", str(trace), "--ratio", "1.5"])
    assert result.exit_code == 2


def test_balancing_command(runner, replay_dir):
    result = runner.invoke(args=["balancing", "--results", f"{replay_dir}/balancing.csv"])
    assert result.exit_code == 0, result.output
    assert "MobileNetV2: precisión +1.09 pp, injusticia +0.0797" in result.output
