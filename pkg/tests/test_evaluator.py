import itertools
import math

import pytest

from app.errors import NonPositiveLatency, ParseError, UnknownArchitecture, ValidationError
from app.evaluator import (
    ReplayBackend,
    SurrogateBackend,
    SurrogateConfig,
    architecture_key,
    evaluate_full,
    load_replay,
    replay_evaluate,
    surrogate_evaluate,
)
from app.fairness import unfairness
from app.latency import generate_table
from app.reward import RewardParams, Specification
from app.search_space import ArchitectureSpec, BlockChoice, encode, encoding_key, enumerate_architectures, param_count

UNIT = RewardParams()
G1 = Specification(timing_constraint_ms=1500.0, accuracy_constraint=0.81)


def single_cb():
    return ArchitectureSpec(blocks=(BlockChoice("CB", 3, 8, 16),), header_out_channels=8)


# ===== SUSTITUTO =====
def test_surrogate_single_block_example():
    ga = surrogate_evaluate(single_cb(), SurrogateConfig())
    base = 0.9 - 0.4 * math.exp(-1152 / 1e4)
    gap = 0.5 * math.exp(-1152 / 5e3)
    assert param_count(single_cb()) == 1152
    assert ga.per_group[0] == pytest.approx(base)
    assert ga.per_group[1] == pytest.approx(base - gap)
    assert ga.overall == pytest.approx(0.9 * base + 0.1 * (base - gap))
    assert round(ga.overall, 4) == 0.5038
    assert ga.group_sizes == pytest.approx((0.9, 0.1))


def test_surrogate_large_network_limit():
    cfg = SurrogateConfig(size_scale=1e-3, tail_scale=1e-3)
    ga = surrogate_evaluate(single_cb(), cfg)
    assert ga.per_group == (0.9, 0.9)
    assert unfairness(ga) == pytest.approx(0.0, abs=1e-12)


def test_larger_tail_means_smaller_gap():
    cfg = SurrogateConfig(tail_window=1)
    small, large = BlockChoice("MB", 3, 8, 8), BlockChoice("MB", 3, 16, 8)
    wide_tail = ArchitectureSpec(blocks=(small, large), header_out_channels=8)
    narrow_tail = ArchitectureSpec(blocks=(large, small), header_out_channels=8)
    assert param_count(wide_tail) == param_count(narrow_tail) == 600
    assert unfairness(surrogate_evaluate(wide_tail, cfg)) < unfairness(surrogate_evaluate(narrow_tail, cfg))


def test_accuracy_grows_with_parameters(small_space):
    cfg = SurrogateConfig(gap0=0.0)
    rows = sorted(
        (param_count(arch), surrogate_evaluate(arch, cfg).overall)
        for arch in enumerate_architectures(small_space, 1000)
    )
    accuracies = [acc for _, acc in rows]
    assert all(b >= a - 1e-15 for a, b in zip(accuracies, accuracies[1:]))


def test_surrogate_noise_is_keyed_and_repeatable():
    cfg = SurrogateConfig(noise_amp=0.02, seed=3)
    arch = single_cb()
    first = surrogate_evaluate(arch, cfg, key="1-3-0-0-1")
    assert surrogate_evaluate(arch, cfg, key="1-3-0-0-1") == first
    assert surrogate_evaluate(arch, cfg, key="1-3-0-0-0") != first
    clean = surrogate_evaluate(arch, SurrogateConfig())
    assert abs(first.per_group[0] - clean.per_group[0]) <= 0.02


def test_surrogate_backend_counts_calls(small_space):
    backend = SurrogateBackend(SurrogateConfig(noise_amp=0.01))
    arch = next(iter(enumerate_architectures(small_space, 1000)))
    assert backend.evaluate(arch) == backend.evaluate(arch)
    assert backend.calls == 2


def test_backend_and_direct_surrogate_share_noise(small_space):
    cfg = SurrogateConfig(noise_amp=0.02, seed=4)
    backend = SurrogateBackend(cfg)
    for arch in itertools.islice(enumerate_architectures(small_space, 1000), 20):
        assert backend.evaluate(arch) == surrogate_evaluate(arch, cfg)
        assert surrogate_evaluate(arch, cfg) == surrogate_evaluate(arch, cfg, key=architecture_key(arch))


def test_architecture_key_tells_skip_positions_apart(small_space):
    keys = [architecture_key(arch) for arch in enumerate_architectures(small_space, 1000)]
    assert len(set(keys)) == len(keys)


# ===== REPLAY =====
def test_replay_rows(replay_dir):
    g1 = load_replay(f"{replay_dir}/table3_g1.csv")
    g2 = load_replay(f"{replay_dir}/table3_g2.csv")
    mobilenet = replay_evaluate("MobileNetV2", g1)
    assert mobilenet.overall == 0.8105
    assert mobilenet.per_group == (0.8127, 0.5802)
    resnet = replay_evaluate("ResNet-50", g2)
    assert resnet.overall == 0.8381
    assert resnet.per_group == (0.8398, 0.6543)
    with pytest.raises(UnknownArchitecture):
        replay_evaluate("VGG-16", g1)


REPLAY_HEADER = "model,overall_acc,acc_light,acc_dark,params,storage_mb,latency_raspberry_ms,latency_odroid_ms\n"


def test_replay_rejects_non_positive_params(tmp_path):
    path = tmp_path / "zero.csv"
    path.write_text(REPLAY_HEADER + "empty,0.8,0.81,0.6,0,0.0,10.0,20.0\n")
    with pytest.raises(ParseError):
        load_replay(path)


def test_replay_rejects_non_positive_latency(tmp_path):
    path = tmp_path / "instant.csv"
    path.write_text(REPLAY_HEADER + "instant,0.8,0.81,0.6,1000,0.01,0.0,20.0\n")
    with pytest.raises(NonPositiveLatency):
        load_replay(path)


def test_replay_rejects_duplicate_models(tmp_path, replay_dir):
    with open(f"{replay_dir}/table3_g1.csv", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    path = tmp_path / "dup.csv"
    path.write_text("\n".join(lines + [lines[1]]) + "\n")
    with pytest.raises(ValidationError):
        load_replay(path)


def test_replay_resolves_encodings(tmp_path, small_space):
    arch = next(iter(enumerate_architectures(small_space, 1000)))
    key = encoding_key(encode(arch, small_space))
    path = tmp_path / "bench.csv"
    path.write_text(
        "model,overall_acc,acc_light,acc_dark,params,storage_mb,latency_raspberry_ms,latency_odroid_ms,encoding\n"
        f"bench-0,0.75,0.8,0.3,1000,0.01,12.5,30.0,{key}\n"
    )
    backend = ReplayBackend(load_replay(path), small_space)
    assert backend.resolve(arch) == "bench-0"
    assert backend.evaluate(arch).per_group == (0.8, 0.3)
    other = next(a for a in enumerate_architectures(small_space, 1000) if a != arch)
    with pytest.raises(UnknownArchitecture):
        backend.evaluate(other)


# ===== EVALUACIÓN COMPLETA =====
def test_timing_failure_skips_expensive_backend(small_space):
    table = generate_table(small_space, header_overhead_ms=2000.0)
    backend = SurrogateBackend(SurrogateConfig())
    arch = next(iter(enumerate_architectures(small_space, 1000)))
    result = evaluate_full(arch, G1, UNIT, table, backend)
    assert result.latency_ms > 1500.0
    assert not result.feasible
    assert result.reward_value == -1.0
    assert result.grouped is None and result.unfair is None
    assert not result.backend_called
    assert backend.calls == 0


def test_feasible_surrogate_reward_is_composition(small_space):
    table = generate_table(small_space, ms_per_mac=1e-6, header_overhead_ms=1.0)
    backend = SurrogateBackend(SurrogateConfig())
    spec = Specification(timing_constraint_ms=1500.0, accuracy_constraint=0.0)
    arch = next(iter(enumerate_architectures(small_space, 1000)))
    result = evaluate_full(arch, spec, RewardParams(alpha=2.0, beta=0.5), table, backend)
    assert result.feasible
    assert result.reward_value == pytest.approx(2.0 * result.accuracy - 0.5 * result.unfair)
    assert result.params == param_count(arch)
    assert backend.calls == 1


def test_replay_timing_failure_still_reports_accuracy(replay_dir):
    backend = ReplayBackend(load_replay(f"{replay_dir}/table3_g1.csv"))
    result = evaluate_full("MobileNetV2", G1, UNIT, None, backend)
    assert result.latency_ms == 1939.40
    assert result.reward_value == -1.0
    assert result.grouped.overall == 0.8105
    assert round(result.unfair, 4) == 0.2325
    assert backend.calls == 1


def test_accuracy_below_constraint_keeps_grouped(replay_dir):
    backend = ReplayBackend(load_replay(f"{replay_dir}/table3_g1.csv"))
    result = evaluate_full("MobileNetV3(S)", G1, UNIT, None, backend)
    assert result.latency_ms <= 1500.0
    assert not result.feasible
    assert result.reward_value == -1.0
    assert result.accuracy == 0.8038


def test_replay_feasible_row(replay_dir):
    backend = ReplayBackend(load_replay(f"{replay_dir}/table3_g1.csv"))
    result = evaluate_full("FaHaNa-Small", G1, UNIT, None, backend)
    assert result.feasible
    assert round(result.reward_value, 2) == 0.62
    odroid = Specification(timing_constraint_ms=1500.0, accuracy_constraint=0.81, device_id="odroid")
    assert evaluate_full("FaHaNa-Small", odroid, UNIT, None, backend).latency_ms == 736.22
