import itertools

import numpy as np
import pytest

from app.errors import ConfigError, InvalidArchitecture, MalformedActions, SpaceTooLarge
from app.search_space import (
    ArchitectureSpec,
    BlockChoice,
    SearchSpaceConfig,
    block_options,
    cardinality,
    decode,
    describe,
    encode,
    encoding_key,
    enumerate_architectures,
    param_count,
    parse_encoding_key,
    require_valid,
    storage_mb,
    validate,
)


def default_space(n):
    return SearchSpaceConfig(num_searchable_blocks=n, header_out_channels=8)


def random_arch(cfg, rng):
    options = block_options(cfg)
    while True:
        blocks = [options[rng.integers(len(options))] for _ in range(cfg.num_searchable_blocks)]
        arch = ArchitectureSpec(blocks=tuple(blocks), header_out_channels=cfg.header_out_channels)
        if validate(arch, cfg):
            return arch


# ===== VALIDACIÓN =====
def test_validate_accepts_blocks_from_choice_sets():
    cfg = default_space(3)
    arch = ArchitectureSpec(
        blocks=(BlockChoice("MB", 3, 8, 16), BlockChoice("RB", 5, 16, 24), BlockChoice("CB", 7, 32, 32)),
        header_out_channels=8,
    )
    assert validate(arch, cfg)


def test_validate_rejects_out_of_set_kernel():
    cfg = SearchSpaceConfig(num_searchable_blocks=2, kernel_choices=(3, 5), header_out_channels=8)
    arch = ArchitectureSpec(
        blocks=(BlockChoice("MB", 3, 8, 16), BlockChoice("DB", 4, 8, 16)),
        header_out_channels=8,
    )
    assert not validate(arch, cfg)


def test_validate_rejects_all_skipped():
    cfg = default_space(2)
    arch = ArchitectureSpec(blocks=(cfg.placeholder, cfg.placeholder), header_out_channels=8)
    assert not validate(arch, cfg)
    with pytest.raises(InvalidArchitecture):
        require_valid(arch, cfg)


def test_validate_rejects_non_canonical_skip():
    cfg = default_space(2)
    odd_skip = BlockChoice("CB", 7, 32, 32, skipped=True)
    arch = ArchitectureSpec(blocks=(odd_skip, BlockChoice("MB", 3, 8, 8)), header_out_channels=8)
    assert not validate(arch, cfg)


@pytest.mark.parametrize(
    "changes",
    [
        {"kernel_choices": ()},
        {"kernel_choices": (3, 4)},
        {"ch2_choices": (16, 8)},
        {"ch3_choices": (8, 8)},
        {"num_searchable_blocks": 0},
        {"block_types": ("CB", "MB")},
    ],
)
def test_config_rejects_invalid_choice_sets(changes):
    with pytest.raises(ConfigError):
        default_space(1).with_changes(**changes)


def test_config_from_dict_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        SearchSpaceConfig.from_dict({"num_searchable_blocks": 2, "depth_multiplier": 2})


@pytest.mark.parametrize("value", [3.7, "3", True, 0])
def test_architecture_from_dict_requires_integer_fields(value):
    raw = {"header_out_channels": 8, "blocks": [{"block_type": "CB", "kernel": value, "ch2": 8, "ch3": 16}]}
    with pytest.raises(ConfigError):
        ArchitectureSpec.from_dict(raw)


def test_architecture_from_dict_rejects_fractional_header():
    raw = {"header_out_channels": 8.5, "blocks": [{"block_type": "CB", "kernel": 3, "ch2": 8, "ch3": 16}]}
    with pytest.raises(ConfigError):
        ArchitectureSpec.from_dict(raw)


def test_config_json_round_trip():
    cfg = default_space(4)
    assert SearchSpaceConfig.from_dict(cfg.to_dict()) == cfg


# ===== CARDINALIDAD Y ENUMERACIÓN =====
def test_cardinality_single_block():
    assert cardinality(default_space(1)) == 192


def test_cardinality_three_blocks():
    assert cardinality(default_space(3)) == 193 ** 3 - 1 == 7_189_056


def test_cardinality_single_point_without_skip():
    cfg = SearchSpaceConfig(
        num_searchable_blocks=1,
        kernel_choices=(3,),
        ch2_choices=(8,),
        ch3_choices=(8,),
        block_types=("CB",),
        allow_skip=False,
    )
    assert cardinality(cfg) == 1
    assert len(list(enumerate_architectures(cfg, 10))) == 1


def test_enumerate_single_block_matches_cardinality():
    cfg = default_space(1)
    archs = list(enumerate_architectures(cfg, 1000))
    assert len(archs) == 192
    assert len({encode(a, cfg) for a in archs}) == 192


def test_enumerate_two_blocks_without_duplicates():
    cfg = default_space(2)
    keys = {encode(a, cfg) for a in enumerate_architectures(cfg, 100_000)}
    assert len(keys) == 37_248 == cardinality(cfg)


def test_enumerate_guard():
    with pytest.raises(SpaceTooLarge):
        enumerate_architectures(default_space(1), 10)


def test_enumerate_order_lists_active_options_before_skip():
    cfg = default_space(1)
    archs = list(enumerate_architectures(cfg, 1000))
    assert archs[0].blocks[0] == BlockChoice("MB", 3, 8, 8)
    assert all(not a.blocks[0].skipped for a in archs)


def test_cardinality_equals_enumeration_on_random_configs():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 50:
        types = tuple(t for t in ("MB", "DB", "RB", "CB") if rng.random() < 0.5) or ("CB",)
        cfg = SearchSpaceConfig(
            num_searchable_blocks=int(rng.integers(1, 4)),
            kernel_choices=(3, 5, 7)[: int(rng.integers(1, 3))],
            ch2_choices=(8, 16, 24)[: int(rng.integers(1, 3))],
            ch3_choices=(8, 16, 24)[: int(rng.integers(1, 3))],
            allow_skip=bool(rng.random() < 0.7),
            block_types=types,
            header_out_channels=8,
        )
        if cardinality(cfg) > 100_000:
            continue
        keys = [encoding_key(encode(a, cfg)) for a in enumerate_architectures(cfg, 100_000)]
        assert len(keys) == cardinality(cfg)
        assert len(set(keys)) == len(keys)
        checked += 1


# ===== CODIFICACIÓN =====
def test_arities_of_single_block_space():
    assert default_space(1).arities == (2, 4, 3, 4, 4)


def test_round_trip_on_random_architectures():
    cfg = default_space(5)
    rng = np.random.default_rng(7)
    for _ in range(100):
        arch = random_arch(cfg, rng)
        actions = encode(arch, cfg)
        assert len(actions) == 25
        assert decode(actions, cfg) == arch


def test_decode_all_zero_is_all_skipped():
    cfg = default_space(3)
    arch = decode((0,) * 15, cfg)
    assert all(b.skipped for b in arch.blocks)
    assert not validate(arch, cfg)


def test_decode_rejects_wrong_length_and_range():
    cfg = default_space(1)
    with pytest.raises(MalformedActions):
        decode((1, 0, 0, 0), cfg)
    with pytest.raises(MalformedActions):
        decode((1, 4, 0, 0, 0), cfg)
    with pytest.raises(MalformedActions):
        decode((0, 1, 0, 0, 0), cfg)


def test_encoding_key_round_trip():
    assert parse_encoding_key(encoding_key((1, 0, 2, 3, 1))) == (1, 0, 2, 3, 1)
    with pytest.raises(MalformedActions):
        parse_encoding_key("1-x-2")


# ===== CANALES Y PARÁMETROS =====
def test_skipped_block_does_not_change_downstream_channels():
    cfg2, cfg3 = default_space(2), default_space(3)
    a, b = BlockChoice("MB", 3, 16, 24), BlockChoice("RB", 5, 8, 32)
    plain = ArchitectureSpec(blocks=(a, b), header_out_channels=8)
    with_skip = ArchitectureSpec(blocks=(a, cfg3.placeholder, b), header_out_channels=8)
    assert validate(plain, cfg2) and validate(with_skip, cfg3)
    assert [ch for _, _, ch in plain.channel_chain()] == [ch for _, _, ch in with_skip.channel_chain()]
    assert param_count(plain) == param_count(with_skip)


@pytest.mark.parametrize(
    "block, expected",
    [
        (BlockChoice("CB", 3, 8, 16), 1_152),
        (BlockChoice("RB", 3, 16, 8), 2_304),
        (BlockChoice("MB", 5, 32, 16), 1_568),
    ],
)
def test_param_count_formulas(block, expected):
    assert param_count(ArchitectureSpec(blocks=(block,), header_out_channels=8)) == expected


def test_param_count_is_monotone():
    for block_type, kernel, ch2, ch3 in itertools.product(("MB", "DB", "RB", "CB"), (3, 5), (8, 16), (8, 16)):
        base = param_count(ArchitectureSpec((BlockChoice(block_type, kernel, ch2, ch3),), 8))
        for bigger in (
            BlockChoice(block_type, kernel + 2, ch2, ch3),
            BlockChoice(block_type, kernel, ch2 + 8, ch3),
            BlockChoice(block_type, kernel, ch2, ch3 + 8),
        ):
            assert param_count(ArchitectureSpec((bigger,), 8)) >= base


def test_storage_uses_four_bytes_per_param():
    assert storage_mb(2 ** 18) == pytest.approx(1.0)


def test_describe_lists_every_block():
    cfg = default_space(2)
    arch = ArchitectureSpec(blocks=(BlockChoice("MB", 3, 8, 16), cfg.placeholder), header_out_channels=8)
    text = describe(arch)
    assert "MB K=3 8->8->16 stride=2" in text
    assert "(omitido)" in text
