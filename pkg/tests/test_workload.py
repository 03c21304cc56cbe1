import pytest

from offloadsim.workload import (
    LayerKind,
    ModelConfig,
    build_layer_profiles,
    footprint,
    forward_flops,
    intra_block_activation_bytes,
    model_ladder,
    model_preset,
    total_param_count,
)


def cfg(l=1, h=1, heads=1, b=1, s=1, **kw):
    return ModelConfig("t", num_layers=l, num_heads=heads, hidden_dim=h, batch_size=b, seq_len=s, **kw)


def test_param_count_175b():
    p = total_param_count(cfg(l=96, h=12288, heads=96))
    assert p == 173_946_175_488
    assert abs(p - 175e9) / 175e9 < 0.01


def test_param_count_unit_and_13b():
    assert total_param_count(cfg()) == 12
    assert total_param_count(cfg(l=40, h=5120, heads=40)) == 12_582_912_000


def test_four_profiles_per_block_in_order():
    profs = build_layer_profiles(cfg(l=3, h=8, heads=2))
    assert len(profs) == 12
    assert [p.kind for p in profs[:4]] == [LayerKind.QKV, LayerKind.HTOH, LayerKind.HTO4H, LayerKind.FOURHTOH]
    assert [p.block_index for p in profs] == [0] * 4 + [1] * 4 + [2] * 4


def test_unit_shape_4htoh():
    p = [x for x in build_layer_profiles(cfg()) if x.kind is LayerKind.FOURHTOH][0]
    assert p.act_bytes == 1
    assert p.swap_time_units == 1


def test_htoh_act_bytes_13b_batch32():
    profs = build_layer_profiles(cfg(l=1, h=5120, heads=40, b=32, s=1024))
    htoh = [p for p in profs if p.kind is LayerKind.HTOH][0]
    assert htoh.act_bytes == 167_772_160


@pytest.mark.parametrize("b,s,h", [(1, 1, 1), (2, 3, 4), (32, 1024, 5120)])
def test_flop_and_act_ratios(b, s, h):
    profs = build_layer_profiles(cfg(h=h, heads=1, b=b, s=s))
    unit = b * s * h * h
    assert [p.flops_fwd / unit for p in profs] == [6, 2, 8, 8]
    act = b * s * h
    assert [p.act_bytes / act for p in profs] == [3, 1, 4, 1]
    assert [p.swap_time_units for p in profs] == [3, 1, 4, 1]


def test_param_bytes_sum_to_12h2_fp16():
    h = 64
    profs = build_layer_profiles(cfg(h=h, heads=4))
    assert [p.param_bytes for p in profs] == [3 * h * h * 2, h * h * 2, 4 * h * h * 2, 4 * h * h * 2]
    assert sum(p.param_bytes for p in profs) == 12 * h * h * 2


def test_footprint_175b():
    fp = footprint(model_preset("gpt3-175b"))
    assert fp.model_state_bytes == 16 * fp.total_params
    assert abs(fp.model_state_bytes - 2.78e12) / 2.78e12 < 0.005


def test_footprint_unit():
    fp = footprint(ModelConfig("u", 1, 1, 1))
    assert fp.total_params == 12
    # one "p" of 12 params: 2p + 2p + 12p bytes
    assert fp.model_state_bytes == 16 * 12


def test_footprint_checkpoints_13b_b32():
    fp = footprint(cfg(l=40, h=5120, heads=40, b=32, s=1024))
    assert fp.checkpoint_bytes_per_block == 167_772_160
    assert fp.total_checkpoint_bytes == 40 * 167_772_160
    assert fp.optimizer_state_bytes == fp.fp16_param_bytes * 6


def test_checkpoint_totals_linear_in_each_dim():
    base = footprint(cfg(l=2, h=4, heads=2, b=3, s=5)).total_checkpoint_bytes
    for key in ("l", "h", "b", "s"):
        kwargs = dict(l=2, h=4, heads=2, b=3, s=5)
        kwargs[key] *= 2
        assert footprint(cfg(**kwargs)).total_checkpoint_bytes == 2 * base


def test_activation_elem_bytes_scales_acts():
    one = build_layer_profiles(cfg(h=4, heads=2, b=2, s=2))
    two = build_layer_profiles(cfg(h=4, heads=2, b=2, s=2, activation_elem_bytes=2))
    assert [2 * p.act_bytes for p in one] == [p.act_bytes for p in two]


def test_forward_flops_and_intra_bytes():
    m = cfg(l=3, h=8, heads=2, b=2, s=4)
    assert forward_flops(m) == 3 * 24 * 2 * 4 * 64
    assert intra_block_activation_bytes(m) == 3 * 9 * 2 * 4 * 8


@pytest.mark.parametrize("bad", [dict(l=0), dict(h=0), dict(b=0), dict(s=0), dict(h=10, heads=3)])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ValueError):
        cfg(**bad)


def test_presets_ladder():
    ladder = model_ladder()
    assert len(ladder) == 8
    sizes = [total_param_count(m) for m in ladder]
    assert sizes == sorted(sizes)
    assert model_preset("GPT3-13B", batch_size=4).batch_size == 4
    with pytest.raises(KeyError):
        model_preset("gpt3-1t")
    # nominal names sit close to 12 l h^2
    for m in ladder:
        nominal = float(m.name.split("-")[1].rstrip("b")) * 1e9
        assert abs(total_param_count(m) - nominal) / nominal < 0.05
