import pytest

from engcap.nn import LayerSpec, analyze, build_architecture, build_escape_net, build_mobilescape_net, build_variant, infer_shapes
from engcap.nn.arch import ARCHITECTURES, ArchitectureSpec, VARIANTS, same_padding
from engcap.nn.complexity import layer_cost

INPUT = (56, 100, 1)


def test_escape_parameter_total_is_exact():
    # conv 8x8x1x64, conv 4x4x64x64, conv 2x2x64x64, dense 358400->256, dense 256->3
    oracle = (8 * 8 * 64 + 64) + (4 * 4 * 64 * 64 + 64) + (2 * 2 * 64 * 64 + 64) + (358_400 * 256 + 256) + (256 * 3 + 3)
    assert oracle == 4_160 + 65_600 + 16_448 + (358_400 * 256 + 256) + 771
    assert analyze(build_escape_net(INPUT)).trainable_params == oracle == 91_837_635


def test_escape_flatten_size_and_flops():
    shapes = infer_shapes(build_escape_net(INPUT))
    assert (358_400,) in shapes
    flops = analyze(build_escape_net(INPUT)).headline_flops
    assert abs(flops - 1.1e9) / 1.1e9 <= 0.10


def test_mobilescape_spatial_flow_and_budget():
    arch = build_mobilescape_net(INPUT)
    pools = [s for l, s in zip(arch.layers, infer_shapes(arch)) if l.kind == "maxpool"]
    assert [s[:2] for s in pools] == [(28, 50), (14, 25), (7, 12), (3, 6)]
    assert infer_shapes(arch)[arch.layers.index(LayerSpec("gap"))] == (128,)
    rep = analyze(arch)
    assert abs(rep.trainable_params - 67_843) / 67_843 <= 0.15
    assert abs(rep.headline_flops - 82.8e6) / 82.8e6 <= 0.10


def test_mobilescape_block_layout():
    kinds = [l.kind for l in build_mobilescape_net(INPUT).layers]
    assert kinds[:4] == ["conv", "relu", "batchnorm", "maxpool"]
    assert kinds.count("batchnorm") == 3
    assert kinds[-5:] == ["gap", "dense", "relu", "dense", "softmax"]


def test_variant_ratios():
    p = {v: analyze(build_variant(v, INPUT)).trainable_params for v in VARIANTS}
    assert abs(p["e1"] - 2.7e6) / 2.7e6 <= 0.15
    assert 0.85 <= 1 - p["e2"] / p["e0"] <= 0.93
    assert 1.25 <= p["e5"] / p["e0"] <= 1.45
    assert p["e2"] == analyze(build_mobilescape_net(INPUT)).trainable_params


def test_variant_parameter_order():
    p = {v: analyze(build_variant(v, INPUT)).trainable_params for v in VARIANTS}
    # order implied by the variant definitions (E1's flatten head dominates)
    assert p["e3"] < p["e2"] < p["e4"] < p["e0"] < p["e5"] < p["e1"]


def test_unknown_variant_and_architecture():
    with pytest.raises(ValueError):
        build_variant("e9")
    with pytest.raises(ValueError, match="valid names"):
        build_architecture("resnet")


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_every_architecture_ends_in_three_logits(name):
    arch = build_architecture(name, INPUT)
    shapes = infer_shapes(arch)
    assert shapes[-1] == (3,) and arch.layers[-1].kind == "softmax"
    rep = analyze(arch)
    assert rep.trainable_params == sum(c.params for c in rep.per_layer)
    assert rep.headline_flops == sum(c.flops for c in rep.per_layer)
    assert ArchitectureSpec.from_dict(arch.to_dict()) == arch


def test_small_cost_oracles():
    assert layer_cost(LayerSpec("dense", units=256), (128,), (256,)) == (33_024, 0, 65_792)
    assert layer_cost(LayerSpec("depthwise", kernel=(5, 5)), (28, 50, 64), (28, 50, 64))[0] == 1_664
    assert layer_cost(LayerSpec("batchnorm"), (4, 4, 64), (4, 4, 64))[:2] == (128, 128)
    assert layer_cost(LayerSpec("maxpool", kernel=(2, 2), stride=2, padding="valid"), (4, 4, 2), (2, 2, 2))[2] == 8 * 3


def test_depthwise_separable_is_cheaper_in_every_used_config():
    for name in ("mobilescape", *VARIANTS):
        arch = build_architecture(name, INPUT)
        shapes = [INPUT, *infer_shapes(arch)]
        for i, layer in enumerate(arch.layers):
            if layer.kind != "depthwise":
                continue
            c = shapes[i][2]
            k = layer.kernel[0]
            assert c > k * k / (k * k - 1)
            separable = (k * k * c + c) + (c * c + c)
            standard = k * k * c * c + c
            assert separable < standard


def test_layer_spec_invariants():
    with pytest.raises(ValueError):
        LayerSpec("pointwise", kernel=(3, 3), filters=4)
    with pytest.raises(ValueError):
        LayerSpec("maxpool", kernel=(3, 3), stride=2)
    with pytest.raises(ValueError):
        LayerSpec("conv", kernel=(3, 3), filters=4, padding="full")
    with pytest.raises(ValueError):
        LayerSpec("attention")


def test_same_padding_puts_odd_pixel_after():
    assert same_padding(100, 8, 1) == (3, 4)
    assert same_padding(56, 9, 1) == (4, 4)
    assert same_padding(7, 2, 2) == (0, 1)
