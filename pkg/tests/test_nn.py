"""Model specs, weight persistence, forward pass, trainer."""

import numpy as np
import pytest

import camlab
from camlab import nn, ops


SPEC_TEXT = """\
img input shape=1x8x8
c1 conv filters=2 kernel=3 stride=1 pad=1
r1 relu
p1 maxpool window=2 stride=2
gap gap
head dense units=3
"""


def test_parse_and_format_round_trip():
    spec = nn.parse_model_spec(SPEC_TEXT)
    assert spec.input_shape == (1, 8, 8)
    assert [l.name for l in spec.layers] == ["c1", "r1", "p1", "gap", "head"]
    assert spec.num_categories == 3
    again = nn.parse_model_spec(nn.format_model_spec(spec))
    assert nn.format_model_spec(again) == nn.format_model_spec(spec)


def test_parse_ignores_comments_and_blank_lines():
    spec = nn.parse_model_spec(
        "# a model\nimg input shape=1x8x8\n\nfl flatten  # flattens\n"
        "head dense units=2\n")
    assert [l.name for l in spec.layers] == ["fl", "head"]


@pytest.mark.parametrize("text,fragment", [
    ("fl flatten\nhead dense units=2\n", "input"),
    ("img input shape=1x8x8\n", "no layers"),
    ("img input shape=1x8x8\nx1 warp a=1\nhead dense units=2\n", "warp"),
    ("img input shape=1x8x8\nfl flatten\nfl flatten\nhead dense units=2\n",
     "duplicate"),
    ("img input shape=1x8x8\nc1 conv filters=two kernel=3\n"
     "fl flatten\nhead dense units=2\n", "non-integer"),
    ("img input shape=1x8x8\nfl flatten\n", "dense"),
    ("img input shape=1x8x8\nc1 conv filters=1 kernel=9\nfl flatten\n"
     "head dense units=2\n", "kernel"),
    ("img input shape=1x8x8\nhead dense units=2\nr1 relu\n", "dense"),
])
def test_spec_errors(text, fragment):
    with pytest.raises(nn.SpecError) as err:
        nn.parse_model_spec(text)
    assert fragment.lower() in str(err.value).lower()


def test_shapes_chain_matches_forward(gap_spec, fc_spec):
    for spec in (gap_spec, fc_spec):
        weights = nn.init_weights(spec, rng_seed=0)
        img = np.zeros(spec.input_shape, np.float32)
        _, tape = nn.forward(spec, weights, img)
        static = spec.shapes()
        for rec in tape.records:
            assert tuple(rec.y.shape) == tuple(static[rec.name]), rec.name


def test_fixture_specs_share_target_layer(gap_spec, fc_spec):
    assert gap_spec.shapes()["r2"] == fc_spec.shapes()["r2"] == (12, 24, 24)


def test_spec_file_round_trip(tmp_path):
    spec = nn.parse_model_spec(SPEC_TEXT)
    path = tmp_path / "model.spec"
    nn.save_model_spec(spec, path)
    assert nn.format_model_spec(nn.load_model_spec(path)) \
        == nn.format_model_spec(spec)


# ------------------------------------------------------------ WeightStore

def test_weight_store_round_trip(tmp_path, gap_spec):
    w = nn.init_weights(gap_spec, rng_seed=7)
    w.save(tmp_path / "w")
    again = nn.WeightStore.load(tmp_path / "w")
    assert again == w
    again.check_against(gap_spec)


def test_weight_store_detects_truncated_blob(tmp_path, gap_spec):
    w = nn.init_weights(gap_spec, rng_seed=7)
    w.save(tmp_path / "w")
    blob = (tmp_path / "w.bin").read_bytes()
    (tmp_path / "w.bin").write_bytes(blob[:-4])
    with pytest.raises(nn.WeightStoreError):
        nn.WeightStore.load(tmp_path / "w")


def test_weight_store_detects_bad_manifest(tmp_path, gap_spec):
    w = nn.init_weights(gap_spec, rng_seed=7)
    w.save(tmp_path / "w")
    (tmp_path / "w.manifest").write_text("garbage line\n")
    with pytest.raises(nn.WeightStoreError):
        nn.WeightStore.load(tmp_path / "w")


def test_weight_store_spec_mismatch(gap_spec, fc_spec):
    w = nn.init_weights(gap_spec, rng_seed=0)
    with pytest.raises(nn.WeightStoreError):
        w.check_against(fc_spec)


def test_weight_store_equality_is_bitwise():
    a = nn.WeightStore({"l": {"w": np.zeros(3, np.float32)}})
    b = nn.WeightStore({"l": {"w": np.zeros(3, np.float32)}})
    assert a == b
    b.params["l"]["w"][0] = np.float32(1e-30)
    assert a != b


# ---------------------------------------------------------------- forward

def test_forward_rejects_wrong_image_shape(gap_spec):
    w = nn.init_weights(gap_spec, rng_seed=0)
    with pytest.raises(ops.DimensionError):
        nn.forward(gap_spec, w, np.zeros((1, 32, 32), np.float32))


def test_forward_is_deterministic(gap_spec, rng):
    w = nn.init_weights(gap_spec, rng_seed=0)
    img = rng.random(gap_spec.input_shape).astype(np.float32)
    s1, _ = nn.forward(gap_spec, w, img)
    s2, _ = nn.forward(gap_spec, w, img)
    np.testing.assert_array_equal(s1, s2)


# ---------------------------------------------------------------- trainer

def separable_toy_set(n=60, seed=0):
    """Trivially separable 2-category set: bright left vs bright right."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        label = int(rng.integers(2))
        img = rng.random((1, 8, 8)).astype(np.float32) * 0.2
        if label == 0:
            img[:, :, :4] += 0.7
        else:
            img[:, :, 4:] += 0.7
        out.append((img, label))
    return out


TOY_SPEC = """\
img input shape=1x8x8
c1 conv filters=2 kernel=3 stride=1 pad=1
r1 relu
gap gap
head dense units=2
"""


def test_trainer_fits_separable_toy_set():
    spec = nn.parse_model_spec(TOY_SPEC)
    data = separable_toy_set()
    w = nn.train_fixture(spec, data, epochs=20, learning_rate=0.1, rng_seed=0)
    assert nn.accuracy(spec, w, data) == 1.0


def test_trainer_is_deterministic():
    spec = nn.parse_model_spec(TOY_SPEC)
    data = separable_toy_set()
    w1 = nn.train_fixture(spec, data, epochs=3, learning_rate=0.1, rng_seed=4)
    w2 = nn.train_fixture(spec, data, epochs=3, learning_rate=0.1, rng_seed=4)
    assert w1 == w2


def test_trainer_rejects_bad_labels():
    spec = nn.parse_model_spec(TOY_SPEC)
    with pytest.raises(ValueError):
        nn.train_fixture(spec, [(np.zeros((1, 8, 8), np.float32), 5)],
                         epochs=1, learning_rate=0.1)
    with pytest.raises(ValueError):
        nn.train_fixture(spec, [], epochs=1, learning_rate=0.1)


def test_trainer_raises_on_divergence():
    # two stacked dense layers: an absurd learning rate makes the layer
    # product overflow float32 within a couple of updates
    spec = nn.parse_model_spec("""
img input shape=1x8x8
fl flatten
fc1 dense units=4
head dense units=2
""")
    data = separable_toy_set(20)
    with pytest.raises(nn.TrainingError) as err:
        nn.train_fixture(spec, data, epochs=5, learning_rate=1e30, rng_seed=0)
    assert "epoch" in str(err.value)


def test_fixture_models_reach_high_held_out_accuracy(
        gap_spec, fc_spec, gap_weights, fc_weights, test_set):
    assert nn.accuracy(gap_spec, gap_weights, test_set) >= 0.95
    assert nn.accuracy(fc_spec, fc_weights, test_set) >= 0.95
