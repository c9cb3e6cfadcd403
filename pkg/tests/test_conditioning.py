import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scorefold.conditioning import (
    PREDICTION_CHANNELS,
    assemble,
    group_slices,
    load_predictions,
    one_hot_pairwise,
    positional_encoding,
    residue_position_codes,
    save_predictions,
)
from scorefold.errors import ConfigError, DataError, FormatError, InvalidInputError
from scorefold.geometry import ALPHABET

sequences = st.text(alphabet=ALPHABET + "XB", min_size=1, max_size=25)


def uniform_predictions(L):
    out = np.zeros((L, L, PREDICTION_CHANNELS))
    for sl in group_slices().values():
        out[..., sl] = 1.0 / (sl.stop - sl.start)
    return out


def test_one_hot_pair_of_alanines():
    M = one_hot_pairwise("AA")
    a = ALPHABET.index("A")
    for i in range(2):
        for j in range(2):
            assert M[i, j].sum() == 2
            assert M[i, j, a] == 1 and M[i, j, 20 + a] == 1


def test_one_hot_rows_repeat():
    M = one_hot_pairwise("ACDEFG")
    for j in range(6):
        assert np.array_equal(M[2, j, :20], M[2, 0, :20])
        assert np.array_equal(M[j, 4, 20:], M[0, 4, 20:])


def test_one_hot_counts_random_30mer(rng):
    seq = "".join(rng.choice(list(ALPHABET), 30))
    assert np.all(one_hot_pairwise(seq).sum(axis=-1) == 2)


def test_unknown_residue_gives_zero_block():
    M = one_hot_pairwise("AX")
    assert M[1, 0, :20].sum() == 0 and M[0, 1, 20:].sum() == 0


def test_one_hot_rejects_empty():
    with pytest.raises(InvalidInputError):
        one_hot_pairwise("")


@given(sequences)
def test_pairwise_maps_swap_blocks_under_transpose(seq):
    for M, w in ((one_hot_pairwise(seq), 20), (positional_encoding(len(seq), 16), 8)):
        T = M.transpose(1, 0, 2)
        assert np.array_equal(T[..., :w], M[..., w:])
        assert np.array_equal(T[..., w:], M[..., :w])


def test_positional_code_at_origin():
    Z = residue_position_codes(3, 48)
    assert np.all(Z[0, 0::2] == 0.0) and np.all(Z[0, 1::2] == 1.0)


def test_positional_code_first_frequency():
    Z = residue_position_codes(3, 48)
    assert Z[1, 0] == pytest.approx(0.841471, abs=1e-6)
    assert Z[1, 1] == pytest.approx(0.540302, abs=1e-6)


def test_positional_code_closed_form():
    L, D = 40, 48
    Z = residue_position_codes(L, D)
    assert Z.shape == (L, D // 2)
    for i in (0, 7, 39):
        for r in range(D // 4):
            arg = i / 1000 ** (4 * r / D)
            assert Z[i, 2 * r] == pytest.approx(np.sin(arg), abs=1e-15)
            assert Z[i, 2 * r + 1] == pytest.approx(np.cos(arg), abs=1e-15)


@given(st.integers(1, 60), st.sampled_from([4, 8, 16, 48]))
def test_positional_encoding_bounded_and_deterministic(L, D):
    P = positional_encoding(L, D)
    assert P.shape == (L, L, D)
    assert np.abs(P).max() <= 1.0
    assert np.array_equal(P, positional_encoding(L, D))


@pytest.mark.parametrize("width", [6, 10, 0])
def test_positional_width_must_divide_by_four(width):
    with pytest.raises(ConfigError):
        positional_encoding(5, width)


def test_uniform_predictions_load_normalized(tmp_path):
    save_predictions(tmp_path / "p.sft", uniform_predictions(5))
    pm = load_predictions(tmp_path / "p.sft")
    assert pm.normalized and pm.values.shape == (5, 5, 100)


def test_overfull_bin_vector_flags_unnormalized(tmp_path):
    P = uniform_predictions(4)
    P[1, 2, :37] *= 1.5
    save_predictions(tmp_path / "p.sft", P)
    assert not load_predictions(tmp_path / "p.sft").normalized


def test_prediction_round_trip_bit_exact(tmp_path, rng):
    P = rng.random((9, 9, 100)).astype(np.float32)
    save_predictions(tmp_path / "p.sft", P)
    assert load_predictions(tmp_path / "p.sft").values.tobytes() == P.tobytes()


def test_prediction_shape_and_nan_errors(tmp_path):
    save_predictions(tmp_path / "bad.sft", np.zeros((4, 4, 99)))
    with pytest.raises(FormatError):
        load_predictions(tmp_path / "bad.sft")
    P = uniform_predictions(4)
    P[0, 3, 50] = np.nan
    save_predictions(tmp_path / "nan.sft", P)
    with pytest.raises(DataError):
        load_predictions(tmp_path / "nan.sft")


def test_assemble_channel_count_with_predictions():
    b = assemble("A" * 64, predictions=uniform_predictions(64))
    assert b.channels == 188
    assert b.features().shape == (64, 64, 188)
    assert b.predictions_normalized


def test_assemble_without_predictions():
    b = assemble("ACDEFGH")
    assert b.channels == 188
    assert not b.predictions.any()
    assert not b.predictions_normalized


def test_assemble_distance_only_mask():
    P = uniform_predictions(6)
    b = assemble("ACDEFG", predictions=P, mask="orientation")
    sl = group_slices()
    assert np.array_equal(b.predictions[..., sl["distance"]], P[..., sl["distance"]])
    for name in ("omega", "gamma", "phi"):
        assert not b.predictions[..., sl[name]].any()


def test_assemble_length_mismatch():
    with pytest.raises(InvalidInputError):
        assemble("ACDE", predictions=uniform_predictions(5))


def test_assemble_manifest_is_stable():
    a = assemble("ACDEFG")
    b = assemble("KLMNPQRS", predictions=uniform_predictions(8))
    assert a.manifest == b.manifest
    assert sum(w for _, w in a.manifest) == a.channels


def test_crop_uses_absolute_positions():
    b = assemble("ACDEFGHIKL", predictions=uniform_predictions(10))
    c = b.crop(3, 4)
    assert c.sequence == "EFGH"
    assert np.array_equal(c.features(), b.features()[3:7, 3:7])
