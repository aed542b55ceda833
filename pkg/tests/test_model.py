import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clsverify import (LabeledImage, ParseError, ShapeError, UnsupportedLayer,
                       build_network, dense_layer, flatten_layer, forward,
                       forward_batch, forward_trace, lambda_for_labels,
                       lambda_value, load_dataset, load_network, maxpool_layer,
                       omega, omega_sigmoid, outcome_of_probs, save_dataset,
                       save_network)
from clsverify.model import argmax_last, network_to_canonical_json

import fixture_defs as fd
import reference as ref


# ---------------------------------------------------------------------------
# construction and validation

def test_build_rejects_mismatched_chain():
    with pytest.raises(ShapeError):
        build_network((1, 1, 2), [
            dense_layer(np.zeros((3, 5)), np.zeros(3), activation="softmax"),
        ], head="softmax")


def test_build_rejects_softmax_before_last():
    with pytest.raises(UnsupportedLayer):
        build_network((1, 1, 2), [
            dense_layer(np.eye(2), np.zeros(2), activation="softmax"),
            dense_layer(np.eye(2), np.zeros(2), activation="softmax"),
        ], head="softmax")


def test_build_rejects_head_mismatch():
    with pytest.raises(UnsupportedLayer):
        build_network((1, 1, 2), [
            dense_layer(np.eye(2), np.zeros(2), activation="relu"),
        ], head="softmax")


def test_build_rejects_nonfinite_weights():
    w = np.eye(2)
    w[0, 0] = np.nan
    with pytest.raises(ParseError):
        build_network((1, 1, 2), [
            dense_layer(w, np.zeros(2), activation="softmax"),
        ], head="softmax")


def test_dense_accepts_unflattened_input():
    # a dense layer may read a 3-D image directly, in row-major order
    net = fd.identity_net()
    assert net.input_shape == (1, 1, 2)
    assert net.num_classes == 2


def test_maxpool_window_must_fit():
    with pytest.raises(ShapeError):
        build_network((1, 1, 2), [
            maxpool_layer((2, 2)),
            flatten_layer(),
            dense_layer(np.zeros((2, 2)), np.zeros(2), activation="softmax"),
        ], head="softmax")


# ---------------------------------------------------------------------------
# serialization

def test_canonical_json_round_trip(tmp_path, conv_mixed_net):
    path = tmp_path / "net.json"
    save_network(conv_mixed_net, path)
    again = load_network(path)
    assert again.digest == conv_mixed_net.digest
    assert (network_to_canonical_json(again)
            == network_to_canonical_json(conv_mixed_net))


def test_save_is_byte_stable(tmp_path, quadrant_net):
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_network(quadrant_net, p1)
    save_network(load_network(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_static_fixture_files_match_builders(fixtures_dir):
    pairs = [
        ("quadrant_net.json", fd.quadrant_net),
        ("flagflip_net.json", fd.flagflip_net),
        ("identity_net.json", fd.identity_net),
        ("conv_mixed_net.json", fd.conv_mixed_net),
        ("sigmoid_pair_net.json", fd.sigmoid_pair_net),
        ("relu_kink0_net.json", lambda: fd.kink_net(False)),
        ("relu_kink1_net.json", lambda: fd.kink_net(True)),
    ]
    for name, builder in pairs:
        assert load_network(fixtures_dir / name).digest == builder().digest, \
            name


def test_load_rejects_unknown_layer_kind(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "input_shape": [1, 1, 2], "head": "softmax",
        "layers": [{"type": "avgpool", "pool": [2, 2]}]}))
    with pytest.raises(UnsupportedLayer):
        load_network(path)


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_network(path)


def test_dataset_round_trip(tmp_path, quadrant_dataset):
    path = tmp_path / "data.ndjson"
    save_dataset(quadrant_dataset, path)
    back = load_dataset(path, (1, 1, 2))
    assert [img.id for img in back] == [img.id for img in quadrant_dataset]
    for a, b in zip(back, quadrant_dataset):
        assert np.array_equal(a.pixels, b.pixels)
        assert a.label == b.label


def test_dataset_rejects_out_of_range_pixel(tmp_path):
    path = tmp_path / "data.ndjson"
    path.write_text('{"id": "x", "pixels": [0.5, 1.5], "label": []}\n')
    with pytest.raises(ParseError):
        load_dataset(path, (1, 1, 2))


def test_dataset_rejects_duplicate_id(tmp_path):
    path = tmp_path / "data.ndjson"
    path.write_text('{"id": "x", "pixels": [0.5, 0.5], "label": []}\n'
                    '{"id": "x", "pixels": [0.1, 0.1], "label": [1]}\n')
    with pytest.raises(ParseError):
        load_dataset(path, (1, 1, 2))


def test_dataset_rejects_nonpositive_label(tmp_path):
    path = tmp_path / "data.ndjson"
    path.write_text('{"id": "x", "pixels": [0.5, 0.5], "label": [0]}\n')
    with pytest.raises(ParseError):
        load_dataset(path, (1, 1, 2))


# ---------------------------------------------------------------------------
# forward evaluation

def test_identity_net_is_plain_softmax(identity_net):
    x = fd.vec(0.2, 0.7)
    expected = ref.softmax_reference(np.array([0.2, 0.7]))
    assert np.allclose(forward(identity_net, x), expected, atol=1e-15)


def test_forward_matches_loop_reference_on_conv_net(conv_mixed_net):
    gen = np.random.default_rng(7)
    for _ in range(25):
        x = gen.uniform(0.0, 1.0, size=(6, 6, 1))
        got = forward(conv_mixed_net, x)
        want = ref.forward_reference(conv_mixed_net, x)
        assert np.allclose(got, want, rtol=0.0, atol=1e-12)


def test_forward_batch_matches_single(conv_mixed_net):
    gen = np.random.default_rng(8)
    xs = gen.uniform(0.0, 1.0, size=(6, 6, 6, 1))
    batch = forward_batch(conv_mixed_net, xs)
    for i in range(len(xs)):
        assert np.allclose(batch[i], forward(conv_mixed_net, xs[i]),
                           atol=1e-15)


def test_forward_rejects_wrong_shape(quadrant_net):
    with pytest.raises(ShapeError):
        forward(quadrant_net, np.zeros((2, 2, 1)))


def test_forward_trace_layers_chain(conv_mixed_net):
    x = np.full((6, 6, 1), 0.25)
    trace = forward_trace(conv_mixed_net, x)
    assert len(trace.inputs) == len(conv_mixed_net.layers)
    for i in range(1, len(trace.inputs)):
        assert np.array_equal(trace.inputs[i], trace.outputs[i - 1])
    assert np.allclose(trace.probs, forward(conv_mixed_net, x), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2,
                max_size=2))
def test_softmax_output_normalized(values):
    net = fd.identity_net()
    p = forward(net, fd.vec(*values))
    assert abs(p.sum() - 1.0) <= 1e-9
    assert np.all(p > 0.0)


# ---------------------------------------------------------------------------
# activation distances

def test_omega_frozen_value():
    # hand computation: relu(0.5-0.1) + relu(0.4-0.1) with the 0.1 entry
    # as the target class gives 0.7; targeting the 0.5 entry gives 0
    p = np.array([0.1, 0.5, 0.4])
    assert omega(p, 1) == pytest.approx(0.7, abs=1e-15)
    assert omega(p, 2) == 0.0
    assert omega(p, 3) == pytest.approx(0.1, abs=1e-15)


def test_omega_matches_loop_reference():
    gen = np.random.default_rng(9)
    for _ in range(50):
        p = gen.dirichlet(np.ones(4))
        for j in range(1, 5):
            assert omega(p, j) == pytest.approx(
                ref.omega_reference(p, j), abs=1e-12)


def test_omega_zero_iff_max():
    gen = np.random.default_rng(10)
    for _ in range(50):
        p = gen.dirichlet(np.ones(5))
        j = int(np.argmax(p)) + 1
        assert omega(p, j) == 0.0
        loser = int(np.argmin(p)) + 1
        if loser != j:
            assert omega(p, loser) > 0.0


def test_omega_sigmoid_frozen_values():
    y = np.array([0.4, 0.9])
    # type 1 sits 0.1 below the 0.5 threshold, type 2 clears it
    assert omega_sigmoid(y, {1}) == pytest.approx(0.1, abs=1e-15)
    assert omega_sigmoid(y, {2}) == 0.0
    assert omega_sigmoid(y, {1, 2}) == pytest.approx(0.1, abs=1e-15)
    # the empty outcome distance counts every output above threshold
    assert omega_sigmoid(y, frozenset()) == pytest.approx(0.4, abs=1e-15)


def test_lambda_value_quadrant_zero_set(quadrant_net):
    # class 2 ("no obstacle") is exactly null on the closed quadrant
    assert lambda_value(quadrant_net, 2, fd.vec(0.3, 0.5)) == 0.0
    assert lambda_value(quadrant_net, 2, fd.vec(0.5, 0.5)) == 0.0
    assert lambda_value(quadrant_net, 2, fd.vec(0.51, 0.3)) > 0.0
    # class 1 is null everywhere on the square
    for x, y in ((0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.9, 0.1)):
        assert lambda_value(quadrant_net, 1, fd.vec(x, y)) == 0.0


def test_lambda_for_labels_maps_empty_to_last_class(quadrant_net):
    x = fd.vec(0.2, 0.2)
    assert (lambda_for_labels(quadrant_net, frozenset(), x)
            == lambda_value(quadrant_net, 2, x))


def test_lambda_for_labels_sigmoid_pair(sigmoid_pair_net):
    inside = fd.vec(0.9, 0.1)   # detector 1 fires, detector 2 does not
    assert lambda_for_labels(sigmoid_pair_net, frozenset({1}), inside) == 0.0
    assert lambda_for_labels(sigmoid_pair_net, frozenset({2}), inside) > 0.0
    assert lambda_for_labels(sigmoid_pair_net, frozenset(), inside) > 0.0
    neither = fd.vec(0.1, 0.1)
    assert lambda_for_labels(sigmoid_pair_net, frozenset(), neither) == 0.0


# ---------------------------------------------------------------------------
# outcome readout

def test_argmax_last_tie_break():
    assert argmax_last(np.array([0.4, 0.4, 0.2])) == 1
    assert argmax_last(np.array([0.2, 0.4, 0.4])) == 2
    assert argmax_last(np.array([0.5, 0.3, 0.2])) == 0


def test_outcome_last_class_is_empty(quadrant_net):
    p_tie = forward(quadrant_net, fd.vec(0.2, 0.2))
    assert np.allclose(p_tie, [0.5, 0.5], atol=1e-15)
    assert outcome_of_probs(quadrant_net, p_tie) == frozenset()
    p_obs = forward(quadrant_net, fd.vec(0.9, 0.9))
    assert outcome_of_probs(quadrant_net, p_obs) == frozenset({1})


def test_outcome_sigmoid_threshold(sigmoid_pair_net):
    p = forward(sigmoid_pair_net, fd.vec(0.9, 0.9))
    assert outcome_of_probs(sigmoid_pair_net, p) == frozenset({1, 2})
    p = forward(sigmoid_pair_net, fd.vec(0.5, 0.1))
    # pixel exactly at the detector threshold: sigmoid(0) = 0.5 counts as
    # predicted, the boundary case belongs to the outcome
    assert outcome_of_probs(sigmoid_pair_net, p) == frozenset({1})


def test_lambda_zero_iff_outcome(conv_mixed_net):
    gen = np.random.default_rng(11)
    for _ in range(50):
        x = gen.uniform(0.0, 1.0, size=(6, 6, 1))
        p = forward(conv_mixed_net, x)
        outcome = outcome_of_probs(conv_mixed_net, p)
        j = 4 if not outcome else max(outcome)
        assert lambda_value(conv_mixed_net, j, x) == 0.0
        for other in range(1, 5):
            if other != j and p[other - 1] < p.max():
                assert lambda_value(conv_mixed_net, other, x) > 0.0
