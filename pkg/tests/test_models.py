import numpy as np
import pytest

from longsurv.cohort import FeatureSchema, LongitudinalMatrix, PatientRecord
from longsurv.errors import ConfigError, NumericError, ShapeError
from longsurv.models import (
    EncodedInput,
    InputDims,
    ParamVector,
    RiskModel,
    RiskModelSpec,
    backward,
    build_layout,
    dims_from_schema,
    encode_input,
    encode_inputs,
    forward,
    forward_cached,
    init_params,
    model_from_dict,
    model_to_dict,
)

from helpers import make_patient, random_matrix, rich_schema


def small_composite_spec():
    return RiskModelSpec(kind="composite", embed_dim=4, lstm_hidden=5,
                         tf_embed_dim=2, head_sizes=(6, 1))


def probe_record(seed=7, days=6, schema=None):
    schema = schema or rich_schema()
    rng = np.random.default_rng(seed)
    return PatientRecord(id="x", followup_time=days - 1, event=True,
                         time_fixed=(1, 2),
                         longitudinal=random_matrix(rng, days, schema.n_longitudinal))


# --- layout and init ---------------------------------------------------------

def test_mlp_parameter_count_on_ten_inputs():
    dims = InputDims(days=5, n_longitudinal=1, vocab_sizes=())
    assert dims.flat_dim == 10
    layout = build_layout(RiskModelSpec(kind="mlp", hidden_sizes=(128, 64)), dims)
    assert layout.total == 10 * 128 + 128 + 128 * 64 + 64 + 64 * 1 + 1 == 9729


def test_linear_layout():
    dims = InputDims(days=3, n_longitudinal=2, vocab_sizes=(2,))
    layout = build_layout(RiskModelSpec(kind="linear"), dims)
    names = [b.name for b in layout.blocks]
    assert names == ["w", "b"]
    assert layout.total == dims.flat_dim + 1 == 15


def test_layout_offsets_are_contiguous():
    dims = InputDims(days=4, n_longitudinal=2, vocab_sizes=(3,))
    for spec in (RiskModelSpec(kind="linear"),
                 RiskModelSpec(kind="mlp", hidden_sizes=(7, 3)),
                 small_composite_spec()):
        layout = build_layout(spec, dims)
        offset = 0
        for block in layout.blocks:
            assert block.offset == offset
            offset += block.size
        assert offset == layout.total


def test_init_glorot_bounds_and_bias_zeros():
    dims = InputDims(days=4, n_longitudinal=2, vocab_sizes=(3,))
    spec = RiskModelSpec(kind="mlp", hidden_sizes=(8, 4))
    params = init_params(spec, dims, seed=0)
    w0 = params.block("w0")
    bound = np.sqrt(6.0 / (w0.shape[0] + w0.shape[1]))
    assert np.abs(w0).max() <= bound
    assert not params.block("b0").any()
    assert not params.block("b_out").any()


def test_init_lstm_forget_gate_bias():
    dims = InputDims(days=4, n_longitudinal=2, vocab_sizes=(3,))
    params = init_params(small_composite_spec(), dims, seed=0)
    b = params.block("lstm_b")
    h = 5
    assert np.array_equal(b[h:2 * h], np.ones(h))
    assert not b[:h].any() and not b[2 * h:].any()


def test_init_deterministic_by_seed():
    dims = InputDims(days=4, n_longitudinal=2, vocab_sizes=())
    spec = RiskModelSpec(kind="mlp", hidden_sizes=(5,))
    a = init_params(spec, dims, seed=3).values
    b = init_params(spec, dims, seed=3).values
    c = init_params(spec, dims, seed=4).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_param_vector_validation():
    dims = InputDims(days=2, n_longitudinal=1, vocab_sizes=())
    layout = build_layout(RiskModelSpec(kind="linear"), dims)
    with pytest.raises(ShapeError):
        ParamVector(np.zeros(layout.total + 1), layout)
    bad = np.zeros(layout.total)
    bad[0] = np.nan
    with pytest.raises(NumericError):
        ParamVector(bad, layout)


def test_spec_validation():
    with pytest.raises(ConfigError):
        RiskModelSpec(kind="transformer")
    with pytest.raises(ConfigError):
        RiskModelSpec(kind="composite", head_sizes=(8, 2))  # head must end at 1


# --- encoding ----------------------------------------------------------------

def test_encode_layout_positions():
    schema = rich_schema()
    days = 3
    ind = np.zeros((days, 2))
    val = np.zeros((days, 2))
    ind[1, 0] = 1.0
    val[1, 0] = 0.75
    rec = PatientRecord(id="a", followup_time=2, event=True, time_fixed=(1, 0),
                        longitudinal=LongitudinalMatrix(values=val, indicators=ind))
    enc = encode_input(rec, schema, days)
    flat = enc.flattened
    # day-major rows of width 4: [v_hr, v_sbp, i_hr, i_sbp]
    assert flat.shape == (days * 4 + 2 + 3,)
    assert flat[4] == 0.75 and flat[6] == 1.0          # day 1 value + indicator
    assert flat[:4].tolist() == [0, 0, 0, 0]
    assert flat[12:].tolist() == [0, 1, 1, 0, 0]       # sex=m then unit=a


def test_encode_rejects_wrong_width():
    schema = rich_schema()
    rec = probe_record(days=6)
    dims = dims_from_schema(schema, 6)
    bad = EncodedInput.__new__(EncodedInput)
    with pytest.raises(ShapeError):
        encode_input(rec, schema, days=9)  # matrix has 6 rows, dims want 9


def test_encode_inputs_truncation_deterministic():
    schema = rich_schema()
    rng = np.random.default_rng(0)
    from longsurv.cohort import Cohort, EventSpec
    patients = tuple(make_patient(f"p{i}", 3, i % 2 == 0, 8, schema, rng=rng,
                                  tf=(0, 0))
                     for i in range(6))
    cohort = Cohort(schema=schema, event_spec=EventSpec(event_name="e", cutoff_days=8),
                    patients=patients)
    a = encode_inputs(cohort, k=2, seed=5)
    b = encode_inputs(cohort, k=2, seed=5)
    c = encode_inputs(cohort, k=2, seed=6)
    assert all(np.array_equal(x.flattened, y.flattened) for x, y in zip(a, b))
    assert any(not np.array_equal(x.flattened, y.flattened) for x, y in zip(a, c))
    for enc in a:
        assert enc.longitudinal.observed_days().size <= 2


# --- forward -----------------------------------------------------------------

def test_linear_forward_is_dot_product():
    schema = rich_schema()
    days = 4
    dims = dims_from_schema(schema, days)
    spec = RiskModelSpec(kind="linear")
    params = init_params(spec, dims, seed=2)
    model = RiskModel(spec, dims, params)
    rec = probe_record(seed=9, days=days)
    enc = encode_input(rec, schema, days)
    expected = float(params.block("w") @ enc.flattened + params.block("b")[0])
    assert forward(model, enc) == pytest.approx(expected, abs=1e-14)


def test_forward_deterministic():
    schema = rich_schema()
    days = 5
    dims = dims_from_schema(schema, days)
    for spec in (RiskModelSpec(kind="mlp", hidden_sizes=(6,)), small_composite_spec()):
        model = RiskModel(spec, dims, init_params(spec, dims, seed=1))
        enc = encode_input(probe_record(seed=3, days=days), schema, days)
        assert forward(model, enc) == forward(model, enc)


def test_composite_zero_weights_reaches_head_bias_path():
    """All-zero weights: the LSTM state stays at zero, so the risk is the
    hand-computable pure-bias path through the head."""
    schema = rich_schema()
    days = 4
    dims = dims_from_schema(schema, days)
    spec = small_composite_spec()
    layout = build_layout(spec, dims)
    params = ParamVector(np.zeros(layout.total), layout)
    b0 = params.block("head_b0")
    b0[:] = [-1.0, 2.0, 0.5, -0.25, 0.0, 3.0]
    w_out = params.block("head_w1")
    w_out[:] = 1.0
    params.block("head_b1")[:] = 0.125
    model = RiskModel(spec, dims, params)
    enc = encode_input(probe_record(seed=4, days=days), schema, days)
    # hidden state is 0 everywhere, tf embeddings are 0: head sees the zero
    # vector, layer 1 gives relu(b0), output = sum(relu(b0)) + 0.125
    expected = np.maximum(b0, 0.0).sum() + 0.125
    assert forward(model, enc) == pytest.approx(expected, abs=1e-14)


def test_composite_uses_time_fixed_embeddings():
    schema = rich_schema()
    days = 3
    dims = dims_from_schema(schema, days)
    spec = small_composite_spec()
    model = RiskModel(spec, dims, init_params(spec, dims, seed=6))
    rec_a = probe_record(seed=5, days=days)
    rec_b = PatientRecord(id="y", followup_time=rec_a.followup_time, event=True,
                          time_fixed=(0, 2), longitudinal=rec_a.longitudinal)
    enc_a = encode_input(rec_a, schema, days)
    enc_b = encode_input(rec_b, schema, days)
    assert forward(model, enc_a) != forward(model, enc_b)


# --- gradients ---------------------------------------------------------------

def central_difference(model, enc, h=1e-4):
    flat = model.params.values
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = forward(model, enc)
        flat[i] = orig - h
        down = forward(model, enc)
        flat[i] = orig
        fd[i] = (up - down) / (2.0 * h)
    return fd


@pytest.mark.parametrize("kind", ["linear", "mlp", "composite"])
def test_backward_matches_finite_differences(kind):
    schema = rich_schema()
    days = 6
    dims = dims_from_schema(schema, days)
    if kind == "linear":
        spec = RiskModelSpec(kind="linear")
    elif kind == "mlp":
        spec = RiskModelSpec(kind="mlp", hidden_sizes=(8, 5))
    else:
        spec = small_composite_spec()
    model = RiskModel(spec, dims, init_params(spec, dims, seed=11))
    enc = encode_input(probe_record(seed=7, days=days), schema, days)
    g = backward(model, enc, 1.0).values
    fd = central_difference(model, enc)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
    assert (np.abs(g - fd) / denom).max() < 1e-5


def test_backward_scales_with_upstream():
    schema = rich_schema()
    days = 4
    dims = dims_from_schema(schema, days)
    spec = RiskModelSpec(kind="mlp", hidden_sizes=(6,))
    model = RiskModel(spec, dims, init_params(spec, dims, seed=2))
    enc = encode_input(probe_record(seed=1, days=days), schema, days)
    g1 = backward(model, enc, 1.0).values
    g3 = backward(model, enc, -3.0).values
    assert np.allclose(g3, -3.0 * g1, atol=1e-12)


def test_forward_cached_matches_forward():
    schema = rich_schema()
    days = 5
    dims = dims_from_schema(schema, days)
    spec = small_composite_spec()
    model = RiskModel(spec, dims, init_params(spec, dims, seed=8))
    enc = encode_input(probe_record(seed=8, days=days), schema, days)
    risk, _ = forward_cached(model, enc)
    assert risk == forward(model, enc)


# --- serialization -----------------------------------------------------------

def test_model_round_trip():
    import json
    schema = rich_schema()
    days = 4
    dims = dims_from_schema(schema, days)
    for spec in (RiskModelSpec(kind="linear"),
                 RiskModelSpec(kind="mlp", hidden_sizes=(5, 3)),
                 small_composite_spec()):
        model = RiskModel(spec, dims, init_params(spec, dims, seed=13))
        blob = json.dumps(model_to_dict(model))
        again = model_from_dict(json.loads(blob))
        enc = encode_input(probe_record(seed=2, days=days), schema, days)
        assert forward(again, enc) == forward(model, enc)


def test_model_from_dict_rejects_wrong_param_count():
    schema = rich_schema()
    dims = dims_from_schema(schema, 4)
    spec = RiskModelSpec(kind="linear")
    model = RiskModel(spec, dims, init_params(spec, dims, seed=0))
    d = model_to_dict(model)
    d["params"] = d["params"][:-1]
    with pytest.raises(ShapeError):
        model_from_dict(d)
