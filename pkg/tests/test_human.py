import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cobotadapt.apomdp import RobotAction
from cobotadapt.errors import ConfigurationError, ContractViolation
from cobotadapt.human import (
    EMISSION,
    INITIAL_DISTRIBUTION,
    HumanAction,
    HumanModel,
    HumanState,
    HumanType,
    InteractionCounters,
    Level,
    build_human_model,
    likelihood_matrix,
    load_human_model,
    make_type_space,
    sample_trace,
    save_human_model,
    step_human,
    trace_likelihood,
    validation_types,
)

TYPES = make_type_space()
H = HumanState


def _type(**kw) -> HumanType:
    base = {"expertise": Level.High, "stamina": Level.High, "attention": Level.High, "collaborativeness": Level.High}
    base.update({k: Level(v) for k, v in kw.items()})
    return HumanType(**base)


def test_type_space():
    assert len(TYPES) == 16
    assert len(set(TYPES)) == 16
    assert _type(expertise="Low", stamina="Low", attention="Low", collaborativeness="Low") in TYPES
    assert _type() in TYPES
    assert TYPES == make_type_space()


def test_type_encoding_round_trip():
    for t in TYPES:
        assert HumanType.decode(t.encode()) == t
        assert len(t.label()) == 4


def test_build_is_deterministic():
    a = build_human_model(TYPES[5], seed=3)
    b = build_human_model(TYPES[5], seed=3)
    assert np.array_equal(a.T, b.T) and a.modifiers == b.modifiers


def test_low_collaborativeness_warns_more():
    low = build_human_model(_type(collaborativeness="Low"), seed=1)
    high = build_human_model(_type(collaborativeness="High"), seed=1)
    c = InteractionCounters()
    for s in (H.Attending, H.Working, H.NoAttention):
        assert low.transition_row(s, RobotAction.TakeOver, c)[H.WarnTheRobot] > high.transition_row(s, RobotAction.TakeOver, c)[H.WarnTheRobot]


def test_low_attention_drifts_more():
    low = build_human_model(_type(attention="Low"), seed=1)
    high = build_human_model(_type(attention="High"), seed=1)
    c = InteractionCounters()
    assert low.transition_row(H.Attending, RobotAction.Idle, c)[H.NoAttention] > high.transition_row(H.Attending, RobotAction.Idle, c)[H.NoAttention]


@pytest.mark.parametrize("t", TYPES, ids=lambda t: t.label())
def test_rows_normalized_over_counter_grid(t):
    m = build_human_model(t, seed=0)
    for n_r, k_t in itertools.product(range(11), range(11)):
        c = InteractionCounters(n_r, k_t)
        for s in HumanState:
            for a in RobotAction:
                row = m.transition_row(s, a, c)
                assert (row >= 0).all()
                assert abs(row.sum() - 1.0) < 1e-9


def test_terminal_states_absorb():
    m = build_human_model(TYPES[0])
    for s in (H.GlobalSuccess, H.GlobalFail):
        for a in RobotAction:
            assert m.transition_row(s, a, InteractionCounters(3, 3))[s] == 1.0


def test_warn_state_emits_warn():
    m = build_human_model(_type(collaborativeness="Low"))
    rng = np.random.default_rng(0)
    for _ in range(200):
        action, state = step_human(m, H.Working, RobotAction.TakeOver, InteractionCounters(20, 0), rng)
        if state == H.WarnTheRobot:
            assert action == HumanAction.Warn
        assert action == HumanAction(int(np.flatnonzero(EMISSION[state])[0]))


def test_step_is_deterministic_under_seed():
    m = build_human_model(TYPES[3])
    out = [step_human(m, H.Attending, RobotAction.Idle, InteractionCounters(), np.random.default_rng(9)) for _ in range(2)]
    assert out[0] == out[1]


def test_step_rejects_terminal_state():
    m = build_human_model(TYPES[3])
    with pytest.raises(ContractViolation):
        step_human(m, H.GlobalFail, RobotAction.Idle, InteractionCounters(), np.random.default_rng(0))


def test_warn_frequency_matches_table():
    m = build_human_model(_type(collaborativeness="Low"), seed=2)
    c = InteractionCounters(n_r=25, k_t=0)
    p = m.transition_row(H.Working, RobotAction.TakeOver, c)[H.WarnTheRobot]
    rng = np.random.default_rng(2024)
    hits = sum(step_human(m, H.Working, RobotAction.TakeOver, c, rng)[0] == HumanAction.Warn for _ in range(10_000))
    assert abs(hits / 10_000 - p) <= 0.02


@given(t=st.sampled_from(TYPES), n_r=st.integers(0, 60), k_t=st.integers(0, 60), s=st.sampled_from([H.Attending, H.Evaluating, H.Working, H.NoAttention, H.Tired]))
def test_counter_monotonicity(t, n_r, k_t, s):
    m = build_human_model(t, seed=0)
    c0, c_r, c_k = InteractionCounters(n_r, k_t), InteractionCounters(n_r + 1, k_t), InteractionCounters(n_r, k_t + 1)
    w = m.transition_row(s, RobotAction.TakeOver, c0)[H.WarnTheRobot]
    assert m.transition_row(s, RobotAction.TakeOver, c_r)[H.WarnTheRobot] >= w - 1e-12
    tired = m.transition_row(s, RobotAction.Idle, c0)[H.Tired]
    assert m.transition_row(s, RobotAction.Idle, c_k)[H.Tired] >= tired - 1e-12


def test_low_stamina_has_steeper_fatigue():
    low = build_human_model(_type(stamina="Low"))
    high = build_human_model(_type(stamina="High"))
    assert low.modifiers.tired_alpha > high.modifiers.tired_alpha


def test_counters_reject_negative():
    with pytest.raises(ConfigurationError):
        InteractionCounters(-1, 0)


def test_human_model_json_round_trip(tmp_path):
    m = build_human_model(TYPES[7], seed=4)
    save_human_model(m, tmp_path / "h.json")
    back = load_human_model(tmp_path / "h.json")
    assert np.array_equal(back.T, m.T) and back.type == m.type and back.modifiers == m.modifiers


def _always(state: HumanState) -> HumanModel:
    T = np.zeros((9, 5, 9))
    T[:, :, state] = 1.0
    for s in (H.GlobalSuccess, H.GlobalFail):
        T[s] = 0.0
        T[s, :, s] = 1.0
    m = build_human_model(TYPES[0])
    return HumanModel(type=m.type, T=T, R=m.R, gamma=m.gamma, modifiers=m.modifiers.__class__(0, 0, 0, 0, 0, 0))


def test_deterministic_emitter_scores_one():
    # initial states and Attending all emit Idle
    m = _always(H.Attending)
    assert trace_likelihood(m, [HumanAction.Idle] * 12) == pytest.approx(1.0, abs=1e-12)


def _path_probability(m: HumanModel, trace, ras, c) -> float:
    """P(trace) by summing over every hidden state path."""
    total = 0.0
    n = len(trace)
    for path in itertools.product(range(9), repeat=n):
        p = INITIAL_DISTRIBUTION[path[0]] * EMISSION[path[0], trace[0]]
        for t in range(1, n):
            if p == 0:
                break
            p *= m.transition_row(path[t - 1], ras[t - 1], c)[path[t]] * EMISSION[path[t], trace[t]]
        total += p
    return total


def test_trace_likelihood_matches_path_enumeration():
    # the product of per-step predictive likelihoods is the joint trace probability
    m = build_human_model(TYPES[6], seed=5)
    rng = np.random.default_rng(11)
    c = InteractionCounters(2, 3)
    for _ in range(3):
        ras = rng.integers(0, 5, size=3).tolist()
        trace = sample_trace(m, 4, rng, ras, c)
        expected = _path_probability(m, [int(a) for a in trace], ras, c) ** (1 / 4)
        assert trace_likelihood(m, trace, ras, c) == pytest.approx(expected, rel=1e-9)


def test_self_likelihood_beats_distant_model():
    a = build_human_model(_type(expertise="Low", attention="Low", collaborativeness="Low", stamina="Low"), seed=0)
    b = build_human_model(_type(), seed=0)
    L = likelihood_matrix([a, b], n_tasks=30, length=30, seed=3)
    assert L[0, 0] > L[0, 1] and L[1, 1] > L[1, 0]


def test_single_model_matrix_shape():
    L = likelihood_matrix([build_human_model(TYPES[0])], n_tasks=3, length=5)
    assert L.shape == (1, 1)


def test_duplicate_models_score_alike():
    m = build_human_model(TYPES[9], seed=1)
    L = likelihood_matrix([m, build_human_model(TYPES[9], seed=1)], n_tasks=10, length=20)
    np.testing.assert_allclose(L[:, 0], L[:, 1], rtol=1e-12)


def test_validation_types_are_separated():
    vt = validation_types()
    assert len(vt) == 8
    for x, y in itertools.combinations(vt, 2):
        assert sum(a != b for a, b in zip(x.encode(), y.encode())) >= 2
