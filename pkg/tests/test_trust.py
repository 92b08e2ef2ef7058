from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustmaze.mission import GATHER, HELP, MOVE, Violation
from trustmaze.roles import Role
from trustmaze.trust import (
    BadWeights,
    CapabilityMatrix,
    Colour,
    IntegrityLedger,
    PredictabilityEstimator,
    Side,
    TrustLadder,
    TrustModel,
    capability_total,
    composite_trust,
    default_capability,
    ladder_rung,
    rating_score,
    update_integrity,
    update_predictability,
)

SOFT = Violation("minimise time", 1, hard=False)
HARD = Violation("zone", 1, hard=True)


class TestCapability:
    @pytest.mark.parametrize(
        "colour,score", [(Colour.GREEN, 3), (Colour.YELLOW, 2), (Colour.ORANGE, 1), (Colour.RED, 0)]
    )
    def test_colour_scale(self, colour, score):
        assert rating_score(colour) == score
        assert rating_score(colour, Side.SUPPORTER) == score

    @pytest.mark.parametrize(
        "role,performer,supporter",
        [
            (Role.LEADER, 6, 2),
            (Role.COLLECTOR, 9, 3),
            (Role.GATE_USER, 5, 2),
            (Role.NEUTRAL, 9, 5),
        ],
    )
    def test_role_totals(self, role, performer, supporter):
        m = default_capability()
        assert capability_total(m, role, Side.PERFORMER) == performer
        assert capability_total(m, role, Side.SUPPORTER) == supporter

    def test_all_zero_matrix(self):
        m = CapabilityMatrix({(r, MOVE): 0 for r in Role})
        assert capability_total(m, Role.LEADER) == 0

    def test_out_of_range_score(self):
        with pytest.raises(ValueError):
            CapabilityMatrix({(Role.LEADER, MOVE): 4})

    def test_gather_column(self):
        m = default_capability()
        assert [m.score(r, GATHER) for r in (Role.LEADER, Role.COLLECTOR, Role.GATE_USER, Role.NEUTRAL)] == [0, 3, 0, 0]


class TestPredictability:
    def test_prior(self):
        assert PredictabilityEstimator().estimate(0, 1, GATHER) == 0.5

    def test_three_of_four(self):
        est = PredictabilityEstimator()
        for ok in (True, True, True, False):
            update_predictability(est, 0, 1, GATHER, ok)
        assert est.estimate(0, 1, GATHER) == pytest.approx(4 / 6)

    def test_none_of_eight(self):
        est = PredictabilityEstimator()
        for _ in range(8):
            update_predictability(est, 0, 1, GATHER, False)
        assert est.estimate(0, 1, GATHER) == pytest.approx(0.1)

    def test_independent_per_function_and_pair(self):
        est = PredictabilityEstimator()
        update_predictability(est, 0, 1, GATHER, False)
        assert est.estimate(0, 1, HELP) == 0.5
        assert est.estimate(2, 1, GATHER) == 0.5

    def test_seed_rejects_impossible_counts(self):
        with pytest.raises(ValueError):
            PredictabilityEstimator().seed(0, 1, GATHER, 3, 2)


class TestIntegrity:
    def test_fresh(self):
        entry = IntegrityLedger().get(0, 1)
        assert entry.score == 1.0 and not entry.hard_violation

    def test_one_soft(self):
        ledger = update_integrity(IntegrityLedger(), 0, 1, SOFT)
        assert ledger.score(0, 1) == pytest.approx(0.8)

    def test_hard_zeroes_and_flags(self):
        ledger = IntegrityLedger()
        update_integrity(ledger, 0, 1, SOFT)
        update_integrity(ledger, 0, 1, HARD)
        assert ledger.score(0, 1) == 0.0 and ledger.get(0, 1).hard_violation

    def test_hard_is_sticky(self):
        ledger = IntegrityLedger(recovery=1.5)
        update_integrity(ledger, 0, 1, HARD)
        update_integrity(ledger, 0, 1, SOFT)
        ledger.recover()
        assert ledger.score(0, 1) == 0.0

    def test_recovery_caps_at_one(self):
        ledger = IntegrityLedger(recovery=1.1)
        update_integrity(ledger, 0, 1, SOFT)
        assert ledger.recover() == [(0, 1)]
        assert ledger.score(0, 1) == pytest.approx(0.88)
        for _ in range(5):
            ledger.recover()
        assert ledger.score(0, 1) == 1.0


class TestComposite:
    def test_all_ones(self):
        assert composite_trust(1, 1, 1, (0.2, 0.5, 0.3)) == pytest.approx(1.0)

    def test_hand_evaluated(self):
        assert composite_trust(0.9, 0.5, 1.0) == pytest.approx(0.8)

    def test_zeros(self):
        assert composite_trust(0, 0, 0) == 0.0

    @pytest.mark.parametrize("weights", [(0.5, 0.5, 0.5), (-0.1, 0.6, 0.5), (1.0, 0.0)])
    def test_bad_weights(self, weights):
        with pytest.raises(BadWeights):
            composite_trust(0.5, 0.5, 0.5, weights)


class TestLadder:
    @pytest.mark.parametrize("score,rung", [(0.0, 0), (0.19, 0), (0.2, 1), (0.5, 2), (0.8, 4), (1.0, 4)])
    def test_rungs(self, score, rung):
        assert ladder_rung(score) == rung

    def test_thresholds_must_ascend(self):
        with pytest.raises(ValueError):
            TrustLadder((0.4, 0.2))
        with pytest.raises(ValueError):
            TrustLadder((0.0, 0.5))


class TestModel:
    def test_mean_over_observers(self):
        roles = {0: Role.LEADER, 1: Role.COLLECTOR, 2: Role.NEUTRAL}
        model = TrustModel(roles)
        update_predictability(model.predictability, 0, 1, GATHER, False)
        # observer 0 sees 1/3, observer 2 still the prior 1/2
        c0 = composite_trust(1.0, 1 / 3, 1.0)
        c2 = composite_trust(1.0, 1 / 2, 1.0)
        assert model.mean_composite(1, GATHER) == pytest.approx((c0 + c2) / 2)
        assert model.mean_rung(1, GATHER) == (ladder_rung(c0) + ladder_rung(c2)) / 2

    def test_lone_agent_uses_prior(self):
        model = TrustModel({0: Role.NEUTRAL})
        assert model.mean_composite(0, HELP) == pytest.approx(composite_trust(1.0, 0.5, 1.0))

    def test_hard_violation_by_any_observer(self):
        model = TrustModel({0: Role.LEADER, 1: Role.COLLECTOR, 2: Role.NEUTRAL})
        update_integrity(model.integrity, 2, 1, HARD)
        assert model.hard_violated(1) and not model.hard_violated(0)


# --- property suite -------------------------------------------------------

weights_st = st.tuples(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)
).filter(lambda w: sum(w) > 0.01).map(lambda w: tuple(x / sum(w) for x in w)).filter(
    lambda w: abs(sum(w) - 1) <= 1e-9
)
step_st = st.sampled_from(["ok", "fail", "soft", "hard", "recover"])


@settings(max_examples=1000, deadline=None)
@given(
    weights=weights_st,
    cap=st.integers(0, 3),
    steps=st.lists(step_st, max_size=40),
    recovery=st.floats(1.0, 1.5),
)
def test_random_update_sequences_stay_bounded(weights, cap, steps, recovery):
    roles = {0: Role.LEADER, 1: Role.NEUTRAL}
    m = default_capability()
    m.performer[(Role.NEUTRAL, HELP)] = cap
    model = TrustModel(roles, capability=m, weights=weights, integrity=IntegrityLedger(recovery=recovery))
    for step in steps:
        before = model.record(0, 1, HELP)
        if step == "ok":
            update_predictability(model.predictability, 0, 1, HELP, True)
            after = model.record(0, 1, HELP)
            assert after.predictability >= before.predictability
        elif step == "fail":
            update_predictability(model.predictability, 0, 1, HELP, False)
        elif step == "soft":
            update_integrity(model.integrity, 0, 1, SOFT)
        elif step == "hard":
            update_integrity(model.integrity, 0, 1, HARD)
        else:
            model.integrity.recover()
        rec = model.record(0, 1, HELP)
        for value in (rec.capability_norm, rec.predictability, rec.integrity, rec.composite):
            assert 0.0 <= value <= 1.0
        assert rec.rung == ladder_rung(rec.composite)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0, 1), b=st.floats(0, 1))
def test_rung_monotone_in_composite(a, b):
    lo, hi = sorted((a, b))
    assert ladder_rung(lo) <= ladder_rung(hi)


@settings(max_examples=300, deadline=None)
@given(s=st.integers(0, 50), f=st.integers(0, 50))
def test_success_never_lowers_estimate(s, f):
    est = PredictabilityEstimator()
    est.seed(0, 1, GATHER, s, s + f)
    before = est.estimate(0, 1, GATHER)
    assert update_predictability(est, 0, 1, GATHER, True) >= before
