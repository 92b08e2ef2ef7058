from __future__ import annotations

import pytest

from trustmaze.mission import (
    COMMUNICATE,
    GATHER,
    HELP,
    MOVE,
    OBJECT_FUNCTIONS,
    AbstractionHierarchy,
    Direction,
    Hardness,
    HierarchyError,
    Level,
    UnknownFunction,
    ValuePriorityMeasure,
    ViolationPolicy,
    build_default_hierarchy,
    build_default_mission,
    check_violation,
    default_allocation_map,
    default_vpms,
    soca_allocated_roles,
)
from trustmaze.roles import Role
from trustmaze.trust import default_capability


@pytest.fixture
def hierarchy():
    return build_default_hierarchy()


@pytest.fixture
def amap():
    return default_allocation_map(default_capability().performer)


def turn(agent, action, **extra):
    return {"payload": dict(agent=agent, object_function=action, turn=True, **extra)}


class TestHierarchy:
    def test_default_levels(self, hierarchy):
        assert len(hierarchy.at_level(Level.PURPOSE_FUNCTION)) == 4
        assert len(hierarchy.at_level(Level.OBJECT_FUNCTION)) == 9
        assert set(hierarchy.at_level(Level.OBJECT_FUNCTION)) == set(OBJECT_FUNCTIONS)
        assert len(hierarchy.at_level(Level.FUNCTIONAL_PURPOSE)) == 1

    def test_default_validates(self, hierarchy):
        hierarchy.validate()

    def test_everything_reachable_from_the_top(self, hierarchy):
        top = hierarchy.at_level(Level.FUNCTIONAL_PURPOSE)[0]
        assert hierarchy.reachable(top) == set(hierarchy.nodes)

    def test_skipping_a_level_is_rejected(self):
        h = AbstractionHierarchy()
        h.add("purpose", Level.FUNCTIONAL_PURPOSE)
        h.add("Forward", Level.OBJECT_FUNCTION)
        h.link("purpose", "Forward")
        with pytest.raises(HierarchyError):
            h.validate()

    def test_orphan_is_rejected(self, hierarchy):
        hierarchy.add("dangling", Level.OBJECT_FUNCTION)
        with pytest.raises(HierarchyError):
            hierarchy.validate()

    def test_required_actions(self, hierarchy):
        assert "Collect" in hierarchy.required_actions(GATHER)
        assert "Release" in hierarchy.required_actions(HELP)
        assert "Collect" not in hierarchy.required_actions(MOVE)

    def test_build_default_mission(self):
        h, vpms, goals = build_default_mission()
        assert [v.name for v in vpms] == [v.name for v in default_vpms()]
        assert set(goals.individual_goals) == set(Role)


class TestSoca:
    def test_gather_only_collector(self, amap):
        assert soca_allocated_roles(GATHER, amap) == [Role.COLLECTOR]

    def test_move_all_roles(self, amap):
        assert set(soca_allocated_roles(MOVE, amap)) == set(Role)

    def test_help_only_neutral(self, amap):
        assert soca_allocated_roles(HELP, amap) == [Role.NEUTRAL]

    def test_communicate(self, amap):
        assert soca_allocated_roles(COMMUNICATE, amap) == [Role.LEADER, Role.NEUTRAL]

    def test_object_function_through_parents(self, amap, hierarchy):
        assert soca_allocated_roles("Collect", amap, hierarchy) == [Role.COLLECTOR]

    def test_unknown(self, amap):
        with pytest.raises(UnknownFunction):
            soca_allocated_roles("fly", amap)


class TestViolations:
    def test_collect_under_move_contract_is_soft(self, hierarchy):
        policy = ViolationPolicy(hierarchy, {1: frozenset({MOVE})})
        found = check_violation(turn(1, "Collect", cell=[3, 3]), default_vpms(), policy)
        assert [(v.vpm, v.hard) for v in found] == [("minimise time", False)]

    def test_collect_under_gather_contract_is_fine(self, hierarchy):
        policy = ViolationPolicy(hierarchy, {1: frozenset({GATHER})})
        assert check_violation(turn(1, "Collect", cell=[3, 3]), default_vpms(), policy) == []

    def test_uncontracted_forward_is_fine(self, hierarchy):
        assert check_violation(turn(0, "Forward", pos=[1, 1]), default_vpms(), ViolationPolicy(hierarchy)) == []

    def test_hard_measure_in_zone(self, hierarchy):
        zone = ValuePriorityMeasure("no token pickup in zone Z", Direction.MINIMIZE, Hardness.HARD, "tokens", (0, 0, 4, 4))
        found = check_violation(turn(1, "Collect", cell=[2, 2]), [zone], ViolationPolicy(hierarchy))
        assert [(v.vpm, v.agent, v.hard) for v in found] == [("no token pickup in zone Z", 1, True)]

    def test_hard_measure_outside_zone(self, hierarchy):
        zone = ValuePriorityMeasure("Z", Direction.MINIMIZE, Hardness.HARD, "tokens", (0, 0, 1, 1))
        assert check_violation(turn(1, "Collect", cell=[2, 2]), [zone], ViolationPolicy(hierarchy)) == []

    def test_failed_action_never_violates(self, hierarchy):
        zone = ValuePriorityMeasure("Z", Direction.MINIMIZE, Hardness.HARD, "tokens")
        ev = turn(1, "Collect", cell=[2, 2], failed=True)
        assert check_violation(ev, [zone], ViolationPolicy(hierarchy)) == []

    def test_direction(self):
        up = ValuePriorityMeasure("m", Direction.MAXIMIZE, Hardness.SOFT, "tokens")
        down = ValuePriorityMeasure("m", Direction.MINIMIZE, Hardness.SOFT, "tokens")
        assert up.degraded_by(-1) and not up.degraded_by(1)
        assert down.degraded_by(1) and not down.degraded_by(-1)
