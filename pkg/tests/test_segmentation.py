import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimbid.core import ImpressionLog, ImpressionRecord
from dimbid.errors import GroupingError, NotReadyError
from dimbid.segmentation import (
    GroupingRequest,
    SegmentSchedule,
    build_groups,
    rebuild_schedule,
    summarize_values,
)


def log_from(values, days=None):
    """``values`` maps raw value -> (volume, revenue micros per impression)."""
    rows = []
    for v, (vol, rev) in values.items():
        for i in range(vol):
            day = 0 if days is None else days[i % len(days)]
            rows.append(ImpressionRecord(day, f"{v}-{i}", {"site": v}, 1000, rev, rev > 0))
    return ImpressionLog.from_records(rows)


def req(groups, **kw):
    return GroupingRequest("site", groups, min_volume_threshold=0, min_order_threshold=0, **kw)


def test_bijection_and_single_group():
    log = log_from({"a": (5, 300), "b": (5, 100), "c": (5, 400), "d": (5, 200)})
    spec = build_groups(log, req(4))
    assert spec.group_of == {"b": 0, "d": 1, "a": 2, "c": 3}
    assert set(build_groups(log, req(1)).group_of.values()) == {0}


def test_six_values_three_groups_hand_sweep():
    log = log_from({f"v{i}": (5, i * 1000) for i in range(1, 7)})
    spec = build_groups(log, req(3))
    assert [spec.members(g) for g in range(3)] == [["v1", "v2"], ["v3", "v4"], ["v5", "v6"]]


def test_errors_and_thresholds():
    log = log_from({"a": (5, 10), "b": (5, 0)})
    with pytest.raises(GroupingError, match="smaller group_count"):
        build_groups(log, req(3))
    gated = GroupingRequest("site", 2, min_volume_threshold=100, min_order_threshold=1)
    with pytest.raises(NotReadyError):
        build_groups(log, gated)
    assert build_groups(log, gated, force=True).group_count == 2
    with pytest.raises(NotReadyError):
        build_groups(ImpressionLog.empty(), req(1))
    with pytest.raises(ValueError):
        GroupingRequest("site", 0)


def test_rank_metrics_and_prefix():
    rows = []
    # x: many small orders, y: one large order
    for i in range(10):
        rows.append(ImpressionRecord(0, f"x{i}", {"zip": "98004"}, 1000, 1000, True))
    for i in range(10):
        rows.append(ImpressionRecord(0, f"y{i}", {"zip": "10001"}, 1000, 50_000 if i == 0 else 0, i == 0))
    log = ImpressionLog.from_records(rows)
    by_rpm = build_groups(log, GroupingRequest("zip", 2, "rpm", 0, 0))
    by_count = build_groups(log, GroupingRequest("zip", 2, "conversion_count", 0, 0))
    assert by_rpm.group_of == {"98004": 0, "10001": 1}
    assert by_count.group_of == {"10001": 0, "98004": 1}
    pref = build_groups(log, GroupingRequest("zip", 2, "order_count", 0, 0, prefix_length=2))
    assert pref.group_index("98123") == pref.group_of["98"]


@st.composite
def value_tables(draw):
    n = draw(st.integers(50, 90))
    vols = draw(st.lists(st.integers(1, 40), min_size=n, max_size=n))
    revs = draw(st.lists(st.sampled_from([0, 1000, 2000, 5000, 20_000]), min_size=n, max_size=n))
    groups = draw(st.integers(1, 8))
    return {f"v{i:03d}": (vols[i], revs[i]) for i in range(n)}, groups


@settings(max_examples=30, deadline=None)
@given(value_tables(), st.randoms(use_true_random=False))
def test_balance_order_and_permutation(table, rnd):
    values, groups = table
    log = log_from(values)
    spec = build_groups(log, req(groups))
    summary = summarize_values(log, "site")
    vol = dict(zip(summary.values, summary.volume))
    rev = dict(zip(summary.values, summary.revenue_micros))
    gvol = np.zeros(groups)
    grev = np.zeros(groups)
    for v, g in spec.group_of.items():
        gvol[g] += vol[v]
        grev[g] += rev[v]
    assert gvol.max() - gvol.min() <= max(vol.values())
    # every value of a group ranks no higher than every value of the next group
    rpm = {v: rev[v] / vol[v] for v in vol}
    for g in range(groups - 1):
        assert max(rpm[v] for v in spec.members(g)) <= min(rpm[v] for v in spec.members(g + 1))
        assert grev[g] / gvol[g] <= grev[g + 1] / gvol[g + 1] + 1e-12
    order = list(range(len(log)))
    rnd.shuffle(order)
    assert build_groups(log.take(np.array(order)), req(groups)) == spec


def test_schedule_gates_then_freezes():
    values = {f"s{i}": (40, 3000 if i % 3 == 0 else 0) for i in range(8)}
    log = log_from(values, days=list(range(25)))
    request = GroupingRequest("site", 3, min_volume_threshold=30, min_order_threshold=5)
    assert rebuild_schedule(log.between(0, 2), request, 3) is None
    sched = SegmentSchedule(request)
    assert sched.update(log, 3) is None
    spec = sched.update(log, 7)
    assert spec == build_groups(log.between(0, 6), request)
    assert sched.update(log, 20) is spec
    starved = GroupingRequest("site", 3, min_volume_threshold=10_000, min_order_threshold=5)
    assert rebuild_schedule(log, starved, 9) is None
