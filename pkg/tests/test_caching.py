import json
from math import comb

import pytest

from vccsat.caching import (
    CacheLayout,
    DeliverySchedule,
    SubfileLabel,
    build_schedule,
    cache_contents,
    cached_labels,
    enumerate_stages,
    schedule_to_dict,
    split_file,
    subfile_count,
    verify_completeness,
)


def distinct_demands(layout):
    return {u: u for u in range(1, layout.n_users + 1)}


class TestCacheLayout:
    def test_invariants(self):
        layout = CacheLayout(n_states=5, t=2, n_files=10, users_per_group=2)
        assert layout.caching_gain == 3
        assert layout.n_users == 10
        assert layout.cache_fraction == pytest.approx(0.4)

    @pytest.mark.parametrize("n_states,t", [(3, 0), (3, 3), (3, 4), (1, 1)])
    def test_rejects_bad_t(self, n_states, t):
        with pytest.raises(ValueError):
            CacheLayout(n_states=n_states, t=t, n_files=1, users_per_group=1)

    def test_group_membership(self):
        layout = CacheLayout(n_states=3, t=1, n_files=6, users_per_group=2)
        assert list(layout.group_members(1)) == [1, 2]
        assert list(layout.group_members(3)) == [5, 6]
        assert layout.group_of(4) == 2
        with pytest.raises(ValueError):
            layout.group_of(7)


class TestSplitFile:
    def test_singleton_labels(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        labels = split_file(layout, 1)
        assert [l.index_set for l in labels] == [(1,), (2,), (3,)]

    def test_count_five_choose_two(self):
        layout = CacheLayout(n_states=5, t=2, n_files=5, users_per_group=1)
        labels = split_file(layout, 2)
        assert len(labels) == 10
        assert len(set(labels)) == 10

    def test_lazy_count_for_large_layout(self):
        layout = CacheLayout(n_states=50, t=5, n_files=1, users_per_group=1)
        assert subfile_count(layout) == 2_118_760

    def test_file_index_range_checked(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        with pytest.raises(ValueError):
            split_file(layout, 4)


class TestCacheContents:
    def test_singleton_state_caches_its_own_label(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        pred = cache_contents(layout, 2)
        kept = [l for l in split_file(layout, 1) if pred(l)]
        assert [l.index_set for l in kept] == [(2,)]

    def test_cached_count_matches_budget(self):
        layout = CacheLayout(n_states=5, t=2, n_files=5, users_per_group=1)
        kept = cached_labels(layout, 1, 1)
        assert len(kept) == 4  # C(4, 1)
        assert len(kept) / subfile_count(layout) == pytest.approx(layout.cache_fraction)

    @pytest.mark.parametrize("n_states", range(2, 9))
    def test_budget_exact_for_all_layouts(self, n_states):
        # C(n-1, t-1) / C(n, t) == t / n, exactly in integers
        for t in range(1, n_states):
            assert comb(n_states - 1, t - 1) * n_states == comb(n_states, t) * t

    def test_state_range_checked(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        with pytest.raises(ValueError):
            cache_contents(layout, 0)


class TestEnumerateStages:
    def test_pairs_for_three_states(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        assert enumerate_stages(layout) == [(1, 2), (1, 3), (2, 3)]

    def test_ten_stages_for_five_choose_three(self):
        layout = CacheLayout(n_states=5, t=2, n_files=5, users_per_group=1)
        assert len(enumerate_stages(layout)) == 10

    def test_single_stage_when_g_equals_states(self):
        layout = CacheLayout(n_states=6, t=5, n_files=6, users_per_group=1)
        assert enumerate_stages(layout) == [(1, 2, 3, 4, 5, 6)]


class TestBuildSchedule:
    def test_three_state_singleton_layout(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        schedule = build_schedule(layout, 1, distinct_demands(layout))
        assert schedule.n_stages == 3
        assert all(len(s.rounds) == 1 for s in schedule.stages)
        assert all(len(r) == 2 for s in schedule.stages for r in s.rounds)
        # stage {1,2}: the group-1 user gets its file's subfile {2}, and vice versa
        first = schedule.stages[0]
        assert first.groups == (1, 2)
        by_group = {a.group: a for a in first.rounds[0]}
        assert by_group[1].subfile == SubfileLabel(1, (2,))
        assert by_group[2].subfile == SubfileLabel(2, (1,))

    def test_five_state_two_slot_layout(self):
        layout = CacheLayout(n_states=5, t=2, n_files=10, users_per_group=2)
        schedule = build_schedule(layout, 2, distinct_demands(layout))
        assert schedule.n_stages == 10
        assert all(len(s.rounds) == 1 for s in schedule.stages)
        assert schedule.users_per_round == 6

    def test_round_user_order_is_ascending(self):
        layout = CacheLayout(n_states=2, t=1, n_files=4, users_per_group=2)
        schedule = build_schedule(layout, 1, distinct_demands(layout))
        for stage in schedule.stages:
            served = [[a.user for a in rnd if a.group == 1] for rnd in stage.rounds]
            assert served == [[1], [2]]

    def test_q_larger_than_group_rejected(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        with pytest.raises(ValueError, match="exceeds users_per_group"):
            build_schedule(layout, 2, distinct_demands(layout))

    def test_indivisible_round_size_rejected(self):
        layout = CacheLayout(n_states=3, t=1, n_files=9, users_per_group=3)
        with pytest.raises(ValueError, match="not divisible"):
            build_schedule(layout, 2, distinct_demands(layout))

    def test_duplicate_demands_rejected(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        with pytest.raises(ValueError, match="distinct"):
            build_schedule(layout, 1, {1: 1, 2: 1, 3: 2})

    def test_partial_demands_rejected(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        with pytest.raises(ValueError, match="cover exactly users"):
            build_schedule(layout, 1, {1: 1, 2: 2})


class TestVerifyCompleteness:
    def test_valid_schedule_is_complete(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        demands = distinct_demands(layout)
        schedule = build_schedule(layout, 1, demands)
        report = verify_completeness(schedule, layout, demands)
        assert report.complete
        # each user receives C(2, 1) = 2 subfiles over the stages containing its group
        assert all(count == 2 for count in report.delivered_per_user.values())

    def test_deleting_a_stage_is_reported(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        demands = distinct_demands(layout)
        schedule = build_schedule(layout, 1, demands)
        truncated = DeliverySchedule(g=schedule.g, q=schedule.q, stages=schedule.stages[1:])
        report = verify_completeness(truncated, layout, demands)
        assert not report.complete
        # dropped stage (1, 2) serves one user of group 1 and one of group 2,
        # so exactly those two users each miss exactly one label
        assert set(report.missing) == {1, 2}
        assert report.missing[1] == [SubfileLabel(1, (2,))]
        assert report.missing[2] == [SubfileLabel(2, (1,))]
        assert not report.duplicated

    def test_duplicated_delivery_is_reported(self):
        layout = CacheLayout(n_states=3, t=1, n_files=3, users_per_group=1)
        demands = distinct_demands(layout)
        schedule = build_schedule(layout, 1, demands)
        doubled = DeliverySchedule(
            g=schedule.g, q=schedule.q, stages=schedule.stages + schedule.stages[:1]
        )
        report = verify_completeness(doubled, layout, demands)
        assert not report.complete
        assert set(report.duplicated) == {1, 2}

    def test_eight_state_delivery_count(self):
        layout = CacheLayout(n_states=8, t=3, n_files=16, users_per_group=2)
        demands = distinct_demands(layout)
        schedule = build_schedule(layout, 2, demands)
        report = verify_completeness(schedule, layout, demands)
        assert report.complete
        # needed-per-user count C(7, 3) equals the number of stages containing
        # the user's group, C(7, G-1)
        assert all(count == comb(7, 3) for count in report.delivered_per_user.values())
        assert comb(7, 3) == comb(7, layout.caching_gain - 1)

    @pytest.mark.parametrize("n_states", [2, 3, 4, 5])
    def test_exact_once_delivery_small_layouts(self, n_states):
        for t in range(1, n_states):
            for q in (1, 2):
                for users_per_group in (q, 2 * q):
                    layout = CacheLayout(
                        n_states=n_states,
                        t=t,
                        n_files=n_states * users_per_group,
                        users_per_group=users_per_group,
                    )
                    demands = distinct_demands(layout)
                    schedule = build_schedule(layout, q, demands)
                    report = verify_completeness(schedule, layout, demands)
                    assert report.complete, (n_states, t, q, users_per_group, report.summary())


class TestScheduleExport:
    def test_json_round_trip_structure(self):
        layout = CacheLayout(n_states=5, t=2, n_files=10, users_per_group=2)
        demands = distinct_demands(layout)
        schedule = build_schedule(layout, 2, demands)
        data = json.loads(json.dumps(schedule_to_dict(schedule)))
        assert data["g"] == 3 and data["q"] == 2 and data["n_stages"] == 10
        first = data["stages"][0]
        assert first["groups"] == [1, 2, 3]
        assert len(first["rounds"][0]) == 6
        entry = first["rounds"][0][0]
        assert sorted(entry) == ["file", "group", "slot", "subfile", "user"]
        assert entry["subfile"] == sorted(entry["subfile"])

    def test_dof_accounting(self):
        # deliveries per stage-round equal G * Q
        layout = CacheLayout(n_states=5, t=2, n_files=10, users_per_group=2)
        schedule = build_schedule(layout, 2, distinct_demands(layout))
        for stage in schedule.stages:
            for rnd in stage.rounds:
                assert len(rnd) == schedule.g * schedule.q
                assert len({a.user for a in rnd}) == schedule.g * schedule.q
