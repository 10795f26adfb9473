"""Combinatorial cache placement and delivery scheduling.

Files are split into C(n_states, t) subfiles labelled by t-subsets of the
cache states [1..n_states]; the group caching state g stores every subfile
whose label contains g.  Delivery runs one stage per (t+1)-subset of states,
with users of each selected group served q at a time in ascending id order.
Subfiles are symbolic labels only; the physical layer maps one label to one
unit-power symbol per round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, Mapping

__all__ = [
    "CacheLayout",
    "SubfileLabel",
    "Assignment",
    "StagePlan",
    "DeliverySchedule",
    "CompletenessReport",
    "split_file",
    "subfile_count",
    "cache_contents",
    "cached_labels",
    "enumerate_stages",
    "build_schedule",
    "verify_completeness",
    "schedule_to_dict",
]


@dataclass(frozen=True)
class CacheLayout:
    """Placement geometry: n_states cache states, subfile labels of size t,
    n_files library files, users_per_group users sharing each state."""

    n_states: int
    t: int
    n_files: int
    users_per_group: int

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError(f"n_states must be >= 2, got {self.n_states}")
        if not 1 <= self.t < self.n_states:
            raise ValueError(f"t must satisfy 1 <= t < n_states, got t={self.t}, n_states={self.n_states}")
        if self.n_files < 1:
            raise ValueError(f"n_files must be >= 1, got {self.n_files}")
        if self.users_per_group < 1:
            raise ValueError(f"users_per_group must be >= 1, got {self.users_per_group}")

    @property
    def caching_gain(self) -> int:
        """Groups served per stage, G = t + 1."""
        return self.t + 1

    @property
    def n_users(self) -> int:
        return self.n_states * self.users_per_group

    @property
    def cache_fraction(self) -> float:
        """Fraction of each file stored per user, t / n_states."""
        return self.t / self.n_states

    def group_of(self, user: int) -> int:
        if not 1 <= user <= self.n_users:
            raise ValueError(f"user id {user} out of range [1, {self.n_users}]")
        return (user - 1) // self.users_per_group + 1

    def group_members(self, group: int) -> range:
        if not 1 <= group <= self.n_states:
            raise ValueError(f"group {group} out of range [1, {self.n_states}]")
        start = (group - 1) * self.users_per_group + 1
        return range(start, start + self.users_per_group)


@dataclass(frozen=True)
class SubfileLabel:
    """Subfile of file `file_index` labelled by the sorted state set `index_set`."""

    file_index: int
    index_set: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index_set", tuple(sorted(self.index_set)))
        if len(set(self.index_set)) != len(self.index_set):
            raise ValueError(f"index_set has duplicates: {self.index_set}")


def subfile_count(layout: CacheLayout) -> int:
    """Number of subfiles per file, C(n_states, t), without materialising them."""
    return comb(layout.n_states, layout.t)


def split_file(layout: CacheLayout, file_index: int) -> list[SubfileLabel]:
    """All subfile labels of one file in lexicographic order."""
    if not 1 <= file_index <= layout.n_files:
        raise ValueError(f"file_index {file_index} out of range [1, {layout.n_files}]")
    states = range(1, layout.n_states + 1)
    return [SubfileLabel(file_index, tset) for tset in combinations(states, layout.t)]


def cache_contents(layout: CacheLayout, state: int) -> Callable[[SubfileLabel], bool]:
    """Predicate selecting the subfiles cached by the given state: label
    index sets containing the state (C(n_states-1, t-1) of them per file)."""
    if not 1 <= state <= layout.n_states:
        raise ValueError(f"cache state {state} out of range [1, {layout.n_states}]")
    return lambda label: state in label.index_set


def cached_labels(layout: CacheLayout, state: int, file_index: int) -> list[SubfileLabel]:
    """The subfiles of one file stored by one cache state."""
    pred = cache_contents(layout, state)
    return [label for label in split_file(layout, file_index) if pred(label)]


def enumerate_stages(layout: CacheLayout) -> list[tuple[int, ...]]:
    """All C(n_states, t+1) stage state-subsets in lexicographic order."""
    return list(combinations(range(1, layout.n_states + 1), layout.caching_gain))


@dataclass(frozen=True)
class Assignment:
    group: int
    slot: int
    user: int
    subfile: SubfileLabel


@dataclass(frozen=True)
class StagePlan:
    groups: tuple[int, ...]
    rounds: tuple[tuple[Assignment, ...], ...]


@dataclass(frozen=True)
class DeliverySchedule:
    g: int
    q: int
    stages: tuple[StagePlan, ...]

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def users_per_round(self) -> int:
        return self.g * self.q


def _check_demands(layout: CacheLayout, demands: Mapping[int, int]) -> None:
    users = set(demands)
    expected = set(range(1, layout.n_users + 1))
    if users != expected:
        raise ValueError(
            f"demands must cover exactly users 1..{layout.n_users}; "
            f"missing {sorted(expected - users)}, extra {sorted(users - expected)}"
        )
    files = list(demands.values())
    if len(set(files)) != len(files):
        raise ValueError("demands must request distinct files")
    bad = [f for f in files if not 1 <= f <= layout.n_files]
    if bad:
        raise ValueError(f"demanded file indices out of range [1, {layout.n_files}]: {sorted(bad)}")


def build_schedule(layout: CacheLayout, q: int, demands: Mapping[int, int]) -> DeliverySchedule:
    """Full delivery plan: for every stage (a (t+1)-subset of states) and
    round, serve q users per selected group, in ascending user-id order, each
    receiving the subfile of its demanded file labelled by the stage set
    minus its own group."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if q > layout.users_per_group:
        raise ValueError(f"q={q} exceeds users_per_group={layout.users_per_group}")
    if layout.users_per_group % q != 0:
        raise ValueError(
            f"users_per_group={layout.users_per_group} not divisible by q={q}"
        )
    _check_demands(layout, demands)

    n_rounds = layout.users_per_group // q
    stages = []
    for stage_set in enumerate_stages(layout):
        rounds = []
        for r in range(n_rounds):
            assignments = []
            for group in stage_set:
                label_set = tuple(s for s in stage_set if s != group)
                members = layout.group_members(group)
                for slot in range(1, q + 1):
                    user = members[r * q + slot - 1]
                    assignments.append(
                        Assignment(
                            group=group,
                            slot=slot,
                            user=user,
                            subfile=SubfileLabel(demands[user], label_set),
                        )
                    )
            rounds.append(tuple(assignments))
        stages.append(StagePlan(groups=stage_set, rounds=tuple(rounds)))
    return DeliverySchedule(g=layout.caching_gain, q=q, stages=tuple(stages))


@dataclass
class CompletenessReport:
    """Outcome of the exhaustive per-user delivery audit."""

    complete: bool
    missing: dict[int, list[SubfileLabel]] = field(default_factory=dict)
    duplicated: dict[int, list[SubfileLabel]] = field(default_factory=dict)
    unexpected: dict[int, list[SubfileLabel]] = field(default_factory=dict)
    delivered_per_user: dict[int, int] = field(default_factory=dict)

    def summary(self) -> str:
        if self.complete:
            return "complete: every needed subfile delivered exactly once"
        return (
            f"incomplete: {sum(len(v) for v in self.missing.values())} missing, "
            f"{sum(len(v) for v in self.duplicated.values())} duplicated, "
            f"{sum(len(v) for v in self.unexpected.values())} unexpected deliveries"
        )


def verify_completeness(
    schedule: DeliverySchedule, layout: CacheLayout, demands: Mapping[int, int]
) -> CompletenessReport:
    """Check that for every user the delivered labels are exactly the labels
    of its demanded file that its cache state lacks, each delivered once."""
    _check_demands(layout, demands)
    delivered: dict[int, list[SubfileLabel]] = {u: [] for u in range(1, layout.n_users + 1)}
    for stage in schedule.stages:
        for round_assignments in stage.rounds:
            for a in round_assignments:
                delivered[a.user].append(a.subfile)

    report = CompletenessReport(complete=True)
    all_sets = list(combinations(range(1, layout.n_states + 1), layout.t))
    for user, items in delivered.items():
        group = layout.group_of(user)
        needed = {
            SubfileLabel(demands[user], tset) for tset in all_sets if group not in tset
        }
        counts: dict[SubfileLabel, int] = {}
        for label in items:
            counts[label] = counts.get(label, 0) + 1
        missing = sorted(needed - set(counts), key=lambda s: (s.file_index, s.index_set))
        dup = sorted((l for l, c in counts.items() if c > 1), key=lambda s: (s.file_index, s.index_set))
        unexpected = sorted((l for l in counts if l not in needed), key=lambda s: (s.file_index, s.index_set))
        if missing:
            report.missing[user] = missing
        if dup:
            report.duplicated[user] = dup
        if unexpected:
            report.unexpected[user] = unexpected
        report.delivered_per_user[user] = len(items)
    report.complete = not (report.missing or report.duplicated or report.unexpected)
    return report


def schedule_to_dict(schedule: DeliverySchedule) -> dict:
    """JSON-ready structure: stages -> rounds -> assignments with subsets
    rendered as sorted integer arrays."""
    return {
        "g": schedule.g,
        "q": schedule.q,
        "n_stages": schedule.n_stages,
        "stages": [
            {
                "groups": list(stage.groups),
                "rounds": [
                    [
                        {
                            "group": a.group,
                            "slot": a.slot,
                            "user": a.user,
                            "file": a.subfile.file_index,
                            "subfile": list(a.subfile.index_set),
                        }
                        for a in round_assignments
                    ]
                    for round_assignments in stage.rounds
                ],
            }
            for stage in schedule.stages
        ],
    }
