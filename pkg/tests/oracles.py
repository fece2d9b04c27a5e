"""Independent oracles and random generators used to cross-check the
implementation. Nothing here may call into the code paths under test:
measures are recomputed from first principles and plans are enumerated
by brute force.
"""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction


# ---------------------------------------------------------------- taxonomy

def oracle_ancestors(parents: dict[str, str | None], node: str) -> frozenset[str]:
    chain = []
    cur: str | None = node
    while cur is not None:
        chain.append(cur)
        cur = parents[cur]
    return frozenset(chain)


def oracle_distance(parents: dict[str, str | None], a: str, b: str) -> float:
    anc_a = oracle_ancestors(parents, a)
    anc_b = oracle_ancestors(parents, b)
    ratio = Fraction(len(anc_a | anc_b) - len(anc_a & anc_b), len(anc_a | anc_b))
    return math.log2(1 + ratio)


def oracle_variance(parents: dict[str, str | None], root: str, squared: bool = True) -> float:
    others = [n for n in parents if n != root]
    if not others:
        return 0.0
    total = 0.0
    for node in others:
        d = oracle_distance(parents, node, root)
        total += d * d if squared else d
    return total / len(others)


def random_tree(rng: random.Random, max_nodes: int = 50) -> dict[str, str | None]:
    """Random single-rooted parent map with 1..max_nodes extra nodes."""
    parents: dict[str, str | None] = {"root": None}
    names = [f"n{i}" for i in range(rng.randint(1, max_nodes))]
    pool = ["root"]
    for name in names:
        parents[name] = rng.choice(pool)
        pool.append(name)
    return parents


# ------------------------------------------------------------ jaro-winkler

def oracle_jaro_winkler(s1: str, s2: str) -> float:
    """Textbook Jaro-Winkler, written separately from the shipped kernels."""
    if s1 == s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    window = max(max(len(s1), len(s2)) // 2 - 1, 0)
    used = [False] * len(s2)
    common1, common2 = [], []
    for i, ch in enumerate(s1):
        for j in range(max(0, i - window), min(i + window + 1, len(s2))):
            if not used[j] and s2[j] == ch:
                used[j] = True
                common1.append(ch)
                break
    for j, ch in enumerate(s2):
        if used[j]:
            common2.append(ch)
    if not common1:
        return 0.0
    transpositions = sum(a != b for a, b in zip(common1, common2)) // 2
    m = len(common1)
    jaro = (m / len(s1) + m / len(s2) + (m - transpositions) / m) / 3
    if jaro <= 0.7:
        return jaro
    prefix = 0
    for a, b in zip(s1[:4], s2[:4]):
        if a != b:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1 - jaro)


# ------------------------------------------------------------- tour oracle

class TourOracle:
    """Exhaustive minimum-makespan schedule for canonical tour tasks.

    Enumerates every order of the goal visits, every position for the meal
    (when required), appends the return leg, and schedules each sequence at
    the earliest feasible minutes. Mirrors the closed-interval window rule:
    an action must end strictly before the scheduled literal that closes a
    window it relies on.
    """

    def __init__(self, task):
        self.task = task
        inst = task.instance
        self.walking = {k[1:]: v for k, v in inst.fluents.items() if k[0] == "walking_time"}
        self.visit = {k[1]: v for k, v in inst.fluents.items() if k[0] == "visit_duration"}
        self.eat = {k[1]: v for k, v in inst.fluents.items() if k[0] == "eat_duration"}
        self.windows: dict[tuple, list] = {}
        for t, literal in inst.timed_literals:
            self.windows.setdefault(literal.atom, []).append((t, literal.positive))
        self.start_loc = next(
            atom[2] for atom in inst.init_atoms if atom[0] == "be"
        )
        self.tourist = next(atom[1] for atom in inst.init_atoms if atom[0] == "be")
        self.goal_visits = sorted(
            atom[2] for atom in inst.goals if atom[0] == "visited"
        )
        self.needs_meal = any(atom[0] == "eaten" for atom in inst.goals)
        self.home = next(
            (atom[2] for atom in inst.goals if atom[0] == "be"), None
        )
        self.restaurants = sorted(
            o for o, t in inst.objects.items() if t == "restaurant"
        )
        self.t_start, self.t_end = inst.horizon

    def _truth_at(self, atom, time: int) -> bool:
        value = atom in self.task.instance.init_atoms
        for t, positive in sorted(self.windows.get(atom, ())):
            if t <= time:
                value = positive
            else:
                break
        return value

    def _first_close_after(self, atom, time: int) -> int | None:
        for t, positive in sorted(self.windows.get(atom, ())):
            if t > time and not positive:
                return t
        return None

    def _earliest_ok(self, interval_atoms, start_atoms, duration, now):
        """Earliest start >= now where every interval atom holds through the
        closed interval and every start atom holds at the start minute."""
        boundaries = {now}
        for atom in (*interval_atoms, *start_atoms):
            boundaries.update(t for t, _ in self.windows.get(atom, ()) if t > now)
        for start in sorted(boundaries):
            ok = all(self._truth_at(atom, start) for atom in start_atoms)
            for atom in interval_atoms:
                if not self._truth_at(atom, start):
                    ok = False
                    break
                close = self._first_close_after(atom, start)
                if close is not None and close <= start + duration:
                    ok = False
                    break
            if ok:
                return start
        return None

    def _schedule(self, sequence) -> int | None:
        """Earliest finish of one itinerary; None when infeasible."""
        now = self.t_start
        loc = self.start_loc
        active = ("active", self.tourist)
        for kind, place in sequence:
            if place != loc:
                walk = self.walking.get((loc, place))
                if walk is None:
                    return None
                start = self._earliest_ok([active], [], walk, now)
                if start is None:
                    return None
                now = start + walk
                loc = place
            if kind == "visit":
                dur = self.visit.get(place)
                if dur is None:
                    return None
                start = self._earliest_ok([("open", place), active], [], dur, now)
                if start is None:
                    return None
                now = start + dur
            elif kind == "eat":
                dur = self.eat.get(place)
                if dur is None:
                    return None
                start = self._earliest_ok(
                    [("open", place), active],
                    [("time_for_eat", self.tourist), ("free_table", place)],
                    dur,
                    now,
                )
                if start is None:
                    return None
                now = start + dur
        if self.t_end is not None and now > self.t_end:
            return None
        return now

    def best_makespan(self) -> int | None:
        """Minimum over all itineraries of (finish - window start)."""
        best = None
        for order in itertools.permutations(self.goal_visits):
            sequences = []
            base = [("visit", p) for p in order]
            if self.needs_meal:
                for pos in range(len(base) + 1):
                    for restaurant in self.restaurants:
                        seq = base[:pos] + [("eat", restaurant)] + base[pos:]
                        sequences.append(seq)
            else:
                sequences.append(base)
            for seq in sequences:
                full = list(seq)
                if self.home is not None:
                    full.append(("move", self.home))
                finish = self._schedule(full)
                if finish is not None:
                    value = finish - self.t_start
                    if best is None or value < best:
                        best = value
        return best


# --------------------------------------------------------- tour generator

CITY_CENTER = (39.47, -0.38)


def random_tour_problem_text(rng: random.Random, n_pois: int) -> str:
    """Problem text (against the bundled tour domain) for a random instance
    with <= 6 locations."""
    from opportune.facts import walking_minutes

    pois = [f"poi_{i}" for i in range(n_pois)]
    places = ["base_camp", *pois, "canteen"]
    coords = {
        name: (
            CITY_CENTER[0] + rng.uniform(-0.02, 0.02),
            CITY_CENTER[1] + rng.uniform(-0.02, 0.02),
        )
        for name in places
    }
    day_start, day_end = 540, 1320
    lines = [
        "(define (problem random_tour) (:domain city_tour)",
        "  (:objects walker - person base_camp - accommodation canteen - restaurant",
    ]
    lines.append("    " + " ".join(f"{p} - architecture" for p in pois) + ")")
    lines.append("  (:init (be walker base_camp) (free_table canteen)")
    for a in places:
        for b in places:
            if a != b:
                lines.append(
                    f"    (= (walking_time {a} {b}) {walking_minutes(coords[a], coords[b])})"
                )
    for p in pois:
        lines.append(f"    (= (visit_duration {p}) {rng.randint(15, 60)})")
        opens = day_start + rng.randint(0, 180)
        closes = opens + rng.randint(120, 600)
        lines.append(f"    (at {opens} (open {p}))")
        lines.append(f"    (at {min(closes, day_end)} (not (open {p})))")
    lines.append(f"    (= (eat_duration canteen) {rng.randint(30, 60)})")
    lines.append(f"    (at {day_start} (open canteen))")
    lines.append(f"    (at {day_end} (not (open canteen)))")
    eat_from = day_start + rng.randint(120, 300)
    lines.append(f"    (at {eat_from} (time_for_eat walker))")
    lines.append(f"    (at {min(eat_from + rng.randint(120, 300), day_end)} (not (time_for_eat walker)))")
    lines.append(f"    (at {day_start} (active walker))")
    lines.append(f"    (at {day_end} (not (active walker))))")
    goals = [f"(visited walker {p})" for p in pois]
    if rng.random() < 0.7:
        goals.append("(eaten walker)")
    if rng.random() < 0.7:
        goals.append("(be walker base_camp)")
    lines.append("  (:goal (and " + " ".join(goals) + "))")
    lines.append("  (:metric minimize (total-time))")
    lines.append(")")
    problem = "\n".join(lines)
    return problem
