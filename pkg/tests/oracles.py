"""Independent reference implementations used as test oracles.

None of these share code with the package beyond the plain data types.
"""
from __future__ import annotations

import heapq
import itertools
import math
import random
from fractions import Fraction

from kgplan.pddl import ActionSchema, Atom, Domain, GroundAction, GroundedTask, PredicateSchema, Problem

# ---------------------------------------------------------------- search


def dijkstra_cost(task: GroundedTask, limit: int = 10_000):
    """Exact shortest plan length by uniform-cost search over explicit atom sets.

    Returns (cost or None, number of reachable states seen). Raises if the
    reachable space exceeds ``limit``.
    """
    start = frozenset(task.init)
    goal = frozenset(task.goal)
    dist = {start: 0}
    heap = [(0, 0, start)]
    tie = itertools.count(1)
    best = None
    while heap:
        d, _, s = heapq.heappop(heap)
        if d > dist[s]:
            continue
        if goal <= s and best is None:
            best = d
        for a in task.actions:
            if a.pre <= s:
                n = (s - a.delete) | a.add
                if d + 1 < dist.get(n, math.inf):
                    dist[n] = d + 1
                    if len(dist) > limit:
                        raise OverflowError("state space larger than the oracle limit")
                    heapq.heappush(heap, (d + 1, next(tie), n))
    return best, len(dist)


def random_task(rng: random.Random, n_atoms: int | None = None, n_actions: int | None = None) -> GroundedTask:
    """Random propositional STRIPS task (atoms p0..pn, actions a0..am)."""
    n_atoms = n_atoms or rng.randint(4, 11)
    n_actions = n_actions or rng.randint(3, 14)
    atoms = [Atom(f"p{i}") for i in range(n_atoms)]
    actions = []
    for j in range(n_actions):
        pre = frozenset(rng.sample(atoms, rng.randint(0, 3)))
        add = frozenset(rng.sample(atoms, rng.randint(1, 3)))
        dele = frozenset(rng.sample(atoms, rng.randint(0, 2))) - add
        actions.append(GroundAction(f"a{j}", (), pre, add, dele))
    init = frozenset(a for a in atoms if rng.random() < 0.3)
    goal = frozenset(rng.sample(atoms, rng.randint(1, 3)))
    return GroundedTask(frozenset(atoms), tuple(actions), init, goal)


# ---------------------------------------------------------------- PDDL generators

_WORDS = ["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta", "zeta", "rho"]


def _name(rng, prefix, i):
    return f"{prefix}{rng.choice(_WORDS)}{i}"


def random_domain(rng: random.Random) -> Domain:
    types = {}
    type_names = ["object"]
    for i in range(rng.randint(0, 4)):
        t = _name(rng, "t", i)
        types[t] = rng.choice(type_names)
        type_names.append(t)
    constants = {_name(rng, "c", i): rng.choice(type_names) for i in range(rng.randint(0, 3))}
    predicates = {}
    for i in range(rng.randint(1, 5)):
        p = _name(rng, "p", i)
        predicates[p] = PredicateSchema(p, tuple((f"?x{k}", rng.choice(type_names)) for k in range(rng.randint(0, 3))))
    actions = {}
    for i in range(rng.randint(0, 4)):
        name = _name(rng, "act", i)
        params = tuple((f"?v{k}", rng.choice(type_names)) for k in range(rng.randint(0, 3)))

        def lit():
            p = rng.choice(list(predicates.values()))
            args = []
            for _, want in p.params:
                fits = [v for v, t in params if _sub(types, t, want)]
                fits += [c for c, t in constants.items() if _sub(types, t, want)]
                if not fits:
                    return None
                args.append(rng.choice(fits))
            return Atom(p.name, tuple(args))

        pre = {a for a in (lit() for _ in range(rng.randint(0, 3))) if a}
        add = {a for a in (lit() for _ in range(rng.randint(0, 2))) if a}
        dele = {a for a in (lit() for _ in range(rng.randint(0, 2))) if a} - add
        actions[name] = ActionSchema(name, params, frozenset(pre), frozenset(add), frozenset(dele))
    reqs = (":strips", ":typing") if rng.random() < 0.8 else (":strips",)
    return Domain(_name(rng, "dom", 0), types, predicates, actions, constants, reqs)


def _sub(types, child, parent):
    while True:
        if child == parent:
            return True
        if child == "object":
            return False
        child = types.get(child, "object")


def random_problem(rng: random.Random, domain: Domain) -> Problem | None:
    type_names = ["object", *domain.types]
    objects = {_name(rng, "o", i): rng.choice(type_names) for i in range(rng.randint(1, 6))}
    typing = {**domain.constants, **objects}

    def ground_atom():
        p = rng.choice(list(domain.predicates.values()))
        args = []
        for _, want in p.params:
            fits = [o for o, t in typing.items() if _sub(domain.types, t, want)]
            if not fits:
                return None
            args.append(rng.choice(sorted(fits)))
        return Atom(p.name, tuple(args))

    init = {a for a in (ground_atom() for _ in range(rng.randint(0, 6))) if a}
    goal = {a for a in (ground_atom() for _ in range(rng.randint(1, 4))) if a}
    if not goal:
        return None
    return Problem(_name(rng, "prob", 0), domain.name, objects, frozenset(init), frozenset(goal))


# ---------------------------------------------------------------- selection


def brute_force_select(batch, lam):
    """batch: list of (key, p, dc). Exact rational scoring; returns the winning key or None."""
    best = None
    for key, p, dc in batch:
        if dc == math.inf:
            continue
        denom = Fraction(max(dc, 0) + 1) ** int(lam) if float(lam).is_integer() else None
        score = Fraction(p) / denom if denom is not None else p / (max(dc, 0) + 1) ** lam
        cand = (score, p, key)
        if best is None or cand[0] > best[0] or (cand[0] == best[0] and (
                cand[1] > best[1] or (cand[1] == best[1] and cand[2] < best[2]))):
            best = cand
    return None if best is None else best[2]


# ---------------------------------------------------------------- metrics


def metrics_by_hand(rows):
    """rows: list of dicts with the CSV fields. Returns (tcr, gcr, er, pt, et)."""
    n = 0
    ok_tasks = 0
    goals = [0, 0]
    acts = [0, 0]
    pt = 0.0
    et = 0
    for r in rows:
        n += 1
        ok_tasks += 1 if r["success"] else 0
        goals[0] += r["goal_achieved"]
        goals[1] += r["goal_total"]
        acts[0] += r["actions_ok"]
        acts[1] += r["actions_planned"]
        pt += r["pt_secs"]
        et += r["et_ticks"]
    tcr = ok_tasks * 100 / n
    gcr = goals[0] * 100 / goals[1] if goals[1] else 100.0
    er = acts[0] * 100 / acts[1] if acts[1] else 100.0
    return tcr, gcr, er, pt / n, et / n
