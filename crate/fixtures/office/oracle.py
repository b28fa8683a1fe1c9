"""Optimal plan costs for the office fixtures, computed without the Rust planner.

The office model is re-stated here by hand: every action costs 1, the robot
moves along map edges, reports the room it is in, and presents a login where
motion was seen; a live stationary sensor reports its own room. Breadth-first
search over (robot position, reported rooms, validated) then gives the exact
optimum. Prints the JSON stored in expected.json.
"""

import json
from collections import deque

EDGES = [("corridor", "office1"), ("corridor", "office2"), ("corridor", "confroom"), ("corridor", "entry")]
ROOMS = ("office1", "office2", "confroom")


def neighbors(node):
    for a, b in EDGES:
        if a == node:
            yield b
        elif b == node:
            yield a


def optimum(start, sensors, goal_rooms=(), login_at=None):
    init = (start, frozenset(), False)
    seen = {init}
    queue = deque([(init, 0)])
    while queue:
        (pos, reported, validated), cost = queue.popleft()
        if set(goal_rooms) <= reported and (login_at is None or validated):
            return cost
        succ = [(n, reported, validated) for n in neighbors(pos)]
        succ.append((pos, reported | {pos}, validated))
        succ.extend((pos, reported | {room}, validated) for room in sensors)
        if login_at == pos:
            succ.append((pos, reported, True))
        for s in succ:
            if s not in seen:
                seen.add(s)
                queue.append((s, cost + 1))
    return None


if __name__ == "__main__":
    expected = {
        "all-rooms": {"domain": "domain.pddl", "cost": optimum("corridor", ("office2", "confroom"), ROOMS)},
        "login-at-entry": {"domain": "domain.pddl", "cost": optimum("office1", ("office2", "confroom"), login_at="entry")},
        "all-rooms-no-sensors": {"domain": "domain-no-sensors.pddl", "cost": optimum("corridor", (), ROOMS)},
        "all-rooms-from-office2": {"domain": "domain-no-sensors.pddl", "cost": optimum("office2", (), ROOMS)},
    }
    print(json.dumps(expected, indent=2, sort_keys=True))
