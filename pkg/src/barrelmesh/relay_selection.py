"""Relay-set construction over a barrel topology.

Four strategies share one output type:

* crns_select: connectivity-ranked selection. Nodes outside sink range each
  nominate their best-connected neighbor, discounted by distance, and every
  nomination costs the winner a point of score so load spreads down the row.
* all_relays: every barrel forwards.
* random_relays: a seeded uniform sample of barrels.
* knn_relays: barrels nearest the k-means cluster centroids of the row.

An assignment also records, per barrel, which relay it leans on (its first
hop toward the backbone), which feeds the static load accounting.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Optional

from .topology import Topology, neighbor_degrees

# Scores land on exact float grids except for the distance discount, so
# equality up to this slack is treated as a tie (broken to the lowest id).
TIE_EPS = 1e-9

KMEANS_MAX_ROUNDS = 100


class SelectionError(ValueError):
    """Raised for parameterizations a strategy cannot satisfy."""


@dataclass(frozen=True)
class RelayAssignment:
    """A relay set plus per-node bookkeeping.

    relays: sorted barrel ids acting as forwarders.
    chosen: per node id, the relay it attaches to, or None when the node is
        the sink, talks to the sink directly, or cannot reach any relay.
    scores: final per-node scores for score-driven strategies, else None.
    """

    algorithm: str
    relays: tuple[int, ...]
    chosen: tuple[Optional[int], ...]
    scores: Optional[tuple[float, ...]] = None

    def relay_mask(self) -> int:
        mask = 0
        for r in self.relays:
            mask |= 1 << r
        return mask

    def client_counts(self) -> dict[int, int]:
        """Number of nodes attached to each relay (relays with none included)."""
        counts = {r: 0 for r in self.relays}
        for target in self.chosen:
            if target is not None:
                counts[target] += 1
        return counts


def crns_select(
    topology: Topology, *, persistent_distance_penalty: bool = False
) -> RelayAssignment:
    """Connectivity-ranked neighbor selection.

    Every node starts with a score equal to its in-range neighbor count (the
    sink counts like any neighbor). Barrels outside sink range, visited in
    ascending id order, rate each neighbor j as score[j] - d/r and nominate
    the maximum, ties to the lowest id. The winner becomes a relay and
    permanently loses one point, so a node that has already absorbed a
    nomination is less attractive to the next chooser.

    The distance discount is normally recomputed fresh for each chooser.
    With persistent_distance_penalty=True the discount is instead written
    back into the running scores (every rated neighbor keeps the deduction),
    an alternative reading kept for comparison runs; it can only differ once
    nodes share neighbors.
    """
    n = topology.node_count
    sink = topology.sink
    score = [float(d) for d in neighbor_degrees(topology)]
    is_relay = [False] * n
    chosen: list[Optional[int]] = [None] * n
    sink_adj = topology.adjacency[sink]
    for i in topology.barrels:
        if sink_adj >> i & 1:
            continue
        neighbors = topology.neighbors_of(i)
        if not neighbors:
            continue
        if persistent_distance_penalty:
            for j in neighbors:
                score[j] -= topology.distance(i, j) / topology.range_r
            rating = {j: score[j] for j in neighbors}
        else:
            rating = {
                j: score[j] - topology.distance(i, j) / topology.range_r
                for j in neighbors
            }
        best_value = max(rating.values())
        best = min(j for j, v in rating.items() if v >= best_value - TIE_EPS)
        is_relay[best] = True
        score[best] -= 1.0
        chosen[i] = best
    relays = tuple(i for i in topology.barrels if is_relay[i])
    return RelayAssignment(
        algorithm="crns",
        relays=relays,
        chosen=tuple(chosen),
        scores=tuple(score),
    )


def _attach_nearest(topology: Topology, relays: tuple[int, ...]) -> tuple[Optional[int], ...]:
    """First hop per barrel: its nearest in-range relay (ties to lowest id),
    None for sink-adjacent or unreachable barrels."""
    relay_set = set(relays)
    sink_adj = topology.adjacency[topology.sink]
    chosen: list[Optional[int]] = [None] * topology.node_count
    for i in topology.barrels:
        if sink_adj >> i & 1:
            continue
        candidates = [
            r for r in relays if r != i and topology.neighbor(i, r)
        ]
        if candidates:
            chosen[i] = min(candidates, key=lambda r: (topology.distance(i, r), r))
    assert all(c is None or c in relay_set for c in chosen)
    return tuple(chosen)


def all_relays(topology: Topology) -> RelayAssignment:
    """Every barrel forwards."""
    relays = tuple(topology.barrels)
    return RelayAssignment(
        algorithm="all",
        relays=relays,
        chosen=_attach_nearest(topology, relays),
    )


def random_relays(topology: Topology, count: int, seed: int) -> RelayAssignment:
    """A seeded uniform sample of `count` distinct barrels."""
    n_barrels = topology.sink
    if count < 0 or count > n_barrels:
        raise SelectionError(
            f"relay count {count} outside [0, {n_barrels}] for this topology"
        )
    rng = random.Random(seed)
    relays = tuple(sorted(rng.sample(range(n_barrels), count)))
    return RelayAssignment(
        algorithm="random",
        relays=relays,
        chosen=_attach_nearest(topology, relays),
    )


def knn_relays(topology: Topology, k: int, seed: int) -> RelayAssignment:
    """Cluster-head relays: k-means over barrel positions, one head per
    centroid (the nearest barrel, ties to the lowest id), deduplicated.

    Lloyd iteration runs from a seeded sample of k distinct barrel positions
    until assignments stop moving or 100 rounds pass. A cluster that empties
    keeps its previous centroid. Assignment ties go to the lowest centroid
    index. Duplicate heads collapse, so the relay count can come out below k.
    """
    n_barrels = topology.sink
    if k < 1 or k > n_barrels:
        raise SelectionError(f"k {k} outside [1, {n_barrels}] for this topology")
    points = topology.positions[:n_barrels]
    rng = random.Random(seed)
    centroids = [points[i] for i in rng.sample(range(n_barrels), k)]
    for _ in range(KMEANS_MAX_ROUNDS):
        clusters: list[list[tuple[float, float]]] = [[] for _ in range(k)]
        for x, y in points:
            best = min(
                range(k),
                key=lambda ci: ((x - centroids[ci][0]) ** 2 + (y - centroids[ci][1]) ** 2, ci),
            )
            clusters[best].append((x, y))
        new_centroids = []
        for ci, members in enumerate(clusters):
            if members:
                new_centroids.append(
                    (
                        sum(p[0] for p in members) / len(members),
                        sum(p[1] for p in members) / len(members),
                    )
                )
            else:
                new_centroids.append(centroids[ci])
        if new_centroids == centroids:
            break
        centroids = new_centroids
    heads = set()
    for cx, cy in centroids:
        head = min(
            range(n_barrels),
            key=lambda i: ((points[i][0] - cx) ** 2 + (points[i][1] - cy) ** 2, i),
        )
        heads.add(head)
    relays = tuple(sorted(heads))
    return RelayAssignment(
        algorithm="knn",
        relays=relays,
        chosen=_attach_nearest(topology, relays),
    )


def isolated_nodes(topology: Topology, relays: tuple[int, ...]) -> list[int]:
    """Barrels whose packets cannot reach the sink over the relay backbone.

    A barrel is served when it neighbors the sink directly, or neighbors a
    relay from which a chain of relay-to-relay hops ends within sink range.
    Flood reachability is computed over relays plus the sink with unit-disk
    edges.
    """
    reachable = 1 << topology.sink
    frontier = [topology.sink]
    relay_mask = 0
    for r in relays:
        relay_mask |= 1 << r
    while frontier:
        node = frontier.pop()
        fresh = topology.adjacency[node] & relay_mask & ~reachable
        j = 0
        while fresh:
            if fresh & 1:
                reachable |= 1 << j
                frontier.append(j)
            fresh >>= 1
            j += 1
    out = []
    for i in topology.barrels:
        if topology.adjacency[i] & reachable == 0:
            out.append(i)
    return out


def validate_assignment(topology: Topology, assignment: RelayAssignment) -> list[str]:
    """Consistency and coverage check; returns human-readable issues, empty
    when the assignment is sound for this topology."""
    issues = []
    n = topology.node_count
    if len(assignment.chosen) != n:
        issues.append(
            f"chosen has {len(assignment.chosen)} entries for {n} nodes"
        )
        return issues
    relay_set = set(assignment.relays)
    for r in assignment.relays:
        if not (0 <= r < topology.sink):
            issues.append(f"relay {r} is not a barrel id")
    if list(assignment.relays) != sorted(relay_set):
        issues.append("relay list is not sorted and distinct")
    for i, target in enumerate(assignment.chosen):
        if target is None:
            continue
        if i == topology.sink:
            issues.append("sink has a chosen relay")
        if target not in relay_set:
            issues.append(f"node {i} attaches to {target}, which is not a relay")
        elif not topology.neighbor(i, target):
            issues.append(f"node {i} attaches to out-of-range relay {target}")
    for i in isolated_nodes(topology, assignment.relays):
        issues.append(f"node {i} is isolated: no relay path to the sink")
    return issues


_CSV_FIELDS = ["node", "x", "y", "role", "chosen_relay", "score"]


def save_assignment_csv(topology: Topology, assignment: RelayAssignment, path) -> None:
    """One row per node: id, position, role (sink/relay/barrel), attachment,
    and final score where the strategy produces one."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for i, (x, y) in enumerate(topology.positions):
            if i == topology.sink:
                role = "sink"
            elif i in assignment.relays:
                role = "relay"
            else:
                role = "barrel"
            chosen = assignment.chosen[i]
            score = assignment.scores[i] if assignment.scores is not None else ""
            writer.writerow(
                [i, repr(x), repr(y), role, "" if chosen is None else chosen, score]
            )


def load_assignment_csv(path) -> tuple[list[tuple[float, float]], int, RelayAssignment]:
    """Inverse of save_assignment_csv. Returns (positions, sink_id, assignment);
    the algorithm name is not stored, so it loads as "file"."""
    positions: list[tuple[float, float]] = []
    relays: list[int] = []
    chosen: list[Optional[int]] = []
    scores: list[float] = []
    have_scores = True
    sink = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CSV_FIELDS:
            raise ValueError(f"unexpected assignment columns {reader.fieldnames}")
        for row in reader:
            i = int(row["node"])
            if i != len(positions):
                raise ValueError(f"node ids must be contiguous, saw {i}")
            positions.append((float(row["x"]), float(row["y"])))
            if row["role"] == "sink":
                sink = i
            elif row["role"] == "relay":
                relays.append(i)
            elif row["role"] != "barrel":
                raise ValueError(f"unknown role {row['role']!r}")
            chosen.append(int(row["chosen_relay"]) if row["chosen_relay"] else None)
            if row["score"]:
                scores.append(float(row["score"]))
            else:
                have_scores = False
    if sink != len(positions) - 1:
        raise ValueError("sink must be the last node")
    assignment = RelayAssignment(
        algorithm="file",
        relays=tuple(relays),
        chosen=tuple(chosen),
        scores=tuple(scores) if have_scores else None,
    )
    return positions, sink, assignment
