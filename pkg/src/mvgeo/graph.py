"""Mention graph construction, biased random walks, and node embeddings.

Edges come from two sources: direct mentions between corpus users, and
co-mentions of an external handle by at least two corpus users (one edge
per user pair, weighted by the two users' mention counts of that handle).
Handles with more unique connections than the celebrity threshold are cut:
external handles before pair expansion, corpus users by dropping all their
edges from the assembled graph (the node stays, isolated).
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .sgns import SgnsConfig, train_sgns


@dataclass
class UserGraph:
    nodes: set[str]
    adjacency: dict[str, dict[str, float]]
    celebrity_ids: set[str]
    celebrity_threshold: int

    def neighbors(self, node: str) -> dict[str, float]:
        return self.adjacency.get(node, {})

    def has_edge(self, u: str, v: str) -> bool:
        return v in self.adjacency.get(u, {})

    def degree(self, node: str) -> int:
        return len(self.adjacency.get(node, {}))

    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency.values()) // 2

    def isolated_nodes(self) -> set[str]:
        return {n for n in self.nodes if not self.adjacency.get(n)}

    def validate(self) -> None:
        for u, nbrs in self.adjacency.items():
            for v, w in nbrs.items():
                if u == v:
                    raise ValueError(f"self-loop at {u!r}")
                if w < 1:
                    raise ValueError(f"non-positive weight on ({u!r}, {v!r})")
                if self.adjacency.get(v, {}).get(u) != w:
                    raise ValueError(f"asymmetric edge ({u!r}, {v!r})")


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 80
    walks_per_node: int = 10
    p: float = 1.0
    q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")


def build_mention_graph(corpus: Corpus, celebrity_threshold: int) -> UserGraph:
    """Weighted undirected mention graph over all corpus users."""
    by_lower = {}
    for uid in corpus.users:
        by_lower.setdefault(uid.lower(), uid)

    weights: dict[tuple[str, str], float] = defaultdict(float)
    external: dict[str, Counter] = defaultdict(Counter)
    for uid, doc in corpus.documents.items():
        for handle, count in doc.mention_targets.items():
            target = by_lower.get(handle)
            if target == uid:
                continue
            if target is not None:
                key = (uid, target) if uid < target else (target, uid)
                weights[key] += count
            else:
                external[handle][uid] += count

    celebrities: set[str] = set()
    for handle, mentioners in external.items():
        if len(mentioners) > celebrity_threshold:
            celebrities.add(handle)
            continue
        if len(mentioners) < 2:
            continue
        users = sorted(mentioners)
        for i, u in enumerate(users):
            for v in users[i + 1 :]:
                weights[(u, v)] += mentioners[u] + mentioners[v]

    adjacency: dict[str, dict[str, float]] = defaultdict(dict)
    for (u, v), w in weights.items():
        adjacency[u][v] = w
        adjacency[v][u] = w

    internal_celebrities = {
        n for n, nbrs in adjacency.items() if len(nbrs) > celebrity_threshold
    }
    for n in internal_celebrities:
        for other in list(adjacency[n]):
            del adjacency[other][n]
        del adjacency[n]
    celebrities |= internal_celebrities

    graph = UserGraph(
        nodes=set(corpus.users),
        adjacency={u: nbrs for u, nbrs in adjacency.items() if nbrs},
        celebrity_ids=celebrities,
        celebrity_threshold=celebrity_threshold,
    )
    graph.validate()
    return graph


def transition_probs(
    prev: str | None, current: str, graph: UserGraph, p: float, q: float
) -> dict[str, float]:
    """Normalized next-step probabilities from ``current`` given ``prev``.

    The unnormalized score of candidate w is weight(current, w) scaled by
    1/p when w is the previous node, 1 when w neighbors the previous node,
    and 1/q otherwise.  The first step of a walk (no previous node) is
    weight-proportional.
    """
    nbrs = graph.neighbors(current)
    if not nbrs:
        raise ValueError(f"node {current!r} has no neighbors")
    scores = {}
    for w, weight in sorted(nbrs.items()):
        if prev is None:
            scores[w] = weight
        elif w == prev:
            scores[w] = weight / p
        elif graph.has_edge(w, prev):
            scores[w] = weight
        else:
            scores[w] = weight / q
    total = sum(scores.values())
    return {w: s / total for w, s in scores.items()}


def _single_walk(start, graph, config, rng) -> list[str]:
    walk = [start]
    prev = None
    while len(walk) < config.walk_length:
        current = walk[-1]
        nbrs = graph.neighbors(current)
        if not nbrs:
            break
        probs = transition_probs(prev, current, graph, config.p, config.q)
        candidates = list(probs)
        nxt = candidates[rng.choice(len(candidates), p=np.fromiter(probs.values(), float))]
        prev = current
        walk.append(nxt)
    return walk


def generate_walks(graph: UserGraph, config: WalkConfig) -> list[list[str]]:
    """``walks_per_node`` biased walks from every non-isolated node.

    Each (round, node) pair gets its own generator spawned from the seed,
    so output is reproducible and independent of evaluation order.
    """
    starts = sorted(n for n in graph.nodes if graph.neighbors(n))
    seeds = np.random.SeedSequence(config.seed).spawn(
        config.walks_per_node * len(starts)
    )
    walks = []
    k = 0
    for _ in range(config.walks_per_node):
        for node in starts:
            walks.append(_single_walk(node, graph, config, np.random.default_rng(seeds[k])))
            k += 1
    return walks


@dataclass
class NodeEmbeddings:
    ids: list[str]
    matrix: np.ndarray
    isolated: set[str] = field(default_factory=set)

    def __post_init__(self):
        self._row = {uid: i for i, uid in enumerate(self.ids)}

    def vector(self, user_id: str) -> np.ndarray:
        return self.matrix[self._row[user_id]]

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._row


def walk_pairs(walks: list[list[str]], node_index: dict[str, int], window: int) -> np.ndarray:
    """Skip-gram (center, context) id pairs within ``window`` of each position."""
    pairs = []
    for walk in walks:
        ids = [node_index[n] for n in walk]
        for i, center in enumerate(ids):
            lo = max(0, i - window)
            hi = min(len(ids), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    pairs.append((center, ids[j]))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def train_node2vec(
    graph: UserGraph, walks: list[list[str]], config: SgnsConfig
) -> NodeEmbeddings:
    """Embed graph nodes from walk co-occurrences; isolated nodes get zeros."""
    ids = sorted(graph.nodes)
    node_index = {uid: i for i, uid in enumerate(ids)}
    pairs = walk_pairs(walks, node_index, config.window)
    w_in, _ = train_sgns(pairs, len(ids), config)
    isolated = graph.isolated_nodes()
    for uid in isolated:
        w_in[node_index[uid]] = 0.0
    return NodeEmbeddings(ids=ids, matrix=w_in, isolated=isolated)


def save_graph(graph: UserGraph, edges_path: str | Path, nodes_path: str | Path) -> None:
    """Edge-list text (``u<TAB>v<TAB>weight``) plus a full node listing."""
    with open(edges_path, "w", encoding="utf-8") as handle:
        for u in sorted(graph.adjacency):
            for v in sorted(graph.adjacency[u]):
                if u < v:
                    handle.write(f"{u}\t{v}\t{graph.adjacency[u][v]:g}\n")
    with open(nodes_path, "w", encoding="utf-8") as handle:
        for n in sorted(graph.nodes):
            handle.write(n + "\n")


def load_graph(
    edges_path: str | Path, nodes_path: str | Path, celebrity_threshold: int = 0
) -> UserGraph:
    adjacency: dict[str, dict[str, float]] = defaultdict(dict)
    nodes = set()
    with open(nodes_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                nodes.add(line)
    with open(edges_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            u, v, w = line.split("\t")
            adjacency[u][v] = float(w)
            adjacency[v][u] = float(w)
            nodes.update((u, v))
    graph = UserGraph(
        nodes=nodes,
        adjacency=dict(adjacency),
        celebrity_ids=set(),
        celebrity_threshold=celebrity_threshold,
    )
    graph.validate()
    return graph
