import numpy as np
import pytest

from mvgeo.corpus import Tweet, User, build_corpus
from mvgeo.graph import (
    UserGraph,
    WalkConfig,
    _single_walk,
    build_mention_graph,
    generate_walks,
    load_graph,
    save_graph,
    train_node2vec,
    transition_probs,
)
from mvgeo.sgns import SgnsConfig


def corpus_from_mentions(mentions):
    users = []
    for uid, handles in mentions.items():
        text = " ".join(f"@{h}" for h in handles) if handles else "quiet day"
        users.append(User(uid, 0.0, 0.0, [Tweet(text)], "train"))
    return build_corpus(users)


def graph_from_edges(edges, extra_nodes=()):
    adjacency = {}
    nodes = set(extra_nodes)
    for u, v, w in edges:
        adjacency.setdefault(u, {})[v] = float(w)
        adjacency.setdefault(v, {})[u] = float(w)
        nodes.update((u, v))
    return UserGraph(nodes, adjacency, set(), 0)


class TestBuildMentionGraph:
    def test_direct_and_co_mention_edges(self):
        # u1 mentions u2 directly; u1 and u3 both mention an outsider.
        corpus = corpus_from_mentions({"u1": ["u2", "ext"], "u2": [], "u3": ["ext"]})
        graph = build_mention_graph(corpus, 5)
        assert graph.neighbors("u1")["u2"] == 1
        assert graph.neighbors("u1")["u3"] == 2
        assert "u3" not in graph.neighbors("u2")

    def test_user_mentioning_nobody_is_isolated(self):
        corpus = corpus_from_mentions({"u1": [], "u2": ["u1"]})
        graph = build_mention_graph(corpus, 5)
        corpus2 = corpus_from_mentions({"u1": [], "u2": []})
        graph2 = build_mention_graph(corpus2, 5)
        assert graph2.isolated_nodes() == {"u1", "u2"}
        assert graph.isolated_nodes() == set()

    def test_self_mentions_ignored(self):
        corpus = corpus_from_mentions({"u1": ["u1", "u1"], "u2": []})
        graph = build_mention_graph(corpus, 5)
        assert graph.edge_count() == 0

    def test_repeated_mentions_accumulate_weight(self):
        corpus = corpus_from_mentions({"u1": ["u2", "u2", "u2"], "u2": ["u1"]})
        graph = build_mention_graph(corpus, 5)
        assert graph.neighbors("u1")["u2"] == 4

    def test_co_mention_weights_sum_across_handles(self):
        corpus = corpus_from_mentions(
            {"u1": ["extA", "extA", "extB"], "u2": ["extA", "extB", "extB"]}
        )
        graph = build_mention_graph(corpus, 5)
        # extA contributes 2+1, extB contributes 1+2.
        assert graph.neighbors("u1")["u2"] == 6

    def test_external_celebrity_pruned_before_pair_expansion(self):
        mentions = {f"u{i}": ["star"] for i in range(4)}
        graph = build_mention_graph(corpus_from_mentions(mentions), 3)
        assert graph.edge_count() == 0
        assert "star" in graph.celebrity_ids
        # Same handle under a looser threshold creates the full clique.
        graph2 = build_mention_graph(corpus_from_mentions(mentions), 4)
        assert graph2.edge_count() == 6

    def test_internal_celebrity_loses_edges_but_keeps_node(self):
        mentions = {f"u{i}": ["hub"] for i in range(1, 5)}
        mentions["hub"] = []
        graph = build_mention_graph(corpus_from_mentions(mentions), 3)
        assert "hub" in graph.celebrity_ids
        assert "hub" in graph.nodes
        assert graph.degree("hub") == 0
        for cls in graph.adjacency.values():
            assert "hub" not in cls

    def test_adjacency_is_symmetric_and_positive(self):
        corpus = corpus_from_mentions(
            {"u1": ["u2", "u3"], "u2": ["u3"], "u3": [], "u4": ["ext"], "u5": ["ext"]}
        )
        graph = build_mention_graph(corpus, 10)
        graph.validate()
        for u, nbrs in graph.adjacency.items():
            for v, w in nbrs.items():
                assert graph.adjacency[v][u] == w
                assert w >= 1

    def test_edge_list_round_trip(self, tmp_path):
        corpus = corpus_from_mentions({"u1": ["u2"], "u2": ["u3", "u3"], "u3": [], "u4": []})
        graph = build_mention_graph(corpus, 5)
        save_graph(graph, tmp_path / "g.edges", tmp_path / "g.nodes")
        again = load_graph(tmp_path / "g.edges", tmp_path / "g.nodes")
        assert again.nodes == graph.nodes
        assert again.adjacency == graph.adjacency


class TestTransitionProbs:
    def test_unit_weights_p1_q1_is_uniform(self):
        graph = graph_from_edges([("v", "a", 1), ("v", "b", 1), ("v", "c", 1), ("a", "b", 1)])
        probs = transition_probs("a", "v", graph, 1.0, 1.0)
        assert probs == pytest.approx({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3})

    def test_triangle_plus_pendant_hand_case(self):
        graph = graph_from_edges(
            [("u", "v", 1), ("v", "w", 1), ("u", "w", 1), ("v", "x", 1)]
        )
        probs = transition_probs("u", "v", graph, 2.0, 0.5)
        assert probs["u"] == pytest.approx(1 / 7)
        assert probs["w"] == pytest.approx(2 / 7)
        assert probs["x"] == pytest.approx(4 / 7)

    def test_first_step_is_weight_proportional(self):
        graph = graph_from_edges([("v", "w", 3), ("v", "x", 1)])
        probs = transition_probs(None, "v", graph, 2.0, 0.5)
        assert probs == pytest.approx({"w": 0.75, "x": 0.25})

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        edges = [(f"n{i}", f"n{j}", int(rng.integers(1, 9)))
                 for i in range(8) for j in range(i + 1, 8) if rng.random() < 0.5]
        graph = graph_from_edges(edges)
        for node in graph.adjacency:
            for prev in [None] + list(graph.neighbors(node)):
                probs = transition_probs(prev, node, graph, 0.7, 1.8)
                assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)
                assert all(p >= 0 for p in probs.values())

    def test_p_q_one_equals_weight_proportional_exactly(self):
        graph = graph_from_edges([("v", "a", 5), ("v", "b", 2), ("a", "b", 1)])
        biased = transition_probs("a", "v", graph, 1.0, 1.0)
        plain = transition_probs(None, "v", graph, 1.0, 1.0)
        assert biased == plain


class TestWalks:
    def test_isolated_node_emits_no_walks(self):
        graph = graph_from_edges([("a", "b", 1)], extra_nodes=["loner"])
        walks = generate_walks(graph, WalkConfig(walk_length=4, walks_per_node=2, seed=0))
        assert len(walks) == 4
        assert all("loner" not in walk for walk in walks)

    def test_path_graph_alternates_endpoints(self):
        graph = graph_from_edges([("a", "b", 1)])
        walks = generate_walks(graph, WalkConfig(walk_length=3, walks_per_node=1, seed=0))
        assert sorted(walks) == [["a", "b", "a"], ["b", "a", "b"]]

    def test_walks_deterministic_under_seed(self):
        rng = np.random.default_rng(4)
        edges = [(f"n{i}", f"n{j}", 1) for i in range(6) for j in range(i + 1, 6)
                 if rng.random() < 0.6]
        graph = graph_from_edges(edges)
        cfg = WalkConfig(walk_length=10, walks_per_node=3, seed=42)
        assert generate_walks(graph, cfg) == generate_walks(graph, cfg)

    def test_star_graph_leaf_frequencies_uniform(self):
        """Chi-square at 95% (df=3, critical 7.815) on 20k center steps."""
        graph = graph_from_edges([("c", f"leaf{i}", 1) for i in range(4)])
        rng = np.random.default_rng(8)
        counts = {f"leaf{i}": 0 for i in range(4)}
        n = 20_000
        for _ in range(n):
            walk = _single_walk("c", graph, WalkConfig(walk_length=2, walks_per_node=1), rng)
            counts[walk[1]] += 1
        expected = n / 4
        chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
        assert chi2 < 7.815

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WalkConfig(walk_length=1)
        with pytest.raises(ValueError):
            WalkConfig(p=0.0)


class TestNode2vec:
    def cosine_matrix(self, emb):
        m = emb.matrix / np.maximum(np.linalg.norm(emb.matrix, axis=1, keepdims=True), 1e-12)
        return m @ m.T

    def test_barbell_communities_separate(self):
        edges = []
        for base in (0, 10):
            edges += [(f"n{base + i:02d}", f"n{base + j:02d}", 1)
                      for i in range(10) for j in range(i + 1, 10)]
        edges.append(("n00", "n10", 1))
        graph = graph_from_edges(edges)
        walks = generate_walks(graph, WalkConfig(walk_length=20, walks_per_node=5, seed=1))
        emb = train_node2vec(graph, walks, SgnsConfig(
            embedding_dim=16, window=5, epochs=3, seed=2, learning_rate=0.05, batch_size=256))
        sims = self.cosine_matrix(emb)
        group = np.array([0 if int(uid[1:]) < 10 else 1 for uid in emb.ids])
        same = group[:, None] == group[None, :]
        off_diag = ~np.eye(len(group), dtype=bool)
        assert sims[same & off_diag].mean() > sims[~same].mean()

    def test_single_edge_endpoints_most_similar(self):
        graph = graph_from_edges([("a", "b", 1)], extra_nodes=["c", "d"])
        walks = generate_walks(graph, WalkConfig(walk_length=10, walks_per_node=5, seed=3))
        emb = train_node2vec(graph, walks, SgnsConfig(
            embedding_dim=8, window=3, epochs=10, seed=4, learning_rate=0.1, batch_size=32))
        a, b = emb.vector("a"), emb.vector("b")
        cos_ab = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        # Isolated nodes are zero, so the (a, b) pair is the only nonzero similarity.
        assert cos_ab > 0
        np.testing.assert_array_equal(emb.vector("c"), np.zeros(8))

    def test_all_isolated_nodes_give_zero_table(self):
        graph = graph_from_edges([], extra_nodes=["a", "b", "c"])
        walks = generate_walks(graph, WalkConfig(walk_length=5, walks_per_node=2, seed=0))
        assert walks == []
        emb = train_node2vec(graph, walks, SgnsConfig(embedding_dim=8, epochs=2, seed=0))
        np.testing.assert_array_equal(emb.matrix, np.zeros((3, 8)))
        assert emb.isolated == {"a", "b", "c"}
