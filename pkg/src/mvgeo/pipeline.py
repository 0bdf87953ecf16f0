"""End-to-end pipeline: ingest -> featurize -> partition -> train -> evaluate.

Each stage writes its artifacts under the output directory and records a
hash of everything that determines it (its config slice plus upstream
stage hashes) in ``manifest.json``.  Re-running with an unchanged config
is a cache hit; changing, say, only the partition parameters reruns just
partition/train/evaluate.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import metrics, storage
from .corpus import (
    Corpus,
    PreprocessConfig,
    load_corpus,
    load_stopwords,
    save_corpus,
    timestamp_feature,
)
from .graph import WalkConfig, build_mention_graph, generate_walks, save_graph, train_node2vec
from .model import BranchSpec, Model, ModelSpec, TrainConfig, forward, load_model, save_model, train
from .partition import (
    KDTREE,
    KMEANS,
    POLYGONS,
    S2_ADAPTIVE,
    assign_class,
    build_adaptive_grid,
    build_kdtree_partition,
    build_kmeans_partition,
    build_polygon_partition,
    load_partition,
    load_polygons_geojson,
    save_partition,
)
from .sgns import SgnsConfig
from .synth import SynthSpec, generate_synthetic_corpus
from .text import build_vocabulary, infer_doc_vector, stack_sparse, tfidf_vector, train_pvdbow

STAGES = ("ingest", "featurize", "partition", "train", "evaluate")

VIEWS = ("tfidf", "doc2vec", "node2vec", "timestamp")

DEFAULTS: dict = {
    "seed": 0,
    "corpus": {"path": None, "format": "jsonl"},
    "preprocessing": {"remove_stopwords": True, "stem": False, "stopwords_path": None},
    "features": {
        "min_df": 10,
        "celebrity_threshold": 5,
        "doc2vec": {
            "embedding_dim": 300, "window": 10, "negative_samples": 5,
            "epochs": 20, "learning_rate": 0.025, "batch_size": 1024,
        },
        "node2vec": {
            "embedding_dim": 300, "window": 5, "negative_samples": 5,
            "epochs": 5, "learning_rate": 0.025, "batch_size": 1024,
        },
        "walks": {"walk_length": 80, "walks_per_node": 10, "p": 1.0, "q": 1.0},
    },
    "partition": {
        "scheme": S2_ADAPTIVE, "l_min": 6, "t_max": 500,
        "leaf_threshold": 300, "k": 32, "polygons_path": None,
    },
    "model": {
        "views": list(VIEWS),
        "hidden": {"tfidf": [100], "doc2vec": [300], "node2vec": [300], "timestamp": [100]},
        "post_hidden": [],
    },
    "training": {
        "learning_rate": 0.0001, "l2_weight": 0.1, "patience": 10,
        "anneal_factor": 0.5, "batch_size": 128, "max_epochs": 1000,
    },
    "synth": {
        "num_clusters": 10, "users_per_cluster": 100, "dispersion_km": 30.0,
        "vocab_per_cluster": 50, "shared_vocab_size": 50, "overlap_fraction": 0.0,
        "tweets_per_user": 10, "tokens_per_tweet": 8,
        "intra_edge_prob": 0.08, "inter_edge_prob": 0.001, "hour_jitter": 0.5,
    },
}

# Published parameter settings per dataset, one preset each, plus the
# desk-scale synthetic preset used by the acceptance run.
PRESETS: dict[str, dict] = {
    "geotext": {
        "features": {"min_df": 40, "celebrity_threshold": 5},
        "partition": {"scheme": S2_ADAPTIVE, "l_min": 6, "t_max": 500},
        "training": {"patience": 10},
    },
    "utgeo2011": {
        "features": {"min_df": 500, "celebrity_threshold": 15},
        "partition": {"scheme": S2_ADAPTIVE, "l_min": 6, "t_max": 10000},
        "training": {"patience": 6},
    },
    "twitterworld": {
        "features": {"min_df": 400, "celebrity_threshold": 5},
        "partition": {"scheme": S2_ADAPTIVE, "l_min": 7, "t_max": 50000},
        "model": {
            "views": ["tfidf", "doc2vec", "node2vec"],
            "hidden": {"tfidf": [100], "doc2vec": [300], "node2vec": [300]},
        },
        "training": {"patience": 6},
    },
    "synthetic": {
        "features": {
            "min_df": 2,
            "celebrity_threshold": 50,
            "doc2vec": {"embedding_dim": 48, "epochs": 12, "batch_size": 512,
                        "learning_rate": 0.05},
            "node2vec": {"embedding_dim": 48, "epochs": 4, "batch_size": 2048,
                         "learning_rate": 0.05},
            "walks": {"walk_length": 20, "walks_per_node": 5},
        },
        "partition": {"scheme": S2_ADAPTIVE, "l_min": 6, "t_max": 500},
        "model": {
            "hidden": {"tfidf": [32], "doc2vec": [32], "node2vec": [32], "timestamp": [32]},
        },
        "training": {
            "learning_rate": 0.002, "patience": 6, "batch_size": 64, "max_epochs": 150,
        },
    },
}

# Region/state classification runs use these branch widths instead of the
# coordinate-prediction defaults above.
CLASSIFICATION_HIDDEN = {"tfidf": [150], "doc2vec": [150], "node2vec": [30], "timestamp": [30]}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class PipelineConfig:
    raw: dict

    def __post_init__(self):
        for view in self.raw["model"]["views"]:
            if view not in VIEWS:
                raise ValueError(f"unknown view {view!r}; choose from {VIEWS}")
            if view not in self.raw["model"]["hidden"]:
                raise ValueError(f"view {view!r} has no hidden-size entry")

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def section(self, name: str) -> dict:
        return self.raw[name]

    def preprocess(self) -> PreprocessConfig:
        sec = self.raw["preprocessing"]
        kwargs = {"remove_stopwords": sec["remove_stopwords"], "stem": sec["stem"]}
        if sec.get("stopwords_path"):
            kwargs["stopwords"] = load_stopwords(sec["stopwords_path"])
        return PreprocessConfig(**kwargs)

    def sgns(self, which: str) -> SgnsConfig:
        sec = self.raw["features"][which]
        offset = {"doc2vec": 11, "node2vec": 13}[which]
        return SgnsConfig(seed=self.seed + offset, **sec)

    def walks(self) -> WalkConfig:
        return WalkConfig(seed=self.seed + 17, **self.raw["features"]["walks"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed + 19, **self.raw["training"])

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(seed=self.seed, **self.raw["synth"])

    def model_spec(self, input_dims: dict[str, int], num_classes: int) -> ModelSpec:
        model = self.raw["model"]
        branches = tuple(
            BranchSpec(view, input_dims[view], tuple(model["hidden"][view]))
            for view in model["views"]
        )
        return ModelSpec(branches, num_classes, tuple(model["post_hidden"]))


def load_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: dict | None = None,
) -> PipelineConfig:
    """Defaults <- preset <- config file <- explicit overrides."""
    raw = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = deep_merge(raw, PRESETS[preset])
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
        raw = deep_merge(raw, doc)
    if overrides:
        raw = deep_merge(raw, overrides)
    return PipelineConfig(raw)


def set_by_dotted_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir: str | Path):
        self.config = config
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = (
            storage.read_json(self.manifest_path)
            if self.manifest_path.exists()
            else {"stages": {}}
        )
        self._corpus: Corpus | None = None
        self.stages_run: list[str] = []

    # -- hashes ------------------------------------------------------------

    def corpus_path(self) -> Path:
        configured = self.config.raw["corpus"]["path"]
        if configured:
            return Path(configured)
        return self.out / "synthetic.jsonl"

    def stage_hash(self, stage: str) -> str:
        cfg = self.config.raw
        if stage == "synth":
            return storage.config_hash({"synth": cfg["synth"], "seed": cfg["seed"]})
        if stage == "ingest":
            corpus_file = self.corpus_path()
            return storage.config_hash({
                "corpus": {"format": cfg["corpus"]["format"],
                           "file": storage.file_hash(corpus_file)},
                "preprocessing": cfg["preprocessing"],
            })
        if stage == "featurize":
            return storage.config_hash({
                "upstream": self.stage_hash("ingest"),
                "features": cfg["features"],
                "seed": cfg["seed"],
            })
        if stage == "partition":
            return storage.config_hash({
                "upstream": self.stage_hash("ingest"),
                "partition": cfg["partition"],
                "seed": cfg["seed"],
            })
        if stage == "train":
            return storage.config_hash({
                "upstream": [self.stage_hash("featurize"), self.stage_hash("partition")],
                "model": cfg["model"],
                "training": cfg["training"],
                "seed": cfg["seed"],
            })
        if stage == "evaluate":
            return storage.config_hash({"upstream": self.stage_hash("train")})
        raise ValueError(f"unknown stage {stage!r}")

    def _cached(self, stage: str, want_hash: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        if not entry or entry.get("hash") != want_hash:
            return False
        return all((self.out / rel).exists() for rel in entry["artifacts"])

    def _record(self, stage: str, want_hash: str, artifacts: list[str], info: dict | None = None):
        self.manifest["stages"][stage] = {
            "hash": want_hash,
            "artifacts": artifacts,
            "info": info or {},
        }
        storage.write_json(self.manifest_path, self.manifest)
        self.stages_run.append(stage)

    def provenance(self, stage: str) -> dict:
        return {"config_hash": self.stage_hash(stage), "seed": self.config.seed}

    # -- shared loads ------------------------------------------------------

    def corpus(self) -> Corpus:
        if self._corpus is None:
            self._corpus = load_corpus(
                self.out / "corpus.jsonl", "jsonl", self.config.preprocess()
            )
        return self._corpus

    # -- stages ------------------------------------------------------------

    def run_stage(self, stage: str, force: bool = False) -> None:
        runner = getattr(self, f"_stage_{stage}")
        want = self.stage_hash(stage)
        if not force and self._cached(stage, want):
            return
        try:
            runner(want)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc

    def ensure(self, upto: str, force: bool = False) -> None:
        """Run stages in order through ``upto``, reusing valid caches."""
        if self.config.raw["corpus"]["path"] is None:
            self.run_stage("synth", force=force)
        for stage in STAGES[: STAGES.index(upto) + 1]:
            self.run_stage(stage, force=force)

    def _stage_synth(self, want: str) -> None:
        corpus, _ = generate_synthetic_corpus(
            self.config.synth_spec(), self.config.preprocess()
        )
        save_corpus(corpus, self.corpus_path(), "jsonl")
        self._record("synth", want, ["synthetic.jsonl"],
                     {"users": len(corpus.users), "seed": self.config.seed})

    def _stage_ingest(self, want: str) -> None:
        corpus = load_corpus(
            self.corpus_path(), self.config.raw["corpus"]["format"], self.config.preprocess()
        )
        save_corpus(corpus, self.out / "corpus.jsonl", "jsonl")
        self._corpus = corpus
        self._record("ingest", want, ["corpus.jsonl"], {"split_counts": corpus.split_counts})

    def _stage_featurize(self, want: str) -> None:
        cfg = self.config
        corpus = self.corpus()
        ids_all = sorted(corpus.users)
        train_ids = sorted(corpus.user_ids("train"))
        train_docs = [corpus.documents[uid].tokens for uid in train_ids]

        vocab = build_vocabulary(train_docs, cfg.raw["features"]["min_df"])
        num_docs = len(train_docs)
        tfidf = stack_sparse(
            [tfidf_vector(corpus.documents[uid].tokens, vocab, num_docs) for uid in ids_all]
        )
        storage.save_sparse(self.out / "tfidf.npz", tfidf)

        doc_model = train_pvdbow(train_docs, train_ids, vocab, cfg.sgns("doc2vec"))
        doc_rows = np.vstack([
            infer_doc_vector(doc_model, corpus.documents[uid].tokens, doc_id=uid)
            for uid in ids_all
        ])
        storage.save_embeddings(
            self.out / "docvec", ids_all, doc_rows,
            {"config": cfg.raw["features"]["doc2vec"], "seed": cfg.seed,
             "vocab_sha256": storage.ids_hash(vocab.terms)},
        )

        graph = build_mention_graph(corpus, cfg.raw["features"]["celebrity_threshold"])
        save_graph(graph, self.out / "graph.edges", self.out / "graph.nodes")
        walks = generate_walks(graph, cfg.walks())
        node_emb = train_node2vec(graph, walks, cfg.sgns("node2vec"))
        node_rows = np.vstack([node_emb.vector(uid) for uid in ids_all])
        storage.save_embeddings(
            self.out / "nodevec", ids_all, node_rows,
            {"config": cfg.raw["features"]["node2vec"], "seed": cfg.seed,
             "isolated": sorted(node_emb.isolated)},
        )

        time_rows = np.vstack([timestamp_feature(corpus.users[uid]) for uid in ids_all])
        storage.save_embeddings(self.out / "timefeat", ids_all, time_rows,
                                {"config": {}, "seed": cfg.seed})

        meta = {
            "ids": ids_all,
            "vocabulary": {
                "terms": vocab.terms,
                "document_frequency": vocab.document_frequency,
                "min_df": vocab.min_df,
                "num_documents": num_docs,
            },
            "dims": {
                "tfidf": len(vocab),
                "doc2vec": doc_rows.shape[1],
                "node2vec": node_rows.shape[1],
                "timestamp": 24,
            },
            "graph": {"nodes": len(graph.nodes), "edges": graph.edge_count(),
                      "celebrities": len(graph.celebrity_ids)},
            "_provenance": self.provenance("featurize"),
        }
        storage.write_json(self.out / "features.json", meta)
        self._record(
            "featurize", want,
            ["tfidf.npz", "docvec.bin", "docvec.json", "nodevec.bin", "nodevec.json",
             "timefeat.bin", "timefeat.json", "graph.edges", "graph.nodes", "features.json"],
            {"vocab_size": len(vocab), "graph_edges": graph.edge_count()},
        )

    def _stage_partition(self, want: str) -> None:
        cfg = self.config.raw["partition"]
        corpus = self.corpus()
        coords = {
            uid: corpus.users[uid].coord for uid in corpus.user_ids("train")
        }
        scheme = cfg["scheme"]
        if scheme == S2_ADAPTIVE:
            part = build_adaptive_grid(coords, cfg["l_min"], cfg["t_max"])
        elif scheme == KDTREE:
            part = build_kdtree_partition(coords, cfg["leaf_threshold"])
        elif scheme == KMEANS:
            part = build_kmeans_partition(coords, cfg["k"], seed=self.config.seed)
        elif scheme == POLYGONS:
            polygons = load_polygons_geojson(cfg["polygons_path"])
            part = build_polygon_partition(coords, polygons)
        else:
            raise ValueError(f"unknown partition scheme {scheme!r}")
        save_partition(part, self.out / "partition.json", self.provenance("partition"))
        self._record("partition", want, ["partition.json"],
                     {"scheme": scheme, "num_classes": part.num_classes})

    def _load_views(self) -> tuple[list[str], dict]:
        meta = storage.read_json(self.out / "features.json")
        ids_all = meta["ids"]
        views = {}
        wanted = self.config.raw["model"]["views"]
        if "tfidf" in wanted:
            views["tfidf"] = storage.load_sparse(self.out / "tfidf.npz")
        for name, prefix in (("doc2vec", "docvec"), ("node2vec", "nodevec"),
                             ("timestamp", "timefeat")):
            if name in wanted:
                _, matrix, _ = storage.load_embeddings(self.out / prefix)
                views[name] = matrix
        return ids_all, views

    def _split_rows(self, ids_all: list[str]) -> dict[str, np.ndarray]:
        corpus = self.corpus()
        pos = {uid: i for i, uid in enumerate(ids_all)}
        return {
            split: np.array([pos[uid] for uid in sorted(corpus.user_ids(split))], dtype=np.int64)
            for split in ("train", "dev", "test")
        }

    def _labels(self, partition, uids: list[str]) -> np.ndarray:
        corpus = self.corpus()
        member_label = partition.labels()
        out = []
        for uid in uids:
            if uid in member_label:
                out.append(member_label[uid])
            else:
                user = corpus.users[uid]
                out.append(assign_class(partition, user.latitude, user.longitude))
        return np.array(out, dtype=np.int64)

    def _stage_train(self, want: str) -> None:
        cfg = self.config
        partition = load_partition(self.out / "partition.json")
        ids_all, views = self._load_views()
        rows = self._split_rows(ids_all)
        meta = storage.read_json(self.out / "features.json")

        spec = cfg.model_spec(meta["dims"], partition.num_classes)
        train_views = {v: views[v][rows["train"]] for v in spec.views}
        dev_views = {v: views[v][rows["dev"]] for v in spec.views}
        train_ids = [ids_all[i] for i in rows["train"]]
        dev_ids = [ids_all[i] for i in rows["dev"]]
        model, log = train(
            spec,
            train_views,
            self._labels(partition, train_ids),
            dev_views,
            self._labels(partition, dev_ids),
            cfg.train_config(),
        )
        save_model(model, self.out / "model", self.provenance("train"))
        with open(self.out / "training_log.csv", "w", encoding="utf-8") as handle:
            handle.write(f"# provenance {storage.canonical_json(self.provenance('train'))}\n")
            handle.write("epoch,train_loss,dev_accuracy,lr\n")
            for row in log:
                handle.write(
                    f"{row['epoch']},{row['train_loss']!r},{row['dev_accuracy']!r},{row['lr']!r}\n"
                )
        best = max((r["dev_accuracy"] for r in log), default=0.0)
        self._record("train", want,
                     ["model.params.bin", "model.model.json", "training_log.csv"],
                     {"epochs": len(log), "best_dev_accuracy": best})

    def _stage_evaluate(self, want: str) -> None:
        corpus = self.corpus()
        partition = load_partition(self.out / "partition.json")
        model = load_model(self.out / "model")
        ids_all, views = self._load_views()
        rows = self._split_rows(ids_all)
        test_ids = [ids_all[i] for i in rows["test"]]
        test_views = {v: views[v][rows["test"]] for v in model.spec.views}

        probs = forward(model, test_views)
        predicted = np.argmax(probs, axis=1)
        centroids = {c.class_id: c.centroid for c in partition.classes}
        predicted_coords = [centroids[int(c)] for c in predicted]
        true_coords = [corpus.users[uid].coord for uid in test_ids]
        true_classes = self._labels(partition, test_ids)

        result = metrics.build_result(
            test_ids, true_classes.tolist(), predicted.tolist(), true_coords, predicted_coords
        )
        prov = self.provenance("evaluate")
        metrics.write_result_csv(result, self.out / "results.csv", prov)
        report = metrics.write_report(
            result, self.out / "report.json", prov,
            extra={"num_classes": partition.num_classes},
        )
        self._record("evaluate", want, ["results.csv", "report.json"],
                     {"report": report})


def run_pipeline(
    config: PipelineConfig, out_dir: str | Path, force: bool = False
) -> dict:
    """Run every stage, returning the final report and what actually ran."""
    pipe = Pipeline(config, out_dir)
    pipe.ensure("evaluate", force=force)
    report = storage.read_json(Path(out_dir) / "report.json")
    return {"report": report, "stages_run": pipe.stages_run}
