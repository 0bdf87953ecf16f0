"""Evaluation: classification accuracy, distance-error statistics, @161.

@161 counts predictions strictly closer than 161 km to the truth; an
error of exactly 161.0 km is a miss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sphere import haversine_km

AT_KM = 161.0


@dataclass
class GeoResult:
    user_ids: list[str]
    true_classes: list[int]
    predicted_classes: list[int]
    true_coords: list[tuple[float, float]]
    predicted_coords: list[tuple[float, float]]
    errors_km: list[float]

    @property
    def aggregates(self) -> dict:
        agg = evaluate_geo(self.predicted_coords, self.true_coords)
        agg["accuracy_pct"] = evaluate_classification(
            self.predicted_classes, self.true_classes
        )
        return agg


def evaluate_classification(predictions, truths) -> float:
    """Percentage of exactly matching labels."""
    predictions = list(predictions)
    truths = list(truths)
    if not predictions or len(predictions) != len(truths):
        raise ValueError("need equal-length non-empty prediction/truth lists")
    correct = sum(p == t for p, t in zip(predictions, truths))
    return 100.0 * correct / len(predictions)


def evaluate_geo(predicted_coords, true_coords, at_km: float = AT_KM) -> dict:
    """Mean/median distance error in km and the within-threshold percentage."""
    predicted_coords = list(predicted_coords)
    true_coords = list(true_coords)
    if not predicted_coords or len(predicted_coords) != len(true_coords):
        raise ValueError("need equal-length non-empty coordinate lists")
    errors = np.array(
        [haversine_km(p, t) for p, t in zip(predicted_coords, true_coords)]
    )
    return {
        "mean_km": float(errors.mean()),
        "median_km": float(np.median(errors)),
        "at_161_pct": float(100.0 * np.mean(errors < at_km)),
    }


def build_result(
    user_ids, true_classes, predicted_classes, true_coords, predicted_coords
) -> GeoResult:
    errors = [haversine_km(p, t) for p, t in zip(predicted_coords, true_coords)]
    return GeoResult(
        list(user_ids),
        list(true_classes),
        list(predicted_classes),
        [tuple(c) for c in true_coords],
        [tuple(c) for c in predicted_coords],
        errors,
    )


def write_result_csv(result: GeoResult, path: str | Path, provenance: dict | None = None) -> None:
    """Per-user rows; floats use repr so aggregates recompute exactly."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if provenance:
            handle.write(f"# provenance {json.dumps(provenance, sort_keys=True)}\n")
        writer = csv.writer(handle)
        writer.writerow(
            ["user_id", "true_class", "predicted_class", "true_lat", "true_lon",
             "predicted_lat", "predicted_lon", "error_km"]
        )
        for i, uid in enumerate(result.user_ids):
            writer.writerow([
                uid,
                result.true_classes[i],
                result.predicted_classes[i],
                repr(result.true_coords[i][0]),
                repr(result.true_coords[i][1]),
                repr(result.predicted_coords[i][0]),
                repr(result.predicted_coords[i][1]),
                repr(result.errors_km[i]),
            ])


def read_result_csv(path: str | Path) -> GeoResult:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(rows)
    user_ids, tc, pc, tcoord, pcoord, errs = [], [], [], [], [], []
    for row in reader:
        user_ids.append(row["user_id"])
        tc.append(int(row["true_class"]))
        pc.append(int(row["predicted_class"]))
        tcoord.append((float(row["true_lat"]), float(row["true_lon"])))
        pcoord.append((float(row["predicted_lat"]), float(row["predicted_lon"])))
        errs.append(float(row["error_km"]))
    return GeoResult(user_ids, tc, pc, tcoord, pcoord, errs)


def write_report(result: GeoResult, path: str | Path, provenance: dict | None = None, extra: dict | None = None) -> dict:
    report = {"num_users": len(result.user_ids), **result.aggregates}
    if extra:
        report.update(extra)
    if provenance:
        report["_provenance"] = provenance
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", "utf-8")
    return report


def comparison_report(named_results: dict[str, GeoResult]) -> dict:
    """Side-by-side aggregates across partitions or feature sets."""
    return {name: result.aggregates for name, result in named_results.items()}
