"""Strategic personas from demonstration replays.

Each winning replay is reduced to a supply-weighted unit-ratio vector, the
vectors are partitioned with k-means, and each cluster gets a strategic
objective label from the air/ground split of its centroid.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .world.catalog import ActionCatalog, load_catalog
from .world.types import Race


class TooFewReplays(ValueError):
    pass


@dataclass(frozen=True)
class CompositionVector:
    race: Race
    ratios: tuple  # one entry per unit of catalog.unit_set
    valid: bool = True

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ratios, dtype=np.float64)


def composition_vector(final_units: dict, catalog: ActionCatalog) -> CompositionVector:
    """r_i = n_i * w_i / sum_j n_j * w_j over combat units (w = supply cost).

    Workers and other units without combat strength keep a zero entry so the
    vector length is always the size of the race's unit set.
    """
    weights = []
    for u in catalog.unit_set:
        n = final_units.get(u, 0)
        if n < 0:
            raise ValueError(f"negative count for {u}")
        spec = catalog.spec_for(u)
        weights.append(n * spec.supply_cost if spec.strength > 0 else 0)
    total = sum(weights)
    if total <= 0:
        return CompositionVector(catalog.race, tuple(0.0 for _ in weights), valid=False)
    return CompositionVector(catalog.race, tuple(w / total for w in weights))


# ---------------------------------------------------------------- k-means

@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    iterations: int
    wcss_history: list


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _kernels.sq_distances(points, points[chosen[0]])
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # every point coincides with a chosen centre: take the next unused index
            nxt = next(i for i in range(n) if i not in chosen)
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _kernels.sq_distances(points, points[nxt]))
    return points[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Points are put in a canonical (lexicographic) order first, so the
    partition does not depend on input order. Nearest-centroid ties go to the
    lowest centroid index; a centroid that loses all members stays put.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = len(pts)
    if k < 1 or n < k:
        raise TooFewReplays(f"need at least k={k} vectors, got {n}")
    order = np.lexsort(pts.T[::-1]) if pts.shape[1] else np.arange(n)
    canon = pts[order]
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(canon, k, rng)
    labels = None
    history = []
    iterations = 0
    for _ in range(max_iter):
        new_labels, _ = _kernels.assign(canon, centroids)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        iterations += 1
        for c in range(k):
            members = canon[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        history.append(float(((canon - centroids[labels]) ** 2).sum()))
    out = np.empty(n, dtype=np.int64)
    out[order] = labels
    return KMeansResult(out, centroids, iterations, history)


def adjusted_rand_index(a: Sequence, b: Sequence) -> float:
    if len(a) != len(b):
        raise ValueError("label sequences differ in length")
    n = len(a)
    if n < 2:
        return 1.0
    pairs = {}
    for x, y in zip(a, b):
        pairs[(x, y)] = pairs.get((x, y), 0) + 1
    rows, cols = {}, {}
    for (x, y), c in pairs.items():
        rows[x] = rows.get(x, 0) + c
        cols[y] = cols.get(y, 0) + c
    index = sum(comb(c, 2) for c in pairs.values())
    sum_r = sum(comb(c, 2) for c in rows.values())
    sum_c = sum(comb(c, 2) for c in cols.values())
    expected = sum_r * sum_c / comb(n, 2)
    max_index = (sum_r + sum_c) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


# ---------------------------------------------------------------- model

@dataclass
class ClusterModel:
    race: Race
    k: int
    units: tuple
    centroids: np.ndarray
    assignments: dict  # replay key -> cluster index
    seed: int
    iterations_used: int
    wcss_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "hima-clusters", "version": 1, "race": self.race.value, "k": self.k,
            "units": list(self.units), "centroids": self.centroids.tolist(),
            "assignments": dict(sorted(self.assignments.items())), "seed": self.seed,
            "iterations_used": self.iterations_used, "wcss_history": self.wcss_history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        if d.get("format") != "hima-clusters":
            raise ValueError("not a cluster model document")
        return cls(Race.parse(d["race"]), int(d["k"]), tuple(d["units"]), np.asarray(d["centroids"], dtype=float),
                   {k: int(v) for k, v in d["assignments"].items()}, int(d["seed"]), int(d["iterations_used"]),
                   list(d.get("wcss_history", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def predict(self, vector: CompositionVector) -> int:
        labels, _ = _kernels.assign(vector.as_array()[None, :], self.centroids)
        return int(labels[0])


def replay_vectors(logs, catalog: ActionCatalog, winners_only: bool = True) -> dict:
    """Valid composition vectors keyed ``"<replay id>:<player>"`` for every
    side of ``catalog``'s race (only the winner when ``winners_only``)."""
    out = {}
    for log in logs:
        winner = log.meta.get("winner")
        for player, race in enumerate(log.meta["races"]):
            if Race.parse(race) is not catalog.race:
                continue
            if winners_only and winner != player:
                continue
            vec = composition_vector(log.final_units(player), catalog)
            if vec.valid:
                out[f"{log.replay_id}:{player}"] = vec
    return out


def cluster_vectors(vectors: dict, catalog: ActionCatalog, k: int = 3, seed: int = 0,
                    max_iter: int = 100) -> ClusterModel:
    keys = sorted(vectors)
    if len(keys) < k:
        raise TooFewReplays(f"{len(keys)} valid vectors for k={k}")
    pts = np.array([vectors[key].ratios for key in keys], dtype=np.float64)
    res = kmeans(pts, k, seed, max_iter)
    return ClusterModel(catalog.race, k, catalog.unit_set, res.centroids,
                        {key: int(lbl) for key, lbl in zip(keys, res.labels)}, seed, res.iterations,
                        res.wcss_history)


def cluster_replays(logs, catalog: Optional[ActionCatalog] = None, k: int = 3, seed: int = 0,
                    winners_only: bool = True, max_iter: int = 100, race=None) -> ClusterModel:
    catalog = catalog or load_catalog(race)
    return cluster_vectors(replay_vectors(logs, catalog, winners_only), catalog, k, seed, max_iter)


# ---------------------------------------------------------------- objectives

class StrategicLabel(enum.Enum):
    GroundSupportFocus = "GroundSupportFocus"
    AirFocus = "AirFocus"
    GroundAirHybrid = "GroundAirHybrid"


PROMPTS = {
    StrategicLabel.GroundSupportFocus: (
        "Win with a ground army backed by support units. Prioritize ground production buildings, "
        "ground weapon and armor upgrades, and steady reinforcement of a strong front line."
    ),
    StrategicLabel.AirFocus: (
        "Win through air superiority. Move to air production early, invest in air upgrades, and "
        "grow a fleet of capital ships while holding the ground with a light defense."
    ),
    StrategicLabel.GroundAirHybrid: (
        "Win with a mixed army. Keep ground and air production both running, research upgrades "
        "for each, and balance the composition against what the opponent fields."
    ),
}


@dataclass(frozen=True)
class StrategicObjective:
    cluster: int
    label: StrategicLabel
    prompt_text: str
    air_share: float = 0.0
    ground_share: float = 0.0


def label_for(ratios, catalog: ActionCatalog, threshold: float = 0.6) -> tuple:
    air = sum(r for u, r in zip(catalog.unit_set, ratios) if catalog.spec_for(u).domain == "air")
    ground = sum(r for u, r in zip(catalog.unit_set, ratios) if catalog.spec_for(u).domain == "ground")
    if air >= threshold:
        label = StrategicLabel.AirFocus
    elif ground >= threshold:
        label = StrategicLabel.GroundSupportFocus
    else:
        label = StrategicLabel.GroundAirHybrid
    return label, air, ground


def assign_strategic_objective(model: ClusterModel, catalog: Optional[ActionCatalog] = None,
                               threshold: float = 0.6) -> list:
    catalog = catalog or load_catalog(model.race)
    out = []
    for idx, centroid in enumerate(model.centroids):
        label, air, ground = label_for(centroid, catalog, threshold)
        out.append(StrategicObjective(idx, label, PROMPTS[label], air, ground))
    return out


# ---------------------------------------------------------------- criteria

def _unit_ratio(log, player: int, catalog: ActionCatalog):
    return composition_vector(log.final_units(player), catalog)


def _not_implemented(log, player: int, catalog: ActionCatalog):
    return NotImplemented


CRITERIA = {
    "unit_ratio": _unit_ratio,
    "opening_strategy": _not_implemented,
    "advancement_tempo": _not_implemented,
}


def featurize(criterion: str, log, player: int, catalog: ActionCatalog):
    try:
        fn = CRITERIA[criterion]
    except KeyError:
        raise KeyError(f"unknown clustering criterion {criterion!r}; known: {sorted(CRITERIA)}") from None
    return fn(log, player, catalog)
