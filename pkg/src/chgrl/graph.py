"""Typed heterogeneous graph for patient/disease comorbidity networks.

Two node types (patient, disease), relation-keyed adjacency, an incomplete
patient feature matrix with an explicit missing-value mask, and binary
patient labels. Graphs are immutable after construction; symmetric
relations (same src and dst type) store both edge directions so neighbor
sums never need to special-case direction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PATIENT = "patient"
DISEASE = "disease"
NODE_TYPES = (PATIENT, DISEASE)


class GraphError(ValueError):
    """Raised on malformed graph files or invariant violations."""


@dataclass(frozen=True)
class Relation:
    name: str
    src_type: str
    dst_type: str

    @property
    def symmetric(self) -> bool:
        # Same-typed relations (patient-patient, disease-disease) are undirected.
        return self.src_type == self.dst_type


# Default schema: two undirected same-type relations plus the diagnosis
# relation, stored disease -> patient so diagnoses message into patients.
REL_PP = Relation("patient_patient", PATIENT, PATIENT)
REL_PD = Relation("patient_disease", DISEASE, PATIENT)
REL_DD = Relation("disease_disease", DISEASE, DISEASE)
DEFAULT_RELATIONS = (REL_PP, REL_PD, REL_DD)


@dataclass
class HeteroGraph:
    """Validated heterogeneous graph. Treat as immutable once built.

    ``edge_pairs[r]`` holds edges as given (one row per undirected pair for
    symmetric relations); ``directed[r]`` is derived and contains both
    directions for symmetric relations.
    """

    num_patients: int
    num_diseases: int
    relations: tuple[Relation, ...]
    edge_pairs: dict[str, np.ndarray]
    patient_features: np.ndarray  # [P, K] float64, NaN where missing
    missing_mask: np.ndarray  # [P, K] bool, True = missing
    labels: np.ndarray  # [P] int64, -1 = unlabeled
    directed: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self._rel_by_name = {r.name: r for r in self.relations}
        if len(self._rel_by_name) != len(self.relations):
            raise GraphError("relation names are not unique")
        if not self.directed:
            for r in self.relations:
                self.directed[r.name] = _expand_pairs(
                    r, self.edge_pairs.get(r.name, _empty_edges())
                )
        self._validate()

    # -- lookups -----------------------------------------------------------

    def node_count(self, node_type: str) -> int:
        if node_type == PATIENT:
            return self.num_patients
        if node_type == DISEASE:
            return self.num_diseases
        raise GraphError(f"unknown node type {node_type!r}")

    def relation(self, name: str) -> Relation:
        try:
            return self._rel_by_name[name]
        except KeyError:
            raise GraphError(f"unknown relation {name!r}") from None

    def neighbors(self, relation_name: str, dst_index: int) -> np.ndarray:
        """Message sources j with a directed edge (j -> dst_index), ascending."""
        rel = self.relation(relation_name)
        if not 0 <= dst_index < self.node_count(rel.dst_type):
            raise GraphError(
                f"index {dst_index} out of range for {rel.dst_type} "
                f"under relation {relation_name!r}"
            )
        edges = self.directed[relation_name]
        src = edges[edges[:, 1] == dst_index, 0]
        return np.sort(src)

    def labeled_patients(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def feature_dim(self) -> int:
        return self.patient_features.shape[1]

    # -- validation --------------------------------------------------------

    def _validate(self):
        if self.num_patients < 0 or self.num_diseases < 0:
            raise GraphError("negative node count")
        if self.patient_features.shape != (self.num_patients, self.missing_mask.shape[1]):
            raise GraphError("feature matrix / missing mask shape mismatch")
        if self.missing_mask.shape != self.patient_features.shape:
            raise GraphError("feature matrix / missing mask shape mismatch")
        if self.labels.shape != (self.num_patients,):
            raise GraphError("label vector length does not match patient count")
        bad = ~np.isin(self.labels, (-1, 0, 1))
        if bad.any():
            raise GraphError(f"labels must be 0, 1 or -1; got {self.labels[bad][0]}")
        for r in self.relations:
            pairs = self.edge_pairs.get(r.name, _empty_edges())
            if pairs.ndim != 2 or pairs.shape[1] != 2:
                raise GraphError(f"edge array for {r.name!r} must have shape [m, 2]")
            ns, nd = self.node_count(r.src_type), self.node_count(r.dst_type)
            for col, n, side in ((0, ns, "src"), (1, nd, "dst")):
                vals = pairs[:, col]
                if vals.size and (vals.min() < 0 or vals.max() >= n):
                    offender = vals[(vals < 0) | (vals >= n)][0]
                    raise GraphError(
                        f"dangling {side} reference {offender} in relation "
                        f"{r.name!r} ({r.src_type}->{r.dst_type}, "
                        f"{side} node count {n})"
                    )
            seen = set()
            for a, b in pairs:
                key = _edge_key(r, int(a), int(b))
                if key in seen:
                    raise GraphError(
                        f"duplicate edge ({a},{b}) in relation {r.name!r}"
                    )
                seen.add(key)


def _empty_edges() -> np.ndarray:
    return np.zeros((0, 2), dtype=np.int64)


def _edge_key(rel: Relation, a: int, b: int):
    # Symmetric relations treat (a,b) and (b,a) as the same edge.
    return (min(a, b), max(a, b)) if rel.symmetric else (a, b)


def _expand_pairs(rel: Relation, pairs: np.ndarray) -> np.ndarray:
    if not rel.symmetric or pairs.size == 0:
        return pairs.copy()
    rev = pairs[pairs[:, 0] != pairs[:, 1]][:, ::-1]
    return np.concatenate([pairs, rev], axis=0)


def make_graph(
    num_patients: int,
    num_diseases: int,
    edge_pairs: dict[str, np.ndarray | list],
    relations: tuple[Relation, ...] = DEFAULT_RELATIONS,
    patient_features: np.ndarray | None = None,
    missing_mask: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    feature_dim: int = 0,
) -> HeteroGraph:
    """Build a validated graph; symmetric relations take one row per pair."""
    known = {r.name for r in relations}
    for name in edge_pairs:
        if name not in known:
            raise GraphError(f"unknown relation {name!r}")
    pairs = {
        name: np.asarray(arr, dtype=np.int64).reshape(-1, 2)
        for name, arr in edge_pairs.items()
    }
    if patient_features is None:
        patient_features = np.zeros((num_patients, feature_dim))
    patient_features = np.asarray(patient_features, dtype=np.float64)
    if missing_mask is None:
        missing_mask = np.isnan(patient_features)
    missing_mask = np.asarray(missing_mask, dtype=bool)
    if labels is None:
        labels = np.full(num_patients, -1, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    return HeteroGraph(
        num_patients=num_patients,
        num_diseases=num_diseases,
        relations=tuple(relations),
        edge_pairs=pairs,
        patient_features=patient_features,
        missing_mask=missing_mask,
        labels=labels,
    )


def graphs_equal(a: HeteroGraph, b: HeteroGraph) -> bool:
    """Exact structural equality, including the missing mask."""
    if (a.num_patients, a.num_diseases) != (b.num_patients, b.num_diseases):
        return False
    if a.relations != b.relations:
        return False
    for r in a.relations:
        if not np.array_equal(
            a.edge_pairs.get(r.name, _empty_edges()),
            b.edge_pairs.get(r.name, _empty_edges()),
        ):
            return False
    if not np.array_equal(a.missing_mask, b.missing_mask):
        return False
    known = ~a.missing_mask
    if not np.array_equal(a.patient_features[known], b.patient_features[known]):
        return False
    return np.array_equal(a.labels, b.labels)


# -- CSV serialization -------------------------------------------------------
#
# nodes.csv     type,index
# edges.csv     relation,src_type,src_index,dst_type,dst_index
# features.csv  patient_index,f0,...,f{K-1}   (empty field = missing)
# labels.csv    patient_index,label           (absent row = unlabeled)

NODES_FILE = "nodes.csv"
EDGES_FILE = "edges.csv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"


def save_graph(g: HeteroGraph, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / NODES_FILE, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["type", "index"])
            for i in range(g.num_patients):
                w.writerow([PATIENT, i])
            for i in range(g.num_diseases):
                w.writerow([DISEASE, i])
        with open(out_dir / EDGES_FILE, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["relation", "src_type", "src_index", "dst_type", "dst_index"])
            for r in g.relations:
                for a, b in g.edge_pairs.get(r.name, _empty_edges()):
                    w.writerow([r.name, r.src_type, a, r.dst_type, b])
        with open(out_dir / FEATURES_FILE, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["patient_index"] + [f"f{k}" for k in range(g.feature_dim)])
            for i in range(g.num_patients):
                row = [i]
                for k in range(g.feature_dim):
                    row.append("" if g.missing_mask[i, k] else repr(g.patient_features[i, k]))
                w.writerow(row)
        with open(out_dir / LABELS_FILE, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["patient_index", "label"])
            for i in range(g.num_patients):
                if g.labels[i] >= 0:
                    w.writerow([i, g.labels[i]])
    except OSError as e:
        raise GraphError(f"failed writing graph files under {out_dir}: {e}") from e


def write_feature_matrix(path: str | Path, values: np.ndarray) -> None:
    """Write a complete (no missing cells) feature matrix in features.csv format."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["patient_index"] + [f"f{k}" for k in range(values.shape[1])])
        for i, row in enumerate(values):
            w.writerow([i] + [repr(v) for v in row])


def read_feature_matrix(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a features.csv-format file; returns (values, missing_mask)."""
    path = Path(path)
    rows = _read_rows(path)
    if not rows:
        raise GraphError(f"{path}: missing header row")
    header = rows[0]
    if header[:1] != ["patient_index"]:
        raise GraphError(f"{path}:1: expected header starting with patient_index")
    dim = len(header) - 1
    body = rows[1:]
    values = np.full((len(body), dim), np.nan)
    mask = np.ones((len(body), dim), dtype=bool)
    seen = set()
    for ln, row in enumerate(body, start=2):
        if len(row) != dim + 1:
            raise GraphError(f"{path}:{ln}: expected {dim + 1} columns, got {len(row)}")
        i = _parse_int(path, ln, 1, row[0])
        if i in seen:
            raise GraphError(f"{path}:{ln}: duplicate patient_index {i}")
        seen.add(i)
        if not 0 <= i < len(body):
            raise GraphError(f"{path}:{ln}: patient_index {i} out of range")
        for k, cell in enumerate(row[1:]):
            if cell == "":
                continue
            values[i, k] = _parse_float(path, ln, k + 2, cell)
            mask[i, k] = False
    return values, mask


def load_graph(
    node_file: str | Path,
    edge_file: str | Path,
    feature_file: str | Path,
    label_file: str | Path,
    relations: tuple[Relation, ...] = DEFAULT_RELATIONS,
) -> HeteroGraph:
    node_file, edge_file = Path(node_file), Path(edge_file)
    feature_file, label_file = Path(feature_file), Path(label_file)

    counts = {t: 0 for t in NODE_TYPES}
    indices = {t: [] for t in NODE_TYPES}
    for ln, row in _body_rows(node_file, ["type", "index"]):
        t = row[0]
        if t not in NODE_TYPES:
            raise GraphError(f"{node_file}:{ln}: unknown node type {t!r} (column 1)")
        indices[t].append(_parse_int(node_file, ln, 2, row[1]))
        counts[t] += 1
    for t in NODE_TYPES:
        if sorted(indices[t]) != list(range(counts[t])):
            raise GraphError(
                f"{node_file}: {t} indices must be exactly 0..{counts[t] - 1}"
            )

    rel_by_name = {r.name: r for r in relations}
    pairs: dict[str, list] = {r.name: [] for r in relations}
    header = ["relation", "src_type", "src_index", "dst_type", "dst_index"]
    for ln, row in _body_rows(edge_file, header):
        name, src_t, src_s, dst_t, dst_s = row
        rel = rel_by_name.get(name)
        if rel is None:
            raise GraphError(f"{edge_file}:{ln}: unknown relation {name!r} (column 1)")
        if (src_t, dst_t) != (rel.src_type, rel.dst_type):
            raise GraphError(
                f"{edge_file}:{ln}: relation {name!r} expects "
                f"{rel.src_type}->{rel.dst_type}, got {src_t}->{dst_t}"
            )
        a = _parse_int(edge_file, ln, 3, src_s)
        b = _parse_int(edge_file, ln, 5, dst_s)
        for idx, t, side in ((a, src_t, "src"), (b, dst_t, "dst")):
            if not 0 <= idx < counts[t]:
                raise GraphError(
                    f"{edge_file}:{ln}: edge ({a},{b}) under {name!r} has "
                    f"dangling {side} reference {idx} ({t} count {counts[t]})"
                )
        pairs[name].append((a, b))

    values, mask = read_feature_matrix(feature_file)
    if values.shape[0] != counts[PATIENT]:
        raise GraphError(
            f"{feature_file}: {values.shape[0]} feature rows for "
            f"{counts[PATIENT]} patients"
        )

    labels = np.full(counts[PATIENT], -1, dtype=np.int64)
    for ln, row in _body_rows(label_file, ["patient_index", "label"]):
        i = _parse_int(label_file, ln, 1, row[0])
        y = _parse_int(label_file, ln, 2, row[1])
        if not 0 <= i < counts[PATIENT]:
            raise GraphError(f"{label_file}:{ln}: patient_index {i} out of range")
        if y not in (0, 1):
            raise GraphError(f"{label_file}:{ln}: label must be 0 or 1, got {y}")
        labels[i] = y

    return make_graph(
        num_patients=counts[PATIENT],
        num_diseases=counts[DISEASE],
        edge_pairs={n: np.asarray(p, dtype=np.int64).reshape(-1, 2) for n, p in pairs.items()},
        relations=tuple(relations),
        patient_features=values,
        missing_mask=mask,
        labels=labels,
    )


def load_graph_dir(data_dir: str | Path, relations=DEFAULT_RELATIONS) -> HeteroGraph:
    d = Path(data_dir)
    for name in (NODES_FILE, EDGES_FILE, FEATURES_FILE, LABELS_FILE):
        if not (d / name).exists():
            raise GraphError(f"missing graph file {d / name}")
    return load_graph(
        d / NODES_FILE, d / EDGES_FILE, d / FEATURES_FILE, d / LABELS_FILE,
        relations=relations,
    )


def _read_rows(path: Path) -> list[list[str]]:
    try:
        with open(path, newline="") as f:
            return list(csv.reader(f))
    except OSError as e:
        raise GraphError(f"cannot read {path}: {e}") from e


def _body_rows(path: Path, header: list[str]):
    rows = _read_rows(path)
    if not rows or rows[0] != header:
        raise GraphError(f"{path}:1: expected header {','.join(header)}")
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise GraphError(
                f"{path}:{ln}: expected {len(header)} columns, got {len(row)}"
            )
        yield ln, row


def _parse_int(path, ln, col, s):
    try:
        return int(s)
    except ValueError:
        raise GraphError(f"{path}:{ln}: column {col}: not an integer: {s!r}") from None


def _parse_float(path, ln, col, s):
    try:
        return float(s)
    except ValueError:
        raise GraphError(f"{path}:{ln}: column {col}: not a number: {s!r}") from None
