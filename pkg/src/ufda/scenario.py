"""Scenario construction: UMDA-Matrix parsing, realised label spaces and
synthetic feature-space domains with controllable domain/category shift.

Global class ids are integers drawn from a pool of size
``|C| + sum_m |C̄_{s_m}| + |C̄_t|``. Every source label set and the union
pseudo-label set are stored sorted ascending; a class's position in that
tuple is its local index.
"""
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.spatial.distance import pdist

from .errors import ConfigurationError, LabelAccessError

OVERLAP_POLICIES = ("empty-intersection", "nested", "random")
DATASET_MAGIC = "ufda-dataset 1"


@dataclass(frozen=True)
class UmdaMatrix:
    shared_counts: tuple  # |C_1| ... |C_M|, |C|
    unknown_counts: tuple  # |C̄_{s_1}| ... |C̄_{s_M}|, |C̄_t|

    @property
    def n_sources(self) -> int:
        return len(self.shared_counts) - 1

    def as_rows(self):
        return [list(self.shared_counts), list(self.unknown_counts)]


def parse_umda_matrix(rows) -> UmdaMatrix:
    rows = [list(r) for r in rows]
    if len(rows) != 2:
        raise ConfigurationError(f"UMDA-Matrix needs exactly 2 rows, got {len(rows)}")
    if len(rows[0]) != len(rows[1]):
        raise ConfigurationError("UMDA-Matrix rows are ragged")
    if len(rows[0]) < 2:
        raise ConfigurationError("UMDA-Matrix needs at least one source column and the target column")
    for v in rows[0] + rows[1]:
        if isinstance(v, bool) or int(v) != v:
            raise ConfigurationError(f"UMDA-Matrix entries must be integers, got {v!r}")
        if v < 0:
            raise ConfigurationError("UMDA-Matrix counts must be non-negative")
    return UmdaMatrix(tuple(int(v) for v in rows[0]), tuple(int(v) for v in rows[1]))


@dataclass(frozen=True)
class LabelSpace:
    source_sets: tuple  # C_{s_m}, one sorted tuple per source
    target_set: tuple  # C_t (evaluation only)
    pool_size: int

    @property
    def n_sources(self) -> int:
        return len(self.source_sets)

    @cached_property
    def union(self) -> tuple:
        """Ĉ_T, the pseudo-label set."""
        return tuple(sorted(set().union(*self.source_sets)))

    @property
    def n_classes(self) -> int:
        return len(self.union)

    def common(self, m: int) -> tuple:
        """C_m = C_{s_m} ∩ C_t."""
        return tuple(sorted(set(self.source_sets[m]) & set(self.target_set)))

    def source_private(self, m: int) -> tuple:
        return tuple(sorted(set(self.source_sets[m]) - set(self.target_set)))

    @property
    def shared(self) -> tuple:
        """C = ∪_m C_m."""
        return tuple(sorted(set().union(*(self.common(m) for m in range(self.n_sources)))))

    @property
    def target_unknown(self) -> tuple:
        return tuple(sorted(set(self.target_set) - set(self.shared)))

    def domain_labels(self, domain: int) -> tuple:
        """Label set of a domain; sources are ``0..M-1``, the target is ``M``."""
        if domain == self.n_sources:
            return self.target_set
        if 0 <= domain < self.n_sources:
            return self.source_sets[domain]
        raise ConfigurationError(f"no domain {domain}")

    def local_to_union(self, m: int) -> np.ndarray:
        """Map source ``m``'s local index to the index of that class in Ĉ_T."""
        pos = {c: i for i, c in enumerate(self.union)}
        return np.array([pos[c] for c in self.source_sets[m]], dtype=int)

    def union_index(self, global_ids) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.union)}
        return np.array([pos[int(c)] for c in np.ravel(global_ids)], dtype=int)

    def membership(self) -> np.ndarray:
        """Boolean ``[M, n_C]`` table: is union class ``c`` in ``C_{s_m}``."""
        out = np.zeros((self.n_sources, self.n_classes), dtype=bool)
        for m in range(self.n_sources):
            out[m, self.local_to_union(m)] = True
        return out

    def to_dict(self):
        return {"source_sets": [list(s) for s in self.source_sets],
                "target_set": list(self.target_set), "pool_size": self.pool_size}


def build_label_spaces(matrix: UmdaMatrix, overlap_policy: str, rng: np.random.Generator) -> LabelSpace:
    """Realise concrete label sets that reproduce ``matrix`` column by column."""
    if overlap_policy not in OVERLAP_POLICIES:
        raise ConfigurationError(f"overlap_policy must be one of {OVERLAP_POLICIES}")
    m_src = matrix.n_sources
    shared_sizes = list(matrix.shared_counts[:m_src])
    n_shared = matrix.shared_counts[m_src]
    private_sizes = list(matrix.unknown_counts[:m_src])
    n_unknown = matrix.unknown_counts[m_src]

    if max(shared_sizes) > n_shared:
        raise ConfigurationError(f"|C| = {n_shared} is smaller than a source's shared set")
    if sum(shared_sizes) < n_shared:
        raise ConfigurationError("source shared sets cannot cover |C|")
    if overlap_policy == "empty-intersection" and sum(shared_sizes) != n_shared:
        raise ConfigurationError("disjoint shared sets need sum_m |C_m| == |C|")
    if overlap_policy == "nested" and max(shared_sizes) != n_shared:
        raise ConfigurationError("nested shared sets need max_m |C_m| == |C|")
    if all(s + p == 0 for s, p in zip(shared_sizes, private_sizes)):
        raise ConfigurationError("every source label set is empty")

    pool_size = n_shared + sum(private_sizes) + n_unknown
    ids = rng.permutation(pool_size)
    shared_ids = ids[:n_shared]
    private_ids = ids[n_shared:n_shared + sum(private_sizes)]
    unknown_ids = ids[n_shared + sum(private_sizes):]

    if overlap_policy == "empty-intersection":
        bounds = np.cumsum([0] + shared_sizes)
        common = [set(shared_ids[bounds[m]:bounds[m + 1]]) for m in range(m_src)]
    elif overlap_policy == "nested":
        common = [set(shared_ids[:k]) for k in shared_sizes]
    else:
        # cover every shared class once, then top each source up at random
        slots = rng.permutation(np.repeat(np.arange(m_src), shared_sizes))
        common = [set() for _ in range(m_src)]
        for cls, m in zip(shared_ids, slots[:n_shared]):
            common[m].add(cls)
        for m in range(m_src):
            rest = np.array(sorted(set(shared_ids) - common[m]), dtype=int)
            extra = rng.choice(rest, size=shared_sizes[m] - len(common[m]), replace=False)
            common[m].update(extra.tolist())

    bounds = np.cumsum([0] + private_sizes)
    sources = []
    for m in range(m_src):
        labels = common[m] | set(private_ids[bounds[m]:bounds[m + 1]])
        sources.append(tuple(sorted(int(c) for c in labels)))
    target = tuple(sorted(int(c) for c in np.concatenate([shared_ids, unknown_ids])))
    return LabelSpace(tuple(sources), target, int(pool_size))


def make_anchors(n_classes: int, d: int, min_distance: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-Gaussian anchors rescaled so the closest pair sits at ``min_distance``."""
    if d < 2:
        raise ConfigurationError("feature dimension must be >= 2")
    anchors = rng.standard_normal((n_classes, d))
    if n_classes > 1:
        closest = pdist(anchors).min()
        if closest == 0:
            raise ConfigurationError("duplicate anchors; use a larger feature dimension")
        anchors *= min_distance / closest
    return anchors


@dataclass
class DomainTransform:
    rotation: np.ndarray  # orthogonal [d, d]
    translation: np.ndarray  # [d]

    def apply(self, x):
        return x @ self.rotation.T + self.translation


def domain_transform(d: int, shift_strength: float, rng: np.random.Generator,
                     translation_scale: float = 1.0) -> DomainTransform:
    """Random rigid motion, interpolated from the identity by ``shift_strength``.

    The rotation is ``expm(s * A)`` for a random skew-symmetric ``A`` whose
    rotation angles are O(1) rad, so it stays exactly orthogonal for every
    ``s`` and class geometry is preserved up to the shift.
    """
    if not 0.0 <= shift_strength <= 1.0:
        raise ConfigurationError("shift_strength must lie in [0, 1]")
    g = rng.standard_normal((d, d))
    skew = (g - g.T) / np.sqrt(2 * d)
    rotation = expm(shift_strength * skew)
    translation = shift_strength * translation_scale * rng.standard_normal(d) / np.sqrt(d)
    return DomainTransform(rotation, translation)


class DomainDataset:
    """Features and labels of one domain.

    Target labels are held out: ``labels`` raises and only
    :meth:`evaluation_labels` hands them over.
    """

    def __init__(self, features, labels, domain: int, label_set, held_out=False):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if features.ndim != 2 or len(features) < 1:
            raise ConfigurationError("features must be a non-empty [N, d] array")
        if labels.shape != (len(features),):
            raise ConfigurationError("one label per sample required")
        if not np.all(np.isfinite(features)):
            raise ConfigurationError("features must be finite")
        allowed = set(int(c) for c in label_set)
        if not set(labels.tolist()) <= allowed:
            raise ConfigurationError("label outside the domain's label set")
        self.features = features
        self._labels = labels
        self.domain = int(domain)
        self.label_set = tuple(int(c) for c in label_set)
        self.held_out = bool(held_out)

    def __len__(self):
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labels(self) -> np.ndarray:
        if self.held_out:
            raise LabelAccessError("target labels are only available for evaluation")
        return self._labels

    def evaluation_labels(self) -> np.ndarray:
        return self._labels

    def split(self, fraction: float, rng: np.random.Generator):
        """Random train/test split of a labelled domain."""
        idx = rng.permutation(len(self))
        cut = int(round(fraction * len(self)))
        parts = idx[:cut], idx[cut:]
        return tuple(DomainDataset(self.features[p], self._labels[p], self.domain,
                                   self.label_set, self.held_out) for p in parts)


def generate_domain(space: LabelSpace, anchors, domain: int, n_per_class: int, shift_strength: float,
                    noise_std: float, rng: np.random.Generator) -> DomainDataset:
    """Sample ``n_per_class`` points per class of ``domain`` around its transformed anchors."""
    anchors = np.asarray(anchors, dtype=float)
    d = anchors.shape[1]
    if d < 2:
        raise ConfigurationError("feature dimension must be >= 2")
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    if noise_std < 0:
        raise ConfigurationError("noise_std must be non-negative")
    label_set = space.domain_labels(domain)
    transform = domain_transform(d, shift_strength, rng)
    means = transform.apply(anchors[list(label_set)])
    labels = np.repeat(np.array(label_set, dtype=int), n_per_class)
    features = np.repeat(means, n_per_class, axis=0)
    features = features + noise_std * rng.standard_normal(features.shape)
    order = rng.permutation(len(labels))
    return DomainDataset(features[order], labels[order], domain, label_set,
                         held_out=domain == space.n_sources)


@dataclass
class Scenario:
    matrix: UmdaMatrix
    space: LabelSpace
    anchors: np.ndarray
    sources: list
    target: DomainDataset


def make_scenario(matrix: UmdaMatrix, rng: np.random.Generator, dim=16, n_per_class=100,
                  shift_strength=0.5, noise_std=0.3, anchor_distance=4.0,
                  overlap_policy="random", source_shift=None) -> Scenario:
    """Build label spaces, anchors and every domain from independent child streams of ``rng``.

    ``source_shift`` defaults to ``shift_strength``; each domain draws its
    own rigid motion, so the source-to-target shift grows with both.
    """
    streams = rng.spawn(3 + matrix.n_sources)
    space = build_label_spaces(matrix, overlap_policy, streams[0])
    anchors = make_anchors(space.pool_size, dim, anchor_distance, streams[1])
    src_shift = shift_strength if source_shift is None else source_shift
    sources = [generate_domain(space, anchors, m, n_per_class, src_shift, noise_std, streams[2 + m])
               for m in range(matrix.n_sources)]
    target = generate_domain(space, anchors, matrix.n_sources, n_per_class, shift_strength,
                             noise_std, streams[-1])
    return Scenario(matrix, space, anchors, sources, target)


def dump_dataset(ds: DomainDataset, path):
    """Write ``ds`` in the line-oriented text format described in the README.

    Floats are written with ``repr`` so a load/dump round trip is exact.
    """
    lines = [DATASET_MAGIC,
             f"domain {ds.domain}",
             f"held_out {int(ds.held_out)}",
             f"n {len(ds)}",
             f"d {ds.dim}",
             "label_set " + " ".join(str(c) for c in ds.label_set)]
    labels = ds.evaluation_labels()
    for y, row in zip(labels, ds.features):
        lines.append(" ".join([str(int(y))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_dataset(path) -> DomainDataset:
    text = Path(path).read_text(encoding="ascii").split("\n")
    if text[0] != DATASET_MAGIC:
        raise ConfigurationError(f"{path}: not a ufda dataset file")
    header = {}
    for line in text[1:6]:
        key, _, value = line.partition(" ")
        header[key] = value
    n, d = int(header["n"]), int(header["d"])
    label_set = [int(v) for v in header["label_set"].split()]
    body = [line.split() for line in text[6:6 + n]]
    if len(body) != n or any(len(row) != d + 1 for row in body):
        raise ConfigurationError(f"{path}: body does not match header n={n}, d={d}")
    labels = [int(row[0]) for row in body]
    features = [[float(v) for v in row[1:]] for row in body]
    return DomainDataset(np.array(features), np.array(labels), int(header["domain"]), label_set,
                         held_out=header["held_out"] == "1")
