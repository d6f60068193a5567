"""Embedding gallery and k-NN identification with open-set rejection.

Vectors are L2-normalized on enrollment and on query, so Euclidean distance
between them lies in [0, 2]. A gallery may hold several records per subject.

Concurrency: ``identify`` only reads and is safe from many threads; ``enroll``
mutates and needs exclusive access (single writer, many readers).
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptLine, DimensionMismatch, EmptyGallery, HeaderMismatch, ZeroVector

DEFAULT_DIM = 512
DEFAULT_K = 5
DEFAULT_TAU = 1.0
FORMAT_TAG = "embedding-gallery/1"

_UNIT_TOL = 1e-6
_ULP_SLACK = 4 * np.finfo(float).eps


def normalize_embedding(v) -> np.ndarray:
    x = np.asarray(v, dtype=float).ravel()
    if x.size < 1:
        raise ZeroVector("empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector contains non-finite values")
    norm = np.linalg.norm(x)
    if norm < 1e-12:
        raise ZeroVector(f"vector norm {norm:g} is too small to normalize")
    if abs(norm - 1.0) <= _ULP_SLACK:
        # dividing by 1 +- ulp would perturb stored vectors and break exact self-matches
        return x.copy()
    return x / norm


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    subject_id: str
    vector: np.ndarray
    enrolled_at: float = 0.0


@dataclass(frozen=True)
class IdentityMatch:
    decision: str | None  # None means Unknown
    nearest_distance: float
    votes: dict[str, int]

    @property
    def is_unknown(self) -> bool:
        return self.decision is None

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "nearest_distance": self.nearest_distance,
            "votes": dict(sorted(self.votes.items())),
        }


@dataclass(eq=False)
class EmbeddingGallery:
    dim: int = DEFAULT_DIM
    k: int = DEFAULT_K
    tau: float = DEFAULT_TAU
    records: list[EmbeddingRecord] = field(default_factory=list)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not (0 < self.tau <= 2):
            raise ValueError(f"tau must lie in (0, 2], got {self.tau}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def subjects(self) -> set[str]:
        return {r.subject_id for r in self.records}

    def matrix(self) -> np.ndarray:
        """(N, dim) stack of record vectors; rebuilt per call, so never stale."""
        if not self.records:
            return np.empty((0, self.dim))
        return np.vstack([r.vector for r in self.records])

    def allclose(self, other: EmbeddingGallery, atol: float = 1e-9) -> bool:
        if (self.dim, self.k, self.tau, len(self)) != (other.dim, other.k, other.tau, len(other)):
            return False
        for a, b in zip(self.records, other.records):
            if a.subject_id != b.subject_id or a.enrolled_at != b.enrolled_at:
                return False
            if not np.allclose(a.vector, b.vector, rtol=0, atol=atol):
                return False
        return True


def _check_dim(gallery: EmbeddingGallery, v) -> np.ndarray:
    x = np.asarray(v, dtype=float).ravel()
    if x.size != gallery.dim:
        raise DimensionMismatch(f"vector has {x.size} dims, gallery has {gallery.dim}")
    return x


def enroll(gallery: EmbeddingGallery, subject_id: str, v, enrolled_at: float | None = None) -> EmbeddingGallery:
    if not subject_id:
        raise ValueError("subject_id must be a non-empty string")
    unit = normalize_embedding(_check_dim(gallery, v))
    ts = time.time() if enrolled_at is None else float(enrolled_at)
    gallery.records.append(EmbeddingRecord(subject_id, unit, ts))
    return gallery


def identify(gallery: EmbeddingGallery, probe) -> IdentityMatch:
    """k-NN vote over Euclidean distances between unit vectors.

    Neighbors are ranked by (distance, subject_id); vote ties go to the smaller
    mean neighbor distance, then the lexicographically smaller id. The match
    is Unknown when even the nearest record is farther than ``tau``.
    """
    if not gallery.records:
        raise EmptyGallery("gallery has no records")
    q = normalize_embedding(_check_dim(gallery, probe))
    dist = np.linalg.norm(gallery.matrix() - q, axis=1)
    ids = [r.subject_id for r in gallery.records]
    k = min(gallery.k, len(ids))
    order = sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))[:k]

    votes: dict[str, int] = {}
    dsum: dict[str, float] = {}
    for i in order:
        votes[ids[i]] = votes.get(ids[i], 0) + 1
        dsum[ids[i]] = dsum.get(ids[i], 0.0) + float(dist[i])
    winner = min(votes, key=lambda s: (-votes[s], dsum[s] / votes[s], s))

    nearest = float(min(max(dist[order[0]], 0.0), 2.0))
    decision = winner if nearest <= gallery.tau else None
    return IdentityMatch(decision, nearest, votes)


# persistence: JSON lines, header first

def dumps_gallery(gallery: EmbeddingGallery) -> str:
    lines = [json.dumps({"format": FORMAT_TAG, "dim": gallery.dim, "k": gallery.k, "tau": gallery.tau})]
    for r in gallery.records:
        lines.append(json.dumps({
            "subject_id": r.subject_id,
            "enrolled_at": r.enrolled_at,
            "vector": [float(x) for x in r.vector],
        }))
    return "\n".join(lines) + "\n"


def loads_gallery(text: str) -> EmbeddingGallery:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise HeaderMismatch("missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise CorruptLine(1, "header is not valid JSON") from None
    if not isinstance(header, dict) or header.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise HeaderMismatch("unrecognized header")
    try:
        gallery = EmbeddingGallery(dim=header["dim"], k=header["k"], tau=header["tau"])
    except (KeyError, TypeError, ValueError) as e:
        raise HeaderMismatch(f"bad header: {e}") from None

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            sid = obj["subject_id"]
            vec = np.asarray(obj["vector"], dtype=float)
            ts = float(obj.get("enrolled_at", 0.0))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise CorruptLine(lineno, str(e)) from None
        if not isinstance(sid, str) or not sid or vec.ndim != 1:
            raise CorruptLine(lineno, "bad subject_id or vector")
        if vec.size != gallery.dim:
            raise HeaderMismatch(f"line {lineno}: vector has {vec.size} dims, header says {gallery.dim}")
        if not np.all(np.isfinite(vec)) or not math.isclose(np.linalg.norm(vec), 1.0, abs_tol=_UNIT_TOL):
            raise CorruptLine(lineno, "stored vector is not unit length")
        gallery.records.append(EmbeddingRecord(sid, vec, ts))
    return gallery


def save_gallery(gallery: EmbeddingGallery, destination) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    destination = os.fspath(destination)
    d = os.path.dirname(os.path.abspath(destination))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".gallery-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(dumps_gallery(gallery))
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_gallery(source) -> EmbeddingGallery:
    with open(source, encoding="utf-8") as f:
        return loads_gallery(f.read())
