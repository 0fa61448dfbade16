"""Pluggable feature producers: deterministic synthetic embedder, feature-image
files, and clients for an external embedding/feature service."""

from __future__ import annotations

import hashlib
import json
import os
import socket
import struct
from dataclasses import dataclass

import numpy as np

from seekmap.segments import FeatureImage

FEATURE_MAGIC = b"SKFT"
ENDPOINT_ENV = "SEEKMAP_EMBED_ENDPOINT"


class EncodingError(ValueError):
    pass


class UnknownTermError(EncodingError):
    """Query term not resolvable in the vocabulary; surfaced to the operator."""


class RetryableServiceError(IOError):
    """Transient failure (timeout, connection refused); safe to retry."""


class PayloadError(IOError):
    """Malformed service payload or feature file."""


@dataclass
class QueryEmbedding:
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        n = float(np.linalg.norm(self.vector))
        if abs(n - 1.0) > 1e-6:
            raise EncodingError(f"query embedding norm {n} is not 1")


def _base_vector(seed: int, concept: str, dim: int) -> np.ndarray:
    """Deterministic sign-random +-1/sqrt(D) vector from a hash stream."""
    signs = np.empty(dim)
    scale = 1.0 / np.sqrt(dim)
    produced = 0
    counter = 0
    while produced < dim:
        digest = hashlib.sha256(f"{seed}:{concept}:{counter}".encode()).digest()
        for byte in digest:
            for bit in range(8):
                if produced >= dim:
                    break
                signs[produced] = scale if (byte >> bit) & 1 else -scale
                produced += 1
        counter += 1
    return signs


class ConceptVocabulary:
    """Term -> blend of base concepts; base vectors derive from (seed, name)."""

    def __init__(self, dimension: int, seed: int, terms: dict):
        if dimension < 8:
            raise EncodingError("dimension must be >= 8")
        self.dimension = dimension
        self.seed = seed
        # terms: name -> list of (base_concept, weight); empty blend = the name itself
        self.terms: dict[str, list[tuple[str, float]]] = {}
        for name, blend in terms.items():
            blend = blend or [(name, 1.0)]
            for base, w in blend:
                if w <= 0:
                    raise EncodingError(f"non-positive blend weight for {name}")
            self.terms[name] = [(str(b), float(w)) for b, w in blend]
        self._base_cache: dict[str, np.ndarray] = {}

    @staticmethod
    def from_dict(data: dict) -> "ConceptVocabulary":
        terms = {
            name: [tuple(pair) for pair in (spec.get("blend") or [])]
            for name, spec in data.get("terms", {}).items()
        }
        return ConceptVocabulary(int(data["dimension"]), int(data["seed"]), terms)

    @staticmethod
    def load(path) -> "ConceptVocabulary":
        with open(path) as f:
            return ConceptVocabulary.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "seed": self.seed,
            "terms": {name: {"blend": [[b, w] for b, w in blend]} for name, blend in self.terms.items()},
        }

    def base_vector(self, concept: str) -> np.ndarray:
        v = self._base_cache.get(concept)
        if v is None:
            v = _base_vector(self.seed, concept, self.dimension)
            self._base_cache[concept] = v
        return v

    def __contains__(self, term: str) -> bool:
        return term in self.terms

    def base_concepts(self) -> list[str]:
        seen = []
        for blend in self.terms.values():
            for base, _ in blend:
                if base not in seen:
                    seen.append(base)
        return sorted(seen)

    def check_separation(self, threshold: float = 0.5):
        """Base-concept pairs whose |cos| exceeds the threshold (should be rare for D >= 32)."""
        bases = self.base_concepts()
        bad = []
        for i in range(len(bases)):
            for j in range(i + 1, len(bases)):
                c = float(self.base_vector(bases[i]) @ self.base_vector(bases[j]))
                if abs(c) > threshold:
                    bad.append((bases[i], bases[j], c))
        return bad


def embed_term(vocab: ConceptVocabulary, term: str) -> QueryEmbedding:
    if term not in vocab:
        raise UnknownTermError(term)
    v = np.zeros(vocab.dimension)
    for base, w in vocab.terms[term]:
        v += w * vocab.base_vector(base)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise EncodingError(f"term {term} blends to the zero vector")
    return QueryEmbedding(v / n)


def feature_image(label_image, label_names, vocab: ConceptVocabulary, sigma: float, rng=None) -> FeatureImage:
    """Synthetic per-pixel features: normalize(embed(label) + noise); label < 0 = invalid."""
    labels = np.asarray(label_image, dtype=np.int64)
    valid = labels >= 0
    h, w = labels.shape
    emb = np.zeros((len(label_names), vocab.dimension))
    for i, name in enumerate(label_names):
        emb[i] = embed_term(vocab, name).vector
    values = np.zeros((h, w, vocab.dimension), dtype=np.float64)
    values[valid] = emb[labels[valid]]
    if sigma > 0:
        if rng is None:
            raise EncodingError("noisy features need the mission RNG")
        values[valid] += rng.normal(0.0, sigma, size=(int(valid.sum()), vocab.dimension))
    norms = np.linalg.norm(values, axis=2, keepdims=True)
    np.divide(values, norms, out=values, where=norms > 0)
    return FeatureImage(values.astype(np.float32), valid)


# -- feature-image files: magic "SKFT", D u32, w u32, h u32, row-major f32 ----

def save_feature_image(img: FeatureImage, f):
    close = False
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        f = open(f, "wb")
        close = True
    try:
        h, w = img.shape
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", img.dimension, w, h))
        data = img.values.astype("<f4").copy()
        data[~img.valid] = np.nan
        f.write(data.tobytes())
    finally:
        if close:
            f.close()


def load_feature_image(f, expected_dim: int | None = None) -> FeatureImage:
    close = False
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        f = open(f, "rb")
        close = True
    try:
        raw = f.read()
    finally:
        if close:
            f.close()
    return parse_feature_image(raw, expected_dim)


def parse_feature_image(raw: bytes, expected_dim: int | None = None) -> FeatureImage:
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise PayloadError("bad feature-image magic")
    dim, w, h = struct.unpack("<III", raw[4:16])
    if expected_dim is not None and dim != expected_dim:
        raise EncodingError(f"feature dimension {dim} does not match configured {expected_dim}")
    expect = h * w * dim * 4
    if len(raw) != 16 + expect:
        raise PayloadError("truncated feature image")
    values = np.frombuffer(raw[16:], dtype="<f4").reshape(h, w, dim).copy()
    valid = np.isfinite(values).all(axis=2)
    values[~valid] = 0.0
    return FeatureImage(values, valid)


def fetch_feature_image(endpoint: str, frame_id: int, expected_dim: int | None = None, timeout: float = 5.0) -> FeatureImage:
    """Fetch a dense feature image for one frame from the feature service."""
    import urllib.error
    import urllib.request

    url = f"{endpoint.rstrip('/')}/features/{frame_id}"
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise PayloadError(f"feature service returned {exc.code}") from exc
    except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError, OSError) as exc:
        raise RetryableServiceError(str(exc)) from exc
    return parse_feature_image(raw, expected_dim)


# -- embedding service: newline-framed JSON over a local TCP socket -----------

class EmbeddingServiceClient:
    """Client for a text-embedding endpoint: {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, endpoint: str | None = None, timeout: float = 5.0):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise EncodingError(f"no embedding endpoint; set {ENDPOINT_ENV}")
        host, _, port = endpoint.rpartition(":")
        self.host = host or "127.0.0.1"
        self.port = int(port)
        self.timeout = timeout

    def embed(self, texts: list[str]) -> np.ndarray:
        request = json.dumps({"texts": list(texts)}) + "\n"
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                sock.sendall(request.encode())
                sock.shutdown(socket.SHUT_WR)
                chunks = []
                while True:
                    chunk = sock.recv(65536)
                    if not chunk:
                        break
                    chunks.append(chunk)
        except (socket.timeout, TimeoutError, ConnectionError, OSError) as exc:
            raise RetryableServiceError(str(exc)) from exc
        try:
            payload = json.loads(b"".join(chunks).decode())
            vectors = np.asarray(payload["vectors"], dtype=np.float64)
            if vectors.ndim != 2 or vectors.shape[0] != len(texts):
                raise KeyError("vectors")
        except (ValueError, KeyError, TypeError) as exc:
            raise PayloadError(f"malformed embedding response: {exc}") from exc
        return vectors


def serve_embeddings(vocab: ConceptVocabulary, host: str = "127.0.0.1", port: int = 0):
    """Blocking single-threaded embedding server over the vocabulary (for tests/replay).

    Returns the bound (server_socket, port); caller accepts with handle_one().
    """
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(4)

    def handle_one():
        conn, _ = srv.accept()
        with conn:
            data = b""
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                data += chunk
                if b"\n" in data:
                    break
            request = json.loads(data.decode())
            vectors = []
            for term in request.get("texts", []):
                vectors.append(embed_term(vocab, term).vector.tolist())
            conn.sendall((json.dumps({"vectors": vectors}) + "\n").encode())

    return srv, srv.getsockname()[1], handle_one
