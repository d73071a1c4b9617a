"""KNN search over HTTP with a clip-retrieval style request surface.

``POST <base>/knn-service`` takes a JSON :class:`KnnRequest` (snake_case keys,
``query_embedding`` as an array of numbers) and returns a :class:`KnnResponse`.
Errors come back as ``{"error": ..., "message": ...}`` with a 4xx/5xx status.

Query pipeline: search (over-fetching when deduplicating) -> deduplicate ->
safety hook -> violence hook -> aesthetic re-rank hook -> truncate. Hooks
receive and return lists of :class:`SearchHit`; a hook re-ranks by adjusting
``squared_distance``, since responses are always sorted by distance. All
default hooks pass hits through unchanged.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from ._kernels import squared_l2_pair
from .exceptions import (InvalidArgumentError, NotFoundError, ProtocolError, RemoteError,
                         TransportError, UnsupportedModalityError)
from .index import FlatIndex, SearchHit
from .vectors import as_embedding

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_OVERFETCH = 4
DEFAULT_TIMEOUT = 30.0


class Modality(str, Enum):
    IMAGE = "IMAGE"
    TEXT = "TEXT"


@dataclass
class KnnRequest:
    query_embedding: list
    indice_name: str = "laion5B"
    use_mclip: bool = False
    aesthetic_score: int = 9
    aesthetic_weight: float = 0.5
    modality: Modality = Modality.IMAGE
    num_images: int = 50
    deduplicate: bool = True
    use_safety_model: bool = False
    use_violence_detector: bool = False

    def to_dict(self):
        return {
            "indice_name": self.indice_name,
            "use_mclip": self.use_mclip,
            "aesthetic_score": self.aesthetic_score,
            "aesthetic_weight": self.aesthetic_weight,
            "modality": Modality(self.modality).value,
            "num_images": self.num_images,
            "deduplicate": self.deduplicate,
            "use_safety_model": self.use_safety_model,
            "use_violence_detector": self.use_violence_detector,
            "query_embedding": [float(v) for v in self.query_embedding],
        }

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise InvalidArgumentError("request body must be a JSON object")
        if "query_embedding" not in obj:
            raise InvalidArgumentError("missing field 'query_embedding'")
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown fields {sorted(unknown)}")
        kwargs = dict(obj)
        checks = {"indice_name": str, "use_mclip": bool, "deduplicate": bool,
                  "use_safety_model": bool, "use_violence_detector": bool}
        for key, typ in checks.items():
            if key in kwargs and not isinstance(kwargs[key], typ):
                raise InvalidArgumentError(f"{key} must be {typ.__name__}")
        for key in ("aesthetic_score", "num_images"):
            if key in kwargs and (isinstance(kwargs[key], bool) or not isinstance(kwargs[key], int)):
                raise InvalidArgumentError(f"{key} must be an integer")
        if "aesthetic_weight" in kwargs:
            w = kwargs["aesthetic_weight"]
            if isinstance(w, bool) or not isinstance(w, (int, float)):
                raise InvalidArgumentError("aesthetic_weight must be a number")
        if "modality" in kwargs:
            try:
                kwargs["modality"] = Modality(str(kwargs["modality"]).upper())
            except ValueError:
                raise InvalidArgumentError(f"unknown modality {kwargs['modality']!r}") from None
        emb = kwargs["query_embedding"]
        if not isinstance(emb, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in emb):
            raise InvalidArgumentError("query_embedding must be an array of numbers")
        return cls(**kwargs)


@dataclass(frozen=True)
class KnnResult:
    item_id: str
    squared_distance: float
    metadata: dict = field(default_factory=dict)


@dataclass
class KnnResponse:
    results: list[KnnResult]
    applied_filters: list[str]

    def to_dict(self):
        return {
            "results": [{"item_id": r.item_id, "squared_distance": r.squared_distance,
                         "metadata": r.metadata} for r in self.results],
            "applied_filters": list(self.applied_filters),
        }

    @classmethod
    def from_dict(cls, obj, num_images=None):
        """Parse and validate a response body; violations raise :class:`ProtocolError`."""
        try:
            results = [KnnResult(str(r["item_id"]), float(r["squared_distance"]),
                                 dict(r.get("metadata") or {})) for r in obj["results"]]
            filters = [str(f) for f in obj["applied_filters"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed response: {exc!r}") from None
        keys = [(r.squared_distance, r.item_id) for r in results]
        if any(not math.isfinite(d) or d < 0 for d, _ in keys):
            raise ProtocolError("response contains an invalid squared_distance")
        if keys != sorted(keys):
            raise ProtocolError("response results are not sorted by (squared_distance, item_id)")
        if num_images is not None and len(results) > num_images:
            raise ProtocolError(f"response has {len(results)} results, more than num_images={num_images}")
        return cls(results, filters)

    def hits(self) -> list[SearchHit]:
        return [SearchHit(r.item_id, i, r.squared_distance) for i, r in enumerate(self.results)]


def deduplicate(hits, index: FlatIndex, epsilon=DEFAULT_EPSILON) -> list[SearchHit]:
    """Drop hits within ``epsilon`` squared distance of an earlier kept hit."""
    if epsilon < 0:
        raise InvalidArgumentError(f"epsilon must be non-negative, got {epsilon}")
    kept, kept_vectors = [], []
    for hit in hits:
        vec = index.vector(hit.item_id)
        if any(squared_l2_pair(vec, other) < epsilon for other in kept_vectors):
            continue
        kept.append(hit)
        kept_vectors.append(vec)
    return [SearchHit(h.item_id, r, h.squared_distance) for r, h in enumerate(kept)]


def _pass_through(hits, *args):
    return hits


class KnnService:
    """Read-only query front end over one or more named indexes.

    ``indices`` maps ``indice_name`` to a fitted :class:`FlatIndex`.
    ``safety_hook(hits, index)``, ``violence_hook(hits, index)`` and
    ``aesthetic_hook(hits, aesthetic_score, aesthetic_weight)`` all default to
    pass-through.
    """

    def __init__(self, indices, epsilon=DEFAULT_EPSILON, overfetch=DEFAULT_OVERFETCH,
                 safety_hook=_pass_through, violence_hook=_pass_through,
                 aesthetic_hook=_pass_through):
        if isinstance(indices, FlatIndex):
            indices = {"laion5B": indices}
        if overfetch < 1:
            raise InvalidArgumentError("overfetch must be >= 1")
        if epsilon < 0:
            raise InvalidArgumentError("epsilon must be non-negative")
        self.indices = dict(indices)
        self.epsilon = epsilon
        self.overfetch = overfetch
        self.safety_hook = safety_hook
        self.violence_hook = violence_hook
        self.aesthetic_hook = aesthetic_hook

    def query(self, request: KnnRequest) -> KnnResponse:
        if request.modality is not Modality.IMAGE:
            raise UnsupportedModalityError(
                f"modality {Modality(request.modality).value} is not supported; only IMAGE queries "
                "(embeddings of images) are served")
        if request.num_images < 1:
            raise InvalidArgumentError(f"num_images must be >= 1, got {request.num_images}")
        try:
            index = self.indices[request.indice_name]
        except KeyError:
            raise NotFoundError(f"unknown indice_name {request.indice_name!r}") from None
        query = as_embedding(request.query_embedding, dtype=np.float64)
        if len(index) and query.shape[0] != index.dim:
            raise InvalidArgumentError(
                f"dimension mismatch: query has {query.shape[0]}, index has {index.dim}")

        applied = []
        if request.use_mclip:
            applied.append("mclip")
        fetch = request.num_images
        if request.deduplicate:
            fetch = min(max(len(index), 1), request.num_images * self.overfetch)
        hits = index.search(query, fetch)
        if request.deduplicate:
            hits = deduplicate(hits, index, self.epsilon)
            applied.append("deduplicate")
        if request.use_safety_model:
            hits = self.safety_hook(hits, index)
            applied.append("safety_model")
        if request.use_violence_detector:
            hits = self.violence_hook(hits, index)
            applied.append("violence_detector")
        if request.aesthetic_weight:
            hits = self.aesthetic_hook(hits, request.aesthetic_score, request.aesthetic_weight)
            applied.append("aesthetic_rerank")
        hits = sorted(hits, key=lambda h: (h.squared_distance, h.item_id))[:request.num_images]

        results = []
        for h in hits:
            meta = {}
            ident = index.identity_of(h.item_id)
            if ident is not None:
                meta["identity_id"] = ident
            meta["variant"] = index.variants_[index.position(h.item_id)].value
            results.append(KnnResult(h.item_id, h.squared_distance, meta))
        return KnnResponse(results, applied)


def serve_query(service, request: KnnRequest) -> KnnResponse:
    if isinstance(service, FlatIndex):
        service = KnnService({request.indice_name: service})
    return service.query(request)


# -- HTTP ---------------------------------------------------------------------

_ERRORS = [
    (UnsupportedModalityError, HTTPStatus.BAD_REQUEST, "unsupported_modality"),
    (InvalidArgumentError, HTTPStatus.BAD_REQUEST, "invalid_argument"),
    (NotFoundError, HTTPStatus.NOT_FOUND, "not_found"),
]


class _Handler(BaseHTTPRequestHandler):
    server_version = "faceknn"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status, obj):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status, error, message):
        self._send(status, {"error": error, "message": message})

    def do_GET(self):
        if self.path.rstrip("/").endswith("/indices-list"):
            self._send(HTTPStatus.OK, sorted(self.server.service.indices))
        else:
            self._error(HTTPStatus.NOT_FOUND, "not_found", f"no route for GET {self.path}")

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        if not self.path.rstrip("/").endswith("/knn-service"):
            self._error(HTTPStatus.NOT_FOUND, "not_found", f"no route for POST {self.path}")
            return
        try:
            request = KnnRequest.from_dict(json.loads(raw.decode("utf-8")))
            response = self.server.service.query(request)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            self._error(HTTPStatus.BAD_REQUEST, "invalid_json", str(exc))
            return
        except Exception as exc:
            for cls, status, name in _ERRORS:
                if isinstance(exc, cls):
                    self._error(status, name, str(exc))
                    return
            logger.exception("unhandled error while serving a query")
            self._error(HTTPStatus.INTERNAL_SERVER_ERROR, "internal", str(exc))
            return
        self._send(HTTPStatus.OK, response.to_dict())


class KnnHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, service: KnnService, host="127.0.0.1", port=0):
        super().__init__((host, port), _Handler)
        self.service = service

    @property
    def url(self):
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        """Serve from a background thread; returns the thread."""
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def _endpoint_url(endpoint):
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith("/knn-service") else endpoint + "/knn-service"


def query_remote(endpoint, request: KnnRequest, timeout=DEFAULT_TIMEOUT) -> KnnResponse:
    """One POST to ``<endpoint>/knn-service``; the response is validated."""
    url = _endpoint_url(endpoint)
    try:
        resp = requests.post(url, json=request.to_dict(), timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"{url}: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise RemoteError(resp.status_code, resp.text)
    try:
        body = resp.json()
    except ValueError:
        raise ProtocolError(f"{url}: response is not JSON") from None
    return KnnResponse.from_dict(body, request.num_images)


class KnnClient:
    """Thin stateless client; safe to share across threads."""

    def __init__(self, endpoint, timeout=DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout

    def query(self, request: KnnRequest) -> KnnResponse:
        return query_remote(self.endpoint, request, self.timeout)
