"""Image/text embedding backends sharing one unit-norm vector interface."""
from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TOY_FEATURES = 192  # 8x8x3 pooled image features / text hash bins


class EmbeddingServiceError(RuntimeError):
    """The remote embedding service failed after all retries."""


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    backend_id: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", v)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1 within 1e-6")

    @property
    def dim(self) -> int:
        return self.vector.size


def cosine_distance(a: Embedding, b: Embedding) -> float:
    """1 - <a, b> for unit vectors; in [0, 2]."""
    if a.backend_id != b.backend_id:
        raise ValueError(f"backend mismatch: {a.backend_id} vs {b.backend_id}")
    return float(1.0 - np.dot(a.vector, b.vector))


def image_content_hash(image_uint8: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(image_uint8.shape).encode())
    h.update(np.ascontiguousarray(image_uint8).tobytes())
    return h.hexdigest()


def text_content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _normalize(v: np.ndarray, backend_id: str) -> Embedding:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return Embedding(vector=v / norm, backend_id=backend_id)


class ToyEmbedder:
    """Deterministic offline embedder mapping images and text to one space.

    Images are average-pooled to 8x8x3 and flattened; text is hashed token
    counts over the same number of bins. Both feed a fixed seeded random
    projection to `dim` and are L2-normalized. All-zero feature vectors fall
    back to the all-ones feature vector so the output stays well defined.
    """

    supports_images = True
    supports_text = True

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.backend_id = f"toy-d{dim}-s{seed}"
        self._projection = np.random.default_rng(seed).standard_normal((dim, TOY_FEATURES))

    def _project(self, features: np.ndarray) -> Embedding:
        if not features.any():
            features = np.ones(TOY_FEATURES)
        return _normalize(self._projection @ features, self.backend_id)

    def embed_image(self, image: np.ndarray) -> Embedding:
        """image: (H, W, 3) float in [0, 1], H and W divisible by 8."""
        h, w, c = image.shape
        if c != 3 or h % 8 or w % 8:
            raise ValueError(f"expected (8k, 8k, 3) image, got {image.shape}")
        pooled = image.reshape(8, h // 8, 8, w // 8, 3).mean(axis=(1, 3))
        return self._project(pooled.ravel())

    def embed_text(self, text: str) -> Embedding:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        counts = np.zeros(TOY_FEATURES)
        for token in text.lower().split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            counts[int.from_bytes(digest, "little") % TOY_FEATURES] += 1.0
        return self._project(counts)


def image_to_png_bytes(image_uint8: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image_uint8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class ServiceEmbedder:
    """Client for the HTTP embedding sidecar (base64 PNG in, float vector out)."""

    supports_images = True
    supports_text = True

    def __init__(
        self,
        url: str,
        model: str = "",
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
    ):
        import requests

        self._requests = requests
        self.url = url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        models = self._get("/v1/models")
        if model:
            entries = [m for m in models if m["model"] == model]
            if not entries:
                raise EmbeddingServiceError(f"model {model!r} not advertised by {self.url}")
        else:
            entries = [m for m in models if {"image", "text"} <= set(m["modalities"])]
            if not entries:
                raise EmbeddingServiceError(f"no image+text model advertised by {self.url}")
        self.model = entries[0]["model"]
        self.dim = int(entries[0]["dim"])
        self.backend_id = f"service-{self.model}-d{self.dim}"

    def _get(self, path: str):
        resp = self._request("GET", path, None)
        return resp

    def _request(self, method: str, path: str, payload):
        last = None
        for attempt in range(self.retries):
            try:
                if method == "GET":
                    r = self._requests.get(self.url + path, timeout=self.timeout)
                else:
                    r = self._requests.post(self.url + path, json=payload, timeout=self.timeout)
                r.raise_for_status()
                return r.json()
            except Exception as err:  # noqa: BLE001 - retry any transport failure
                last = err
                wait = self.backoff * (2**attempt)
                log.warning("embed service %s %s failed (%s), retry in %.1fs", method, path, err, wait)
                time.sleep(wait)
        raise EmbeddingServiceError(f"{method} {path} failed after {self.retries} attempts: {last}")

    def _embed(self, path: str, payload) -> Embedding:
        data = self._request("POST", path, payload)
        vec = np.asarray(data["embedding"], dtype=np.float64)
        if vec.size != self.dim:
            raise EmbeddingServiceError(f"service returned dim {vec.size}, expected {self.dim}")
        return _normalize(vec, self.backend_id)

    def embed_image(self, image: np.ndarray) -> Embedding:
        from .simulator import image_to_uint8

        png = image_to_png_bytes(image_to_uint8(image))
        payload = {
            "modality": "image",
            "payload": base64.b64encode(png).decode("ascii"),
            "model": self.model,
        }
        return self._embed("/v1/embed/image", payload)

    def embed_text(self, text: str) -> Embedding:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        payload = {"modality": "text", "payload": text, "model": self.model}
        return self._embed("/v1/embed/text", payload)


class CachingEmbedder:
    """Content-hash cache around a backend, optionally persisted as JSONL."""

    def __init__(self, backend, cache_path: str | Path | None = None):
        self.backend = backend
        self.backend_id = backend.backend_id
        self.dim = getattr(backend, "dim", None)
        self.supports_images = backend.supports_images
        self.supports_text = backend.supports_text
        self._cache: dict[str, np.ndarray] = {}
        self._path = Path(cache_path) if cache_path else None
        if self._path and self._path.exists():
            with self._path.open() as fh:
                for line in fh:
                    entry = json.loads(line)
                    if entry["backend"] == self.backend_id:
                        self._cache[entry["key"]] = np.asarray(entry["vector"])

    def _remember(self, key: str, emb: Embedding) -> Embedding:
        if key not in self._cache:
            self._cache[key] = emb.vector
            if self._path:
                with self._path.open("a") as fh:
                    fh.write(
                        json.dumps(
                            {"backend": self.backend_id, "key": key, "vector": emb.vector.tolist()}
                        )
                        + "\n"
                    )
        return emb

    def embed_image(self, image: np.ndarray) -> Embedding:
        from .simulator import image_to_uint8

        key = "img:" + image_content_hash(image_to_uint8(image))
        if key in self._cache:
            return Embedding(vector=self._cache[key], backend_id=self.backend_id)
        return self._remember(key, self.backend.embed_image(image))

    def embed_text(self, text: str) -> Embedding:
        key = "txt:" + text_content_hash(text)
        if key in self._cache:
            return Embedding(vector=self._cache[key], backend_id=self.backend_id)
        return self._remember(key, self.backend.embed_text(text))
