"""Uniform access to the five external capabilities.

Every model call in the pipeline goes through one :class:`Gateway` that
holds a backend per capability slot (text model, vision model,
text-to-image, OCR, text eraser). The gateway canonicalizes requests,
caches successful responses content-addressed on the canonical bytes,
retries transient failures with exponential backoff, and enforces
per-capability rate limits. Backends are interchangeable: HTTP,
subprocess, or the deterministic mocks in :mod:`figsmith.mocks`.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import subprocess
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from PIL import Image

from .errors import (
    BackendRejectedError,
    ExhaustedError,
    InvariantError,
    NoBackendError,
    TransientBackendError,
)
from .images import from_png_bytes, png_bytes

DEFAULT_MAX_ATTEMPTS = 5
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_BACKOFF_FACTOR = 2.0


class Capability(str, Enum):
    TEXT = "text"
    VISION = "vision"
    TEXT_TO_IMAGE = "text_to_image"
    OCR = "ocr"
    ERASE = "erase"


@dataclass(frozen=True)
class BackendRequest:
    """One logical call to a capability.

    ``prompt`` and ``images`` carry the actual content; ``params`` are
    free-form key/value knobs (temperature, model name, size). The
    canonical form sorts params and replaces image bytes by their
    sha256, so logically identical requests serialize identically.
    """

    capability: Capability
    prompt: str = ""
    images: tuple[bytes, ...] = ()
    params: tuple[tuple[str, str], ...] = ()

    def canonical(self) -> bytes:
        payload = {
            "capability": self.capability.value,
            "prompt": self.prompt,
            "images": [hashlib.sha256(img).hexdigest() for img in self.images],
            "params": sorted(self.params),
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")

    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical()).hexdigest()


@dataclass
class BackendResponse:
    body: bytes
    media_kind: str  # text | image | structured
    latency_ms: int = 0
    from_cache: bool = False

    @property
    def text(self) -> str:
        return self.body.decode("utf-8")


@dataclass(frozen=True)
class OcrItem:
    """One detected text snippet: string, pixel bbox (origin top-left), confidence."""

    text: str
    bbox: tuple[int, int, int, int]  # x, y, w, h
    confidence: float

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise InvariantError(f"degenerate bbox {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise InvariantError(f"confidence {self.confidence} outside [0, 1]")


class Backend(Protocol):
    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        """Execute the request, returning (body, media_kind)."""
        ...


class RateLimiter:
    """Sliding-window requests-per-minute limiter."""

    def __init__(self, per_minute: int, clock: Callable[[], float], sleep: Callable[[float], None]):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._stamps = [t for t in self._stamps if now - t < 60.0]
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = max(0.0, 60.0 - (now - self._stamps[0]))
            self._sleep(wait)


class Gateway:
    """Shared, thread-tolerant front door for all backend calls."""

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        *,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        backoff_factor: float = DEFAULT_BACKOFF_FACTOR,
    ):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._sleep = sleep
        self._clock = clock
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._backends: dict[Capability, Backend] = {}
        self._limiters: dict[Capability, RateLimiter] = {}
        self._lock = threading.Lock()
        self.calls: dict[Capability, int] = {cap: 0 for cap in Capability}

    def register(self, capability: Capability, backend: Backend, rate_limit_per_min: int | None = None) -> None:
        self._backends[capability] = backend
        if rate_limit_per_min:
            self._limiters[capability] = RateLimiter(rate_limit_per_min, self._clock, self._sleep)

    # --- core call path ---

    def call(self, request: BackendRequest) -> BackendResponse:
        backend = self._backends.get(request.capability)
        if backend is None:
            raise NoBackendError(f"no backend registered for {request.capability.value}")

        key = request.cache_key()
        cached = self._cache_read(key)
        if cached is not None:
            return cached

        limiter = self._limiters.get(request.capability)
        delay = self.backoff_base
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            if limiter is not None:
                limiter.acquire()
            with self._lock:
                self.calls[request.capability] += 1
            started = self._clock()
            try:
                body, media_kind = backend.invoke(request)
            except TransientBackendError as err:
                last_error = err
                if attempt < self.max_attempts:
                    self._sleep(delay)
                    delay *= self.backoff_factor
                continue
            latency_ms = max(0, int((self._clock() - started) * 1000))
            self._cache_write(key, request.capability, body, media_kind)
            return BackendResponse(body=body, media_kind=media_kind, latency_ms=latency_ms)
        raise ExhaustedError(
            f"{request.capability.value} backend failed after {self.max_attempts} attempts: {last_error}"
        )

    # --- capability helpers ---

    def text(self, prompt: str, images: tuple[bytes, ...] = (), **params) -> str:
        request = BackendRequest(
            capability=Capability.TEXT,
            prompt=prompt,
            images=images,
            params=_with_default_temperature(params),
        )
        return self.call(request).text

    def vision(self, prompt: str, images: tuple[bytes, ...] = (), **params) -> str:
        request = BackendRequest(
            capability=Capability.VISION,
            prompt=prompt,
            images=images,
            params=_with_default_temperature(params),
        )
        return self.call(request).text

    def text_to_image(self, prompt: str, conditioning: Image.Image, **params) -> Image.Image:
        request = BackendRequest(
            capability=Capability.TEXT_TO_IMAGE,
            prompt=prompt,
            images=(png_bytes(conditioning),),
            params=_params_tuple(params),
        )
        return from_png_bytes(self.call(request).body)

    def ocr(self, image: Image.Image) -> list[OcrItem]:
        """OCR the image; items come back clipped to bounds and sorted by (y, x)."""
        if image.width <= 0 or image.height <= 0:
            raise InvariantError("empty image")
        request = BackendRequest(capability=Capability.OCR, images=(png_bytes(image),))
        payload = json.loads(self.call(request).text)
        items: list[OcrItem] = []
        for raw in payload.get("items", []):
            clipped = _clip_bbox(tuple(raw["bbox"]), image.width, image.height)
            if clipped is None:
                continue
            confidence = min(1.0, max(0.0, float(raw.get("confidence", 1.0))))
            items.append(OcrItem(text=str(raw["text"]), bbox=clipped, confidence=confidence))
        items.sort(key=lambda item: (item.bbox[1], item.bbox[0]))
        return items

    def erase_text(self, image: Image.Image, boxes: list[tuple[int, int, int, int]]) -> Image.Image:
        """Inpaint the given boxes; pixels outside them are untouched."""
        for x, y, w, h in boxes:
            if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > image.width or y + h > image.height:
                raise InvariantError(f"box ({x}, {y}, {w}, {h}) outside image bounds")
        if not boxes:
            return image
        request = BackendRequest(
            capability=Capability.ERASE,
            prompt=json.dumps({"boxes": [list(b) for b in boxes]}, sort_keys=True),
            images=(png_bytes(image),),
        )
        return from_png_bytes(self.call(request).body)

    # --- cache ---

    def _cache_paths(self, key: str) -> tuple[Path, Path]:
        assert self.cache_dir is not None
        return self.cache_dir / f"{key}.bin", self.cache_dir / f"{key}.meta"

    def _cache_read(self, key: str) -> BackendResponse | None:
        if self.cache_dir is None:
            return None
        body_path, meta_path = self._cache_paths(key)
        if not body_path.exists() or not meta_path.exists():
            return None
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return BackendResponse(
            body=body_path.read_bytes(),
            media_kind=meta["media_kind"],
            latency_ms=0,
            from_cache=True,
        )

    def _cache_write(self, key: str, capability: Capability, body: bytes, media_kind: str) -> None:
        if self.cache_dir is None:
            return
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        body_path, meta_path = self._cache_paths(key)
        meta = {
            "capability": capability.value,
            "media_kind": media_kind,
            "timestamp": time.time(),
        }
        # write-then-rename keeps concurrent writers of the same key benign
        _atomic_write(body_path, body)
        _atomic_write(meta_path, json.dumps(meta).encode("utf-8"))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _clip_bbox(bbox: tuple[int, ...], width: int, height: int) -> tuple[int, int, int, int] | None:
    x, y, w, h = (int(v) for v in bbox)
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(width, x + w), min(height, y + h)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def _params_tuple(params: dict) -> tuple[tuple[str, str], ...]:
    return tuple((str(k), str(v)) for k, v in params.items())


def _with_default_temperature(params: dict) -> tuple[tuple[str, str], ...]:
    if "temperature" not in params:
        params = {"temperature": 0, **params}
    return _params_tuple(params)


# --- concrete backends ---


class HttpBackend:
    """Generic JSON-over-POST adapter.

    Sends ``{model, prompt, params, images: [base64...]}`` and expects
    ``{"body": str}`` or ``{"body_b64": str}`` plus an optional
    ``"media_kind"``. 429/5xx and transport errors are retryable; other
    4xx are rejected outright.
    """

    def __init__(self, endpoint: str, *, auth_env: str | None = None, model: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint
        self.auth_env = auth_env
        self.model = model
        self.timeout = timeout

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        import requests

        headers = {}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if not token:
                raise BackendRejectedError(f"auth env var {self.auth_env} is empty")
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "capability": request.capability.value,
            "model": self.model,
            "prompt": request.prompt,
            "params": dict(request.params),
            "images": [base64.b64encode(img).decode("ascii") for img in request.images],
        }
        try:
            response = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransientBackendError(str(err)) from err
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"status {response.status_code}")
        if response.status_code >= 400:
            raise BackendRejectedError(f"status {response.status_code}: {response.text[:200]}")
        data = response.json()
        if "body_b64" in data:
            body = base64.b64decode(data["body_b64"])
        else:
            body = str(data.get("body", "")).encode("utf-8")
        return body, data.get("media_kind", "text")


class SubprocessBackend:
    """Run a local command; request JSON on stdin, reply JSON on stdout."""

    def __init__(self, command: list[str], timeout: float = 300.0):
        self.command = command
        self.timeout = timeout

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        payload = {
            "capability": request.capability.value,
            "prompt": request.prompt,
            "params": dict(request.params),
            "images": [base64.b64encode(img).decode("ascii") for img in request.images],
        }
        try:
            proc = subprocess.run(
                self.command,
                input=json.dumps(payload).encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
            )
        except (subprocess.TimeoutExpired, OSError) as err:
            raise TransientBackendError(str(err)) from err
        if proc.returncode == 2:
            raise BackendRejectedError(proc.stderr.decode("utf-8", "replace")[:200])
        if proc.returncode != 0:
            raise TransientBackendError(f"exit {proc.returncode}")
        data = json.loads(proc.stdout.decode("utf-8"))
        if "body_b64" in data:
            body = base64.b64decode(data["body_b64"])
        else:
            body = str(data.get("body", "")).encode("utf-8")
        return body, data.get("media_kind", "text")
