from __future__ import annotations

import pytest
from PIL import Image

from figsmith.errors import (
    BackendRejectedError,
    ExhaustedError,
    InvariantError,
    NoBackendError,
)
from figsmith.gateway import BackendRequest, Capability, Gateway, RateLimiter
from figsmith.mocks import EchoBackend, FlakyBackend, MockOcrBackend, RejectingBackend

from conftest import make_gateway


def _text_request(prompt: str, params=()) -> BackendRequest:
    return BackendRequest(capability=Capability.TEXT, prompt=prompt, params=tuple(params))


def test_echo_backend_roundtrip():
    gw = make_gateway()
    response = gw.call(_text_request("abc"))
    assert response.body == b"abc"
    assert response.from_cache is False


def test_cache_hit_skips_backend(tmp_path):
    gw = Gateway(cache_dir=tmp_path / "cache", sleep=lambda s: None)
    gw.register(Capability.TEXT, EchoBackend())
    request = _text_request("abc")
    first = gw.call(request)
    assert gw.calls[Capability.TEXT] == 1
    second = gw.call(request)
    assert second.from_cache is True
    assert second.body == first.body
    assert gw.calls[Capability.TEXT] == 1  # zero extra backend invocations


def test_param_order_never_changes_cache_key():
    a = _text_request("p", params=(("temperature", "0"), ("model", "m")))
    b = _text_request("p", params=(("model", "m"), ("temperature", "0")))
    assert a.cache_key() == b.cache_key()
    c = _text_request("p", params=(("model", "other"), ("temperature", "0")))
    assert c.cache_key() != a.cache_key()


def test_canonical_form_is_stable_for_images():
    image = b"\x89PNG fake bytes"
    a = BackendRequest(capability=Capability.VISION, prompt="p", images=(image,))
    b = BackendRequest(capability=Capability.VISION, prompt="p", images=(bytes(image),))
    assert a.canonical() == b.canonical()
    assert b"PNG fake" not in a.canonical()  # images travel as hashes


def test_retries_then_exhausted():
    slept = []
    gw = Gateway(sleep=slept.append)
    backend = FlakyBackend(failures=5)
    gw.register(Capability.TEXT, backend)
    with pytest.raises(ExhaustedError):
        gw.call(_text_request("x"))
    assert backend.attempts == 5
    assert slept == [1.0, 2.0, 4.0, 8.0]  # base 1s, factor 2, nondecreasing
    assert slept == sorted(slept)


def test_retry_recovers_after_transient_failures():
    gw = Gateway(sleep=lambda s: None)
    gw.register(Capability.TEXT, FlakyBackend(failures=2))
    response = gw.call(_text_request("hello"))
    assert response.body == b"hello"
    assert gw.calls[Capability.TEXT] == 3


def test_rejected_is_not_retried():
    gw = Gateway(sleep=lambda s: None)
    gw.register(Capability.TEXT, RejectingBackend())
    with pytest.raises(BackendRejectedError):
        gw.call(_text_request("x"))
    assert gw.calls[Capability.TEXT] == 1


def test_missing_backend_errors():
    gw = Gateway()
    with pytest.raises(NoBackendError):
        gw.call(_text_request("x"))


def test_ocr_passthrough_sorted():
    items_cfg = [
        {"text": "below", "bbox": [5, 100, 40, 12], "confidence": 0.9},
        {"text": "Stage 1", "bbox": [10, 10, 100, 20], "confidence": 0.95},
    ]
    gw = make_gateway(ocr_backend=MockOcrBackend({"items": items_cfg}))
    items = gw.ocr(Image.new("RGB", (512, 512), "white"))
    assert [item.text for item in items] == ["Stage 1", "below"]
    assert items[0].bbox == (10, 10, 100, 20)
    assert items[0].confidence == 0.95


def test_ocr_clips_to_image_bounds():
    items_cfg = [{"text": "wide", "bbox": [500, 10, 100, 20], "confidence": 0.9}]
    gw = make_gateway(ocr_backend=MockOcrBackend({"items": items_cfg}))
    items = gw.ocr(Image.new("RGB", (512, 512), "white"))
    assert items[0].bbox == (500, 10, 12, 20)


def test_ocr_empty_for_blank_image():
    gw = make_gateway(ocr_backend=MockOcrBackend({"items": []}))
    assert gw.ocr(Image.new("RGB", (64, 64), "white")) == []


def test_erase_empty_boxes_is_identity():
    gw = make_gateway()
    image = Image.new("RGB", (32, 32), (120, 10, 10))
    out = gw.erase_text(image, [])
    assert out.tobytes() == image.tobytes()
    assert gw.calls[Capability.ERASE] == 0


def test_erase_uniform_background_fills_invisibly():
    gw = make_gateway()
    image = Image.new("RGB", (64, 64), (128, 128, 128))
    out = gw.erase_text(image, [(10, 10, 20, 12)])
    assert out.size == image.size
    assert out.tobytes() == image.tobytes()  # fill equals the uniform surround


def test_erase_out_of_bounds_box_fails_before_backend():
    gw = make_gateway()
    image = Image.new("RGB", (64, 64), "white")
    with pytest.raises(InvariantError):
        gw.erase_text(image, [(60, 60, 10, 10)])
    assert gw.calls[Capability.ERASE] == 0


def test_erase_touches_only_boxes():
    gw = make_gateway()
    image = Image.new("RGB", (64, 64), (200, 200, 200))
    for x in range(20, 30):
        for y in range(20, 26):
            image.putpixel((x, y), (0, 0, 0))
    out = gw.erase_text(image, [(20, 20, 10, 6)])
    for x in range(64):
        for y in range(64):
            inside = 20 <= x < 30 and 20 <= y < 26
            if not inside:
                assert out.getpixel((x, y)) == image.getpixel((x, y))


def test_rate_limiter_waits_when_window_full():
    clock = iter([0.0, 0.0, 1.0, 1.0, 2.0, 61.5, 61.5, 62.0]).__next__
    slept = []
    limiter = RateLimiter(2, clock=clock, sleep=slept.append)
    limiter.acquire()
    limiter.acquire()
    limiter.acquire()  # third call within the minute must wait
    assert slept and slept[0] == pytest.approx(59.0)


def test_default_temperature_zero():
    gw = make_gateway()
    gw.text("TASK: none\nhello")
    # cache key with explicit temperature 0 matches the implicit default
    a = BackendRequest(Capability.TEXT, prompt="p", params=(("temperature", "0"),))
    gw2 = make_gateway()
    assert gw2.text("p") == "p"
    assert a.cache_key() == BackendRequest(Capability.TEXT, prompt="p", params=(("temperature", "0"),)).cache_key()
