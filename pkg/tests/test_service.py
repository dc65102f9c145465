import base64
import io
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from tgan.service import StubProvider, create_app, decode_request, encode_png


def png_b64(arr_uint8):
    buf = io.BytesIO()
    Image.fromarray(arr_uint8).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def sketch_b64(size=64):
    s = np.zeros((size, size), dtype=np.uint8)
    s[8 : size - 8, 8] = 255
    s[8, 8 : size - 8] = 255
    return png_b64(s)


def texture_b64():
    tex = np.tile(np.array([[40, 220]], dtype=np.uint8), (8, 8))
    return png_b64(np.stack([tex] * 3, axis=-1))


def valid_body(size=64):
    return {
        "sketch": sketch_b64(size),
        "texture_patches": [{"image": texture_b64(), "x": 16, "y": 16, "w": 16, "h": 16}],
        "color_patches": [{"rgb": "#cc2200", "x": 20, "y": 20, "w": 8, "h": 8}],
        "resolution": size,
    }


@pytest.fixture()
def client():
    app = create_app(lambda: StubProvider(64))
    with TestClient(app) as c:
        for _ in range(100):
            if c.get("/v1/health").status_code == 200:
                break
            time.sleep(0.02)
        yield c


def test_health_reports_checkpoint_and_resolution(client):
    body = client.get("/v1/health").json()
    assert body == {"status": "ok", "checkpoint_id": "stub-64", "resolution": 64}


def test_health_is_503_while_loading():
    gate = threading.Event()

    def slow_factory():
        gate.wait(5)
        return StubProvider(64)

    app = create_app(slow_factory)
    with TestClient(app) as c:
        assert c.get("/v1/health").status_code == 503
        assert c.get("/v1/health").json()["status"] == "loading"
        assert c.post("/v1/synthesize", json=valid_body()).status_code == 503
        gate.set()
        for _ in range(100):
            if c.get("/v1/health").status_code == 200:
                break
            time.sleep(0.02)
        assert c.get("/v1/health").status_code == 200


def test_checkpoint_id_stable_across_requests(client):
    ids = {client.get("/v1/health").json()["checkpoint_id"] for _ in range(3)}
    assert len(ids) == 1


def test_valid_request_returns_png_at_requested_resolution(client):
    r = client.post("/v1/synthesize", json=valid_body())
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert "X-Duration-Ms" in r.headers
    img = Image.open(io.BytesIO(r.content))
    assert img.size == (64, 64)


def test_identical_requests_byte_identical(client):
    body = valid_body()
    r1 = client.post("/v1/synthesize", json=body)
    r2 = client.post("/v1/synthesize", json=body)
    assert r1.content == r2.content


def test_determinism_across_server_restarts():
    body = valid_body()
    contents = []
    for _ in range(2):
        app = create_app(lambda: StubProvider(64))
        with TestClient(app) as c:
            while c.get("/v1/health").status_code != 200:
                time.sleep(0.02)
            contents.append(c.post("/v1/synthesize", json=body).content)
    assert contents[0] == contents[1]


def test_truncated_base64_names_sketch_field(client):
    body = valid_body()
    body["sketch"] = body["sketch"][:-10] + "!!"
    r = client.post("/v1/synthesize", json=body)
    assert r.status_code == 400
    assert r.json()["errors"][0]["field"] == "sketch"


def test_undecodable_texture_names_its_field(client):
    body = valid_body()
    body["texture_patches"][0]["image"] = base64.b64encode(b"junk").decode()
    r = client.post("/v1/synthesize", json=body)
    assert r.status_code == 400
    assert "texture_patches[0]" in r.json()["errors"][0]["field"]


def test_missing_sketch_field_is_400(client):
    r = client.post("/v1/synthesize", json={"resolution": 64})
    assert r.status_code == 400
    assert any("sketch" in e["field"] for e in r.json()["errors"])


def test_unsupported_resolution_is_422(client):
    r = client.post("/v1/synthesize", json={**valid_body(), "resolution": 96})
    assert r.status_code == 422
    assert "96" in r.json()["detail"]


def test_out_of_bounds_rect_is_400(client):
    body = valid_body()
    body["texture_patches"][0].update(x=60, y=60)
    r = client.post("/v1/synthesize", json=body)
    assert r.status_code == 400
    assert "texture_patches[0]" in r.json()["errors"][0]["field"]


def test_inflight_limit_returns_429():
    app = create_app(lambda: StubProvider(64), max_inflight=1)
    with TestClient(app) as c:
        while c.get("/v1/health").status_code != 200:
            time.sleep(0.02)
        assert app.state.inflight.acquire(blocking=False)
        try:
            r = c.post("/v1/synthesize", json=valid_body())
            assert r.status_code == 429
        finally:
            app.state.inflight.release()
        assert c.post("/v1/synthesize", json=valid_body()).status_code == 200


def test_cors_headers_present(client):
    r = client.options(
        "/v1/synthesize",
        headers={
            "Origin": "http://localhost:5173",
            "Access-Control-Request-Method": "POST",
        },
    )
    assert r.headers.get("access-control-allow-origin") in ("*", "http://localhost:5173")


def test_stub_renders_patch_content():
    provider = StubProvider(64)
    from tgan.service import SynthesizeDTO

    dto = SynthesizeDTO(**valid_body())
    req = decode_request(dto)
    rgb, meta = provider.synthesize(req)
    # texture region is no longer white
    assert rgb[18:30, 18:30].mean() < 0.95
    assert meta["checkpoint_id"] == "stub-64"


def test_encode_png_is_deterministic():
    rng = np.random.default_rng(0)
    arr = rng.random((16, 16, 3))
    assert encode_png(arr) == encode_png(arr)
