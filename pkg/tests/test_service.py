import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from aesthete import autodiff as ad
from aesthete.model import AestheticModel, ModelConfig
from aesthete.server import SessionStore, create_app, heatmap_png

TINY = ModelConfig(
    image_size=16,
    feature_size=4,
    feature_channels=8,
    conv_channels=(4, 6),
    attention_hidden=8,
    attr_hidden=4,
    hyper_hidden=(6, 5),
)


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(AestheticModel(TINY), session_capacity=4), raise_server_exceptions=False)


def png_bytes(seed=0, size=16):
    rng = ad.default_rng(seed)
    arr = (rng.random((size, size, 3)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def upload(client, raw):
    return client.post("/api/evaluate", files={"image": ("test.png", raw, "image/png")})


def test_health(client):
    r = client.get("/api/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "model_loaded": True}


def test_model_info(client):
    r = client.get("/api/model/info")
    body = r.json()
    assert body["image_size"] == 16
    assert len(body["attributes"]) == 11
    assert body["poll_interval"] == 0.5


def test_evaluate_multipart(client):
    r = upload(client, png_bytes())
    assert r.status_code == 200
    body = r.json()
    assert body["image_id"]
    assert -1 < body["overall"]["raw"] < 1
    assert 1 <= body["overall"]["display"] <= 100
    attrs = body["attributes"]
    assert len(attrs) == 11
    weights = [a["weight"] for a in attrs]
    assert weights == sorted(weights, reverse=True)
    assert abs(sum(weights) - 1.0) < 1e-5
    overall = sum(a["weight"] * a["score"] for a in attrs)
    assert abs(body["overall"]["raw"] - overall) < 1e-5


def test_evaluate_base64_matches_multipart(client):
    raw = png_bytes(seed=1)
    r1 = upload(client, raw)
    r2 = client.post("/api/evaluate", json={"image_b64": base64.b64encode(raw).decode()})
    assert r2.status_code == 200
    a, b = r1.json(), r2.json()
    assert a["overall"]["raw"] == b["overall"]["raw"]
    assert a["image_id"] != b["image_id"]  # fresh session per post
    assert [x["score"] for x in a["attributes"]] == [x["score"] for x in b["attributes"]]


def test_evaluate_same_bytes_same_scores(client):
    raw = png_bytes(seed=2)
    r1, r2 = upload(client, raw), upload(client, raw)
    assert r1.json()["overall"]["raw"] == r2.json()["overall"]["raw"]


def test_evaluate_corrupt_payload(client):
    r = upload(client, b"this is not a png")
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "bad_image"


def test_evaluate_bad_base64(client):
    r = client.post("/api/evaluate", json={"image_b64": "!!!not-base64!!!"})
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "bad_image"


def test_evaluate_missing_image_field(client):
    r = client.post("/api/evaluate", json={"nope": 1})
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "missing_image"


def test_evaluate_oversize(client):
    r = client.post("/api/evaluate", json={"image_b64": base64.b64encode(b"x" * (9 * 1024 * 1024)).decode()})
    assert r.status_code == 413
    assert r.json()["error"]["code"] == "payload_too_large"


def test_evaluate_without_model():
    bare = TestClient(create_app(None), raise_server_exceptions=False)
    r = bare.post("/api/evaluate", json={"image_b64": base64.b64encode(png_bytes()).decode()})
    assert r.status_code == 503
    assert r.json()["error"]["code"] == "model_not_loaded"


def test_heatmap_roundtrip(client):
    body = upload(client, png_bytes(seed=3)).json()
    image_id = body["image_id"]
    url = body["attributes"][0]["heatmap_url"]
    assert url == f"/api/heatmap/{image_id}/{body['attributes'][0]['name']}.png"
    r = client.get(url)
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    img = Image.open(io.BytesIO(r.content))
    assert img.size == (16, 16)
    assert img.mode == "L"


def test_heatmap_unknown_session(client):
    r = client.get("/api/heatmap/deadbeef/light.png")
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "unknown_session"


def test_heatmap_unknown_attribute(client):
    image_id = upload(client, png_bytes(seed=4)).json()["image_id"]
    r = client.get(f"/api/heatmap/{image_id}/sparkle.png")
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "unknown_attribute"


def test_heatmap_png_uniform_and_one_hot():
    uniform = np.full((4, 4), 1 / 16)
    png = Image.open(io.BytesIO(heatmap_png(uniform, 16)))
    arr = np.asarray(png)
    assert (arr == 255).all()  # peak-normalized uniform mask is all-white

    hot = np.zeros((4, 4))
    hot[1, 2] = 1.0
    arr = np.asarray(Image.open(io.BytesIO(heatmap_png(hot, 16))))
    assert arr[4:8, 8:12].min() == 255
    total = int(arr.astype(np.int64).sum())
    assert total == 255 * 16  # everything else black


def test_heatmap_preserves_mask_ranks():
    rng = ad.default_rng(5)
    mask = rng.random((4, 4))
    arr = np.asarray(Image.open(io.BytesIO(heatmap_png(mask, 4))))
    flat_mask = mask.reshape(-1)
    flat_png = arr.reshape(-1).astype(np.float64)
    order = np.argsort(flat_mask)
    assert (np.diff(flat_png[order]) >= 0).all()


def test_region_full_image_rect(client):
    image_id = upload(client, png_bytes(seed=6)).json()["image_id"]
    r = client.post("/api/region", json={"image_id": image_id, "rect": [0, 0, 1, 1]})
    assert r.status_code == 200
    body = r.json()
    assert body["text"]
    assert body["template_id"].startswith("region.")


def test_region_zero_area_rect(client):
    image_id = upload(client, png_bytes(seed=7)).json()["image_id"]
    r = client.post("/api/region", json={"image_id": image_id, "rect": [0.5, 0.5, 0.5, 0.9]})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_region"


def test_region_unknown_session(client):
    r = client.post("/api/region", json={"image_id": "nope", "rect": [0, 0, 1, 1]})
    assert r.status_code == 404


def test_session_eviction_is_lru():
    store = SessionStore(capacity=2)
    a = store.put("img_a", "report_a")
    b = store.put("img_b", "report_b")
    assert store.get(a) is not None  # refresh a
    c = store.put("img_c", "report_c")
    assert store.get(b) is None  # b was the least recently used
    assert store.get(a)["image"] == "img_a"
    assert store.get(c)["image"] == "img_c"


def test_evicted_session_returns_404(client):
    ids = [upload(client, png_bytes(seed=10 + i)).json()["image_id"] for i in range(5)]
    r = client.get(f"/api/heatmap/{ids[0]}/light.png")  # capacity 4: first one evicted
    assert r.status_code == 404
    r = client.get(f"/api/heatmap/{ids[-1]}/light.png")
    assert r.status_code == 200
