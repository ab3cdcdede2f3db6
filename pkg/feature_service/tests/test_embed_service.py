import math

import numpy as np
from fastapi.testclient import TestClient

from feature_service.encoders import TinyEncoder
from feature_service.errors import EncoderError
from feature_service.service import build_app


def client():
    return TestClient(build_app(TinyEncoder()))


def test_healthz():
    resp = client().get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "model": "tiny", "dim": 10}


def test_single_text():
    resp = client().post("/embed_text", json={"texts": ["a dog runs on grass"]})
    assert resp.status_code == 200
    vecs = resp.json()["embeddings"]
    assert len(vecs) == 1
    assert len(vecs[0]) == 10
    assert abs(math.sqrt(sum(x * x for x in vecs[0])) - 1.0) <= 1e-4


def test_batch_order_matches_encoder():
    texts = ["red light", "green light", "no light at all"]
    resp = client().post("/embed_text", json={"texts": texts})
    got = np.asarray(resp.json()["embeddings"])
    want = TinyEncoder().encode_texts(texts)
    assert np.allclose(got, want, atol=1e-6)


def test_empty_list():
    resp = client().post("/embed_text", json={"texts": []})
    assert resp.status_code == 200
    assert resp.json() == {"embeddings": []}


def test_malformed_bodies_rejected():
    c = client()
    assert c.post("/embed_text", json={"nope": 1}).status_code == 422
    assert c.post("/embed_text", json={"texts": "just a string"}).status_code == 422
    assert c.post("/embed_text", json={"texts": [1, 2]}).status_code == 422
    assert c.post("/embed_text", content=b"not json").status_code == 422


class BrokenEncoder:
    name = "broken"
    dim = 10

    def encode_texts(self, texts):
        raise EncoderError("weights melted")

    def encode_images(self, images):
        raise EncoderError("weights melted")


def test_encoder_failure_maps_to_500():
    c = TestClient(build_app(BrokenEncoder()))
    resp = c.post("/embed_text", json={"texts": ["anything"]})
    assert resp.status_code == 500
    assert "weights melted" in resp.json()["detail"]
