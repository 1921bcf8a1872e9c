"""Wire-protocol contract for any embedding service implementation.

By default these run against the in-process stub; set EMBED_SERVICE_URL to
point them at a real deployment (the embedding microservice runs them in its
own CI against a live instance).
"""

import math
import os

import pytest
import requests

from stub_service import running_stub

TIMEOUT = 10


@pytest.fixture(scope="module")
def service_url():
    external = os.environ.get("EMBED_SERVICE_URL")
    if external:
        yield external.rstrip("/")
        return
    with running_stub(dim=16) as stub:
        yield stub.url


class TestHealth:
    def test_health_reports_ok_and_dim(self, service_url):
        resp = requests.get(f"{service_url}/health", timeout=TIMEOUT)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["status"] == "ok"
        assert payload["dim"] >= 2
        assert payload["model"]


class TestEmbedContract:
    def post(self, service_url, body):
        return requests.post(f"{service_url}/embed", json=body, timeout=TIMEOUT)

    def test_shape_and_dim(self, service_url):
        resp = self.post(service_url, {"texts": ["a small motor bike"]})
        assert resp.status_code == 200
        payload = resp.json()
        assert len(payload["vectors"]) == 1
        assert len(payload["vectors"][0]) == payload["dim"]

    def test_unit_norm(self, service_url):
        resp = self.post(service_url, {"texts": ["a motor", "the tall fence"]})
        for vec in resp.json()["vectors"]:
            norm = math.sqrt(sum(x * x for x in vec))
            assert abs(norm - 1.0) < 1e-6

    def test_deterministic_across_requests(self, service_url):
        a = self.post(service_url, {"texts": ["dog that quickly runs"]}).json()["vectors"][0]
        b = self.post(service_url, {"texts": ["dog that quickly runs"]}).json()["vectors"][0]
        assert a == b

    def test_identical_texts_in_one_batch_identical(self, service_url):
        vectors = self.post(service_url, {"texts": ["same text", "same text"]}).json()["vectors"]
        assert vectors[0] == vectors[1]

    def test_batch_cap_enforced(self, service_url):
        resp = self.post(service_url, {"texts": ["x"] * 65})
        assert resp.status_code == 413

    def test_batch_at_cap_accepted(self, service_url):
        resp = self.post(service_url, {"texts": [f"t{i}" for i in range(64)]})
        assert resp.status_code == 200
        assert len(resp.json()["vectors"]) == 64

    def test_malformed_body_rejected(self, service_url):
        assert self.post(service_url, {"wrong": []}).status_code == 400
        assert self.post(service_url, {"texts": "not a list"}).status_code == 400
        assert self.post(service_url, {"texts": []}).status_code == 400
