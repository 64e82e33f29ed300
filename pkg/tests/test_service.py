import json

import pytest
from fastapi.testclient import TestClient

from scenequery.engine import (
    EvaluationConfig,
    ReportLog,
    evaluate,
    result_payload,
    sweep,
    to_json_bytes,
)
from scenequery.query import from_document, to_document, FeaturePredicate, GreaterThan
from scenequery.repo import QueryRepository
from scenequery.service import PROVENANCE_HEADER, create_app, session_metadata
from scenequery.store import load_bundle


@pytest.fixture()
def client(demo_bundle, tmp_path):
    app = create_app(
        bundles={"demo": demo_bundle},
        repo=QueryRepository(tmp_path / "repo"),
        report_log=ReportLog(tmp_path / "reports.jsonl"),
    )
    return TestClient(app)


def golden_doc(golden_query_path):
    return json.loads(golden_query_path.read_text())


class TestSessions:
    def test_list(self, client):
        res = client.get("/sessions")
        assert res.status_code == 200
        (meta,) = res.json()
        assert meta["session_id"] == "demo"
        assert meta["persons"] == ["A", "B"]
        assert "tracks" not in meta

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_include_tracks(self, client):
        meta = client.get("/sessions/demo", params={"include": "tracks"}).json()
        kinds = {(t["person"], t["feature"]): t["kind"] for t in meta["tracks"]}
        assert kinds[("A", "volume")] == "numeric"
        assert kinds[("A", "nod")] == "event"
        utt = next(t for t in meta["tracks"] if t["feature"] == "utterance" and t["person"] == "A")
        assert utt["data"][0]["text"] == "um well yes um"

    def test_feature_descriptions_served(self, client):
        meta = client.get("/sessions/demo").json()
        assert "nod" in meta["feature_descriptions"]


class TestEvaluate:
    def test_demo_query(self, client, golden_query_path):
        res = client.post("/sessions/demo/evaluate",
                          json={"document": golden_doc(golden_query_path), "person": "A"})
        assert res.status_code == 200
        body = res.json()
        assert body["segments"] == [{"start_s": 2.0, "end_s": 4.0}, {"start_s": 7.0, "end_s": 8.0}]
        assert res.headers[PROVENANCE_HEADER]

    def test_body_equals_module_output(self, client, demo_bundle, golden_query_path):
        doc = golden_doc(golden_query_path)
        res = client.post("/sessions/demo/evaluate", json={"document": doc, "person": "A"})
        node = from_document(golden_query_path.read_text())
        cfg = EvaluationConfig(sampling_period_s=1.0)
        segments, traces = evaluate(node, demo_bundle, "A", cfg)
        expected = to_json_bytes(result_payload(demo_bundle, "A", node, cfg, segments, traces))
        assert res.content == expected

    def test_invalid_ast_422_with_detail(self, client):
        doc = {"schema_version": "1",
               "root": {"kind": "and", "children": [
                   {"kind": "feature", "feature": "nod", "predicate": {"op": "is_active"}}]}}
        res = client.post("/sessions/demo/evaluate", json={"document": doc, "person": "A"})
        assert res.status_code == 422
        assert res.json()["code"] == "validation_failed"
        assert res.json()["detail"][0]["code"] == "arity_violation"

    def test_unknown_person_404(self, client, golden_query_path):
        res = client.post("/sessions/demo/evaluate",
                          json={"document": golden_doc(golden_query_path), "person": "C"})
        assert res.status_code == 404

    def test_missing_feature_409(self, client):
        doc = {"schema_version": "1",
               "root": {"kind": "feature", "feature": "volume", "predicate": {"op": "gt", "threshold": 0.1}}}
        res = client.post("/sessions/demo/evaluate", json={"document": doc, "person": "B"})
        assert res.status_code == 409
        assert res.json()["code"] == "person_missing_feature"

    def test_config_override(self, client, golden_query_path):
        res = client.post("/sessions/demo/evaluate",
                          json={"document": golden_doc(golden_query_path), "person": "A",
                                "config": {"sampling_period_s": 0.5}})
        assert res.json()["config"]["sampling_period_s"] == 0.5


class TestSweep:
    def test_body_equals_module_output(self, client, demo_bundle):
        doc = {"schema_version": "1",
               "root": {"kind": "feature", "feature": "volume", "predicate": {"op": "gt", "threshold": 0.0}}}
        res = client.post("/sessions/demo/sweep", json={
            "document": doc, "person": "A", "parameter_path": "root.threshold",
            "lo": 0.3, "hi": 0.8, "steps": 11})
        assert res.status_code == 200
        node = from_document(json.dumps(doc))
        expected = sweep(node, demo_bundle, "A", EvaluationConfig(sampling_period_s=1.0),
                         "root.threshold", 0.3, 0.8, 11)
        assert res.content == to_json_bytes(expected.to_json())

    def test_steps_below_two_422(self, client, golden_query_path):
        res = client.post("/sessions/demo/sweep", json={
            "document": golden_doc(golden_query_path), "person": "A",
            "parameter_path": "root.1.window_s", "lo": 0.5, "hi": 2.0, "steps": 1})
        assert res.status_code == 422

    def test_bad_parameter_path_422(self, client, golden_query_path):
        res = client.post("/sessions/demo/sweep", json={
            "document": golden_doc(golden_query_path), "person": "A",
            "parameter_path": "root.0.threshold", "lo": 0.0, "hi": 1.0, "steps": 3})
        assert res.status_code == 422
        assert res.json()["code"] == "bad_parameter_path"


class TestReports:
    def test_report_lifecycle(self, client, golden_query_path):
        res = client.post("/sessions/demo/evaluate",
                          json={"document": golden_doc(golden_query_path), "person": "A"})
        token = res.headers[PROVENANCE_HEADER]
        first = client.post("/reports", json={
            "provenance": token, "segment": {"start_s": 2.0, "end_s": 4.0}, "note": "wrong"})
        assert first.status_code == 201
        again = client.post("/reports", json={
            "provenance": token, "segment": {"start_s": 2.0, "end_s": 4.0}})
        assert again.status_code == 200
        assert again.json()["record_id"] == first.json()["record_id"]

    def test_forged_provenance_422(self, client):
        res = client.post("/reports", json={
            "provenance": "f" * 64, "segment": {"start_s": 0.0, "end_s": 1.0}})
        assert res.status_code == 422
        assert res.json()["code"] == "unknown_provenance"


class TestRepoEndpoints:
    def _contribute(self, client, title="Loud", doc=None):
        doc = doc or json.loads(to_document(FeaturePredicate(feature="volume", predicate=GreaterThan(0.5))))
        return client.post("/orgs/acme/queries", json={
            "title": title, "description": "loud speech", "document": doc, "author": "me"})

    def test_contribute_and_search(self, client):
        res = self._contribute(client)
        assert res.status_code == 201
        entry_id = res.json()["entry_id"]
        hits = client.get("/orgs/acme/queries", params={"features": "volume"}).json()
        assert [e["entry_id"] for e in hits] == [entry_id]
        assert client.get("/orgs/acme/queries", params={"text": "loud"}).json()[0]["entry_id"] == entry_id
        assert client.get("/orgs/acme/queries", params={"features": "volume,nod"}).json() == []

    def test_duplicate_contribute_409(self, client):
        first = self._contribute(client)
        dup = self._contribute(client, title="same thing")
        assert dup.status_code == 409
        assert dup.json()["detail"]["duplicate_of"] == first.json()["entry_id"]

    def test_fork_201_with_lineage(self, client):
        entry_id = self._contribute(client).json()["entry_id"]
        res = client.post(f"/orgs/acme/queries/{entry_id}/fork", json={"author": "other"})
        assert res.status_code == 201
        assert res.json()["forked_from"] == entry_id

    def test_fork_missing_404(self, client):
        assert client.post("/orgs/acme/queries/nope/fork", json={}).status_code == 404


class TestMetadataShape:
    def test_session_metadata_no_payloads_by_default(self, demo_bundle):
        meta = session_metadata(demo_bundle)
        assert "tracks" not in meta
        meta_full = session_metadata(demo_bundle, include_tracks=True)
        assert any("data" in t for t in meta_full["tracks"])


class TestNoAddedSemantics:
    """Service response bodies equal module outputs, over random inputs."""

    def test_evaluate_bodies_match_engine_for_random_cases(self, tmp_path):
        import random

        import gen

        rng = random.Random(1312)
        for _ in range(15):
            bundle, node, person = gen.random_case(rng, max_samples=120)
            app = create_app({bundle.session_id: bundle},
                             QueryRepository(tmp_path / "repo"),
                             ReportLog(tmp_path / "reports.jsonl"))
            with TestClient(app) as test_client:
                res = test_client.post(
                    f"/sessions/{bundle.session_id}/evaluate",
                    json={"document": json.loads(to_document(node)), "person": person,
                          "config": {"sampling_period_s": 0.5}})
                assert res.status_code == 200
                cfg = EvaluationConfig(sampling_period_s=0.5)
                segments, traces = evaluate(node, bundle, person, cfg)
                expected = to_json_bytes(result_payload(bundle, person, node, cfg, segments, traces))
                assert res.content == expected


class TestCliParity:
    def test_cli_run_bytes_equal_service_body(self, client, demo_bundle_path,
                                              golden_query_path, tmp_path):
        import subprocess
        import sys

        out = tmp_path / "out.json"
        proc = subprocess.run(
            [sys.executable, "-m", "scenequery.cli", "run",
             "--bundle", str(demo_bundle_path), "--query", str(golden_query_path),
             "--person", "A", "--out", str(out)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        res = client.post("/sessions/demo/evaluate",
                          json={"document": golden_doc(golden_query_path), "person": "A"})
        assert out.read_bytes() == res.content
