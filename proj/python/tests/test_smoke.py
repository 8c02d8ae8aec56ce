import json
import math
import os
import shutil
from pathlib import Path

import jsonschema
import pytest

import topictrail as tt

FIXTURES = Path(os.environ["TOPICTRAIL_FIXTURES"])
SCHEMAS = Path(os.environ["TOPICTRAIL_SCHEMAS"])


@pytest.fixture()
def staged(tmp_path):
    shutil.copytree(FIXTURES / "processed", tmp_path / "corpus")
    shutil.copytree(FIXTURES / "model", tmp_path / "model")
    return tmp_path


@pytest.fixture()
def loaded(staged):
    corpus = tt.Corpus.load(staged / "corpus")
    beta = tt.BetaTensor.load(staged / "model", staged / "corpus")
    return corpus, beta


def schema(name):
    return json.loads((SCHEMAS / f"{name}.json").read_text())


def test_corpus_round_trip(loaded, tmp_path):
    corpus, _ = loaded
    assert corpus.num_docs == 30
    assert corpus.timestamps == ["2019", "2020", "2021"]
    corpus.save(tmp_path / "copy")
    again = tt.Corpus.load(tmp_path / "copy")
    assert again.checksum == corpus.checksum
    assert again.doc_ids() == corpus.doc_ids()


def test_preprocess_matches_fixture():
    docs = [json.loads(line) for line in (FIXTURES / "docs.jsonl").read_text().splitlines() if line.strip()]
    corpus = tt.preprocess(docs)
    bundled = tt.Corpus.load(FIXTURES / "processed")
    assert corpus.vocab == bundled.vocab
    assert corpus.doc_ids() == bundled.doc_ids()


def test_beta_rows_are_distributions(loaded):
    _, beta = loaded
    T, K, V = beta.shape
    for t in range(T):
        for k in range(K):
            assert math.isclose(sum(beta.at(t, k, v) for v in range(V)), 1.0, abs_tol=1e-4)
    assert len(beta.trajectory(0, beta.vocab[0])) == T


def test_bad_tensor_raises_with_code():
    with pytest.raises(tt.TopicTrailError) as info:
        tt.BetaTensor(1, 1, [0.9, 0.9], ["a", "b"], ["2019"])
    assert info.value.code == "NotADistribution"


def test_unknown_term_code(loaded):
    _, beta = loaded
    with pytest.raises(tt.TopicTrailError) as info:
        beta.trajectory(0, "notaword")
    assert info.value.code == "UnknownTerm"


def test_evaluate_is_consistent(loaded):
    corpus, beta = loaded
    q = tt.evaluate(beta, corpus)
    assert len(q["per_topic"]) == 2
    for row in q["per_topic"]:
        assert row["ttq"] == pytest.approx(row["ttc"] * row["tts"], abs=1e-12)
    assert q["ttq"] == pytest.approx(sum(r["ttq"] for r in q["per_topic"]) / 2, abs=1e-12)


def test_npmi_bounds(loaded):
    corpus, _ = loaded
    a, b = corpus.vocab[:2]
    assert -1.0 <= tt.npmi(corpus, a, b) <= 1.0
    assert tt.npmi(corpus, a, a) == 1.0


def test_salient_sorted(loaded):
    _, beta = loaded
    words = tt.salient(beta, 0, limit=5)
    assert len(words) == 5
    finals = [w["s_final"] for w in words]
    assert finals == sorted(finals, reverse=True)
    for w in words:
        assert w["s_final"] == pytest.approx(w["s_burst"] * w["s_spec"] * w["s_uniq"], rel=1e-9)


def test_retriever(loaded):
    corpus, _ = loaded
    r = tt.Retriever(corpus)
    hits = r.retrieve("rbi", 0)
    assert sorted(h["id"] for h in hits) == sorted(r.postings("rbi", 0))
    assert hits[0]["relevance"] == max(h["relevance"] for h in hits)
    assert hits and all(h["highlights"] for h in hits)
    assert tt.highlight("Credit card and credit_card", "credit_card") == [(0, 11), (16, 27)]


def test_cache_key_is_hex_and_sensitive():
    k = tt.cache_key("hello")
    assert len(k) == 64 and int(k, 16) >= 0
    assert tt.cache_key("hello", system="s") != k
    assert tt.cache_key("hello", max_tokens=16) != k


def test_label_through_stub(loaded, tmp_path):
    _, beta = loaded
    stub = tt.StubLlm()
    try:
        first = tt.label_topic(beta, 0, tmp_path / "cache", stub.endpoint)
        again = tt.label_topic(beta, 0, tmp_path / "cache", stub.endpoint)
        assert first == again and first
        assert stub.calls == 1
        assert beta.top_words(0, 0)[0] in tt.label_prompt(beta, 0)
    finally:
        stub.stop()


def test_service_responses_match_schemas(staged):
    stub = tt.StubLlm()
    try:
        svc = tt.Service(staged / "corpus", staged / "model", stub.endpoint)
        checks = [
            ("/api/meta", {}, "meta"),
            ("/api/topics", {}, "topics"),
            ("/api/topics/0/salient", {"limit": "4"}, "salient"),
            ("/api/topics/1/trend", {"words": "rbi"}, "trend"),
            ("/api/metrics", {}, "metrics"),
            ("/api/retrieve", {"word": "rbi", "time": "0"}, "retrieve"),
        ]
        for path, query, name in checks:
            status, body = svc.handle("GET", path, query)
            assert status == 200, (path, body)
            jsonschema.validate(body, schema(name))
        status, body = svc.handle("GET", "/api/topics/9/salient")
        assert status == 404
        jsonschema.validate(body, schema("error"))
        assert stub.calls == 0

        status, body = svc.handle("POST", "/api/sessions", body=json.dumps({"word": "rbi", "time": 0}))
        assert status == 201
        status, body = svc.handle("POST", f"/api/sessions/{body['session_id']}/chat",
                                  body=json.dumps({"message": "What did the RBI do?"}))
        assert status == 200 and body["reply"] != tt.REFUSAL
    finally:
        stub.stop()
