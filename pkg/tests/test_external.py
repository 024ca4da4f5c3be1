"""External scorer client and the protocol conformance battery, exercised
against the configurable fake backend in tests/fake_backend.py."""
import logging
import os
import sys

import numpy as np
import pytest

from qaplan.external import (ExternalScorer, ProtocolError, golden_requests,
                             run_protocol_check, training_payload)
from qaplan.scorer import ScorerError
from tests.conftest import make_dataset

BACKEND = os.path.join(os.path.dirname(__file__), "fake_backend.py")


def backend_cmd(mode):
    return [sys.executable, BACKEND, mode]


def dataset():
    return make_dataset("ext", [
        ("d0", "one two three four five", [("s0", "which token ?", "three")]),
        ("d1", "alpha beta gamma", [("s1", "find beta ?", "beta")]),
    ])


# ------------------------------------------------------------- happy path

def test_external_scorer_round_trip():
    ds = dataset()
    with ExternalScorer(backend_cmd("good")) as scorer:
        sp, ep = scorer.predict_probs("which token ?", ds.contexts["d0"])
        np.testing.assert_allclose(sp, np.full(5, 0.2), atol=1e-12)
        np.testing.assert_allclose(ep, np.full(5, 0.2), atol=1e-12)
        pred = scorer.predict("which token ?", ds.contexts["d0"])
        assert pred.best_span == (0, 0)  # uniform: ties resolve to the earliest pair
        batch = scorer.predict_batch(ds.samples, ds.contexts)
        assert set(batch) == {"s0", "s1"}
        pairs = scorer.score_pool(ds.samples, ds.contexts)
        assert pairs["s1"].full.start_probs.size == 3


def test_external_scorer_training_decline_and_accept():
    ds = dataset()
    with ExternalScorer(backend_cmd("good")) as scorer:
        scorer.retrain(list(ds.samples), ds.contexts)
        assert scorer.supports_training is False
        scorer.retrain(list(ds.samples), ds.contexts)  # stays quiet once declined
        assert scorer.supports_training is False
    with ExternalScorer(backend_cmd("trainable")) as scorer:
        scorer.retrain(list(ds.samples), ds.contexts)
        assert scorer.supports_training is True


def test_external_scorer_renormalizes_with_warning(caplog):
    ds = dataset()
    with ExternalScorer(backend_cmd("badsum")) as scorer:
        with caplog.at_level(logging.WARNING, logger="qaplan.external"):
            sp, ep = scorer.predict_probs("q ?", ds.contexts["d1"])
    assert sp.sum() == pytest.approx(1.0, abs=1e-12)
    assert ep.sum() == pytest.approx(1.0, abs=1e-12)
    assert any("renormalizing" in r.message for r in caplog.records)


def test_external_scorer_silent_renormalization_under_threshold(caplog):
    ds = dataset()
    with ExternalScorer(backend_cmd("offsum")) as scorer:
        with caplog.at_level(logging.WARNING, logger="qaplan.external"):
            sp, _ = scorer.predict_probs("q ?", ds.contexts["d1"])
    assert sp.sum() == pytest.approx(1.0, abs=1e-12)
    assert not any("renormalizing" in r.message for r in caplog.records)


# ------------------------------------------------------------- violations

def test_external_scorer_rejects_wrong_vector_length():
    ds = dataset()
    with ExternalScorer(backend_cmd("wronglen")) as scorer:
        with pytest.raises(ProtocolError):
            scorer.predict_probs("q ?", ds.contexts["d0"])


def test_external_scorer_rejects_wrong_id():
    ds = dataset()
    with ExternalScorer(backend_cmd("wrongid")) as scorer:
        with pytest.raises(ProtocolError):
            scorer.predict_probs("q ?", ds.contexts["d0"])


def test_external_scorer_rejects_bad_handshake():
    scorer = ExternalScorer(backend_cmd("nohello"))
    with pytest.raises(ProtocolError):
        scorer.start()
    scorer.close()


def test_external_scorer_surfaces_backend_errors():
    ds = dataset()
    with ExternalScorer(backend_cmd("error")) as scorer:
        with pytest.raises(ScorerError):
            scorer.predict_probs("q ?", ds.contexts["d0"])


def test_external_scorer_times_out_on_silent_backend():
    ds = dataset()
    with ExternalScorer(backend_cmd("hang"), timeout=1.5) as scorer:
        with pytest.raises(ProtocolError, match="no response"):
            scorer.predict_probs("q ?", ds.contexts["d0"])


def test_external_scorer_rejects_empty_command():
    with pytest.raises(ValueError):
        ExternalScorer([])


def test_external_scorer_unlaunchable_command():
    scorer = ExternalScorer(["/nonexistent-backend-binary"])
    with pytest.raises(ScorerError):
        scorer.start()


# ------------------------------------------------------- protocol battery

def test_golden_requests_are_self_consistent():
    reqs = golden_requests()
    assert len(reqs) >= 3
    for req in reqs:
        assert req["n_tokens"] == len(req["token_offsets"])
        for (a, b), _ in zip(req["token_offsets"], range(req["n_tokens"])):
            assert 0 <= a < b <= len(req["context"])


def test_protocol_check_passes_conforming_backends():
    assert run_protocol_check(backend_cmd("good")) == []
    assert run_protocol_check(backend_cmd("trainable")) == []


@pytest.mark.parametrize("mode,needle", [
    ("wronglen", "start_probs"),
    ("badsum", "mass"),
    ("offsum", "mass"),
    ("nohello", "handshake"),
    ("noerror", "malformed"),
    ("wrongid", "id"),
    ("error", "error"),
])
def test_protocol_check_flags_violations(mode, needle):
    violations = run_protocol_check(backend_cmd(mode))
    assert violations, mode
    assert any(needle in v for v in violations), (mode, violations)


def test_protocol_check_unlaunchable():
    violations = run_protocol_check(["/nonexistent-backend-binary"])
    assert violations and "not launchable" in violations[0]


# ------------------------------------------------------------- train payload

def test_training_payload_shape():
    ds = dataset()
    payload = training_payload(ds.samples, ds.contexts)
    assert [p["id"] for p in payload] == ["s0", "s1"]
    first = payload[0]
    assert first["question"] == "which token ?"
    assert first["context"] == "one two three four five"
    assert first["n_tokens"] == 5
    assert first["token_offsets"][2] == [8, 13]
    assert first["gold_start"] == 2 and first["gold_end"] == 2
