"""Client for external scorer processes.

An external scorer is a child process speaking line-delimited JSON on
stdin/stdout. The session opens with a handshake:

    -> {"cmd": "hello", "protocol": 1}
    <- {"cmd": "hello", "protocol": 1}

Scoring requests and responses (one JSON object per line):

    -> {"id": "q1", "question": "...", "context": "...",
        "n_tokens": 7, "token_offsets": [[0, 5], ...]}
    <- {"id": "q1", "start_probs": [...], "end_probs": [...]}

Both probability vectors must have n_tokens entries. The client renormalizes
them and logs a warning when a sum deviates from 1 by more than 1e-3.
Training is optional: {"cmd": "train", "samples": [...]} either retrains the
backend or is declined with {"cmd": "unsupported"}, after which the backend
is treated as frozen. A backend that cannot parse a request line must answer
{"id": null, "error": "..."} and keep serving.
"""
from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
from typing import Mapping, Sequence

import numpy as np

from .corpus import ContextDoc, Sample, truncate_question
from .scorer import PredictionPair, ScorerError, SpanPrediction, make_prediction

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
_RENORM_WARN = 1e-3


class ProtocolError(ScorerError):
    """The backend broke the wire protocol; carries the offending line."""

    def __init__(self, message: str, raw_line: str | None = None):
        super().__init__(message if raw_line is None else f"{message}; offending line: {raw_line!r}")
        self.raw_line = raw_line


def _request_payload(sample_id: str, question: str, doc: ContextDoc) -> dict:
    return {
        "id": sample_id,
        "question": question,
        "context": doc.text,
        "n_tokens": len(doc.tokens),
        "token_offsets": [[t.char_start, t.char_end] for t in doc.tokens],
    }


def training_payload(samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> list[dict]:
    out = []
    for s in samples:
        doc = contexts[s.doc_id]
        gold = s.gold_answers[0]
        entry = _request_payload(s.sample_id, s.question, doc)
        entry["gold_start"] = gold.token_start
        entry["gold_end"] = gold.token_end
        out.append(entry)
    return out


class _LineReader:
    """Background reader so response waits can time out cleanly."""

    def __init__(self, stream):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        try:
            for line in stream:
                self._queue.put(line)
        finally:
            self._queue.put(None)

    def readline(self, timeout: float) -> str | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError(f"backend produced no response within {timeout:.1f}s")


class ExternalScorer:
    """Scorer backed by an external process speaking the wire protocol."""

    kind = "external"

    def __init__(self, command: Sequence[str], timeout: float = 30.0, max_span_len: int = 30):
        if not command:
            raise ValueError("command must not be empty")
        self.command = tuple(command)
        self.timeout = timeout
        self.max_span_len = max_span_len
        self.supports_training: bool | None = None
        self._proc: subprocess.Popen | None = None
        self._reader: _LineReader | None = None
        self._counter = 0

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                list(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerError(f"cannot launch scorer backend {self.command}: {exc}") from exc
        self._reader = _LineReader(self._proc.stdout)
        reply = self._roundtrip({"cmd": "hello", "protocol": PROTOCOL_VERSION})
        if reply.get("cmd") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError("backend did not echo the handshake", json.dumps(reply))

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()
        self._proc = None
        self._reader = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    # -- wire level ----------------------------------------------------------

    def _send(self, obj: dict) -> None:
        if self._proc is None or self._proc.stdin is None:
            raise ScorerError("backend process is not running")
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerError(f"backend process died: {exc}") from exc

    def _recv(self) -> dict:
        line = self._reader.readline(self.timeout)
        if line is None:
            raise ProtocolError("backend closed its output stream")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError("backend emitted a non-JSON line", line.rstrip("\n"))
        if not isinstance(obj, dict):
            raise ProtocolError("backend emitted a non-object line", line.rstrip("\n"))
        return obj

    def _roundtrip(self, obj: dict) -> dict:
        self._send(obj)
        return self._recv()

    def _next_id(self, sample_id: str | None) -> str:
        if sample_id is not None:
            return sample_id
        self._counter += 1
        return f"req-{self._counter}"

    def predict_probs(self, question: str, doc: ContextDoc,
                      sample_id: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """One scoring round trip; returns renormalized probability vectors."""
        req_id = self._next_id(sample_id)
        reply = self._roundtrip(_request_payload(req_id, question, doc))
        raw = json.dumps(reply)
        if "error" in reply:
            raise ScorerError(f"backend error for request {req_id!r}: {reply['error']}")
        if reply.get("id") != req_id:
            raise ProtocolError(f"response id {reply.get('id')!r} does not match request {req_id!r}", raw)
        vectors = []
        for key in ("start_probs", "end_probs"):
            values = reply.get(key)
            if not isinstance(values, list) or len(values) != len(doc.tokens):
                raise ProtocolError(f"{key} must be a list of n_tokens={len(doc.tokens)} numbers", raw)
            vec = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                raise ProtocolError(f"{key} must contain finite non-negative numbers", raw)
            total = float(vec.sum())
            if total <= 0:
                raise ProtocolError(f"{key} sums to {total}, cannot renormalize", raw)
            if abs(total - 1.0) > _RENORM_WARN:
                logger.warning("renormalizing %s from backend: sum was %.6f", key, total)
            vectors.append(vec / total)
        return vectors[0], vectors[1]

    # -- scorer interface -----------------------------------------------------

    def retrain(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc], seed: int = 0) -> None:
        """Offer the labeled samples to the backend; frozen backends decline."""
        if self.supports_training is False:
            return
        reply = self._roundtrip({
            "cmd": "train",
            "seed": seed,
            "samples": training_payload(samples, contexts),
        })
        if reply.get("cmd") == "unsupported":
            if self.supports_training is None:
                logger.info("backend declined training; treating it as frozen")
            self.supports_training = False
            return
        if reply.get("cmd") == "train" and reply.get("status") == "ok":
            self.supports_training = True
            return
        raise ProtocolError("unexpected reply to the train command", json.dumps(reply))

    def predict(self, question: str, doc: ContextDoc) -> SpanPrediction:
        if not doc.tokens:
            raise ScorerError(f"context {doc.doc_id!r} has no tokens")
        sp, ep = self.predict_probs(question, doc)
        return make_prediction(doc, sp, ep, self.max_span_len)

    def predict_batch(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> dict[str, SpanPrediction]:
        return {s.sample_id: self.predict(s.question, contexts[s.doc_id]) for s in samples}

    def score_pool(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> dict[str, PredictionPair]:
        out = {}
        for s in samples:
            doc = contexts[s.doc_id]
            out[s.sample_id] = PredictionPair(
                full=self.predict(s.question, doc),
                truncated=self.predict(truncate_question(s.question), doc),
            )
        return out


# ---------------------------------------------------------------- conformance

_GOLDEN_TEXTS = (
    ("The bridge was finished in 1932 after nine years of work .",
     "When was the bridge finished ?"),
    ("Mariners stored salted cod in oak barrels below deck .",
     "What did mariners store below deck ?"),
    ("A single word , yes .", "Which word ?"),
)


def golden_requests() -> list[dict]:
    """Fixed request battery used by the protocol checker."""
    from .corpus import tokenize

    out = []
    for i, (context, question) in enumerate(_GOLDEN_TEXTS):
        tokens = tokenize(context)
        out.append({
            "id": f"golden-{i}",
            "question": question,
            "context": context,
            "n_tokens": len(tokens),
            "token_offsets": [[t.char_start, t.char_end] for t in tokens],
        })
    return out


def run_protocol_check(command: Sequence[str], timeout: float = 10.0) -> list[str]:
    """Run the conformance battery against a backend command.

    Returns a list of violation descriptions; an empty list means the backend
    conforms. Checks: handshake echo, id echo, vector lengths, finite
    non-negative entries, probability mass within 1e-6 of 1, recovery after a
    malformed line, and a sane reply to the optional train command.
    """
    violations: list[str] = []
    try:
        proc = subprocess.Popen(list(command), stdin=subprocess.PIPE,
                                stdout=subprocess.PIPE, text=True, bufsize=1)
    except OSError as exc:
        return [f"backend not launchable: {exc}"]
    reader = _LineReader(proc.stdout)

    def send_line(text: str) -> None:
        try:
            proc.stdin.write(text + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            violations.append("backend closed stdin early")

    def recv() -> dict | None:
        try:
            line = reader.readline(timeout)
        except ProtocolError as exc:
            violations.append(str(exc))
            return None
        if line is None:
            violations.append("backend closed its output stream")
            return None
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            violations.append(f"non-JSON line from backend: {line.rstrip()!r}")
            return None
        if not isinstance(obj, dict):
            violations.append(f"non-object line from backend: {line.rstrip()!r}")
            return None
        return obj

    def check_response(req: dict, reply: dict | None, label: str) -> None:
        if reply is None:
            return
        if "error" in reply:
            violations.append(f"{label}: backend answered with an error: {reply.get('error')!r}")
            return
        if reply.get("id") != req["id"]:
            violations.append(f"{label}: response id {reply.get('id')!r} != request id {req['id']!r}")
        for key in ("start_probs", "end_probs"):
            values = reply.get(key)
            if not isinstance(values, list) or len(values) != req["n_tokens"]:
                violations.append(f"{label}: {key} is not a list of n_tokens={req['n_tokens']} numbers")
                continue
            vec = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                violations.append(f"{label}: {key} has negative or non-finite entries")
                continue
            total = float(vec.sum())
            if abs(total - 1.0) > 1e-6:
                violations.append(f"{label}: {key} mass {total:.9f} deviates from 1 by more than 1e-6")

    try:
        # 1. handshake
        send_line(json.dumps({"cmd": "hello", "protocol": PROTOCOL_VERSION}))
        hello = recv()
        if hello is not None and (hello.get("cmd") != "hello" or hello.get("protocol") != PROTOCOL_VERSION):
            violations.append(f"handshake not echoed: {hello!r}")

        # 2. golden requests
        requests = golden_requests()
        for req in requests:
            send_line(json.dumps(req))
            check_response(req, recv(), req["id"])

        # 3. malformed line, then a valid request again
        send_line("this is not json {")
        reply = recv()
        if reply is not None and "error" not in reply:
            violations.append(f"no error object after malformed line: {reply!r}")
        retry = dict(requests[0], id="golden-retry")
        send_line(json.dumps(retry))
        check_response(retry, recv(), "golden-retry")

        # 4. train probe: retraining or a clean decline are both fine
        send_line(json.dumps({"cmd": "train", "samples": []}))
        reply = recv()
        if reply is not None:
            ok_decline = reply.get("cmd") == "unsupported"
            ok_train = reply.get("cmd") == "train" and reply.get("status") == "ok"
            if not (ok_decline or ok_train):
                violations.append(f"unexpected reply to train probe: {reply!r}")
    finally:
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except Exception:
            proc.kill()
    return violations
