"""Client for the pragma-score v1 wire protocol.

Exposes a remote scoring service as an ordinary
:class:`~pragmadecode.models.ConditionalSequenceModel`, so real neural
backends can drive every pragmatic decoder unchanged.  The protocol is
line-delimited JSON over a stdio subprocess or a TCP connection; see
PROTOCOL.md at the repository root for the frozen field names.

All search stays local; the remote side only scores.  Token surfaces are
exchanged once at handshake and every later message carries vocabulary
indices, so the wire layer never worries about tokenization.  Exact zeros
travel as JSON ``null`` (JSON has no ``-Infinity`` literal).
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Sequence, Union

from .core import (
    NEG_INF,
    LogDistribution,
    PragmaticsError,
    Sentence,
    Vocabulary,
    logsumexp,
)
from .models import ConditionalSequenceModel, MissingEntry, NormalizationError
from .core import UnknownToken

PROTOCOL_VERSION = "pragma-score v1"

#: Maximum tolerated log-sum-exp drift in a remote distribution; anything
#: larger is a genuinely broken backend, not transport noise.
REMOTE_NORMALIZATION_TOLERANCE = 1e-6


class HandshakeFailed(PragmaticsError):
    """The server did not complete a valid protocol handshake."""


class Timeout(PragmaticsError):
    """The server did not answer within the configured deadline."""


class ProtocolError(PragmaticsError):
    """Malformed message, id mismatch, or unexpected response shape."""


@dataclass(frozen=True)
class ScorerEndpoint:
    """Where and how to reach a scoring service.

    ``address`` is a shell-style command line for the stdio-subprocess
    transport, or ``host:port`` for TCP.  ``identity_tag`` is the
    organizational label the evaluation harness uses for its independence
    check; it is chosen by the client, not the server.
    """

    transport: str
    address: str
    timeout_ms: int = 10000
    identity_tag: str = ""

    def __post_init__(self) -> None:
        if self.transport not in ("stdio-subprocess", "tcp"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if not self.identity_tag:
            raise ValueError("identity_tag must be nonempty")


# ---------------------------------------------------------------------------
# Wire encoding
# ---------------------------------------------------------------------------


def _encode_logprob(value: float) -> Any:
    return None if value == NEG_INF else value


def _decode_logprob(value: Any) -> float:
    if value is None:
        return NEG_INF
    if isinstance(value, (int, float)):
        return float(value)
    raise ProtocolError(f"logprob field holds {value!r}, not a number or null")


def encode_message(message: dict) -> str:
    return json.dumps(message, separators=(",", ":"), allow_nan=False)


def decode_message(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable message: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("messages must be JSON objects")
    return obj


# ---------------------------------------------------------------------------
# Connection plumbing
# ---------------------------------------------------------------------------


class _Connection:
    """One request/response pipeline with a background reader thread.

    Wire access is serialized by a lock: a request is written and its
    response awaited before the next request goes out, so responses can be
    matched to requests by the echoed id alone.
    """

    def __init__(self, endpoint: ScorerEndpoint):
        self._endpoint = endpoint
        self._timeout = endpoint.timeout_ms / 1000.0
        self._lock = threading.Lock()
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._next_id = 0
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None

        if endpoint.transport == "stdio-subprocess":
            self._proc = subprocess.Popen(
                shlex.split(endpoint.address),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
            self._writer = self._proc.stdin
            reader = self._proc.stdout
        else:
            host, _, port = endpoint.address.rpartition(":")
            if not host or not port.isdigit():
                raise ValueError(f"tcp address must be host:port, got {endpoint.address!r}")
            self._sock = socket.create_connection((host, int(port)), timeout=self._timeout)
            self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")
            reader = self._sock.makefile("r", encoding="utf-8")

        def pump() -> None:
            try:
                for line in reader:
                    self._lines.put(line)
            except (OSError, ValueError):
                pass
            self._lines.put(None)

        self._reader_thread = threading.Thread(target=pump, daemon=True)
        self._reader_thread.start()

    def round_trip(self, message: dict) -> dict:
        with self._lock:
            self._next_id += 1
            message = {"id": self._next_id, **message}
            try:
                self._writer.write(encode_message(message) + "\n")
                self._writer.flush()
            except (OSError, ValueError) as exc:
                raise ProtocolError(f"failed to send request: {exc}") from None
            try:
                line = self._lines.get(timeout=self._timeout)
            except queue.Empty:
                raise Timeout(
                    f"no response within {self._endpoint.timeout_ms} ms"
                ) from None
            if line is None:
                raise ProtocolError("connection closed by server")
            response = decode_message(line)
            if response.get("id") != message["id"]:
                raise ProtocolError(
                    f"response id {response.get('id')!r} does not echo request id {message['id']}"
                )
            return response

    def close(self) -> None:
        try:
            self._writer.close()
        except OSError:
            pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# Batch requests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NextTokenRequest:
    source: Sentence
    prefix: Sentence


@dataclass(frozen=True)
class SequenceLogprobRequest:
    source: Sentence
    sentence: Sentence


@dataclass(frozen=True)
class ItemError:
    """A per-item failure inside a batch; the batch itself succeeded."""

    code: str
    message: str


BatchRequest = Union[NextTokenRequest, SequenceLogprobRequest]
BatchResult = Union[LogDistribution, float, ItemError]


def _encode_item(request: BatchRequest) -> dict:
    if isinstance(request, NextTokenRequest):
        return {
            "kind": "next_token_logprobs",
            "source": list(request.source.tokens),
            "prefix": list(request.prefix.tokens),
        }
    if isinstance(request, SequenceLogprobRequest):
        return {
            "kind": "sequence_logprob",
            "source": list(request.source.tokens),
            "sentence": list(request.sentence.tokens),
        }
    raise TypeError(f"unsupported batch request {request!r}")


# ---------------------------------------------------------------------------
# The remote model
# ---------------------------------------------------------------------------


class RemoteModel(ConditionalSequenceModel):
    """A ConditionalSequenceModel whose scoring lives behind the wire.

    Distributions coming off the wire are validated against the local
    invariants before use: wrong array length or an id mismatch is a
    protocol error; log-sum-exp drift beyond 1e-6 is a normalization
    error; drift within tolerance is silently renormalized.
    """

    def __init__(self, connection: _Connection, endpoint: ScorerEndpoint, handshake: dict):
        self._connection = connection
        self.identity_tag = endpoint.identity_tag
        try:
            self.source_vocab = Vocabulary(tuple(handshake["source_vocab"]))
            self.target_vocab = Vocabulary(tuple(handshake["target_vocab"]))
            self.model_tag = str(handshake["model_tag"])
            eos_id = handshake["eos_id"]
        except (KeyError, TypeError, ValueError) as exc:
            raise HandshakeFailed(f"bad handshake response: {exc}") from None
        if eos_id != self.target_vocab.eos_id:
            raise HandshakeFailed(
                f"server eos_id {eos_id} but target vocabulary ends at {self.target_vocab.eos_id}"
            )

    def _scoring_response(self, message: dict, expected_kind: str) -> dict:
        response = self._connection.round_trip(message)
        kind = response.get("kind")
        if kind == "error":
            raise _error_for(response)
        if kind != expected_kind:
            raise ProtocolError(f"expected {expected_kind!r} response, got {kind!r}")
        return response

    def _dist_from_array(self, values: Any) -> LogDistribution:
        if not isinstance(values, list) or len(values) != len(self.target_vocab):
            raise ProtocolError(
                f"logprobs array must have length {len(self.target_vocab)}"
            )
        logweights = [_decode_logprob(v) for v in values]
        drift = logsumexp(logweights)
        if drift == NEG_INF or abs(drift) > REMOTE_NORMALIZATION_TOLERANCE:
            raise NormalizationError(
                f"remote distribution has log-sum-exp {drift!r}"
            )
        support = tuple(self.target_vocab.token_ids())
        return LogDistribution(
            support,
            tuple(w - drift if w > NEG_INF else NEG_INF for w in logweights),
        )

    def next_token_dist(self, source: Sentence, prefix: Sentence) -> LogDistribution:
        self._check_query(source, prefix)
        response = self._scoring_response(
            {
                "kind": "next_token_logprobs",
                "source": list(source.tokens),
                "prefix": list(prefix.tokens),
            },
            "logprobs",
        )
        return self._dist_from_array(response.get("logprobs"))

    def sequence_logprob(self, source: Sentence, sentence: Sentence) -> float:
        if not sentence.terminated:
            raise ValueError("sequence_logprob requires a terminated sentence")
        source.validate(self.source_vocab)
        sentence.validate(self.target_vocab)
        response = self._scoring_response(
            {
                "kind": "sequence_logprob",
                "source": list(source.tokens),
                "sentence": list(sentence.tokens),
            },
            "logprob",
        )
        return _decode_logprob(response.get("logprob"))

    def batch(self, requests: Sequence[BatchRequest]) -> list[BatchResult]:
        if not requests:
            return []
        response = self._scoring_response(
            {"kind": "batch", "items": [_encode_item(r) for r in requests]},
            "batch",
        )
        items = response.get("items")
        if not isinstance(items, list) or len(items) != len(requests):
            raise ProtocolError("batch response must mirror the request items")
        results: list[BatchResult] = []
        for request, item in zip(requests, items):
            if not isinstance(item, dict):
                raise ProtocolError("batch items must be objects")
            kind = item.get("kind")
            if kind == "error":
                results.append(ItemError(str(item.get("code")), str(item.get("message"))))
            elif kind == "logprobs" and isinstance(request, NextTokenRequest):
                results.append(self._dist_from_array(item.get("logprobs")))
            elif kind == "logprob" and isinstance(request, SequenceLogprobRequest):
                results.append(_decode_logprob(item.get("logprob")))
            else:
                raise ProtocolError(f"batch item kind {kind!r} does not match its request")
        return results

    def close(self) -> None:
        self._connection.close()

    def __enter__(self) -> "RemoteModel":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


def _error_for(response: dict) -> PragmaticsError:
    code = response.get("code")
    message = str(response.get("message", ""))
    if code == "unknown-token":
        return UnknownToken(message)
    if code == "missing-entry":
        return MissingEntry(message)
    return ProtocolError(f"server error [{code}]: {message}")


def connect(endpoint: ScorerEndpoint) -> RemoteModel:
    """Handshake with a scorer and wrap it as a local model object."""
    connection = _Connection(endpoint)
    try:
        response = connection.round_trip(
            {"kind": "handshake", "protocol": PROTOCOL_VERSION}
        )
    except Timeout:
        connection.close()
        raise
    except ProtocolError as exc:
        connection.close()
        raise HandshakeFailed(str(exc)) from exc
    if response.get("kind") != "handshake" or response.get("protocol") != PROTOCOL_VERSION:
        connection.close()
        raise HandshakeFailed(f"server did not speak {PROTOCOL_VERSION}: {response!r}")
    try:
        return RemoteModel(connection, endpoint, response)
    except HandshakeFailed:
        connection.close()
        raise


def batch_score(
    model: ConditionalSequenceModel, requests: Iterable[BatchRequest]
) -> list[BatchResult]:
    """Score many requests, in order; failures surface per item.

    Remote models answer with a single wire message; local models are
    scored sequentially.  Either way the results are semantically
    identical to issuing the requests one at a time.
    """
    requests = list(requests)
    if isinstance(model, RemoteModel):
        return model.batch(requests)
    results: list[BatchResult] = []
    for request in requests:
        try:
            if isinstance(request, NextTokenRequest):
                results.append(model.next_token_dist(request.source, request.prefix))
            elif isinstance(request, SequenceLogprobRequest):
                results.append(model.sequence_logprob(request.source, request.sentence))
            else:
                raise TypeError(f"unsupported batch request {request!r}")
        except PragmaticsError as exc:
            results.append(ItemError(code=_code_for(exc), message=str(exc)))
    return results


def _code_for(exc: PragmaticsError) -> str:
    if isinstance(exc, UnknownToken):
        return "unknown-token"
    if isinstance(exc, MissingEntry):
        return "missing-entry"
    return "error"
