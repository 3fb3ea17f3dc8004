"""Model oracles: the query interface, response caching, and answer canon.

An oracle answers (input, retained steps) queries. Sufficiency depends only
on the retained step content and order, so responses are cached under a
content hash of (oracle identity, input, joined retained texts). For remote
oracles the cache doubles as the determinism mask: the first response wins.
"""
from __future__ import annotations

import hashlib
import math
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import ProtocolError, RemoteError
from .trace import Step, Subset, Trace, subsequence

# Reserved separator for cache keys; never appears in step text boundaries.
_SEP = "\x1f"


def canonicalize_answer(answer: str) -> str:
    """Normalize an answer string for equality comparison.

    Trims whitespace, lowercases, strips trailing periods, and collapses
    numeric strings to a canonical form ("58.0" -> "58"). Idempotent.
    """
    a = answer.strip().lower()
    a = a.rstrip(".").strip()
    if a:
        try:
            value = float(a)
        except ValueError:
            pass
        else:
            if math.isfinite(value):
                if value == int(value) and abs(value) < 1e15:
                    return str(int(value))
                return format(value, ".12g")
    return a


@dataclass(frozen=True)
class OracleResponse:
    """An oracle's verdict for one (input, retained steps) query.

    distribution, answer_loss, and harm_signal are optional signals; black
    box oracles may provide only the answer.
    """

    answer: str
    distribution: tuple[tuple[str, float], ...] | None = None
    answer_loss: float | None = None
    harm_signal: float | None = None

    def validate(self) -> "OracleResponse":
        """Check internal consistency; raises ProtocolError on violation."""
        if self.distribution is not None:
            total = 0.0
            for cand, p in self.distribution:
                if not 0.0 <= p <= 1.0:
                    raise ProtocolError(f"probability {p} for {cand!r} outside [0, 1]")
                total += p
            if abs(total - 1.0) > 1e-6:
                raise ProtocolError(f"distribution sums to {total}, expected 1")
            best = min(self.distribution, key=lambda cp: (-cp[1], cp[0]))[0]
            if canonicalize_answer(best) != canonicalize_answer(self.answer):
                raise ProtocolError(
                    f"answer {self.answer!r} is not the distribution argmax {best!r}"
                )
        if self.answer_loss is not None:
            if not (self.answer_loss >= 0.0 and self.answer_loss < float("inf")):
                raise ProtocolError(f"answer_loss {self.answer_loss} not finite and >= 0")
        return self


class Oracle:
    """Base oracle: deterministic, cached queries keyed by retained content.

    Subclasses implement evaluate(); callers go through query(), which
    serves cache hits, serializes writes, and suppresses duplicate
    in-flight evaluations of the same key.
    """

    def __init__(self):
        self._cache: dict[str, OracleResponse] = {}
        self._cache_lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}

    @property
    def identity(self) -> str:
        raise NotImplementedError

    def evaluate(self, input: str, step_texts: tuple[str, ...]) -> OracleResponse:
        raise NotImplementedError

    def cache_key(self, input: str, step_texts: tuple[str, ...]) -> str:
        payload = _SEP.join([self.identity, input, *step_texts])
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def query(self, input: str, retained_steps: list[Step] | tuple[Step, ...]) -> OracleResponse:
        texts = tuple(s.text for s in retained_steps)
        return self.query_texts(input, texts)

    def query_texts(self, input: str, step_texts: tuple[str, ...]) -> OracleResponse:
        key = self.cache_key(input, step_texts)
        while True:
            with self._cache_lock:
                hit = self._cache.get(key)
                if hit is not None:
                    return hit
                waiter = self._inflight.get(key)
                if waiter is None:
                    self._inflight[key] = threading.Event()
                    break
            waiter.wait()
        try:
            response = self.evaluate(input, step_texts).validate()
            with self._cache_lock:
                self._cache[key] = response
            return response
        finally:
            with self._cache_lock:
                event = self._inflight.pop(key)
            event.set()

    def clear_cache(self) -> None:
        with self._cache_lock:
            self._cache.clear()


def query(oracle: Oracle, input: str, retained_steps) -> OracleResponse:
    """Functional form of Oracle.query."""
    return oracle.query(input, retained_steps)


def query_subset(oracle: Oracle, trace: Trace, subset: Subset) -> OracleResponse:
    return oracle.query(trace.input, subsequence(trace, subset))


def batch_query(oracle: Oracle, input: str, subsets: list[Subset],
                trace: Trace) -> list[OracleResponse]:
    """Query one oracle over many subsets; responses align positionally.

    Per-item failures are re-raised with the offending index attached.
    """
    responses = []
    for i, subset in enumerate(subsets):
        try:
            responses.append(oracle.query(input, subsequence(trace, subset)))
        except (RemoteError, ProtocolError) as exc:
            raise type(exc)(f"subset {i}: {exc}") from exc
    return responses


class LookupOracle(Oracle):
    """Table-backed oracle: exact retained step texts -> stored response.

    Entries are keyed by the tuple of retained texts; a default response
    covers everything else.
    """

    def __init__(self, table: dict[tuple[str, ...], OracleResponse],
                 default: OracleResponse | None = None, name: str = "lookup"):
        super().__init__()
        self._table = dict(table)
        self._default = default
        self._name = name

    @property
    def identity(self) -> str:
        return f"lookup_table:{self._name}"

    def evaluate(self, input: str, step_texts: tuple[str, ...]) -> OracleResponse:
        response = self._table.get(step_texts, self._default)
        if response is None:
            raise ProtocolError(f"lookup table has no entry for {step_texts!r}")
        return response


@dataclass(frozen=True)
class HttpOracleConfig:
    url: str
    auth_token: str | None = None
    want_distribution: bool = False
    timeout_s: float = 30.0
    max_attempts: int = 3
    backoff_start_s: float = 1.0


class HttpOracle(Oracle):
    """Remote oracle speaking the fixed POST protocol.

    Request:  {"input": str, "steps": [str], "want_distribution": bool,
               "target_answer": str|null}
    Response: {"answer": str, "distribution": [{"answer": str, "p": num}]|null,
               "answer_loss": num|null, "harm_signal": num|null}

    Retries transport failures with exponential backoff; nondeterministic
    remote sampling is masked by the first-response-wins cache.
    """

    def __init__(self, config: HttpOracleConfig, target_answer: str | None = None,
                 session: requests.Session | None = None):
        super().__init__()
        self.config = config
        self.target_answer = target_answer
        self._session = session or requests.Session()

    @property
    def identity(self) -> str:
        return f"http:{self.config.url}"

    def evaluate(self, input: str, step_texts: tuple[str, ...]) -> OracleResponse:
        body = {
            "input": input,
            "steps": list(step_texts),
            "want_distribution": self.config.want_distribution,
            "target_answer": self.target_answer,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"

        delay = self.config.backoff_start_s
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(delay)
                delay *= 2
            try:
                http_response = self._session.post(
                    self.config.url, json=body, headers=headers,
                    timeout=self.config.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if http_response.status_code >= 500:
                last_error = RemoteError(f"server returned {http_response.status_code}")
                continue
            if http_response.status_code != 200:
                raise RemoteError(f"server returned {http_response.status_code}")
            return _parse_remote_payload(http_response)
        raise RemoteError(
            f"{self.config.max_attempts} attempts to {self.config.url} failed: {last_error}"
        )


def _parse_remote_payload(http_response) -> OracleResponse:
    try:
        payload = http_response.json()
    except ValueError as exc:
        raise ProtocolError(f"response body is not JSON: {exc}") from exc
    if not isinstance(payload, dict) or "answer" not in payload:
        raise ProtocolError(f"malformed payload: {payload!r}")
    answer = payload["answer"]
    if not isinstance(answer, str):
        raise ProtocolError(f"answer must be a string, got {type(answer).__name__}")

    distribution = None
    raw = payload.get("distribution")
    if raw is not None:
        if not isinstance(raw, list):
            raise ProtocolError("distribution must be a list")
        entries = []
        for e in raw:
            try:
                candidate, p = e["answer"], float(e["p"])
            except (TypeError, KeyError, ValueError) as exc:
                raise ProtocolError(f"malformed distribution entry: {exc}") from exc
            if not isinstance(candidate, str):
                raise ProtocolError("distribution candidates must be strings")
            entries.append((candidate, p))
        distribution = tuple(entries)

    def _opt_float(name: str) -> float | None:
        value = payload.get(name)
        if value is None:
            return None
        if not isinstance(value, (int, float)):
            raise ProtocolError(f"{name} must be a number or null")
        return float(value)

    return OracleResponse(
        answer=answer,
        distribution=distribution,
        answer_loss=_opt_float("answer_loss"),
        harm_signal=_opt_float("harm_signal"),
    )


@dataclass(frozen=True)
class OracleSpec:
    """Serializable description of an oracle; see build_oracle."""

    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    @staticmethod
    def from_dict(d: dict) -> "OracleSpec":
        return OracleSpec(kind=d["kind"], params=dict(d.get("params", {})))


def build_oracle(spec: OracleSpec, auth_token: str | None = None) -> Oracle:
    """Instantiate an oracle from its serialized spec."""
    if spec.kind == "planted_rule":
        from .synth import PlantedRuleOracle
        return PlantedRuleOracle.from_params(spec.params)
    if spec.kind == "http":
        config = HttpOracleConfig(
            url=spec.params["url"],
            auth_token=auth_token or spec.params.get("auth_token"),
            want_distribution=bool(spec.params.get("want_distribution", False)),
            timeout_s=float(spec.params.get("timeout_s", 30.0)),
        )
        return HttpOracle(config, target_answer=spec.params.get("target_answer"))
    if spec.kind == "lookup_table":
        table = {}
        for entry in spec.params.get("entries", []):
            key = tuple(entry["steps"])
            table[key] = OracleResponse(
                answer=entry["answer"],
                distribution=tuple((c["answer"], float(c["p"]))
                                   for c in entry["distribution"])
                if entry.get("distribution") else None,
                answer_loss=entry.get("answer_loss"),
                harm_signal=entry.get("harm_signal"),
            )
        default = None
        if "default_answer" in spec.params:
            default = OracleResponse(answer=spec.params["default_answer"])
        return LookupOracle(table, default=default,
                            name=spec.params.get("name", "lookup"))
    raise ValueError(f"unknown oracle kind {spec.kind!r}")
