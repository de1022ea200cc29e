"""Scripted end-to-end scenarios: a network file, a step list, a transcript.

A script drives an embedded discovery server over real sockets. Steps either
apply a membership event, issue a query, or assert on the last response via a
JSON pointer. Every executed step appends one canonical JSON line to the
transcript, so identical scripts produce byte-identical transcripts.
"""

from __future__ import annotations

import json
from contextlib import ExitStack
from dataclasses import dataclass
from pathlib import Path

from .errors import AssertionFailed, ScenarioParseError
from .layouts import DEFAULT_LAYOUT_CAP
from .membership import event_from_wire, new_network
from .server import StateHandle, serve
from .wire import WireClient, canonical_json

__all__ = ["ScenarioScript", "ScenarioResult", "load_scenario", "run_scenario", "resolve_pointer"]

_MISSING = "<missing>"


@dataclass(frozen=True)
class ScenarioScript:
    network: dict
    steps: tuple[dict, ...]
    responder: str | None = None


@dataclass(frozen=True)
class ScenarioResult:
    lines: tuple[str, ...]
    ok: bool

    def transcript(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def _validate_step(index: int, step) -> dict:
    if not isinstance(step, dict):
        raise ScenarioParseError(f"step {index} must be an object")
    kinds = [k for k in ("event", "query", "assert") if k in step]
    if len(kinds) != 1:
        raise ScenarioParseError(
            f"step {index} must have exactly one of 'event'/'query'/'assert'"
        )
    kind = kinds[0]
    body = step[kind]
    if not isinstance(body, dict):
        raise ScenarioParseError(f"step {index}: {kind!r} must be an object")
    if kind == "event" and "type" not in body:
        raise ScenarioParseError(f"step {index}: event needs a 'type'")
    if kind == "query" and "type" not in body:
        raise ScenarioParseError(f"step {index}: query needs a 'type'")
    if kind == "assert" and ("path" not in body or "equals" not in body):
        raise ScenarioParseError(f"step {index}: assert needs 'path' and 'equals'")
    return step


def load_scenario(source: str | Path | dict, base_dir: str | Path | None = None) -> ScenarioScript:
    """Load a script from a file path or an already-parsed object.

    A bare JSON array is accepted as a pure event script (each element in
    {"type", "args"} form). A relative network path resolves against the
    script file's directory.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        base_dir = path.parent if base_dir is None else Path(base_dir)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioParseError(f"cannot load scenario {path}: {exc}") from exc
    else:
        data = source
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    if isinstance(data, list):
        data = {"network": {}, "steps": [{"event": e} for e in data]}
    if not isinstance(data, dict) or "steps" not in data:
        raise ScenarioParseError("scenario must be an object with 'steps'")

    network = data.get("network", {})
    if isinstance(network, str):
        net_path = Path(network)
        if not net_path.is_absolute():
            net_path = base_dir / net_path
        try:
            network = json.loads(net_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioParseError(
                f"cannot load network file {net_path}: {exc}"
            ) from exc

    steps = tuple(
        _validate_step(i, step) for i, step in enumerate(data["steps"])
    )
    return ScenarioScript(network=network, steps=steps, responder=data.get("responder"))


def resolve_pointer(doc, pointer: str):
    """Minimal JSON-pointer lookup; returns _MISSING when the path is absent."""
    if pointer == "":
        return doc
    if not pointer.startswith("/"):
        return _MISSING
    node = doc
    for token in pointer.split("/")[1:]:
        token = token.replace("~1", "/").replace("~0", "~")
        if isinstance(node, dict):
            if token not in node:
                return _MISSING
            node = node[token]
        elif isinstance(node, list):
            if not token.isdigit() or int(token) >= len(node):
                return _MISSING
            node = node[int(token)]
        else:
            return _MISSING
    return node


def run_scenario(
    script: ScenarioScript,
    transcript_path: str | Path | None = None,
    layout_cap: int = DEFAULT_LAYOUT_CAP,
) -> ScenarioResult:
    """Execute all steps against an embedded server.

    Raises :class:`AssertionFailed` at the first failing assertion; the
    transcript written so far (including the failing line) is preserved.
    """
    state = new_network(script.network)
    handle = StateHandle(state)

    lines: list[str] = []
    sink = open(transcript_path, "w", encoding="utf-8") if transcript_path else None

    def emit(record: dict):
        line = canonical_json(record).decode("utf-8")
        lines.append(line)
        if sink:
            sink.write(line + "\n")
            sink.flush()

    last_response: dict | None = None
    auto_id = 0
    with ExitStack() as stack:
        if sink:
            stack.callback(sink.close)
        conn: WireClient | None = None
        if any("query" in step for step in script.steps):
            responder = script.responder
            if responder is None:
                if not state.peers:
                    raise ScenarioParseError("scenario network has no peers to respond")
                responder = min(state.peers)
            server = stack.enter_context(
                serve(handle, responder, "127.0.0.1:0", layout_cap=layout_cap)
            )
            conn = stack.enter_context(WireClient(server.address))
        for index, step in enumerate(script.steps):
            if "event" in step:
                event = event_from_wire(step["event"])
                seq = handle.apply(event)
                emit(
                    {
                        "step": index,
                        "kind": "event",
                        "event": step["event"],
                        "event_seq": seq,
                    }
                )
            elif "query" in step:
                auto_id += 1
                body = dict(step["query"])
                body.setdefault("id", f"q{auto_id}")
                assert conn is not None
                last_response = conn.request(body)
                emit(
                    {
                        "step": index,
                        "kind": "query",
                        "request": body,
                        "response": last_response,
                    }
                )
            else:
                spec = step["assert"]
                actual = (
                    resolve_pointer(last_response, spec["path"])
                    if last_response is not None
                    else _MISSING
                )
                passed = actual == spec["equals"]
                emit(
                    {
                        "step": index,
                        "kind": "assert",
                        "path": spec["path"],
                        "expected": spec["equals"],
                        "actual": actual,
                        "passed": passed,
                    }
                )
                if not passed:
                    raise AssertionFailed(spec["path"], spec["equals"], actual)
    return ScenarioResult(lines=tuple(lines), ok=True)
