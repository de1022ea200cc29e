"""Length-prefixed JSON framing and the client side of the wire protocol.

Frame layout: 4-byte big-endian unsigned length, then exactly that many bytes
of UTF-8 JSON encoding a single object. Frames are capped at 16 MiB; the cap
is checked before any body allocation.
"""

from __future__ import annotations

import json
import socket
import struct
import uuid
from typing import BinaryIO

from .errors import FrameTooLarge, InvalidJson, ServiceError, TruncatedFrame

__all__ = [
    "MAX_FRAME_BODY",
    "canonical_json",
    "encode_frame",
    "decode_frame",
    "read_frame",
    "write_frame",
    "query_envelope",
    "WireClient",
]

MAX_FRAME_BODY = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")


def canonical_json(obj) -> bytes:
    """Stable byte encoding: sorted keys, no whitespace, raw UTF-8."""
    return json.dumps(
        obj, separators=(",", ":"), sort_keys=True, ensure_ascii=False
    ).encode("utf-8")


def encode_frame(body: dict) -> bytes:
    raw = canonical_json(body)
    if len(raw) > MAX_FRAME_BODY:
        raise FrameTooLarge(f"body of {len(raw)} bytes exceeds {MAX_FRAME_BODY}")
    return _HEADER.pack(len(raw)) + raw


def _parse_body(raw: bytes) -> dict:
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidJson(f"frame body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise InvalidJson("frame body must be a single JSON object")
    return body


def decode_frame(data: bytes) -> tuple[dict, int]:
    """Decode one frame from the head of ``data``.

    Returns (object, bytes consumed); consumption is always length + 4.
    """
    if len(data) < _HEADER.size:
        raise TruncatedFrame(f"need 4 header bytes, have {len(data)}")
    (length,) = _HEADER.unpack_from(data)
    if length > MAX_FRAME_BODY:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME_BODY}")
    end = _HEADER.size + length
    if len(data) < end:
        raise TruncatedFrame(f"body declares {length} bytes, have {len(data) - 4}")
    return _parse_body(data[_HEADER.size:end]), end


def _read_exactly(stream: BinaryIO, n: int) -> bytes | None:
    """Read n bytes; None on clean EOF at a frame boundary."""
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            if not buf:
                return None
            raise TruncatedFrame(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


def read_frame(stream: BinaryIO) -> dict | None:
    """Read one frame from a blocking stream; None on clean EOF."""
    header = _read_exactly(stream, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BODY:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME_BODY}")
    body = _read_exactly(stream, length)
    if body is None or len(body) < length:
        raise TruncatedFrame("stream ended mid-body")
    return _parse_body(body)


def write_frame(stream: BinaryIO, body: dict) -> None:
    stream.write(encode_frame(body))
    stream.flush()


def query_envelope(
    qtype: str,
    channel: str | None = None,
    payload: dict | None = None,
    request_id: str | None = None,
) -> dict:
    env: dict = {"id": request_id or uuid.uuid4().hex, "type": qtype}
    if channel is not None:
        env["channel"] = channel
    if payload is not None:
        env["payload"] = payload
    return env


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep:
        raise ValueError(f"endpoint {endpoint!r} must be host:port")
    return host, int(port)


class WireClient:
    """Blocking client connection speaking one frame per request/response."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        host, port = parse_endpoint(endpoint)
        self.endpoint = endpoint
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._stream = self._sock.makefile("rwb")

    def request_raw(self, envelope: dict) -> bytes:
        """Send one envelope, return the raw response body bytes."""
        write_frame(self._stream, envelope)
        header = _read_exactly(self._stream, _HEADER.size)
        if header is None:
            raise TruncatedFrame("connection closed before a response arrived")
        (length,) = _HEADER.unpack(header)
        if length > MAX_FRAME_BODY:
            raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME_BODY}")
        body = _read_exactly(self._stream, length)
        if body is None:
            raise TruncatedFrame("connection closed mid-response")
        return body

    def request(self, envelope: dict) -> dict:
        return _parse_body(self.request_raw(envelope))

    def request_ok(self, envelope: dict) -> dict:
        """Send a request and unwrap the result, raising on error envelopes."""
        response = self.request(envelope)
        if not response.get("ok"):
            error = response.get("error") or {}
            raise ServiceError(
                error.get("code", "error"), error.get("message", "request failed")
            )
        return response

    def close(self):
        try:
            self._stream.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
