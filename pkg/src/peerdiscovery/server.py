"""Threaded socket server exposing the discovery queries.

Connections are handled concurrently; within one connection requests are
answered strictly in order, each against a snapshot taken under the state
lock. Event application and query handling share that single lock, giving
the single-writer / snapshot-reader contract.
"""

from __future__ import annotations

import socket
import threading

from .discovery import handle_query
from .errors import BindError, DiscoveryError, FrameTooLarge, InvalidJson
from .layouts import DEFAULT_LAYOUT_CAP
from .membership import MembershipEvent, NetworkState, apply_event
from .wire import encode_frame, parse_endpoint, read_frame

__all__ = ["StateHandle", "DiscoveryServer", "serve"]


class StateHandle:
    """Serializes writers and snapshot-taking readers over one NetworkState."""

    def __init__(self, state: NetworkState):
        self._state = state
        self._lock = threading.RLock()

    def apply(self, event: MembershipEvent) -> int:
        """Apply one event; returns the new event_seq."""
        with self._lock:
            apply_event(self._state, event)
            return self._state.event_seq

    def query(self, responder_peer: str, envelope: dict, **options) -> dict:
        with self._lock:
            return handle_query(self._state, responder_peer, envelope, **options)

    @property
    def event_seq(self) -> int:
        with self._lock:
            return self._state.event_seq

    def has_peer(self, peer_id: str) -> bool:
        with self._lock:
            return peer_id in self._state.peers


class DiscoveryServer:
    def __init__(
        self,
        handle: StateHandle,
        responder_peer: str,
        listen_addr: str,
        *,
        strict_channel: bool = False,
        strict_version: bool = False,
        layout_cap: int = DEFAULT_LAYOUT_CAP,
    ):
        self.handle = handle
        self.responder_peer = responder_peer
        self._options = {
            "strict_channel": strict_channel,
            "strict_version": strict_version,
            "layout_cap": layout_cap,
        }
        host, port = parse_endpoint(listen_addr)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((host, port))
            self._listener.listen()
        except OSError as exc:
            self._listener.close()
            raise BindError(f"cannot listen on {listen_addr}: {exc}") from exc
        self._closing = threading.Event()
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="discover-accept", daemon=True
        )
        self._accept_thread.start()

    @property
    def address(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return f"{host}:{port}"

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return  # listener closed
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _serve_connection(self, conn: socket.socket):
        # A broken frame stream tears down this connection only.
        stream = conn.makefile("rwb")
        try:
            while True:
                try:
                    envelope = read_frame(stream)
                except InvalidJson as exc:
                    # Framing survived, so the stream is still in sync.
                    self._write_error(stream, exc)
                    continue
                except DiscoveryError as exc:
                    if isinstance(exc, FrameTooLarge):
                        self._write_error(stream, exc)
                    return
                if envelope is None:
                    return
                response = self.handle.query(
                    self.responder_peer, envelope, **self._options
                )
                stream.write(encode_frame(response))
                stream.flush()
        except (OSError, ValueError):
            pass
        finally:
            try:
                stream.close()
            except OSError:
                pass
            conn.close()

    def _write_error(self, stream, exc: DiscoveryError):
        envelope = {
            "id": None,
            "ok": False,
            "view_seq": self.handle.event_seq,
            "error": {"code": exc.code, "message": str(exc)},
        }
        try:
            stream.write(encode_frame(envelope))
            stream.flush()
        except OSError:
            pass

    def close(self):
        self._closing.set()
        try:
            # close() alone does not wake a blocked accept(); shutdown does.
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass
        self._accept_thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(
    state: NetworkState | StateHandle,
    responder_peer: str,
    listen_addr: str,
    **options,
) -> DiscoveryServer:
    """Start serving discovery queries; returns the running server."""
    handle = state if isinstance(state, StateHandle) else StateHandle(state)
    if not handle.has_peer(responder_peer):
        raise BindError(f"responder peer {responder_peer!r} is not in the network")
    return DiscoveryServer(handle, responder_peer, listen_addr, **options)
