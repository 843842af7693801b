"""Line-delimited JSON client for external scoring/embedding services.

A service is any subprocess that reads one JSON request per line on stdin and
writes one JSON response per line on stdout. Both the embedding provider and
the question-generation scorer adapters sit on top of this client.
"""

from __future__ import annotations

import json
import subprocess
import threading


class ServiceError(RuntimeError):
    """The external service misbehaved (died, wrote garbage, or errored)."""


class JsonLineClient:
    """Serializes request/response exchanges with a line-protocol subprocess."""

    def __init__(self, command: list[str]):
        self.command = list(command)
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()

    def request(self, payload: dict) -> dict:
        line = json.dumps(payload, ensure_ascii=False)
        with self._lock:
            if self._proc.poll() is not None:
                raise ServiceError(f"service {self.command} exited with {self._proc.returncode}")
            assert self._proc.stdin is not None and self._proc.stdout is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            response = self._proc.stdout.readline()
        if not response:
            raise ServiceError(f"service {self.command} closed its output stream")
        try:
            decoded = json.loads(response)
        except json.JSONDecodeError as exc:
            raise ServiceError(f"service returned malformed JSON: {response!r}") from exc
        if "error" in decoded:
            raise ServiceError(str(decoded["error"]))
        return decoded

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "JsonLineClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
