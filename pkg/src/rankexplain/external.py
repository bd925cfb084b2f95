"""Adapter that scores documents through an external child process.

Protocol (line-oriented, UTF-8, over the child's stdin/stdout):

    -> SCORE <v1>,<v2>,...,<vM>\n      decimal floats, fully substituted
    <- <score>\n                       one decimal float per request, in order
    -> QUIT\n                          terminates the child

Masking happens locally: the adapter substitutes inactive features before
sending, so the child only ever sees complete vectors.
"""
from __future__ import annotations

import shlex
import subprocess
import threading

import numpy as np

from .rankers import RankerModel


class ScorerError(RuntimeError):
    """External scorer protocol violation or child failure."""


class ExternalScorer(RankerModel):
    kind = "external"

    def __init__(self, command: str):
        self.command = command
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerError(f"could not start scorer command {command!r}: {exc}") from None

    def score_query(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        with self._lock:
            return np.array([self._score_one(row) for row in X])

    def _score_one(self, row: np.ndarray) -> float:
        request = "SCORE " + ",".join(repr(float(v)) for v in row)
        assert self._proc.stdin is not None and self._proc.stdout is not None
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError):
            raise ScorerError(
                f"scorer process is gone (exit code {self._proc.poll()}) while sending {request!r}"
            ) from None
        line = self._proc.stdout.readline()
        if line == "":
            raise ScorerError(
                f"scorer closed its output (exit code {self._proc.poll()}) after request {request!r}"
            )
        text = line.strip()
        try:
            return float(text)
        except ValueError:
            raise ScorerError(f"non-numeric scorer response {text!r} to request {request!r}") from None

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            if proc.stdin is not None:
                proc.stdin.write("QUIT\n")
                proc.stdin.flush()
                proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, ValueError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass
