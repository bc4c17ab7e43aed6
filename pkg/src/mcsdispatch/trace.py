"""Columnar event trace shared by the dynamic engine and the static baseline."""

from __future__ import annotations

from array import array
from enum import IntEnum
from typing import Iterator, NamedTuple

import numpy as np

COLUMNS = ("time", "kind", "task", "seq", "tile", "mode", "value", "aux")


class Rec(IntEnum):
    ARRIVAL = 0      # value=actual exec, aux=absolute deadline
    DROP = 1
    MSG_SEND = 2     # value=delivery time, aux=msg_type*4 + channel class
    MSG_RECV = 3     # value=delivery time, aux=msg_type
    DISPATCH = 4     # value=copy start, aux=copy end
    COPY_DONE = 5    # value=copy duration, aux=bytes
    START = 6        # value=actual exec
    COMPLETE = 7     # value=absolute deadline, aux=actual exec
    MODE = 8         # mode=new mode, value=countdown
    LOOP = 9         # value=iteration duration, aux=step flags
    ANOMALY = 10
    SIM_END = 11


class TraceRecord(NamedTuple):
    time: int
    kind: Rec
    task: int
    seq: int
    tile: int
    mode: int
    value: int
    aux: int


class EventTrace:
    """Append-only, time-ordered record list stored as int64 columns."""

    def __init__(self, meta: dict | None = None):
        self.meta = dict(meta or {})
        self._data = array("q")
        self._last = -1
        self._matrix = None

    def add(self, time, kind, task=-1, seq=-1, tile=-1, mode=0, value=0, aux=0):
        if time < self._last:
            raise RuntimeError(f"trace time went backwards ({time} < {self._last})")
        self._last = time
        self._data.extend((time, kind, task, seq, tile, mode, value, aux))

    def __len__(self):
        return len(self._data) // len(COLUMNS)

    def __iter__(self) -> Iterator[TraceRecord]:
        width = len(COLUMNS)
        data = self._data
        for i in range(0, len(data), width):
            row = data[i:i + width]
            yield TraceRecord(row[0], Rec(row[1]), *row[2:])

    def __eq__(self, other):
        if not isinstance(other, EventTrace):
            return NotImplemented
        return self._data == other._data

    def matrix(self) -> np.ndarray:
        n = len(self)
        if self._matrix is None or len(self._matrix) != n:
            if not n:
                return np.zeros((0, len(COLUMNS)), np.int64)
            # copy: a live buffer view would block further appends
            self._matrix = np.frombuffer(self._data, dtype=np.int64).reshape(-1, len(COLUMNS)).copy()
        return self._matrix

    def columns(self) -> dict[str, np.ndarray]:
        m = self.matrix()
        return {c: m[:, i] for i, c in enumerate(COLUMNS)}

    def of_kind(self, kind: Rec) -> dict[str, np.ndarray]:
        cols = self.columns()
        mask = cols["kind"] == int(kind)
        return {c: v[mask] for c, v in cols.items()}

    def count(self, kind: Rec) -> int:
        return int(np.count_nonzero(self.columns()["kind"] == int(kind)))

    @property
    def horizon(self) -> int:
        return self.meta.get("horizon", 0)
