"""Binary matrix container used inside model bundles.

Layout: 8-byte magic 'PFMAT001', u32 rows, u32 cols (little-endian), then
row-major little-endian f64 payload.
"""

import struct

import numpy as np

MAGIC = b"PFMAT001"


class MatIOError(Exception):
    pass


def write_matrix(path, arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise MatIOError("only 1D/2D arrays are supported")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise MatIOError("bad magic in %s" % path)
        rows, cols = struct.unpack("<II", fh.read(8))
        payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise MatIOError("truncated matrix file %s" % path)
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
