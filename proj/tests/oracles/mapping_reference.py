"""Reads an NTWS weight file and evaluates the mapping network with numpy."""
import math
import struct
import sys

import numpy as np


def read_ntws(path):
    data = open(path, "rb").read()
    assert data[:4] == b"NTWS"
    version, count = struct.unpack_from("<HI", data, 4)
    assert version == 1
    pos = 10
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode()
        pos += n
        rank = data[pos]
        pos += 1
        dims = struct.unpack_from("<%dI" % rank, data, pos)
        pos += 4 * rank
        size = math.prod(dims)
        out[name] = np.frombuffer(data, "<f8", size, pos).reshape(dims)
        pos += 8 * size
    assert pos == len(data)
    return out


def lrelu(v):
    return np.where(v >= 0, v, 0.2 * v)


if __name__ == "__main__":
    w = read_ntws(sys.argv[1])
    d = w["mapping.0.weight"].shape[0]
    h = np.sin(0.7 * np.arange(d) + 0.3)
    k = 0
    while "mapping.%d.weight" % k in w:
        h = lrelu(w["mapping.%d.weight" % k] @ h + w["mapping.%d.bias" % k])
        k += 1
    for j in (0, 1, 17, d - 1):
        print("h[%d] = %.17g" % (j, h[j]))
    print("sum = %.17g" % h.sum())
