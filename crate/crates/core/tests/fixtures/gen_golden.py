"""Writes golden.txt from hashlib alone."""
import hashlib


def h(*parts):
    d = hashlib.sha256()
    for p in parts:
        d.update(p)
    return d.digest()


def leaf(c):
    return h(b"\x01", c)


def node(a, b):
    return h(b"\x02", a, b)


def root(chunks):
    level = [leaf(c) for c in chunks]
    while len(level) > 1:
        level = [node(level[i], level[i + 1] if i + 1 < len(level) else level[i]) for i in range(0, len(level), 2)]
    return level[0]


def keystream(key, nonce, first, data):
    out = bytearray()
    for i in range(0, len(data), 32):
        ks = h(key, nonce, (first + i // 32).to_bytes(8, "big"))
        out += bytes(a ^ b for a, b in zip(data[i:i + 32], ks))
    return bytes(out)


zero = bytes(32)
chunk_a = bytes(range(32))
chunk_b = bytes(range(32, 64))
rows = [
    ("commit_zero_key", h(b"\x00", zero)),
    ("commit_ff_key", h(b"\x00", b"\xff" * 32)),
    ("merkle_root_one_zero_chunk", root([zero])),
    ("merkle_root_two_identical_chunks", root([chunk_a, chunk_a])),
    ("merkle_root_three_chunks", root([chunk_a, chunk_b, zero])),
    ("keystream_zero_key_tid_70_bytes", keystream(zero, b"tid", 0, bytes(70))),
    ("keystream_07_key_nonce_block_3", keystream(b"\x07" * 32, b"nonce", 3, bytes(range(40)))),
]
with open("golden.txt", "w") as f:
    for name, value in rows:
        f.write(f"{name} {value.hex()}\n")
