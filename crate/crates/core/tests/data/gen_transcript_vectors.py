#!/usr/bin/env python3
"""Independent hash-chain oracle for the transcript; writes transcript_vectors.json."""
import hashlib
import json
import os

P = 2**252 + 27742317777372353535851937790883648493


def absorb(state, label, data):
    h = hashlib.sha256()
    h.update(state)
    h.update(len(label).to_bytes(8, "big"))
    h.update(label)
    h.update(len(data).to_bytes(8, "big"))
    h.update(data)
    return h.digest()


def challenges(state, label, count):
    out = []
    for i in range(count):
        wide = b"".join(
            hashlib.sha256(state + label + i.to_bytes(8, "big") + bytes([tag])).digest()
            for tag in (0, 1)
        )
        out.append((int.from_bytes(wide, "big") % P).to_bytes(32, "little").hex())
    return out, absorb(state, label, b"")


cases = []
scripts = [
    [("absorb", b"profile", b'{"profile_id":"x"}'), ("challenge", b"chal/c", 3)],
    [("absorb", b"a", b""), ("absorb", b"b", b"\x00" * 40), ("challenge", b"chal/r", 2), ("challenge", b"chal/s", 2)],
    [("challenge", b"chal/c", 1)],
    [("absorb", b"l" * 64, bytes(range(256))), ("absorb", b"x-digest", b"\xff" * 32), ("challenge", b"chal/c", 4)],
]
for script in scripts:
    state = absorb(bytes(32), b"zklora/v1", b"")
    ops = []
    for op in script:
        if op[0] == "absorb":
            state = absorb(state, op[1], op[2])
            ops.append({"op": "absorb", "label": op[1].hex(), "data": op[2].hex(), "state": state.hex()})
        else:
            vec, state = challenges(state, op[1], op[2])
            ops.append({"op": "challenge", "label": op[1].hex(), "count": op[2], "values": vec, "state": state.hex()})
    cases.append(ops)

path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "transcript_vectors.json")
with open(path, "w") as f:
    json.dump({"cases": cases}, f, indent=1, sort_keys=True)
    f.write("\n")
