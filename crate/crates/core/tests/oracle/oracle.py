#!/usr/bin/env python3
"""Independent reference for the known-answer vectors under tests/vectors/.

Uses only hashlib and plain byte XOR. Run from the crate root:

    python3 tests/oracle/oracle.py

and commit the regenerated files.
"""

import hashlib
import json
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "vectors")

SHA256 = 0x01
TOY8 = 0xFF


def h(data, alg=SHA256):
    d = hashlib.sha256(data).digest()
    if alg == TOY8:
        return bytes([d[0]]) * 32
    return d


def xor(*blocks):
    out = bytearray(32)
    for b in blocks:
        assert len(b) == 32
        for i in range(32):
            out[i] ^= b[i]
    return bytes(out)


def ts(t):
    return b"\x00" * 24 + struct.pack(">Q", t)


def register(x, pw, alg=SHA256):
    return xor(h(pw, alg), h(x, alg))


def login(n, y, pw, t, alg=SHA256):
    hpw = h(pw, alg)
    cid = xor(hpw, h(xor(n, y, ts(t)), alg))
    b = h(xor(cid, hpw), alg)
    c = h(xor(ts(t), n, b, y), alg)
    return hpw, cid, b, c


def frame(msg_type, payload):
    return struct.pack(">I", 1 + len(payload)) + bytes([msg_type]) + payload


def kat_tuples():
    tuples = [(b"\x00" * 32, b"\x11" * 32, "alice", 1_000_000_000)]
    pws = ["bob", "correct horse battery staple", "pässwörd", "密码",
           "x", "A" * 1024, "tab\tand space ", "0", "\U0001f511key"]
    for i, pw in enumerate(pws, start=1):
        x = hashlib.sha256(b"oracle-x-%d" % i).digest()
        y = hashlib.sha256(b"oracle-y-%d" % i).digest()
        t = [0, 1, 255, 256, 1_700_000_000, 2**32, 2**40 + 7, 2**63, 2**64 - 1][i - 1]
        tuples.append((x, y, pw, t))
    return tuples


def main():
    os.makedirs(OUT, exist_ok=True)

    vectors = []
    for x, y, pw, t in kat_tuples():
        pwb = pw.encode("utf-8")
        n = register(x, pwb)
        hpw, cid, b, c = login(n, y, pwb, t)
        vectors.append({
            "x": x.hex(), "y": y.hex(), "password": pw, "t": t,
            "hx": h(x).hex(), "hpw": hpw.hex(),
            "n": n.hex(), "cid": cid.hex(), "b": b.hex(), "c": c.hex(),
        })

    hashes = [
        {"alg": SHA256, "message": "", "digest": h(b"").hex()},
        {"alg": TOY8, "message": "", "digest": h(b"", TOY8).hex()},
        {"alg": SHA256, "message": "616c696365", "digest": h(b"alice").hex()},
        {"alg": TOY8, "message": "616c696365", "digest": h(b"alice", TOY8).hex()},
        {"alg": SHA256, "message": "00" * 32, "digest": h(b"\x00" * 32).hex()},
    ]

    # TOY8 login vector, same inputs as the first SHA-256 tuple.
    x0, y0, _, t0 = kat_tuples()[0]
    n_toy = register(x0, b"alice", TOY8)
    hpw_t, cid_t, b_t, c_t = login(n_toy, y0, b"alice", t0, TOY8)
    toy = {"x": x0.hex(), "y": y0.hex(), "password": "alice", "t": t0,
           "n": n_toy.hex(), "cid": cid_t.hex(), "b": b_t.hex(), "c": c_t.hex()}

    with open(os.path.join(OUT, "kat.json"), "w") as f:
        json.dump({"hashes": hashes, "logins": vectors, "toy8_login": toy}, f, indent=2)
        f.write("\n")

    frames = []
    for i, v in enumerate(vectors[:3]):
        payload = (bytes.fromhex(v["cid"]) + bytes.fromhex(v["n"]) +
                   bytes.fromhex(v["c"]) + struct.pack(">Q", v["t"]))
        frames.append({"name": "login_request_%d" % i, "type": 0x01,
                       "hex": frame(0x01, payload).hex(),
                       "fields": {"cid": v["cid"], "n": v["n"], "c": v["c"], "t": v["t"]}})
    frames.append({"name": "login_request_zero", "type": 0x01,
                   "hex": frame(0x01, b"\x00" * 104).hex(),
                   "fields": {"cid": "00" * 32, "n": "00" * 32, "c": "00" * 32, "t": 0}})
    for status in [0x00, 0x01, 0x02, 0x03, 0x04, 0x7F]:
        frames.append({"name": "login_response_%02x" % status, "type": 0x02,
                       "hex": frame(0x02, bytes([status])).hex(),
                       "fields": {"status": status}})
    for token, pw in [("tok", "alice"), ("admin-é", "pässwörd")]:
        tb, pb = token.encode(), pw.encode()
        payload = struct.pack(">H", len(tb)) + tb + struct.pack(">H", len(pb)) + pb
        frames.append({"name": "register_request_" + token.encode("ascii", "replace").decode(),
                       "type": 0x10, "hex": frame(0x10, payload).hex(),
                       "fields": {"token": token, "password": pw}})
    v0 = vectors[0]
    body = bytes([SHA256]) + bytes.fromhex(v0["n"]) + bytes.fromhex(v0["y"])
    frames.append({"name": "register_response_ok", "type": 0x11,
                   "hex": frame(0x11, b"\x00" + body).hex(),
                   "fields": {"status": 0, "alg": SHA256, "n": v0["n"], "y": v0["y"]}})
    frames.append({"name": "register_response_denied", "type": 0x11,
                   "hex": frame(0x11, b"\x01").hex(),
                   "fields": {"status": 1}})

    card = b"DIDC" + bytes([0x01, SHA256]) + bytes.fromhex(v0["n"]) + bytes.fromhex(v0["y"])
    secrets = b"DIDS" + bytes([0x01, SHA256]) + x0 + y0
    files = {"card": card.hex(), "secrets": secrets.hex()}

    with open(os.path.join(OUT, "frames.json"), "w") as f:
        json.dump({"frames": frames, "files": files}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
