#!/usr/bin/env python3
"""Independent double-SHA256 oracle for fixed transaction vectors.

Builds the non-witness wire serialization by hand and prints the display txid
(byte-reversed double SHA256). Used to freeze golden values in the Rust tests.
"""
import hashlib
import struct


def sha256d(b: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(b).digest()).digest()


def compact(n: int) -> bytes:
    if n < 0xFD:
        return bytes([n])
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= 0xFFFFFFFF:
        return b"\xfe" + struct.pack("<I", n)
    return b"\xff" + struct.pack("<Q", n)


def serialize(version, inputs, outputs, locktime) -> bytes:
    out = struct.pack("<i", version)
    out += compact(len(inputs))
    for txid, vout, seq in inputs:
        out += txid + struct.pack("<I", vout) + b"\x00" + struct.pack("<I", seq)
    out += compact(len(outputs))
    for value, script in outputs:
        out += struct.pack("<Q", value) + compact(len(script)) + script
    out += struct.pack("<I", locktime)
    return out


def main():
    # 1-in/1-out vector used by tx::tests::fixed_vector_matches_oracle
    raw = serialize(2, [(b"\x11" * 32, 1, 0xFFFFFFFD)], [(50_000, b"\x51")], 0)
    print("sample_tx hex ", raw.hex())
    print("sample_tx txid", sha256d(raw)[::-1].hex())


if __name__ == "__main__":
    main()
