#!/usr/bin/env python3
"""Independent oracle for the CHECKTEMPLATEVERIFY template hash.

Field order: version, locktime, (no scriptSigs hash), input count, sha256 of
sequences, output count, sha256 of serialized outputs, input index. All
integers are 4-byte little-endian; the outer hash is a single SHA256.
"""
import hashlib
import struct


def sha256(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


def compact(n: int) -> bytes:
    if n < 0xFD:
        return bytes([n])
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    return b"\xfe" + struct.pack("<I", n)


def ctv(version, locktime, sequences, outputs, index) -> bytes:
    seqs = b"".join(struct.pack("<I", s) for s in sequences)
    outs = b"".join(struct.pack("<Q", v) + compact(len(s)) + s for v, s in outputs)
    pre = struct.pack("<i", version) + struct.pack("<I", locktime)
    pre += struct.pack("<I", len(sequences)) + sha256(seqs)
    pre += struct.pack("<I", len(outputs)) + sha256(outs)
    pre += struct.pack("<I", index)
    return sha256(pre)


def main():
    # ctv::tests::sample
    p2wsh = b"\x00\x20" + b"\xab" * 32
    print("sample", ctv(2, 0, [0xFFFFFFFD], [(90_000, p2wsh)], 0).hex())
    # two inputs, two outputs, index 1, nonzero locktime
    print("two_by_two", ctv(2, 500, [0xFFFFFFFD, 0xFFFFFFFE],
                            [(1_000, b"\x51"), (2_000, p2wsh)], 1).hex())


if __name__ == "__main__":
    main()
