#!/usr/bin/env python3
"""Independent reference for the edwards25519 Elligator2 VRF suite.

Pure big-int implementation written directly from the suite's mathematical
definition (ciphersuite byte 0x04, 80-byte proofs, 16-byte challenges,
output = SHA-512(suite || 0x03 || cofactor*Gamma)). Used to compute and
cross-check the frozen known-answer vectors in the C++ tests; kept slow and
obvious on purpose.
"""

import hashlib
import sys

P = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493
A_MONT = 486662
D = (-121665 * pow(121666, P - 2, P)) % P
SUITE = b"\x04"


def inv(x):
    return pow(x, P - 2, P)


def sha512(data):
    return hashlib.sha512(data).digest()


# ---- edwards25519 group (extended coordinates omitted; affine is fine here)

BASE_Y = (4 * inv(5)) % P


def recover_x(y, sign):
    x2 = (y * y - 1) * inv(D * y * y + 1) % P
    x = pow(x2, (P + 3) // 8, P)
    if (x * x - x2) % P != 0:
        x = x * pow(2, (P - 1) // 4, P) % P
    if (x * x - x2) % P != 0:
        return None
    if x & 1 != sign:
        x = P - x
    return x


BASE = (recover_x(BASE_Y, 0), BASE_Y)


def point_add(p, q):
    if p is None:
        return q
    if q is None:
        return p
    (x1, y1), (x2, y2) = p, q
    den_x = inv(1 + D * x1 * x2 * y1 * y2 % P)
    den_y = inv(1 - D * x1 * x2 * y1 * y2 % P)
    x3 = (x1 * y2 + x2 * y1) * den_x % P
    y3 = (y1 * y2 + x1 * x2) * den_y % P
    return (x3, y3)


def scalar_mult(k, point):
    result = None
    addend = point
    while k:
        if k & 1:
            result = point_add(result, addend)
        addend = point_add(addend, addend)
        k >>= 1
    return result


def encode_point(p):
    if p is None:
        return (1).to_bytes(32, "little")  # neutral element (0, 1)
    x, y = p
    return (y | ((x & 1) << 255)).to_bytes(32, "little")


def decode_point(s):
    val = int.from_bytes(s, "little")
    y = val & ((1 << 255) - 1)
    sign = val >> 255
    if y >= P:
        return None
    x = recover_x(y, sign)
    if x is None:
        return None
    return (x, y)


# ---- key expansion (RFC 8032 style)


def expand(seed):
    h = sha512(seed)
    a = bytearray(h[:32])
    a[0] &= 248
    a[31] &= 127
    a[31] |= 64
    scalar = int.from_bytes(a, "little")
    return scalar, h[32:]


def public_key(seed):
    scalar, _ = expand(seed)
    return encode_point(scalar_mult(scalar, BASE))


# ---- Elligator2 hash to curve


def hash_to_curve(pk_bytes, alpha):
    h = sha512(SUITE + b"\x01" + pk_bytes + alpha)
    r_string = bytearray(h[:32])
    r_string[31] &= 0x7F
    r = int.from_bytes(r_string, "little") % P
    # Montgomery candidate x1 = -A / (1 + 2 r^2); x2 = -A - x1.
    t = (2 * r * r) % P
    den = (1 + t) % P
    x1 = (-A_MONT * inv(den)) % P if den != 0 else 0
    gx1 = (x1 * x1 % P * x1 + A_MONT * x1 % P * x1 + x1) % P
    if pow(gx1, (P - 1) // 2, P) == 1:
        x_mont = x1
    else:
        x_mont = (-x1 - A_MONT) % P
    # Birational map to edwards y; decode with sign bit 0; clear cofactor.
    y_ed = (x_mont - 1) * inv(x_mont + 1) % P
    point = decode_point(y_ed.to_bytes(32, "little"))
    if point is None:
        raise ValueError("mapped y is not on the curve")
    return scalar_mult(8, point)


def hash_points(*points):
    data = SUITE + b"\x02"
    for pt in points:
        data += encode_point(pt)
    return int.from_bytes(sha512(data)[:16], "little")


def prove(seed, alpha):
    scalar, nonce_seed = expand(seed)
    pk = encode_point(scalar_mult(scalar, BASE))
    h_point = hash_to_curve(pk, alpha)
    h_string = encode_point(h_point)
    gamma = scalar_mult(scalar, h_point)
    k = int.from_bytes(sha512(nonce_seed + h_string), "little") % L
    c = hash_points(h_point, gamma, scalar_mult(k, BASE), scalar_mult(k, h_point))
    s = (k + c * scalar) % L
    return encode_point(gamma) + c.to_bytes(16, "little") + s.to_bytes(32, "little")


def proof_to_hash(proof):
    gamma = decode_point(proof[:32])
    return sha512(SUITE + b"\x03" + encode_point(scalar_mult(8, gamma)))


def verify(pk_bytes, alpha, proof):
    gamma = decode_point(proof[:32])
    if gamma is None:
        return None
    c = int.from_bytes(proof[32:48], "little")
    s = int.from_bytes(proof[48:80], "little")
    if s >= L:
        return None
    y = decode_point(pk_bytes)
    if y is None:
        return None
    h_point = hash_to_curve(pk_bytes, alpha)
    neg = lambda pt: (P - pt[0], pt[1])
    u = point_add(scalar_mult(s, BASE), neg(scalar_mult(c, y)))
    v = point_add(scalar_mult(s, h_point), neg(scalar_mult(c, gamma)))
    if hash_points(h_point, gamma, u, v) != c:
        return None
    return proof_to_hash(proof)


VECTOR_SEEDS = [
    ("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60", b""),
    ("4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb", b"\x72"),
    ("c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7", b"\xaf\x82"),
]


def main():
    for seed_hex, alpha in VECTOR_SEEDS:
        seed = bytes.fromhex(seed_hex)
        pk = public_key(seed)
        proof = prove(seed, alpha)
        beta = proof_to_hash(proof)
        assert verify(pk, alpha, proof) == beta, "self verification failed"
        print(f"seed   {seed_hex}")
        print(f"alpha  {alpha.hex()}")
        print(f"pk     {pk.hex()}")
        print(f"pi     {proof.hex()}")
        print(f"beta   {beta.hex()}")
        print()


if __name__ == "__main__":
    sys.exit(main())
