"""Arithmetic and linear algebra over GF(2^8) and GF(2^16), plus the
packet-level encoder/decoder built on top.

Multiplication goes through log/antilog tables held as numpy arrays so that
whole payload vectors are scaled in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import SubfileId

POLYS = {256: 0x11B, 65536: 0x1100B}


class DecodeFailure(Exception):
    """A user's decoding matrix is singular."""


def _clmul_mod(a: int, b: int, poly: int, m: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return out


class GF:
    """The field GF(2^m) for m in {8, 16}."""

    def __init__(self, order: int = 256):
        if order not in POLYS:
            raise ValueError(f"unsupported field order {order}")
        self.order = order
        self.m = order.bit_length() - 1
        self.poly = POLYS[order]
        self.dtype = np.uint8 if order == 256 else np.uint16
        n = order - 1
        for g in range(2, order):
            exp = np.zeros(2 * n, dtype=np.int64)
            v = 1
            ok = True
            for k in range(n):
                exp[k] = v
                v = _clmul_mod(v, g, self.poly, self.m)
                if v == 1 and k < n - 1:
                    ok = False
                    break
            if ok:
                break
        else:
            raise ValueError("reduction polynomial is not primitive")
        self.generator = g
        exp[n:] = exp[:n]
        log = np.zeros(order, dtype=np.int64)
        log[exp[:n]] = np.arange(n)
        self._exp = exp
        self._log = log

    def __repr__(self):
        return f"GF({self.order})"

    # scalar / elementwise ops; arguments may be ints or arrays

    @staticmethod
    def add(a, b):
        return np.bitwise_xor(a, b)

    sub = add

    def mul(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = self._exp[self._log[a] + self._log[b]]
        out = np.where((a == 0) | (b == 0), 0, out)
        return out if out.ndim else int(out)

    def inv(self, a):
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("zero has no inverse")
        out = self._exp[(self.order - 1 - self._log[a]) % (self.order - 1)]
        return out if out.ndim else int(out)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def random(self, rng: np.random.Generator, size=None):
        return rng.integers(0, self.order, size=size)

    # linear algebra

    def matmul(self, A, B):
        A = np.asarray(A, dtype=np.int64)
        B = np.asarray(B, dtype=np.int64)
        if A.shape[1] != B.shape[0]:
            raise ValueError(f"shape mismatch {A.shape} x {B.shape}")
        out = np.zeros((A.shape[0], B.shape[1]), dtype=np.int64)
        for k in range(A.shape[1]):
            out ^= self.mul(A[:, k:k + 1], B[k:k + 1, :])
        return out

    def _eliminate(self, M):
        """Reduced row echelon form in place; returns pivot columns."""
        rows, cols = M.shape
        pivots = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            nz = np.nonzero(M[r:, c])[0]
            if not len(nz):
                continue
            p = r + nz[0]
            if p != r:
                M[[r, p]] = M[[p, r]]
            M[r] = self.mul(self.inv(int(M[r, c])), M[r])
            col = M[:, c].copy()
            col[r] = 0
            hit = np.nonzero(col)[0]
            if len(hit):
                M[hit] ^= self.mul(col[hit, None], M[r][None, :])
            pivots.append(c)
            r += 1
        return pivots

    def rank(self, M) -> int:
        M = np.array(M, dtype=np.int64)
        if M.size == 0:
            return 0
        return len(self._eliminate(M))

    def inverse(self, M):
        """Inverse of a square matrix, or None when singular."""
        M = np.asarray(M, dtype=np.int64)
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError("inverse needs a square matrix")
        aug = np.hstack([M, np.eye(n, dtype=np.int64)])
        piv = self._eliminate(aug)
        if piv[:n] != list(range(n)):
            return None
        return aug[:, n:]

    def solve(self, M, b):
        """Solve ``M @ x = b`` for square ``M``; None when ``M`` is singular."""
        inv = self.inverse(M)
        if inv is None:
            return None
        b = np.asarray(b, dtype=np.int64)
        vec = b.ndim == 1
        x = self.matmul(inv, b[:, None] if vec else b)
        return x[:, 0] if vec else x

    # payload conversion

    def from_bytes(self, data: bytes) -> np.ndarray:
        if self.order == 256:
            return np.frombuffer(data, dtype=np.uint8).astype(np.int64)
        if len(data) % 2:
            raise ValueError("GF(2^16) payloads need an even number of bytes")
        return np.frombuffer(data, dtype=">u2").astype(np.int64)

    def to_bytes(self, symbols) -> bytes:
        arr = np.asarray(symbols)
        if self.order == 256:
            return arr.astype(np.uint8).tobytes()
        return arr.astype(">u2").tobytes()


@lru_cache(maxsize=None)
def get_field(order: int = 256) -> GF:
    return GF(order)


@dataclass
class CodedPacket:
    """One broadcast slot: the group served and the coefficient of every
    ``(user, part, piece)`` packet mixed into the payload."""

    tau: int
    group: tuple
    coeffs: dict  # (user, part, piece) -> field element
    payload: bytes = b""

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "group": list(self.group),
            "coeffs": [{"user": u, "f": f, "j": j, "alpha": int(a)}
                       for (u, f, j), a in sorted(self.coeffs.items())],
            "payload_hex": self.payload.hex(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CodedPacket":
        coeffs = {(c["user"], c["f"], c["j"]): c["alpha"] for c in d["coeffs"]}
        return cls(d["tau"], tuple(d["group"]), coeffs, bytes.fromhex(d["payload_hex"]))


def packet_columns(instance, user: int) -> list:
    """Column order of a user's decoding matrix: (part, piece) pairs."""
    return [(f, j) for f in sorted(instance.missing(user)) for j in range(1, instance.r + 1)]


def build_decoding_matrix(user: int, packets, rows, instance) -> np.ndarray:
    """Rows are the equations ``rows`` (indices into ``packets``) the user keeps."""
    cols = packet_columns(instance, user)
    if len(rows) != len(cols):
        raise ValueError(f"user {user} holds {len(rows)} equations for {len(cols)} packets")
    index = {c: k for k, c in enumerate(cols)}
    B = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for a, m in enumerate(rows):
        for (u, f, j), alpha in packets[m].coeffs.items():
            if u == user:
                B[a, index[(f, j)]] = alpha
    return B


@dataclass
class FileStore:
    """Random contents for every subfile, sliced into ``r`` pieces."""

    subfile_bytes: int
    r: int
    gf: GF
    data: dict = field(default_factory=dict)  # (file, part) -> bytes

    @classmethod
    def random(cls, instance, rng: np.random.Generator, subfile_bytes: int = 64, gf: GF | None = None):
        gf = gf or get_field(instance.config.field_order)
        cfg = instance.config
        store = cls(subfile_bytes, cfg.r, gf)
        raw = rng.integers(0, 256, size=(cfg.N, cfg.F, subfile_bytes), dtype=np.uint8)
        for n in range(cfg.N):
            for f in range(cfg.F):
                store.data[(n + 1, f + 1)] = raw[n, f].tobytes()
        return store

    @property
    def piece_bytes(self) -> int:
        size = -(-self.subfile_bytes // self.r)
        if self.gf.order == 65536 and size % 2:
            size += 1
        return size

    def piece(self, file: int, part: int, j: int) -> np.ndarray:
        size = self.piece_bytes
        chunk = self.data[(file, part)][(j - 1) * size: j * size]
        return self.gf.from_bytes(chunk.ljust(size, b"\0"))


def encode_payload(gf: GF, terms) -> np.ndarray:
    """Field sum of ``coefficient * packet`` over ``(coefficient, symbols)`` terms."""
    out = None
    for a, p in terms:
        v = gf.mul(a, p)
        out = v if out is None else out ^ v
    return out


def encode_packet(packet: CodedPacket, instance, store: FileStore) -> bytes:
    demands = {q.user: q.demand for q in instance.requests}
    terms = [(a, store.piece(demands[u], f, j)) for (u, f, j), a in sorted(packet.coeffs.items())]
    sym = encode_payload(store.gf, terms)
    if sym is None:
        sym = np.zeros(store.piece_bytes // (1 if store.gf.order == 256 else 2), dtype=np.int64)
    return store.gf.to_bytes(sym)


def decode_payload(user: int, packets, rows, instance, store: FileStore) -> dict:
    """Recover the user's missing pieces from its equations.

    Contributions of the other participants are stripped using the user's own
    cache; the remaining system ``B x = b`` is solved over the field.
    Returns ``(part, piece) -> bytes`` and raises ``DecodeFailure`` if the
    decoding matrix is singular.
    """
    gf = store.gf
    demands = {q.user: q.demand for q in instance.requests}
    cache = instance.placement.cache(user)
    B = build_decoding_matrix(user, packets, rows, instance)
    if not len(rows):
        return {}
    rhs = []
    for m in rows:
        pk = packets[m]
        b = gf.from_bytes(pk.payload)
        for (u, f, j), a in pk.coeffs.items():
            if u == user:
                continue
            if SubfileId(demands[u], f) not in cache:
                raise ValueError(f"user {user} cannot cancel part {f} of user {u}")
            b = b ^ gf.mul(a, store.piece(demands[u], f, j))
        rhs.append(b)
    x = gf.solve(B, np.vstack(rhs))
    if x is None:
        raise DecodeFailure(f"decoding matrix of user {user} is singular")
    cols = packet_columns(instance, user)
    return {c: gf.to_bytes(x[k]) for k, c in enumerate(cols)}
