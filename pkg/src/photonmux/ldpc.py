"""Quasi-cyclic LDPC codes over GF(2): construction, encoding, decoding.

The default code is a rate-1/2 regular (3, 6) quasi-cyclic code built from
Z x Z circulant permutation blocks; parity-check matrices are resampled
until they reach full row rank so the systematic encoder always exists.
Decoding is normalized min-sum with an early syndrome-based exit.  Codes
can be saved to / loaded from the standard alist text format, and loaded
codes may be irregular (row degrees are padded and masked internally).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_MINSUM_SCALE = 0.75


# ---------------------------------------------------------------------------
# GF(2) linear algebra
# ---------------------------------------------------------------------------

def gf2_rref(H):
    """Reduced row-echelon form over GF(2); returns (R, pivot_columns)."""
    R = np.asarray(H, dtype=np.uint8).copy() % 2
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        hits = np.nonzero(R[row:, col])[0]
        if hits.size == 0:
            continue
        pr = row + hits[0]
        if pr != row:
            R[[row, pr]] = R[[pr, row]]
        others = np.nonzero(R[:, col])[0]
        others = others[others != row]
        R[others] ^= R[row]
        pivots.append(col)
        row += 1
    return R, pivots


def gf2_rank(H):
    """Rank of a binary matrix over GF(2)."""
    return len(gf2_rref(H)[1])


# ---------------------------------------------------------------------------
# code container
# ---------------------------------------------------------------------------

@dataclass
class LDPCCode:
    """A binary LDPC code described by its parity-check matrix."""

    H: np.ndarray          # (m, n) dense 0/1 parity-check matrix

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.uint8) % 2
        if H.ndim != 2 or not H.any():
            raise ConfigError("parity-check matrix must be a nonempty 2-D 0/1 array")
        self.H = H
        self.m, self.n = H.shape
        R, pivots = gf2_rref(H)
        if len(pivots) != self.m:
            raise ConfigError(
                f"parity-check matrix is rank deficient ({len(pivots)} < {self.m})")
        self.k = self.n - self.m
        self._pivot_cols = np.asarray(pivots, dtype=np.int64)
        free = np.setdiff1d(np.arange(self.n), self._pivot_cols)
        self._free_cols = free
        # pivot bits = R[:, free] @ message (mod 2) from the RREF rows
        self._encode_map = R[:, free]
        # per-check variable lists, padded to the max row degree for min-sum
        deg = H.sum(axis=1)
        dmax = int(deg.max())
        cols = np.zeros((self.m, dmax), dtype=np.int64)
        mask = np.zeros((self.m, dmax), dtype=bool)
        for r in range(self.m):
            idx = np.nonzero(H[r])[0]
            cols[r, :len(idx)] = idx
            mask[r, :len(idx)] = True
        self._check_cols = cols
        self._check_mask = mask

    @property
    def rate(self):
        return self.k / self.n

    def encode(self, message):
        """Systematic encoding: message bits sit on the non-pivot columns."""
        msg = np.asarray(message, dtype=np.uint8) % 2
        if msg.shape != (self.k,):
            raise ValueError(f"expected {self.k} message bits, got {msg.shape}")
        word = np.zeros(self.n, dtype=np.uint8)
        word[self._free_cols] = msg
        word[self._pivot_cols] = (self._encode_map @ msg) % 2
        return word

    def extract_message(self, codeword):
        """Message bits of a (corrected) codeword, inverse of encode()."""
        return np.asarray(codeword, dtype=np.uint8)[self._free_cols]

    def syndrome(self, bits):
        b = np.asarray(bits, dtype=np.int64) % 2
        return (b[self._check_cols] * self._check_mask).sum(axis=1) % 2

    def is_codeword(self, bits):
        return not self.syndrome(bits).any()


# ---------------------------------------------------------------------------
# quasi-cyclic construction
# ---------------------------------------------------------------------------

def _qc_base_assignment(rows, cols, col_weight, rng):
    """Random (row, col) block placement: col_weight per column, uniform rows.

    Produces an exact regular assignment by dealing `col_weight` copies of
    every block column into row slots of equal capacity, retrying when a
    row receives the same column twice.
    """
    row_weight = cols * col_weight // rows
    slots = np.repeat(np.arange(rows), row_weight)
    rng.shuffle(slots)
    assign = slots.reshape(cols, col_weight)
    # repair duplicate rows within a column by swapping with random slots
    for _ in range(10000):
        bad = [c for c in range(cols) if len(set(assign[c])) != col_weight]
        if not bad:
            placement = np.zeros((rows, cols), dtype=bool)
            placement[assign.ravel(), np.repeat(np.arange(cols), col_weight)] = True
            return placement
        c = bad[0]
        vals, counts = np.unique(assign[c], return_counts=True)
        dup = vals[counts > 1][0]
        i = int(np.nonzero(assign[c] == dup)[0][0])
        c2, i2 = int(rng.integers(cols)), int(rng.integers(col_weight))
        assign[c, i], assign[c2, i2] = assign[c2, i2], assign[c, i]
    raise ConfigError("failed to sample a regular quasi-cyclic block placement")


def make_qc_code(n=1024, k=512, z=32, col_weight=3, seed=0, max_tries=50):
    """Random regular quasi-cyclic LDPC code with a full-rank check matrix.

    The (n - k) x n parity-check matrix is tiled from Z x Z blocks that are
    either zero or cyclic shifts of the identity; `col_weight` blocks per
    block column (so row blocks have weight col_weight * n / (n - k)).
    Resamples until the matrix reaches full rank.
    """
    m = n - k
    if n % z or m % z:
        raise ConfigError("code dimensions must be multiples of the circulant size")
    bc, br = n // z, m // z
    if (bc * col_weight) % br:
        raise ConfigError("column weight does not give an integer row block weight")
    rng = np.random.default_rng(seed)
    eye = np.eye(z, dtype=np.uint8)
    for _ in range(max_tries):
        placement = _qc_base_assignment(br, bc, col_weight, rng)
        H = np.zeros((m, n), dtype=np.uint8)
        for r in range(br):
            for c in range(bc):
                if placement[r, c]:
                    shift = int(rng.integers(z))
                    H[r * z:(r + 1) * z, c * z:(c + 1) * z] = np.roll(eye, shift, axis=1)
        if gf2_rank(H) == m:
            return LDPCCode(H)
    raise ConfigError(f"no full-rank parity-check matrix found in {max_tries} tries")


# ---------------------------------------------------------------------------
# alist serialization
# ---------------------------------------------------------------------------

def save_alist(code, path):
    """Write the parity-check matrix in alist format (1-based indices)."""
    H = code.H
    m, n = H.shape
    col_deg = H.sum(axis=0)
    row_deg = H.sum(axis=1)
    lines = [f"{n} {m}", f"{int(col_deg.max())} {int(row_deg.max())}",
             " ".join(str(int(d)) for d in col_deg),
             " ".join(str(int(d)) for d in row_deg)]
    for c in range(n):
        lines.append(" ".join(str(int(r) + 1) for r in np.nonzero(H[:, c])[0]))
    for r in range(m):
        lines.append(" ".join(str(int(c) + 1) for c in np.nonzero(H[r])[0]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_alist(path):
    """Read an alist parity-check matrix (zero-padded entries tolerated)."""
    with open(path) as fh:
        chunks = [line.split() for line in fh if line.strip()]
    try:
        n, m = int(chunks[0][0]), int(chunks[0][1])
        H = np.zeros((m, n), dtype=np.uint8)
        for c in range(n):
            for token in chunks[4 + c]:
                r = int(token)
                if r:
                    H[r - 1, c] = 1
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed alist file: {exc}") from None
    return LDPCCode(H)


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

@dataclass
class DecodeResult:
    """Hard decisions plus decoder diagnostics.

    bits/llr_out come from the best iterate seen (fewest unsatisfied
    checks), which matters when the decoder does not converge.
    """

    bits: np.ndarray
    converged: bool
    iterations: int
    unsatisfied: int
    llr_out: np.ndarray


def min_sum_decode(code, llr, max_iters=50, scale=DEFAULT_MINSUM_SCALE):
    """Normalized min-sum decoding from channel LLRs (positive favors 0).

    Stops early when the syndrome is zero; otherwise returns the iterate
    with the fewest unsatisfied checks.
    """
    llr = np.asarray(llr, dtype=float)
    if llr.shape != (code.n,):
        raise ValueError(f"expected {code.n} channel LLRs, got {llr.shape}")
    cols, mask = code._check_cols, code._check_mask
    c2v = np.zeros(cols.shape)
    total = llr.copy()
    best = DecodeResult((total < 0).astype(np.uint8), False, 0,
                        int(code.syndrome(total < 0).sum()), total.copy())
    if best.unsatisfied == 0:
        return DecodeResult(best.bits, True, 0, 0, best.llr_out)
    for it in range(1, max_iters + 1):
        v2c = np.where(mask, total[cols] - c2v, np.inf)
        sign = np.where(v2c < 0, -1.0, 1.0)
        sign[~mask] = 1.0
        row_sign = sign.prod(axis=1)
        mag = np.abs(v2c)
        order = np.argsort(mag, axis=1)
        min1 = np.take_along_axis(mag, order[:, :1], axis=1)
        min2 = np.take_along_axis(mag, order[:, 1:2], axis=1)
        argmin1 = order[:, :1]
        use = np.where(np.arange(mag.shape[1])[None, :] == argmin1, min2, min1)
        c2v = scale * row_sign[:, None] * sign * use
        c2v[~mask] = 0.0
        total = llr.copy()
        np.add.at(total, cols[mask], c2v[mask])
        bits = (total < 0).astype(np.uint8)
        bad = int(code.syndrome(bits).sum())
        if bad < best.unsatisfied:
            best = DecodeResult(bits, False, it, bad, total.copy())
        if bad == 0:
            return DecodeResult(bits, True, it, 0, total)
    return DecodeResult(best.bits, False, max_iters, best.unsatisfied, best.llr_out)
