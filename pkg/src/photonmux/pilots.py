"""Pilot sequence helpers: m-sequence generation and pilot file parsing."""

from __future__ import annotations

import numpy as np

# primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 -> 255-bit m-sequence
DEFAULT_TAPS = (8, 4, 3, 2)


def m_sequence(taps=DEFAULT_TAPS, length=None, init=None):
    """Binary m-sequence from a Fibonacci LFSR with the given feedback taps.

    taps lists the polynomial exponents with nonzero coefficients (the
    constant term is implicit); the default yields the 255-bit sequence.
    """
    degree = max(taps)
    if length is None:
        length = (1 << degree) - 1
    seed = np.ones(degree, dtype=np.uint8) if init is None else \
        np.asarray(init, dtype=np.uint8).copy()
    if seed.shape != (degree,) or not seed.any():
        raise ValueError(f"initial state must be a nonzero length-{degree} bit vector")
    # recurrence from the polynomial: s[m] = XOR of s[m - lag] over the lags
    lags = sorted({degree} | {degree - t for t in taps if t != degree})
    out = np.empty(max(length, degree), dtype=np.uint8)
    out[:degree] = seed
    for m in range(degree, len(out)):
        bit = 0
        for lag in lags:
            bit ^= out[m - lag]
        out[m] = bit
    return out[:length]


def tile_pilot(bits, num_symbols):
    """Repeat a pilot pattern cyclically to cover num_symbols symbols."""
    bits = np.asarray(bits, dtype=np.uint8)
    reps = -(num_symbols // -len(bits))
    return np.tile(bits, reps)[:num_symbols]


def parse_pilot_text(text):
    """Pilot bits from a text payload: '0'/'1' string or '0x...' hex."""
    text = "".join(text.split())
    if not text:
        raise ValueError("empty pilot specification")
    if text.lower().startswith("0x"):
        hexdigits = text[2:]
        value = int(hexdigits, 16)
        nbits = 4 * len(hexdigits)
        return np.array([(value >> (nbits - 1 - i)) & 1 for i in range(nbits)],
                        dtype=np.uint8)
    if set(text) <= {"0", "1"}:
        return np.array([int(c) for c in text], dtype=np.uint8)
    raise ValueError("pilot file must contain a binary string or 0x-prefixed hex")


def load_pilot_file(path):
    with open(path) as fh:
        return parse_pilot_text(fh.read())
