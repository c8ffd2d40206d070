"""Byte-oriented range Asymmetric Numeral Systems coder.

State is 64-bit with a 2**32 lower bound; renormalization emits 32-bit
little-endian words. Symbols are encoded last-to-first so decoding streams
forward. Segment layout (normative): the final 8-byte little-endian state,
then the renormalization words in decode order. Decoding verifies that the
state returns to the lower bound and that every byte is consumed.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .entropy import TABLE_FREQ_BITS, TABLE_TOTAL
from .errors import CorruptStreamError

RANS_LOWER = 1 << 32
FLUSH_BYTES = 8
_WORD_MASK = (1 << 32) - 1
_CF_MASK = TABLE_TOTAL - 1
_RENORM_SHIFT = 64 - TABLE_FREQ_BITS  # state >= freq << 48 triggers emission


def encode(symbols, tables) -> bytes:
    """Encode a symbol sequence under per-symbol cumulative-frequency tables.

    ``tables[i]`` provides the alphabet for ``symbols[i]``; both sequences
    must have the same length. Returns the flushed segment bytes.
    """
    symbols = [int(s) for s in symbols]
    if len(symbols) != len(tables):
        raise ValueError("symbols and tables must have the same length")
    state = RANS_LOWER
    words: list[int] = []
    emit = words.append
    for i in range(len(symbols) - 1, -1, -1):
        s = symbols[i]
        cum = tables[i].cum
        if not 0 <= s < len(cum) - 1:
            raise ValueError(f"symbol {s} outside table alphabet")
        start = cum[s]
        freq = cum[s + 1] - start
        if freq <= 0:
            raise ValueError(f"symbol {s} has zero frequency")
        if state >= freq << _RENORM_SHIFT:
            emit(state & _WORD_MASK)
            state >>= 32
        q, r = divmod(state, freq)
        state = (q << TABLE_FREQ_BITS) + r + start
    head = state.to_bytes(FLUSH_BYTES, "little")
    if not words:
        return head
    return head + np.asarray(words[::-1], dtype="<u4").tobytes()


def decode(segment: bytes, tables, count: int) -> list[int]:
    """Recover ``count`` symbols from a segment encoded with ``tables``."""
    if count != len(tables):
        raise ValueError("count must match the number of tables")
    if len(segment) < FLUSH_BYTES or (len(segment) - FLUSH_BYTES) % 4:
        raise CorruptStreamError("truncated segment")
    state = int.from_bytes(segment[:FLUSH_BYTES], "little")
    if state < RANS_LOWER:
        raise CorruptStreamError("invalid initial coder state")
    words = np.frombuffer(segment, dtype="<u4", offset=FLUSH_BYTES).tolist()
    nwords = len(words)
    idx = 0
    out: list[int] = []
    append = out.append
    for i in range(count):
        cum = tables[i].cum
        cf = state & _CF_MASK
        s = bisect_right(cum, cf) - 1
        start = cum[s]
        state = (cum[s + 1] - start) * (state >> TABLE_FREQ_BITS) + cf - start
        if state < RANS_LOWER:
            if idx >= nwords:
                raise CorruptStreamError("coder state underflow")
            state = (state << 32) | words[idx]
            idx += 1
        append(s)
    if idx != nwords or state != RANS_LOWER:
        raise CorruptStreamError("segment does not terminate cleanly")
    return out
