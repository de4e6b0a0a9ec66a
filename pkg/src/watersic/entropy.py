"""Empirical entropy, effective rate, and canonical Huffman coding of code matrices.

Code matrices are serialized column by column (column-major). The bitstream
is MSB-first within bytes and zero-padded to a byte boundary. A table with a
single symbol is implicit: its table entry has length 1 but the payload is
empty.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import EmptyHistogram, InvalidCode, TruncatedStream, UnknownSymbol

SIDE_BITS = 16
_TABLE_HEADER = struct.Struct("<iI")


@dataclass(frozen=True)
class SymbolHistogram:
    min_symbol: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.size == 0 or counts.sum() <= 0:
            raise EmptyHistogram("histogram has no occurrences")
        if np.any(counts < 0):
            raise ValueError("negative count")
        if counts[0] == 0 or counts[-1] == 0:
            raise ValueError("histogram range is not tight")

    @classmethod
    def from_codes(cls, z) -> "SymbolHistogram":
        z = np.asarray(z).ravel()
        if z.size == 0:
            raise EmptyHistogram("no symbols")
        lo = int(z.min())
        counts = np.bincount((z.astype(np.int64) - lo))
        return cls(lo, counts)

    @property
    def max_symbol(self) -> int:
        return self.min_symbol + self.counts.size - 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def symbols(self) -> np.ndarray:
        """Symbols with non-zero count, ascending."""
        return np.flatnonzero(self.counts) + self.min_symbol


def _entropy_of_counts(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


def entropy_bits(hist: SymbolHistogram) -> float:
    """Plug-in entropy -Σ p log₂ p in bits per symbol."""
    if hist.total <= 0:
        raise EmptyHistogram("empty histogram")
    return _entropy_of_counts(hist.counts)


def code_entropy(z) -> float:
    """Entropy of all entries of ``z`` pooled into one histogram."""
    return entropy_bits(SymbolHistogram.from_codes(z))


def column_entropy(z) -> float:
    """Mean over columns of each column's own empirical entropy.

    This is the per-weight rate when every column is entropy coded separately.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.size == 0:
        raise EmptyHistogram("need a non-empty 2-D code matrix")
    return float(np.mean([code_entropy(z[:, j]) for j in range(z.shape[1])]))


def effective_rate(h: float, a: int, n: int) -> float:
    """Entropy plus 16-bit side information per row and per column."""
    if a < 1 or n < 1:
        raise ValueError("a and n must be positive")
    return h + SIDE_BITS / a + SIDE_BITS / n


@dataclass(frozen=True)
class HuffmanTable:
    """Canonical prefix code over the integer range [min_symbol, min_symbol + len(lengths)).

    ``lengths[k]`` is the code length of symbol ``min_symbol + k`` (0 = absent).
    """

    min_symbol: int
    lengths: np.ndarray

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=np.int64)
        object.__setattr__(self, "lengths", lengths)
        if lengths.ndim != 1 or not np.any(lengths > 0):
            raise ValueError("table must contain at least one symbol")
        if lengths.max() > 63:
            raise ValueError("code lengths above 63 bits are not supported")
        order = np.lexsort((np.arange(lengths.size), lengths))
        order = order[lengths[order] > 0]
        # canonical assignment: sort by (length, symbol), count upward
        codes = np.zeros(lengths.size, dtype=np.uint64)
        code = 0
        prev = int(lengths[order[0]])
        for k in order:
            ln = int(lengths[k])
            code <<= ln - prev
            codes[k] = code
            code += 1
            prev = ln
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "sorted_index", order)

    @property
    def implicit(self) -> bool:
        """One symbol only: the decoder knows it, so code words are empty."""
        return int(np.count_nonzero(self.lengths)) == 1

    @property
    def max_length(self) -> int:
        return int(self.lengths.max())

    @property
    def symbols(self) -> np.ndarray:
        return self.sorted_index + self.min_symbol

    def kraft_sum(self) -> float:
        present = self.lengths[self.lengths > 0]
        return float(np.sum(2.0 ** -present.astype(np.float64)))

    def mean_length(self, hist: SymbolHistogram) -> float:
        """Average code length under the histogram's distribution."""
        return self.payload_bits(hist) / hist.total

    def payload_bits(self, hist: SymbolHistogram) -> int:
        """Exact number of payload bits for the symbols counted in ``hist``."""
        lens = self._lengths_for(hist.symbols)
        if self.implicit:
            return 0
        return int((lens * hist.counts[hist.counts > 0]).sum())

    def _lengths_for(self, symbols) -> np.ndarray:
        idx = np.asarray(symbols, dtype=np.int64) - self.min_symbol
        if idx.size and (idx.min() < 0 or idx.max() >= self.lengths.size):
            raise UnknownSymbol("symbol outside the table range")
        lens = self.lengths[idx]
        if np.any(lens == 0):
            bad = int(np.asarray(symbols).ravel()[np.flatnonzero(lens == 0)[0]])
            raise UnknownSymbol(f"symbol {bad} has no code")
        return lens

    def to_bytes(self) -> bytes:
        """(min_symbol: i32, count: u32, one u8 length per symbol in range)."""
        return _TABLE_HEADER.pack(self.min_symbol, self.lengths.size) + self.lengths.astype(
            np.uint8
        ).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, offset: int = 0) -> Tuple["HuffmanTable", int]:
        """Parse a serialized table; returns the table and the offset just past it."""
        if len(blob) < offset + _TABLE_HEADER.size:
            raise TruncatedStream("table header cut short")
        lo, count = _TABLE_HEADER.unpack_from(blob, offset)
        start = offset + _TABLE_HEADER.size
        if len(blob) < start + count:
            raise TruncatedStream("table lengths cut short")
        lengths = np.frombuffer(blob, dtype=np.uint8, count=count, offset=start)
        return cls(lo, lengths.astype(np.int64)), start + count


def _huffman_lengths(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    present = np.flatnonzero(counts)
    lengths = np.zeros(counts.size, dtype=np.int64)
    if present.size == 1:
        lengths[present[0]] = 1
        return lengths
    # heap items: (weight, tiebreak, leaves); ties resolve by smallest symbol index
    heap = [(int(counts[k]), int(k), [int(k)]) for k in present]
    heapq.heapify(heap)
    while len(heap) > 1:
        w1, t1, s1 = heapq.heappop(heap)
        w2, t2, s2 = heapq.heappop(heap)
        merged = s1 + s2
        lengths[merged] += 1
        heapq.heappush(heap, (w1 + w2, min(t1, t2), merged))
    return lengths


def build_huffman(hist: SymbolHistogram) -> HuffmanTable:
    return HuffmanTable(hist.min_symbol, _huffman_lengths(hist.counts))


def _column_major(z) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim == 1:
        return z.astype(np.int64)
    return z.T.ravel().astype(np.int64)


def encode_bits(z, table: HuffmanTable) -> Tuple[bytes, int]:
    """Encode ``z`` (column-major); returns the padded bytes and the exact bit count."""
    symbols = _column_major(z)
    lens = table._lengths_for(symbols)
    codes = table.codes[symbols - table.min_symbol]
    nbits = int(lens.sum())
    if nbits == 0 or table.implicit:
        return b"", 0
    owner = np.repeat(np.arange(symbols.size), lens)
    starts = np.cumsum(lens) - lens
    shift = (lens[owner] - 1 - (np.arange(nbits) - starts[owner])).astype(np.uint64)
    bits = ((codes[owner] >> shift) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits).tobytes(), nbits


def encode(z, table: HuffmanTable) -> bytes:
    return encode_bits(z, table)[0]


def _decode_positions(bits: np.ndarray, table: HuffmanTable):
    """For every start position, the code length and symbol decoded there (0 = invalid)."""
    nbits = bits.size
    lengths = table.lengths
    max_len = table.max_length
    order = table.sorted_index
    sorted_lens = lengths[order]
    padded = np.concatenate([bits.astype(np.uint64), np.zeros(max_len, dtype=np.uint64)])
    value = np.zeros(nbits, dtype=np.uint64)
    found_len = np.zeros(nbits, dtype=np.int64)
    found_sym = np.zeros(nbits, dtype=np.int64)
    for ln in range(1, max_len + 1):
        value = (value << np.uint64(1)) | padded[ln - 1 : ln - 1 + nbits]
        members = np.flatnonzero(sorted_lens == ln)
        if members.size == 0:
            continue
        first = table.codes[order[members[0]]]
        hit = (found_len == 0) & (value >= first) & (value < first + np.uint64(members.size))
        if hit.any():
            found_len[hit] = ln
            found_sym[hit] = order[members[0] + (value[hit] - first).astype(np.int64)]
    return found_len, found_sym


def decode(bitstream: bytes, table: HuffmanTable, a: int, n: int, nbits: int | None = None) -> np.ndarray:
    """Decode ``a * n`` symbols (column-major) back into an (a, n) int32 matrix.

    Raises:
        TruncatedStream: the stream ends before all symbols are read.
        InvalidCode: a bit pattern matches no code word.
    """
    count = int(a) * int(n)
    bits = np.unpackbits(np.frombuffer(bitstream, dtype=np.uint8))
    if nbits is not None:
        if nbits > bits.size:
            raise TruncatedStream(f"stream holds {bits.size} bits, header claims {nbits}")
        bits = bits[:nbits]
    if count == 0:
        return np.zeros((a, n), dtype=np.int32)
    if table.implicit:
        if bits.size:
            raise InvalidCode(f"{bits.size} payload bits for a single-symbol table")
        return np.full((a, n), int(table.symbols[0]), dtype=np.int32)
    if bits.size == 0:
        raise TruncatedStream("empty stream")
    size = bits.size
    found_len, found_sym = _decode_positions(bits, table)
    # successor of each start position; `size` is an absorbing sink
    nxt = np.append(np.arange(size) + found_len, size)
    nxt[:size][found_len == 0] = size
    nxt = np.minimum(nxt, size)
    positions = np.zeros(1, dtype=np.int64)
    jump = nxt
    while positions.size < count:
        positions = np.concatenate([positions, jump[positions]])
        jump = jump[jump]
    positions = positions[:count]
    if np.any(positions >= size):
        k = int(np.flatnonzero(positions >= size)[0])
        prev = positions[k - 1]
        if found_len[prev] == 0:
            raise InvalidCode(f"no code word at bit {prev}")
        raise TruncatedStream(f"stream ended after {k} of {count} symbols")
    lens = found_len[positions]
    if np.any(lens == 0):
        raise InvalidCode(f"no code word at bit {positions[np.flatnonzero(lens == 0)[0]]}")
    if positions[-1] + lens[-1] > size:
        raise TruncatedStream("last code word runs past the end of the stream")
    symbols = found_sym[positions] + table.min_symbol
    return symbols.reshape(n, a).T.astype(np.int32)


def codec_rate_check(z) -> Tuple[float, float]:
    """(entropy, Huffman bits per symbol) of a code matrix under one joint table."""
    hist = SymbolHistogram.from_codes(z)
    table = build_huffman(hist)
    return entropy_bits(hist), table.mean_length(hist)
