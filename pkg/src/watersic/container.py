"""WSQZ: the byte-exact on-disk form of a quantized layer.

Layout (little-endian)::

    magic       4s   b"WSQZ"
    version     u32  1
    rows (a)    u64
    cols (n)    u64
    dead mask   ceil(n/8) bytes, bit j (LSB-first) set when column j is dead
    col scales  u16 × live_n   bfloat16 of α_j γ_j, live columns in order
    row gains   u16 × a        bfloat16 of t_i
    table       i32 min_symbol, u32 count, u8 × count code lengths
    nbits       u64  payload length in bits
    payload     ceil(nbits/8) bytes, Huffman codes of the live columns, column-major
    crc32       u32  of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import HuffmanTable, SymbolHistogram, build_huffman, decode, encode_bits
from .errors import BadMagic, ChecksumFailure, TruncatedStream, VersionMismatch
from .matcore import FeatureMask

MAGIC = b"WSQZ"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


def to_bf16(x) -> np.ndarray:
    """Round float values to bfloat16 bit patterns (round to nearest even)."""
    bits = np.asarray(x, dtype=np.float32).view(np.uint32).astype(np.uint64)
    rounding = np.uint64(0x7FFF) + ((bits >> np.uint64(16)) & np.uint64(1))
    return ((bits + rounding) >> np.uint64(16)).astype(np.uint16)


def from_bf16(h) -> np.ndarray:
    bits = np.asarray(h, dtype=np.uint16).astype(np.uint32) << np.uint32(16)
    return bits.view(np.float32).astype(np.float64)


def bf16_round(x) -> np.ndarray:
    return from_bf16(to_bf16(x))


@dataclass
class DecodedLayer:
    codes: np.ndarray
    scales: np.ndarray
    row_gains: np.ndarray
    mask: FeatureMask

    def dequantize(self) -> np.ndarray:
        return self.row_gains[:, None] * self.codes * self.scales


def encode_container(layer) -> bytes:
    """Serialize a :class:`~watersic.pipeline.QuantizedLayer`."""
    codes = np.asarray(layer.codes)
    a, n = codes.shape
    mask = layer.mask
    live = codes[:, mask.live]
    table = build_huffman(SymbolHistogram.from_codes(live))
    payload, nbits = encode_bits(live, table)
    dead = np.packbits(~mask.live, bitorder="little")
    parts = [
        _HEADER.pack(MAGIC, VERSION, a, n),
        dead.tobytes(),
        to_bf16(layer.fused_scales[mask.live]).astype("<u2").tobytes(),
        to_bf16(layer.row_gains).astype("<u2").tobytes(),
        table.to_bytes(),
        _U64.pack(nbits),
        payload,
    ]
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def _take(blob, offset, size, what):
    if offset + size > len(blob):
        raise TruncatedStream(f"container ends inside {what}")
    return blob[offset : offset + size], offset + size


def decode_container(blob: bytes) -> DecodedLayer:
    """Parse and validate a container; raises on bad magic, version, checksum or truncation."""
    blob = bytes(blob)
    if len(blob) < 4:
        raise TruncatedStream("container shorter than its magic")
    if blob[:4] != MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}")
    if len(blob) < _HEADER.size + _U32.size:
        raise TruncatedStream("container shorter than its header")
    body, crc = blob[:-4], _U32.unpack(blob[-4:])[0]
    if zlib.crc32(body) != crc:
        raise ChecksumFailure("CRC32 mismatch")
    _, version, a, n = _HEADER.unpack_from(body)
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    off = _HEADER.size
    raw, off = _take(body, off, (n + 7) // 8, "dead mask")
    dead = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n].astype(bool)
    mask = FeatureMask(~dead)
    live_n = mask.live_count
    raw, off = _take(body, off, 2 * live_n, "column scales")
    live_scales = from_bf16(np.frombuffer(raw, dtype="<u2"))
    raw, off = _take(body, off, 2 * a, "row gains")
    t = from_bf16(np.frombuffer(raw, dtype="<u2"))
    table, off = HuffmanTable.from_bytes(body, off)
    raw, off = _take(body, off, _U64.size, "payload length")
    nbits = _U64.unpack(raw)[0]
    payload, off = _take(body, off, (nbits + 7) // 8, "payload")
    if off != len(body):
        raise TruncatedStream(f"{len(body) - off} unexpected trailing bytes")
    live = decode(payload, table, a, live_n, nbits=nbits)
    codes = np.zeros((a, n), dtype=np.int32)
    codes[:, mask.live] = live
    scales = np.zeros(n)
    scales[mask.live] = live_scales
    return DecodedLayer(codes, scales, t, mask)


def dequantize(blob: bytes) -> np.ndarray:
    """Ŵ = diag(t) Z diag(s) straight from container bytes."""
    return decode_container(blob).dequantize()


def container_bits_bound(layer) -> int:
    """Exact size in bits implied by the field layout for this layer."""
    a, n = layer.codes.shape
    live = layer.codes[:, layer.mask.live]
    hist = SymbolHistogram.from_codes(live)
    table = build_huffman(hist)
    payload_bits = table.payload_bits(hist)
    fixed = _HEADER.size + (n + 7) // 8 + len(table.to_bytes()) + _U64.size + _U32.size
    return 8 * fixed + 16 * layer.mask.live_count + 16 * a + 8 * ((payload_bits + 7) // 8)
