"""The ``.eprs`` binary container for models, quantized models and tensor bundles.

Layout (little-endian), documented in ``docs/format.md``::

    magic "EPRS" | u16 version | u16 flags
    u32 config length | config (raw DEFLATE of compact JSON)
    u32 record count | records...
    u32 CRC32 of every preceding byte

Each record is ``u8 name length | name | u8 kind tag | u8 dtype tag | u8 ndim |
u32 dims...`` followed by quantization parameters (``f64 scale | u32 zero
point``) for quantized dtypes, ``u32 nnz`` for CSR, then the payload. Pruned
weights are stored as literal zeros so the size saving comes from the
compressor.
"""

import json
import struct
import zlib

import numpy as np

from .exceptions import ParseError, ShapeError
from .model import Model, ModelConfig, prunable_keys
from .quantization import QuantizedModel, QuantizedTensor
from .sparse import from_csr, to_csr
from .tensor.layers import LAYER_TYPES

MAGIC = b"EPRS"
VERSION = 1

FLAG_QUANTIZED = 0x1
FLAG_CSR = 0x2
FLAG_TENSORS = 0x4

DTYPE_F32, DTYPE_U8Q, DTYPE_U16Q, DTYPE_CSR = 0, 1, 2, 3
DTYPE_NAMES = {DTYPE_F32: "f32", DTYPE_U8Q: "u8q", DTYPE_U16Q: "u16q", DTYPE_CSR: "csr"}
KIND_TAGS = {kind: i for i, kind in enumerate(sorted(LAYER_TYPES))}
TENSOR_KIND = 255

DEFLATE_LEVEL = 6


def _deflate(data, level=DEFLATE_LEVEL):
    c = zlib.compressobj(level, zlib.DEFLATED, -15)
    return c.compress(data) + c.flush()


def compressed_size(data):
    """Byte count of ``data`` after raw DEFLATE at level 6."""
    return len(_deflate(bytes(data)))


class _Writer:
    def __init__(self):
        self.parts = []

    def pack(self, fmt, *values):
        self.parts.append(struct.pack("<" + fmt, *values))

    def raw(self, data):
        self.parts.append(bytes(data))

    def getvalue(self):
        return b"".join(self.parts)


def _write_header(w, flags, meta):
    w.raw(MAGIC)
    w.pack("HH", VERSION, flags)
    blob = _deflate(json.dumps(meta, separators=(",", ":"), sort_keys=True).encode())
    w.pack("I", len(blob))
    w.raw(blob)


def _write_record(w, name, kind_tag, dtype_tag, shape, payload, quant=None, nnz=None):
    encoded = name.encode()
    if len(encoded) > 255:
        raise ShapeError(f"record name {name!r} is longer than 255 bytes")
    w.pack("B", len(encoded))
    w.raw(encoded)
    w.pack("BBB", kind_tag, dtype_tag, len(shape))
    w.pack(f"{len(shape)}I", *shape)
    if quant is not None:
        w.pack("dI", *quant)
    if nnz is not None:
        w.pack("I", nnz)
    w.raw(payload)


def _f32(a):
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _csr_payload(w2d):
    m = to_csr(w2d)
    return m.nnz, (m.row_ptr.astype("<u4").tobytes() + m.col_idx.astype("<u4").tobytes()
                   + np.asarray(m.values, dtype="<f4").tobytes())


def serialize(model, csr=False):
    """Deterministic bytes for a :class:`Model` or :class:`QuantizedModel`.

    With ``csr=True`` 2-D float weights are stored in CSR form (only for
    float models).
    """
    quantized = isinstance(model, QuantizedModel)
    flags = (FLAG_QUANTIZED if quantized else 0) | (FLAG_CSR if csr and not quantized else 0)
    meta = {"config": model.config.to_dict(description=False)}
    if quantized:
        meta["bits"] = model.bits
    w = _Writer()
    _write_header(w, flags, meta)
    records = []
    for layer in model.layers:
        kind_tag = KIND_TAGS[layer.kind]
        for pname in layer.param_shapes():
            key = f"{layer.name}/{pname}"
            if quantized and key in model.qweights:
                q = model.qweights[key]
                tag = DTYPE_U8Q if q.bits == 8 else DTYPE_U16Q
                dt = "<u1" if q.bits == 8 else "<u2"
                records.append((key, kind_tag, tag, q.shape, q.data.astype(dt).tobytes(), (q.scale, q.zero_point), None))
                continue
            value = model.fparams[key] if quantized else model.params[key]
            if csr and not quantized and value.ndim == 2:
                nnz, payload = _csr_payload(value)
                records.append((key, kind_tag, DTYPE_CSR, value.shape, payload, None, nnz))
            else:
                records.append((key, kind_tag, DTYPE_F32, value.shape, _f32(value), None, None))
    w.pack("I", len(records))
    for rec in records:
        _write_record(w, *rec)
    body = w.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Truncated(ParseError):
    pass


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise _Truncated(f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_header(body):
    r = _Reader(body)
    if r.take(4, "magic") != MAGIC:
        raise ParseError(f"bad magic {body[:4]!r}, expected {MAGIC!r}", 0)
    version, flags = r.unpack("HH", "header")
    if version != VERSION:
        raise ParseError(f"unsupported container version {version}", 4)
    (n,) = r.unpack("I", "config length")
    start = r.pos
    blob = r.take(n, "config")
    try:
        meta = json.loads(zlib.decompress(blob, -15))
    except (zlib.error, ValueError) as exc:
        raise ParseError(f"unreadable config block: {exc}", start) from None
    return r, flags, meta


def _parse(data):
    """``(flags, meta, records)`` of a container.

    The structure is parsed before the CRC is checked so that a truncated
    file reports the record it ends in; any other fault in a file whose CRC
    does not match is reported as corruption.
    """
    data = bytes(data)
    if len(data) < 12:
        raise ParseError(f"container too short ({len(data)} bytes)", 0)
    if data[:4] != MAGIC:
        raise ParseError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    actual = zlib.crc32(body)
    mismatch = ParseError(f"CRC mismatch: stored {crc:#010x}, computed {actual:#010x}", len(body))
    try:
        r, flags, meta = _read_header(body)
        records = _read_records(r)
    except _Truncated:
        raise
    except ParseError:
        if crc != actual:
            raise mismatch from None
        raise
    if crc != actual:
        raise mismatch
    return flags, meta, records


def _read_records(r):
    (count,) = r.unpack("I", "record count")
    records = {}
    for _ in range(count):
        at = r.pos
        (nlen,) = r.unpack("B", "record name length")
        name = r.take(nlen, "record name").decode(errors="replace")
        kind_tag, dtype_tag, ndim = r.unpack("BBB", f"record {name!r} header")
        shape = r.unpack(f"{ndim}I", f"record {name!r} shape")
        quant = nnz = None
        if dtype_tag in (DTYPE_U8Q, DTYPE_U16Q):
            quant = r.unpack("dI", f"record {name!r} quantization parameters")
        elif dtype_tag == DTYPE_CSR:
            (nnz,) = r.unpack("I", f"record {name!r} nnz")
        elif dtype_tag != DTYPE_F32:
            raise ParseError(f"record {name!r}: unknown dtype tag {dtype_tag}", at)
        count_el = int(np.prod(shape)) if shape else 1
        try:
            if dtype_tag == DTYPE_F32:
                value = np.frombuffer(r.take(4 * count_el, f"payload of {name!r}"), "<f4").reshape(shape).astype(np.float32)
            elif dtype_tag == DTYPE_CSR:
                if len(shape) != 2:
                    raise ParseError(f"record {name!r}: CSR needs a 2-D shape, got {shape}", at)
                rows, cols = shape
                rp = np.frombuffer(r.take(4 * (rows + 1), f"payload of {name!r}"), "<u4").astype(np.int64)
                ci = np.frombuffer(r.take(4 * nnz, f"payload of {name!r}"), "<u4").astype(np.int64)
                vals = np.frombuffer(r.take(4 * nnz, f"payload of {name!r}"), "<f4").astype(np.float32)
                from .sparse import CsrMatrix

                value = from_csr(CsrMatrix(rows, cols, rp, ci, vals).validate(), np.float32)
            else:
                bits = 8 if dtype_tag == DTYPE_U8Q else 16
                dt = "<u1" if bits == 8 else "<u2"
                raw = np.frombuffer(r.take(count_el * bits // 8, f"payload of {name!r}"), dt).reshape(shape)
                value = QuantizedTensor(raw.astype(np.uint8 if bits == 8 else np.uint16), bits, quant[0], quant[1])
        except ShapeError as exc:
            raise ParseError(f"record {name!r}: {exc}", at) from None
        records[name] = (kind_tag, value)
    if r.pos != len(r.data):
        raise ParseError(f"{len(r.data) - r.pos} unexpected bytes after the last record", r.pos)
    return records


def deserialize(data):
    """Inverse of :func:`serialize`; returns a :class:`Model` or :class:`QuantizedModel`.

    Masks are not stored: on load they mark the non-zero prunable weights.
    """
    from .model import build_model

    flags, meta, records = _parse(data)
    if flags & FLAG_TENSORS:
        raise ParseError("container holds a tensor bundle, not a model (use load_tensors)", 6)
    config = ModelConfig.from_dict(meta["config"])
    skeleton = build_model(config)
    expected = set(skeleton.params)
    if set(records) != expected:
        missing, extra = sorted(expected - set(records)), sorted(set(records) - expected)
        raise ParseError(f"records do not match the config (missing {missing}, unexpected {extra})", 0)
    for key, (_, value) in records.items():
        if value.shape != skeleton.params[key].shape:
            raise ParseError(f"record {key!r} has shape {value.shape}, config needs {skeleton.params[key].shape}", 0)
    if flags & FLAG_QUANTIZED:
        qweights = {k: v for k, (_, v) in records.items() if isinstance(v, QuantizedTensor)}
        fparams = {k: v for k, (_, v) in records.items() if not isinstance(v, QuantizedTensor)}
        return QuantizedModel(config, skeleton.layers, qweights, fparams, int(meta["bits"]))
    params = {k: v for k, (_, v) in records.items()}
    masks = {k: params[k] != 0 for k in prunable_keys(skeleton.layers)}
    return Model(config, skeleton.layers, params, masks)


def save_model(path, model, csr=False):
    data = serialize(model, csr=csr)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def serialize_tensors(tensors, meta=None):
    """Container holding named float32 arrays plus a JSON ``meta`` block (feature caches)."""
    w = _Writer()
    _write_header(w, FLAG_TENSORS, {"meta": meta or {}})
    w.pack("I", len(tensors))
    for name in sorted(tensors):
        value = np.asarray(tensors[name], dtype=np.float32)
        _write_record(w, name, TENSOR_KIND, DTYPE_F32, value.shape, _f32(value))
    body = w.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_tensors(data):
    flags, meta, records = _parse(data)
    if not flags & FLAG_TENSORS:
        raise ParseError("container holds a model, not a tensor bundle", 6)
    return {k: v for k, (_, v) in records.items()}, meta.get("meta", {})


def save_tensors(path, tensors, meta=None):
    with open(path, "wb") as fh:
        fh.write(serialize_tensors(tensors, meta))


def load_tensors(path):
    with open(path, "rb") as fh:
        return deserialize_tensors(fh.read())


def describe(data):
    """Header and per-record summary of a container, for inspection."""
    flags, meta, recs = _parse(data)
    kinds = {v: k for k, v in KIND_TAGS.items()}
    return {
        "version": VERSION,
        "flags": flags,
        "meta": meta,
        "records": [
            {"name": k, "kind": kinds.get(tag, "tensor"), "shape": list(v.shape),
             "dtype": ("u8q" if v.bits == 8 else "u16q") if isinstance(v, QuantizedTensor) else "f32"}
            for k, (tag, v) in recs.items()
        ],
    }
