"""Self-describing binary tensor container.

Layout:

    bytes 0..3    magic ``TCA1``
    bytes 4..11   manifest length, 8-byte little-endian unsigned
    bytes 12..    manifest, UTF-8 JSON: name -> {dtype, shape, offset, length}
    payload       raw little-endian row-major buffers

``dtype`` is one of ``f32``, ``i64``, ``utf8``. ``offset`` is the absolute
file offset of the entry's buffer and is a multiple of 64; ``length`` is the
buffer's byte length and must equal ``prod(shape) * itemsize`` for numeric
dtypes (for ``utf8`` it is the raw byte length). One container format serves
weights, class text embeddings, datasets, and reservoir snapshots.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArchiveError

MAGIC = b"TCA1"
ALIGN = 64

_ITEMSIZE = {"f32": 4, "i64": 8}
_NP_DTYPE = {"f32": np.dtype("<f4"), "i64": np.dtype("<i8")}


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


class ArchiveWriter:
    """Accumulates named entries and serializes them into one file."""

    def __init__(self):
        self._entries = {}  # name -> (dtype, shape, bytes)

    def add_f32(self, name: str, array) -> None:
        arr = np.ascontiguousarray(array, dtype="<f4")
        self._add(name, "f32", list(arr.shape), arr.tobytes())

    def add_i64(self, name: str, value) -> None:
        arr = np.ascontiguousarray(value, dtype="<i8")
        self._add(name, "i64", list(arr.shape), arr.tobytes())

    def add_utf8(self, name: str, lines) -> None:
        """Store a list of strings as newline-separated UTF-8 text."""
        if isinstance(lines, str):
            lines = [lines]
        for s in lines:
            if "\n" in s:
                raise ArchiveError(f"utf8 entry {name!r}: embedded newline in {s!r}")
        raw = "\n".join(lines).encode("utf-8")
        self._add(name, "utf8", [len(lines)], raw)

    def _add(self, name, dtype, shape, raw):
        if name in self._entries:
            raise ArchiveError(f"duplicate archive entry {name!r}")
        self._entries[name] = (dtype, shape, raw)

    def write(self, path) -> None:
        names = list(self._entries)
        # Offsets appear inside the manifest, and the manifest length moves
        # the payload start, so iterate to a fixed point (digit growth can
        # only lengthen the manifest; two passes almost always suffice).
        manifest_len = 0
        for _ in range(8):
            offset = _align(len(MAGIC) + 8 + manifest_len)
            manifest = {}
            for name in names:
                dtype, shape, raw = self._entries[name]
                manifest[name] = {"dtype": dtype, "shape": shape,
                                  "offset": offset, "length": len(raw)}
                offset = _align(offset + len(raw))
            blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
            if len(blob) == manifest_len:
                break
            manifest_len = len(blob)
        else:
            raise ArchiveError("manifest layout did not converge")

        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", manifest_len))
            fh.write(blob)
            for name in names:
                _, _, raw = self._entries[name]
                pos = manifest[name]["offset"]
                fh.write(b"\0" * (pos - fh.tell()))
                fh.write(raw)


class TensorArchive:
    """Read-only view of an archive file, fully loaded into memory."""

    def __init__(self, path):
        self.path = Path(path)
        self._data = self.path.read_bytes()
        violations = validate_blob(self._data)
        if violations:
            raise ArchiveError(f"{self.path}: " + "; ".join(violations))
        mlen = struct.unpack("<Q", self._data[4:12])[0]
        self.manifest = json.loads(self._data[12:12 + mlen].decode("utf-8"))

    def names(self):
        return sorted(self.manifest)

    def __contains__(self, name):
        return name in self.manifest

    def _raw(self, name, want_dtype):
        try:
            ent = self.manifest[name]
        except KeyError:
            raise ArchiveError(f"{self.path}: missing entry {name!r}") from None
        if ent["dtype"] != want_dtype:
            raise ArchiveError(
                f"{self.path}: entry {name!r} has dtype {ent['dtype']}, "
                f"expected {want_dtype}")
        return ent, self._data[ent["offset"]:ent["offset"] + ent["length"]]

    def read_f32(self, name: str) -> np.ndarray:
        ent, raw = self._raw(name, "f32")
        return np.frombuffer(raw, dtype=_NP_DTYPE["f32"]).reshape(ent["shape"]).astype(np.float32)

    def read_i64(self, name: str) -> np.ndarray:
        ent, raw = self._raw(name, "i64")
        return np.frombuffer(raw, dtype=_NP_DTYPE["i64"]).reshape(ent["shape"])

    def read_scalar(self, name: str) -> int:
        arr = self.read_i64(name).reshape(-1)
        if arr.size != 1:
            raise ArchiveError(f"{self.path}: entry {name!r} is not a scalar")
        return int(arr[0])

    def read_utf8(self, name: str) -> list:
        _, raw = self._raw(name, "utf8")
        return raw.decode("utf-8").split("\n") if raw else []


def validate_blob(data: bytes) -> list:
    """Check structural invariants; returns a list of violation messages."""
    problems = []
    if len(data) < 12:
        return ["file shorter than the 12-byte header"]
    if data[:4] != MAGIC:
        return [f"bad magic {data[:4]!r}"]
    mlen = struct.unpack("<Q", data[4:12])[0]
    if 12 + mlen > len(data):
        return ["manifest overruns the file"]
    try:
        manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return [f"manifest is not valid JSON: {exc}"]
    if not isinstance(manifest, dict):
        return ["manifest is not a JSON object"]

    spans = []
    for name, ent in manifest.items():
        missing = {"dtype", "shape", "offset", "length"} - set(ent)
        if missing:
            problems.append(f"{name}: manifest fields missing {sorted(missing)}")
            continue
        dtype, shape = ent["dtype"], ent["shape"]
        offset, length = ent["offset"], ent["length"]
        if dtype not in ("f32", "i64", "utf8"):
            problems.append(f"{name}: unknown dtype {dtype!r}")
            continue
        if offset % ALIGN:
            problems.append(f"{name}: offset {offset} not {ALIGN}-byte aligned")
        if offset < 12 + mlen:
            problems.append(f"{name}: offset {offset} overlaps the header")
        if offset + length > len(data):
            problems.append(f"{name}: payload overrun "
                            f"(offset {offset} + length {length} > file size {len(data)})")
        if dtype in _ITEMSIZE:
            count = 1
            for d in shape:
                count *= d
            if count * _ITEMSIZE[dtype] != length:
                problems.append(f"{name}: length {length} != prod{tuple(shape)} * "
                                f"{_ITEMSIZE[dtype]}")
        spans.append((offset, offset + length, name))

    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            problems.append(f"entries {n0!r} and {n1!r} overlap")
    return problems


def validate_file(path) -> list:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        return [str(exc)]
    return validate_blob(data)


# --- dataset shard helpers -------------------------------------------------

def write_dataset(path, pixels_list, labels=None, writer: ArchiveWriter = None) -> None:
    """Write sample pixel tensors (3 x side x side, float32) plus labels.

    ``labels`` may be None (stored as -1, unlabeled). When ``writer`` is
    given the entries are added to it instead of producing a new file, so a
    model, text embeddings, and a dataset can share one archive.
    """
    own = writer is None
    w = writer or ArchiveWriter()
    n = len(pixels_list)
    if n == 0:
        raise ArchiveError("dataset must contain at least one sample")
    side = pixels_list[0].shape[-1]
    w.add_i64("meta/count", n)
    w.add_i64("meta/image_side", side)
    for i, px in enumerate(pixels_list):
        if px.shape != (3, side, side):
            raise ArchiveError(f"sample {i}: expected (3, {side}, {side}), got {px.shape}")
        w.add_f32(f"sample/{i}/pixels", px)
        w.add_i64(f"sample/{i}/label", -1 if labels is None else int(labels[i]))
    if own:
        w.write(path)


def iter_dataset(ar: TensorArchive):
    """Yield (pixels, label) pairs in stored order; label None if -1."""
    count = ar.read_scalar("meta/count")
    for i in range(count):
        px = ar.read_f32(f"sample/{i}/pixels")
        if not np.isfinite(px).all():
            raise ArchiveError(f"sample {i}: non-finite pixels")
        label = ar.read_scalar(f"sample/{i}/label")
        yield px, (None if label < 0 else label)
