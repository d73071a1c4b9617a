"""EMB1 embedding files and identity manifests.

EMB1 layout (all little-endian)::

    offset 0   4 bytes  ASCII "EMB1"
    offset 4   uint32   version, always 1
    offset 8   uint32   dim
    offset 12  uint64   count
    offset 20  count * dim float32 values, row-major

Row ``i`` starts at byte ``20 + i * dim * 4``. The manifest is UTF-8 JSONL with
one ``{image_id, identity_id, variant, file, row}`` object per line; ``file``
is resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, FormatError, InvalidArgumentError, NotFoundError
from .index import Variant

MAGIC = b"EMB1"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")
HEADER_SIZE = HEADER.size  # 20
MANIFEST_KEYS = ("image_id", "identity_id", "variant", "file", "row")


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- EMB1 ---------------------------------------------------------------------

def write_embeddings(path, vectors):
    """Write ``vectors`` (a 2-D array or a list of 1-D vectors) as EMB1."""
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        arr = vectors
    else:
        rows = [np.asarray(v) for v in vectors]
        dims = {r.shape for r in rows}
        if len(dims) > 1:
            raise InvalidArgumentError(f"vectors have mixed dimensions: {sorted(dims)}")
        if any(len(s) != 1 for s in dims):
            raise InvalidArgumentError("each vector must be 1-D")
        arr = np.array(rows) if rows else np.empty((0, 0))
    count = arr.shape[0]
    dim = arr.shape[1] if count else 0
    if count and dim == 0:
        raise InvalidArgumentError("embedding dimension must be positive")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise InvalidArgumentError(f"vector {bad} contains non-finite values")
    _atomic_write(path, HEADER.pack(MAGIC, VERSION, dim, count) + arr.tobytes())


def read_header(path):
    """Return ``(dim, count)`` after checking magic, version and file length."""
    path = Path(path)
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            head = fh.read(HEADER_SIZE)
    except FileNotFoundError:
        raise NotFoundError(f"{path}: no such embedding file") from None
    if len(head) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(head)} of {HEADER_SIZE} bytes)")
    magic, version, dim, count = HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    if count and dim == 0:
        raise FormatError(f"{path}: dim is 0 at offset 8 but count is {count}")
    expected = HEADER_SIZE + count * dim * 4
    if size != expected:
        kind = "truncated payload" if size < expected else "trailing bytes"
        raise FormatError(
            f"{path}: {kind}: header implies {expected} bytes (dim={dim}, count={count}), file has {size}")
    return dim, count


def read_embeddings(path):
    """Read an EMB1 file. Returns ``{"dim", "count", "vectors"}``."""
    dim, count = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        payload = fh.read()
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    finite = np.isfinite(vectors)
    if not finite.all():
        row, col = (int(x) for x in np.argwhere(~finite)[0])
        raise DataError(
            f"{path}: non-finite value at row {row}, column {col} "
            f"(byte offset {HEADER_SIZE + (row * dim + col) * 4})")
    return {"dim": dim, "count": count, "vectors": vectors}


# -- manifests ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    identity_id: str
    variant: Variant
    file: str
    row: int

    def to_json(self) -> str:
        obj = {"image_id": self.image_id, "identity_id": self.identity_id,
               "variant": self.variant.value, "file": self.file, "row": self.row}
        return json.dumps(obj, ensure_ascii=False)


@dataclass
class IdentityManifest:
    records: list[ManifestRecord]
    root: Path = field(default_factory=Path, compare=False)

    def __len__(self):
        return len(self.records)

    def variants(self):
        seen = []
        for r in self.records:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def select(self, variant=Variant.ORIGINAL):
        variant = Variant.parse(variant)
        return [r for r in self.records if r.variant is variant]

    def identity_of(self, image_id) -> str:
        for r in self.records:
            if r.image_id == image_id:
                return r.identity_id
        raise NotFoundError(f"image_id {image_id!r} is not in the manifest")

    def identities(self, variant=Variant.ORIGINAL) -> dict[str, str]:
        return {r.image_id: r.identity_id for r in self.select(variant)}

    def resolve(self, file) -> Path:
        p = Path(file)
        return p if p.is_absolute() else self.root / p

    def validate(self):
        """Check uniqueness, row bounds and a shared dimension across files."""
        seen = set()
        for line, r in enumerate(self.records, start=1):
            key = (r.image_id, r.variant)
            if key in seen:
                raise DataError(f"line {line}: duplicate (image_id, variant) {r.image_id!r}, {r.variant.value!r}")
            seen.add(key)
        dims = {}
        for line, r in enumerate(self.records, start=1):
            if r.file not in dims:
                try:
                    dims[r.file] = read_header(self.resolve(r.file))
                except NotFoundError as exc:
                    raise DataError(f"line {line}: dangling file reference: {exc}") from None
            dim, count = dims[r.file]
            if r.row >= count:
                raise DataError(f"line {line}: dangling reference, row {r.row} >= count {count} in {r.file}")
        if len({d for d, c in dims.values() if c}) > 1:
            raise DataError(f"embedding files have different dimensions: "
                            f"{ {f: d for f, (d, _) in sorted(dims.items())} }")
        return self


def _parse_record(obj, where) -> ManifestRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object")
    missing = [k for k in MANIFEST_KEYS if k not in obj]
    extra = sorted(set(obj) - set(MANIFEST_KEYS))
    if missing or extra:
        raise FormatError(f"{where}: missing keys {missing}, unexpected keys {extra}")
    for key in ("image_id", "identity_id", "file"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise FormatError(f"{where}: {key} must be a non-empty string")
    try:
        variant = Variant(obj["variant"])
    except ValueError:
        raise FormatError(f"{where}: unknown variant {obj['variant']!r}") from None
    row = obj["row"]
    if isinstance(row, bool) or not isinstance(row, int) or row < 0:
        raise FormatError(f"{where}: row must be a non-negative integer")
    return ManifestRecord(obj["image_id"], obj["identity_id"], variant, obj["file"], row)


def read_manifest(path, validate=True) -> IdentityManifest:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {line_no}: invalid JSON: {exc.msg}") from None
            records.append(_parse_record(obj, f"{path}: line {line_no}"))
    manifest = IdentityManifest(records, root=path.parent)
    if validate:
        try:
            manifest.validate()
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return manifest


def write_manifest(path, manifest: IdentityManifest):
    text = "".join(r.to_json() + "\n" for r in manifest.records)
    _atomic_write(path, text.encode("utf-8"))


def import_csv(path) -> IdentityManifest:
    """Convert a CSV with header ``image_id,identity_id,variant,file,row``."""
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(MANIFEST_KEYS):
            raise FormatError(f"{path}: line 1: header must be {','.join(MANIFEST_KEYS)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                row["row"] = int(row["row"])
            except (TypeError, ValueError):
                raise FormatError(f"{path}: line {line_no}: row must be an integer") from None
            records.append(_parse_record(row, f"{path}: line {line_no}"))
    return IdentityManifest(records, root=path.parent)


def load_vectors(manifest: IdentityManifest, variant=Variant.ORIGINAL) -> dict[str, np.ndarray]:
    """Map image_id to its float32 vector for one variant."""
    cache = {}
    out = {}
    for r in manifest.select(variant):
        if r.file not in cache:
            cache[r.file] = read_embeddings(manifest.resolve(r.file))["vectors"]
        out[r.image_id] = cache[r.file][r.row]
    return out
