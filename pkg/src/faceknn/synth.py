"""Seeded synthetic identities and perturbed variants.

Random numbers come from Philox4x64-10 (numpy's ``Philox`` bit generator)
keyed by ``seed + (stream << 64)``: stream 0 draws identity centroids, stream 1
the original images, stream ``2 + i`` the i-th perturbation level. Uniforms
are numpy's 53-bit doubles in [0, 1); standard normals use the Box-Muller
transform on pairs ``(u1, u2)`` as ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` and
the matching ``sin`` term, consumed in that order. Values are computed in
float64 and stored as float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError
from .index import Variant
from .ingestion import IdentityManifest, ManifestRecord, write_embeddings, write_manifest

PERTURBED_VARIANTS = (Variant.FAWKES, Variant.LOWKEY, Variant.OTHER)


@dataclass(frozen=True)
class PerturbationLevel:
    variant: Variant
    noise_scale: float


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_identities: int = 50
    images_per_identity: int = 10
    dim: int = 32
    intra_spread: float = 1.0
    inter_spread: float = 100.0
    perturbation_levels: tuple[PerturbationLevel, ...] = field(default=())

    def __post_init__(self):
        for name in ("n_identities", "images_per_identity", "dim"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")
        for name in ("intra_spread", "inter_spread"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidArgumentError(f"{name} must be a positive real, got {v!r}")
        seen = set()
        for level in self.perturbation_levels:
            variant = Variant.parse(level.variant)
            if variant is Variant.ORIGINAL:
                raise InvalidArgumentError("a perturbation level cannot use the original variant")
            if variant in seen:
                raise InvalidArgumentError(f"variant {variant.value!r} listed twice")
            seen.add(variant)
            if not np.isfinite(level.noise_scale) or level.noise_scale < 0:
                raise InvalidArgumentError(f"noise_scale must be non-negative, got {level.noise_scale!r}")


def levels_from_scales(scales) -> tuple[PerturbationLevel, ...]:
    """Assign noise scales to fawkes, lowkey and other, in that order."""
    scales = list(scales)
    if len(scales) > len(PERTURBED_VARIANTS):
        raise InvalidArgumentError(f"at most {len(PERTURBED_VARIANTS)} perturbation levels are supported")
    return tuple(PerturbationLevel(v, float(s)) for v, s in zip(PERTURBED_VARIANTS, scales))


def _normals(seed, stream, shape):
    n = int(np.prod(shape))
    gen = np.random.Generator(np.random.Philox(key=seed + (stream << 64)))
    u = gen.random(2 * ((n + 1) // 2)).reshape(-1, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()
    return z[:n].reshape(shape)


@dataclass
class SynthData:
    image_ids: list[str]
    identity_ids: list[str]
    originals: np.ndarray
    variants: dict[Variant, np.ndarray]


def synthesize(spec: SynthSpec) -> SynthData:
    n, m, d = spec.n_identities, spec.images_per_identity, spec.dim
    centroids = spec.inter_spread * _normals(spec.seed, 0, (n, d))
    noise = spec.intra_spread * _normals(spec.seed, 1, (n, m, d))
    originals = (centroids[:, None, :] + noise).reshape(n * m, d).astype(np.float32)
    variants = {}
    for i, level in enumerate(spec.perturbation_levels):
        z = _normals(spec.seed, 2 + i, (n * m, d))
        variants[Variant.parse(level.variant)] = (
            originals.astype(np.float64) + level.noise_scale * z).astype(np.float32)
    image_ids = [f"id{i:05d}_img{j:03d}" for i in range(n) for j in range(m)]
    identity_ids = [f"id{i:05d}" for i in range(n) for _ in range(m)]
    return SynthData(image_ids, identity_ids, originals, variants)


def generate_synthetic(spec: SynthSpec, out_dir) -> IdentityManifest:
    """Write ``original.emb1``, one ``<variant>.emb1`` per level and ``manifest.jsonl``."""
    out_dir = Path(out_dir)
    data = synthesize(spec)
    records = []
    arrays = {Variant.ORIGINAL: data.originals, **data.variants}
    for variant, X in arrays.items():
        fname = f"{variant.value}.emb1"
        write_embeddings(out_dir / fname, X)
        records.extend(ManifestRecord(img, ident, variant, fname, row)
                       for row, (img, ident) in enumerate(zip(data.image_ids, data.identity_ids)))
    manifest = IdentityManifest(records, root=out_dir)
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest
