"""Stable on-disk artifact bundles (.lamlab.json).

Bundles are canonical JSON: keys sorted, numbers carried as decimal
strings (rationals as "p/q") so the exact-arithmetic paths survive
persistence bit-for-bit. A sha256 over the canonical byte stream guards
against tampering and accidental edits.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = "1"
FILE_EXTENSION = ".lamlab.json"


class SchemaVersionError(ValueError):
    pass


class HashMismatchError(ValueError):
    pass


@dataclass
class ArtifactBundle:
    payloads: dict                 # named JSON-ready payloads
    seed: int = None
    config: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def canonical_bytes(self) -> bytes:
        doc = {
            "config": self.config,
            "payloads": self.payloads,
            "schema_version": self.schema_version,
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"),
                          allow_nan=False).encode()

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def write_bundle(bundle: ArtifactBundle, path) -> None:
    doc = {
        "config": bundle.config,
        "payloads": bundle.payloads,
        "schema_version": bundle.schema_version,
        "seed": bundle.seed,
        "hash": bundle.content_hash,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"),
                  allow_nan=False)
        fh.write("\n")


def read_bundle(path) -> ArtifactBundle:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"bundle schema version {version!r} is not {SCHEMA_VERSION!r}; "
            f"no silent migration")
    bundle = ArtifactBundle(doc["payloads"], doc.get("seed"),
                            doc.get("config", {}), version)
    if doc.get("hash") != bundle.content_hash:
        raise HashMismatchError(f"content hash mismatch in {path}")
    return bundle
