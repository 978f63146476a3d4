import json

import pytest

from lamlab.serialization import (ArtifactBundle, HashMismatchError,
                                  SchemaVersionError, read_bundle,
                                  write_bundle)


def sample_bundle():
    return ArtifactBundle({"measure": {"atoms": [{"w": "1/2", "u": ["3/7"]}]}},
                          seed=42, config={"command": "extract", "n": 2})


def test_round_trip(tmp_path):
    path = tmp_path / "a.lamlab.json"
    bundle = sample_bundle()
    write_bundle(bundle, path)
    back = read_bundle(path)
    assert back.payloads == bundle.payloads
    assert back.seed == bundle.seed
    assert back.config == bundle.config
    assert back.content_hash == bundle.content_hash


def test_writes_are_deterministic(tmp_path):
    p1, p2 = tmp_path / "x.lamlab.json", tmp_path / "y.lamlab.json"
    write_bundle(sample_bundle(), p1)
    write_bundle(sample_bundle(), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_tampered_payload_rejected(tmp_path):
    path = tmp_path / "t.lamlab.json"
    write_bundle(sample_bundle(), path)
    doc = json.loads(path.read_text())
    doc["payloads"]["measure"]["atoms"][0]["w"] = "1/3"
    path.write_text(json.dumps(doc))
    with pytest.raises(HashMismatchError):
        read_bundle(path)


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "v.lamlab.json"
    write_bundle(sample_bundle(), path)
    doc = json.loads(path.read_text())
    doc["schema_version"] = "0"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        read_bundle(path)


def test_hash_covers_seed_and_config():
    a = sample_bundle()
    b = sample_bundle()
    b.seed = 43
    assert a.content_hash != b.content_hash
    c = sample_bundle()
    c.config["n"] = 3
    assert a.content_hash != c.content_hash
