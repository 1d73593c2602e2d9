"""Dataset generation and on-disk format.

Layout of a dataset directory:

    manifest.json       UTF-8, sorted keys, schema_version field
    frames/<id>.rgb     raw uint8 RGB, C-order, shape recorded in the manifest
    meta/<id>.json      sensor triple, texts, action, scenario provenance

Class counts realize the target distribution exactly via largest-remainder
rounding, and every sample's content is a pure function of (dataset seed,
sample index), so any subset regenerates identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import actions
from .config import RenderConfig
from .errors import DataFormatError, SchemaVersionError
from .scenarios import ACTION_KINDS, Sample, ScenarioSpec, SensorReading, generate_scenario, sample_geometry

SCHEMA_VERSION = 1

DEFAULT_DISTRIBUTION = {
    "stop": 0.25,
    "decelerate": 0.25,
    "accelerate": 0.20,
    "turn_left": 0.15,
    "turn_right": 0.15,
}


def largest_remainder_counts(n: int, fractions: dict) -> dict:
    """Integer class counts summing to n that realize the target fractions.

    Floors every quota, then hands the leftover units to the largest
    fractional remainders (ties resolved by action code order).
    """
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"class fractions sum to {total}, expected 1")
    names = sorted(fractions, key=actions.action_code)
    quotas = [n * fractions[name] for name in names]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    remainders = sorted(range(len(names)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[:leftover]:
        counts[i] += 1
    return {name: c for name, c in zip(names, counts)}


def _per_sample_seed(dataset_seed: int, index: int) -> int:
    """Stable 64-bit per-sample seed derived from (dataset seed, index)."""
    ss = np.random.SeedSequence([dataset_seed & 0xFFFFFFFFFFFFFFFF, index])
    return int(ss.generate_state(1, np.uint64)[0])


def plan_scenarios(n: int, seed: int, distribution: dict) -> list[ScenarioSpec]:
    """Assign a scenario spec to every sample index."""
    counts = largest_remainder_counts(n, distribution)
    labels = []
    for name in sorted(counts, key=actions.action_code):
        labels.extend([actions.action_code(name)] * counts[name])
    order = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0xA5516])).permutation(n)
    specs = []
    for index in range(n):
        action = labels[order[index]]
        sample_seed = _per_sample_seed(seed, index)
        rng = np.random.default_rng(np.random.SeedSequence([sample_seed, 0x15D]))
        kinds = ACTION_KINDS[action]
        kind = kinds[int(rng.integers(len(kinds)))]
        specs.append(ScenarioSpec(kind=kind, seed=sample_seed, geometry=sample_geometry(kind, rng)))
    return specs


@dataclass
class DatasetManifest:
    path: Path
    schema_version: int
    n: int
    seed: int
    distribution: dict
    render: RenderConfig
    class_counts: dict
    records: list  # one dict per sample, manifest order

    @property
    def sample_ids(self) -> list[str]:
        return [rec["id"] for rec in self.records]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "n": self.n,
            "seed": self.seed,
            "distribution": self.distribution,
            "render": self.render.to_dict(),
            "class_counts": self.class_counts,
            "samples": self.records,
        }


def _sample_record(sample: Sample, frames_file: str, meta_file: str, nbytes: int) -> dict:
    return {
        "id": sample.id,
        "action": actions.action_name(sample.action),
        "frames_file": frames_file,
        "frames_bytes": nbytes,
        "meta_file": meta_file,
        "description": sample.description,
        "explanation": sample.explanation,
    }


def generate_dataset(
    n: int,
    seed: int,
    out_path,
    distribution: dict | None = None,
    render_cfg: RenderConfig | None = None,
) -> DatasetManifest:
    """Generate n samples and write the dataset directory."""
    if n < 20:
        raise ValueError(f"need n >= 20 to populate every class, got {n}")
    distribution = dict(DEFAULT_DISTRIBUTION if distribution is None else distribution)
    render_cfg = (render_cfg or RenderConfig()).validate()

    out = Path(out_path)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "meta").mkdir(parents=True, exist_ok=True)

    specs = plan_scenarios(n, seed, distribution)
    records = []
    counts = {name: 0 for name in actions.ACTION_NAMES}
    for index, spec in enumerate(specs):
        sample = generate_scenario(spec, render_cfg)
        sample.id = f"s{index:06d}"
        frames_rel = f"frames/{sample.id}.rgb"
        meta_rel = f"meta/{sample.id}.json"
        payload = np.ascontiguousarray(sample.clip).tobytes()
        (out / frames_rel).write_bytes(payload)
        meta = {
            "id": sample.id,
            "action": actions.action_name(sample.action),
            "description": sample.description,
            "explanation": sample.explanation,
            "sensor": {
                "speed": sample.sensor.speed,
                "latitude": sample.sensor.latitude,
                "longitude": sample.sensor.longitude,
            },
            "scenario": {"kind": spec.kind, "seed": spec.seed, "geometry": spec.geometry},
        }
        (out / meta_rel).write_text(json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8")
        records.append(_sample_record(sample, frames_rel, meta_rel, len(payload)))
        counts[actions.action_name(sample.action)] += 1

    manifest = DatasetManifest(
        path=out,
        schema_version=SCHEMA_VERSION,
        n=n,
        seed=seed,
        distribution=distribution,
        render=render_cfg,
        class_counts=counts,
        records=records,
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )
    return manifest


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.exists():
        raise DataFormatError(f"no manifest.json under {path}")
    data = json.loads(manifest_file.read_text(encoding="utf-8"))
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"manifest schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")
    ids = [rec["id"] for rec in data["samples"]]
    if len(set(ids)) != len(ids):
        raise DataFormatError("manifest contains duplicate sample ids")
    return DatasetManifest(
        path=path,
        schema_version=version,
        n=data["n"],
        seed=data["seed"],
        distribution=data["distribution"],
        render=RenderConfig(**data["render"]),
        class_counts=data["class_counts"],
        records=data["samples"],
    )


def _load_record(manifest: DatasetManifest, rec: dict) -> Sample:
    sid = rec["id"]
    frames_file = manifest.path / rec["frames_file"]
    try:
        payload = frames_file.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"sample {sid}: cannot read {frames_file}: {exc}", sample_id=sid)
    if len(payload) != rec["frames_bytes"]:
        raise DataFormatError(
            f"sample {sid}: frames payload is {len(payload)} bytes, manifest records {rec['frames_bytes']}",
            sample_id=sid,
        )
    h = w = manifest.render.resolution
    expected = manifest.render.frames * h * w * 3
    if len(payload) != expected:
        raise DataFormatError(
            f"sample {sid}: payload size {len(payload)} does not match render config ({expected})",
            sample_id=sid,
        )
    clip = np.frombuffer(payload, dtype=np.uint8).reshape(manifest.render.frames, h, w, 3).copy()
    meta = json.loads((manifest.path / rec["meta_file"]).read_text(encoding="utf-8"))
    if meta["id"] != sid:
        raise DataFormatError(f"sample {sid}: meta file names id {meta['id']!r}", sample_id=sid)
    sample = Sample(
        id=sid,
        clip=clip,
        sensor=SensorReading(**meta["sensor"]),
        description=meta["description"],
        action=actions.action_code(meta["action"]),
        explanation=meta["explanation"],
    )
    try:
        sample.validate()
    except ValueError as exc:
        raise DataFormatError(f"sample {sid}: {exc}", sample_id=sid)
    return sample


def load_dataset(path, ids=None):
    """Yield samples in manifest order (or the given id subset), validating on read."""
    manifest = read_manifest(path)
    by_id = {rec["id"]: rec for rec in manifest.records}
    if ids is None:
        selected = manifest.records
    else:
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise DataFormatError(f"ids not in manifest: {missing[:5]}")
        selected = [by_id[i] for i in ids]
    for rec in selected:
        yield _load_record(manifest, rec)


def dataset_fingerprint(path) -> str:
    """Hex digest of the manifest bytes; identifies dataset content + config."""
    import hashlib

    return hashlib.sha256((Path(path) / "manifest.json").read_bytes()).hexdigest()
