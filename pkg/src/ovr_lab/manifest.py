"""JSON manifests linking paired (input, target) recordings on disk.

Two entry flavours share one file layout:

* simulated corpus entries carry ``simulated_path`` (network input) and
  ``clean_path`` (target);
* real paired recordings carry ``inear_path`` and ``outer_path`` plus a
  free-form ``channel_tag`` (e.g. device side) used as a split key.

Relative paths resolve against the directory holding the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, read_wav

SCHEMA_VERSION = 1
TRAIN_FRACTION = 0.88


@dataclass
class CorpusManifest:
    entries: list[dict]
    kind: str = "corpus"
    seed: int | None = None
    config: dict = field(default_factory=dict)
    root: Path = field(default=Path("."), compare=False)

    def to_json(self) -> str:
        doc = {"schema_version": SCHEMA_VERSION, "kind": self.kind, "seed": self.seed,
               "config": self.config, "entries": self.entries}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        self.root = path.parent
        return path

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        doc = json.loads(path.read_text())
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {doc.get('schema_version')!r}")
        return cls(doc["entries"], doc.get("kind", "corpus"), doc.get("seed"),
                   doc.get("config", {}), path.parent)

    def split(self, name: str) -> list[dict]:
        return [e for e in self.entries if e.get("split") == name]

    @property
    def has_noise(self) -> bool:
        return any(e.get("noise_id") is not None for e in self.entries)

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def load_pair(self, entry: dict) -> tuple[AudioBuffer, AudioBuffer]:
        """(network input, target) buffers for one entry, cut to a common length."""
        if "simulated_path" in entry:
            x, y = entry["simulated_path"], entry["clean_path"]
        else:
            x, y = entry["inear_path"], entry["outer_path"]
        inp = read_wav(self.resolve(x), entry.get("input_channel", 0))
        tgt = read_wav(self.resolve(y), entry.get("target_channel", 0))
        n = min(len(inp), len(tgt))
        return AudioBuffer(inp.samples[:n]), AudioBuffer(tgt.samples[:n])


def assign_splits(n: int, rng: np.random.Generator,
                  train_fraction: float = TRAIN_FRACTION) -> list[str]:
    """Random train/val labels with the validation share rounded, at least one
    validation item when n >= 2."""
    n_val = int(round((1.0 - train_fraction) * n))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    labels = ["train"] * n
    for i in rng.permutation(n)[:n_val]:
        labels[int(i)] = "val"
    return labels


def pairs_manifest(pairs: list[tuple[str, str]], seed: int = 0, talker_ids=None,
                   channel_tags=None, test_tag: str | None = None) -> CorpusManifest:
    """Manifest for real (in-ear, outer) recordings.

    Entries whose ``channel_tag`` equals ``test_tag`` form the test split; the
    rest are split into train/val.
    """
    n = len(pairs)
    talker_ids = talker_ids or [f"t{i:02d}" for i in range(n)]
    channel_tags = channel_tags or [""] * n
    entries = []
    for i, (inear, outer) in enumerate(pairs):
        entries.append({"id": f"p{i:04d}", "inear_path": str(inear), "outer_path": str(outer),
                        "talker_id": talker_ids[i], "channel_tag": channel_tags[i]})
    pool = [e for e in entries if test_tag is None or e["channel_tag"] != test_tag]
    for e, lab in zip(pool, assign_splits(len(pool), np.random.default_rng(seed))):
        e["split"] = lab
    for e in entries:
        e.setdefault("split", "test")
    return CorpusManifest(entries, kind="pairs", seed=seed)
