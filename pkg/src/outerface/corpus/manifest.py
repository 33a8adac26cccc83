"""JSON-lines frame manifest."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

from ..errors import FakeInTrainingSplit, IoFailure, ManifestError

SCHEMA_VERSION = 1
LABELS = ("real", "fake")
SPLITS = ("train", "val", "test")
ROLES = ("suspect", "reference_candidate")


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: str
    image_path: str
    landmarks_path: str
    identity: str
    label: str
    video_id: str
    frame_index: int
    split: str
    role: str
    method: Optional[str] = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"{self.frame_id}: bad label {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.frame_id}: bad split {self.split!r}")
        if self.role not in ROLES:
            raise ManifestError(f"{self.frame_id}: bad role {self.role!r}")

    @property
    def is_fake(self) -> bool:
        return self.label == "fake"

    def to_json(self) -> str:
        return json.dumps({"v": SCHEMA_VERSION, **asdict(self)}, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestEntry":
        data = dict(data)
        version = data.pop("v", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported manifest schema version {version}")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ManifestError(f"unknown manifest fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ManifestError(str(exc)) from exc


class Manifest:
    """Ordered manifest entries plus the directory relative paths resolve against."""

    def __init__(self, entries: Iterable[ManifestEntry], root: Path | str = "."):
        self.entries = list(entries)
        self.root = Path(root)
        ids = [e.frame_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate frame_id in manifest")
        self._by_id = {e.frame_id: e for e in self.entries}
        self._by_identity = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return isinstance(other, Manifest) and self.entries == other.entries

    def get(self, frame_id: str) -> ManifestEntry:
        return self._by_id[frame_id]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def select(self, split=None, label=None, role=None, identity=None) -> list[ManifestEntry]:
        out = []
        source = self.entries
        if identity is not None:
            if self._by_identity is None:
                self._by_identity = {}
                for e in self.entries:
                    self._by_identity.setdefault(e.identity, []).append(e)
            source = self._by_identity.get(identity, [])
        for e in source:
            if split is not None and e.split != split:
                continue
            if label is not None and e.label != label:
                continue
            if role is not None and e.role != role:
                continue
            if identity is not None and e.identity != identity:
                continue
            out.append(e)
        return out

    def identities(self) -> list[str]:
        return sorted({e.identity for e in self.entries})

    def check_fake_free_training(self) -> None:
        fakes = [e.frame_id for e in self.entries if e.split == "train" and e.is_fake]
        if fakes:
            raise FakeInTrainingSplit(
                f"train split contains {len(fakes)} fake-labeled entries (first: {fakes[0]})")

    def check_reference_exclusion(self) -> None:
        """No reference candidate may come from a video holding a test suspect of its identity."""
        suspect_videos = {(e.identity, e.video_id) for e in self.entries
                          if e.split == "test" and e.role == "suspect"}
        bad = [e.frame_id for e in self.entries
               if e.role == "reference_candidate" and (e.identity, e.video_id) in suspect_videos]
        if bad:
            raise ManifestError(f"reference candidates share a video with test suspects: {bad[:3]}")

    def serialize(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    def save(self, path) -> None:
        path = Path(path)
        try:
            path.write_text(self.serialize(), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write manifest {path}: {exc}") from exc

    @classmethod
    def parse(cls, text: str, root: Path | str = ".") -> "Manifest":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except ValueError as exc:
                raise ManifestError(f"line {lineno}: {exc}") from exc
            entries.append(ManifestEntry.from_dict(data))
        return cls(entries, root)

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
        return cls.parse(text, path.parent)
