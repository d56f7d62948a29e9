"""Dataset manifest: a JSON document tying attention tensors, saliency maps and tags together.

::

    {
      "num_classes": 5,
      "tags": "tags.jsonl",
      "images": [
        {"id": "img_000", "attention": "attention/img_000.wsst",
         "saliency": "saliency/img_000.png", "gt": "gt/img_000.png"}
      ],
      "config": {"lambda_ob": 0.01}
    }

Relative paths resolve against the manifest's directory (or ``root`` if given).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import PipelineConfig
from .errors import FormatError, InvalidArgumentError
from .fileio import read_tags
from .grids import ImageTags


class ManifestError(InvalidArgumentError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid manifest: " + "; ".join(self.problems))


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    attention: Path
    saliency: Path
    tags: ImageTags
    gt: Path | None = None


@dataclass(frozen=True)
class PipelineManifest:
    root: Path
    num_classes: int
    records: tuple
    config: PipelineConfig

    def by_id(self) -> dict:
        return {r.image_id: r for r in self.records}


def load_manifest(path) -> PipelineManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError([f"cannot read {path}: {exc}"]) from exc
    root = (path.parent / doc.get("root", ".")).resolve()
    problems = []
    C = doc.get("num_classes")
    if not isinstance(C, int) or isinstance(C, bool) or not 1 <= C <= 254:
        raise ManifestError([f"num_classes must be an integer in 1..254, got {C!r}"])

    tags = {}
    if "tags" in doc:
        try:
            tags = read_tags(root / doc["tags"], C)
        except (OSError, FormatError, InvalidArgumentError) as exc:
            problems.append(f"tags: {exc}")

    records, seen = [], set()
    for i, rec in enumerate(doc.get("images", [])):
        image_id = rec.get("id")
        if not isinstance(image_id, str) or not image_id:
            problems.append(f"images[{i}]: missing id")
            continue
        if image_id in seen:
            problems.append(f"{image_id}: duplicate id")
        seen.add(image_id)
        paths = {}
        for key in ("attention", "saliency", "gt"):
            if key not in rec:
                if key != "gt":
                    problems.append(f"{image_id}: missing {key}")
                continue
            p = root / rec[key]
            if not p.is_file():
                problems.append(f"{image_id}: {key} file not found: {p}")
            paths[key] = p
        if "classes" in rec:
            try:
                tag = ImageTags.from_classes(image_id, rec["classes"], C)
            except InvalidArgumentError as exc:
                problems.append(str(exc))
                continue
        elif image_id in tags:
            tag = tags[image_id]
        else:
            problems.append(f"{image_id}: no tags")
            continue
        if len(paths) >= 2:
            records.append(ImageRecord(image_id, paths["attention"], paths["saliency"], tag, paths.get("gt")))
    if problems:
        raise ManifestError(problems)

    cfg = PipelineConfig().updated(doc.get("config"))
    records.sort(key=lambda r: r.image_id)
    return PipelineManifest(root, C, tuple(records), cfg)
