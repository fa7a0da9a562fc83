"""
Dataset manifests.

One entry per line, tab separated::

    # kind: labeled
    id<TAB>hazy<TAB>[clear]<TAB>[depth]

Lines starting with ``#`` are comments; ``# kind: labeled|unlabeled`` sets the
manifest kind. Relative paths are resolved against the manifest's directory.
"""

import os
from pathlib import Path
from typing import Dict, List, Optional, Union

from loguru import logger

from ._validation import ManifestError
from .models import Manifest, ManifestEntry

KINDS = ("labeled", "unlabeled")


def _resolve(raw: str, base: Path) -> Optional[Path]:
    raw = raw.strip()
    if not raw:
        return None
    path = Path(raw)
    return path if path.is_absolute() else base / path


def load_manifest(path: Union[str, Path], kind: Optional[str] = None, check_paths: bool = True) -> Manifest:
    """Parse and fully validate a manifest, keeping file order."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    if kind is not None and kind not in KINDS:
        raise ManifestError(f"unknown manifest kind {kind!r}", suggestion="Use 'labeled' or 'unlabeled'")

    base = path.parent
    declared: Optional[str] = None
    entries: List[ManifestEntry] = []
    lines: Dict[str, int] = {}

    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("#"):
                comment = line.lstrip()[1:].strip()
                if comment.lower().startswith("kind:"):
                    declared = comment.split(":", 1)[1].strip().lower()
                    if declared not in KINDS:
                        raise ManifestError(f"unknown manifest kind {declared!r}", line=number)
                continue

            fields = line.split("\t")
            if len(fields) < 2 or len(fields) > 4:
                raise ManifestError(
                    f"expected 2 to 4 tab-separated fields, got {len(fields)}",
                    line=number,
                    suggestion="Use id<TAB>hazy<TAB>[clear]<TAB>[depth]",
                )
            fields += [""] * (4 - len(fields))
            entry_id = fields[0].strip()
            hazy = _resolve(fields[1], base)
            if not entry_id or hazy is None:
                raise ManifestError("missing id or hazy path", line=number)
            if entry_id in lines:
                raise ManifestError(f"duplicate id {entry_id!r} (first seen on line {lines[entry_id]})", line=number)
            entry = ManifestEntry(id=entry_id, hazy=hazy, clear=_resolve(fields[2], base), depth=_resolve(fields[3], base))
            if check_paths:
                for role in ("hazy", "clear", "depth"):
                    target = getattr(entry, role)
                    if target is not None and not target.is_file():
                        raise ManifestError(f"{role} file not found: {target}", line=number)
            lines[entry_id] = number
            entries.append(entry)

    if not entries:
        raise ManifestError(f"empty manifest: {path}")

    if kind is not None and declared is not None and kind != declared:
        raise ManifestError(f"{path} declares kind {declared!r} but {kind!r} was requested")
    resolved = kind or declared or ("labeled" if all(e.clear is not None for e in entries) else "unlabeled")

    if resolved == "labeled":
        for entry in entries:
            if entry.clear is None:
                raise ManifestError(f"labeled entry {entry.id!r} has no clear path", line=lines[entry.id])

    logger.debug(f"Loaded {resolved} manifest {path} with {len(entries)} entries")
    return Manifest(kind=resolved, entries=entries, source=path)


def _relative(target: Optional[Path], base: Path) -> str:
    if target is None:
        return ""
    try:
        return os.path.relpath(target, base)
    except ValueError:
        return str(target)


def write_manifest(manifest: Manifest, path: Union[str, Path]) -> Path:
    """Write a manifest with paths relative to its own directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent
    rows = [f"# kind: {manifest.kind}"]
    for entry in manifest.entries:
        fields = [entry.id, _relative(entry.hazy, base), _relative(entry.clear, base), _relative(entry.depth, base)]
        while len(fields) > 2 and not fields[-1]:
            fields.pop()
        rows.append("\t".join(fields))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path
