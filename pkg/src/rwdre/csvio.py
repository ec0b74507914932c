"""CSV emission (17-significant-digit floats) and run manifests."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

ARTIFACT_VERSION = "0.1.0"


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(out_dir, config_text: str, seed: int, data_files, started: float) -> Path:
    """run_manifest.json next to the emitted CSVs; checksums cover each file."""
    out_dir = Path(out_dir)
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": seed,
        "wall_clock_seconds": time.time() - started,
        "files": {Path(f).name: sha256_file(f) for f in data_files},
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def trajectory_rows(traj):
    """Rows for the trajectory schema time,site,old_occ,new_occ,class."""
    use_class = getattr(traj, "has_classes", False)
    for t, x, o, nv, c in zip(traj.times, traj.sites, traj.old_vals, traj.new_vals, traj.mover_class):
        yield (float(t), int(x), int(o), int(nv), int(c) if use_class and c > 0 else None)


def walk_rows(path):
    """Rows for the walk schema t,x: jump times plus both endpoints."""
    yield (0.0, path.start.x0)
    pos = path.start.x0
    for t, sign in path.jumps:
        pos += sign
        yield (float(t), pos)
    yield (float(path.horizon), pos)
