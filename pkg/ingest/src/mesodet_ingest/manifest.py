"""Dataset manifest building from a directory of composite `.pgrid` files.

Filename convention (documented here, enforced below):

    <gridid>_r<orbit>_<YYYYMMDDTHHMMSS>_<pos|neg>_<single|dual>_<EW|IW>.pgrid

Samples group into repeat-pass sets by (gridid, relative orbit); each set
must contain exactly one positive. When a set carries more than ten
negatives, the earliest ten by timestamp are kept, mirroring the dataset
construction cap.
"""

from __future__ import annotations

import re
from pathlib import Path

from mesodet.sampler import MAX_NEGATIVES_PER_SET, Sample, group_into_sets, write_manifest

FILENAME = re.compile(
    r"^(?P<grid>[A-Za-z0-9]+)_r(?P<orbit>\d+)_(?P<stamp>\d{8}T\d{6})_"
    r"(?P<label>pos|neg)_(?P<pol>single|dual)_(?P<mode>EW|IW)\.pgrid$"
)


def parse_filename(name: str) -> dict:
    m = FILENAME.match(name)
    if not m:
        raise ValueError(f"{name!r} does not match the ingest filename convention")
    return m.groupdict()


def build_manifest(directory, out_path=None) -> Path:
    """Scan a directory of composites and write manifest.jsonl beside them."""
    directory = Path(directory)
    files = sorted(directory.glob("*.pgrid"))
    if not files:
        raise ValueError(f"no .pgrid files under {directory}")
    by_set: dict = {}
    for path in files:
        info = parse_filename(path.name)
        set_id = f"{info['grid']}-r{int(info['orbit']):03d}"
        by_set.setdefault(set_id, []).append((info, path.name))

    samples = []
    for set_id in sorted(by_set):
        members = sorted(by_set[set_id], key=lambda item: item[0]["stamp"])
        positives = [m for m in members if m[0]["label"] == "pos"]
        negatives = [m for m in members if m[0]["label"] == "neg"]
        if len(positives) != 1:
            raise ValueError(f"set {set_id}: expected exactly one positive, found {len(positives)}")
        negatives = negatives[:MAX_NEGATIVES_PER_SET]
        for info, name in positives + negatives:
            samples.append(
                Sample(
                    id=Path(name).stem,
                    set_id=set_id,
                    label="positive" if info["label"] == "pos" else "negative",
                    pol_mode=info["pol"],
                    imaging_mode=info["mode"],
                    raster_path=name,
                )
            )
    group_into_sets(samples)  # validates the repeat-pass invariants
    out = Path(out_path) if out_path else directory / "manifest.jsonl"
    write_manifest(samples, out)
    return out
