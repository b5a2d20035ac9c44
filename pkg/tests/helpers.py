"""Small fixtures-on-disk used by the CLI and pipeline tests."""

import csv

import yaml

from demakeup.io import write_image
from demakeup.synthetic import overlay_pairs


def write_pairs(root, n, seed=0):
    root.mkdir(parents=True, exist_ok=True)
    pairs = overlay_pairs(n, seed=seed)
    rows = []
    for p in pairs:
        c = write_image(p.clean, root / f"{p.source_id}_clean.png")
        m = write_image(p.made_up, root / f"{p.source_id}_mu.png")
        rows.append({"clean_path": c.name, "madeup_path": m.name, "age": p.age_years,
                     "subject_id": p.source_id, "style": p.style})
    path = root / "pairs.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path, pairs


def fast_config(path, **paths):
    cfg = {
        "schema": 1,
        "seed": 0,
        "finetune": {"epochs": 2, "invert_steps": 4, "sample_steps": 2},
        "paths": paths,
    }
    path.write_text(yaml.safe_dump(cfg))
    return path
