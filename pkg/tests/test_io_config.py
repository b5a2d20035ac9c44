import json

import numpy as np
import pytest

from demakeup.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from demakeup.config import RunConfig, config_from_dict, dump_config, load_config
from demakeup.io import (
    ManifestError,
    MetadataError,
    load_age_dataset,
    load_age_metadata,
    load_pair_manifest,
    pairs_check,
    read_image,
    read_predictions,
    read_scores,
    write_image,
)
from demakeup.pipeline import ConfigError
from demakeup.types import ImageTensor
from helpers import write_pairs


def test_image_round_trip(tmp_path):
    v = np.round(np.random.default_rng(0).uniform(size=(8, 8, 3)) * 255) / 255
    p = write_image(ImageTensor(v), tmp_path / "a.png")
    np.testing.assert_array_equal(read_image(p).values, v)
    with pytest.raises(ValueError):
        write_image(ImageTensor(v * 2 - 1, "signed"), tmp_path / "b.png")


def test_pair_manifest(tmp_path):
    path, pairs = write_pairs(tmp_path, 2)
    m = load_pair_manifest(path)
    assert len(m) == 2 and m.records[0].age_years == pairs[0].age_years
    loaded = m.load_pairs()
    assert loaded[1].source_id == "toy001" and loaded[0].clean.height == 256
    assert pairs_check(m) == {"pairs": 2, "mismatched": [], "styles": {"overlay": 2}}


@pytest.mark.parametrize("body,needle", [
    ("clean_path,madeup_path,age\n", None),
    ("clean_path,madeup_path,age,subject_id\nmissing.png,missing.png,20,a\n", "row 2"),
])
def test_pair_manifest_errors(tmp_path, body, needle):
    path = tmp_path / "m.csv"
    path.write_text(body + ("x,y,20\n" if needle is None else ""))
    with pytest.raises(ManifestError) as ei:
        load_pair_manifest(path)
    if needle:
        assert needle in str(ei.value)


def test_pair_manifest_bad_age(tmp_path):
    path, _ = write_pairs(tmp_path, 1)
    text = path.read_text().splitlines()
    cols = text[1].split(",")
    cols[2] = "old"
    path.write_text("\n".join([text[0], ",".join(cols)]) + "\n")
    with pytest.raises(ManifestError, match="cannot parse age"):
        load_pair_manifest(path)


def test_age_metadata(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"x": 20, "y": 31.5}))
    (tmp_path / "b.json").write_text(json.dumps([{"id": "x", "age": 4}]))
    (tmp_path / "c.csv").write_text("id,age\nx,12\n")
    assert dict(load_age_metadata(tmp_path / "a.json")) == {"x": 20.0, "y": 31.5}
    assert load_age_metadata(tmp_path / "b.json")["x"] == 4.0
    assert load_age_metadata(tmp_path / "c.csv")["x"] == 12.0
    with pytest.raises(KeyError, match="zz"):
        load_age_metadata(tmp_path / "c.csv")["zz"]
    (tmp_path / "d.json").write_text(json.dumps({"x": "young"}))
    with pytest.raises(MetadataError):
        load_age_metadata(tmp_path / "d.json")
    (tmp_path / "e.json").write_text(json.dumps({"x": 300}))
    with pytest.raises(MetadataError):
        load_age_metadata(tmp_path / "e.json")


def test_age_dataset_filters(tmp_path):
    img = ImageTensor(np.full((64, 64, 3), 0.5))
    write_image(img, tmp_path / "a.png")
    (tmp_path / "d.csv").write_text("path,age\na.png,30\na.png,75\n")
    assert [a for _, a in load_age_dataset(tmp_path / "d.csv", max_age=70)] == [30.0]


def test_prediction_and_score_files(tmp_path):
    (tmp_path / "p.csv").write_text("id,prediction,truth,group\na,20,22,g1\nb,30,28,g2\n")
    recs = read_predictions(tmp_path / "p.csv")
    assert recs[1].group == "g2" and recs[0].truth == 22.0
    (tmp_path / "s.csv").write_text("score,label\n0.9,genuine\n0.1,impostor\n0.3,0\n")
    s = read_scores(tmp_path / "s.csv")
    assert s.genuine.tolist() == [0.9] and s.impostor.tolist() == [0.1, 0.3]
    (tmp_path / "t.csv").write_text("score,label\n0.9,maybe\n")
    with pytest.raises(ManifestError):
        read_scores(tmp_path / "t.csv")


def test_config_round_trip(tmp_path):
    cfg = config_from_dict({"schema": 1, "seed": 3, "finetune": {"age_loss_variant": "clip"},
                            "weights": {"l1": 1.0}, "age_train": {"patience": 4}})
    assert cfg.loss_weights().age == 5.0 and cfg.loss_weights().l1 == 1.0
    assert cfg.age_train.seed == 3 and cfg.age_train.patience == 4
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    assert RunConfig().loss_weights().age == 0.5


@pytest.mark.parametrize("data", [
    {"schema": 1, "bogus": 1},
    {"schema": 1, "finetune": {"epohcs": 3}},
    {"schema": 2},
    {"seed": 0},
    {"schema": 1, "finetune": {"sample_steps": 100}},
    {"schema": 1, "eval": {"fmr": 0}},
    {"schema": 1, "eval": {"age_bins": [[0, 5], [3, 9]]}},
])
def test_config_rejects(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_checkpoint_validation(tmp_path):
    p = save_checkpoint(tmp_path / "c.pt", "thing", {"a": 1}, {})
    assert load_checkpoint(p, "thing")["arch"] == {"a": 1}
    with pytest.raises(CheckpointError):
        load_checkpoint(p, "other")
    (tmp_path / "junk.pt").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")
