import json

import pytest

from tandempaint.cli import main


@pytest.fixture(scope="session")
def tiny_ckpts(tmp_path_factory):
    """A 4-scene corpus with briefly trained shader/colorist checkpoints.

    Built through the CLI itself so the fixture doubles as an end-to-end
    pipeline check; the networks are deliberately tiny — tests using this
    fixture care about plumbing, not output quality.
    """
    root = tmp_path_factory.mktemp("tiny_runs")
    ds = root / "ds"
    cfg = root / "net.json"
    cfg.write_text(json.dumps({"net": {"depth": 2, "base_features": 4, "feature_cap": 8}}))
    common = ["--side", "64", "--config", str(cfg)]
    assert main(["synth", "--n", "4", "--side", "64", "--out", str(ds), "--seed", "7"]) == 0
    assert main(["train-shader", "--manifest", str(ds), "--out", str(root / "s"),
                 "--steps", "2", *common]) == 0
    assert main(["train-colorist", "--manifest", str(ds), "--out", str(root / "c"),
                 "--steps", "2", *common]) == 0
    return {
        "root": root,
        "ds": ds,
        "config": cfg,
        "shader": root / "s" / "shader.ckpt",
        "colorist": root / "c" / "colorist.ckpt",
        "outline": ds / "00000_outline.png",
    }
