"""Report writers: delimited output and figures."""

import numpy as np

from midframe.metrics import ArchitectureSpec, count_flops
from midframe.report import (
    STEP_COLUMNS,
    features_to_image,
    plot_complexity,
    plot_eval_report,
    plot_history,
    write_complexity_tsv,
    write_eval_report,
    write_history,
    write_step_log,
)


def test_history_tsv_stable_format(tmp_path):
    rows = [
        {"epoch": 0, "steps": 63, "train_loss": 0.5, "val_psnr": 28.123456789},
        {"epoch": 1, "steps": 126, "train_loss": 0.25, "val_psnr": 30.0},
    ]
    path = tmp_path / "history.tsv"
    write_history(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch\tsteps\ttrain_loss\tval_psnr"
    assert lines[1].startswith("0\t63\t0.5\t28.12345679")


def test_step_log_ignores_extra_keys(tmp_path):
    rows = [{"step": 0, "syn1": 0.1, "total": 0.1, "internal_debug": 42}]
    path = tmp_path / "steps.tsv"
    write_step_log(path, rows)
    header = path.read_text().splitlines()[0].split("\t")
    assert tuple(header) == STEP_COLUMNS


def test_figures_written(tmp_path):
    history = [{"epoch": i, "steps": 10 * i, "train_loss": 1.0 / (i + 1), "val_psnr": 20 + i} for i in range(4)]
    steps = [{"step": i, "syn1": 0.5 / (i + 1), "syn2": 0.1, "syn3": 0.1, "refine": 0.0, "total": 0.7 / (i + 1)} for i in range(12)]
    assert plot_history(tmp_path / "h.png", history, steps).exists()

    rows = [{"index": i, "source": "s", "psnr": 30 + i, "baseline_psnr": 29.0} for i in range(5)]
    write_eval_report(tmp_path / "e.tsv", rows, 32.0, 29.0)
    assert plot_eval_report(tmp_path / "e.png", rows).exists()

    report = count_flops(ArchitectureSpec("ms"), 360, 640)
    write_complexity_tsv(tmp_path / "c.tsv", report)
    assert plot_complexity(tmp_path / "c.png", report).exists()
    assert "6114808800" in (tmp_path / "c.tsv").read_text()


def test_features_to_image_maps_range(rng):
    gamma = rng.uniform(-1, 1, size=(3, 8, 8))
    img = features_to_image(gamma)
    assert img.shape == (3, 8, 8)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert np.allclose(img, (gamma + 1) / 2)
