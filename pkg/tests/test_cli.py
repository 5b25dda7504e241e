import json
import subprocess
import sys
from contextlib import nullcontext

import numpy as np
import pytest

from dogfocus.calibrate import LogLinearFit, params_hash, save_threshold, threshold_from_fit
from dogfocus.cli import main
from dogfocus.image_io import GrayImage, save_image
from dogfocus.preprocess import StretchParams
from dogfocus.scale_space import ScaleGrid
from dogfocus.synthetic import gen_synthetic


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def blob_png(tmp_path):
    path = tmp_path / "blobs.png"
    save_image(gen_synthetic(96, 96, 60, (1.5, 3.5), seed=9), path)
    return path


def test_blank_image_scores_zero(tmp_path, capsys):
    save_image(GrayImage(np.full((40, 30), 0.5)), tmp_path / "blank.pgm")
    code, out, _ = _run(capsys, "analyze", "--input", str(tmp_path / "blank.pgm"))
    assert code == 0
    report = json.loads(out)
    assert report["count"] == 0 and report["classification"] is None
    assert set(report["timings"]) == {"stretch_ms", "pyramid_ms", "gather_ms", "detect_ms", "total_ms"}


def test_worker_count_does_not_change_count(blob_png, capsys):
    counts = []
    for m in ("1", "4"):
        code, out, _ = _run(capsys, "analyze", "--input", str(blob_png), "--workers", m)
        assert code == 0
        counts.append(json.loads(out)["count"])
    assert counts[0] == counts[1] > 0


def test_threshold_gates_exit_status(blob_png, tmp_path, capsys):
    _, out, _ = _run(capsys, "analyze", "--input", str(blob_png))
    count = json.loads(out)["count"]
    h = params_hash(ScaleGrid(), StretchParams())
    # exp(log(count)) may land one ulp above count; aim half a count below
    fit = LogLinearFit(-1.0, float(np.log(count - 0.5)), -1.0)
    save_threshold(threshold_from_fit(fit, 0.0, params_hash=h), tmp_path / "ok.json")
    save_threshold(threshold_from_fit(LogLinearFit(-1.0, np.log(count + 1.5), -1.0), 0.0, h),
                   tmp_path / "strict.json")

    code, out, _ = _run(capsys, "analyze", "--input", str(blob_png), "--threshold-file", str(tmp_path / "ok.json"))
    assert code == 0 and json.loads(out)["classification"] == "InFocus"
    code, out, _ = _run(capsys, "analyze", "--input", str(blob_png), "--threshold-file", str(tmp_path / "strict.json"))
    assert code == 2 and json.loads(out)["classification"] == "OutOfFocus"
    assert json.loads(out)["min_count"] == count + 2

    # calibrated under other parameters
    code, _, err = _run(capsys, "analyze", "--input", str(blob_png), "--num-scales", "8",
                        "--threshold-file", str(tmp_path / "ok.json"))
    assert code == 1 and json.loads(err)["error"]["type"] == "CalibrationMismatch"


def test_dump_features(blob_png, tmp_path, capsys):
    code, out, _ = _run(capsys, "analyze", "--input", str(blob_png), "--dump-features", str(tmp_path / "f.json"))
    dump = json.loads((tmp_path / "f.json").read_text())
    assert code == 0 and dump["count"] == json.loads(out)["count"] == len(dump["features"])
    assert set(dump["features"][0]) == {"x", "y", "scale_index", "t", "response", "border_affected"}


def test_series_then_calibrate(tmp_path, capsys):
    img = tmp_path / "dense.png"
    code, _, _ = _run(capsys, "synth", "--out", str(img), "--width", "128", "--height", "128",
                      "--blobs", "300", "--min-blob", "1.5", "--max-blob", "3", "--placement", "random")
    assert code == 0
    code, out, _ = _run(capsys, "series", "--input", str(img), "--sigmas", "0,1,2,4", "--out", str(tmp_path / "s.csv"))
    assert code == 0
    counts = [p["count"] for p in json.loads(out)]
    assert counts == sorted(counts, reverse=True)
    code, out, _ = _run(capsys, "calibrate", "--series", str(tmp_path / "s.csv"),
                        "--out", str(tmp_path / "cal.json"), "--max-deviation", "1")
    assert code == 0
    cal = json.loads((tmp_path / "cal.json").read_text())
    assert cal == json.loads(out)
    assert cal["slope"] < 0 and cal["params_hash"] == params_hash(ScaleGrid(), StretchParams())
    code, _, _ = _run(capsys, "analyze", "--input", str(img), "--threshold-file", str(tmp_path / "cal.json"))
    assert code in (0, 2)


def test_calibrate_rejects_increasing_series(tmp_path, capsys):
    (tmp_path / "up.csv").write_text("deviation,count\n0,1\n1,5\n2,20\n")
    code, _, err = _run(capsys, "calibrate", "--series", str(tmp_path / "up.csv"),
                        "--out", str(tmp_path / "c.json"), "--max-deviation", "1")
    assert code == 1 and json.loads(err)["error"]["type"] == "NonDecreasingFit"
    assert not (tmp_path / "c.json").exists()


def test_bench_writes_csv_and_json(tmp_path, capsys):
    code, out, _ = _run(capsys, "bench", "--resolutions", "32", "--scales", "2,4", "--workers", "1,2",
                        "--reps", "2", "--out", str(tmp_path / "b.csv"))
    assert code == 0
    assert len(json.loads(out)) == 4
    assert (tmp_path / "b.csv").read_text().startswith("width,height,num_scales,workers")
    assert len(json.loads((tmp_path / "b.json").read_text())) == 4


@pytest.mark.parametrize("argv,kind", [
    (["analyze", "--input", "/no/such/file.png"], "ImageFileNotFound"),
    (["analyze"], "UsageError"),
    (["frobnicate"], "UsageError"),
    (["analyze", "--input", "x.png", "--num-scales", "0"], "InvalidScaleGrid"),
    (["analyze", "--input", "x.png", "--sat-low", "0.6", "--sat-high", "0.6"], "InvalidStretchParams"),
])
def test_errors_exit_one_with_json(capsys, argv, kind):
    with pytest.raises(SystemExit) if kind == "UsageError" else nullcontext() as info:
        code = main(argv)
    if kind == "UsageError":
        code = info.value.code
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert code == 1
    assert json.loads(err)["error"]["type"] == kind


def test_unsupported_and_corrupt_input(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("not an image")
    code, _, err = _run(capsys, "analyze", "--input", str(tmp_path / "a.txt"))
    assert code == 1 and json.loads(err)["error"]["type"] == "UnsupportedFormat"
    (tmp_path / "t.pgm").write_bytes(b"P5\n8 8\n255\n" + bytes(3))
    code, _, err = _run(capsys, "analyze", "--input", str(tmp_path / "t.pgm"))
    assert code == 1 and json.loads(err)["error"]["type"] == "CorruptImage"


def test_module_entry_point_subprocess(blob_png):
    proc = subprocess.run(
        [sys.executable, "-m", "dogfocus", "analyze", "--input", str(blob_png), "--downsample", "2"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    assert report["downsample"] == 2 and report["count"] > 0

