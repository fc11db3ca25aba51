import json
import logging

import numpy as np
import pytest
from click.testing import CliRunner

from app.cli import cli
from app.database.db_connection import SessionLocal
from app.models.operation_model import Operation
from app.schemas.video_schema import FrameImage
from app.services import media_io


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def frames_dir(tmp_path, rng):
    directory = tmp_path / "frames"
    for i in range(3):
        pixels = rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)
        media_io.write_ppm(directory / f"frame_{i:06d}.ppm",
                           FrameImage(pixels))
    return directory


def _last_operation(name):
    db = SessionLocal()
    try:
        return (db.query(Operation).filter_by(operation=name)
                .order_by(Operation.id.desc()).first())
    finally:
        db.close()


def _read_tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# Audio
def test_anonymize_with_lambda_one_keeps_float_audio(runner, tmp_path,
                                                     make_ar_signal):
    source, target = tmp_path / "in.wav", tmp_path / "out.wav"
    audio = make_ar_signal(1.2, seed=2)
    media_io.write_wav(source, audio, float_output=True)
    result = runner.invoke(cli, ["anonymize-audio", str(source), str(target),
                                 "--lambda", "1.0", "--float-output"])
    assert result.exit_code == 0, result.output
    original = media_io.read_wav(source).samples
    out = media_io.read_wav(target)
    assert out.sample_rate_hz == 16_000
    assert len(out) == len(original)
    error = np.linalg.norm(out.samples - original) / np.linalg.norm(original)
    assert error < 1e-4


def test_anonymize_logs_effective_parameters(runner, tmp_path,
                                             make_ar_signal):
    source, target = tmp_path / "in.wav", tmp_path / "out.wav"
    media_io.write_wav(source, make_ar_signal(0.5, rate=8_000))
    result = runner.invoke(cli, ["anonymize-audio", str(source),
                                 str(target), "--workers", "2"])
    assert result.exit_code == 0, result.output
    row = _last_operation("anonymize-audio")
    assert row.status == "success"
    assert row.input["output"] == str(target)
    assert (row.input["lambda"], row.input["win_ms"], row.input["shift_ms"],
            row.input["lpc_order"]) == (0.8, 20.0, 10.0, 20)
    assert row.result == {"samples": 4000, "sample_rate_hz": 8000}


def test_anonymize_corrupt_header(runner, tmp_path):
    source, target = tmp_path / "broken.wav", tmp_path / "out.wav"
    source.write_bytes(b"JUNK\x00\x00\x00\x00WAVEfmt ")
    result = runner.invoke(cli, ["anonymize-audio", str(source),
                                 str(target)])
    assert result.exit_code == 2
    assert "unreadable waveform" in result.output
    assert not target.exists()
    assert list(tmp_path.iterdir()) == [source]
    row = _last_operation("anonymize-audio")
    assert row.status == "error"


def test_anonymize_invalid_parameters(runner, tmp_path, make_ar_signal):
    source = tmp_path / "in.wav"
    media_io.write_wav(source, make_ar_signal(0.2))
    result = runner.invoke(cli, ["anonymize-audio", str(source),
                                 str(tmp_path / "out.wav"),
                                 "--lambda", "3"])
    assert result.exit_code == 4


def test_resample(runner, tmp_path, make_ar_signal):
    source, target = tmp_path / "in.wav", tmp_path / "low.wav"
    media_io.write_wav(source, make_ar_signal(1.0))
    result = runner.invoke(cli, ["resample-audio", str(source), str(target)])
    assert result.exit_code == 0, result.output
    out = media_io.read_wav(target)
    assert (out.sample_rate_hz, len(out)) == (320, 320)


# Frames
def test_mask_frames_without_boxes_copies_bytes(runner, tmp_path,
                                                frames_dir):
    boxes = tmp_path / "boxes.jsonl"
    boxes.write_text("", encoding="utf-8")
    out_dir = tmp_path / "masked"
    result = runner.invoke(cli, ["mask-frames", str(frames_dir),
                                 str(out_dir), "--boxes", str(boxes)])
    assert result.exit_code == 0, result.output
    assert _read_tree(out_dir) == _read_tree(frames_dir)


def test_mask_frames_blurs_listed_frame(runner, tmp_path, frames_dir,
                                        caplog):
    boxes = tmp_path / "boxes.jsonl"
    boxes.write_text(
        '{"frame_index": 1, "x": 4, "y": 4, "w": 12, "h": 10}\n'
        '{"frame_index": 9, "x": 0, "y": 0, "w": 5, "h": 5}\n',
        encoding="utf-8")
    out_dir = tmp_path / "masked"
    with caplog.at_level(logging.WARNING):
        result = runner.invoke(cli, ["mask-frames", str(frames_dir),
                                     str(out_dir), "--boxes", str(boxes),
                                     "--sigma-policy", "fixed:2"])
    assert result.exit_code == 0, result.output
    assert "missing frame 9" in caplog.text
    before, after = _read_tree(frames_dir), _read_tree(out_dir)
    assert after["frame_000000.ppm"] == before["frame_000000.ppm"]
    assert after["frame_000002.ppm"] == before["frame_000002.ppm"]
    assert after["frame_000001.ppm"] != before["frame_000001.ppm"]
    row = _last_operation("mask-frames")
    assert row.result == {"frames": 3, "boxes": 1, "failed": []}


def test_mask_frames_unreachable_detector(runner, tmp_path, frames_dir):
    out_dir = tmp_path / "masked"
    result = runner.invoke(
        cli, ["mask-frames", str(frames_dir), str(out_dir),
              "--detector-url", "http://127.0.0.1:9/detect"],
        env={"CLIENT_MAX_ATTEMPTS": "1", "CLIENT_TIMEOUT_S": "2"})
    assert result.exit_code == 3
    assert "3 frame(s): 0, 1, 2" in result.output
    assert _last_operation("mask-frames").status == "error"


@pytest.mark.parametrize("extra", [
    [],
    ["--boxes", "BOXES", "--detector-url", "http://127.0.0.1:9/"],
])
def test_mask_frames_usage_errors(runner, tmp_path, frames_dir, extra):
    boxes = tmp_path / "boxes.jsonl"
    boxes.write_text("", encoding="utf-8")
    args = [str(boxes) if a == "BOXES" else a for a in extra]
    result = runner.invoke(cli, ["mask-frames", str(frames_dir),
                                 str(tmp_path / "out")] + args,
                           env={"DETECTOR_ENDPOINT": ""})
    assert result.exit_code == 1


def test_mask_frames_refuses_in_place(runner, tmp_path, frames_dir):
    boxes = tmp_path / "boxes.jsonl"
    boxes.write_text("", encoding="utf-8")
    result = runner.invoke(cli, ["mask-frames", str(frames_dir),
                                 str(frames_dir), "--boxes", str(boxes)])
    assert result.exit_code == 1


# Annotations
def test_synth_stats_and_split(runner, tmp_path):
    annotations = tmp_path / "synthetic.jsonl"
    result = runner.invoke(cli, ["synth-annotations", str(annotations)])
    assert result.exit_code == 0, result.output

    result = runner.invoke(cli, ["stats", str(annotations)])
    assert result.exit_code == 0, result.output
    assert "Number of videos        275" in result.output
    assert "Number of NFBL clips    16180" in result.output
    assert "74 negative / 201 positive" in result.output

    result = runner.invoke(cli, ["stats", str(annotations), "--json"])
    data = json.loads(result.output)
    assert sum(data["categories"].values()) == 16180
    assert len(data["histogram"]) == 37

    result = runner.invoke(cli, ["stats", str(annotations), "--csv"])
    lines = result.output.splitlines()
    assert lines[0] == "class_id,name,category,count"
    assert lines[10].startswith('N9,"Biting nails",self_manipulation,')

    outputs = []
    for name in ("a.json", "b.json"):
        result = runner.invoke(cli, ["split", str(annotations),
                                     str(tmp_path / name), "--seed", "4"])
        assert result.exit_code == 0, result.output
        outputs.append((tmp_path / name).read_text(encoding="utf-8"))
    assert outputs[0] == outputs[1]
    split = json.loads(outputs[0])
    assert (len(split["train"]), len(split["test"])) == (72, 74)


def test_split_with_too_few_videos(runner, pipeline_dataset, tmp_path):
    result = runner.invoke(cli, ["split", str(pipeline_dataset.annotations),
                                 str(tmp_path / "split.json")])
    assert result.exit_code == 4
    assert not (tmp_path / "split.json").exists()


def test_stats_rejects_bad_document(runner, tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema": "eald-annotations", "version": 1}\n'
                    '{"video_id": "v1", "emotion": "sad", '
                    '"duration_s": 3, "fps": 25}\n', encoding="utf-8")
    result = runner.invoke(cli, ["stats", str(path)])
    assert result.exit_code == 4
    assert "line 2" in result.output


# Pipeline
def _run_pipeline(runner, dataset, out_dir, *extra):
    return runner.invoke(cli, [
        "run-pipeline", str(dataset.annotations), str(dataset.media_root),
        str(out_dir), "--mode", "v", "--mode", "va", "--mode", "van",
        "--mock-fixtures", str(dataset.fixtures), *extra])


def test_run_pipeline_is_deterministic(runner, pipeline_dataset, tmp_path):
    first = _run_pipeline(runner, pipeline_dataset, tmp_path / "one",
                          "--workers", "3")
    second = _run_pipeline(runner, pipeline_dataset, tmp_path / "two",
                           "--workers", "3")
    assert first.exit_code == 0, first.output
    assert second.exit_code == 0, second.output
    assert "18 results, 0 failures" in first.output
    assert "Video+Audio+NFBL" in first.output
    assert _read_tree(tmp_path / "one") == _read_tree(tmp_path / "two")

    v_result = json.loads((tmp_path / "one" / "results" / "v" / "g01.json")
                          .read_text(encoding="utf-8"))
    assert v_result["timing"]["segments"] == 0.0
    echoed = json.loads((tmp_path / "one" / "run_config.json")
                        .read_text(encoding="utf-8"))
    assert echoed["workers"] == 3


def test_run_pipeline_then_evaluate(runner, pipeline_dataset, tmp_path):
    out_dir = tmp_path / "run"
    assert _run_pipeline(runner, pipeline_dataset, out_dir).exit_code == 0
    result = runner.invoke(cli, ["evaluate", str(out_dir),
                                 str(pipeline_dataset.annotations)])
    assert result.exit_code == 0, result.output
    assert "[Video]" in result.output
    assert "Accuracy   66.67%" in result.output
    assert "Confidence 6.50" in result.output

    result = runner.invoke(cli, ["evaluate", str(out_dir),
                                 str(pipeline_dataset.annotations), "--csv"])
    lines = result.output.splitlines()
    assert lines[0].startswith("Modalities,")
    assert lines[1:] == [
        "Video,66.67,66.67,66.67,6.50",
        "Video+Audio,66.67,66.67,66.67,6.50",
        "Video+Audio+NFBL,66.67,66.67,66.67,6.50",
    ]


def test_run_pipeline_on_split(runner, pipeline_dataset, tmp_path):
    split = tmp_path / "split.json"
    split.write_text(json.dumps({"train": ["g01", "g02"],
                                 "test": ["g03", "g04"]}), encoding="utf-8")
    result = _run_pipeline(runner, pipeline_dataset, tmp_path / "run",
                           "--split-file", str(split))
    assert result.exit_code == 0, result.output
    assert "6 results, 0 failures" in result.output
    assert sorted(p.name for p in
                  (tmp_path / "run" / "results" / "van").iterdir()) == [
        "g03.json", "g04.json"]


def test_run_pipeline_needs_clients(runner, pipeline_dataset, tmp_path):
    result = runner.invoke(cli, [
        "run-pipeline", str(pipeline_dataset.annotations),
        str(pipeline_dataset.media_root), str(tmp_path / "run")],
        env={"MLLM_ENDPOINT": "", "JUDGE_ENDPOINT": ""})
    assert result.exit_code == 1


def test_evaluate_without_results(runner, pipeline_dataset, tmp_path):
    result = runner.invoke(cli, ["evaluate", str(tmp_path),
                                 str(pipeline_dataset.annotations)])
    assert result.exit_code == 2


def test_unknown_command(runner):
    assert runner.invoke(cli, ["transcode"]).exit_code == 1
