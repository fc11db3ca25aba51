import base64
import io
import json

import numpy as np

from app.core.app_config import API_KEY
from app.database.db_connection import SQLITE_BUSY_TIMEOUT_MS, make_engine
from app.schemas.video_schema import FrameImage
from app.services import media_io
from app.services.annotation_service import serialize_annotations
from tools.debug_db import dump_operations

headers = {"X-API-Key": API_KEY}


def _ppm_base64(rng, height=16, width=20):
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    frame = FrameImage(pixels)
    return frame, base64.b64encode(media_io.encode_ppm(frame)).decode()


def test_health(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_anonymize_returns_wav(client, make_ar_signal):
    audio = make_ar_signal(0.5)
    response = client.post("/anonymize/",
                           content=media_io.encode_wav(audio),
                           headers=headers)
    assert response.status_code == 200
    assert response.headers["content-type"] == "audio/wav"
    out = media_io.decode_wav(response.content)
    assert out.sample_rate_hz == 16_000
    assert len(out) == len(audio)


def test_anonymize_lambda_one(client, make_ar_signal):
    audio = make_ar_signal(0.5, seed=1)
    response = client.post("/anonymize/",
                           params={"lambda": 1.0},
                           content=media_io.encode_wav(audio, True),
                           headers=headers)
    assert response.status_code == 200
    out = media_io.decode_wav(response.content)
    # 16-bit output
    assert np.max(np.abs(out.samples - audio.samples)) < 1e-3


def test_anonymize_rejects_garbage(client):
    response = client.post("/anonymize/",
                           content=b"definitely not a waveform",
                           headers=headers)
    assert response.status_code == 400
    detail = response.json()["detail"]
    assert detail["operation"] == "anonymize"
    assert detail["status"] == "error"
    assert "unreadable waveform" in detail["message"]


def test_anonymize_rejects_bad_frame_params(client, make_ar_signal):
    response = client.post("/anonymize/",
                           params={"win_ms": 10, "shift_ms": 20},
                           content=media_io.encode_wav(make_ar_signal(0.2)),
                           headers=headers)
    assert response.status_code == 400


def test_anonymize_lambda_out_of_range(client):
    response = client.post("/anonymize/", params={"lambda": 2.5},
                           content=b"", headers=headers)
    assert response.status_code == 422


def test_anonymize_missing_api_key(client):
    response = client.post("/anonymize/", content=b"")
    assert response.status_code == 401
    assert "Missing" in response.json()["detail"]


def test_anonymize_wrong_api_key(client):
    response = client.post("/anonymize/", content=b"",
                           headers={"X-API-Key": "wrong_key"})
    assert response.status_code == 403
    assert "Invalid" in response.json()["detail"]


def test_mask_blurs_box_only(client, rng):
    frame, encoded = _ppm_base64(rng)
    response = client.post("/mask/",
                           json={"frame": encoded,
                                 "boxes": [{"x": 2, "y": 3, "w": 8, "h": 6}]},
                           headers=headers)
    assert response.status_code == 201
    body = response.json()
    assert body["status"] == "success"
    assert (body["result"]["width"], body["result"]["height"]) == (20, 16)
    masked = media_io.decode_ppm(base64.b64decode(body["result"]["frame"]))
    inside = np.zeros((16, 20), dtype=bool)
    inside[3:9, 2:10] = True
    np.testing.assert_array_equal(masked.pixels[~inside],
                                  frame.pixels[~inside])
    assert not np.array_equal(masked.pixels[inside], frame.pixels[inside])


def test_mask_without_boxes(client, rng):
    frame, encoded = _ppm_base64(rng)
    response = client.post("/mask/", json={"frame": encoded},
                           headers=headers)
    assert response.status_code == 201
    masked = base64.b64decode(response.json()["result"]["frame"])
    np.testing.assert_array_equal(media_io.decode_ppm(masked).pixels,
                                  frame.pixels)


def test_mask_rejects_bad_input(client, rng):
    response = client.post("/mask/", json={"frame": "@@not base64@@"},
                           headers=headers)
    assert response.status_code == 400
    assert "base-64" in response.json()["detail"]["message"]

    _, encoded = _ppm_base64(rng)
    response = client.post("/mask/",
                           json={"frame": encoded, "sigma_policy": "box:3"},
                           headers=headers)
    assert response.status_code == 400

    response = client.post("/mask/",
                           json={"frame": encoded,
                                 "boxes": [{"x": 0, "y": 0, "w": 0, "h": 1}]},
                           headers=headers)
    assert response.status_code == 422


def test_annotation_summary(client, pipeline_dataset):
    body = serialize_annotations(pipeline_dataset.records)
    response = client.post("/annotations/summary", content=body,
                           headers=headers)
    assert response.status_code == 200
    result = response.json()["result"]
    assert result["summary"]["video_count"] == 6
    assert result["summary"]["clip_count"] == 7
    assert result["summary"]["label_counts"] == {"positive": 3,
                                                 "negative": 3}
    assert len(result["histogram"]) == 37
    assert sum(result["categories"].values()) == 7


def test_annotation_summary_rejects_bad_document(client):
    response = client.post("/annotations/summary",
                           content=b'{"schema": "something-else"}',
                           headers=headers)
    assert response.status_code == 400
    assert "header" in response.json()["detail"]["message"]


def test_evaluate(client):
    items = ([{"prediction": "positive", "label": "positive",
               "confidence": 8}] * 2 +
             [{"prediction": "positive", "label": "negative",
               "confidence": 4}] * 2)
    response = client.post("/evaluate/", json={"items": items},
                           headers=headers)
    assert response.status_code == 200
    result = response.json()["result"]
    assert result["counts"] == {"tp": 2, "tn": 0, "fp": 2, "fn": 0}
    assert result["accuracy"] == 0.5
    assert result["precision"] == 0.5
    assert result["recall"] == 1.0
    assert result["mean_confidence"] == 6.0


def test_evaluate_empty(client):
    response = client.post("/evaluate/", json={"items": []},
                           headers=headers)
    assert response.status_code == 400
    assert response.json()["detail"]["operation"] == "evaluate"


def test_evaluate_bad_label(client):
    response = client.post("/evaluate/",
                           json={"items": [{"prediction": "happy",
                                            "label": "positive"}]},
                           headers=headers)
    assert response.status_code == 422


def test_metrics_endpoint(client):
    response = client.get("/metrics", headers=headers)
    assert response.status_code == 200
    assert "http_requests_total" in response.text


def test_z_logs_include_success_and_error(client):
    response = client.get("/logs/", headers=headers)
    assert response.status_code == 200
    logs = response.json()

    success_found = any(
        log["operation"] == "evaluate" and
        log["input"] == {"items": 4} and
        log["result"]["counts"]["tp"] == 2 and
        log["status"] == "success"
        for log in logs
    )
    assert success_found, "Expected evaluate success log not found"

    error_found = any(
        log["operation"] == "anonymize" and
        log["status"] == "error"
        for log in logs
    )
    assert error_found, "Expected anonymize error log not found"


def test_z_logs_filters(client):
    response = client.get("/logs/", params={"operation": "mask",
                                            "status": "error", "limit": 1},
                          headers=headers)
    assert response.status_code == 200
    logs = response.json()
    assert len(logs) == 1
    assert logs[0]["operation"] == "mask"
    assert logs[0]["status"] == "error"

    response = client.get("/logs/", params={"limit": 301}, headers=headers)
    assert response.status_code == 422


def test_z_debug_dump_lists_rows(client):
    out = io.StringIO()
    count = dump_operations("evaluate", "success", out=out)
    lines = out.getvalue().splitlines()
    assert count == len(lines) >= 1
    first = json.loads(lines[0])
    assert first["operation"] == "evaluate"
    assert first["input"] == {"items": 4}


def test_sqlite_engine_creates_directory(tmp_path):
    url = f"sqlite:///{tmp_path / 'nested' / 'ops.db'}"
    engine = make_engine(url)
    with engine.connect() as conn:
        timeout = conn.exec_driver_sql("PRAGMA busy_timeout").scalar()
    assert timeout == SQLITE_BUSY_TIMEOUT_MS
    assert (tmp_path / "nested").is_dir()
    engine.dispose()
