"""
End-to-end tour of the HTTP API, run in-process against a temp data dir.

Covers the full field loop: publish a model, score an uploaded photo,
file a geotagged outbreak report, query it back, pull the dataset archive.
"""

import io
import tempfile

from fastapi.testclient import TestClient

from wssvwatch.imaging import encode_png
from wssvwatch.inference import bundle_to_tar
from wssvwatch.service import ServiceConfig, create_app
from wssvwatch.toymodels import region_sum_model

import numpy as np

config = ServiceConfig(data_dir=tempfile.mkdtemp(prefix="apidemo_"))
client = TestClient(create_app(config))

print("health:", client.get("/api/v1/health").json())

# publish a detector and make it live
tar = bundle_to_tar(region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0))
entry = client.post("/api/v1/models", files={"bundle": ("m.tar", io.BytesIO(tar))}).json()
client.post(f"/api/v1/models/{entry['id']}/activate")
print("active model:", client.get("/api/v1/models").json()["active"])

# a suspicious photo: bright patch where the detector looks
frame = np.zeros((32, 32, 3), dtype=np.uint8)
frame[8:16, 8:16] = 250
png = encode_png(frame)

resp = client.post(
    "/api/v1/predict?saliency=true&patch_side=8&stride=4",
    files={"image": ("pond_07.png", io.BytesIO(png))},
).json()
print("prediction: score=%.4f decision=%s" % (resp["score"], resp["decision"]))
print("saliency overlay:", resp["saliency"]["overlay_png"][:40], "...")

# the technician files a report referencing the flagged image
draft = {
    "submitter": "tech_ayu",
    "location": {"latitude": -6.97, "longitude": 110.42},
    "water": {"temperature": 29.5, "ph": 7.9, "salinity": 18.0},
    "environment": {"air_temperature": 31.0, "weather_note": "overcast, pond 7 outlet"},
    "images": [
        {
            "sample_id": resp["sample_id"],
            "prediction": {"score": resp["score"], "decision": resp["decision"]},
        }
    ],
}
report = client.post("/api/v1/reports", json=draft).json()
print("report filed:", report["id"], "at", report["created_at"])

# region queries drive the monitoring dashboard
hits = client.get("/api/v1/reports", params={"bbox": "110,-7.5,111,-6.5", "decision": "wssv"})
print("reports in bbox flagged wssv:", len(hits.json()["reports"]))

# malformed coordinates never reach the store
bad = dict(draft, location={"latitude": 91, "longitude": 0})
denied = client.post("/api/v1/reports", json=bad)
print("latitude 91 ->", denied.status_code, denied.json()["field"])

# every uploaded frame landed in the dataset; pull the portable archive
listing = client.get("/api/v1/dataset/samples").json()["samples"]
print("dataset now holds", len(listing), "sample(s), source:", listing[0]["source"])
archive = client.get("/api/v1/dataset/export")
print("export:", len(archive.content), "bytes,", archive.headers["content-type"])
