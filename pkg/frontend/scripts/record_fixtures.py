"""Record real service responses as console test fixtures.

Drives the inspection service end to end (train via the API, open a session,
submit pass / swapped / unreadable frames, resolve one event) and writes each
response JSON under tests/fixtures/. Rerun after changing the API surface:

    python3 scripts/record_fixtures.py
"""
import dataclasses
import json
import sys
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from harnesscheck.imaging import RgbImage, encode_png
from harnesscheck.service import create_app
from harnesscheck.sessions import SessionStore
from harnesscheck.synth import CORPUS_PALETTE_8, HarnessSpec, generate, permute_defect

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
TOKEN = "fixture-token"


def png_of(spec: HarnessSpec) -> bytes:
    return encode_png(generate(spec)[0])


def dump(name: str, payload: dict) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {name}")


def main() -> int:
    spec = HarnessSpec(wire_colors=CORPUS_PALETTE_8, noise_sigma=2.0, seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        app = create_app(root / "profiles", SessionStore(root / "sessions"), TOKEN)
        client = TestClient(app, headers={"Authorization": f"Bearer {TOKEN}"})

        config = {
            "harness_type": "demo-8w",
            "views": [
                {
                    "view_id": "front",
                    "roi": {"x": spec.roi.x, "y": spec.roi.y,
                            "width": spec.roi.width, "height": spec.roi.height},
                    "expected_wires": spec.wire_count,
                }
            ],
        }
        files = [
            ("files", (f"sample_{i:02d}.png",
                       png_of(dataclasses.replace(spec, seed=i)), "image/png"))
            for i in range(5)
        ]
        trained = client.post("/profiles", data={"config": json.dumps(config)}, files=files)
        assert trained.status_code == 201, trained.text
        profile_id = trained.json()["profile_id"]

        dump("profiles.json", client.get("/profiles").json())

        session = client.post("/sessions", json={
            "operator": "fixture-recorder",
            "harness_type": "demo-8w",
            "profile_id": profile_id,
        }).json()
        sid = session["session_id"]

        def inspect(data: bytes) -> dict:
            r = client.post(f"/sessions/{sid}/inspect",
                            files=[("frames", ("frame.png", data, "image/png"))])
            assert r.status_code == 200, r.text
            return r.json()

        pass_frame = png_of(dataclasses.replace(spec, seed=31))
        swap_frame = png_of(permute_defect(dataclasses.replace(spec, seed=32), "swap", 2, 5))
        blank = encode_png(RgbImage(np.zeros((240, 400, 3), dtype=np.uint8)))

        dump("inspect_pass.json", inspect(pass_frame))
        fail_response = inspect(swap_frame)
        dump("inspect_fail_2_5.json", fail_response)
        mismatched = [w["index"] for w in fail_response["result"]["views"][0]["wires"]
                      if w["verdict"] == "Mismatch"]
        assert mismatched == [2, 5], mismatched
        dump("inspect_unclear.json", inspect(blank))
        second_unclear = inspect(blank)

        resolved = client.post(
            f"/sessions/{sid}/events/{second_unclear['event']['event_id']}/resolve",
            json={"action": "manual_fail"},
        )
        assert resolved.status_code == 200, resolved.text
        dump("resolve.json", resolved.json())

        dump("session.json", client.get(f"/sessions/{sid}").json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
