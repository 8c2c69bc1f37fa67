#!/usr/bin/env python3
"""Writes the bundled scene fixtures under data/fixtures/.

Every field is closed-form so tests can recompute it exactly:
  frame k: timestamp = 1_000_000 + 500_000 k us, t = 0.5 k s
  ego translation = (100 + 2k, 50 + 0.5k, 0), yaw = 0.25
  instance center = c0 + v * t
"""
import json
import pathlib

FRAMES = 10
EGO0 = (100.0, 50.0)

# instance_id, category, offset from ego at frame 0, z, size_wlh, yaw, velocity, color
INSTANCES = [
    ("car-1", "car", (20.0, 7.0), 0.8, (1.9, 4.6, 1.6), 0.25, (5.0, 1.25), "red"),
    ("car-2", "car", (25.0, 3.0), 0.8, (1.9, 4.6, 1.6), 0.25, (4.0, 1.0), "red"),
    ("bus-1", "bus", (5.0, 14.0), 1.7, (2.9, 11.5, 3.4), 1.8, (-0.75, 3.0), "orange"),
    ("pedestrian-1", "pedestrian", (-6.0, 9.0), 0.9, (0.7, 0.7, 1.8), 0.0, (0.1, 0.0), None),
    ("truck-1", "truck", (-30.0, -4.0), 1.5, (2.5, 7.0, 3.0), 3.0, (0.0, 0.0), "white"),
    ("traffic_cone-1", "traffic_cone", (-7.0, -10.0), 0.5, (0.4, 0.4, 1.0), 0.0, (0.0, 0.0), "orange"),
]


def scene(scene_id, pedestrian_color):
    frames = []
    for k in range(FRAMES):
        t = 0.5 * k
        instances = []
        for iid, cat, off, z, size, yaw, vel, color in INSTANCES:
            if iid == "pedestrian-1":
                color = pedestrian_color
            c0 = (EGO0[0] + off[0], EGO0[1] + off[1])
            instances.append({
                "instance_id": iid,
                "category": cat,
                "center": [c0[0] + vel[0] * t, c0[1] + vel[1] * t, z],
                "size_wlh": list(size),
                "yaw_rad": yaw,
                "color": color,
            })
        frames.append({
            "frame_id": f"{scene_id}-f{k:02d}",
            "timestamp_us": 1_000_000 + 500_000 * k,
            "ego_pose": {"translation": [100.0 + 2.0 * k, 50.0 + 0.5 * k, 0.0], "yaw_rad": 0.25},
            "instances": instances,
        })
    return {"scene_id": scene_id, "frames": frames}


def main():
    root = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"
    for sub, sid, color in (("basic", "scene-0001", None), ("full", "scene-0002", "black")):
        out = root / sub
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{sid}.json").write_text(json.dumps(scene(sid, color), indent=1) + "\n")


if __name__ == "__main__":
    main()
