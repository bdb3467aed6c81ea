#!/usr/bin/env python3
"""Regenerates data/splits/*.jsonl from the public file names of the four datasets.

Membership is matched on (dataset, id); the paths are informative and
relative to each dataset root.
"""
import json
import pathlib

STARE = ["im0001", "im0002", "im0003", "im0004", "im0005", "im0044", "im0077", "im0081", "im0082", "im0139",
         "im0162", "im0163", "im0235", "im0236", "im0239", "im0240", "im0255", "im0291", "im0319", "im0324"]


def drive():
    out = []
    for n in range(21, 41):
        s = f"{n}_training"
        out.append(("DRIVE", s, f"training/images/{s}.tif", f"training/1st_manual/{n}_manual1.gif",
                    f"training/mask/{s}_mask.gif", "train"))
    for n in range(1, 21):
        s = f"{n:02d}_test"
        out.append(("DRIVE", s, f"test/images/{s}.tif", f"test/1st_manual/{n:02d}_manual1.gif",
                    f"test/mask/{s}_mask.gif", "test"))
    return out


def stare():
    return [("STARE", s, f"stare-images/{s}.ppm", f"labels-ah/{s}.ah.ppm", None, "train" if i < 11 else "test")
            for i, s in enumerate(STARE)]


def chase():
    stems = [f"Image_{n:02d}{eye}" for n in range(1, 15) for eye in "LR"]
    return [("CHASE_DB1", s, f"{s}.jpg", f"{s}_1stHO.png", None, "train" if i < 20 else "test")
            for i, s in enumerate(stems)]


def hrf():
    names = sorted(f"{n:02d}_{k}.{'JPG' if k == 'dr' else 'jpg'}" for n in range(1, 16) for k in ("dr", "g", "h"))
    out = []
    for i, name in enumerate(names):
        s = name.rsplit(".", 1)[0]
        out.append(("HRF", s, f"images/{name}", f"manual1/{s}.tif", f"mask/{s}_mask.tif",
                    "train" if i + 8 < len(names) else "test"))
    return out


def write(path, rows):
    with open(path, "w") as f:
        for d, i, img, mask, fov, split in rows:
            f.write(json.dumps({"dataset": d, "id": i, "image": img, "mask": mask, "fov": fov, "split": split}) + "\n")


if __name__ == "__main__":
    root = pathlib.Path(__file__).resolve().parent.parent / "data" / "splits"
    root.mkdir(parents=True, exist_ok=True)
    rows = drive() + stare() + chase() + hrf()
    rows.sort(key=lambda r: r[5] != "train")  # all train records first, dataset order kept
    write(root / "combined_88_45.jsonl", rows)
    write(root / "drive_only.jsonl", drive())
    print(sum(r[5] == "train" for r in rows), "train,", sum(r[5] == "test" for r in rows), "test")
