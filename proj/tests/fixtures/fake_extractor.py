"""Stand-in for the activation extractor used by the CLI tests.

Reads an extract job, writes one ACTF file per requested layer and exits.
The job's "device" field selects a failure mode:
  fail         exit with status 3 without writing anything
  wrong-layer  record layer + 1 in every header
  short        drop the last corpus row
  missing      write nothing and exit 0
"""

import json
import math
import struct
import sys

D_MODEL = 16


def activation(record):
    """Planted relation offset in the first three coordinates plus a fixed per-pair pattern."""
    off = [a - b for a, b in zip(record["p1"], record["p2"])]
    vec = [0.0] * D_MODEL
    for i in range(3):
        vec[i] = 10.0 * off[i]
    h = sum(ord(c) for c in record["obj1"] + "|" + record["obj2"])
    for i in range(3, D_MODEL):
        vec[i] = math.sin(h * (i + 1)) * 0.5
    return vec


def write_actf(path, job, layer, records):
    rows = [activation(r) for r in records]
    norm = sum(math.sqrt(sum(struct.unpack("<f", struct.pack("<f", x))[0] ** 2 for x in row)) for row in rows)
    header = {
        "model_id": job["model_id"],
        "layer": layer,
        "hook_point": job["hook_point"],
        "token_strategy": job["token_strategy"],
        "d_model": D_MODEL,
        "mean_row_norm": norm / len(rows) if rows else 0.0,
        "capture_seed": job["seed"],
        "n": len(rows),
        "d": D_MODEL,
    }
    head = json.dumps(header, separators=(",", ":")).encode()
    labels = "".join(
        json.dumps(
            {"prompt_id": r["id"], "relation": r["relation"], "obj1": r["obj1"], "obj2": r["obj2"], "split": r["split"]},
            separators=(",", ":"),
        )
        + "\n"
        for r in records
    ).encode()
    with open(path, "wb") as f:
        f.write(b"ACTF")
        f.write(struct.pack("<II", 1, len(head)))
        f.write(head)
        for row in rows:
            f.write(struct.pack("<%df" % D_MODEL, *row))
        f.write(struct.pack("<I", len(labels)))
        f.write(labels)


def main(argv):
    if len(argv) != 2:
        print("usage: fake_extractor.py JOB", file=sys.stderr)
        return 2
    with open(argv[1]) as f:
        job = json.load(f)
    mode = job.get("device", "cpu")
    if mode == "fail":
        return 3
    if mode == "missing":
        return 0
    with open(job["corpus"]) as f:
        records = [json.loads(line) for line in f if line.strip()]
    if mode == "short":
        records = records[:-1]
    for layer in job["layers"]:
        recorded = layer + 1 if mode == "wrong-layer" else layer
        write_actf(job["outputs"][str(layer)], job, recorded, records)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
