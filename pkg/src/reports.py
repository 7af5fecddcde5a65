"""
Run manifests and the tabular report collected from a run directory.

report() reads whatever gen-data / train / nn-test / fem-test / sweep left
behind and writes flat CSVs for plotting elsewhere:

    displacement_vs_time.csv   probe-node displacements, reference vs learned
    strain_stress.csv          probe-point strain/stress paths
    loss_curves.csv            training (and pretraining) histories
    timing.csv                 reference vs surrogate wall time per case
    nncompare.csv              sweep results per cell and case
    report_manifest.json       produced files and missing inputs
"""
import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REPORT_FILES = (
    "displacement_vs_time.csv",
    "strain_stress.csv",
    "loss_curves.csv",
    "timing.csv",
    "nncompare.csv",
)


# -------------------------------------------------------------------
# Manifest
# -------------------------------------------------------------------
def blob_hash(path) -> str:
    """Git-style object id: sha1 of b"blob <size>\\0" + content."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for path in inputs:
        path = Path(path)
        if path.is_file():
            hashes[str(path)] = blob_hash(path)
    manifest = {
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "config": config,
        "inputs": hashes,
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


# -------------------------------------------------------------------
# Report pieces
# -------------------------------------------------------------------
def _probes(run: Path):
    path = run / "data" / "probes.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _disp_rows(directory: Path, source: str, nodes, dt):
    rows = []
    for disp in sorted(directory.glob("*_disp.csv")):
        case = disp.name[: -len("_disp.csv")]
        frame = pd.read_csv(disp)
        frame = frame[frame["node"].isin(nodes)].copy()
        frame.insert(0, "source", source)
        frame.insert(0, "case", case)
        frame["time"] = frame["step"] * dt
        rows.append(frame)
    return rows


def _points_rows(directory: Path, source: str, points, n_gp):
    rows = []
    for pts in sorted(directory.glob("*_points.csv")):
        case = pts.name[: -len("_points.csv")]
        frame = pd.read_csv(pts)
        index = frame["element"] * n_gp + frame["gp"]
        frame = frame[index.isin(points)].copy()
        frame.insert(0, "source", source)
        frame.insert(0, "case", case)
        rows.append(frame)
    return rows


def _meta(directory: Path):
    metas = {}
    for path in sorted(directory.glob("*_meta.json")):
        metas[path.name[: -len("_meta.json")]] = json.loads(path.read_text())
    return metas


def _timing(run: Path):
    ref = _meta(run / "data" / "reference")
    fem = _meta(run / "fem_test")
    cases = sorted(set(ref) | set(fem))
    if not cases:
        return None
    rows = []
    for case in cases:
        r, f = ref.get(case, {}), fem.get(case, {})
        ref_t, fem_t = r.get("wall_time", np.nan), f.get("wall_time", np.nan)
        rows.append({
            "case": case,
            "reference_seconds": ref_t,
            "surrogate_seconds": fem_t,
            "speedup": ref_t / fem_t if fem_t and np.isfinite(fem_t) and fem_t > 0 else np.nan,
            "surrogate_status": f.get("status", ""),
        })
    return pd.DataFrame(rows)


def _loss_curves(run: Path):
    frames = []
    for name, stage in (("pretrain_log.csv", "pretrain"), ("train_log.csv", "train")):
        for path in sorted(run.rglob(name)):
            frame = pd.read_csv(path)
            frame.insert(0, "stage", stage)
            frame.insert(0, "run", str(path.parent.parent.relative_to(run)))
            frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else None


def report(run_dir, out_dir=None) -> dict:
    """
    Collect the report tables of one run directory.

    Missing inputs are listed in the manifest instead of raising, so an
    empty directory yields an empty manifest.
    """
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run / "report"
    out.mkdir(parents=True, exist_ok=True)
    produced, missing = [], []

    def emit(name, frame, needs):
        if frame is None or frame.empty:
            missing.append({"file": name, "needs": needs})
            return
        frame.to_csv(out / name, index=False)
        produced.append(name)

    probes = _probes(run)
    ref_dir, fem_dir = run / "data" / "reference", run / "fem_test"
    disp, path = None, None
    if probes is not None:
        metas = _meta(ref_dir) or _meta(fem_dir)
        meta = next(iter(metas.values()), None)
        if meta is not None:
            dt, n_gp = meta["dt"], meta["n_gp"]
            rows = _disp_rows(ref_dir, "reference", probes["nodes"], dt) \
                + _disp_rows(fem_dir, "learned", probes["nodes"], dt)
            disp = pd.concat(rows, ignore_index=True) if rows else None
            rows = _points_rows(ref_dir, "reference", probes["points"], n_gp) \
                + _points_rows(fem_dir, "learned", probes["points"], n_gp)
            path = pd.concat(rows, ignore_index=True) if rows else None
    emit("displacement_vs_time.csv", disp, "gen-data and/or fem-test")
    emit("strain_stress.csv", path, "gen-data and/or fem-test")
    emit("loss_curves.csv", _loss_curves(run), "train")
    emit("timing.csv", _timing(run), "gen-data and fem-test")

    sweep_path = run / "sweep" / "sweep.csv"
    emit("nncompare.csv", pd.read_csv(sweep_path) if sweep_path.exists() else None, "sweep")

    manifest = {"run": str(run), "produced": produced, "missing": missing}
    (out / "report_manifest.json").write_text(json.dumps(manifest, indent=2))
    logger.info(f"Report: {len(produced)} tables written to {out}, {len(missing)} missing")
    return manifest
