"""
End-to-end dataset generation, verification and inspection.

Each (genus, index) pair is one run: seed, environment, placement, growth,
then one manifest entry per growth snapshot. A run is written into a
temporary directory and renamed into place when complete, so a directory
under ``samples/`` is either whole or absent. Every random draw comes from a
stream keyed on (master_seed, genus, index, stage), so a run reproduces
bit-exactly no matter which worker executes it or in which order.

Output layout::

    <out>/config.json
    <out>/manifest.jsonl            one SampleManifestEntry per line, sorted
    <out>/timings.csv               run wall time per entry
    <out>/failures.jsonl            skipped runs and why
    <out>/samples/g03-s0001/        environment.obj, seed.obj, growth_trace.csv,
                                    entries.jsonl, L0/ .. L5/
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from topogen.config import DatasetConfig
from topogen.displacement import cellular_displacement
from topogen.environment import write_environment_obj
from topogen.errors import DisplacementError, GenerationError, SampleNotFoundError, TopogenError
from topogen.growth import find_placement, grow, write_growth_trace
from topogen.meshio import write_obj
from topogen.rng import sample_subseed, split_tag, stage_rng, stage_seed
from topogen.seeds import make_genus_g_seed
from topogen.topology import VerificationReport, betti_voxel, slice_betti, verify_sample
from topogen.voxels import (
    apply_noise_octaves,
    encode_voxels,
    extract_slice,
    gaussian_smooth_binarize,
    read_voxels,
    sample_point_cloud,
    sample_surface_points,
    voxelize_solid,
    write_pgm,
    write_xyz,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.jsonl"
ENTRIES_NAME = "entries.jsonl"
VOXEL_KINDS = (("clean_voxels", "verification"), ("voxels", "noisy_verification"))


class SampleManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_id: str
    run_id: str
    genus_label: int = Field(ge=0)
    complexity_level: int = Field(ge=0)
    rng_subseed: int
    area_ratio: float
    iteration: int
    target_area_multiplier: float
    placement: Dict[str, Any]
    file_paths: Dict[str, str]
    digests: Dict[str, str]
    world_transform: Dict[str, Any]
    verification: VerificationReport
    noisy_verification: VerificationReport
    split: Literal["train", "test"]
    flags: List[str] = []


@dataclass
class Manifest:
    entries: List[SampleManifestEntry]
    failures: List[Dict[str, Any]] = field(default_factory=list)
    path: Optional[Path] = None

    def __iter__(self) -> Iterator[SampleManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> SampleManifestEntry:
        return self.entries[i]


def run_id_for(genus: int, index: int) -> str:
    return f"g{genus:02d}-s{index:04d}"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_entries(path: Path) -> List[SampleManifestEntry]:
    with open(path, "r", encoding="utf-8") as f:
        return [SampleManifestEntry.model_validate_json(line) for line in f if line.strip()]


def read_manifest(path: PathLike) -> List[SampleManifestEntry]:
    return _read_entries(Path(path))


# ------------------------------------------------------------------ one run
def generate_run(
    config: DatasetConfig, genus: int, index: int, out_dir: PathLike, resume: bool = False
) -> List[SampleManifestEntry]:
    """Generate every snapshot entry of one (genus, index) run."""
    out = Path(out_dir)
    run_id = run_id_for(genus, index)
    final = out / "samples" / run_id
    if resume and (final / ENTRIES_NAME).exists():
        logger.debug("reusing %s", run_id)
        return _read_entries(final / ENTRIES_NAME)

    tmp = out / "samples" / f".{run_id}.tmp-{os.getpid()}"
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    try:
        entries = _build_run(config, genus, index, out, final, tmp)
        with open(tmp / ENTRIES_NAME, "w", encoding="utf-8", newline="\n") as f:
            for e in entries:
                f.write(e.model_dump_json() + "\n")
        shutil.rmtree(final, ignore_errors=True)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return entries


def _build_run(
    config: DatasetConfig, genus: int, index: int, out: Path, final: Path, tmp: Path
) -> List[SampleManifestEntry]:
    master = config.master_seed
    run_id = run_id_for(genus, index)

    seed_mesh = make_genus_g_seed(genus, config.seed)
    env = config.environment.build(stage_seed(master, genus, index, "environment"))
    placed, params = find_placement(
        seed_mesh, env, rng=stage_rng(master, genus, index, "placement"), config=config.placement
    )
    trace: List[Dict[str, Any]] = []
    snapshots = grow(placed, env, config.growth, stage_seed(master, genus, index, "growth"), trace)

    write_environment_obj(env, tmp / "environment.obj")
    write_obj(placed, tmp / "seed.obj")
    write_growth_trace(trace, tmp / "growth_trace.csv")

    rel = final.relative_to(out).as_posix()
    shared = {
        "environment": f"{rel}/environment.obj",
        "seed": f"{rel}/seed.obj",
        "trace": f"{rel}/growth_trace.csv",
    }
    split = split_tag(run_id, config.train_test_split)
    disp = config.displacement
    entries = []
    for snap in snapshots:
        level = snap.complexity_level
        level_dir = tmp / f"L{level}"
        level_dir.mkdir()
        flags: List[str] = []

        mesh = snap.mesh
        if disp.enabled and disp.intensity > 0:
            try:
                mesh = cellular_displacement(
                    mesh,
                    disp.intensity,
                    disp.feature_size,
                    stage_seed(master, genus, index, "displacement", level),
                    disp.max_attenuations,
                )
            except DisplacementError as exc:
                logger.warning("%s L%d: %s; keeping the undisplaced surface", run_id, level, exc)
                flags.append("displacement_failed")

        clean = voxelize_solid(mesh, config.voxel_resolution, config.voxel_pad)
        noisy = apply_noise_octaves(clean, config.noise, stage_seed(master, genus, index, "noise", level))
        noisy = gaussian_smooth_binarize(noisy, config.smoothing_sigma)
        source = noisy if noisy.occupied_count else clean
        cloud = sample_point_cloud(source, config.point_count, stage_seed(master, genus, index, "points", level))

        files = dict(shared)
        digests = {}
        for kind, grid in (("clean_voxels", clean), ("voxels", noisy)):
            name = "clean.tgv" if kind == "clean_voxels" else "voxels.tgv"
            data = encode_voxels(grid)
            (level_dir / name).write_bytes(data)
            files[kind] = f"{rel}/L{level}/{name}"
            digests[kind] = _sha256(data)
        write_obj(mesh, level_dir / "mesh.obj")
        files["mesh"] = f"{rel}/L{level}/mesh.obj"
        write_xyz(cloud.points, level_dir / "points.xyz")
        files["point_cloud"] = f"{rel}/L{level}/points.xyz"
        if config.surface_point_count:
            pts = sample_surface_points(
                mesh, config.surface_point_count, stage_seed(master, genus, index, "surface_points", level)
            )
            write_xyz(pts, level_dir / "surface.xyz")
            files["surface_points"] = f"{rel}/L{level}/surface.xyz"

        entries.append(
            SampleManifestEntry(
                sample_id=f"{run_id}-L{level}",
                run_id=run_id,
                genus_label=genus,
                complexity_level=level,
                rng_subseed=sample_subseed(master, genus, index),
                area_ratio=snap.area_ratio,
                iteration=snap.iteration,
                target_area_multiplier=snap.target_area_multiplier,
                placement=params.model_dump(mode="json"),
                file_paths=files,
                digests=digests,
                world_transform={"origin": clean.origin.tolist(), "voxel_size": clean.voxel_size},
                verification=verify_sample(clean, genus),
                noisy_verification=verify_sample(noisy, genus),
                split=split,
                flags=flags,
            )
        )
    return entries


def _run_task(config: DatasetConfig, genus: int, index: int, out: str, resume: bool) -> Tuple[str, Any, float]:
    t0 = time.perf_counter()
    try:
        entries = generate_run(config, genus, index, out, resume)
    except TopogenError as exc:
        failure = {
            "run_id": run_id_for(genus, index),
            "genus": genus,
            "index": index,
            "error": type(exc).__name__,
            "message": str(exc),
        }
        return "failed", failure, time.perf_counter() - t0
    return "ok", [e.model_dump(mode="json") for e in entries], time.perf_counter() - t0


# ------------------------------------------------------------------- dataset
def generate_dataset(
    config: DatasetConfig,
    out_dir: Optional[PathLike] = None,
    jobs: int = 1,
    resume: bool = False,
    on_result: Optional[Callable[[int, int, str, str], None]] = None,
) -> Manifest:
    """
    Generate every run of ``config`` and write the manifest. Failed runs are
    skipped, logged and listed in failures.jsonl. Raises GenerationError,
    after writing all outputs, if every run of some genus failed.
    ``on_result(done, total, run_id, status)`` is called as runs finish.
    """
    out = Path(out_dir or config.output_directory)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "config.json", config.model_dump_json(indent=2) + "\n")

    tasks = [(g, i) for g in config.genera for i in range(config.samples_per_genus)]
    total = len(tasks)
    results: Dict[Tuple[int, int], Tuple[str, Any, float]] = {}

    def collect(task: Tuple[int, int], result: Tuple[str, Any, float]) -> None:
        results[task] = result
        status = result[0]
        if status == "failed":
            logger.warning("skipped %s: %s", result[1]["run_id"], result[1]["message"])
        if on_result:
            on_result(len(results), total, run_id_for(*task), status)

    if jobs <= 1:
        for task in tasks:
            collect(task, _run_task(config, task[0], task[1], str(out), resume))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = {ex.submit(_run_task, config, g, i, str(out), resume): (g, i) for g, i in tasks}
            for fut in as_completed(futs):
                collect(futs[fut], fut.result())

    entries: List[SampleManifestEntry] = []
    failures: List[Dict[str, Any]] = []
    timings = []
    for task in sorted(results):
        status, payload, seconds = results[task]
        if status == "failed":
            failures.append(payload)
            continue
        for row in payload:
            entries.append(SampleManifestEntry.model_validate(row))
            timings.append({"sample_id": row["sample_id"], "run_id": row["run_id"], "seconds": round(seconds, 3)})
    entries.sort(key=lambda e: e.sample_id)

    manifest_path = out / MANIFEST_NAME
    _write_atomic(manifest_path, "".join(e.model_dump_json() + "\n" for e in entries))
    _write_atomic(out / "failures.jsonl", "".join(json.dumps(f, sort_keys=True) + "\n" for f in failures))
    pd.DataFrame(timings, columns=["sample_id", "run_id", "seconds"]).to_csv(out / "timings.csv", index=False)
    logger.info("wrote %d entries from %d runs (%d failed)", len(entries), total - len(failures), len(failures))

    failed_genera = {f["genus"] for f in failures}
    dead = sorted(g for g in failed_genera if all(results[(g, i)][0] == "failed" for i in range(config.samples_per_genus)))
    if dead:
        raise GenerationError(f"every run failed for genus {dead}")
    return Manifest(entries, failures, manifest_path)


# -------------------------------------------------------------- verification
@dataclass
class VerificationSummary:
    checked: int
    mismatches: List[Dict[str, str]]
    missing: List[Dict[str, str]]
    label_pass_fraction: float
    noisy_label_pass_fraction: float
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def consistent_fraction(self) -> float:
        total = 2 * self.checked
        return 1.0 if total == 0 else 1.0 - (len(self.mismatches) + len(self.missing)) / total

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.missing


def verify_dataset(manifest_path: PathLike) -> VerificationSummary:
    """
    Recompute the Betti numbers and payload digests of every voxel file and
    compare them with the manifest. Missing files are listed, not fatal.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    entries = read_manifest(manifest_path)
    rows: List[Dict[str, Any]] = []
    mismatches: List[Dict[str, str]] = []
    missing: List[Dict[str, str]] = []
    passes = {"verification": 0, "noisy_verification": 0}

    for e in entries:
        for kind, report_field in VOXEL_KINDS:
            stored: VerificationReport = getattr(e, report_field)
            row = {
                "sample_id": e.sample_id,
                "kind": kind,
                "genus_label": e.genus_label,
                "complexity_level": e.complexity_level,
                "expected": "%d,%d,%d" % stored.expected.as_tuple(),
                "stored": "%d,%d,%d" % stored.actual.as_tuple(),
                "measured": "",
                "digest_ok": False,
                "consistent": False,
                "label_passed": False,
            }
            path = root / e.file_paths[kind]
            if not path.exists():
                missing.append({"sample_id": e.sample_id, "kind": kind, "path": str(path)})
                rows.append(row)
                continue
            data = path.read_bytes()
            row["digest_ok"] = _sha256(data) == e.digests.get(kind)
            try:
                measured = betti_voxel(read_voxels(path))
                row["measured"] = "%d,%d,%d" % measured.as_tuple()
                row["consistent"] = bool(row["digest_ok"] and measured == stored.actual)
                row["label_passed"] = bool(measured == stored.expected)
            except ValueError as exc:
                logger.warning("%s %s unreadable: %s", e.sample_id, kind, exc)
            if not row["consistent"]:
                reason = "digest" if not row["digest_ok"] else "betti"
                mismatches.append({"sample_id": e.sample_id, "kind": kind, "reason": reason})
            passes[report_field] += int(row["label_passed"])
            rows.append(row)

    n = len(entries)
    summary = VerificationSummary(
        checked=n,
        mismatches=mismatches,
        missing=missing,
        label_pass_fraction=passes["verification"] / n if n else 1.0,
        noisy_label_pass_fraction=passes["noisy_verification"] / n if n else 1.0,
        rows=rows,
    )
    pd.DataFrame(rows).to_csv(root / "verification_summary.csv", index=False)
    return summary


# ---------------------------------------------------------------------- views
def dataset_view_slices(root: PathLike) -> int:
    """``view_slices`` from the config.json stored with a dataset; the model default if absent."""
    path = Path(root) / "config.json"
    default = DatasetConfig.model_fields["view_slices"].default
    if not path.exists():
        return default
    return int(json.loads(path.read_text(encoding="utf-8")).get("view_slices", default))


def export_views(
    manifest_path: PathLike,
    sample_id: str,
    out_dir: Optional[PathLike] = None,
    count: Optional[int] = None,
) -> List[Path]:
    """
    Write ``count`` evenly spaced interior z slices (PGM), the mesh (OBJ) and
    slice topology (JSON). ``count`` defaults to the dataset's ``view_slices``.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    if count is None:
        count = dataset_view_slices(root)
    entry = next((e for e in read_manifest(manifest_path) if e.sample_id == sample_id), None)
    if entry is None:
        raise SampleNotFoundError(f"no sample {sample_id!r} in {manifest_path}")

    out = Path(out_dir) if out_dir else root / "views" / sample_id
    out.mkdir(parents=True, exist_ok=True)
    grid = read_voxels(root / entry.file_paths["voxels"])
    n = grid.resolution
    indices = np.linspace(0, n - 1, count + 2)[1:-1].round().astype(int)

    written: List[Path] = []
    topology = []
    for i in indices:
        image = extract_slice(grid, "z", int(i))
        path = out / f"slice_z{int(i):04d}.pgm"
        write_pgm(image, path)
        written.append(path)
        st = slice_betti(image)
        topology.append({"axis": "z", "index": int(i), "components": st.components, "holes": st.holes})

    mesh_path = out / "mesh.obj"
    shutil.copyfile(root / entry.file_paths["mesh"], mesh_path)
    written.append(mesh_path)
    (out / "slices.json").write_text(json.dumps(topology, indent=2) + "\n", encoding="utf-8")
    return written
