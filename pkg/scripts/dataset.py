#!/usr/bin/env python3
"""
Generate, verify and inspect topology-labelled shape datasets.

Writes under --out (or $TOPOGEN_OUTPUT, or the config's output_directory):
  - manifest.jsonl (one entry per sample and complexity level)
  - samples/<run>/ (environment, seed, growth trace, per-level voxels/mesh/points)
  - failures.jsonl, timings.csv, config.json
  - verification_summary.csv (after `verify`)

Env (set in .env; read with python-dotenv):
  TOPOGEN_JOBS      = default worker count for `generate` (1 runs inline)
  TOPOGEN_LOG_LEVEL = DEBUG | INFO | WARNING (default INFO)
  TOPOGEN_OUTPUT    = default output directory

Exit codes: 0 ok, 1 bad request (unknown sample, missing manifest),
2 invalid config, 3 generation failures present, 4 verification mismatches.

Examples:
  # Small desk dataset: genus 0..5, two runs each, 64^3 voxels
  python scripts/dataset.py generate --config config/desk.yaml --out out/desk --jobs 4

  # Pick up an interrupted run; finished sample directories are reused
  python scripts/dataset.py generate --config config/production.yaml --out out/prod --jobs 16 --resume

  # Recompute Betti numbers and digests of every voxel file
  python scripts/dataset.py verify --manifest out/desk/manifest.jsonl

  # Slices (PGM), mesh and slice topology for one sample
  python scripts/dataset.py views --manifest out/desk/manifest.jsonl --sample g03-s0001-L4

  # A bare seed surface
  python scripts/dataset.py seed-mesh --genus 7 --out seed7.ply
"""
import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

sys.path.append(str(Path(__file__).resolve().parents[1]))

from dotenv import load_dotenv

from topogen.config import load_config
from topogen.errors import ConfigError, GenerationError, SampleNotFoundError, TopogenError
from topogen.meshio import write_obj, write_ply
from topogen.pipeline import MANIFEST_NAME, export_views, generate_dataset, verify_dataset
from topogen.seeds import SeedParams, make_genus_g_seed

load_dotenv()

EXIT_OK = 0
EXIT_BAD_REQUEST = 1
EXIT_CONFIG = 2
EXIT_FAILURES = 3
EXIT_MISMATCH = 4


def fmt_duration(seconds: float) -> str:
    seconds = int(seconds)
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    if h: return f"{h}h {m}m {s}s"
    if m: return f"{m}m {s}s"
    return f"{s}s"

def progress_line(done: int, total: int, elapsed: float) -> str:
    rate = done / elapsed if elapsed > 0 else 0.0
    eta = (total - done) / rate if rate > 0 else 0.0
    return f"{done}/{total} runs | {rate * 60:.2f} runs/min | elapsed {fmt_duration(elapsed)} | ETA {fmt_duration(eta)}"

def env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    try:
        return int(raw) if raw else default
    except ValueError:
        print(f"[WARN] ignoring {name}={raw!r} (not an integer)", file=sys.stderr)
        return default

# ----------------------------- Subcommands -----------------------------
def cmd_generate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out or os.environ.get("TOPOGEN_OUTPUT") or config.output_directory)
    jobs = args.jobs if args.jobs is not None else env_int("TOPOGEN_JOBS", 1)
    runs = len(config.genera) * config.samples_per_genus
    print(f"[INFO] Generating genus {config.genus_range[0]}..{config.genus_range[1]} x "
          f"{config.samples_per_genus} = {runs} runs | resolution={config.voxel_resolution} | "
          f"environment={config.environment.method} | jobs={jobs} | resume={'yes' if args.resume else 'no'} | "
          f"out={out}", flush=True)

    t0 = time.time()

    def on_result(done: int, total: int, run_id: str, status: str) -> None:
        tag = "[OK]" if status == "ok" else "[SKIP]"
        print(f"{tag} {run_id}", flush=True)
        if done % args.log_every == 0 or done == total:
            print(f"[PROGRESS] {progress_line(done, total, time.time() - t0)}", flush=True)

    try:
        manifest = generate_dataset(config, out, jobs=jobs, resume=args.resume, on_result=on_result)
    except GenerationError as e:
        print(f"[ERROR] {e}; see {out / 'failures.jsonl'}", file=sys.stderr)
        return EXIT_FAILURES
    except KeyboardInterrupt:
        print("[INFO] Interrupted by user; finished runs are kept, rerun with --resume.")
        return EXIT_FAILURES

    print(f"[DONE] {len(manifest)} entries, {len(manifest.failures)} failed runs in "
          f"{fmt_duration(time.time() - t0)} -> {manifest.path}", flush=True)
    return EXIT_FAILURES if manifest.failures else EXIT_OK


def cmd_verify(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        print(f"[ERROR] manifest not found: {path}", file=sys.stderr)
        return EXIT_BAD_REQUEST

    t0 = time.time()
    summary = verify_dataset(path)
    for m in summary.missing:
        print(f"[WARN] {m['sample_id']} {m['kind']}: missing {m['path']}")
    for m in summary.mismatches:
        print(f"[ERROR] {m['sample_id']} {m['kind']}: {m['reason']} mismatch", file=sys.stderr)
    print(f"[DONE] checked {summary.checked} entries in {fmt_duration(time.time() - t0)} | "
          f"consistent={summary.consistent_fraction:.4f} | "
          f"label pass clean={summary.label_pass_fraction:.4f} noisy={summary.noisy_label_pass_fraction:.4f}",
          flush=True)
    return EXIT_OK if summary.ok else EXIT_MISMATCH


def cmd_views(args) -> int:
    try:
        written = export_views(args.manifest, args.sample, args.out, count=args.count)
    except SampleNotFoundError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_BAD_REQUEST
    except FileNotFoundError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_BAD_REQUEST
    for p in written:
        print(f"[OK] {p}")
    return EXIT_OK


def cmd_seed_mesh(args) -> int:
    try:
        mesh = make_genus_g_seed(args.genus, SeedParams(subdivisions=args.subdivisions))
    except (ValueError, TopogenError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_BAD_REQUEST
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".ply":
        write_ply(mesh, out)
    else:
        write_obj(mesh, out)
    print(f"[OK] genus {args.genus} seed: {mesh.vertex_count} vertices, {mesh.face_count} faces -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="Topology-labelled 3D shape dataset generator")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="Generate samples and write the manifest.")
    g.add_argument("--config", required=True, help="YAML or JSON dataset config.")
    g.add_argument("--out", help="Output directory (default $TOPOGEN_OUTPUT or config output_directory).")
    g.add_argument("--jobs", type=int, help="Worker processes (default $TOPOGEN_JOBS or 1).")
    g.add_argument("--resume", action="store_true", help="Reuse finished sample directories.")
    g.add_argument("--log-every", type=int, default=10, help="Print a progress line every N runs.")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", help="Recompute Betti numbers and digests against the manifest.")
    v.add_argument("--manifest", required=True, help="manifest.jsonl or the dataset directory.")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("views", help="Export slices, mesh and slice topology for one sample.")
    w.add_argument("--manifest", required=True)
    w.add_argument("--sample", required=True, help="Sample id, e.g. g03-s0001-L4.")
    w.add_argument("--out", help="Output directory (default <dataset>/views/<sample>).")
    w.add_argument("--count", type=int, help="Number of z slices (default: the dataset's view_slices).")
    w.set_defaults(func=cmd_views)

    s = sub.add_parser("seed-mesh", help="Write the genus-g seed surface (.obj or .ply).")
    s.add_argument("--genus", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--subdivisions", type=int, default=0, help="Midpoint subdivisions (0..4).")
    s.set_defaults(func=cmd_seed_mesh)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("TOPOGEN_LOG_LEVEL", "INFO").upper(),
        format="[%(levelname)s] %(message)s",
    )
    args = build_parser().parse_args(argv)
    return args.func(args)

if __name__ == "__main__":
    sys.exit(main())
