import json
from pathlib import Path

import pandas as pd
import pytest

from topogen import pipeline
from topogen.config import load_config
from topogen.errors import GenerationError, SampleNotFoundError
from topogen.pipeline import (
    MANIFEST_NAME,
    export_views,
    generate_dataset,
    read_manifest,
    run_id_for,
    verify_dataset,
)
from topogen.mesh import euler_characteristic
from topogen.meshio import read_obj
from topogen.voxels import read_voxels

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def dataset(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    seen = []
    manifest = generate_dataset(tiny_config, out, on_result=lambda *args: seen.append(args))
    return out, manifest, seen


def test_run_ids():
    assert run_id_for(3, 12) == "g03-s0012"


def test_one_entry_per_run_without_growth(dataset):
    out, manifest, seen = dataset
    assert [e.sample_id for e in manifest] == ["g00-s0000-L0", "g01-s0000-L0"]
    assert [e.genus_label for e in manifest] == [0, 1]
    assert manifest.failures == []
    assert manifest.path == out / MANIFEST_NAME
    assert sorted(s[2] for s in seen) == ["g00-s0000", "g01-s0000"]
    assert all(s[1] == 2 and s[3] == "ok" for s in seen)


def test_files_are_written(dataset):
    out, manifest, _ = dataset
    for e in manifest:
        for key in ("environment", "seed", "trace", "clean_voxels", "voxels", "mesh", "point_cloud"):
            assert (out / e.file_paths[key]).exists(), key
        assert "surface_points" not in e.file_paths
        grid = read_voxels(out / e.file_paths["voxels"])
        assert grid.resolution == 24
    assert json.loads((out / "config.json").read_text())["master_seed"] == 1234
    assert (out / "failures.jsonl").read_text() == ""
    assert not list((out / "samples").glob(".*tmp*"))


def test_entries_carry_labels_and_provenance(dataset):
    _, manifest, _ = dataset
    for e in manifest:
        assert e.verification.expected.as_tuple() == (1, e.genus_label, 0)
        assert set(e.digests) == {"clean_voxels", "voxels"}
        assert set(e.world_transform) == {"origin", "voxel_size"}
        assert e.split in ("train", "test")
        assert e.area_ratio == 1.0
        assert len(e.placement["rotation"]) == 3
        assert e.flags == []


def test_manifest_round_trips(dataset):
    out, manifest, _ = dataset
    assert read_manifest(out / MANIFEST_NAME) == manifest.entries


def test_timings_sidecar(dataset):
    out, manifest, _ = dataset
    df = pd.read_csv(out / "timings.csv")
    assert list(df.columns) == ["sample_id", "run_id", "seconds"]
    assert list(df["sample_id"]) == [e.sample_id for e in manifest]
    assert (df["seconds"] >= 0).all()


def test_same_seed_same_bytes(dataset, tiny_config, tmp_path):
    out, _, _ = dataset
    generate_dataset(tiny_config, tmp_path / "again")
    assert (tmp_path / "again" / MANIFEST_NAME).read_bytes() == (out / MANIFEST_NAME).read_bytes()


def test_worker_count_does_not_change_output(dataset, tiny_config, tmp_path):
    out, _, _ = dataset
    generate_dataset(tiny_config, tmp_path / "pool", jobs=2)
    assert (tmp_path / "pool" / MANIFEST_NAME).read_bytes() == (out / MANIFEST_NAME).read_bytes()


def test_resume_reuses_finished_runs(tiny_config, tmp_path, monkeypatch):
    first = generate_dataset(tiny_config, tmp_path)

    def boom(*args, **kwargs):
        raise AssertionError("run was rebuilt")

    monkeypatch.setattr(pipeline, "_build_run", boom)
    again = generate_dataset(tiny_config, tmp_path, resume=True)
    assert again.entries == first.entries


def test_master_seed_changes_the_data(tiny_config, tmp_path):
    other = generate_dataset(tiny_config.model_copy(update={"master_seed": 99}), tmp_path)
    base = generate_dataset(tiny_config, tmp_path / "base")
    assert [e.rng_subseed for e in other] != [e.rng_subseed for e in base]


def test_every_run_failing_is_an_error(tiny_config, tmp_path):
    config = tiny_config.model_validate(
        {**tiny_config.model_dump(), "placement": {"global_area_target": 1e5, "max_attempts": 2}}
    )
    with pytest.raises(GenerationError, match="every run failed"):
        generate_dataset(config, tmp_path)
    failures = [json.loads(line) for line in (tmp_path / "failures.jsonl").read_text().splitlines()]
    assert [f["run_id"] for f in failures] == ["g00-s0000", "g01-s0000"]
    assert {f["error"] for f in failures} == {"PlacementError"}
    assert (tmp_path / MANIFEST_NAME).read_text() == ""


class TestVerify:

    def test_fresh_dataset_is_consistent(self, dataset):
        out, manifest, _ = dataset
        summary = verify_dataset(out / MANIFEST_NAME)
        assert summary.ok
        assert summary.checked == len(manifest)
        assert summary.consistent_fraction == 1.0
        expected = sum(e.verification.passed for e in manifest) / len(manifest)
        assert summary.label_pass_fraction == expected
        df = pd.read_csv(out / "verification_summary.csv")
        assert len(df) == 2 * len(manifest)
        assert df["consistent"].all()

    def test_flipped_bit_is_caught(self, tiny_config, tmp_path):
        manifest = generate_dataset(tiny_config, tmp_path)
        path = tmp_path / manifest[0].file_paths["voxels"]
        data = bytearray(path.read_bytes())
        data[-1] ^= 0x01
        path.write_bytes(bytes(data))
        summary = verify_dataset(tmp_path / MANIFEST_NAME)
        assert not summary.ok
        assert summary.mismatches == [{"sample_id": manifest[0].sample_id, "kind": "voxels", "reason": "digest"}]

    def test_missing_file_is_listed(self, tiny_config, tmp_path):
        manifest = generate_dataset(tiny_config, tmp_path)
        (tmp_path / manifest[1].file_paths["clean_voxels"]).unlink()
        summary = verify_dataset(tmp_path / MANIFEST_NAME)
        assert not summary.ok
        assert [m["kind"] for m in summary.missing] == ["clean_voxels"]
        assert summary.consistent_fraction == 0.75

    def test_label_pass_is_recomputed(self, tiny_config, tmp_path):
        manifest = generate_dataset(tiny_config, tmp_path)
        honest = verify_dataset(tmp_path / MANIFEST_NAME)
        lines = []
        for line in (tmp_path / MANIFEST_NAME).read_text().splitlines():
            doc = json.loads(line)
            for report in ("verification", "noisy_verification"):
                doc[report]["passed"] = not doc[report]["passed"]
            lines.append(json.dumps(doc))
        (tmp_path / MANIFEST_NAME).write_text("\n".join(lines) + "\n")

        tampered = verify_dataset(tmp_path / MANIFEST_NAME)
        assert tampered.ok
        assert tampered.label_pass_fraction == honest.label_pass_fraction
        assert tampered.noisy_label_pass_fraction == honest.noisy_label_pass_fraction
        clean = sum(e.verification.actual == e.verification.expected for e in manifest)
        assert tampered.label_pass_fraction == clean / len(manifest)
        df = pd.read_csv(tmp_path / "verification_summary.csv")
        assert df["label_passed"].sum() == clean + sum(
            e.noisy_verification.actual == e.noisy_verification.expected for e in manifest
        )


class TestViews:

    def test_export(self, dataset, tmp_path):
        out, manifest, _ = dataset
        paths = export_views(out / MANIFEST_NAME, manifest[1].sample_id, tmp_path)
        pgms = [p for p in paths if p.suffix == ".pgm"]
        assert len(pgms) == 5
        assert [p.name for p in pgms] == ["slice_z0004.pgm", "slice_z0008.pgm", "slice_z0012.pgm", "slice_z0015.pgm", "slice_z0019.pgm"]
        assert (tmp_path / "mesh.obj").exists()
        slices = json.loads((tmp_path / "slices.json").read_text())
        assert [s["index"] for s in slices] == [4, 8, 12, 15, 19]

    def test_default_location(self, dataset):
        out, manifest, _ = dataset
        export_views(out / MANIFEST_NAME, manifest[0].sample_id, count=2)
        assert len(list((out / "views" / manifest[0].sample_id).glob("*.pgm"))) == 2

    def test_unknown_sample(self, dataset):
        out, _, _ = dataset
        with pytest.raises(SampleNotFoundError):
            export_views(out / MANIFEST_NAME, "g99-s0000-L0")

    def test_count_defaults_to_view_slices(self, tiny_config, tmp_path):
        config = tiny_config.model_copy(update={"view_slices": 3})
        manifest = generate_dataset(config, tmp_path / "data")
        paths = export_views(tmp_path / "data" / MANIFEST_NAME, manifest[0].sample_id, tmp_path / "views")
        assert len([p for p in paths if p.suffix == ".pgm"]) == 3
        assert pipeline.dataset_view_slices(tmp_path / "data") == 3
        assert pipeline.dataset_view_slices(tmp_path / "elsewhere") == 5


@pytest.mark.slow
def test_desk_run_reaches_every_level(tmp_path):
    config = load_config(ROOT / "config" / "desk.yaml")
    assert config.displacement.enabled
    entries = pipeline.generate_run(config, 3, 0, tmp_path)
    assert [e.complexity_level for e in entries] == list(range(6))
    ratios = [e.area_ratio for e in entries]
    assert ratios == sorted(ratios)
    assert abs(ratios[-1] - 3.0) <= 0.02 * 3.0
    for e in entries:
        assert e.target_area_multiplier == 3.0
        assert e.verification.actual.as_tuple() == (1, 3, 0)
        assert e.verification.passed
        assert e.flags == []
        mesh = read_obj(tmp_path / e.file_paths["mesh"])
        assert euler_characteristic(mesh) == -4
