# tests/test_storage.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from domain.errors import InvalidInputError
from domain.models import StabilityRecord
from storage.db import Database
from storage.exports import (
    OutputWriter,
    dumps_json,
    pack_paths,
    read_csv,
    sha256_file,
    unpack_paths,
    write_csv,
)
from storage.repos import ArtifactRepo, RunRepo, StabilityRecordRepo

PROV = {"config_hash": "abc123", "seed": 7, "grid": "cells=16,steps=32,stride=8", "code_version": "0.1.0"}


@pytest.fixture
def db(tmp_path):
    d = Database(db_path=str(tmp_path / "ledger.db"))
    d.init_schema()
    yield d
    d.close()


def test_run_lifecycle(db):
    runs = RunRepo(db)
    run = runs.start("simulate", "abc123", 7, "0.1.0")
    assert run.status == "running"
    assert run.seed == 7
    runs.finish(run.id, 0)
    done = runs.get(run.id)
    assert done.status == "ok"
    assert done.exit_code == 0
    assert done.finished_at is not None


def test_failed_run_keeps_message(db):
    runs = RunRepo(db)
    run = runs.start("reconstruct", "def456", 1)
    runs.finish(run.id, 3, "singular jacobian")
    got = runs.get(run.id)
    assert got.status == "failed"
    assert got.message == "singular jacobian"
    assert runs.get("missing") is None


def test_full_range_seed_round_trips(db):
    runs = RunRepo(db)
    seed = 2 ** 64 - 1
    run = runs.start("simulate", "abc123", seed)
    assert runs.get(run.id).seed == seed


def test_runs_filter_by_config_hash(db):
    runs = RunRepo(db)
    runs.start("simulate", "aaa", 1)
    runs.start("simulate", "bbb", 1)
    runs.start("check-geometry", "aaa", 2)
    assert len(runs.list()) == 3
    assert {r.subcommand for r in runs.list("aaa")} == {"simulate", "check-geometry"}


def test_artifacts_and_records(db):
    run = RunRepo(db).start("stability-sweep", "abc123", 7)
    artifacts = ArtifactRepo(db)
    artifacts.add(run.id, "b.csv", "csv", "00")
    artifacts.add(run.id, "a.json", "json", "11")
    assert [a.path for a in artifacts.list_for_run(run.id)] == ["a.json", "b.csv"]

    recs = [
        StabilityRecord(eps_tilde=0.1, d=0.05, d_m=0.04, gamma=3.7, t0=1.0, amplitude=0.02, eps_stderr=0.01),
        StabilityRecord(eps_tilde=0.2, d=0.1, d_m=0.1, gamma=3.7, t0=1.0, amplitude=0.01),
    ]
    repo = StabilityRecordRepo(db)
    assert repo.add_many(run.id, recs) == 2
    back = repo.list_for_run(run.id)
    assert [r.amplitude for r in back] == [0.01, 0.02]
    assert back[1] == recs[0]


def test_init_schema_is_idempotent(tmp_path):
    path = str(tmp_path / "ledger.db")
    first = Database(db_path=path)
    first.init_schema()
    RunRepo(first).start("simulate", "abc", 1)
    first.close()
    again = Database(db_path=path)
    again.init_schema()
    assert len(RunRepo(again).list()) == 1
    again.close()


def test_csv_carries_provenance(tmp_path):
    path = write_csv(str(tmp_path / "energy.csv"), ["t", "mass", "ok"], [(0.0, 1.5, True), (0.5, 0.25, False)], PROV)
    prov, rows = read_csv(path)
    assert prov["config_hash"] == "abc123"
    assert prov["seed"] == "7"
    assert rows[1] == {"t": "0.5", "mass": "0.25", "ok": "false"}
    with open(path, encoding="utf-8") as fh:
        assert fh.readline() == "# code_version=0.1.0\n"


def test_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(InvalidInputError):
        write_csv(str(tmp_path / "bad.csv"), ["a", "b"], [(1,)], PROV)


def test_json_is_clean_and_sorted():
    text = dumps_json({"value": np.float64(1.5), "n": np.int64(3), "bad": float("inf"),
                       "flags": np.array([True, False]), "nan": float("nan")}, PROV)
    data = json.loads(text)
    assert data["value"] == 1.5 and data["n"] == 3
    assert data["bad"] == "inf" and data["nan"] == "nan"
    assert data["flags"] == [True, False]
    assert data["provenance"]["seed"] == 7


def test_path_dump_layout():
    times = np.linspace(0.0, 1.0, 4)
    inc = np.arange(6, dtype=float).reshape(2, 3)
    data = pack_paths(times, inc)
    assert data[:8] == b"MVLBPATH"
    assert int.from_bytes(data[8:16], "little") == 3
    assert int.from_bytes(data[16:24], "little") == 2
    assert len(data) == 24 + 8 * 4 + 8 * 6
    t2, i2 = unpack_paths(data)
    assert np.array_equal(t2, times)
    assert np.array_equal(i2, inc)


def test_path_dump_errors():
    with pytest.raises(InvalidInputError):
        pack_paths(np.linspace(0.0, 1.0, 3), np.zeros((2, 3)))
    data = pack_paths(np.linspace(0.0, 1.0, 3), np.zeros((1, 2)))
    with pytest.raises(InvalidInputError):
        unpack_paths(b"XXXXXXXX" + data[8:])
    with pytest.raises(InvalidInputError):
        unpack_paths(data[:-8])


def test_output_writer_records_files(tmp_path):
    out = tmp_path / "run"
    writer = OutputWriter(str(out), PROV)
    j = writer.json("report.json", {"x": 1})
    c = writer.csv("table.csv", ["a"], [(1,)])
    p = writer.paths("paths.bin", np.linspace(0.0, 1.0, 3), np.zeros((1, 2)))
    assert [k for _, k in writer.written] == ["json", "csv", "paths"]
    assert all(os.path.exists(f) for f in (j, c, p))
    assert not [n for n in os.listdir(out) if n.startswith(".tmp-")]
    assert len(sha256_file(j)) == 64
