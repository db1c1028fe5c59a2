# storage/repos.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import time
import uuid
from dataclasses import dataclass
from typing import Iterable, List, Optional

from domain.models import StabilityRecord
from storage.db import Database


def _now_ts() -> int:
    return int(time.time())


@dataclass
class Run:
    id: str
    subcommand: str
    config_hash: str
    seed: int
    status: str
    created_at: int = 0
    finished_at: Optional[int] = None
    exit_code: Optional[int] = None
    code_version: str = ""
    message: str = ""


def _run(row) -> Run:
    # seeds span the full uint64 range, stored as text
    d = dict(row)
    d["seed"] = int(d["seed"])
    return Run(**d)


@dataclass
class Artifact:
    id: str
    run_id: str
    path: str
    kind: str
    sha256: str
    created_at: int = 0


class RunRepo:
    def __init__(self, db: Database):
        self.db = db

    def start(self, subcommand: str, config_hash: str, seed: int, code_version: str = "") -> Run:
        rid = str(uuid.uuid4())
        self.db.conn.execute(
            """
            INSERT INTO runs(id, subcommand, config_hash, seed, status, created_at, code_version)
            VALUES(?,?,?,?,?,?,?)
            """,
            (rid, subcommand, config_hash, str(int(seed)), "running", _now_ts(), code_version),
        )
        self.db.conn.commit()
        return self.get(rid)

    def finish(self, run_id: str, exit_code: int, message: str = "") -> None:
        status = "ok" if exit_code == 0 else "failed"
        self.db.conn.execute(
            "UPDATE runs SET status=?, exit_code=?, finished_at=?, message=? WHERE id=?",
            (status, int(exit_code), _now_ts(), message or "", run_id),
        )
        self.db.conn.commit()

    def get(self, run_id: str) -> Optional[Run]:
        r = self.db.conn.execute(
            """
            SELECT id, subcommand, config_hash, seed, status, created_at,
                   finished_at, exit_code, code_version, message
            FROM runs WHERE id=?
            """,
            (run_id,),
        ).fetchone()
        return _run(r) if r else None

    def list(self, config_hash: Optional[str] = None) -> List[Run]:
        if config_hash:
            rows = self.db.conn.execute(
                """
                SELECT id, subcommand, config_hash, seed, status, created_at,
                       finished_at, exit_code, code_version, message
                FROM runs WHERE config_hash=? ORDER BY created_at, id
                """,
                (config_hash,),
            ).fetchall()
        else:
            rows = self.db.conn.execute(
                """
                SELECT id, subcommand, config_hash, seed, status, created_at,
                       finished_at, exit_code, code_version, message
                FROM runs ORDER BY created_at, id
                """
            ).fetchall()
        return [_run(r) for r in rows]


class ArtifactRepo:
    def __init__(self, db: Database):
        self.db = db

    def add(self, run_id: str, path: str, kind: str, sha256: str) -> Artifact:
        aid = str(uuid.uuid4())
        ts = _now_ts()
        self.db.conn.execute(
            "INSERT INTO artifacts(id, run_id, path, kind, sha256, created_at) VALUES(?,?,?,?,?,?)",
            (aid, run_id, path, kind, sha256, ts),
        )
        self.db.conn.commit()
        return Artifact(aid, run_id, path, kind, sha256, ts)

    def list_for_run(self, run_id: str) -> List[Artifact]:
        rows = self.db.conn.execute(
            """
            SELECT id, run_id, path, kind, sha256, created_at
            FROM artifacts WHERE run_id=? ORDER BY path
            """,
            (run_id,),
        ).fetchall()
        return [Artifact(**dict(r)) for r in rows]


class StabilityRecordRepo:
    def __init__(self, db: Database):
        self.db = db

    def add_many(self, run_id: str, records: Iterable[StabilityRecord]) -> int:
        rows = [
            (str(uuid.uuid4()), run_id, r.amplitude, r.t0, r.eps_tilde, r.eps_stderr, r.d, r.d_m, r.gamma)
            for r in records
        ]
        self.db.conn.executemany(
            """
            INSERT INTO stability_records(
                id, run_id, amplitude, t0, eps_tilde, eps_stderr, d, d_m, gamma
            )
            VALUES(?,?,?,?,?,?,?,?,?)
            """,
            rows,
        )
        self.db.conn.commit()
        return len(rows)

    def list_for_run(self, run_id: str) -> List[StabilityRecord]:
        rows = self.db.conn.execute(
            """
            SELECT eps_tilde, d, d_m, gamma, t0, amplitude, eps_stderr
            FROM stability_records WHERE run_id=? ORDER BY amplitude, t0
            """,
            (run_id,),
        ).fetchall()
        return [StabilityRecord(**dict(r)) for r in rows]
