#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sqlite3


class Database:
    """Run ledger: one row per CLI run, its artifacts and stability records."""

    def __init__(self, db_path: str = "movlab.db"):
        self.db_path = db_path
        self.conn = sqlite3.connect(self.db_path)
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA foreign_keys = ON;")

    def _table_exists(self, name: str) -> bool:
        r = self.conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' AND name=?",
            (name,),
        ).fetchone()
        return bool(r)

    def _cols(self, table: str):
        try:
            return [
                r["name"]
                for r in self.conn.execute(f"PRAGMA table_info({table});").fetchall()
            ]
        except Exception:
            return []

    def init_schema(self):
        cur = self.conn.cursor()

        # --- runs ---
        cur.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id TEXT PRIMARY KEY,
                subcommand TEXT NOT NULL,
                config_hash TEXT NOT NULL,
                seed TEXT NOT NULL,
                status TEXT NOT NULL,
                created_at INTEGER NOT NULL,
                finished_at INTEGER,
                exit_code INTEGER,
                code_version TEXT NOT NULL DEFAULT '',
                message TEXT NOT NULL DEFAULT ''
            );
        """)

        # runs migrations (ledgers written before these columns existed)
        cols = self._cols("runs")
        if "code_version" not in cols:
            cur.execute(
                "ALTER TABLE runs ADD COLUMN code_version TEXT NOT NULL DEFAULT '';"
            )
        if "message" not in cols:
            cur.execute("ALTER TABLE runs ADD COLUMN message TEXT NOT NULL DEFAULT '';")
        if "exit_code" not in cols:
            cur.execute("ALTER TABLE runs ADD COLUMN exit_code INTEGER;")

        # --- artifacts ---
        cur.execute("""
            CREATE TABLE IF NOT EXISTS artifacts (
                id TEXT PRIMARY KEY,
                run_id TEXT NOT NULL,
                path TEXT NOT NULL,
                kind TEXT NOT NULL,
                sha256 TEXT NOT NULL,
                created_at INTEGER NOT NULL,
                FOREIGN KEY(run_id) REFERENCES runs(id) ON DELETE CASCADE
            );
        """)

        # --- stability records ---
        cur.execute("""
            CREATE TABLE IF NOT EXISTS stability_records (
                id TEXT PRIMARY KEY,
                run_id TEXT NOT NULL,
                amplitude REAL NOT NULL,
                t0 REAL NOT NULL,
                eps_tilde REAL NOT NULL,
                eps_stderr REAL NOT NULL DEFAULT 0,
                d REAL NOT NULL,
                d_m REAL NOT NULL,
                gamma REAL NOT NULL,
                FOREIGN KEY(run_id) REFERENCES runs(id) ON DELETE CASCADE
            );
        """)
        scols = self._cols("stability_records")
        if "eps_stderr" not in scols:
            cur.execute(
                "ALTER TABLE stability_records ADD COLUMN eps_stderr REAL NOT NULL DEFAULT 0;"
            )

        # --- indexes ---
        cur.execute("CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs(config_hash);")
        cur.execute(
            "CREATE INDEX IF NOT EXISTS idx_artifacts_run ON artifacts(run_id);"
        )
        cur.execute(
            "CREATE INDEX IF NOT EXISTS idx_stability_run ON stability_records(run_id);"
        )

        self.conn.commit()

    def close(self):
        try:
            self.conn.close()
        except Exception:
            pass
