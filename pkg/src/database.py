"""Database operations for the run ledger."""

import sqlite3
from datetime import datetime, timezone

from .config import DB_PATH

COLUMNS = ("id", "sweep", "label", "mode", "status", "summary", "error", "started_at", "finished_at")


def _connect(db_path: str | None = None):
    return sqlite3.connect(db_path or DB_PATH)


def init_db(db_path: str | None = None):
    """Create the runs table if it doesn't exist."""
    conn = _connect(db_path)
    cur = conn.cursor()
    cur.execute(
        """
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            sweep TEXT,
            label TEXT NOT NULL,
            mode TEXT NOT NULL,
            status TEXT NOT NULL,
            summary TEXT,
            error TEXT,
            started_at TEXT NOT NULL,
            finished_at TEXT
        )
        """
    )
    conn.commit()
    conn.close()


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def record_run(
    label: str,
    mode: str,
    status: str,
    started_at: str,
    summary: str | None = None,
    error: str | None = None,
    sweep: str | None = None,
    finished_at: str | None = None,
    db_path: str | None = None,
) -> int:
    """Insert one finished run (or sweep point) and return its id."""
    conn = _connect(db_path)
    cur = conn.cursor()
    cur.execute(
        "INSERT INTO runs (sweep, label, mode, status, summary, error, started_at, finished_at) "
        "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
        (sweep, label, mode, status, summary, error, started_at, finished_at or now_iso()),
    )
    run_id = cur.lastrowid
    conn.commit()
    conn.close()
    return run_id


def list_runs(sweep: str | None = None, status: str | None = None, db_path: str | None = None) -> list[tuple]:
    """All runs, oldest first, optionally filtered by sweep and status."""
    conn = _connect(db_path)
    cur = conn.cursor()
    query = f"SELECT {', '.join(COLUMNS)} FROM runs"
    conditions, params = [], []
    if sweep is not None:
        conditions.append("sweep = ?")
        params.append(sweep)
    if status is not None:
        conditions.append("status = ?")
        params.append(status)
    if conditions:
        query += " WHERE " + " AND ".join(conditions)
    cur.execute(query + " ORDER BY id", params)
    rows = cur.fetchall()
    conn.close()
    return rows


def get_run(run_id: int, db_path: str | None = None):
    conn = _connect(db_path)
    cur = conn.cursor()
    cur.execute(f"SELECT {', '.join(COLUMNS)} FROM runs WHERE id = ?", (run_id,))
    row = cur.fetchone()
    conn.close()
    return row
