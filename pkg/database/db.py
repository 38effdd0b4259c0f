import json
import os
import sqlite3
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional

from utils.logger import logger


class ResultsDatabase:
    def __init__(self, db_path: str = 'database/runs.db'):
        """Inizializza il registro delle esecuzioni e crea le tabelle necessarie"""
        self.logger = logger.getChild('database')
        directory = os.path.dirname(db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.db_path = db_path
        self._initialize_db()

    def get_connection(self) -> sqlite3.Connection:
        """Restituisce una connessione con righe come dizionari"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = lambda cursor, row: {
            col[0]: row[idx] for idx, col in enumerate(cursor.description)
        }
        return conn

    def _initialize_db(self) -> None:
        """Crea le tabelle se non esistono"""
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute("PRAGMA foreign_keys = ON")

                # Un'esecuzione per comando lanciato
                cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    config TEXT DEFAULT '{}',
                    table_checksum TEXT,
                    version TEXT,
                    seed INTEGER,
                    output TEXT,
                    created TEXT
                )
                ''')

                # Celle delle griglie di esperimenti
                cursor.execute('''
                CREATE TABLE IF NOT EXISTS grid_cells (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER,
                    prior TEXT,
                    alpha REAL,
                    gamma REAL,
                    c REAL,
                    seed TEXT,
                    test_accuracy REAL,
                    sparsity REAL,
                    pruned_accuracy REAL,
                    status TEXT,
                    FOREIGN KEY (run_id) REFERENCES runs(run_id) ON DELETE CASCADE
                )
                ''')

                conn.commit()
                self.logger.info("Database inizializzato")

        except Exception as e:
            self.logger.error(f"Errore inizializzazione database: {e}")
            raise

    def record_run(self, command: str, config: Dict[str, Any], table_checksum: Optional[str] = None,
                   version: str = '', seed: Optional[int] = None, output: str = '') -> Optional[int]:
        """Registra un'esecuzione e ne restituisce l'id (None se fallisce)"""
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute(
                    "INSERT INTO runs (command, config, table_checksum, version, seed, output, created) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (command, json.dumps(config, sort_keys=True, default=str), table_checksum, version,
                     seed, output, datetime.now().isoformat())
                )
                conn.commit()
                return cursor.lastrowid
        except Exception as e:
            self.logger.error(f"Errore registrazione esecuzione {command}: {e}")
            return None

    def add_grid_cells(self, run_id: int, rows: Iterable[Dict[str, Any]]) -> bool:
        """Salva le righe di una griglia collegate all'esecuzione"""
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.executemany(
                    "INSERT INTO grid_cells (run_id, prior, alpha, gamma, c, seed, test_accuracy, sparsity, "
                    "pruned_accuracy, status) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    [(run_id, r['prior'], r['alpha'], r['gamma'], r['c'], str(r['seed']), r['test_accuracy'],
                      r['sparsity'], r['pruned_accuracy'], r['status']) for r in rows]
                )
                conn.commit()
                return True
        except Exception as e:
            self.logger.error(f"Errore salvataggio celle per run {run_id}: {e}")
            return False

    def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,))
                row = cursor.fetchone()
                if row:
                    row['config'] = json.loads(row['config'] or '{}')
                return row
        except Exception as e:
            self.logger.error(f"Errore lettura run {run_id}: {e}")
            return None

    def get_recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        """Ultime esecuzioni, dalla più recente"""
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM runs ORDER BY run_id DESC LIMIT ?", (limit,))
                return cursor.fetchall()
        except Exception as e:
            self.logger.error(f"Errore lettura esecuzioni recenti: {e}")
            return []

    def get_grid_cells(self, run_id: int) -> List[Dict[str, Any]]:
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM grid_cells WHERE run_id = ? ORDER BY id", (run_id,))
                return cursor.fetchall()
        except Exception as e:
            self.logger.error(f"Errore lettura celle per run {run_id}: {e}")
            return []
