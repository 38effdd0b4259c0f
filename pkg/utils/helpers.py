# utils/helpers.py
import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

PACKAGE_VERSION = '0.1.0'


def format_value(value: Any) -> str:
    """Rappresentazione deterministica: repr per i float, così le CSV sono byte-identiche"""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return 'nan' if math.isnan(value) else repr(value)
    if hasattr(value, 'item'):
        return format_value(value.item())
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]],
              out: Optional[Union[str, Path]] = None) -> str:
    """Scrive la CSV su file, o su stdout se out è vuoto; restituisce il testo"""
    text = render_csv(header, rows)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding='utf-8')
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    return text


def manifest_path(out: Union[str, Path]) -> Path:
    return Path(f"{out}.manifest.json")


def write_manifest(out: Union[str, Path], command: str, config: Dict[str, Any],
                   table_checksum: Optional[str] = None, seed: Optional[int] = None,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """Manifest accanto alla CSV: comando, config, versione, checksum della tabella usata"""
    manifest = {
        'command': command,
        'version': version_string(),
        'config': config,
        'table_checksum': table_checksum,
        'seed': seed,
    }
    if extra:
        manifest.update(extra)
    path = manifest_path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + '\n', encoding='utf-8')
    return path


def version_string() -> str:
    """`git describe` se disponibile, altrimenti la versione del pacchetto"""
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty', '--tags'],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).resolve().parent.parent,
        )
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return PACKAGE_VERSION
