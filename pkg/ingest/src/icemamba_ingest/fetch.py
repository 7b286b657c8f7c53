"""Resumable archive download with a checksum record.

Supports http(s) URLs plus file:// URLs (used by tests and for pre-staged
archives). Partial downloads live under a ".part" suffix so an interrupted
file is never mistaken for a complete one; completed files are recorded in
checksums.json and verified on rerun instead of re-downloaded.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

from .errors import FetchError
from .manifest import SourceManifest

RECORD_NAME = "checksums.json"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_record(dest: Path) -> dict:
    record = dest / RECORD_NAME
    if record.exists():
        return json.loads(record.read_text(encoding="utf-8"))
    return {}


def _save_record(dest: Path, record: dict) -> None:
    (dest / RECORD_NAME).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _download(url: str, target: Path) -> None:
    part = target.with_suffix(target.suffix + ".part")
    parsed = urllib.parse.urlparse(url)
    try:
        if parsed.scheme == "file":
            shutil.copyfile(urllib.request.url2pathname(parsed.path), part)
        else:
            request = urllib.request.Request(url)
            offset = part.stat().st_size if part.exists() else 0
            mode = "wb"
            if offset:
                request.add_header("Range", f"bytes={offset}-")
                mode = "ab"
            with urllib.request.urlopen(request) as resp, open(part, mode) as out:
                if offset and resp.status != 206:
                    out.seek(0)
                    out.truncate()
                shutil.copyfileobj(resp, out)
    except urllib.error.HTTPError as exc:
        if exc.code in (401, 403):
            raise FetchError(f"authentication failed for {url} (HTTP {exc.code})") from exc
        raise FetchError(f"download failed for {url}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"download failed for {url}: {exc}") from exc
    part.replace(target)


def fetch(manifest: SourceManifest, dest_dir, expected: dict[str, str] | None = None) -> list[Path]:
    """Download every manifest URL into dest_dir; returns the local paths.

    `expected` optionally maps file names to known sha256 digests; a digest
    mismatch is an error and the offending file is renamed *.corrupt.
    """
    if not manifest.urls:
        raise FetchError(f"{manifest.dataset}: manifest lists no URLs for {manifest.start}..{manifest.end}")
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    record = _load_record(dest)
    fetched = []
    for url in manifest.urls:
        name = Path(urllib.parse.urlparse(url).path).name
        target = dest / name
        if target.exists() and record.get(name) == _sha256(target):
            fetched.append(target)
            continue
        _download(url, target)
        digest = _sha256(target)
        if expected and name in expected and expected[name] != digest:
            target.rename(target.with_suffix(target.suffix + ".corrupt"))
            raise FetchError(f"checksum mismatch for {name}: got {digest[:12]}..")
        record[name] = digest
        _save_record(dest, record)
        fetched.append(target)
    return fetched
