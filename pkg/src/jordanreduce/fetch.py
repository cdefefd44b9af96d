"""Download QAPLib instances into a local cache, checked against the pinned manifest."""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
import urllib.error
import urllib.request
from pathlib import Path

from .io import qaplib_hash, qaplib_manifest, vendored_qaplib

log = logging.getLogger(__name__)

CACHE_ENV = "JORDANREDUCE_CACHE"


class FetchError(RuntimeError):
    pass


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "jordanreduce" / "qaplib"


def _check(name: str, text: str, entry: dict) -> None:
    got = qaplib_hash(text)
    if got != entry["sha256"]:
        raise FetchError(f"{name}: checksum mismatch (got {got[:12]}..., expected {entry['sha256'][:12]}...)")


def _store(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def fetch_qaplib(name: str, url_base: str | None = None, cache_dir=None, offline: bool = False,
                 manifest: dict | None = None, timeout: float = 30.0, use_vendored: bool = True) -> Path:
    """Path to a checksum-verified copy of instance ``name`` in the cache.

    A valid cached copy is returned without touching the network.  Otherwise
    the vendored copy (if any) seeds the cache, and failing that the file is
    downloaded from ``url_base`` or the manifest mirrors in turn.  With
    ``offline`` only the cache and the vendored copies are used.
    """
    manifest = manifest or qaplib_manifest()
    entry = manifest["instances"].get(name)
    if entry is None:
        raise FetchError(f"{name!r} is not in the instance manifest")
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = cache / f"{name}.dat"
    if path.is_file():
        try:
            _check(name, path.read_text(), entry)
            return path
        except FetchError:
            log.warning("discarding corrupt cached copy %s", path)
            path.unlink()
    local = vendored_qaplib(name) if use_vendored else None
    if local is not None:
        text = local.read_text()
        _check(name, text, entry)
        path.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(local, path)
        return path
    if offline:
        raise FetchError(f"{name} is not cached and offline mode is on")
    bases = [url_base] if url_base else list(manifest.get("mirrors", []))
    errors = []
    for base in bases:
        url = base.rstrip("/") + f"/{name}.dat"
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                text = resp.read().decode("ascii", errors="replace")
        except (urllib.error.URLError, OSError) as exc:
            errors.append(f"{url}: {exc}")
            continue
        try:
            _check(name, text, entry)
        except FetchError as exc:
            errors.append(f"{url}: {exc}")
            continue
        _store(path, text)
        return path
    raise FetchError(f"could not fetch {name}: " + "; ".join(errors))
