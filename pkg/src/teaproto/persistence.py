"""Atomic, advisory-locked manifest files."""
from __future__ import annotations

import contextlib
import fcntl
import os
import tempfile
from pathlib import Path
from typing import Any, Iterator

from . import canonical
from .errors import PersistenceError, ProtocolError


@contextlib.contextmanager
def file_lock(path: str | os.PathLike, shared: bool = False) -> Iterator[None]:
    """Advisory lock on ``<path>.lock``; serializes writers across processes."""
    lock_path = Path(str(path) + ".lock")
    try:
        lock_path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(lock_path, os.O_RDWR | os.O_CREAT, 0o644)
    except OSError as exc:
        raise PersistenceError(f"cannot open lock {lock_path}: {exc}") from exc
    try:
        fcntl.flock(fd, fcntl.LOCK_SH if shared else fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def fsync_dir(directory: str | os.PathLike) -> None:
    """Make completed renames inside ``directory`` durable."""
    try:
        dir_fd = os.open(directory, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
    except OSError as exc:
        raise PersistenceError(f"cannot sync {directory}: {exc}") from exc


def atomic_write(path: str | os.PathLike, data: bytes, sync_dir: bool = True) -> None:
    """Write temp file, fsync, rename. Readers see the old or the new file, never a mix.

    Callers writing a batch into one directory may pass ``sync_dir=False`` and
    call :func:`fsync_dir` once at the end.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with file_lock(path):
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
            except BaseException:
                with contextlib.suppress(OSError):
                    os.unlink(tmp)
                raise
            if sync_dir:
                fsync_dir(path.parent)
    except PersistenceError:
        raise
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def write_manifest(path: str | os.PathLike, value: Any, sync_dir: bool = True) -> None:
    atomic_write(path, canonical.encode_bytes(value), sync_dir)


def read_bytes(path: str | os.PathLike) -> bytes:
    path = Path(path)
    try:
        with file_lock(path, shared=True):
            return path.read_bytes()
    except FileNotFoundError:
        raise PersistenceError(f"no such file: {path}") from None
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc


def read_manifest(path: str | os.PathLike) -> Any:
    try:
        return canonical.decode(read_bytes(path))
    except ProtocolError as exc:
        raise PersistenceError(f"corrupt manifest {path}: {exc}") from exc
