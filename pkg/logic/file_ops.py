"""
File operations: atomic writes, hash verification and input checks.
"""

import hashlib
import os
import tempfile
from pathlib import Path

from logic.errors import InputPathError


def format_file_size(size_bytes):
    """Format file size in human readable format"""
    if size_bytes == 0:
        return "0 B"
    for unit in ['B', 'KB', 'MB', 'GB']:
        if size_bytes < 1024.0:
            return f"{size_bytes:.1f} {unit}"
        size_bytes /= 1024.0
    return f"{size_bytes:.1f} TB"


def calculate_text_hash(text):
    """SHA-256 of UTF-8 encoded text"""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class FileOperations:
    """Handles file operations for the application"""

    def __init__(self, app):
        self.app = app

    def calculate_file_hash(self, filepath):
        """Calculate SHA-256 hash of a file"""
        sha256 = hashlib.sha256()
        with open(filepath, 'rb') as f:
            for block in iter(lambda: f.read(4096), b''):
                sha256.update(block)
        return sha256.hexdigest()

    def require_file(self, path):
        """Return path as a Path, raising InputPathError when it does not exist"""
        if path is None:
            raise InputPathError("<missing>")
        path = Path(path)
        if not path.is_file():
            raise InputPathError(path)
        return path

    def ensure_dir(self, path):
        """Create a directory (and parents) if needed"""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def atomic_write_text(self, path, text):
        """Write text through a temp file in the same directory, then rename

        Returns the SHA-256 digest of the written content after verifying it.
        """
        path = Path(path)
        self.ensure_dir(path.parent if str(path.parent) else Path("."))
        fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(temp_name, path)
        except BaseException:
            try:
                os.remove(temp_name)
            except OSError:
                pass
            raise

        expected = calculate_text_hash(text)
        if not self.verify_file_hash(path, expected):
            raise OSError(f"written file does not match its content: {path}")
        self.app.log_message(f"💾 Wrote {path} ({format_file_size(path.stat().st_size)})")
        return expected

    def verify_file_hash(self, path, expected_digest):
        """Verify that a file on disk has the expected SHA-256 digest"""
        actual = self.calculate_file_hash(path)
        if actual != expected_digest:
            self.app.log_message(f"❌ Hash mismatch: {actual} != {expected_digest}")
            return False
        return True
