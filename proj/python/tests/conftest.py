import sys
from pathlib import Path

# Make both the python package and a build-tree extension importable when the
# project has not been pip-installed.
_root = Path(__file__).resolve().parents[2]
for candidate in [
    _root / "python",
    _root / "build" / "bindings",
    _root / "build-python" / "bindings",
]:
    if candidate.is_dir():
        sys.path.insert(0, str(candidate))
