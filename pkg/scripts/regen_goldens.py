#!/usr/bin/env python3
"""Regenerate the pinned end-to-end golden files under tests/golden/.

Run from the repository root after an intentional format or fixture
change, then re-run the test suite: the acceptance tests verify the
regenerated values against independent brute-force oracles before
trusting them.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from e2e_fixture import GOLDEN_ARTIFACTS, golden_dir, run_pipeline  # noqa: E402


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        artifacts = run_pipeline(tmp_path / "fixture", tmp_path / "work")
        out = golden_dir()
        out.mkdir(parents=True, exist_ok=True)
        for name in GOLDEN_ARTIFACTS:
            src = artifacts[name]
            dest = out / f"{name}{src.suffix}"
            shutil.copyfile(src, dest)
            print(f"wrote {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
