"""Rebuild ``data/adult.csv`` from the UCI Adult files.

The raw ``adult.data`` / ``adult.test`` pair (48,842 rows) is read either from
a local directory or from the copy bundled inside the ``responsibly`` wheel on
PyPI, and written as one headed CSV. Missing cells keep their ``?`` marker so
that dropping incomplete rows stays the loader's job.

    python scripts/fetch_adult.py                  # download wheel via pip
    python scripts/fetch_adult.py --raw-dir DIR    # DIR holds adult.data/.test
"""

from __future__ import annotations

import argparse
import csv
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]
WHEEL_MEMBER = "responsibly/dataset/adult/{}"


def _rows(text: str):
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(COLUMNS):
            continue
        # test-file labels carry a trailing period (">50K.")
        cells[-1] = cells[-1].rstrip(".")
        yield cells


def _read_raw(raw_dir: Path | None) -> tuple[str, str]:
    if raw_dir is not None:
        return ((raw_dir / "adult.data").read_text(), (raw_dir / "adult.test").read_text())
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "responsibly==0.1.2", "-d", tmp],
            check=True,
        )
        wheel = glob.glob(str(Path(tmp) / "responsibly-*.whl"))[0]
        with zipfile.ZipFile(wheel) as zf:
            return (
                zf.read(WHEEL_MEMBER.format("adult.data")).decode(),
                zf.read(WHEEL_MEMBER.format("adult.test")).decode(),
            )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--raw-dir", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data" / "adult.csv")
    args = parser.parse_args(argv)

    train, test = _read_raw(args.raw_dir)
    rows = list(_rows(train)) + list(_rows(test))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
