"""Download the benchmark datasets into a local data directory.

The UCI and MNIST hosts are often unreachable from sandboxed machines, so the
raw files are pulled from two PyPI distributions that vendor them verbatim:

* ``keel-ds`` ships the KEEL copies of *titanic* (2201 rows, 3 features,
  labels in {-1, 1}) and *spambase* (4597 rows, 57 features, labels in {0, 1}).
* ``MNIST_dir`` ships the four canonical IDX files.

UCI tables are rewritten as comma-separated files with a header row and a
``label`` column in {0, 1}; IDX files are stored gzip-compressed.
"""

from __future__ import annotations

import argparse
import gzip
import io
import json
import logging
import tarfile
import urllib.request
import zipfile
from pathlib import Path

logger = logging.getLogger(__name__)

PYPI_JSON = "https://pypi.org/pypi/{name}/json"

KEEL_DIST = ("keel-ds", "0.2.5")
MNIST_DIST = ("mnist-dir", "0.2")

UCI_MEMBERS = {
    "titanic": "keel_ds/data/balanced/raw/titanic.dat",
    "spambase": "keel_ds/data/balanced/raw/spambase.dat",
}
MNIST_MEMBERS = (
    "train-images.idx3-ubyte",
    "train-labels.idx1-ubyte",
    "t10k-images.idx3-ubyte",
    "t10k-labels.idx1-ubyte",
)


def _release_url(name: str, version: str, kind: str) -> str:
    with urllib.request.urlopen(PYPI_JSON.format(name=name), timeout=60) as resp:
        meta = json.load(resp)
    for entry in meta["releases"].get(version, []):
        if entry["packagetype"] == kind:
            return entry["url"]
    raise RuntimeError(f"no {kind} file for {name}=={version}")


def _download(url: str) -> bytes:
    logger.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=600) as resp:
        return resp.read()


def keel_to_csv(raw: str) -> str:
    """Convert a headerless KEEL table (last column = class) to labelled CSV."""
    rows = []
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        cells = [c.strip() for c in line.split(",")]
        label = float(cells[-1])
        rows.append(cells[:-1] + ["1" if label > 0 else "0"])
    width = len(rows[0]) - 1
    header = ",".join([f"x{j}" for j in range(width)] + ["label"])
    return "\n".join([header] + [",".join(r) for r in rows]) + "\n"


def fetch_uci(data_dir: Path) -> list[Path]:
    wheel = _download(_release_url(*KEEL_DIST, kind="bdist_wheel"))
    written = []
    with zipfile.ZipFile(io.BytesIO(wheel)) as zf:
        for name, member in UCI_MEMBERS.items():
            out = data_dir / f"{name}.csv"
            out.write_text(keel_to_csv(zf.read(member).decode()))
            written.append(out)
    return written


def fetch_mnist(data_dir: Path) -> list[Path]:
    sdist = _download(_release_url(*MNIST_DIST, kind="sdist"))
    mnist_dir = data_dir / "mnist"
    mnist_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with tarfile.open(fileobj=io.BytesIO(sdist), mode="r:gz") as tf:
        members = {Path(m.name).name: m for m in tf.getmembers() if not Path(m.name).name.startswith("._")}
        for fname in MNIST_MEMBERS:
            payload = tf.extractfile(members[fname]).read()
            out = mnist_dir / f"{fname}.gz"
            with gzip.open(out, "wb") as fh:
                fh.write(payload)
            written.append(out)
    return written


def fetch_all(data_dir: str | Path, *, skip_existing: bool = True) -> list[Path]:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not (skip_existing and all((data_dir / f"{n}.csv").exists() for n in UCI_MEMBERS)):
        written += fetch_uci(data_dir)
    if not (skip_existing and all((data_dir / "mnist" / f"{m}.gz").exists() for m in MNIST_MEMBERS)):
        written += fetch_mnist(data_dir)
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--force", action="store_true", help="re-download files already present")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for path in fetch_all(args.data_dir, skip_existing=not args.force):
        print(path)


if __name__ == "__main__":
    main()
