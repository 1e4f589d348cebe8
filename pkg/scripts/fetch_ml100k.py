"""Place MovieLens 100K ratings at data/ml-100k/u.data.

Tries the GroupLens archive first. If that host is unreachable, falls back
to the copy of the same file bundled in the ``recbole`` wheel (fetched with
``pip download``), dropping its header line.
"""

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=60) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "120",
                        "-d", tmp, "recbole"], check=True, capture_output=True)
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read("recbole/dataset_example/ml-100k/ml-100k.inter")
    lines = text.decode("utf-8").splitlines()
    return ("\n".join(lines[1:]) + "\n").encode("utf-8")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()
    out = Path(args.out)
    if out.exists():
        print(f"{out} already exists")
        return
    try:
        data = from_grouplens()
    except OSError as exc:
        print(f"GroupLens download failed ({exc}); using the recbole wheel copy")
        data = from_recbole()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    rows = data.count(b"\n")
    print(f"wrote {out} ({rows} ratings)")


if __name__ == "__main__":
    main()
