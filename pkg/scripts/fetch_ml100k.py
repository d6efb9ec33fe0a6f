"""Download MovieLens-100k into data/ml-100k/.

Tries the GroupLens archive first (u.data, tab separated, no header); if that
is unreachable, falls back to the atomic file shipped inside the RecBole
wheel, which carries the same 100,000 ratings with a typed header.

    python3 scripts/fetch_ml100k.py [--dest data/ml-100k]
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
RECBOLE_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def from_grouplens(dest: Path) -> Path:
    with urllib.request.urlopen(GROUPLENS, timeout=60) as r:
        blob = r.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        out = dest / "u.data"
        out.write_bytes(z.read("ml-100k/u.data"))
    return out


def from_recbole(dest: Path) -> Path:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "recbole==1.2.1", "-d", tmp],
                       check=True, stdout=subprocess.DEVNULL)
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            out = dest / "u.inter"
            out.write_bytes(z.read(RECBOLE_MEMBER))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dest", default=str(Path(__file__).resolve().parents[1] / "data" / "ml-100k"))
    args = ap.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    try:
        out = from_grouplens(dest)
        schema = "grouplens"
    except OSError as e:
        print(f"GroupLens download failed ({e}); using the RecBole copy", file=sys.stderr)
        out = from_recbole(dest)
        schema = "recbole"
    print(f"{out}  (use --schema {schema})")


if __name__ == "__main__":
    main()
