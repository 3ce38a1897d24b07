"""Write MovieLens-100k as MovieLens-1M style ``ratings.dat`` / ``movies.dat``.

MovieLens-100k ships inside the ``recbole`` wheel, which the package mirror
serves. This gives a small real dataset in the ML-1M file format for
smoke-testing the pipeline when ML-1M itself is unavailable.

    python scripts/make_ml100k_proxy.py --out data/ml-100k-proxy
"""

from __future__ import annotations

import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

INTER = "recbole/dataset_example/ml-100k/ml-100k.inter"
ITEM = "recbole/dataset_example/ml-100k/ml-100k.item"


def fetch_wheel(cache_dir: str) -> str:
    found = glob.glob(os.path.join(cache_dir, "recbole-*.whl"))
    if found:
        return found[0]
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", cache_dir,
                    "recbole==1.2.1"], check=True)
    return glob.glob(os.path.join(cache_dir, "recbole-*.whl"))[0]


def convert(wheel: str, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        inter = z.read(INTER).decode("latin-1").splitlines()
        items = z.read(ITEM).decode("latin-1").splitlines()
    with open(os.path.join(out, "ratings.dat"), "w", encoding="latin-1", newline="\n") as fh:
        for line in inter[1:]:
            user, item, rating, ts = line.split("\t")
            fh.write(f"{user}::{item}::{int(float(rating))}::{int(float(ts))}\n")
    with open(os.path.join(out, "movies.dat"), "w", encoding="latin-1", newline="\n") as fh:
        for line in items[1:]:
            item, title, year, genres = (line.split("\t") + ["", "", ""])[:4]
            full = f"{title} ({year})" if year else title
            fh.write(f"{item}::{full}::{'|'.join(genres.split())}\n")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/ml-100k-proxy")
    ap.add_argument("--cache", default=os.path.join(tempfile.gettempdir(), "ratingbench-wheels"))
    args = ap.parse_args(argv)
    os.makedirs(args.cache, exist_ok=True)
    convert(fetch_wheel(args.cache), args.out)
    print(f"wrote {args.out}/ratings.dat and {args.out}/movies.dat")


if __name__ == "__main__":
    main()
