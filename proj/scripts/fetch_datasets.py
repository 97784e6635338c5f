#!/usr/bin/env python3
"""Download the benchmark datasets into data/.

CSV datasets come from OpenML (dataset page -> ARFF -> CSV conversion here);
MNIST and FashionMNIST come from public IDX mirrors and are stored
uncompressed. File names match the registry in src/dataset.cpp.

Usage:
  scripts/fetch_datasets.py                 # blood, australian, phoneme, mnist
  scripts/fetch_datasets.py --all           # every known dataset
  scripts/fetch_datasets.py phoneme mnist   # explicit selection
"""

import argparse
import gzip
import hashlib
import json
import sys
import urllib.request
from pathlib import Path

OPENML = {
    "blood": 1464,
    "australian": 40981,
    "phoneme": 1489,
    "skin-seg": 1502,
    "higgs": 23512,
    "nomao": 1486,
    "segment": 40984,
    "miniboone": 41150,
    "christine": 41142,
    "jasmine": 41143,
    "sylvine": 41146,
    "iris": 61,
}

MNIST_FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]
MNIST_MIRRORS = [
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
]
FASHION_BASE = "https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/"

DEFAULT = ["blood", "australian", "phoneme", "mnist"]


def http_get(url: str) -> bytes:
    req = urllib.request.Request(url, headers={"User-Agent": "dwn-fetch/1.0"})
    with urllib.request.urlopen(req, timeout=120) as r:
        return r.read()


def split_arff_row(line: str) -> list[str]:
    """Comma split honoring ARFF single/double quoting."""
    cells, cur, quote = [], [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
            else:
                cur.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            cells.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    cells.append("".join(cur).strip())
    return cells


def arff_to_table(text: str) -> tuple[list[str], list[list[str]], list[list[str]]]:
    """Returns (attribute names, nominal values per attribute, data rows)."""
    names: list[str] = []
    nominals: list[list[str]] = []
    rows: list[list[str]] = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            low = line.lower()
            if low.startswith("@attribute"):
                rest = line[len("@attribute") :].strip()
                if rest[0] in "'\"":
                    q = rest[0]
                    end = rest.index(q, 1)
                    name, rest = rest[1:end], rest[end + 1 :].strip()
                else:
                    name, _, rest = rest.partition(" ")
                names.append(name.replace(",", "_"))
                rest = rest.strip()
                if rest.startswith("{"):
                    nominals.append(split_arff_row(rest[1 : rest.rindex("}")]))
                else:
                    nominals.append([])
            elif low.startswith("@data"):
                in_data = True
            continue
        if line.startswith("{"):  # sparse row: unspecified attributes are 0
            row = ["0"] * len(names)
            body = line[1 : line.rindex("}")].strip()
            if body:
                for pair in split_arff_row(body):
                    idx, _, value = pair.partition(" ")
                    row[int(idx)] = value.strip()
            rows.append(row)
        else:
            rows.append(split_arff_row(line))
    return names, nominals, rows


def fetch_openml_csv(name: str, out_path: Path) -> None:
    meta = json.loads(http_get(f"https://api.openml.org/api/v1/json/data/{OPENML[name]}"))
    arff_url = meta["data_set_description"]["url"]
    print(f"  {name}: downloading {arff_url}")
    names, nominals, rows = arff_to_table(http_get(arff_url).decode("utf-8", errors="replace"))

    if name == "segment":
        # The registry pins a binarized variant: nominal class index >= 4
        # (0-based declaration order) maps to 1, the rest to 0.
        label = len(names) - 1
        order = {v: i for i, v in enumerate(nominals[label])}
        for row in rows:
            row[label] = "1" if order[row[label]] >= 4 else "0"

    with out_path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(names) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    print(f"  {name}: wrote {out_path} ({len(rows)} rows, {len(names)} columns)")


def fetch_gz(urls: list[str], out_path: Path) -> None:
    last_err: Exception | None = None
    for url in urls:
        try:
            raw = gzip.decompress(http_get(url))
            out_path.write_bytes(raw)
            digest = hashlib.sha256(raw).hexdigest()
            print(f"  wrote {out_path} ({len(raw)} bytes, sha256 {digest[:16]}...)")
            return
        except Exception as e:  # try the next mirror
            last_err = e
            print(f"  {url}: {e}", file=sys.stderr)
    raise SystemExit(f"all mirrors failed for {out_path.name}: {last_err}")


def fetch(name: str, data_dir: Path) -> None:
    print(f"fetching {name}")
    if name == "mnist":
        for f in MNIST_FILES:
            fetch_gz([m + f + ".gz" for m in MNIST_MIRRORS], data_dir / f)
    elif name == "fashion-mnist":
        for f in MNIST_FILES:
            fetch_gz([FASHION_BASE + f + ".gz"], data_dir / ("fashion-" + f))
    elif name in OPENML:
        fetch_openml_csv(name, data_dir / f"{name}.csv")
    else:
        raise SystemExit(f"unknown dataset '{name}'")


def main() -> None:
    known = sorted(OPENML) + ["mnist", "fashion-mnist"]
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", default=DEFAULT, help=f"datasets to fetch (default: {' '.join(DEFAULT)})")
    ap.add_argument("--all", action="store_true", help="fetch every known dataset")
    ap.add_argument("--dir", default="data", help="output directory (default: data)")
    ap.add_argument("--list", action="store_true", help="list known dataset names")
    args = ap.parse_args()

    if args.list:
        print("\n".join(known))
        return
    data_dir = Path(args.dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for name in known if args.all else args.names:
        fetch(name, data_dir)


if __name__ == "__main__":
    main()
