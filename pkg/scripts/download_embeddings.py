#!/usr/bin/env python3
"""Fetch the public 300-dimension GloVe word vectors for caption scoring.

The archive is ~800 MB and is deliberately not vendored; tests use tiny
hand-built fixture files instead. Usage:

    python scripts/download_embeddings.py [DEST_DIR]

Leaves DEST_DIR/glove.6B.300d.txt ready for ``framewatch evaluate --embeddings``.
"""

import sys
import urllib.request
import zipfile
from pathlib import Path

URL = "https://nlp.stanford.edu/data/glove.6B.zip"
MEMBER = "glove.6B.300d.txt"


def main() -> None:
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("embeddings")
    dest.mkdir(parents=True, exist_ok=True)
    target = dest / MEMBER
    if target.exists():
        print(f"{target} already present")
        return
    archive = dest / "glove.6B.zip"
    if not archive.exists():
        print(f"downloading {URL} (large, one-time) ...")
        urllib.request.urlretrieve(URL, archive)
    print(f"extracting {MEMBER} ...")
    with zipfile.ZipFile(archive) as bundle:
        bundle.extract(MEMBER, dest)
    print(f"ready: {target}")


if __name__ == "__main__":
    main()
