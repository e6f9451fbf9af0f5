#!/usr/bin/env python3
"""Build data/sotu.txt.gz from the public-domain State of the Union corpus.

The addresses ship in the `@stdlib/datasets-sotu` npm package (PDDL-1.0 /
CC0-1.0). Each address is split into documents of a few sentences, and
documents are separated by blank lines, which is the corpus format the
trainer reads.
"""
import gzip
import pathlib
import re
import subprocess
import sys
import tarfile
import tempfile

SENTENCES_PER_DOC = 6


def main() -> int:
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "sotu.txt.gz"
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "@stdlib/datasets-sotu@0.2.3"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        tgz = next(pathlib.Path(tmp).glob("*.tgz"))
        with tarfile.open(tgz) as tar:
            tar.extractall(tmp, filter="data")
        files = sorted((pathlib.Path(tmp) / "package" / "data").glob("*.txt"))
        docs = []
        for f in files:
            text = " ".join(f.read_text(encoding="utf-8").split())
            sents = re.split(r"(?<=[.!?])\s+(?=[A-Z\"'])", text)
            for i in range(0, len(sents), SENTENCES_PER_DOC):
                chunk = " ".join(sents[i:i + SENTENCES_PER_DOC]).strip()
                if chunk:
                    docs.append(chunk)
    # mtime=0 keeps the archive byte-stable across rebuilds
    with open(out, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
        gz.write("\n\n".join(docs).encode("utf-8"))
        gz.write(b"\n")
    print(f"wrote {len(docs)} documents to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
