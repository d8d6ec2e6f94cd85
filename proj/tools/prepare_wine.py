#!/usr/bin/env python3
"""Derive the binary-protected Wine Quality (red) table used by the smoke sweep.

target  good = 1 if quality >= 6 else 0
protected  high_alcohol = 1 if alcohol > median(alcohol) else 0
predictors  the remaining ten physico-chemical columns (alcohol itself dropped)
"""
import argparse
import csv
import pathlib
import statistics

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--src", default=str(ROOT / "data" / "winequality-red.csv"))
    ap.add_argument("--dst", default=str(ROOT / "data" / "wine_red_binary.csv"))
    args = ap.parse_args()

    with open(args.src, newline="") as f:
        rows = list(csv.DictReader(f))
    median = statistics.median(float(r["alcohol"]) for r in rows)
    predictors = [c for c in rows[0].keys() if c not in ("alcohol", "quality")]
    names = [c.replace(" ", "_") for c in predictors]

    with open(args.dst, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names + ["good", "high_alcohol"])
        for r in rows:
            w.writerow([r[c] for c in predictors]
                       + [int(int(r["quality"]) >= 6), int(float(r["alcohol"]) > median)])
    print(f"wrote {len(rows)} rows to {args.dst} (alcohol median {median})")


if __name__ == "__main__":
    main()
