"""Regenerate the dataset fixtures from CSV exports of the R packages.

    python build_fixtures.py SRC_DIR

SRC_DIR holds ``KMsurv/larynx.csv``, ``survival/kidney.csv`` and
``survival/heart.csv`` as exported by ``write.csv`` (leading row-name column).
``heart2.csv`` is rebuilt from the counting-process ``heart`` data in the
one-row-per-patient layout of ``p3state.msm::heart2``.
"""

import sys
from pathlib import Path

import pandas as pd

HERE = Path(__file__).resolve().parent


def _read(path):
    df = pd.read_csv(path)
    return df.drop(columns=[c for c in df.columns if c.startswith("Unnamed") or c == ""])


def heart2_from_heart(heart: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for pid, g in heart.groupby("id", sort=True):
        g = g.sort_values("start")
        last = g.iloc[-1]
        tx = g[g["transplant"].astype(int) == 1]
        if len(tx):
            t1 = float(tx["start"].iloc[0])
            rows.append((t1, 1, float(last["stop"]) - t1, int(last["event"])))
        else:
            rows.append((float(last["stop"]), 0, 0.0, int(last["event"])))
        rows[-1] = rows[-1] + (float(last["age"]), float(last["year"]), int(last["surgery"]))
    out = pd.DataFrame(rows, columns=["times1", "delta", "times2", "status", "age", "year", "surgery"])
    out.insert(3, "time", out["times1"] + out["times2"])
    return out


def main(src):
    src = Path(src)
    _read(src / "KMsurv" / "larynx.csv").to_csv(HERE / "larynx.csv", index=False)
    _read(src / "survival" / "kidney.csv").to_csv(HERE / "kidney.csv", index=False)
    heart2_from_heart(_read(src / "survival" / "heart.csv")).to_csv(HERE / "heart2.csv", index=False)


if __name__ == "__main__":
    main(sys.argv[1])
