"""Plot predicted against observed group volume from a `dimbid fit` output directory."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("fit_dir", type=Path, help="directory holding volume_scatter.csv")
    ap.add_argument("--out", type=Path, help="image path (default <fit_dir>/volume_scatter.png)")
    args = ap.parse_args()
    rows = pd.read_csv(args.fit_dir / "volume_scatter.csv")
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, part in rows.groupby("dimension"):
        ax.scatter(part["observed"], part["predicted"], s=12, alpha=0.7, label=name)
    hi = max(rows["observed"].max(), rows["predicted"].max())
    ax.plot([0, hi], [0, hi], color="grey", lw=1)
    r = rows["observed"].corr(rows["predicted"])
    ax.set(xlabel="observed impressions", ylabel="predicted impressions", title=f"group volume, r = {r:.3f}")
    ax.legend()
    target = args.out or args.fit_dir / "volume_scatter.png"
    fig.savefig(target, dpi=120, bbox_inches="tight")
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
