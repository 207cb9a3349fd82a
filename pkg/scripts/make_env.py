"""Write the two-dimension acceptance environment to configs/two_dim.env.

Zip codes and sites each carry a conversion multiplier that rises across
the values, a random volume share and a competitor price level that rises
with conversion, so valuable inventory is also contested and cheap
inventory is overpaid by a uniform bid.  The per-period budget is twice the daily spend of an unpaced
uniform bid at the base bid, which makes the budget bind at roughly the
base bid.
"""

import argparse
from pathlib import Path

import numpy as np

from dimbid import io as docs
from dimbid.controller import UniformController
from dimbid.core import CampaignConfig
from dimbid.simulator import run_campaign

BASE_BID = 2.0
CADENCE = 2
FLIGHT_DAYS = 30
ZIP_SPREAD, SITE_SPREAD = 1.0, 1.2  # half-range of log conversion multipliers
PRICE_SLOPE = 1.0  # competitor log-price shift per unit of log conversion lift


def dimension(rng, names, spread):
    lift = np.linspace(-spread, spread, len(names))
    return {n: {"volume": float(rng.lognormal(0.0, 0.5)),
                "conversion": float(np.exp(lift[i])),
                "price": float(rng.normal(0.0, 0.15) + PRICE_SLOPE * lift[i])}
            for i, n in enumerate(names)}


def environment_doc(seed: int = 42) -> dict:
    rng = np.random.default_rng(seed)
    zips = [f"{10001 + 37 * i:05d}" for i in range(20)]
    sites = [f"s{i:02d}.com" for i in range(12)]
    return {
        "kind": "environment",
        "base_bid": BASE_BID,
        "seed": 0,
        "factorized": {
            "dimensions": {"zip": dimension(rng, zips, ZIP_SPREAD), "site": dimension(rng, sites, SITE_SPREAD)},
            "opportunities": 100,
            "conversion_prob": 0.05,
            "competitor_bid": {"median": 2.2, "sigma": 0.4},
            "revenue": {"median": 5.0, "sigma": 0.5},
            "attribution_delay": {"decay_days": 5.0, "window_days": 30},
        },
    }


def calibrated_budget(doc: dict) -> float:
    env = docs.environment_from_doc(doc)
    res = run_campaign(env, UniformController(pace=False), CampaignConfig(1e12, FLIGHT_DAYS, BASE_BID))
    return round(CADENCE * res.final.cost / FLIGHT_DAYS, 2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs" / "two_dim.env"))
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    doc = environment_doc(args.seed)
    doc["run"] = {
        "campaign": {"budget_per_period": calibrated_budget(doc), "flight_days": FLIGHT_DAYS,
                     "base_bid": BASE_BID, "adjustment_cadence_days": CADENCE},
        "segmentation": [
            {"dimension": "zip", "group_count": 5, "min_volume_threshold": 100, "min_order_threshold": 10},
            {"dimension": "site", "group_count": 4, "min_volume_threshold": 100, "min_order_threshold": 10},
        ],
        "experiment": {"replications": 20, "common_random_numbers": True},
    }
    docs.dump(doc, args.out)
    print(f"wrote {args.out} (budget per period {doc['run']['campaign']['budget_per_period']})")


if __name__ == "__main__":
    main()
