"""Regenerate the bundled 3-plant fixture (2 wind, 1 PV, 120 days) and its config."""

import argparse
from pathlib import Path

from vresport.synthetic import make_dataset, write_dataset

CONFIG = """\
[data]
plants = "plants.csv"
outputs = "outputs.csv"
demand = "demand.csv"
window_days = 3
prune_threshold = 0.99

[finance]
discount_rate = 0.08
lifetime_years = {{ wind = 25, pv = 25 }}

[risk]
beta = 0.05
omega = 0.0
M = {M}
seed = 0

[sweep]
points = 51
{scenarios}"""


def main():
    here = Path(__file__).resolve().parent.parent / "src" / "vresport" / "data" / "fixture"
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(here))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--days", type=int, default=120)
    ap.add_argument("--M", type=int, default=600)
    args = ap.parse_args()
    ds, raw = make_dataset(n_wind=2, n_pv=1, n_days=args.days, seed=args.seed)
    paths = write_dataset(ds, raw, args.out)
    out = Path(args.out)
    only_cost = '\n[scenario.Cost_Flat]\nkind = "Cost_Flat"\n'
    every = "".join(f'\n[scenario.{k}]\nkind = "{k}"\n' for k in (
        "Trad_Flat", "Trad_Obs", "Cost_Flat", "Cost_Obs", "Cost_Flat_lcpv", "CVaR_Flat", "CVaR_Obs"))
    (out / "cost_flat.toml").write_text(CONFIG.format(M=args.M, scenarios=only_cost))
    (out / "all_kinds.toml").write_text(CONFIG.format(M=args.M, scenarios=every))
    for p in list(paths.values()) + [out / "cost_flat.toml", out / "all_kinds.toml"]:
        print(p)


if __name__ == "__main__":
    main()
