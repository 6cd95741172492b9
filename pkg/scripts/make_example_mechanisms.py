"""Write sample mechanism and utility CSVs for ``delegation verify``."""

import argparse
from pathlib import Path

from delegation import samples
from delegation.mech import write_mechanism_csv, write_utility_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "configs" / "data"))
    ap.add_argument("--grid", type=int, default=3)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    space = samples.uniform_space(args.grid)
    for name in ("second_price", "first_price", "pay_your_report"):
        m = getattr(samples, name)(space)
        write_mechanism_csv(m, out / f"{name}_mechanism.csv")
        write_utility_csv(m, out / f"{name}_utilities.csv")
    m = samples.zero_mean_perturbation(samples.second_price(space))
    write_mechanism_csv(m, out / "perturbed_second_price_mechanism.csv")
    write_utility_csv(m, out / "perturbed_second_price_utilities.csv")
    print(f"wrote mechanisms to {out}")


if __name__ == "__main__":
    main()
