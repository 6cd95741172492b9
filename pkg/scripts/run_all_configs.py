"""Run every scenario in configs/ and print one status line per file."""

import argparse
import contextlib
import io
from pathlib import Path

from delegation import cli

STATUS = {cli.EXIT_OK: "ok", cli.EXIT_GATE: "gate failed", cli.EXIT_INPUT: "input error"}


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=str(root / "configs"))
    ap.add_argument("--out", default="results", help="parent directory for per-config outputs")
    ap.add_argument("--grid", type=int, help="override every scenario's main grid")
    args = ap.parse_args()
    worst = cli.EXIT_OK
    for cfg in sorted(Path(args.configs).glob("*.cfg")):
        with contextlib.redirect_stdout(io.StringIO()):
            code = cli.main(["run", str(cfg), "--out", str(Path(args.out) / cfg.stem)] + (["--grid", str(args.grid)] if args.grid else []))
        print(f"{cfg.name:36s} {STATUS[code]}")
        worst = max(worst, code if code == cli.EXIT_INPUT else 0)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
