"""Summarize per-run CSV files written by ``ulmax run`` into a final-regret table.

    python3 scripts/regret_table.py out/*.csv
"""

import argparse
import csv
from collections import defaultdict


def final_rows(path):
    last = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            last[row["agent"]] = row
    return list(last.values())


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv", nargs="+")
    args = p.parse_args()

    groups = defaultdict(list)
    for path in args.csv:
        for row in final_rows(path):
            key = (row["variant"], row["case"], float(row["theta"]), int(row["T"]))
            groups[key].append(row)
    print(f"{'variant':8} {'case':4} {'theta':>6} {'T':>7} {'runs':>5} {'mean regret':>12} "
          f"{'comm':>6} {'loo':>8} {'queries':>8}")
    for (variant, case, theta, T), rows in sorted(groups.items()):
        mean = sum(float(r["cum_regret"]) for r in rows) / len(rows)
        comm = rows[0]["comm_count"]
        loo = sum(int(r["loo_count"]) for r in rows) / len(rows)
        q = sum(int(r["query_count"]) for r in rows) / len(rows)
        print(f"{variant:8} {case:4} {theta:6.3g} {T:7d} {len(rows):5d} {mean:12.3f} {comm:>6} {loo:8.1f} {q:8.1f}")


if __name__ == "__main__":
    main()
