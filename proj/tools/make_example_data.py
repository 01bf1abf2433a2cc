"""Writes the bundled synthetic example dataset (data/example_data.csv)."""

import argparse
import math
import random

STATES = [("Ohio", 119), ("Texas", 150), ("Utah", 200)]
GENOTYPES = ["none", "one", "two"]


def subject_rows(rng, sid, state):
    n = rng.randint(4, 12)
    times = set()
    while len(times) < n:
        times.add(round(rng.uniform(6.0, 20.0), 3))
    times = sorted(times)
    gender = rng.choice(["F", "M"])
    genotype = rng.choices(GENOTYPES, weights=[0.2, 0.4, 0.4])[0]
    b_fev = (rng.gauss(0, 5), rng.gauss(0, 1))
    b_dep = (rng.gauss(0, 0.1), rng.gauss(0, 0.05))
    dep0, dep1 = 0.5 + b_dep[0], 0.1 + b_dep[1]
    rows = []
    for t in times:
        u = t / 10.0
        dep = dep0 + dep1 * u + rng.gauss(0, 0.05)
        # Average of the latent deprivation over the last 5 years.
        lo = max(0.0, t - 5.0)
        auc = (dep0 * (t - lo) + dep1 * (t * t - lo * lo) / 20.0) / t
        fev = (95.0 - 12.0 * u + 0.8 * math.sin(u) + (2.0 if gender == "M" else 0.0)
               - {"none": 0.0, "one": 3.0, "two": 6.0}[genotype]
               + b_fev[0] + b_fev[1] * u - 10.0 * auc + rng.gauss(0, 5))
        fev_cell = "" if rng.random() < 0.05 else f"{fev:.2f}"
        rows.append(f"{sid},{t},{fev_cell},{dep:.4f},{gender},{genotype},{state}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/example_data.csv")
    ap.add_argument("--seed", type=int, default=2023)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    lines = ["id,time,fev1,deprivation,gender,genotype,state"]
    k = 0
    for state, n in STATES:
        for _ in range(n):
            k += 1
            lines.extend(subject_rows(rng, f"p{k:04d}", state))
    with open(args.out, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
