"""Noisy scalar paths approach the fractional heat flow as the noise cutoff grows.

For each N, runs a few replicas and reports the largest H^(-1/2) distance over time
between the noisy solution and the deterministic limit started from the same data.
A smaller version of the scaling-limit experiment; takes under a minute.
"""

from ptnoise.experiments import run_experiment

report = run_experiment({
    "experiment": "scaling_limit", "K": 16, "N_list": [4, 8, 16], "replicas": 8, "T": 0.5,
    "options": {"delta": 0.5},
})
for row in report.rows:
    if "median" in row:
        print(f"N={row['N']:3d}  median sup-distance={row['median']:.4f}")
print("\n".join(report.lines()))
