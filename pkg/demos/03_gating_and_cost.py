"""Defer the most uncertain predictions and measure what that buys.

A mixed-noise population is built from noisy copies of the test set. Each
sample gets an epistemic score and the stability of its explanation. A gate
calibrated to defer a fraction nu of the population is then evaluated for
how well the accepted set matches the stable explanations, and for the
relative compute cost q of gating compared with explaining everything.

    python3 demos/03_gating_and_cost.py
"""
from epigate.experiments import ExperimentConfig, run

cfg = ExperimentConfig(study="gating", dataset="synth_blobs", synth_n=900, synth_d=6, n_trees=40,
                       max_depth=8, n_background=30, gate_samples=120, gate_versions=3)
report = run(cfg)
s = report.summary
print(f"population {s['population']}, stable fraction {s['stable_fraction']:.3f}")
print(f"model evaluations per sample: UQ {s['uq_evals_per_sample']:.0f}, explanation {s['xai_evals_per_sample']:.0f}")
print()
print(f"{'nu':>5}{'precision':>11}{'recall':>8}")
for row in report.tables["tab3_pr.csv"]:
    print(f"{row['nu']:>5.1f}{row['precision']:>11.3f}{row['recall']:>8.3f}")
print()
print(f"{'nu':>5}{'mean tau':>10}{'q':>6}")
for row in report.tables["tab4_cost.csv"]:
    print(f"{row['nu']:>5.1f}{row['stability_mean']:>10.3f}{row['q_rounded']:>6.2f}")
