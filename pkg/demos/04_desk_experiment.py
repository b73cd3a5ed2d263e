"""
Balanced, imbalanced and augmented training on the desk benchmark
=================================================================

Runs the three scenarios for one seed and writes a comparison report.
Takes about a quarter of an hour on one CPU core.
"""

from pathlib import Path

from csiaug.harness import report, run_all
from csiaug.harness.presets import preset

plan = preset("desk", seed=0)
print("minority classes:", plan.minority_classes)

out = Path("desk_run")
results = run_all(plan, out)
for name, (manifest, metrics) in results.items():
    s = manifest.summary
    print("%-10s overall %.3f  minority %.3f" % (name, s["overall_accuracy"], s["minority_accuracy"]))

# per-class table and confusion matrices side by side
report([out / name / "manifest.json" for name in results], out / "report")
print((out / "report" / "report.txt").read_text())
