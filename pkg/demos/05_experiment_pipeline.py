"""A miniature experiment: batch over seeds, persist, summarise, plot.

Writes into ./demo_output.  The same pipeline is available from the shell:

    pinncurv batch --optimizer ADAM --beta 1 --epochs 100 --seeds 3 --out runs
    pinncurv summarize runs
    pinncurv plot runs --out plots
"""

# %%
from pathlib import Path

from pinncurv import runner
from pinncurv.optim import OptimizerConfig
from pinncurv.plots import emit_plots

out = Path("demo_output")
records = []
for kind in ("ADAM", "LBFGS"):
    cfg = runner.ExperimentConfig(OptimizerConfig(kind, runner.default_lr(kind, 1.0)), beta=1.0, epochs=100)
    records += runner.run_batch(cfg, n_seeds=3)
runner.save_records(records, out / "runs")

# %% Median final values per configuration.
rows = runner.summarize(runner.read_run_dir(out / "runs"))
runner.write_summary_csv(rows, out / "summary.csv")
print((out / "summary.csv").read_text())

# %% SVG charts next to the data.
for path in emit_plots(rows, records, out / "plots")[:3]:
    print("wrote", path)
