"""Small end-to-end run of the full method x dataset evaluation grid.

Covers all ten interval methods on an unshifted and a tails-shifted dataset
at reduced scale, then writes results.csv / results.json into ./grid_results.
Equivalent to `shiftbench evaluate` with a TOML config, driven as a library.
"""

from shiftbench import harness, nn, synthbench

datasets = [
    synthbench.ShiftSpec(kind="none", n_train=1000, n_val=200, n_test=1000, seed=5),
    synthbench.ShiftSpec(kind="tails", n_train=1000, n_val=200, n_test=1000, seed=5),
]
config = harness.ExperimentConfig(
    datasets=datasets,
    methods=harness.METHOD_IDS,
    alpha=0.1,
    n_models_trained=6,
    n_models_selected=3,
    n_repeats=3,
    ensemble_M=5,
    hyper=nn.TrainHyper(epochs=40),
    seed=5,
)

rows = harness.run_experiment(config, log=print)
harness.emit_report(rows, "grid_results", config=config)

print(f"\n{'dataset':>8} {'method':>36} {'coverage':>10} {'rate':>6}")
for row in rows:
    print(f"{row.dataset:>8} {row.method:>36} "
          f"{row.mean['coverage']:.3f} +/- {row.std['coverage']:.3f} "
          f"{row.mean['prediction_rate']:.2f}")
print("\nfull tables written to grid_results/")
