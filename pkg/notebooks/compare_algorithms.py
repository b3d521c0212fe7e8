"""
EyeLSTM against the MLP and stacked-LSTM baselines
==================================================

A shortened version of the full comparison: one scenario, two training
recordings and fewer epochs, so it finishes in seconds. The full run
is ``eyelstm experiment --out results/``.
"""

from eyelstm.experiment import ExperimentConfig, run_experiment

cfg = ExperimentConfig(scenarios=("illumination",), train_replicas=2, restarts=1, epochs=60, seed=0)
result = run_experiment(cfg)

# %%
# Rows are fusion algorithms plus the two unfused streams; ``*`` marks the
# lowest RMSE in each scenario block.
text, _ = result.report(include_raw=True)
print(text)

# %%
# The raw tracker gets noisy while the lighting is bad, while the gaze
# stream is noisy all the time. Fusion can help when the two streams' errors
# are largely independent.
sres = result.scenarios["illumination"]
for alg in ("eyelstm", "mlp", "dlstm"):
    print(f"{alg:8s} fused RMSE {sres.metrics[alg].rmse:.4f}")
print(f"took {sres.seconds:.0f}s")
