"""
Training one EyeLSTM per stream and fusing them
===============================================

Two networks are trained, one on gaze features and one on tracker
centers, each against the ground-truth trajectory. Their window predictions
are then averaged with softmax weights. Training uses three simulated
recordings and evaluation a fourth one the models have not seen.

Runs in about ten seconds on one core.
"""

from eyelstm.core_data import PointSeries
from eyelstm.fusion import fuse_features, softmax_weights
from eyelstm.metrics import evaluate
from eyelstm.models import ModelConfig, build_model, make_training_set, train
from eyelstm.preprocess import eye_features, make_windows, normalize, track_features
from eyelstm.simulator import make_scenario, simulate


def features(seed):
    s = make_scenario("fast_motion", duration_s=30.0, seed=seed)
    truth, eye, track = simulate(s)
    labels = normalize(PointSeries(truth), s.dims)
    return eye_features(eye, len(truth), s.dims), track_features(track, s.dims), labels


train_recs = [features(seed) for seed in (10, 11, 12)]
eye_test, track_test, labels_test = features(13)

# %%
# One model per stream; ``restarts`` keeps the best of several seeded runs.
cfg = ModelConfig(kind="eyelstm", restarts=2, epochs=100, seed=0)
models = {}
for i, stream in enumerate(("eye", "track")):
    feats = [w for rec in train_recs for w in make_windows(rec[i])]
    labels = [w for rec in train_recs for w in make_windows(rec[2])]
    data = make_training_set(feats, labels, cfg.kind)
    models[stream] = train(build_model(cfg), data, cfg)
    print(f"{stream}: {len(data)} windows, best validation MSE {models[stream].val_loss:.2e}")

# %%
# Equal logits give equal weights. Raising the eye logit shifts trust
# toward the gaze model.
for logits in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]:
    w = softmax_weights(logits)
    fused = fuse_features(eye_test, track_test, models["eye"], models["track"], w, labels_test)
    rep = evaluate(fused.flat(), fused.flat("labels"))
    print(f"logits {logits} -> weights ({w.w1:.3f}, {w.w2:.3f}): fused RMSE {rep.rmse:.4f}")

print(f"raw gaze RMSE    {evaluate(eye_test.points, labels_test.points).rmse:.4f}")
print(f"raw tracker RMSE {evaluate(track_test.points, labels_test.points).rmse:.4f}")
