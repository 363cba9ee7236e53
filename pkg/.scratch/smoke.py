import numpy as np, time, sys, os
from rsma_unfold.dataio import generate_dataset, save_checkpoint
from rsma_unfold.unfold import init_model
from rsma_unfold.training import TrainConfig, train
from rsma_unfold.evaluate import evaluate, pgd_reference

epochs = int(sys.argv[1]); lr = float(sys.argv[2]); init_step = float(sys.argv[3])
penalty = float(sys.argv[4]) if len(sys.argv) > 4 else 2.0
ntrain = int(sys.argv[5]) if len(sys.argv) > 5 else 100
tag = sys.argv[6] if len(sys.argv) > 6 else "run"
bz = int(sys.argv[7]) if len(sys.argv) > 7 else 200
sched = sys.argv[8] if len(sys.argv) > 8 else "constant"
margin = float(sys.argv[9]) if len(sys.argv) > 9 else 0.0

train_s = generate_dataset(ntrain, 3, 12, 15.0, 1.99526, 1.0, 1e-3, seed=11)
test_s  = generate_dataset(50, 3, 12, 15.0, 1.99526, 1.0, 1e-3, seed=99)
cfg = train_s[0].config

# backtracking-2000 oracle references (the evaluate default)
ref_path = "/root/pkg/.scratch/refs50_bt.npy"
if os.path.exists(ref_path):
    refs = np.load(ref_path)
else:
    refs = np.array([pgd_reference(s) for s in test_s])
    np.save(ref_path, refs)

tc = TrainConfig(epochs=epochs, batch_size=min(bz, ntrain), lr=lr, seed=0,
                 penalty=penalty, lr_schedule=sched, init_step=init_step,
                 qos_margin=margin)
t0 = time.time()
model, hist = train(train_s, tc)
tt = time.time() - t0
save_checkpoint(f"/root/pkg/.scratch/ckpt_{tag}.json", model)
import json
with open(f"/root/pkg/.scratch/hist_{tag}.json", "w") as fh:
    json.dump(hist, fh)
peak = max(h["tpfv"] for h in hist)
h0, hN = hist[0], hist[-1]
rep = evaluate(model, test_s, reference_wsr=refs)
print(f"cfg ep={epochs} lr={lr} step={init_step} pen={penalty} n={ntrain} | "
      f"time {tt:.0f}s | tpfv {h0['tpfv']:.3f}->{hN['tpfv']:.3f} (peak {peak:.3f}) "
      f"viol {h0['train_violation_rate']:.3f}->{hN['train_violation_rate']:.3f} | "
      f"ASR {rep.asr:.4f} viol {rep.violation_rate:.4f} layers {np.round(rep.per_layer_asr,3)}")
