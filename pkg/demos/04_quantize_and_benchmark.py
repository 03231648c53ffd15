"""Post-training quantization and compute accounting.

Trains the micro net briefly, quantizes it to int8, and compares the two
paths: top-1 agreement, serialized sizes, MAC counts, and measured latency.
Also prints the accounting numbers for the full 18-layer preset.
"""

import numpy as np

from drscreen.accounting import bench_latency, count_flops, model_size_bytes, quantized_size_bytes
from drscreen.nn import TrainConfig, forward, micro_config, resnet18_226_config, train
from drscreen.nn.model import init_params, param_count
from drscreen.quant import qforward_batch, quantize_model
from drscreen.synthetic import generate_arrays

x, y = generate_arrays(500, 32, seed=7)
config = micro_config()
history, params = train(
    config, TrainConfig(epochs=12, seed=3), x[:350], y[:350], x[350:425], y[350:425]
)
print(f"trained micro to val acc {history.best.val_acc:.3f}")

calib = [x[i : i + 32] for i in range(0, 128, 32)]
qm = quantize_model(config, params, calib)

float_logits = forward(params, config, x, train=False)
q_logits = qforward_batch(qm, x)
agreement = (float_logits.argmax(1) == q_logits.argmax(1)).mean()
print(f"float vs int8 top-1 agreement over {len(x)} images: {agreement:.3f}")

fsize = model_size_bytes(config, params)
qsize = quantized_size_bytes(qm)
print(f"serialized: float {fsize} B, int8 {qsize} B ({qsize / fsize:.1%})")

for preset_name, preset in (("micro", micro_config), ("resnet18_226", resnet18_226_config)):
    cfg = preset()
    report = count_flops(cfg)
    n_params = param_count(init_params(cfg, seed=0))
    print(f"{preset_name}: {n_params:,} params, {report.total_macs:,} MACs")

lat = bench_latency(qm, runs=30, warmup=5, seed=0)
print(
    f"int8 micro latency over {lat.runs} runs:"
    f" mean {lat.mean_ms:.2f} ms, p50 {lat.p50_ms:.2f} ms, p95 {lat.p95_ms:.2f} ms"
)
