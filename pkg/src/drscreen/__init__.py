"""drscreen: diabetic retinopathy screening pipeline and service.

Subpackages and modules:

- imaging / clahe: decoding, preprocessing, augmentation operators
- dataset: manifests, stratified splits, rebalancing plans, CV folds
- nn: residual CNN with exact backprop, Adam, scheduling, training
- quant: int8 post-training quantization and integer inference
- accounting: MACs, model size, latency benchmarking
- metrics: confusion matrices, the five screening metrics, ROC-AUC
- synthetic: generated five-pattern corpus for desk-scale runs
- service: multi-role teleophthalmology HTTP service
- cli: `drscreen` command-line pipeline
"""

__version__ = "0.1.0"
