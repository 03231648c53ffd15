"""Walk one image through the inference preprocessing pipeline.

Generates a synthetic fundus-like image, then shows each stage: decode,
resize to the network size, CLAHE on the luminance plane, and [0,1]
normalization, ending with the serialized tensor form.
"""

import numpy as np

from drscreen.clahe import clahe
from drscreen.imaging import (
    PreprocessConfig,
    decode_image,
    denormalize,
    encode_ppm,
    normalize,
    resize_bilinear,
    write_plane_tensor,
)
from drscreen.synthetic import generate_arrays
from drscreen.imaging import PlaneTensor

x, y = generate_arrays(1, side=240, seed=0)
raw = encode_ppm(denormalize(PlaneTensor(np.ascontiguousarray(x[0].transpose(1, 2, 0)))))
print(f"encoded sample: {len(raw)} bytes of PPM, grade {int(y[0])}")

img = decode_image(raw)
print(f"decoded: {img.width}x{img.height}x{img.channels}")

cfg = PreprocessConfig(target_width=226, target_height=226)
resized = resize_bilinear(img, cfg.target_width, cfg.target_height)
print(f"resized: {resized.width}x{resized.height}")

equalized = clahe(resized, cfg)
print(
    "CLAHE: intensity span %d -> %d"
    % (int(resized.data.max()) - int(resized.data.min()),
       int(equalized.data.max()) - int(equalized.data.min()))
)

plane = normalize(equalized)
print(f"normalized range: [{plane.data.min():.3f}, {plane.data.max():.3f}]")

blob = write_plane_tensor(plane)
print(f"serialized tensor: {len(blob)} bytes (16-byte header + float32 samples)")
