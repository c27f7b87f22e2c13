"""Walk the distortion/perception trade-off of one trained stack by varying tau.

Trains a deliberately tiny pipeline (about a minute on one core) into
runs/demo, then decodes the held-out set at several tau values from the
same bitstreams.  Numbers at this size are noisy; the full default config
is what the acceptance run uses.

Run: python demos/tau_tradeoff.py
"""

from alf.harness.config import load_config
from alf.harness.pipeline import run_pipeline
from alf.harness.sweep import encode_set, fuse_batch, quality, reconstruct

cfg = load_config(None, {
    "out_dir": "runs/demo", "image_count": 400, "latent_channels": 8, "hidden_channels": 16,
    "channels": 32, "base_steps": 1500, "aux_steps": 400, "fusion_steps": 600, "variant1_steps": 200,
})
result = run_pipeline(cfg)          # cached: a second run loads the checkpoints
stack = result.stacks[cfg.betas[0]]

_, bpp, y_hat = encode_set(stack.codec, result.holdout)
print(f"held-out images: {len(result.holdout)}, rate {bpp:.3f} bpp (identical for every tau)")
print(" tau   PSNR dB   SSIM    P-dist")
for tau in (0.0, 0.3, 0.5, 0.8, 1.0):
    fused = fuse_batch(y_hat, tau, steps=10, seed=0, model=stack.denoiser, schedule=stack.schedule)
    p, s, d = quality(result.holdout, reconstruct(stack.codec, fused))
    print(f"{tau:4.1f}  {p:7.2f}  {s:6.4f}  {d:7.4f}")
