"""BD-rate on hand-made curves, and how it reads.

Run: python demos/bd_rate.py
"""

import numpy as np

from alf.metrics import RDCurve, RDPoint, bd_rate

rates = np.array([0.2, 0.35, 0.6, 1.0])
psnr = np.array([26.0, 28.5, 31.0, 33.0])


def curve(label, r, q):
    return RDCurve(label, [RDPoint(bpp=float(a), psnr_db=float(b), ssim=0.0, pdist=0.0) for a, b in zip(r, q)])


anchor = curve("anchor", rates, psnr)
print("same curve:        %+.2f%%" % bd_rate(anchor, curve("same", rates, psnr)))
print("twice the bits:    %+.2f%%" % bd_rate(anchor, curve("double", 2 * rates, psnr)))
print("0.5 dB better:     %+.2f%%" % bd_rate(anchor, curve("better", rates, psnr + 0.5)))
# negative numbers mean the test curve needs fewer bits for the same quality
