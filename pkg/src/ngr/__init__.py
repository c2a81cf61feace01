"""Image restoration with a neural gradient regularizer (NGR).

An untrained CNN predicts the three axis gradients of the image, and an ADMM
loop alternates between fitting the network to the current estimate and an
exact FFT solve that pulls the estimate toward the predicted gradients while
keeping the observed entries.
"""

__version__ = "0.1.0"
