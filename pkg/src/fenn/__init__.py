"""fenn: functional-encryption toolkit for training neural networks on encrypted data.

Inner-product functional encryption (feip), single-operand arithmetic
functional encryption (febo), secure matrix and convolution computation
built on both, a fixed-point codec, a small plaintext NN engine, and a
three-party training loop (authority / client / server) whose encrypted
trajectory matches a quantized-plaintext reference bit for bit.
"""

__version__ = "0.1.0"
