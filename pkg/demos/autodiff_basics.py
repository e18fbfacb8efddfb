"""Tour of the reverse-mode tape: build a tiny expression, pull gradients
back through it, and cross-check one of them against finite differences.

Run:  python3 demos/autodiff_basics.py
"""

import numpy as np

import aclseg.nn as nn
import aclseg.tensor as T
from aclseg.gradcheck import run_suite, summarize
from aclseg.tensor import Tensor, make_rng


def main():
    rng = make_rng(0, "demo")

    # y = mean(sigmoid(linear(x))^2), gradients for every parameter
    layer = nn.Linear(3, 2, rng=rng)
    x = Tensor(rng.standard_normal((4, 3)).astype(np.float32))
    y = T.mean(T.square(T.sigmoid(layer(x))))
    T.backward(y)
    print("y                 =", f"{y.item():.6f}")
    print("dy/dbias          =", np.array2string(layer.bias.grad, precision=5))

    # the same derivative, the slow way
    eps = 1e-3
    fd = np.zeros_like(layer.bias.data)
    for i in range(fd.size):
        for sign in (+1.0, -1.0):
            layer.bias.data[i] += sign * eps
            out = T.mean(T.square(T.sigmoid(layer(Tensor(x.data)))))
            layer.bias.data[i] -= sign * eps
            fd[i] += sign * out.item() / (2 * eps)
    print("finite difference =", np.array2string(fd, precision=5))
    print("max abs gap       =", f"{np.abs(fd - layer.bias.grad).max():.2e}")

    # gradients flow through a conv + upsample pair as well
    img = Tensor(rng.standard_normal((1, 2, 8, 8)).astype(np.float32), requires_grad=True)
    k = Tensor(rng.standard_normal((8, 2, 3, 3)).astype(np.float32) * 0.2, requires_grad=True)
    up = T.pixel_shuffle(T.conv2d(img, k, padding=1), 2)
    T.backward(T.mean(T.square(up)))
    print("\nconv+shuffle out  =", up.shape, " kernel grad", k.grad.shape)

    # the systematic version of the cross-check above, for a few ops
    results = run_suite(ops=["conv2d", "bce_loss", "pixel_shuffle"], instances=2)
    for op, err in sorted(summarize(results).items()):
        print(f"gradcheck {op:<14s} max rel err {err:.2e}")


if __name__ == "__main__":
    main()
